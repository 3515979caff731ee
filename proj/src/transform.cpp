#include "iotprint/transform.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <string_view>
#include <unordered_set>

#include "iotprint/error.hpp"

namespace iotprint::transform {

namespace {

void put_be32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

std::uint32_t get_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
  return std::uint32_t{bytes[offset]} << 24 | std::uint32_t{bytes[offset + 1]} << 16 |
         std::uint32_t{bytes[offset + 2]} << 8 | std::uint32_t{bytes[offset + 3]};
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorKind::IoFailure, "read failed for " + path.string());
  return bytes;
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

}  // namespace

Payload extract_payload(const capture::SessionRecord& session, PayloadDirection direction) {
  Payload out;
  if (session.packets.empty()) return out;
  const capture::Endpoint initiator = session.packets.front().source();
  for (const capture::RawPacket& packet : session.packets) {
    if (direction == PayloadDirection::InitiatorOnly && packet.source() != initiator) continue;
    out.insert(out.end(), packet.tcp_payload.begin(), packet.tcp_payload.end());
  }
  return out;
}

std::vector<Payload> dedupe_and_filter(std::vector<Payload> payloads) {
  std::vector<Payload> kept;
  kept.reserve(payloads.size());
  // Views point into heap buffers owned by `kept`; those buffers survive the
  // element moves that happen when `kept` grows.
  std::unordered_set<std::string_view> seen;
  for (Payload& payload : payloads) {
    if (payload.empty()) continue;
    const std::string_view view(reinterpret_cast<const char*>(payload.data()), payload.size());
    if (seen.contains(view)) continue;
    kept.push_back(std::move(payload));
    const Payload& stored = kept.back();
    seen.emplace(reinterpret_cast<const char*>(stored.data()), stored.size());
  }
  return kept;
}

PayloadVector fix_length(std::span<const std::uint8_t> payload) {
  if (payload.empty()) {
    throw Error(ErrorKind::EmptyPayload, "fix_length called on an empty payload");
  }
  PayloadVector v;
  const std::size_t n = std::min(payload.size(), kVectorSize);
  std::copy_n(payload.begin(), n, v.bytes.begin());
  return v;
}

PayloadImage to_image(const PayloadVector& v) {
  PayloadImage image;
  for (std::size_t r = 0; r < kImageSide; ++r) {
    std::copy_n(v.bytes.begin() + r * kImageSide, kImageSide, image.pixels[r].begin());
  }
  return image;
}

PayloadVector from_image(const PayloadImage& image) {
  PayloadVector v;
  for (std::size_t r = 0; r < kImageSide; ++r) {
    std::copy(image.pixels[r].begin(), image.pixels[r].end(), v.bytes.begin() + r * kImageSide);
  }
  return v;
}

void IdxDataset::validate() const {
  if (images.size() != labels.size()) {
    throw Error(ErrorKind::CountMismatch, "images=" + std::to_string(images.size()) +
                                              " labels=" + std::to_string(labels.size()));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= label_names.size()) {
      throw Error(ErrorKind::LabelOutOfRange,
                  "label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                      " but only " + std::to_string(label_names.size()) + " label names");
    }
  }
}

std::filesystem::path label_names_path(const std::filesystem::path& label_path) {
  return std::filesystem::path(label_path.string() + ".names.tsv");
}

void write_idx(const IdxDataset& ds, const std::filesystem::path& image_path,
               const std::filesystem::path& label_path) {
  ds.validate();
  const auto n = static_cast<std::uint32_t>(ds.size());
  {
    std::ofstream out(image_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot create " + image_path.string());
    put_be32(out, kIdxImageMagic);
    put_be32(out, n);
    put_be32(out, kImageSide);
    put_be32(out, kImageSide);
    for (const PayloadVector& v : ds.images) {
      out.write(reinterpret_cast<const char*>(v.bytes.data()), kVectorSize);
    }
    if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + image_path.string());
  }
  {
    std::ofstream out(label_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot create " + label_path.string());
    put_be32(out, kIdxLabelMagic);
    put_be32(out, n);
    out.write(reinterpret_cast<const char*>(ds.labels.data()),
              static_cast<std::streamsize>(ds.labels.size()));
    if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + label_path.string());
  }
  {
    const auto names_path = label_names_path(label_path);
    std::ofstream out(names_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot create " + names_path.string());
    for (std::size_t i = 0; i < ds.label_names.size(); ++i) {
      out << i << '\t' << ds.label_names[i] << '\n';
    }
    if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + names_path.string());
  }
}

IdxDataset read_idx(const std::filesystem::path& image_path,
                    const std::filesystem::path& label_path) {
  const auto image_bytes = slurp(image_path);
  const auto label_bytes = slurp(label_path);

  if (image_bytes.size() < 16) {
    throw Error(ErrorKind::BadMagic, image_path.string() + ": header shorter than 16 bytes");
  }
  if (const auto magic = get_be32(image_bytes, 0); magic != kIdxImageMagic) {
    throw Error(ErrorKind::BadMagic,
                image_path.string() + ": image magic " + hex32(magic) + ", expected 0x00000803");
  }
  const std::uint32_t image_count = get_be32(image_bytes, 4);
  const std::uint32_t rows = get_be32(image_bytes, 8);
  const std::uint32_t cols = get_be32(image_bytes, 12);
  if (rows != kImageSide || cols != kImageSide) {
    throw Error(ErrorKind::DimensionMismatch, image_path.string() + ": rows=" +
                                                  std::to_string(rows) +
                                                  " cols=" + std::to_string(cols) + ", expected 28x28");
  }
  if (image_bytes.size() != 16 + std::size_t{image_count} * kVectorSize) {
    throw Error(ErrorKind::CountMismatch,
                image_path.string() + ": count=" + std::to_string(image_count) + " but body holds " +
                    std::to_string(image_bytes.size() - 16) + " bytes");
  }

  if (label_bytes.size() < 8) {
    throw Error(ErrorKind::BadMagic, label_path.string() + ": header shorter than 8 bytes");
  }
  if (const auto magic = get_be32(label_bytes, 0); magic != kIdxLabelMagic) {
    throw Error(ErrorKind::BadMagic,
                label_path.string() + ": label magic " + hex32(magic) + ", expected 0x00000801");
  }
  const std::uint32_t label_count = get_be32(label_bytes, 4);
  if (label_count != image_count) {
    throw Error(ErrorKind::CountMismatch, "count: images=" + std::to_string(image_count) +
                                              " labels=" + std::to_string(label_count));
  }
  if (label_bytes.size() != 8 + std::size_t{label_count}) {
    throw Error(ErrorKind::CountMismatch,
                label_path.string() + ": count=" + std::to_string(label_count) + " but body holds " +
                    std::to_string(label_bytes.size() - 8) + " bytes");
  }

  IdxDataset ds;
  ds.images.resize(image_count);
  for (std::size_t i = 0; i < image_count; ++i) {
    std::copy_n(image_bytes.begin() + 16 + static_cast<std::ptrdiff_t>(i * kVectorSize),
                kVectorSize, ds.images[i].bytes.begin());
  }
  ds.labels.assign(label_bytes.begin() + 8, label_bytes.end());

  const auto names_path = label_names_path(label_path);
  if (std::filesystem::exists(names_path)) {
    std::ifstream in(names_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw Error(ErrorKind::IoFailure, names_path.string() + ": malformed line '" + line + "'");
      }
      const std::size_t index = std::stoul(line.substr(0, tab));
      if (index != ds.label_names.size()) {
        throw Error(ErrorKind::IoFailure, names_path.string() + ": out-of-order index " +
                                              std::to_string(index));
      }
      ds.label_names.push_back(line.substr(tab + 1));
    }
  } else {
    const std::uint8_t max_label =
        ds.labels.empty() ? 0 : *std::max_element(ds.labels.begin(), ds.labels.end());
    const std::size_t count = ds.labels.empty() ? 0 : std::size_t{max_label} + 1;
    for (std::size_t i = 0; i < count; ++i) ds.label_names.push_back(std::to_string(i));
  }
  ds.validate();
  return ds;
}

void write_bin(const std::filesystem::path& path, std::span<const std::uint8_t> payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

}  // namespace iotprint::transform
