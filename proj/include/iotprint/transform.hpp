#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "iotprint/capture.hpp"

namespace iotprint::transform {

inline constexpr std::size_t kImageSide = 28;
inline constexpr std::size_t kVectorSize = kImageSide * kImageSide;

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

using Payload = std::vector<std::uint8_t>;

/// A session payload cut or zero-padded to exactly 784 bytes.
struct PayloadVector {
  std::array<std::uint8_t, kVectorSize> bytes{};

  bool operator==(const PayloadVector&) const = default;
};

/// Row-major 28x28 view of a PayloadVector.
struct PayloadImage {
  std::array<std::array<std::uint8_t, kImageSide>, kImageSide> pixels{};

  bool operator==(const PayloadImage&) const = default;
};

enum class PayloadDirection {
  Both,           // every packet of the session, capture order
  InitiatorOnly,  // only packets sent by the endpoint that sent the first packet
};

Payload extract_payload(const capture::SessionRecord& session,
                        PayloadDirection direction = PayloadDirection::Both);

/// Drops empty payloads and any payload byte-identical to an earlier one.
std::vector<Payload> dedupe_and_filter(std::vector<Payload> payloads);

/// Truncates to the first 784 bytes or appends 0x00 up to 784.
/// Throws Error(EmptyPayload) on empty input.
PayloadVector fix_length(std::span<const std::uint8_t> payload);

PayloadImage to_image(const PayloadVector& v);
PayloadVector from_image(const PayloadImage& image);

struct IdxDataset {
  std::vector<PayloadVector> images;
  std::vector<std::uint8_t> labels;
  std::vector<std::string> label_names;

  std::size_t size() const { return images.size(); }
  /// Throws CountMismatch / LabelOutOfRange when the invariants do not hold.
  void validate() const;

  bool operator==(const IdxDataset&) const = default;
};

/// Sidecar holding "index<TAB>name" lines next to a label file.
std::filesystem::path label_names_path(const std::filesystem::path& label_path);

void write_idx(const IdxDataset& ds, const std::filesystem::path& image_path,
               const std::filesystem::path& label_path);

/// Reads an image/label IDX pair. When the label-name sidecar is missing, names
/// default to the decimal label values.
IdxDataset read_idx(const std::filesystem::path& image_path,
                    const std::filesystem::path& label_path);

/// Raw payload dump with no header.
void write_bin(const std::filesystem::path& path, std::span<const std::uint8_t> payload);

}  // namespace iotprint::transform
