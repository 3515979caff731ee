#include "iotprint/pcap_writer.hpp"

#include <algorithm>
#include <fstream>

#include "iotprint/error.hpp"

namespace iotprint::capture {

PcapWriter::PcapWriter(ByteOrder order, std::uint32_t snaplen) : order_(order) {
  put32(0xA1B2C3D4);
  put16(2);
  put16(4);
  put32(0);  // thiszone
  put32(0);  // sigfigs
  put32(snaplen);
  put32(1);  // LINKTYPE_ETHERNET
}

void PcapWriter::put32(std::uint32_t v) {
  if (order_ == ByteOrder::Little) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  } else {
    for (int i = 3; i >= 0; --i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
}

void PcapWriter::put16(std::uint16_t v) {
  if (order_ == ByteOrder::Little) {
    bytes_.push_back(static_cast<std::uint8_t>(v));
    bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
  } else {
    bytes_.push_back(static_cast<std::uint8_t>(v >> 8));
    bytes_.push_back(static_cast<std::uint8_t>(v));
  }
}

void PcapWriter::add(std::uint32_t ts_sec, std::uint32_t ts_usec,
                     std::span<const std::uint8_t> frame) {
  add_truncated(ts_sec, ts_usec, frame, static_cast<std::uint32_t>(frame.size()));
}

void PcapWriter::add_truncated(std::uint32_t ts_sec, std::uint32_t ts_usec,
                               std::span<const std::uint8_t> frame, std::uint32_t captured) {
  captured = std::min<std::uint32_t>(captured, static_cast<std::uint32_t>(frame.size()));
  put32(ts_sec);
  put32(ts_usec);
  put32(captured);
  put32(static_cast<std::uint32_t>(frame.size()));
  bytes_.insert(bytes_.end(), frame.begin(), frame.begin() + captured);
  ++records_;
}

void PcapWriter::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes_.data()),
            static_cast<std::streamsize>(bytes_.size()));
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

namespace {

void push_be16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void push_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::vector<std::uint8_t> ethernet_ipv4_prefix(const FrameSpec& spec, std::uint8_t protocol,
                                               std::size_t l4_length) {
  std::vector<std::uint8_t> frame;
  frame.reserve(14 + 4 + 20 + l4_length);
  frame.insert(frame.end(), spec.dst_mac.octets.begin(), spec.dst_mac.octets.end());
  frame.insert(frame.end(), spec.src_mac.octets.begin(), spec.src_mac.octets.end());
  if (spec.vlan_id) {
    push_be16(frame, 0x8100);
    push_be16(frame, *spec.vlan_id & 0x0FFF);
  }
  push_be16(frame, 0x0800);

  const std::size_t ip_start = frame.size();
  frame.push_back(0x45);
  frame.push_back(0x00);
  push_be16(frame, static_cast<std::uint16_t>(20 + l4_length));
  push_be16(frame, 0x0000);  // identification
  push_be16(frame, 0x4000);  // don't fragment
  frame.push_back(64);
  frame.push_back(protocol);
  push_be16(frame, 0x0000);  // checksum placeholder
  push_be32(frame, spec.src.ip.value);
  push_be32(frame, spec.dst.ip.value);

  std::uint32_t sum = 0;
  for (std::size_t i = ip_start; i < ip_start + 20; i += 2) {
    sum += static_cast<std::uint32_t>(frame[i] << 8 | frame[i + 1]);
  }
  while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
  const auto checksum = static_cast<std::uint16_t>(~sum);
  frame[ip_start + 10] = static_cast<std::uint8_t>(checksum >> 8);
  frame[ip_start + 11] = static_cast<std::uint8_t>(checksum);
  return frame;
}

}  // namespace

std::vector<std::uint8_t> build_tcp_frame(const FrameSpec& spec, std::uint8_t flags,
                                          std::uint32_t seq, std::uint32_t ack,
                                          std::span<const std::uint8_t> payload) {
  auto frame = ethernet_ipv4_prefix(spec, kIpProtoTcp, 20 + payload.size());
  push_be16(frame, spec.src.port);
  push_be16(frame, spec.dst.port);
  push_be32(frame, seq);
  push_be32(frame, ack);
  frame.push_back(5 << 4);  // data offset
  frame.push_back(flags);
  push_be16(frame, 65535);  // window
  push_be16(frame, 0);      // checksum (not validated by the parser)
  push_be16(frame, 0);      // urgent pointer
  frame.insert(frame.end(), payload.begin(), payload.end());
  return frame;
}

std::vector<std::uint8_t> build_udp_frame(const FrameSpec& spec,
                                          std::span<const std::uint8_t> payload) {
  auto frame = ethernet_ipv4_prefix(spec, kIpProtoUdp, 8 + payload.size());
  push_be16(frame, spec.src.port);
  push_be16(frame, spec.dst.port);
  push_be16(frame, static_cast<std::uint16_t>(8 + payload.size()));
  push_be16(frame, 0);
  frame.insert(frame.end(), payload.begin(), payload.end());
  return frame;
}

}  // namespace iotprint::capture
