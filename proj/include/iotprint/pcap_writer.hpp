#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "iotprint/capture.hpp"

namespace iotprint::capture {

enum class ByteOrder { Little, Big };

/// In-memory classic pcap (microsecond timestamps, Ethernet link type).
class PcapWriter {
 public:
  explicit PcapWriter(ByteOrder order = ByteOrder::Little, std::uint32_t snaplen = 65535);

  void add(std::uint32_t ts_sec, std::uint32_t ts_usec, std::span<const std::uint8_t> frame);
  /// Writes a record whose stored length is capped at `captured` bytes while
  /// the original length stays frame.size(), like a snaplen-limited capture.
  void add_truncated(std::uint32_t ts_sec, std::uint32_t ts_usec,
                     std::span<const std::uint8_t> frame, std::uint32_t captured);

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  std::size_t records() const { return records_; }
  void save(const std::filesystem::path& path) const;

 private:
  void put32(std::uint32_t v);
  void put16(std::uint16_t v);

  ByteOrder order_;
  std::vector<std::uint8_t> bytes_;
  std::size_t records_ = 0;
};

namespace tcp_flags {
inline constexpr std::uint8_t kFin = 0x01;
inline constexpr std::uint8_t kSyn = 0x02;
inline constexpr std::uint8_t kPsh = 0x08;
inline constexpr std::uint8_t kAck = 0x10;
}  // namespace tcp_flags

struct FrameSpec {
  MacAddress src_mac;
  MacAddress dst_mac;
  Endpoint src;
  Endpoint dst;
  std::optional<std::uint16_t> vlan_id;
};

/// Ethernet/IPv4/TCP frame with a 20-byte TCP header and valid IP checksum.
std::vector<std::uint8_t> build_tcp_frame(const FrameSpec& spec, std::uint8_t flags,
                                          std::uint32_t seq, std::uint32_t ack,
                                          std::span<const std::uint8_t> payload);

std::vector<std::uint8_t> build_udp_frame(const FrameSpec& spec,
                                          std::span<const std::uint8_t> payload);

}  // namespace iotprint::capture
