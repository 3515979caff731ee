#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace iotprint::capture {

inline constexpr std::uint8_t kIpProtoTcp = 6;
inline constexpr std::uint8_t kIpProtoUdp = 17;

struct MacAddress {
  std::array<std::uint8_t, 6> octets{};

  std::string to_string() const;
  /// Accepts "aa:bb:cc:dd:ee:ff" or "aa-bb-cc-dd-ee-ff", case-insensitive.
  static std::optional<MacAddress> parse(std::string_view text);

  auto operator<=>(const MacAddress&) const = default;
};

struct Ipv4Address {
  std::uint32_t value = 0;  // host byte order

  std::string to_string() const;
  static std::optional<Ipv4Address> parse(std::string_view text);

  auto operator<=>(const Ipv4Address&) const = default;
};

struct Endpoint {
  Ipv4Address ip;
  std::uint16_t port = 0;

  auto operator<=>(const Endpoint&) const = default;
};

struct RawPacket {
  std::uint64_t capture_index = 0;
  std::uint32_t ts_sec = 0;
  std::uint32_t ts_nsec = 0;
  MacAddress src_mac;
  MacAddress dst_mac;
  Ipv4Address src_ip;
  Ipv4Address dst_ip;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t ip_protocol = kIpProtoTcp;
  std::vector<std::uint8_t> tcp_payload;

  Endpoint source() const { return {src_ip, src_port}; }
  Endpoint destination() const { return {dst_ip, dst_port}; }

  bool operator==(const RawPacket&) const = default;
};

/// Bidirectional TCP session key: endpoints stored smaller-first so that both
/// directions of a connection map to the same key.
struct SessionKey {
  Endpoint endpoint_a;
  Endpoint endpoint_b;
  std::uint8_t protocol = kIpProtoTcp;

  static SessionKey from_endpoints(const Endpoint& x, const Endpoint& y);
  static SessionKey of(const RawPacket& packet) {
    return from_endpoints(packet.source(), packet.destination());
  }

  std::string to_string() const;
  auto operator<=>(const SessionKey&) const = default;
};

struct SessionRecord {
  SessionKey key;
  MacAddress initiator_mac;
  std::vector<RawPacket> packets;  // ascending capture_index
};

/// Packets seen but not turned into RawPackets.
struct SkipCounts {
  std::uint64_t udp = 0;
  std::uint64_t other_ip_protocol = 0;
  std::uint64_t ipv6 = 0;
  std::uint64_t non_ip = 0;
  std::uint64_t fragment = 0;
  std::uint64_t truncated = 0;
  std::uint64_t unsupported_link = 0;

  std::uint64_t total() const {
    return udp + other_ip_protocol + ipv6 + non_ip + fragment + truncated + unsupported_link;
  }
  SkipCounts& operator+=(const SkipCounts& other);
  bool operator==(const SkipCounts&) const = default;
};

struct ParseResult {
  std::vector<RawPacket> packets;
  SkipCounts skipped;
  std::uint64_t records = 0;
  std::uint32_t link_type = 0;
};

/// Parses a classic pcap capture held in memory. Either byte order and both
/// microsecond and nanosecond magics are accepted. Only TCP over IPv4 over
/// Ethernet (optionally 802.1Q/802.1ad tagged) is returned; everything else is
/// counted in ParseResult::skipped. Throws Error(MalformedGlobalHeader) or
/// Error(TruncatedRecordHeader) naming the byte offset.
ParseResult parse_pcap(std::span<const std::uint8_t> bytes);
ParseResult parse_pcap_file(const std::filesystem::path& path);

/// Groups packets into bidirectional sessions. initiator_mac is the source MAC
/// of the earliest packet (in input order) of each session.
std::map<SessionKey, SessionRecord> split_sessions(std::span<const RawPacket> packets);

using MacBuckets = std::map<MacAddress, std::vector<SessionRecord>>;

/// Partitions sessions by initiator MAC; each bucket is ordered by the capture
/// index of its sessions' first packet.
MacBuckets group_by_mac(std::vector<SessionRecord> sessions);
MacBuckets group_by_mac(std::map<SessionKey, SessionRecord> sessions);

}  // namespace iotprint::capture
