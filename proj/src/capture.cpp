#include "iotprint/capture.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "iotprint/error.hpp"

namespace iotprint::capture {

namespace {

constexpr std::uint32_t kMagicMicros = 0xA1B2C3D4;
constexpr std::uint32_t kMagicNanos = 0xA1B23C4D;
constexpr std::uint32_t kLinkTypeEthernet = 1;
constexpr std::size_t kGlobalHeaderSize = 24;
constexpr std::size_t kRecordHeaderSize = 16;

constexpr std::uint16_t kEtherTypeIpv4 = 0x0800;
constexpr std::uint16_t kEtherTypeIpv6 = 0x86DD;
constexpr std::uint16_t kEtherTypeVlan = 0x8100;
constexpr std::uint16_t kEtherTypeQinQ = 0x88A8;

std::uint32_t load_u32(const std::uint8_t* p, bool swapped) {
  const std::uint32_t le = std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 |
                           std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24;
  const std::uint32_t be = std::uint32_t{p[3]} | std::uint32_t{p[2]} << 8 |
                           std::uint32_t{p[1]} << 16 | std::uint32_t{p[0]} << 24;
  return swapped ? be : le;
}

std::uint16_t load_be16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] << 8 | p[1]);
}

std::uint32_t load_be32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} << 24 | std::uint32_t{p[1]} << 16 | std::uint32_t{p[2]} << 8 |
         std::uint32_t{p[3]};
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

enum class FrameVerdict { Tcp, Udp, OtherIpProtocol, Ipv6, NonIp, Fragment, Truncated };

// Decodes one Ethernet frame. Fills `out` only when the verdict is Tcp.
FrameVerdict decode_frame(std::span<const std::uint8_t> frame, RawPacket& out) {
  if (frame.size() < 14) return FrameVerdict::Truncated;
  std::copy_n(frame.begin(), 6, out.dst_mac.octets.begin());
  std::copy_n(frame.begin() + 6, 6, out.src_mac.octets.begin());

  std::size_t offset = 12;
  std::uint16_t ether_type = load_be16(frame.data() + offset);
  offset += 2;
  while (ether_type == kEtherTypeVlan || ether_type == kEtherTypeQinQ) {
    if (frame.size() < offset + 4) return FrameVerdict::Truncated;
    ether_type = load_be16(frame.data() + offset + 2);
    offset += 4;
  }
  if (ether_type == kEtherTypeIpv6) return FrameVerdict::Ipv6;
  if (ether_type != kEtherTypeIpv4) return FrameVerdict::NonIp;

  const auto ip = frame.subspan(offset);
  if (ip.size() < 20) return FrameVerdict::Truncated;
  if ((ip[0] >> 4) != 4) return FrameVerdict::NonIp;
  const std::size_t ip_header_len = std::size_t{ip[0] & 0x0Fu} * 4;
  const std::size_t ip_total_len = load_be16(ip.data() + 2);
  if (ip_header_len < 20 || ip_total_len < ip_header_len) return FrameVerdict::Truncated;

  const std::uint8_t protocol = ip[9];
  const std::uint16_t flags_fragment = load_be16(ip.data() + 6);
  const bool more_fragments = (flags_fragment & 0x2000) != 0;
  const bool nonzero_offset = (flags_fragment & 0x1FFF) != 0;

  if (protocol == kIpProtoUdp) return FrameVerdict::Udp;
  if (protocol != kIpProtoTcp) return FrameVerdict::OtherIpProtocol;
  if (more_fragments || nonzero_offset) return FrameVerdict::Fragment;
  if (ip.size() < ip_total_len) return FrameVerdict::Truncated;

  const auto tcp = ip.subspan(ip_header_len, ip_total_len - ip_header_len);
  if (tcp.size() < 20) return FrameVerdict::Truncated;
  const std::size_t tcp_header_len = std::size_t{static_cast<std::uint8_t>(tcp[12] >> 4)} * 4;
  if (tcp_header_len < 20 || tcp_header_len > tcp.size()) return FrameVerdict::Truncated;

  out.ip_protocol = protocol;
  out.src_ip = Ipv4Address{load_be32(ip.data() + 12)};
  out.dst_ip = Ipv4Address{load_be32(ip.data() + 16)};
  out.src_port = load_be16(tcp.data());
  out.dst_port = load_be16(tcp.data() + 2);
  const auto payload = tcp.subspan(tcp_header_len);
  out.tcp_payload.assign(payload.begin(), payload.end());
  return FrameVerdict::Tcp;
}

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

}  // namespace

std::string MacAddress::to_string() const {
  char buf[18];
  std::snprintf(buf, sizeof buf, "%02x:%02x:%02x:%02x:%02x:%02x", octets[0], octets[1],
                octets[2], octets[3], octets[4], octets[5]);
  return buf;
}

std::optional<MacAddress> MacAddress::parse(std::string_view text) {
  if (text.size() != 17) return std::nullopt;
  MacAddress mac;
  for (std::size_t i = 0; i < 6; ++i) {
    const int hi = hex_digit(text[i * 3]);
    const int lo = hex_digit(text[i * 3 + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    if (i < 5 && text[i * 3 + 2] != ':' && text[i * 3 + 2] != '-') return std::nullopt;
    mac.octets[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return mac;
}

std::string Ipv4Address::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%u.%u.%u.%u", value >> 24, (value >> 16) & 0xFF,
                (value >> 8) & 0xFF, value & 0xFF);
  return buf;
}

std::optional<Ipv4Address> Ipv4Address::parse(std::string_view text) {
  std::uint32_t value = 0;
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (int part = 0; part < 4; ++part) {
    unsigned octet = 0;
    auto [next, ec] = std::from_chars(p, end, octet);
    if (ec != std::errc{} || octet > 255) return std::nullopt;
    value = value << 8 | octet;
    p = next;
    if (part < 3) {
      if (p == end || *p != '.') return std::nullopt;
      ++p;
    }
  }
  if (p != end) return std::nullopt;
  return Ipv4Address{value};
}

SessionKey SessionKey::from_endpoints(const Endpoint& x, const Endpoint& y) {
  return x <= y ? SessionKey{x, y, kIpProtoTcp} : SessionKey{y, x, kIpProtoTcp};
}

std::string SessionKey::to_string() const {
  return "tcp " + endpoint_a.ip.to_string() + ":" + std::to_string(endpoint_a.port) + " <-> " +
         endpoint_b.ip.to_string() + ":" + std::to_string(endpoint_b.port);
}

SkipCounts& SkipCounts::operator+=(const SkipCounts& other) {
  udp += other.udp;
  other_ip_protocol += other.other_ip_protocol;
  ipv6 += other.ipv6;
  non_ip += other.non_ip;
  fragment += other.fragment;
  truncated += other.truncated;
  unsupported_link += other.unsupported_link;
  return *this;
}

ParseResult parse_pcap(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kGlobalHeaderSize) {
    throw Error(ErrorKind::MalformedGlobalHeader,
                "capture is " + std::to_string(bytes.size()) +
                    " bytes, shorter than the 24-byte global header (offset 0)");
  }
  const std::uint32_t magic_le = load_u32(bytes.data(), false);
  bool swapped = false;
  bool nanos = false;
  if (magic_le == kMagicMicros || magic_le == kMagicNanos) {
    nanos = magic_le == kMagicNanos;
  } else {
    const std::uint32_t magic_be = load_u32(bytes.data(), true);
    if (magic_be != kMagicMicros && magic_be != kMagicNanos) {
      throw Error(ErrorKind::MalformedGlobalHeader,
                  "unrecognised magic " + hex32(magic_le) + " at offset 0");
    }
    swapped = true;
    nanos = magic_be == kMagicNanos;
  }

  ParseResult result;
  result.link_type = load_u32(bytes.data() + 20, swapped) & 0x0FFFFFFF;

  std::size_t offset = kGlobalHeaderSize;
  while (offset < bytes.size()) {
    if (bytes.size() - offset < kRecordHeaderSize) {
      throw Error(ErrorKind::TruncatedRecordHeader,
                  "file ends inside a record header at offset " + std::to_string(offset));
    }
    const std::uint8_t* header = bytes.data() + offset;
    const std::uint32_t ts_sec = load_u32(header, swapped);
    const std::uint32_t ts_frac = load_u32(header + 4, swapped);
    const std::uint32_t incl_len = load_u32(header + 8, swapped);
    if (bytes.size() - offset - kRecordHeaderSize < incl_len) {
      throw Error(ErrorKind::TruncatedRecordHeader,
                  "record at offset " + std::to_string(offset) + " declares " +
                      std::to_string(incl_len) + " bytes but the file ends first");
    }
    const auto frame = bytes.subspan(offset + kRecordHeaderSize, incl_len);
    const std::uint64_t index = result.records++;
    offset += kRecordHeaderSize + incl_len;

    if (result.link_type != kLinkTypeEthernet) {
      ++result.skipped.unsupported_link;
      continue;
    }
    RawPacket packet;
    switch (decode_frame(frame, packet)) {
      case FrameVerdict::Tcp:
        packet.capture_index = index;
        packet.ts_sec = ts_sec;
        packet.ts_nsec = nanos ? ts_frac : ts_frac * 1000u;
        result.packets.push_back(std::move(packet));
        break;
      case FrameVerdict::Udp: ++result.skipped.udp; break;
      case FrameVerdict::OtherIpProtocol: ++result.skipped.other_ip_protocol; break;
      case FrameVerdict::Ipv6: ++result.skipped.ipv6; break;
      case FrameVerdict::NonIp: ++result.skipped.non_ip; break;
      case FrameVerdict::Fragment: ++result.skipped.fragment; break;
      case FrameVerdict::Truncated: ++result.skipped.truncated; break;
    }
  }
  return result;
}

ParseResult parse_pcap_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorKind::IoFailure, "read failed for " + path.string());
  try {
    return parse_pcap(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::map<SessionKey, SessionRecord> split_sessions(std::span<const RawPacket> packets) {
  std::map<SessionKey, SessionRecord> sessions;
  for (const RawPacket& packet : packets) {
    const SessionKey key = SessionKey::of(packet);
    auto [it, inserted] = sessions.try_emplace(key);
    if (inserted) {
      it->second.key = key;
      it->second.initiator_mac = packet.src_mac;
    }
    it->second.packets.push_back(packet);
  }
  return sessions;
}

MacBuckets group_by_mac(std::vector<SessionRecord> sessions) {
  std::stable_sort(sessions.begin(), sessions.end(),
                   [](const SessionRecord& a, const SessionRecord& b) {
                     const auto first = [](const SessionRecord& s) {
                       return s.packets.empty() ? UINT64_MAX : s.packets.front().capture_index;
                     };
                     return first(a) < first(b);
                   });
  MacBuckets buckets;
  for (SessionRecord& session : sessions) {
    buckets[session.initiator_mac].push_back(std::move(session));
  }
  return buckets;
}

MacBuckets group_by_mac(std::map<SessionKey, SessionRecord> sessions) {
  std::vector<SessionRecord> flat;
  flat.reserve(sessions.size());
  for (auto& [key, record] : sessions) flat.push_back(std::move(record));
  return group_by_mac(std::move(flat));
}

}  // namespace iotprint::capture
