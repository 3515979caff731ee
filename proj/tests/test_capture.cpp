#include <doctest.h>

#include "iotprint/capture.hpp"
#include "iotprint/pcap_writer.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace iotprint::capture;
using iotprint::ErrorKind;
using support::error_kind;

namespace {

const MacAddress kA{{0x02, 0, 0, 0, 0, 0x0a}};
const MacAddress kB{{0x02, 0, 0, 0, 0, 0x0b}};
const Endpoint kClient{{0xC0A80002}, 40000};
const Endpoint kServer{{0x08080808}, 443};

std::vector<std::uint8_t> bytes(std::string_view s) { return {s.begin(), s.end()}; }

FrameSpec outbound() { return {kA, kB, kClient, kServer, std::nullopt}; }
FrameSpec inbound() { return {kB, kA, kServer, kClient, std::nullopt}; }

std::vector<std::uint8_t> tcp(const FrameSpec& spec, std::string_view payload) {
  return build_tcp_frame(spec, tcp_flags::kAck, 1, 1, bytes(payload));
}

}  // namespace

TEST_CASE("MAC and IPv4 text forms") {
  const auto mac = MacAddress::parse("AA-bb-CC-00-11-ff");
  REQUIRE(mac);
  CHECK(mac->to_string() == "aa:bb:cc:00:11:ff");
  CHECK_FALSE(MacAddress::parse("aa:bb:cc:00:11"));
  CHECK_FALSE(MacAddress::parse("aa:bb:cc:00:11:gg"));
  const auto ip = Ipv4Address::parse("192.168.1.20");
  REQUIRE(ip);
  CHECK(ip->value == 0xC0A80114u);
  CHECK(ip->to_string() == "192.168.1.20");
  CHECK_FALSE(Ipv4Address::parse("1.2.3"));
  CHECK_FALSE(Ipv4Address::parse("1.2.3.256"));
  CHECK_FALSE(Ipv4Address::parse("1.2.3.4x"));
}

TEST_CASE("parses both byte orders with identical results") {
  for (ByteOrder order : {ByteOrder::Little, ByteOrder::Big}) {
    PcapWriter w(order);
    w.add(100, 250, tcp(outbound(), "hello"));
    w.add(101, 0, tcp(inbound(), "world!"));
    const ParseResult r = parse_pcap(w.bytes());
    REQUIRE(r.packets.size() == 2);
    CHECK(r.records == 2);
    CHECK(r.link_type == 1);
    CHECK(r.packets[0].ts_sec == 100);
    CHECK(r.packets[0].ts_nsec == 250'000);
    CHECK(r.packets[0].source() == kClient);
    CHECK(r.packets[0].destination() == kServer);
    CHECK(r.packets[0].src_mac == kA);
    CHECK(r.packets[0].tcp_payload == bytes("hello"));
    CHECK(r.packets[1].tcp_payload == bytes("world!"));
    CHECK(r.packets[1].capture_index == 1);
  }
}

TEST_CASE("nanosecond magic keeps the fraction as nanoseconds") {
  PcapWriter w;
  w.add(7, 123456789, tcp(outbound(), "x"));
  auto raw = w.bytes();
  raw[0] = 0x4d;
  raw[1] = 0x3c;
  raw[2] = 0xb2;
  raw[3] = 0xa1;
  const ParseResult r = parse_pcap(raw);
  REQUIRE(r.packets.size() == 1);
  CHECK(r.packets[0].ts_nsec == 123456789u);
}

TEST_CASE("802.1Q and QinQ tags are unwrapped") {
  FrameSpec tagged = outbound();
  tagged.vlan_id = 42;
  auto qinq = tcp(outbound(), "double");
  const std::vector<std::uint8_t> tags{0x88, 0xa8, 0x00, 0x0c, 0x81, 0x00, 0x00, 0x2a};
  qinq.insert(qinq.begin() + 12, tags.begin(), tags.end());

  PcapWriter w;
  w.add(1, 0, tcp(tagged, "single"));
  w.add(2, 0, qinq);
  const ParseResult r = parse_pcap(w.bytes());
  REQUIRE(r.packets.size() == 2);
  CHECK(r.packets[0].tcp_payload == bytes("single"));
  CHECK(r.packets[1].tcp_payload == bytes("double"));
  CHECK(r.packets[1].source() == kClient);
}

TEST_CASE("unsupported traffic is counted, not returned") {
  PcapWriter w;
  w.add(0, 0, build_udp_frame(outbound(), bytes("dns")));

  auto ipv6 = tcp(outbound(), "v6");
  ipv6[12] = 0x86;
  ipv6[13] = 0xdd;
  w.add(0, 0, ipv6);

  auto arp = tcp(outbound(), "arp");
  arp[12] = 0x08;
  arp[13] = 0x06;
  w.add(0, 0, arp);

  auto icmp = tcp(outbound(), "icmp");
  icmp[14 + 9] = 1;
  w.add(0, 0, icmp);

  auto fragment = tcp(outbound(), "frag");
  fragment[14 + 6] = 0x20;  // more fragments
  w.add(0, 0, fragment);

  w.add_truncated(0, 0, tcp(outbound(), "cut short by the snaplen"), 40);
  w.add(0, 0, tcp(outbound(), "kept"));

  const ParseResult r = parse_pcap(w.bytes());
  REQUIRE(r.packets.size() == 1);
  CHECK(r.packets[0].tcp_payload == bytes("kept"));
  CHECK(r.packets[0].capture_index == 6);
  CHECK(r.records == 7);
  CHECK(r.skipped.udp == 1);
  CHECK(r.skipped.ipv6 == 1);
  CHECK(r.skipped.non_ip == 1);
  CHECK(r.skipped.other_ip_protocol == 1);
  CHECK(r.skipped.fragment == 1);
  CHECK(r.skipped.truncated == 1);
  CHECK(r.skipped.total() == 6);
}

TEST_CASE("Ethernet padding after the IP datagram is ignored") {
  auto frame = tcp(outbound(), "ab");
  frame.insert(frame.end(), 6, 0x00);
  PcapWriter w;
  w.add(0, 0, frame);
  const ParseResult r = parse_pcap(w.bytes());
  REQUIRE(r.packets.size() == 1);
  CHECK(r.packets[0].tcp_payload == bytes("ab"));
}

TEST_CASE("non-Ethernet link types are skipped") {
  PcapWriter w;
  w.add(0, 0, tcp(outbound(), "raw"));
  auto raw = w.bytes();
  raw[20] = 101;  // LINKTYPE_RAW
  const ParseResult r = parse_pcap(raw);
  CHECK(r.packets.empty());
  CHECK(r.skipped.unsupported_link == 1);
  CHECK(r.link_type == 101);
}

TEST_CASE("malformed captures") {
  SUBCASE("short global header") {
    const std::vector<std::uint8_t> raw(10, 0);
    CHECK(error_kind([&] { parse_pcap(raw); }) == ErrorKind::MalformedGlobalHeader);
  }
  SUBCASE("bad magic") {
    std::vector<std::uint8_t> raw(24, 0);
    raw[0] = 0x0a;
    CHECK(error_kind([&] { parse_pcap(raw); }) == ErrorKind::MalformedGlobalHeader);
  }
  SUBCASE("truncated record header names its offset") {
    PcapWriter w;
    w.add(0, 0, tcp(outbound(), "x"));
    auto raw = w.bytes();
    const std::size_t second = raw.size();
    raw.insert(raw.end(), 9, 0);
    try {
      parse_pcap(raw);
      FAIL("expected an error");
    } catch (const iotprint::Error& e) {
      CHECK(e.kind() == ErrorKind::TruncatedRecordHeader);
      CHECK(std::string(e.what()).find(std::to_string(second)) != std::string::npos);
    }
  }
  SUBCASE("record body runs past the end") {
    PcapWriter w;
    w.add(0, 0, tcp(outbound(), "abcdef"));
    auto raw = w.bytes();
    raw.resize(raw.size() - 3);
    CHECK(error_kind([&] { parse_pcap(raw); }) == ErrorKind::TruncatedRecordHeader);
  }
  SUBCASE("header only is an empty capture") {
    PcapWriter w;
    const ParseResult r = parse_pcap(w.bytes());
    CHECK(r.packets.empty());
    CHECK(r.records == 0);
  }
}

TEST_CASE("sessions are bidirectional and keyed by the sorted endpoint pair") {
  PcapWriter w;
  w.add(0, 0, tcp(inbound(), "server speaks first"));
  w.add(0, 1, tcp(outbound(), "client"));
  FrameSpec other = outbound();
  other.src.port = 40001;
  w.add(0, 2, tcp(other, "second session"));
  const auto sessions = split_sessions(parse_pcap(w.bytes()).packets);
  REQUIRE(sessions.size() == 2);

  const SessionKey key = SessionKey::from_endpoints(kClient, kServer);
  CHECK(key == SessionKey::from_endpoints(kServer, kClient));
  REQUIRE(sessions.count(key) == 1);
  const SessionRecord& s = sessions.at(key);
  CHECK(s.packets.size() == 2);
  // Whoever sent the first packet owns the session.
  CHECK(s.initiator_mac == kB);
  CHECK(key.to_string() == "tcp 8.8.8.8:443 <-> 192.168.0.2:40000");
}

TEST_CASE("MAC buckets are ordered by first packet") {
  PcapWriter w;
  for (std::uint16_t i = 0; i < 5; ++i) {
    FrameSpec s = outbound();
    s.src.port = static_cast<std::uint16_t>(50000 - i);  // key order opposite to time order
    w.add(0, i, tcp(s, "p"));
  }
  const MacBuckets buckets = group_by_mac(split_sessions(parse_pcap(w.bytes()).packets));
  REQUIRE(buckets.size() == 1);
  const auto& list = buckets.at(kA);
  REQUIRE(list.size() == 5);
  for (std::size_t i = 0; i < list.size(); ++i) {
    CHECK(list[i].packets.front().capture_index == i);
  }
}

TEST_CASE("session splitting matches the pairwise oracle on random captures") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto capture = oracles::random_capture(seed, 120);
    const auto check = oracles::session_split_matches_oracle(capture);
    INFO("seed " << seed << ": " << check.detail);
    CHECK(check.pass);
  }
}

TEST_CASE("built TCP frames carry a valid IPv4 header checksum") {
  FrameSpec s = outbound();
  s.vlan_id = 7;
  const auto frame = tcp(s, "checksum");
  const std::size_t ip = 18;
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i < 20; i += 2) sum += std::uint32_t{frame[ip + i]} << 8 | frame[ip + i + 1];
  while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
  CHECK(sum == 0xFFFF);
}
