#include <doctest.h>

#include <fstream>
#include <unordered_set>

#include "iotprint/capture.hpp"
#include "iotprint/transform.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace iotprint::transform;
using iotprint::ErrorKind;
using support::error_kind;

namespace {

iotprint::capture::RawPacket packet(std::uint16_t src_port, std::uint16_t dst_port,
                                    std::string_view payload) {
  iotprint::capture::RawPacket p;
  p.src_ip.value = src_port == 80 ? 2 : 1;
  p.dst_ip.value = src_port == 80 ? 1 : 2;
  p.src_port = src_port;
  p.dst_port = dst_port;
  p.tcp_payload.assign(payload.begin(), payload.end());
  return p;
}

Payload text(std::string_view s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_CASE("payload extraction concatenates in capture order") {
  iotprint::capture::SessionRecord s;
  s.packets = {packet(5000, 80, "GET "), packet(80, 5000, "200 "), packet(5000, 80, ""),
               packet(5000, 80, "/x"), packet(80, 5000, "OK")};
  CHECK(extract_payload(s) == text("GET 200 /xOK"));
  CHECK(extract_payload(s, PayloadDirection::InitiatorOnly) == text("GET /x"));

  iotprint::capture::SessionRecord empty;
  empty.packets = {packet(5000, 80, ""), packet(80, 5000, "")};
  CHECK(extract_payload(empty).empty());
}

TEST_CASE("dedupe keeps first occurrences and drops empties") {
  const std::vector<Payload> in{text("a"), text(""), text("b"), text("a"), text("c"), text("b"), text("")};
  CHECK(dedupe_and_filter(in) == std::vector<Payload>{text("a"), text("b"), text("c")});
}

TEST_CASE("dedupe agrees with a hash-set oracle on random payloads") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Payload> in;
    for (int i = 0; i < 2000; ++i) {
      Payload p(gen() % 4);  // short payloads collide often
      for (auto& b : p) b = static_cast<std::uint8_t>(gen() % 3);
      in.push_back(p);
    }
    std::vector<Payload> want;
    std::unordered_set<std::string> seen;
    for (const auto& p : in) {
      if (p.empty()) continue;
      if (seen.insert(std::string(p.begin(), p.end())).second) want.push_back(p);
    }
    CHECK(dedupe_and_filter(in) == want);
  }
}

TEST_CASE("fix_length") {
  SUBCASE("fuzzed over every length up to 10000") {
    const auto check = oracles::fix_length_fuzz(10000, 3);
    INFO(check.detail);
    CHECK(check.pass);
  }
  SUBCASE("boundaries") {
    const Payload exact(784, 0xAB);
    CHECK(fix_length(exact).bytes[783] == 0xAB);
    Payload longer(785, 0x01);
    longer[784] = 0xFF;
    CHECK(fix_length(longer).bytes[783] == 0x01);
    const auto short_one = fix_length(text("z"));
    CHECK(short_one.bytes[0] == 'z');
    CHECK(short_one.bytes[1] == 0);
  }
  SUBCASE("empty input") {
    CHECK(error_kind([] { fix_length(Payload{}); }) == ErrorKind::EmptyPayload);
  }
}

TEST_CASE("image view is row-major 28x28") {
  PayloadVector v;
  for (std::size_t i = 0; i < v.bytes.size(); ++i) v.bytes[i] = static_cast<std::uint8_t>(i * 7);
  const PayloadImage img = to_image(v);
  CHECK(img.pixels[0][0] == v.bytes[0]);
  CHECK(img.pixels[0][27] == v.bytes[27]);
  CHECK(img.pixels[1][0] == v.bytes[28]);
  CHECK(img.pixels[27][27] == v.bytes[783]);
  CHECK(from_image(img) == v);
}

TEST_CASE("IDX round trip and rejection of malformed files") {
  support::TempDir dir("idx");
  const auto check = oracles::idx_round_trip(dir.path(), 5);
  INFO(check.detail);
  CHECK(check.pass);
}

TEST_CASE("IDX label names sidecar") {
  support::TempDir dir("names");
  IdxDataset ds;
  ds.images.resize(3);
  ds.labels = {0, 2, 1};
  ds.label_names = {"Non-IoT devices", "Camera", "Plug"};
  const auto images = dir.path() / "a.images.idx";
  const auto labels = dir.path() / "a.labels.idx";
  write_idx(ds, images, labels);
  CHECK(label_names_path(labels) == dir.path() / "a.labels.idx.names.tsv");
  CHECK(read_idx(images, labels).label_names == ds.label_names);

  std::filesystem::remove(label_names_path(labels));
  const auto unnamed = read_idx(images, labels);
  CHECK(unnamed.label_names == std::vector<std::string>{"0", "1", "2"});
  CHECK(unnamed.labels == ds.labels);
}

TEST_CASE("IDX validation before writing") {
  IdxDataset ds;
  ds.images.resize(2);
  ds.labels = {0};
  ds.label_names = {"a"};
  CHECK(error_kind([&] { ds.validate(); }) == ErrorKind::CountMismatch);
  ds.labels = {0, 1};
  CHECK(error_kind([&] { ds.validate(); }) == ErrorKind::LabelOutOfRange);
  ds.label_names = {"a", "b"};
  CHECK_NOTHROW(ds.validate());
}

TEST_CASE("write_bin stores raw bytes") {
  support::TempDir dir("bin");
  const auto path = dir.path() / "p.bin";
  write_bin(path, text("raw\x01"));
  std::ifstream in(path, std::ios::binary);
  const std::string got((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(got == "raw\x01");
}
