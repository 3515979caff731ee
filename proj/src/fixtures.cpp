#include "iotprint/fixtures.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "iotprint/error.hpp"
#include "iotprint/pcap_writer.hpp"
#include "iotprint/rng.hpp"

namespace iotprint::fixtures {

using namespace std::string_literals;

namespace {

constexpr std::uint32_t kBaseTime = 1'500'000'000;

const capture::MacAddress kGatewayMac{{0x02, 0x00, 0x5e, 0x00, 0x00, 0x01}};

// Hex digits become bytes; "{...}" placeholders pass through untouched so
// they can be expanded later.
std::string decode_hex_template(std::string_view hex) {
  std::string out;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  for (std::size_t i = 0; i < hex.size();) {
    const char c = hex[i];
    if (c == ' ' || c == ':') {
      ++i;
    } else if (c == '{') {
      const auto close = hex.find('}', i);
      if (close == std::string_view::npos) {
        throw Error(ErrorKind::InvalidArgument, "unterminated placeholder in hex template");
      }
      out.append(hex.substr(i, close - i + 1));
      i = close + 1;
    } else {
      if (i + 1 >= hex.size() || nibble(c) < 0 || nibble(hex[i + 1]) < 0) {
        throw Error(ErrorKind::InvalidArgument, "bad hex template near offset " + std::to_string(i));
      }
      out.push_back(static_cast<char>(nibble(c) << 4 | nibble(hex[i + 1])));
      i += 2;
    }
  }
  return out;
}

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

}  // namespace

std::string expand_template(std::string_view tmpl, std::size_t seq, std::uint64_t token) {
  char token_hex[17];
  std::snprintf(token_hex, sizeof token_hex, "%016llx", static_cast<unsigned long long>(token));
  const std::string seq_text = std::to_string(seq);
  std::string out;
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl.substr(i, 5) == "{seq}") {
      out += seq_text;
      i += 5;
    } else if (tmpl.substr(i, 7) == "{token}") {
      out += token_hex;
      i += 7;
    } else {
      out.push_back(tmpl[i++]);
    }
  }
  return out;
}

FixtureSpec parse_fixture_spec(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("fixture spec is not valid JSON: ") + e.what());
  }
  FixtureSpec spec;
  spec.udp_noise = doc.value("udp_noise", true);
  if (!doc.contains("devices") || !doc["devices"].is_array() || doc["devices"].empty()) {
    throw Error(ErrorKind::InvalidArgument, "fixture spec needs a non-empty \"devices\" array");
  }
  for (const auto& d : doc["devices"]) {
    FixtureDevice device;
    try {
      device.name = d.at("name").get<std::string>();
      const auto mac = capture::MacAddress::parse(d.at("mac").get<std::string>());
      if (!mac) throw Error(ErrorKind::InvalidArgument, "bad MAC for " + device.name);
      device.mac = *mac;
      const auto type = dataset::parse_device_type(d.value("type", "iot"s));
      if (!type) throw Error(ErrorKind::InvalidArgument, "bad device type for " + device.name);
      device.type = *type;
      device.sessions = d.at("sessions").get<std::size_t>();
      device.request_template = d.contains("request_hex")
                                    ? decode_hex_template(d["request_hex"].get<std::string>())
                                    : d.value("request", ""s);
      device.response_template = d.contains("response_hex")
                                     ? decode_hex_template(d["response_hex"].get<std::string>())
                                     : d.value("response", ""s);
      device.server_port = d.value("server_port", std::uint16_t{80});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::InvalidArgument, std::string("fixture device entry: ") + e.what());
    }
    spec.devices.push_back(std::move(device));
  }
  return spec;
}

FixtureSpec load_fixture_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_fixture_spec(text.str());
}

FixtureSpec default_fixture_spec(std::size_t sessions_per_device) {
  FixtureSpec spec;
  spec.devices.push_back(
      {"Fixture workstation",
       {{0x02, 0x10, 0x00, 0x00, 0x00, 0x01}},
       dataset::DeviceType::NonIoT,
       sessions_per_device,
       "GET /search?q={token} HTTP/1.1\r\nHost: www.example.com\r\n"
       "User-Agent: Mozilla/5.0 (X11; Linux x86_64; rv:115.0) Gecko/20100101 Firefox/115.0\r\n"
       "Accept: text/html,application/xhtml+xml\r\nAccept-Language: en-US,en;q=0.5\r\n"
       "Connection: keep-alive\r\n\r\n",
       "HTTP/1.1 200 OK\r\nContent-Type: text/html; charset=utf-8\r\nCache-Control: private\r\n"
       "\r\n<!doctype html><html><head><title>Results {seq}</title></head><body>"
       "<p>Nothing found for {token}</p></body></html>",
       80});
  spec.devices.push_back(
      {"Fixture camera",
       {{0x02, 0x10, 0x00, 0x00, 0x00, 0x02}},
       dataset::DeviceType::IoT,
       sessions_per_device,
       "OPTIONS rtsp://camera.local:554/stream1 RTSP/1.0\r\nCSeq: {seq}\r\n"
       "Session: {token}\r\nUser-Agent: CamFirmware/2.1\r\n\r\n",
       "RTSP/1.0 200 OK\r\nCSeq: {seq}\r\nPublic: DESCRIBE, SETUP, TEARDOWN, PLAY, PAUSE\r\n\r\n",
       554});
  spec.devices.push_back(
      {"Fixture sleep sensor",
       {{0x02, 0x10, 0x00, 0x00, 0x00, 0x03}},
       dataset::DeviceType::IoT,
       sessions_per_device,
       "\x16\x03\x01\x00\x5a\x01\x00\x00\x56\x03\x03"s + "{token}{token}" +
           "\x00\x00\x04\x00\x2f\x00\x35\x01\x00\x00\x29\x00\x00\x00\x12\x00\x10\x00\x00\x0d"s +
           "sleep.example",
       "\x16\x03\x03\x00\x31\x02\x00\x00\x2d\x03\x03"s + "{token}" + "\x00\x00\x2f\x00"s,
       443});
  spec.devices.push_back(
      {"Fixture motion sensor",
       {{0x02, 0x10, 0x00, 0x00, 0x00, 0x04}},
       dataset::DeviceType::IoT,
       sessions_per_device,
       "\x10\x24\x00\x04MQTT\x04\x02\x00\x3c\x00\x18"s + "motion-{token}" +
           "\x30\x1c\x00\x0cmotion/state"s + "{seq}",
       "\x20\x02\x00\x00"s,
       1883});
  return spec;
}

std::vector<std::uint8_t> device_capture(const FixtureDevice& device, std::size_t device_index,
                                         bool udp_noise, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "fixture/" + device.name));
  const capture::Ipv4Address device_ip{0xC0A80100u + 10u + static_cast<std::uint32_t>(device_index)};
  const capture::Ipv4Address server_ip{0x34000000u + 0x100u * static_cast<std::uint32_t>(device_index) + 7u};
  const capture::Ipv4Address dns_ip{0xC0A80101u};

  // Build each session's frames, then interleave neighbouring sessions two at
  // a time so the splitter sees concurrent connections.
  std::vector<std::vector<std::vector<std::uint8_t>>> sessions;
  std::vector<std::vector<std::uint8_t>> noise;
  for (std::size_t s = 0; s < device.sessions; ++s) {
    const std::uint64_t token = rng.next_u64();
    const auto request = bytes_of(expand_template(device.request_template, s, token));
    const auto response = bytes_of(expand_template(device.response_template, s, token));
    const auto client_port = static_cast<std::uint16_t>(20000 + s % 40000);

    capture::FrameSpec out{device.mac, kGatewayMac, {device_ip, client_port},
                           {server_ip, device.server_port}, std::nullopt};
    capture::FrameSpec in{kGatewayMac, device.mac, {server_ip, device.server_port},
                          {device_ip, client_port}, std::nullopt};
    const auto client_isn = static_cast<std::uint32_t>(rng.next_u64());
    const auto server_isn = static_cast<std::uint32_t>(rng.next_u64());
    const auto req_len = static_cast<std::uint32_t>(request.size());
    const auto resp_len = static_cast<std::uint32_t>(response.size());
    using namespace capture::tcp_flags;
    const std::vector<std::uint8_t> none;

    std::vector<std::vector<std::uint8_t>> frames;
    frames.push_back(capture::build_tcp_frame(out, kSyn, client_isn, 0, none));
    frames.push_back(capture::build_tcp_frame(in, kSyn | kAck, server_isn, client_isn + 1, none));
    frames.push_back(capture::build_tcp_frame(out, kAck, client_isn + 1, server_isn + 1, none));
    if (!request.empty()) {
      frames.push_back(
          capture::build_tcp_frame(out, kPsh | kAck, client_isn + 1, server_isn + 1, request));
      frames.push_back(capture::build_tcp_frame(in, kAck, server_isn + 1, client_isn + 1 + req_len, none));
    }
    if (!response.empty()) {
      frames.push_back(capture::build_tcp_frame(in, kPsh | kAck, server_isn + 1,
                                                client_isn + 1 + req_len, response));
    }
    frames.push_back(capture::build_tcp_frame(out, kFin | kAck, client_isn + 1 + req_len,
                                              server_isn + 1 + resp_len, none));
    frames.push_back(capture::build_tcp_frame(in, kFin | kAck, server_isn + 1 + resp_len,
                                              client_isn + 2 + req_len, none));
    sessions.push_back(std::move(frames));

    if (udp_noise) {
      capture::FrameSpec dns{device.mac, kGatewayMac,
                             {device_ip, static_cast<std::uint16_t>(50000 + s % 10000)},
                             {dns_ip, 53}, std::nullopt};
      const std::string query = "\x12\x34\x01\x00\x00\x01\x00\x00\x00\x00\x00\x00"s +
                                "\x07" + "example" + "\x03" + "com" + "\x00\x00\x01\x00\x01"s;
      noise.push_back(capture::build_udp_frame(dns, bytes_of(query)));
    }
  }

  capture::PcapWriter writer;
  std::uint64_t tick = 0;
  auto emit = [&](const std::vector<std::uint8_t>& frame) {
    writer.add(kBaseTime + static_cast<std::uint32_t>(tick / 1000),
               static_cast<std::uint32_t>((tick % 1000) * 1000), frame);
    ++tick;
  };
  for (std::size_t s = 0; s < sessions.size(); s += 2) {
    if (udp_noise) {
      emit(noise[s]);
      if (s + 1 < sessions.size()) emit(noise[s + 1]);
    }
    const auto& a = sessions[s];
    const auto* b = s + 1 < sessions.size() ? &sessions[s + 1] : nullptr;
    const std::size_t longest = std::max(a.size(), b ? b->size() : 0);
    for (std::size_t f = 0; f < longest; ++f) {
      if (f < a.size()) emit(a[f]);
      if (b && f < b->size()) emit((*b)[f]);
    }
  }
  return writer.bytes();
}

FixtureOutput write_fixtures(const FixtureSpec& spec, const std::filesystem::path& out_dir,
                             std::uint64_t seed) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::IoFailure, "cannot create " + out_dir.string() + ": " + ec.message());

  FixtureOutput out;
  out.mac_map = out_dir / "macmap.tsv";
  std::ofstream map(out.mac_map, std::ios::trunc);
  if (!map) throw Error(ErrorKind::IoFailure, "cannot create " + out.mac_map.string());
  map << "# mac\tdevice name\ttype\n";

  for (std::size_t i = 0; i < spec.devices.size(); ++i) {
    const FixtureDevice& device = spec.devices[i];
    const auto bytes = device_capture(device, i, spec.udp_noise, seed);
    char name[32];
    std::snprintf(name, sizeof name, "device-%02zu.pcap", i);
    const auto path = out_dir / name;
    std::ofstream pcap(path, std::ios::binary | std::ios::trunc);
    if (!pcap) throw Error(ErrorKind::IoFailure, "cannot create " + path.string());
    pcap.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!pcap) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
    out.pcaps.push_back(path);
    map << device.mac.to_string() << '\t' << device.name << '\t' << dataset::to_string(device.type)
        << '\n';
  }
  if (!map) throw Error(ErrorKind::IoFailure, "write failed for " + out.mac_map.string());
  return out;
}

}  // namespace iotprint::fixtures
