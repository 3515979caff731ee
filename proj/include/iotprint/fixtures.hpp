#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "iotprint/capture.hpp"
#include "iotprint/dataset.hpp"

namespace iotprint::fixtures {

/// One fake device. Templates are raw bytes; the placeholders "{seq}" (session
/// number, decimal) and "{token}" (16 random hex digits) are expanded per
/// session so that sessions never deduplicate into each other.
struct FixtureDevice {
  std::string name;
  capture::MacAddress mac;
  dataset::DeviceType type = dataset::DeviceType::IoT;
  std::size_t sessions = 0;
  std::string request_template;
  std::string response_template;
  std::uint16_t server_port = 80;
};

struct FixtureSpec {
  std::vector<FixtureDevice> devices;
  /// Adds one DNS-like UDP datagram before every session (ignored downstream).
  bool udp_noise = true;
};

/// Reads the JSON form:
///   {"udp_noise": true,
///    "devices": [{"name": "...", "mac": "02:00:00:00:00:01", "type": "iot",
///                 "sessions": 1200, "request": "...", "request_hex": "...",
///                 "response": "...", "response_hex": "...", "server_port": 80}]}
/// `*_hex` fields take precedence over the text forms.
FixtureSpec load_fixture_spec(const std::filesystem::path& path);
FixtureSpec parse_fixture_spec(std::string_view json_text);

/// Four devices (one non-IoT) with clearly distinct protocols.
FixtureSpec default_fixture_spec(std::size_t sessions_per_device);

/// Expands a template for one session.
std::string expand_template(std::string_view tmpl, std::size_t seq, std::uint64_t token);

struct FixtureOutput {
  std::vector<std::filesystem::path> pcaps;
  std::filesystem::path mac_map;
};

/// Writes one pcap per device plus "macmap.tsv". Byte-identical for equal
/// (spec, seed).
FixtureOutput write_fixtures(const FixtureSpec& spec, const std::filesystem::path& out_dir,
                             std::uint64_t seed);

/// The pcap bytes for a single device (what write_fixtures stores).
std::vector<std::uint8_t> device_capture(const FixtureDevice& device, std::size_t device_index,
                                         bool udp_noise, std::uint64_t seed);

}  // namespace iotprint::fixtures
