#include <doctest.h>

#include <algorithm>
#include <set>

#include "iotprint/dataset.hpp"
#include "support.hpp"

using namespace iotprint::dataset;
using iotprint::ErrorKind;
using support::error_kind;

namespace {

// Every session image is unique: byte 0 = device, bytes 1-2 = session index.
Device make_device(std::string name, DeviceType type, std::size_t n, std::uint8_t id) {
  Device d{std::move(name), type, {}};
  for (std::size_t i = 0; i < n; ++i) {
    PayloadVector v;
    v.bytes[0] = id;
    v.bytes[1] = static_cast<std::uint8_t>(i & 0xFF);
    v.bytes[2] = static_cast<std::uint8_t>(i >> 8);
    d.sessions.push_back(v);
  }
  return d;
}

DeviceCorpus small_corpus() {
  DeviceCorpus c;
  c.devices.push_back(make_device("Laptops", DeviceType::NonIoT, 60, 0));
  c.devices.push_back(make_device("Camera", DeviceType::IoT, 50, 1));
  c.devices.push_back(make_device("Plug", DeviceType::IoT, 40, 2));
  c.devices.push_back(make_device("Hub", DeviceType::IoT, 30, 3));
  return c;
}

std::size_t session_of(const PayloadVector& v) { return v.bytes[1] | (std::size_t{v.bytes[2]} << 8); }

}  // namespace

TEST_CASE("split sizes for known device totals") {
  struct Row {
    std::size_t total, train, validation, test;
  };
  // Device totals with their train/validation/test counts.
  const Row rows[] = {
      {9029, 7313, 903, 813},    {3584, 2903, 358, 323},    {4055, 3285, 405, 365},
      {3407, 2759, 341, 307},    {2338, 1894, 234, 210},    {2688, 2177, 269, 242},
      {7031, 5695, 703, 633},    {38518, 31199, 3852, 3467},
  };
  for (const Row& r : rows) {
    const PartSizes s = split_sizes(r.total);
    INFO("total " << r.total);
    CHECK(s.train == r.train);
    CHECK(s.validation == r.validation);
    CHECK(s.test == r.test);
  }
  // Halves round down, so these two totals land one session away from the
  // counts reported for them (100 test sessions of 1118, 2474 validation
  // sessions of 24735).
  CHECK(split_sizes(1118).test == 101);
  CHECK(split_sizes(1118).validation == 112);
  CHECK(split_sizes(24735).validation == 2473);
  CHECK(split_sizes(24735).test == 2226);
}

TEST_CASE("split sizes always partition n") {
  for (std::size_t n = 0; n < 5000; ++n) {
    const PartSizes s = split_sizes(n);
    CHECK(s.train + s.validation + s.test == n);
  }
  CHECK(tenth_rounded(15) == 1);  // 1.5 rounds down
  CHECK(tenth_rounded(16) == 2);
  CHECK(tenth_rounded(14) == 1);
}

TEST_CASE("device filter keeps strictly more than the minimum") {
  DeviceCorpus c;
  c.devices.push_back(make_device("at", DeviceType::IoT, 1000, 0));
  c.devices.push_back(make_device("above", DeviceType::IoT, 1118, 1));
  const DeviceCorpus kept = filter_min_sessions(c, 1000);
  REQUIRE(kept.devices.size() == 1);
  CHECK(kept.devices[0].name == "above");
  CHECK(error_kind([&] { filter_min_sessions(c, 5000); }) == ErrorKind::EmptyCorpus);
}

TEST_CASE("split is stratified, disjoint, complete and seeded") {
  const DeviceCorpus c = small_corpus();
  const SplitDataset a = split(c, 7);
  const SplitDataset b = split(c, 7);
  const SplitDataset other = split(c, 8);
  REQUIRE(a.devices.size() == c.devices.size());
  bool any_difference = false;
  for (std::size_t d = 0; d < c.devices.size(); ++d) {
    const DevicePool& p = a.devices[d];
    const PartSizes want = split_sizes(c.devices[d].sessions.size());
    CHECK(p.train.size() == want.train);
    CHECK(p.validation.size() == want.validation);
    CHECK(p.test.size() == want.test);
    std::set<std::size_t> seen;
    for (const auto* part : {&p.train, &p.validation, &p.test}) {
      for (const auto& v : *part) {
        CHECK(v.bytes[0] == d);
        CHECK(seen.insert(session_of(v)).second);
      }
      CHECK(std::is_sorted(part->begin(), part->end(), [](const auto& x, const auto& y) {
        return session_of(x) < session_of(y);
      }));
    }
    CHECK(seen.size() == c.devices[d].sessions.size());
    CHECK(p.train == b.devices[d].train);
    CHECK(p.test == b.devices[d].test);
    any_difference |= p.test != other.devices[d].test;
  }
  CHECK(any_difference);

  const IdxDataset train = a.part(Part::Train);
  CHECK(train.label_names == std::vector<std::string>{"Laptops", "Camera", "Plug", "Hub"});
  CHECK(train.size() == 49 + 41 + 32 + 24);
}

TEST_CASE("labeling schemes") {
  const DeviceCorpus c = small_corpus();
  const SplitDataset s = split(c, 1);
  auto count = [](const IdxDataset& ds, std::uint8_t label) {
    return static_cast<std::size_t>(std::count(ds.labels.begin(), ds.labels.end(), label));
  };

  SUBCASE("1: IoT vs non-IoT") {
    const auto e = label_for_experiment(s, {Scheme::IotVsNonIot, ""});
    CHECK(e.output_width == 1);
    CHECK(count(e.train, 0) == 49);
    CHECK(count(e.train, 1) == 41 + 32 + 24);
    CHECK(e.test.label_names == std::vector<std::string>{"Non-IoT devices", "IoT devices"});
  }
  SUBCASE("2: one IoT device vs the other IoT devices") {
    const auto e = label_for_experiment(s, {Scheme::OneVsRestIot, "Plug"});
    CHECK(e.output_width == 1);
    CHECK(count(e.train, 1) == 32);
    CHECK(count(e.train, 0) == 41 + 24);
    CHECK(e.train.label_names[1] == "Plug");
  }
  SUBCASE("3: one IoT device vs everything else") {
    const auto e = label_for_experiment(s, {Scheme::OneVsAll, "Plug"});
    CHECK(count(e.train, 1) == 32);
    CHECK(count(e.train, 0) == 49 + 41 + 24);
  }
  SUBCASE("4: multiclass with non-IoT as class 0") {
    const auto e = label_for_experiment(s, {Scheme::Multiclass, ""});
    CHECK(e.output_width == 4);
    CHECK(output_width(e.spec, c) == 4);
    CHECK(e.train.label_names == std::vector<std::string>{"Non-IoT devices", "Camera", "Plug", "Hub"});
    CHECK(count(e.train, 3) == 24);
  }
  SUBCASE("5: unknown detection holds one device out") {
    const auto e = label_for_experiment(s, {Scheme::UnknownDetection, "Camera"});
    CHECK(e.output_width == 2);
    CHECK(output_width(e.spec, c) == 2);
    CHECK(e.train.label_names == std::vector<std::string>{"Plug", "Hub"});
    CHECK(count(e.train, 0) == 32);
    CHECK(count(e.train, 1) == 24);
    CHECK(e.train.size() == 56);  // neither non-IoT nor the held-out device
    CHECK(e.unknown_validation == s.find("Camera")->validation);
    CHECK(e.unknown_test == s.find("Camera")->test);
  }
  SUBCASE("errors") {
    CHECK(error_kind([&] { label_for_experiment(s, {Scheme::OneVsRestIot, "NoSuchDevice"}); }) ==
          ErrorKind::UnknownDevice);
    CHECK(error_kind([&] { label_for_experiment(s, {Scheme::OneVsAll, "Laptops"}); }) ==
          ErrorKind::UnknownDevice);
    CHECK(error_kind([&] { label_for_experiment(s, {Scheme::UnknownDetection, ""}); }) ==
          ErrorKind::UnknownDevice);

    DeviceCorpus iot_only;
    iot_only.devices.push_back(make_device("A", DeviceType::IoT, 20, 1));
    iot_only.devices.push_back(make_device("B", DeviceType::IoT, 20, 2));
    const SplitDataset t = split(iot_only, 1);
    CHECK(error_kind([&] { label_for_experiment(t, {Scheme::IotVsNonIot, ""}); }) ==
          ErrorKind::DegenerateLabels);
    CHECK(error_kind([&] { label_for_experiment(t, {Scheme::UnknownDetection, "A"}); }) ==
          ErrorKind::DegenerateLabels);
    DeviceCorpus single;
    single.devices.push_back(make_device("A", DeviceType::IoT, 20, 1));
    CHECK(error_kind([&] { label_for_experiment(split(single, 1), {Scheme::OneVsRestIot, "A"}); }) ==
          ErrorKind::DegenerateLabels);
  }
}

TEST_CASE("scheme numbers") {
  CHECK(scheme_from_number(4) == Scheme::Multiclass);
  CHECK_FALSE(scheme_from_number(0));
  CHECK_FALSE(scheme_from_number(6));
  CHECK(parse_device_type("IoT") == DeviceType::IoT);
  CHECK(parse_device_type("non-iot") == DeviceType::NonIoT);
  CHECK_FALSE(parse_device_type("router"));
}

TEST_CASE("k-fold assignment") {
  const DeviceCorpus c = small_corpus();
  const KFoldAssignment f = kfold_split(c, 10, 3, Scheme::Multiclass);
  const auto sizes = f.fold_sizes();
  const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
  CHECK(*hi - *lo <= 1);
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  CHECK(total == c.total_sessions());
  for (std::size_t d = 0; d < c.devices.size(); ++d) {
    // Per device the folds differ by at most one session too.
    std::vector<std::size_t> per(10, 0);
    for (auto fold : f.fold_of[d]) ++per[fold];
    const auto [a, b] = std::minmax_element(per.begin(), per.end());
    CHECK(*b - *a <= 1);
  }
  CHECK(f.fold_of == kfold_split(c, 10, 3, Scheme::IotVsNonIot).fold_of);

  const SplitDataset fold = fold_dataset(c, f, 4);
  for (std::size_t d = 0; d < c.devices.size(); ++d) {
    const auto& p = fold.devices[d];
    CHECK(p.validation == p.test);
    CHECK(p.train.size() + p.test.size() == c.devices[d].sessions.size());
  }
  CHECK(error_kind([&] { kfold_split(c, 10, 3, Scheme::UnknownDetection); }) ==
        ErrorKind::SchemeNotSupported);
  CHECK(error_kind([&] { kfold_split(c, 1, 3, Scheme::Multiclass); }) == ErrorKind::InvalidArgument);
  CHECK(error_kind([&] { fold_dataset(c, f, 10); }) == ErrorKind::InvalidArgument);
}
