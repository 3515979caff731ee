#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "iotprint/transform.hpp"

namespace iotprint::dataset {

using transform::IdxDataset;
using transform::PayloadVector;

enum class DeviceType { IoT, NonIoT };

std::string_view to_string(DeviceType type);
std::optional<DeviceType> parse_device_type(std::string_view text);

struct Device {
  std::string name;
  DeviceType type = DeviceType::IoT;
  std::vector<PayloadVector> sessions;
};

/// Devices in a fixed order; that order defines multiclass label numbering.
struct DeviceCorpus {
  std::vector<Device> devices;

  const Device* find(std::string_view name) const;
  std::size_t total_sessions() const;
};

/// Keeps devices with strictly more than `min_sessions` sessions.
/// Throws Error(EmptyCorpus) if none remain.
DeviceCorpus filter_min_sessions(DeviceCorpus corpus, std::size_t min_sessions);

enum class Scheme {
  IotVsNonIot = 1,
  OneVsRestIot = 2,
  OneVsAll = 3,
  Multiclass = 4,
  UnknownDetection = 5,
};

std::optional<Scheme> scheme_from_number(int number);
std::string_view describe(Scheme scheme);

struct ExperimentSpec {
  Scheme scheme = Scheme::IotVsNonIot;
  /// Target device for schemes 2-3, excluded device for scheme 5.
  std::string device;
};

/// Number of output neurons: 1 for the binary schemes, one per label otherwise.
std::size_t output_width(const ExperimentSpec& spec, const DeviceCorpus& corpus);

/// Rounds n/10 to the nearest integer with exact halves rounded down.
constexpr std::size_t tenth_rounded(std::size_t n) { return (n + 4) / 10; }

struct PartSizes {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

/// Validation gets 10% of n, test 10% of what remains, train the rest.
constexpr PartSizes split_sizes(std::size_t n) {
  const std::size_t validation = tenth_rounded(n);
  const std::size_t test = tenth_rounded(n - validation);
  return {n - validation - test, validation, test};
}

struct DevicePool {
  std::string name;
  DeviceType type = DeviceType::IoT;
  std::vector<PayloadVector> train;
  std::vector<PayloadVector> validation;
  std::vector<PayloadVector> test;
};

enum class Part { Train, Validation, Test };

struct SplitDataset {
  std::uint64_t seed = 0;
  std::vector<DevicePool> devices;

  const DevicePool* find(std::string_view name) const;
  /// One part with label = device index and label names = device names.
  IdxDataset part(Part which) const;
};

/// Per-device stratified random split, deterministic in `seed`.
SplitDataset split(const DeviceCorpus& corpus, std::uint64_t seed);

/// A split relabelled for one experiment scheme.
struct LabeledExperiment {
  ExperimentSpec spec;
  std::size_t output_width = 1;
  IdxDataset train;
  IdxDataset validation;
  IdxDataset test;
  /// Scheme 5 only: the excluded device's validation and test sessions.
  std::vector<PayloadVector> unknown_validation;
  std::vector<PayloadVector> unknown_test;
};

/// Throws Error(UnknownDevice) for a missing or non-IoT target and
/// Error(DegenerateLabels) when the scheme would produce fewer than two classes.
LabeledExperiment label_for_experiment(const SplitDataset& split, const ExperimentSpec& spec);

struct KFoldAssignment {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  /// fold_of[d][s] is the fold of session s of device d.
  std::vector<std::vector<std::uint32_t>> fold_of;

  std::vector<std::size_t> fold_sizes() const;
};

/// Per-device stratified partition into k near-equal folds. Scheme 5 is
/// rejected with Error(SchemeNotSupported): its threshold needs a fixed
/// validation pool.
KFoldAssignment kfold_split(const DeviceCorpus& corpus, std::size_t k, std::uint64_t seed,
                            Scheme scheme);

/// Train on every fold but `held_out`; validation and test are both the
/// held-out fold.
SplitDataset fold_dataset(const DeviceCorpus& corpus, const KFoldAssignment& folds,
                          std::size_t held_out);

}  // namespace iotprint::dataset
