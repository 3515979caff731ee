#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "iotprint/capture.hpp"
#include "iotprint/dataset.hpp"
#include "iotprint/eval.hpp"
#include "iotprint/nn.hpp"
#include "iotprint/transform.hpp"

namespace iotprint::pipeline {

inline constexpr const char* kToolVersion = "iotprint 1.0.0";

// ---------------------------------------------------------------------------
// MAC map

struct MacMapEntry {
  capture::MacAddress mac;
  std::string device;
  dataset::DeviceType type = dataset::DeviceType::IoT;
};

/// Tab-separated "mac<TAB>device name<TAB>iot|non-iot" lines; '#' starts a
/// comment. Several MACs may share one device name. Device order is the order
/// of first appearance.
struct MacMap {
  std::vector<MacMapEntry> entries;

  const MacMapEntry* lookup(const capture::MacAddress& mac) const;
  /// Unique device names with their type, in first-appearance order.
  std::vector<std::pair<std::string, dataset::DeviceType>> devices() const;
};

MacMap parse_mac_map(std::istream& in);
MacMap load_mac_map(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// preprocess

struct PreprocessOptions {
  std::filesystem::path pcap_dir;
  std::filesystem::path mac_map;
  std::filesystem::path out_dir;
  transform::PayloadDirection direction = transform::PayloadDirection::Both;
  bool dump_bin = false;
  std::size_t threads = 0;  // 0 = one per capture file
};

struct DeviceCounts {
  std::string name;
  dataset::DeviceType type = dataset::DeviceType::IoT;
  std::size_t sessions = 0;    // TCP sessions initiated by the device's MACs
  std::size_t empty = 0;       // dropped: no payload
  std::size_t duplicates = 0;  // dropped: identical payload seen earlier
  std::size_t images = 0;      // written to the corpus
};

struct PreprocessSummary {
  std::vector<DeviceCounts> devices;
  std::size_t files = 0;
  std::uint64_t records = 0;
  std::uint64_t tcp_packets = 0;
  capture::SkipCounts skipped;
  std::size_t unmapped_sessions = 0;
  std::vector<std::string> unmapped_macs;
  std::filesystem::path manifest;
};

/// parse -> split sessions -> group by MAC -> extract -> dedupe -> fix length
/// -> one IDX pair per device, plus "corpus.manifest". Throws EmptyCorpus when
/// there are no capture files or no mapped device yields an image.
PreprocessSummary run_preprocess(const PreprocessOptions& options);

/// Per-device table: sessions, dropped and final image counts.
std::string format_preprocess_table(const PreprocessSummary& summary);

struct LoadedCorpus {
  dataset::DeviceCorpus corpus;
  std::string manifest_sha256;
};

/// Reads a corpus directory, verifying every IDX file against the digests in
/// corpus.manifest (Error(ManifestMismatch) on tampering).
LoadedCorpus load_corpus(const std::filesystem::path& corpus_dir);

// ---------------------------------------------------------------------------
// experiment

/// Defaults used by the CLI; every value can be overridden by a flag.
struct Defaults {
  static constexpr std::size_t kMaxEpochs = 25;
  static constexpr std::size_t kMaxEpochsUnknownDetection = 30;
  static constexpr std::size_t kBatchSize = 100;
  static constexpr std::size_t kHidden = 784;
  static constexpr double kInitStddev = 0.05;
  static constexpr double kLearningRate = 1e-3;
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-7;
  static constexpr std::size_t kMinSessions = 1000;
  static constexpr double kThresholdStep = 0.01;
  static constexpr std::uint64_t kSeed = 1;
  static constexpr std::size_t kFolds = 10;
};

struct ExperimentOptions {
  std::filesystem::path corpus_dir;
  std::filesystem::path out_dir;
  dataset::Scheme scheme = dataset::Scheme::IotVsNonIot;
  /// Target (schemes 2-3) or excluded device (scheme 5); "all" rotates over
  /// every IoT device.
  std::string device;
  nn::TrainConfig train;
  std::size_t min_sessions = Defaults::kMinSessions;
  double threshold_step = Defaults::kThresholdStep;
  bool write_splits = true;  // train/validation/test IDX files per run
  bool verbose = false;
};

struct RunOutcome {
  dataset::ExperimentSpec spec;
  std::filesystem::path dir;
  std::size_t best_epoch = 0;
  nn::TrainHistory history;
  eval::EvalReport report;  // scheme 5: includes the Unknown class
  std::optional<eval::ThresholdResult> threshold;
  std::size_t unknown_test = 0;
  std::size_t unknown_detected = 0;  // unknown-test sessions labelled Unknown
};

struct ExperimentOutcome {
  std::vector<RunOutcome> runs;
  std::string summary;  // one row per run
};

ExperimentOutcome run_experiment(const ExperimentOptions& options, std::ostream* log = nullptr);

// ---------------------------------------------------------------------------
// k-fold

struct KFoldOptions {
  std::filesystem::path corpus_dir;
  std::filesystem::path out_dir;
  dataset::Scheme scheme = dataset::Scheme::IotVsNonIot;
  std::string device;
  std::size_t k = Defaults::kFolds;
  nn::TrainConfig train;
  std::size_t min_sessions = Defaults::kMinSessions;
};

struct KFoldOutcome {
  std::vector<double> fold_accuracy;
  double mean_accuracy = 0.0;
  std::string table;
};

/// Trains config.epochs epochs per fold on k-1 folds and evaluates the
/// held-out fold. Scheme 5 is rejected with Error(SchemeNotSupported).
KFoldOutcome run_kfold(const KFoldOptions& options, std::ostream* log = nullptr);

// ---------------------------------------------------------------------------
// predict

struct PredictOptions {
  std::filesystem::path model;
  std::vector<std::filesystem::path> inputs;  // .pcap files or raw .bin payloads
  std::optional<double> threshold;            // overrides the model sidecar
  transform::PayloadDirection direction = transform::PayloadDirection::Both;
};

struct Verdict {
  std::string source;   // file, plus the session key for pcaps
  std::string label;    // device label or "Unknown"
  bool unknown = false;
  double max_posterior = 0.0;
};

/// Sidecar "<model>.json" carries label names, threshold and the model digest;
/// a digest mismatch raises Error(ManifestMismatch).
std::vector<Verdict> run_predict(const PredictOptions& options);

std::filesystem::path model_sidecar_path(const std::filesystem::path& model);

}  // namespace iotprint::pipeline
