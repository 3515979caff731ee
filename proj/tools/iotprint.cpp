// iotprint: device-type identification from TCP session payloads.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "iotprint/error.hpp"
#include "iotprint/fixtures.hpp"
#include "iotprint/pipeline.hpp"

namespace fs = std::filesystem;
using iotprint::Error;
using iotprint::ErrorKind;
using Defaults = iotprint::pipeline::Defaults;

namespace {

constexpr int kExitIo = 1;
constexpr int kExitUsage = 2;

struct TrainFlags {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::size_t batch_size = Defaults::kBatchSize;
  std::size_t hidden = Defaults::kHidden;
  double lr = Defaults::kLearningRate;
  std::size_t min_sessions = Defaults::kMinSessions;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--seed", f.seed, "RNG seed (falls back to $IOTPRINT_SEED, then 1)");
  cmd->add_option("--epochs", f.epochs, "maximum epochs (default 25; 30 for scheme 5)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--batch-size", f.batch_size, "mini-batch size")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--hidden", f.hidden, "hidden layer width")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--lr", f.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--min-sessions", f.min_sessions,
                  "drop devices with this many sessions or fewer")
      ->capture_default_str();
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("IOTPRINT_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      const unsigned long long value = std::stoull(env, &used);
      if (used == std::string(env).size()) return value;
    } catch (const std::exception&) {
    }
    throw Error(ErrorKind::InvalidArgument, std::string("IOTPRINT_SEED is not an integer: ") + env);
  }
  return Defaults::kSeed;
}

iotprint::nn::TrainConfig train_config(const TrainFlags& f, iotprint::dataset::Scheme scheme) {
  iotprint::nn::TrainConfig c;
  c.seed = resolve_seed(f.seed);
  c.epochs = f.epochs.value_or(scheme == iotprint::dataset::Scheme::UnknownDetection
                                   ? Defaults::kMaxEpochsUnknownDetection
                                   : Defaults::kMaxEpochs);
  c.batch_size = f.batch_size;
  c.hidden = f.hidden;
  c.init_stddev = Defaults::kInitStddev;
  c.adam.learning_rate = f.lr;
  c.adam.beta1 = Defaults::kBeta1;
  c.adam.beta2 = Defaults::kBeta2;
  c.adam.epsilon = Defaults::kEpsilon;
  c.validate();
  return c;
}

iotprint::dataset::Scheme to_scheme(int number) {
  const auto scheme = iotprint::dataset::scheme_from_number(number);
  if (!scheme) throw Error(ErrorKind::InvalidArgument, "--scheme must be 1..5");
  return *scheme;
}

// --target is for schemes 2-3, --exclude for scheme 5.
std::string pick_device(iotprint::dataset::Scheme scheme, const std::string& target,
                        const std::string& exclude) {
  using iotprint::dataset::Scheme;
  if (scheme == Scheme::UnknownDetection) {
    if (!target.empty()) throw Error(ErrorKind::InvalidArgument, "scheme 5 takes --exclude, not --target");
    return exclude;
  }
  if (!exclude.empty()) throw Error(ErrorKind::InvalidArgument, "--exclude only applies to scheme 5");
  if (scheme == Scheme::IotVsNonIot || scheme == Scheme::Multiclass) {
    if (!target.empty()) throw Error(ErrorKind::InvalidArgument, "this scheme takes no --target");
  }
  return target;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Identify IoT device types from TCP session payloads"};
  app.set_version_flag("--version", iotprint::pipeline::kToolVersion);
  app.require_subcommand(1);

  // preprocess
  iotprint::pipeline::PreprocessOptions pre;
  bool initiator_only = false;
  auto* preprocess = app.add_subcommand("preprocess", "captures -> per-device IDX corpus");
  preprocess->add_option("pcap_dir", pre.pcap_dir, "directory of .pcap files")->required();
  preprocess->add_option("mac_map", pre.mac_map, "TSV: mac, device name, iot|non-iot")->required();
  preprocess->add_option("out_dir", pre.out_dir, "corpus output directory")->required();
  preprocess->add_flag("--initiator-only", initiator_only,
                       "use only bytes sent by the session initiator");
  preprocess->add_flag("--dump-bin", pre.dump_bin, "also write each payload as a .bin file");
  preprocess->add_option("--threads", pre.threads, "parser threads (0 = one per file)");

  // experiment
  iotprint::pipeline::ExperimentOptions exp;
  TrainFlags exp_train;
  int exp_scheme = 1;
  std::string exp_target, exp_exclude;
  bool no_splits = false;
  auto* experiment = app.add_subcommand("experiment", "train, select epoch, evaluate");
  experiment->add_option("corpus_dir", exp.corpus_dir, "output of preprocess")->required();
  experiment->add_option("out_dir", exp.out_dir, "where models and reports go")->required();
  experiment->add_option("--scheme", exp_scheme, "labeling scheme 1..5")->capture_default_str();
  experiment->add_option("--target", exp_target, "target device for schemes 2-3, or \"all\"");
  experiment->add_option("--exclude", exp_exclude, "held-out device for scheme 5, or \"all\"");
  experiment->add_option("--threshold-grid", exp.threshold_step, "threshold grid step")
      ->capture_default_str();
  experiment->add_flag("--no-splits", no_splits, "skip writing train/validation/test IDX files");
  experiment->add_flag("-v,--verbose", exp.verbose, "print every epoch");
  add_train_flags(experiment, exp_train);

  // kfold
  iotprint::pipeline::KFoldOptions kf;
  TrainFlags kf_train;
  int kf_scheme = 1;
  std::string kf_target;
  auto* kfold = app.add_subcommand("kfold", "k-fold cross-validation (schemes 1-4)");
  kfold->add_option("corpus_dir", kf.corpus_dir, "output of preprocess")->required();
  kfold->add_option("out_dir", kf.out_dir, "where fold results go")->required();
  kfold->add_option("--scheme", kf_scheme, "labeling scheme 1..4")->capture_default_str();
  kfold->add_option("--target", kf_target, "target device for schemes 2-3");
  kfold->add_option("-k,--folds", kf.k, "number of folds")->capture_default_str();
  add_train_flags(kfold, kf_train);

  // predict
  iotprint::pipeline::PredictOptions pred;
  std::optional<double> pred_threshold;
  bool pred_initiator_only = false;
  auto* predict = app.add_subcommand("predict", "label sessions with a trained model");
  predict->add_option("model", pred.model, "model file (model.iotp)")->required();
  predict->add_option("inputs", pred.inputs, ".pcap captures or raw .bin payloads")->required();
  predict->add_option("--threshold", pred_threshold, "posterior threshold for Unknown");
  predict->add_flag("--initiator-only", pred_initiator_only,
                    "use only bytes sent by the session initiator");

  // make-fixtures
  fs::path fx_out, fx_spec;
  std::size_t fx_sessions = 1200;
  std::size_t fx_devices = 4;
  std::optional<std::uint64_t> fx_seed;
  auto* make_fixtures = app.add_subcommand("make-fixtures", "write synthetic device captures");
  make_fixtures->add_option("out_dir", fx_out, "output directory")->required();
  make_fixtures->add_option("--spec", fx_spec, "JSON fixture description")->check(CLI::ExistingFile);
  make_fixtures->add_option("--sessions", fx_sessions, "sessions per built-in device")
      ->capture_default_str();
  make_fixtures->add_option("--devices", fx_devices, "number of built-in devices (1-4)")
      ->capture_default_str()
      ->check(CLI::Range(1, 4));
  make_fixtures->add_option("--seed", fx_seed, "RNG seed (falls back to $IOTPRINT_SEED, then 1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (preprocess->parsed()) {
      pre.direction = initiator_only ? iotprint::transform::PayloadDirection::InitiatorOnly
                                     : iotprint::transform::PayloadDirection::Both;
      const auto summary = iotprint::pipeline::run_preprocess(pre);
      std::cout << iotprint::pipeline::format_preprocess_table(summary)
                << "manifest: " << summary.manifest.string() << "\n";
    } else if (experiment->parsed()) {
      exp.scheme = to_scheme(exp_scheme);
      exp.device = pick_device(exp.scheme, exp_target, exp_exclude);
      exp.train = train_config(exp_train, exp.scheme);
      exp.min_sessions = exp_train.min_sessions;
      exp.write_splits = !no_splits;
      if (!(exp.threshold_step > 0.0 && exp.threshold_step <= 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "--threshold-grid must be in (0, 1]");
      }
      const auto outcome = iotprint::pipeline::run_experiment(exp, &std::cout);
      std::cout << "\n" << outcome.summary;
      if (outcome.runs.size() == 1) std::cout << "\n" << iotprint::eval::format_table(outcome.runs[0].report);
    } else if (kfold->parsed()) {
      kf.scheme = to_scheme(kf_scheme);
      kf.device = pick_device(kf.scheme, kf_target, "");
      kf.train = train_config(kf_train, kf.scheme);
      kf.min_sessions = kf_train.min_sessions;
      const auto outcome = iotprint::pipeline::run_kfold(kf, &std::cout);
      std::cout << "\n" << outcome.table;
    } else if (predict->parsed()) {
      pred.threshold = pred_threshold;
      pred.direction = pred_initiator_only ? iotprint::transform::PayloadDirection::InitiatorOnly
                                           : iotprint::transform::PayloadDirection::Both;
      const auto verdicts = iotprint::pipeline::run_predict(pred);
      if (verdicts.empty()) {
        std::cout << "no classifiable sessions\n";
      }
      for (const auto& v : verdicts) {
        std::printf("%s\t%s\t%.6f\n", v.source.c_str(), v.label.c_str(), v.max_posterior);
      }
    } else if (make_fixtures->parsed()) {
      auto spec = fx_spec.empty() ? iotprint::fixtures::default_fixture_spec(fx_sessions)
                                  : iotprint::fixtures::load_fixture_spec(fx_spec);
      if (fx_spec.empty()) spec.devices.resize(fx_devices);
      const auto out = iotprint::fixtures::write_fixtures(spec, fx_out, resolve_seed(fx_seed));
      for (const auto& p : out.pcaps) std::cout << p.string() << "\n";
      std::cout << out.mac_map.string() << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_usage_error() ? kExitUsage : kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return 0;
}
