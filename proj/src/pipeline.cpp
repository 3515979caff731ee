#include "iotprint/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "iotprint/error.hpp"
#include "iotprint/manifest.hpp"

namespace iotprint::pipeline {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string slug(std::string_view name) {
  std::string out;
  for (char c : name) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      out.push_back(static_cast<char>(std::tolower(u)));
    } else if (!out.empty() && out.back() != '-') {
      out.push_back('-');
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out.empty() ? "device" : out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v * 100.0);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot create " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

bool is_capture_file(const fs::path& p) {
  const std::string ext = p.extension().string();
  return ext == ".pcap" || ext == ".cap";
}

std::vector<fs::path> capture_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw Error(ErrorKind::IoFailure, dir.string() + " is not a directory");
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_capture_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// One worker per file up to `threads`; results land at the file's index so
// the merge order never depends on scheduling.
std::vector<capture::ParseResult> parse_all(const std::vector<fs::path>& files,
                                            std::size_t threads) {
  std::vector<capture::ParseResult> results(files.size());
  std::vector<std::exception_ptr> errors(files.size());
  std::atomic<std::size_t> next{0};
  const std::size_t workers =
      std::max<std::size_t>(1, std::min(files.size(), threads == 0 ? files.size() : threads));
  auto work = [&] {
    for (std::size_t i = next++; i < files.size(); i = next++) {
      try {
        results[i] = capture::parse_pcap_file(files[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

std::string scheme_key(dataset::Scheme scheme) {
  return std::to_string(static_cast<int>(scheme));
}

nlohmann::json hyperparameters_json(const nn::TrainConfig& c) {
  return {{"max_epochs", c.epochs},       {"batch_size", c.batch_size},
          {"hidden", c.hidden},           {"init_stddev", c.init_stddev},
          {"learning_rate", c.adam.learning_rate}, {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},        {"epsilon", c.adam.epsilon},
          {"seed", c.seed}};
}

void record_hyperparameters(Manifest& m, const nn::TrainConfig& c) {
  m.set("train.max_epochs", std::to_string(c.epochs));
  m.set("train.batch_size", std::to_string(c.batch_size));
  m.set("train.hidden", std::to_string(c.hidden));
  m.set("train.init_stddev", format_double(c.init_stddev));
  m.set("train.learning_rate", format_double(c.adam.learning_rate));
  m.set("train.beta1", format_double(c.adam.beta1));
  m.set("train.beta2", format_double(c.adam.beta2));
  m.set("train.epsilon", format_double(c.adam.epsilon));
  m.set("train.seed", std::to_string(c.seed));
}

std::string history_csv(const nn::TrainHistory& history) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,train_loss,validation_loss,validation_accuracy\n";
  for (const auto& e : history.epochs) {
    out << e.epoch << ',' << e.train_loss << ',' << e.validation_loss << ','
        << e.validation_accuracy << '\n';
  }
  return out.str();
}

std::vector<std::string> rotation_targets(const dataset::DeviceCorpus& corpus,
                                          const ExperimentOptions& options) {
  using dataset::Scheme;
  if (options.scheme == Scheme::IotVsNonIot || options.scheme == Scheme::Multiclass) {
    return {""};
  }
  if (options.device.empty()) {
    throw Error(ErrorKind::InvalidArgument,
                "scheme " + scheme_key(options.scheme) +
                    " needs a device (--target / --exclude, or \"all\")");
  }
  if (options.device != "all") return {options.device};
  std::vector<std::string> names;
  for (const auto& d : corpus.devices) {
    if (d.type == dataset::DeviceType::IoT) names.push_back(d.name);
  }
  return names;
}

}  // namespace

// ---------------------------------------------------------------------------
// MAC map

const MacMapEntry* MacMap::lookup(const capture::MacAddress& mac) const {
  for (const auto& e : entries) {
    if (e.mac == mac) return &e;
  }
  return nullptr;
}

std::vector<std::pair<std::string, dataset::DeviceType>> MacMap::devices() const {
  std::vector<std::pair<std::string, dataset::DeviceType>> out;
  for (const auto& e : entries) {
    const bool seen = std::any_of(out.begin(), out.end(),
                                  [&](const auto& d) { return d.first == e.device; });
    if (!seen) out.emplace_back(e.device, e.type);
  }
  return out;
}

MacMap parse_mac_map(std::istream& in) {
  MacMap map;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::istringstream split(line);
    std::string field;
    while (std::getline(split, field, '\t')) fields.push_back(trim(field));
    auto fail = [&](const std::string& why) {
      throw Error(ErrorKind::InvalidArgument,
                  "MAC map line " + std::to_string(line_no) + ": " + why);
    };
    if (fields.size() != 3) fail("expected mac<TAB>name<TAB>type");
    const auto mac = capture::MacAddress::parse(fields[0]);
    if (!mac) fail("bad MAC '" + fields[0] + "'");
    if (fields[1].empty()) fail("empty device name");
    const auto type = dataset::parse_device_type(fields[2]);
    if (!type) fail("type must be iot or non-iot, got '" + fields[2] + "'");
    if (const MacMapEntry* existing = map.lookup(*mac)) {
      fail("MAC " + mac->to_string() + " already mapped to " + existing->device);
    }
    for (const auto& e : map.entries) {
      if (e.device == fields[1] && e.type != *type) fail("device '" + fields[1] + "' has two types");
    }
    map.entries.push_back({*mac, fields[1], *type});
  }
  return map;
}

MacMap load_mac_map(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  return parse_mac_map(in);
}

// ---------------------------------------------------------------------------
// preprocess

PreprocessSummary run_preprocess(const PreprocessOptions& options) {
  const MacMap map = load_mac_map(options.mac_map);
  const auto files = capture_files(options.pcap_dir);
  if (files.empty()) {
    throw Error(ErrorKind::EmptyCorpus, "no .pcap files in " + options.pcap_dir.string());
  }

  PreprocessSummary summary;
  summary.files = files.size();
  auto parsed = parse_all(files, options.threads);

  std::vector<capture::RawPacket> packets;
  std::uint64_t index = 0;
  for (auto& result : parsed) {
    summary.records += result.records;
    summary.skipped += result.skipped;
    for (auto& p : result.packets) {
      p.capture_index = index++;
      packets.push_back(std::move(p));
    }
    result.packets.clear();
  }
  summary.tcp_packets = packets.size();

  capture::MacBuckets buckets = capture::group_by_mac(capture::split_sessions(packets));
  packets.clear();
  packets.shrink_to_fit();

  const auto devices = map.devices();
  std::vector<std::vector<capture::SessionRecord>> per_device(devices.size());
  for (auto& [mac, sessions] : buckets) {
    const MacMapEntry* entry = map.lookup(mac);
    if (entry == nullptr) {
      summary.unmapped_sessions += sessions.size();
      summary.unmapped_macs.push_back(mac.to_string());
      continue;
    }
    const auto d = static_cast<std::size_t>(
        std::find_if(devices.begin(), devices.end(),
                     [&](const auto& dev) { return dev.first == entry->device; }) -
        devices.begin());
    auto& target = per_device[d];
    for (auto& s : sessions) target.push_back(std::move(s));
  }

  ensure_dir(options.out_dir);
  Manifest manifest;
  manifest.set("tool", kToolVersion);
  manifest.set("stage", "preprocess");
  manifest.set("direction",
               options.direction == transform::PayloadDirection::Both ? "both" : "initiator");
  manifest.set("input.count", std::to_string(files.size()));
  for (std::size_t i = 0; i < files.size(); ++i) {
    manifest.set("input." + std::to_string(i) + ".file", files[i].filename().string());
    manifest.set("input." + std::to_string(i) + ".sha256", sha256_file(files[i]));
  }
  manifest.set("device.count", std::to_string(devices.size()));

  std::vector<std::string> names;
  for (const auto& d : devices) names.push_back(d.first);

  std::size_t total_images = 0;
  for (std::size_t d = 0; d < devices.size(); ++d) {
    auto& sessions = per_device[d];
    // Several MACs may feed one device; keep overall first-packet order.
    std::stable_sort(sessions.begin(), sessions.end(), [](const auto& a, const auto& b) {
      return a.packets.front().capture_index < b.packets.front().capture_index;
    });
    DeviceCounts counts{devices[d].first, devices[d].second, sessions.size(), 0, 0, 0};

    std::vector<transform::Payload> payloads;
    payloads.reserve(sessions.size());
    for (const auto& s : sessions) payloads.push_back(transform::extract_payload(s, options.direction));
    counts.empty = static_cast<std::size_t>(
        std::count_if(payloads.begin(), payloads.end(), [](const auto& p) { return p.empty(); }));
    auto unique = transform::dedupe_and_filter(std::move(payloads));
    counts.duplicates = counts.sessions - counts.empty - unique.size();
    counts.images = unique.size();
    total_images += unique.size();

    transform::IdxDataset ds;
    ds.label_names = names;
    for (std::size_t i = 0; i < unique.size(); ++i) {
      ds.images.push_back(transform::fix_length(unique[i]));
      ds.labels.push_back(static_cast<std::uint8_t>(d));
    }

    char stem[32];
    std::snprintf(stem, sizeof stem, "device-%02zu", d);
    const fs::path images = options.out_dir / (std::string(stem) + ".images.idx");
    const fs::path labels = options.out_dir / (std::string(stem) + ".labels.idx");
    transform::write_idx(ds, images, labels);

    if (options.dump_bin) {
      const fs::path bin_dir = options.out_dir / "bin" / slug(devices[d].first);
      ensure_dir(bin_dir);
      for (std::size_t i = 0; i < unique.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%06zu.bin", i);
        transform::write_bin(bin_dir / name, unique[i]);
      }
    }

    const std::string key = "device." + std::to_string(d);
    manifest.set(key + ".name", counts.name);
    manifest.set(key + ".type", std::string(dataset::to_string(counts.type)));
    manifest.set(key + ".sessions", std::to_string(counts.sessions));
    manifest.set(key + ".empty", std::to_string(counts.empty));
    manifest.set(key + ".duplicates", std::to_string(counts.duplicates));
    manifest.set(key + ".images", std::to_string(counts.images));
    manifest.set(key + ".images_file", images.filename().string());
    manifest.set(key + ".images_sha256", sha256_file(images));
    manifest.set(key + ".labels_file", labels.filename().string());
    manifest.set(key + ".labels_sha256", sha256_file(labels));
    summary.devices.push_back(counts);
  }
  manifest.set("unmapped.sessions", std::to_string(summary.unmapped_sessions));

  if (total_images == 0) {
    throw Error(ErrorKind::EmptyCorpus, "no mapped device produced a classifiable session");
  }
  summary.manifest = options.out_dir / "corpus.manifest";
  manifest.save(summary.manifest);
  return summary;
}

std::string format_preprocess_table(const PreprocessSummary& summary) {
  std::size_t width = std::string("Device Name").size();
  for (const auto& d : summary.devices) width = std::max(width, d.name.size());
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %-8s %10s %8s %10s %10s\n", static_cast<int>(width),
                "Device Name", "Type", "Sessions", "Empty", "Duplicate", "Images");
  out << buf;
  for (const auto& d : summary.devices) {
    std::snprintf(buf, sizeof buf, "%-*s  %-8s %10zu %8zu %10zu %10zu\n", static_cast<int>(width),
                  d.name.c_str(), std::string(dataset::to_string(d.type)).c_str(), d.sessions,
                  d.empty, d.duplicates, d.images);
    out << buf;
  }
  out << "files=" << summary.files << " records=" << summary.records
      << " tcp_packets=" << summary.tcp_packets << " skipped{udp=" << summary.skipped.udp
      << " other_ip=" << summary.skipped.other_ip_protocol << " ipv6=" << summary.skipped.ipv6
      << " non_ip=" << summary.skipped.non_ip << " fragment=" << summary.skipped.fragment
      << " truncated=" << summary.skipped.truncated
      << " unsupported_link=" << summary.skipped.unsupported_link << "}\n";
  if (summary.unmapped_sessions > 0) {
    out << "unmapped: " << summary.unmapped_sessions << " sessions from "
        << summary.unmapped_macs.size() << " MAC(s):";
    for (const auto& m : summary.unmapped_macs) out << ' ' << m;
    out << '\n';
  }
  return out.str();
}

LoadedCorpus load_corpus(const fs::path& corpus_dir) {
  const fs::path manifest_path = corpus_dir / "corpus.manifest";
  if (!fs::exists(manifest_path)) {
    throw Error(ErrorKind::IoFailure, "no corpus.manifest in " + corpus_dir.string());
  }
  LoadedCorpus loaded;
  loaded.manifest_sha256 = sha256_file(manifest_path);
  const Manifest manifest = Manifest::load(manifest_path);
  const std::size_t count = std::stoul(manifest.require("device.count"));
  for (std::size_t d = 0; d < count; ++d) {
    const std::string key = "device." + std::to_string(d);
    const fs::path images = corpus_dir / manifest.require(key + ".images_file");
    const fs::path labels = corpus_dir / manifest.require(key + ".labels_file");
    verify_file_digest(images, manifest.require(key + ".images_sha256"));
    verify_file_digest(labels, manifest.require(key + ".labels_sha256"));
    const auto type = dataset::parse_device_type(manifest.require(key + ".type"));
    if (!type) throw Error(ErrorKind::ManifestMismatch, key + ".type is invalid");

    transform::IdxDataset ds = transform::read_idx(images, labels);
    if (ds.size() != std::stoul(manifest.require(key + ".images"))) {
      throw Error(ErrorKind::ManifestMismatch, images.string() + " image count disagrees with manifest");
    }
    loaded.corpus.devices.push_back({manifest.require(key + ".name"), *type, std::move(ds.images)});
  }
  return loaded;
}

// ---------------------------------------------------------------------------
// experiment

namespace {

RunOutcome run_single(const dataset::SplitDataset& split, const dataset::ExperimentSpec& spec,
                      const ExperimentOptions& options, const fs::path& dir,
                      const std::string& corpus_sha, std::ostream* log) {
  const dataset::LabeledExperiment labeled = dataset::label_for_experiment(split, spec);
  nn::TrainConfig config = options.train;

  if (log) {
    *log << "== scheme " << scheme_key(spec.scheme) << " (" << dataset::describe(spec.scheme)
         << ")" << (spec.device.empty() ? "" : " device: " + spec.device) << "\n"
         << "   train=" << labeled.train.size() << " validation=" << labeled.validation.size()
         << " test=" << labeled.test.size();
    if (spec.scheme == dataset::Scheme::UnknownDetection) {
      *log << " unknown_validation=" << labeled.unknown_validation.size()
           << " unknown_test=" << labeled.unknown_test.size();
    }
    *log << " outputs=" << labeled.output_width << "\n";
  }
  nn::EpochCallback progress;
  if (log && options.verbose) {
    progress = [log](const nn::EpochStats& s) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "   epoch %3zu  train_loss %.6f  val_loss %.6f  val_acc %.4f\n",
                    s.epoch, s.train_loss, s.validation_loss, s.validation_accuracy);
      *log << buf;
    };
  }
  nn::SelectedModel selected = nn::train_with_epoch_selection(
      labeled.train, labeled.validation, labeled.output_width, config, progress);

  RunOutcome run;
  run.spec = spec;
  run.dir = dir;
  run.best_epoch = selected.best_epoch;
  run.history = selected.history;

  std::vector<std::string> report_labels = labeled.train.label_names;
  if (spec.scheme == dataset::Scheme::UnknownDetection) {
    run.threshold = eval::calibrate_threshold(selected.params, labeled.validation,
                                              labeled.unknown_validation, options.threshold_step);
    run.report = eval::unknown_detection_report(selected.params, run.threshold->threshold,
                                                labeled.test, labeled.unknown_test);
    run.report.threshold = run.threshold;
    run.unknown_test = labeled.unknown_test.size();
    const std::size_t u = run.report.labels.size() - 1;
    run.unknown_detected = run.report.confusion[u][u];
  } else {
    run.report = eval::evaluate(selected.params, labeled.test);
  }
  if (log) {
    *log << "   best epoch " << run.best_epoch << " of " << config.epochs
         << ", test accuracy " << percent(run.report.accuracy) << "%";
    if (run.threshold) {
      char buf[64];
      std::snprintf(buf, sizeof buf, ", threshold %.2f", run.threshold->threshold);
      *log << buf;
    }
    *log << "\n";
  }

  // Artifacts.
  ensure_dir(dir);
  Manifest manifest;
  manifest.set("tool", kToolVersion);
  manifest.set("stage", "experiment");
  manifest.set("input.corpus_manifest_sha256", corpus_sha);
  manifest.set("scheme", scheme_key(spec.scheme));
  manifest.set("device", spec.device);
  manifest.set("split.seed", std::to_string(split.seed));
  std::string order;
  for (std::size_t i = 0; i < split.devices.size(); ++i) {
    const auto& pool = split.devices[i];
    order += (i ? "," : "") + pool.name;
    const std::string key = "split.device." + std::to_string(i);
    manifest.set(key + ".name", pool.name);
    manifest.set(key + ".train", std::to_string(pool.train.size()));
    manifest.set(key + ".validation", std::to_string(pool.validation.size()));
    manifest.set(key + ".test", std::to_string(pool.test.size()));
  }
  manifest.set("split.device_order", order);
  record_hyperparameters(manifest, config);

  if (options.write_splits) {
    auto emit = [&](const transform::IdxDataset& ds, const std::string& name) {
      const fs::path images = dir / (name + ".images.idx");
      const fs::path labels = dir / (name + ".labels.idx");
      transform::write_idx(ds, images, labels);
      manifest.set("file." + name + ".images_sha256", sha256_file(images));
      manifest.set("file." + name + ".labels_sha256", sha256_file(labels));
    };
    emit(labeled.train, "train");
    emit(labeled.validation, "validation");
    emit(labeled.test, "test");
    if (spec.scheme == dataset::Scheme::UnknownDetection) {
      auto unknown_set = [&](const std::vector<transform::PayloadVector>& images) {
        transform::IdxDataset ds;
        ds.label_names = labeled.train.label_names;
        ds.label_names.push_back("Unknown");
        ds.images = images;
        ds.labels.assign(images.size(), static_cast<std::uint8_t>(labeled.output_width));
        return ds;
      };
      emit(unknown_set(labeled.unknown_validation), "unknown-validation");
      emit(unknown_set(labeled.unknown_test), "unknown-test");
    }
  }

  const fs::path model_path = dir / "model.iotp";
  nn::save_model(selected.params, model_path);
  const std::string model_sha = sha256_file(model_path);

  nlohmann::json sidecar = {
      {"format", "iotprint-model"},
      {"tool", kToolVersion},
      {"model_file", model_path.filename().string()},
      {"model_sha256", model_sha},
      {"corpus_manifest_sha256", corpus_sha},
      {"scheme", static_cast<int>(spec.scheme)},
      {"scheme_name", std::string(dataset::describe(spec.scheme))},
      {"device", spec.device},
      {"label_names", labeled.train.label_names},
      {"output_kind", selected.params.output_kind == nn::OutputKind::Sigmoid ? "sigmoid" : "softmax"},
      {"hidden", selected.params.hidden()},
      {"outputs", selected.params.outputs()},
      {"threshold", run.threshold ? nlohmann::json(run.threshold->threshold) : nlohmann::json(nullptr)},
      {"best_epoch", run.best_epoch},
      {"hyperparameters", hyperparameters_json(config)},
      {"test_accuracy", run.report.accuracy},
  };
  write_text(model_sidecar_path(model_path), sidecar.dump(2) + "\n");
  write_text(dir / "history.csv", history_csv(run.history));
  write_text(dir / "report.txt", eval::format_table(run.report));
  write_text(dir / "report.csv", eval::to_csv(run.report));

  manifest.set("model.file", model_path.filename().string());
  manifest.set("model.sha256", model_sha);
  manifest.set("result.best_epoch", std::to_string(run.best_epoch));
  manifest.set("result.test_accuracy", format_double(run.report.accuracy));
  if (run.threshold) {
    manifest.set("result.threshold", format_double(run.threshold->threshold));
    manifest.set("result.calibration_accuracy",
                 format_double(run.threshold->achieved_validation_accuracy));
  }
  manifest.save(dir / "experiment.manifest");
  return run;
}

}  // namespace

ExperimentOutcome run_experiment(const ExperimentOptions& options, std::ostream* log) {
  const LoadedCorpus loaded = load_corpus(options.corpus_dir);
  const dataset::DeviceCorpus corpus =
      dataset::filter_min_sessions(loaded.corpus, options.min_sessions);
  if (log) {
    *log << "corpus: " << corpus.devices.size() << " device(s) with more than "
         << options.min_sessions << " sessions\n";
  }
  const auto targets = rotation_targets(corpus, options);
  const dataset::SplitDataset split = dataset::split(corpus, options.train.seed);

  // Resolve names up front so a bad --target fails before any training.
  for (const auto& target : targets) {
    if (target.empty()) continue;
    const dataset::DevicePool* pool = split.find(target);
    if (pool == nullptr || pool->type != dataset::DeviceType::IoT) {
      throw Error(ErrorKind::UnknownDevice, "'" + target + "' is not an IoT device in the corpus");
    }
  }

  ExperimentOutcome outcome;
  for (const auto& target : targets) {
    const dataset::ExperimentSpec spec{options.scheme, target};
    const fs::path dir = targets.size() > 1 ? options.out_dir / slug(target) : options.out_dir;
    outcome.runs.push_back(run_single(split, spec, options, dir, loaded.manifest_sha256, log));
  }

  std::ostringstream table;
  const bool unknown = options.scheme == dataset::Scheme::UnknownDetection;
  auto row_name = [](const RunOutcome& r) {
    return r.spec.device.empty() ? std::string(dataset::describe(r.spec.scheme)) : r.spec.device;
  };
  std::size_t width = std::string("Unknown device").size();
  for (const auto& r : outcome.runs) width = std::max(width, row_name(r).size());
  const int w = static_cast<int>(width);
  char buf[256];
  if (unknown) {
    std::snprintf(buf, sizeof buf, "%-*s %6s %9s %10s %10s\n", w, "Unknown device", "Epoch",
                  "Threshold", "Test acc %", "Unknown %");
  } else {
    std::snprintf(buf, sizeof buf, "%-*s %6s %10s\n", w, "Classifier", "Epoch", "Test acc %");
  }
  table << buf;
  double sum = 0.0;
  double unknown_sum = 0.0;
  for (const auto& r : outcome.runs) {
    const double detected =
        r.unknown_test == 0 ? 0.0
                            : static_cast<double>(r.unknown_detected) / static_cast<double>(r.unknown_test);
    if (unknown) {
      std::snprintf(buf, sizeof buf, "%-*s %6zu %9.2f %10s %10s\n", w, row_name(r).c_str(),
                    r.best_epoch, r.threshold ? r.threshold->threshold : 0.0,
                    percent(r.report.accuracy).c_str(), percent(detected).c_str());
    } else {
      std::snprintf(buf, sizeof buf, "%-*s %6zu %10s\n", w, row_name(r).c_str(), r.best_epoch,
                    percent(r.report.accuracy).c_str());
    }
    table << buf;
    sum += r.report.accuracy;
    unknown_sum += detected;
  }
  if (outcome.runs.size() > 1) {
    const double n = static_cast<double>(outcome.runs.size());
    if (unknown) {
      std::snprintf(buf, sizeof buf, "%-*s %6s %9s %10s %10s\n", w, "Mean", "", "",
                    percent(sum / n).c_str(), percent(unknown_sum / n).c_str());
    } else {
      std::snprintf(buf, sizeof buf, "%-*s %6s %10s\n", w, "Mean", "", percent(sum / n).c_str());
    }
    table << buf;
  }
  outcome.summary = table.str();
  ensure_dir(options.out_dir);
  write_text(options.out_dir / "summary.txt", outcome.summary);
  return outcome;
}

// ---------------------------------------------------------------------------
// k-fold

KFoldOutcome run_kfold(const KFoldOptions& options, std::ostream* log) {
  const LoadedCorpus loaded = load_corpus(options.corpus_dir);
  const dataset::DeviceCorpus corpus =
      dataset::filter_min_sessions(loaded.corpus, options.min_sessions);
  const dataset::KFoldAssignment folds =
      dataset::kfold_split(corpus, options.k, options.train.seed, options.scheme);
  const dataset::ExperimentSpec spec{options.scheme, options.device};

  KFoldOutcome outcome;
  std::ostringstream csv;
  csv.precision(17);
  csv << "fold,train,test,accuracy\n";
  for (std::size_t f = 0; f < folds.k; ++f) {
    const auto labeled = dataset::label_for_experiment(dataset::fold_dataset(corpus, folds, f), spec);
    const nn::TrainResult trained =
        nn::train(labeled.train, labeled.validation, labeled.output_width, options.train);
    const eval::EvalReport report = eval::evaluate(trained.params, labeled.test);
    outcome.fold_accuracy.push_back(report.accuracy);
    csv << f << ',' << labeled.train.size() << ',' << labeled.test.size() << ',' << report.accuracy
        << '\n';
    if (log) *log << "fold " << f << ": accuracy " << percent(report.accuracy) << "%\n";
  }
  double sum = 0.0;
  for (double a : outcome.fold_accuracy) sum += a;
  outcome.mean_accuracy = sum / static_cast<double>(outcome.fold_accuracy.size());
  csv << "mean,,," << outcome.mean_accuracy << '\n';

  std::ostringstream table;
  table << "Fold  Accuracy %\n";
  for (std::size_t f = 0; f < outcome.fold_accuracy.size(); ++f) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%4zu  %10s\n", f, percent(outcome.fold_accuracy[f]).c_str());
    table << buf;
  }
  table << "Mean  " << percent(outcome.mean_accuracy) << "\n";
  outcome.table = table.str();

  ensure_dir(options.out_dir);
  write_text(options.out_dir / "kfold.csv", csv.str());
  Manifest manifest;
  manifest.set("tool", kToolVersion);
  manifest.set("stage", "kfold");
  manifest.set("input.corpus_manifest_sha256", loaded.manifest_sha256);
  manifest.set("scheme", scheme_key(options.scheme));
  manifest.set("device", options.device);
  manifest.set("k", std::to_string(options.k));
  record_hyperparameters(manifest, options.train);
  manifest.set("result.mean_accuracy", format_double(outcome.mean_accuracy));
  manifest.save(options.out_dir / "kfold.manifest");
  return outcome;
}

// ---------------------------------------------------------------------------
// predict

fs::path model_sidecar_path(const fs::path& model) { return fs::path(model.string() + ".json"); }

std::vector<Verdict> run_predict(const PredictOptions& options) {
  const nn::ModelParams model = nn::load_model(options.model);

  std::vector<std::string> names;
  std::optional<double> threshold;
  const fs::path sidecar_path = model_sidecar_path(options.model);
  if (fs::exists(sidecar_path)) {
    std::ifstream in(sidecar_path);
    nlohmann::json sidecar;
    try {
      sidecar = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::ManifestMismatch, sidecar_path.string() + ": " + e.what());
    }
    verify_file_digest(options.model, sidecar.value("model_sha256", std::string()));
    names = sidecar.value("label_names", std::vector<std::string>{});
    if (sidecar.contains("threshold") && sidecar["threshold"].is_number()) {
      threshold = sidecar["threshold"].get<double>();
    }
  }
  if (options.threshold) threshold = options.threshold;
  const bool softmax = model.output_kind == nn::OutputKind::Softmax;

  auto label_name = [&](std::size_t label) {
    return label < names.size() ? names[label] : std::to_string(label);
  };

  std::vector<Verdict> verdicts;
  auto classify = [&](const std::string& source, const transform::Payload& payload) {
    const auto probs = nn::predict(model, transform::fix_length(payload));
    Verdict v;
    v.source = source;
    v.max_posterior = *std::max_element(probs.begin(), probs.end());
    if (softmax && threshold) {
      const auto label = eval::classify_with_threshold(probs, *threshold);
      v.unknown = !label;
      v.label = label ? label_name(*label) : "Unknown";
    } else {
      v.label = label_name(nn::decide(probs));
    }
    verdicts.push_back(std::move(v));
  };

  for (const fs::path& input : options.inputs) {
    if (is_capture_file(input)) {
      const auto parsed = capture::parse_pcap_file(input);
      auto sessions = capture::split_sessions(parsed.packets);
      std::vector<const capture::SessionRecord*> ordered;
      for (const auto& [key, record] : sessions) ordered.push_back(&record);
      std::sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
        return a->packets.front().capture_index < b->packets.front().capture_index;
      });
      for (const auto* session : ordered) {
        const auto payload = transform::extract_payload(*session, options.direction);
        if (payload.empty()) continue;
        classify(input.filename().string() + " " + session->key.to_string(), payload);
      }
    } else {
      std::ifstream in(input, std::ios::binary);
      if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + input.string());
      const transform::Payload payload((std::istreambuf_iterator<char>(in)),
                                       std::istreambuf_iterator<char>());
      if (payload.empty()) continue;
      classify(input.filename().string(), payload);
    }
  }
  return verdicts;
}

}  // namespace iotprint::pipeline
