#include "iotprint/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

#include "iotprint/error.hpp"
#include "iotprint/rng.hpp"

namespace iotprint::dataset {

std::string_view to_string(DeviceType type) {
  return type == DeviceType::IoT ? "iot" : "non-iot";
}

std::optional<DeviceType> parse_device_type(std::string_view text) {
  std::string lowered(text);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lowered == "iot") return DeviceType::IoT;
  if (lowered == "non-iot" || lowered == "noniot" || lowered == "non_iot") return DeviceType::NonIoT;
  return std::nullopt;
}

const Device* DeviceCorpus::find(std::string_view name) const {
  for (const Device& d : devices) {
    if (d.name == name) return &d;
  }
  return nullptr;
}

std::size_t DeviceCorpus::total_sessions() const {
  std::size_t total = 0;
  for (const Device& d : devices) total += d.sessions.size();
  return total;
}

DeviceCorpus filter_min_sessions(DeviceCorpus corpus, std::size_t min_sessions) {
  std::erase_if(corpus.devices,
                [&](const Device& d) { return d.sessions.size() <= min_sessions; });
  if (corpus.devices.empty()) {
    throw Error(ErrorKind::EmptyCorpus, "no device has more than " +
                                            std::to_string(min_sessions) + " sessions");
  }
  return corpus;
}

std::optional<Scheme> scheme_from_number(int number) {
  if (number < 1 || number > 5) return std::nullopt;
  return static_cast<Scheme>(number);
}

std::string_view describe(Scheme scheme) {
  switch (scheme) {
    case Scheme::IotVsNonIot: return "IoT vs non-IoT";
    case Scheme::OneVsRestIot: return "one IoT device vs other IoT devices";
    case Scheme::OneVsAll: return "one IoT device vs all other traffic";
    case Scheme::Multiclass: return "multiclass (non-IoT + each IoT device)";
    case Scheme::UnknownDetection: return "unknown-device detection";
  }
  return "?";
}

namespace {

std::size_t count_type(const std::vector<DevicePool>& pools, DeviceType type) {
  return static_cast<std::size_t>(std::count_if(
      pools.begin(), pools.end(), [&](const DevicePool& p) { return p.type == type; }));
}

std::vector<DevicePool> pools_without_sessions(const DeviceCorpus& corpus) {
  std::vector<DevicePool> pools;
  for (const Device& d : corpus.devices) pools.push_back({d.name, d.type, {}, {}, {}});
  return pools;
}

const DevicePool& require_iot_device(const SplitDataset& split, const std::string& name) {
  const DevicePool* pool = split.find(name);
  if (pool == nullptr) {
    throw Error(ErrorKind::UnknownDevice, "device '" + name + "' is not in the corpus");
  }
  if (pool->type != DeviceType::IoT) {
    throw Error(ErrorKind::UnknownDevice, "device '" + name + "' is not an IoT device");
  }
  return *pool;
}

void append(IdxDataset& ds, const std::vector<PayloadVector>& images, std::uint8_t label) {
  ds.images.insert(ds.images.end(), images.begin(), images.end());
  ds.labels.insert(ds.labels.end(), images.size(), label);
}

void append_pool(LabeledExperiment& out, const DevicePool& pool, std::uint8_t label) {
  append(out.train, pool.train, label);
  append(out.validation, pool.validation, label);
  append(out.test, pool.test, label);
}

}  // namespace

std::size_t output_width(const ExperimentSpec& spec, const DeviceCorpus& corpus) {
  std::size_t iot = 0;
  for (const Device& d : corpus.devices) iot += d.type == DeviceType::IoT ? 1 : 0;
  switch (spec.scheme) {
    case Scheme::IotVsNonIot:
    case Scheme::OneVsRestIot:
    case Scheme::OneVsAll:
      return 1;
    case Scheme::Multiclass:
      return iot + 1;
    case Scheme::UnknownDetection:
      return iot == 0 ? 0 : iot - 1;
  }
  return 1;
}

const DevicePool* SplitDataset::find(std::string_view name) const {
  for (const DevicePool& p : devices) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

IdxDataset SplitDataset::part(Part which) const {
  IdxDataset ds;
  for (std::size_t i = 0; i < devices.size(); ++i) {
    const DevicePool& pool = devices[i];
    ds.label_names.push_back(pool.name);
    const auto& images = which == Part::Train        ? pool.train
                         : which == Part::Validation ? pool.validation
                                                     : pool.test;
    append(ds, images, static_cast<std::uint8_t>(i));
  }
  return ds;
}

SplitDataset split(const DeviceCorpus& corpus, std::uint64_t seed) {
  SplitDataset out;
  out.seed = seed;
  out.devices = pools_without_sessions(corpus);
  for (std::size_t d = 0; d < corpus.devices.size(); ++d) {
    const Device& device = corpus.devices[d];
    const std::size_t n = device.sessions.size();
    const PartSizes sizes = split_sizes(n);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "split/" + device.name));
    rng.shuffle(std::span<std::size_t>(order));

    // Selected members keep corpus order inside each part.
    auto take = [&](std::size_t begin, std::size_t count) {
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                   order.begin() + static_cast<std::ptrdiff_t>(begin + count));
      std::sort(idx.begin(), idx.end());
      std::vector<PayloadVector> images;
      images.reserve(count);
      for (std::size_t i : idx) images.push_back(device.sessions[i]);
      return images;
    };
    DevicePool& pool = out.devices[d];
    pool.validation = take(0, sizes.validation);
    pool.test = take(sizes.validation, sizes.test);
    pool.train = take(sizes.validation + sizes.test, sizes.train);
  }
  return out;
}

LabeledExperiment label_for_experiment(const SplitDataset& split, const ExperimentSpec& spec) {
  LabeledExperiment out;
  out.spec = spec;
  const auto& pools = split.devices;

  switch (spec.scheme) {
    case Scheme::IotVsNonIot: {
      if (count_type(pools, DeviceType::IoT) == 0 || count_type(pools, DeviceType::NonIoT) == 0) {
        throw Error(ErrorKind::DegenerateLabels,
                    "IoT vs non-IoT needs at least one device of each type");
      }
      for (const DevicePool& p : pools) append_pool(out, p, p.type == DeviceType::IoT ? 1 : 0);
      out.output_width = 1;
      out.train.label_names = {"Non-IoT devices", "IoT devices"};
      break;
    }
    case Scheme::OneVsRestIot:
    case Scheme::OneVsAll: {
      const DevicePool& target = require_iot_device(split, spec.device);
      const bool iot_only = spec.scheme == Scheme::OneVsRestIot;
      std::size_t others = 0;
      for (const DevicePool& p : pools) {
        if (iot_only && p.type != DeviceType::IoT) continue;
        const bool is_target = &p == &target;
        others += is_target ? 0 : 1;
        append_pool(out, p, is_target ? 1 : 0);
      }
      if (others == 0) {
        throw Error(ErrorKind::DegenerateLabels,
                    "no devices other than '" + spec.device + "' to contrast with");
      }
      out.output_width = 1;
      out.train.label_names = {iot_only ? "Other IoT devices" : "Other devices", target.name};
      break;
    }
    case Scheme::Multiclass: {
      const std::size_t iot = count_type(pools, DeviceType::IoT);
      if (count_type(pools, DeviceType::NonIoT) == 0 || iot == 0) {
        throw Error(ErrorKind::DegenerateLabels,
                    "multiclass needs non-IoT traffic and at least one IoT device");
      }
      if (iot + 1 > 256) throw Error(ErrorKind::DegenerateLabels, "more than 256 labels");
      out.train.label_names = {"Non-IoT devices"};
      std::uint8_t next = 1;
      for (const DevicePool& p : pools) {
        if (p.type == DeviceType::NonIoT) {
          append_pool(out, p, 0);
        } else {
          out.train.label_names.push_back(p.name);
          append_pool(out, p, next++);
        }
      }
      out.output_width = iot + 1;
      break;
    }
    case Scheme::UnknownDetection: {
      const DevicePool& excluded = require_iot_device(split, spec.device);
      std::uint8_t next = 0;
      for (const DevicePool& p : pools) {
        if (p.type != DeviceType::IoT || &p == &excluded) continue;
        out.train.label_names.push_back(p.name);
        append_pool(out, p, next++);
      }
      if (next < 2) {
        throw Error(ErrorKind::DegenerateLabels,
                    "unknown-device detection needs at least two known IoT devices");
      }
      out.unknown_validation = excluded.validation;
      out.unknown_test = excluded.test;
      out.output_width = next;
      break;
    }
  }
  out.validation.label_names = out.train.label_names;
  out.test.label_names = out.train.label_names;
  return out;
}

std::vector<std::size_t> KFoldAssignment::fold_sizes() const {
  std::vector<std::size_t> sizes(k, 0);
  for (const auto& device : fold_of) {
    for (std::uint32_t f : device) ++sizes[f];
  }
  return sizes;
}

KFoldAssignment kfold_split(const DeviceCorpus& corpus, std::size_t k, std::uint64_t seed,
                            Scheme scheme) {
  if (scheme == Scheme::UnknownDetection) {
    throw Error(ErrorKind::SchemeNotSupported,
                "k-fold cross-validation is not available for unknown-device detection");
  }
  if (k < 2) throw Error(ErrorKind::InvalidArgument, "k must be at least 2");

  KFoldAssignment out;
  out.k = k;
  out.seed = seed;
  std::size_t offset = 0;
  for (const Device& device : corpus.devices) {
    const std::size_t n = device.sessions.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "kfold/" + device.name));
    rng.shuffle(std::span<std::size_t>(order));

    std::vector<std::uint32_t> folds(n);
    for (std::size_t pos = 0; pos < n; ++pos) {
      folds[order[pos]] = static_cast<std::uint32_t>((pos + offset) % k);
    }
    // Rotating the start keeps the global fold sizes within one of each other.
    offset = (offset + n) % k;
    out.fold_of.push_back(std::move(folds));
  }
  return out;
}

SplitDataset fold_dataset(const DeviceCorpus& corpus, const KFoldAssignment& folds,
                          std::size_t held_out) {
  if (held_out >= folds.k) {
    throw Error(ErrorKind::InvalidArgument, "fold " + std::to_string(held_out) +
                                                " out of range for k=" + std::to_string(folds.k));
  }
  if (folds.fold_of.size() != corpus.devices.size()) {
    throw Error(ErrorKind::CountMismatch, "fold assignment does not match corpus");
  }
  SplitDataset out;
  out.seed = folds.seed;
  out.devices = pools_without_sessions(corpus);
  for (std::size_t d = 0; d < corpus.devices.size(); ++d) {
    const auto& sessions = corpus.devices[d].sessions;
    for (std::size_t s = 0; s < sessions.size(); ++s) {
      if (folds.fold_of[d][s] == held_out) {
        out.devices[d].validation.push_back(sessions[s]);
        out.devices[d].test.push_back(sessions[s]);
      } else {
        out.devices[d].train.push_back(sessions[s]);
      }
    }
  }
  return out;
}

}  // namespace iotprint::dataset
