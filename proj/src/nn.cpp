#include "iotprint/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "iotprint/error.hpp"
#include "iotprint/rng.hpp"

namespace iotprint::nn {

namespace {

constexpr double kProbClamp = 1e-12;
constexpr std::size_t kEvalChunk = 1024;

double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_targets(const ModelParams& p, const Matrix& batch,
                   std::span<const std::uint8_t> targets) {
  if (static_cast<std::size_t>(batch.rows()) != targets.size()) {
    throw Error(ErrorKind::ShapeMismatch, "batch has " + std::to_string(batch.rows()) +
                                              " rows but " + std::to_string(targets.size()) +
                                              " targets");
  }
  const std::size_t classes = p.outputs() == 1 ? 2 : p.outputs();
  for (std::uint8_t t : targets) {
    if (t >= classes) {
      throw Error(ErrorKind::LabelOutOfRange, "target " + std::to_string(t) + " with " +
                                                  std::to_string(p.outputs()) + " outputs");
    }
  }
}

template <typename Tensor>
std::span<double> flat(Tensor& t) {
  return {t.data(), static_cast<std::size_t>(t.size())};
}

template <typename Tensor>
std::span<const double> flat(const Tensor& t) {
  return {t.data(), static_cast<std::size_t>(t.size())};
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>(v >> (8 * i));
  out.write(b, 4);
}

void put_doubles(std::ostream& out, std::span<const double> values) {
  for (double d : values) {
    const auto bits = std::bit_cast<std::uint64_t>(d);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(bits >> (8 * i));
    out.write(b, 8);
  }
}

struct ByteCursor {
  const std::vector<std::uint8_t>& bytes;
  std::size_t offset = 0;
  const std::filesystem::path& path;

  void need(std::size_t n) const {
    if (bytes.size() - offset < n) {
      throw Error(ErrorKind::ShapeMismatch,
                  path.string() + ": file ends at offset " + std::to_string(offset));
    }
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes[offset + i]} << (8 * i);
    offset += 4;
    return v;
  }
  void doubles(std::span<double> out) {
    need(out.size() * 8);
    for (double& d : out) {
      std::uint64_t bits = 0;
      for (int i = 0; i < 8; ++i) bits |= std::uint64_t{bytes[offset + i]} << (8 * i);
      d = std::bit_cast<double>(bits);
      offset += 8;
    }
  }
};

}  // namespace

bool ModelParams::all_finite() const {
  return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite();
}

void ModelParams::validate() const {
  if (static_cast<std::size_t>(w1.cols()) != kInputSize || b1.size() != w1.rows() ||
      w2.cols() != w1.rows() || b2.size() != w2.rows() || w2.rows() == 0 || w1.rows() == 0) {
    throw Error(ErrorKind::ShapeMismatch, "inconsistent layer shapes");
  }
  const bool sigmoid = output_kind == OutputKind::Sigmoid;
  if (sigmoid != (outputs() == 1)) {
    throw Error(ErrorKind::ShapeMismatch, "sigmoid output requires exactly one neuron");
  }
}

bool ModelParams::operator==(const ModelParams& other) const {
  return output_kind == other.output_kind && w1.rows() == other.w1.rows() &&
         w1.cols() == other.w1.cols() && w2.rows() == other.w2.rows() && w1 == other.w1 &&
         b1 == other.b1 && w2 == other.w2 && b2 == other.b2;
}

ModelParams init_params(std::size_t hidden, std::size_t outputs, std::uint64_t seed,
                        double stddev) {
  if (hidden == 0 || outputs == 0) {
    throw Error(ErrorKind::ShapeMismatch, "hidden and output widths must be positive");
  }
  const auto h = static_cast<Eigen::Index>(hidden);
  const auto x = static_cast<Eigen::Index>(outputs);
  ModelParams p;
  p.w1.resize(h, static_cast<Eigen::Index>(kInputSize));
  p.w2.resize(x, h);
  p.b1 = Vector::Zero(h);
  p.b2 = Vector::Zero(x);
  p.output_kind = outputs == 1 ? OutputKind::Sigmoid : OutputKind::Softmax;
  Rng rng(derive_seed(seed, "init"));
  for (double& w : flat(p.w1)) w = rng.normal(0.0, stddev);
  for (double& w : flat(p.w2)) w = rng.normal(0.0, stddev);
  return p;
}

ForwardResult forward(const ModelParams& p, const Matrix& batch) {
  if (static_cast<std::size_t>(batch.cols()) != kInputSize) {
    throw Error(ErrorKind::ShapeMismatch,
                "batch has " + std::to_string(batch.cols()) + " columns, expected 784");
  }
  ForwardResult r;
  r.hidden.noalias() = batch * p.w1.transpose();
  r.hidden.rowwise() += p.b1.transpose();
  r.hidden = r.hidden.cwiseMax(0.0);

  r.output.noalias() = r.hidden * p.w2.transpose();
  r.output.rowwise() += p.b2.transpose();
  if (p.output_kind == OutputKind::Sigmoid) {
    r.output = r.output.unaryExpr([](double z) { return stable_sigmoid(z); });
  } else {
    for (Eigen::Index i = 0; i < r.output.rows(); ++i) {
      auto row = r.output.row(i);
      row.array() -= row.maxCoeff();
      row = row.array().exp().matrix();
      row /= row.sum();
    }
  }
  return r;
}

double loss(const Matrix& output, std::span<const std::uint8_t> targets) {
  if (static_cast<std::size_t>(output.rows()) != targets.size()) {
    throw Error(ErrorKind::ShapeMismatch, "output rows and targets differ");
  }
  if (targets.empty()) return 0.0;
  const Eigen::Index classes = output.cols() == 1 ? 2 : output.cols();
  double total = 0.0;
  for (Eigen::Index i = 0; i < output.rows(); ++i) {
    const std::uint8_t t = targets[static_cast<std::size_t>(i)];
    if (t >= classes) {
      throw Error(ErrorKind::LabelOutOfRange, "target " + std::to_string(t) + " out of range");
    }
    if (output.cols() == 1) {
      const double prob = output(i, 0);
      total -= t == 1 ? std::log(std::max(prob, kProbClamp))
                      : std::log(std::max(1.0 - prob, kProbClamp));
    } else {
      total -= std::log(std::max(output(i, t), kProbClamp));
    }
  }
  return total / static_cast<double>(targets.size());
}

Gradients backward(const ModelParams& p, const Matrix& batch, const ForwardResult& fwd,
                   std::span<const std::uint8_t> targets) {
  check_targets(p, batch, targets);
  const double inv_batch = 1.0 / static_cast<double>(batch.rows());

  // Output pre-activation gradient; both sigmoid+BCE and softmax+CE reduce to
  // (probability - one-hot target) / B.
  Matrix d_out = fwd.output;
  for (Eigen::Index i = 0; i < d_out.rows(); ++i) {
    const std::uint8_t t = targets[static_cast<std::size_t>(i)];
    if (p.output_kind == OutputKind::Sigmoid) {
      d_out(i, 0) -= t;
    } else {
      d_out(i, t) -= 1.0;
    }
  }
  d_out *= inv_batch;

  Gradients g;
  g.output_kind = p.output_kind;
  g.w2.noalias() = d_out.transpose() * fwd.hidden;
  g.b2 = d_out.colwise().sum().transpose();

  Matrix d_hidden = d_out * p.w2;
  d_hidden.array() *= (fwd.hidden.array() > 0.0).cast<double>();
  g.w1.noalias() = d_hidden.transpose() * batch;
  g.b1 = d_hidden.colwise().sum().transpose();
  return g;
}

Gradients backward(const ModelParams& p, const Matrix& batch,
                   std::span<const std::uint8_t> targets) {
  return backward(p, batch, forward(p, batch), targets);
}

void AdamConfig::validate() const {
  if (!(learning_rate > 0) || !(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1) ||
      !(epsilon > 0)) {
    throw Error(ErrorKind::InvalidArgument,
                "Adam requires lr > 0, 0 < beta1, beta2 < 1 and epsilon > 0");
  }
}

void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, const AdamConfig& config, std::uint64_t t) {
  const double bias1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double bias2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = m[i] / bias1;
    const double v_hat = v[i] / bias2;
    params[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

AdamState AdamState::zeros_like(const ModelParams& p) {
  AdamState s;
  for (Gradients* g : {&s.m, &s.v}) {
    g->w1 = Matrix::Zero(p.w1.rows(), p.w1.cols());
    g->b1 = Vector::Zero(p.b1.size());
    g->w2 = Matrix::Zero(p.w2.rows(), p.w2.cols());
    g->b2 = Vector::Zero(p.b2.size());
    g->output_kind = p.output_kind;
  }
  return s;
}

void adam_step(ModelParams& p, const Gradients& g, AdamState& state, const AdamConfig& config) {
  const std::uint64_t t = ++state.step;
  adam_update(flat(p.w1), flat(g.w1), flat(state.m.w1), flat(state.v.w1), config, t);
  adam_update(flat(p.b1), flat(g.b1), flat(state.m.b1), flat(state.v.b1), config, t);
  adam_update(flat(p.w2), flat(g.w2), flat(state.m.w2), flat(state.v.w2), config, t);
  adam_update(flat(p.b2), flat(g.b2), flat(state.m.b2), flat(state.v.b2), config, t);
}

void TrainConfig::validate() const {
  if (epochs == 0) throw Error(ErrorKind::InvalidArgument, "epochs must be positive");
  if (batch_size == 0) throw Error(ErrorKind::InvalidArgument, "batch size must be positive");
  if (hidden == 0) throw Error(ErrorKind::InvalidArgument, "hidden width must be positive");
  if (!(init_stddev > 0)) throw Error(ErrorKind::InvalidArgument, "init stddev must be positive");
  adam.validate();
}

std::size_t TrainHistory::best_epoch() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < epochs.size(); ++i) {
    const EpochStats& a = epochs[i];
    const EpochStats& b = epochs[best];
    if (a.validation_accuracy > b.validation_accuracy ||
        (a.validation_accuracy == b.validation_accuracy && a.validation_loss < b.validation_loss)) {
      best = i;
    }
  }
  return epochs.empty() ? 0 : epochs[best].epoch;
}

bool operator==(const EpochStats& a, const EpochStats& b) {
  return a.epoch == b.epoch && a.train_loss == b.train_loss &&
         a.validation_loss == b.validation_loss && a.validation_accuracy == b.validation_accuracy;
}

Matrix to_input(std::span<const transform::PayloadVector> images) {
  Matrix m(static_cast<Eigen::Index>(images.size()), static_cast<Eigen::Index>(kInputSize));
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t j = 0; j < kInputSize; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = images[i].bytes[j] / 255.0;
    }
  }
  return m;
}

Matrix predict_batch(const ModelParams& p, std::span<const transform::PayloadVector> images) {
  Matrix out(static_cast<Eigen::Index>(images.size()), static_cast<Eigen::Index>(p.outputs()));
  for (std::size_t start = 0; start < images.size(); start += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, images.size() - start);
    const ForwardResult r = forward(p, to_input(images.subspan(start, n)));
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) = r.output;
  }
  return out;
}

std::vector<double> predict(const ModelParams& p, const transform::PayloadVector& image) {
  const Matrix out = predict_batch(p, std::span(&image, 1));
  return {out.data(), out.data() + out.size()};
}

std::uint8_t decide(std::span<const double> probs) {
  if (probs.size() == 1) return probs[0] >= 0.5 ? 1 : 0;
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return static_cast<std::uint8_t>(best);
}

namespace {

struct ValidationScore {
  double loss = 0.0;
  double accuracy = 0.0;
};

ValidationScore score(const ModelParams& p, const transform::IdxDataset& ds) {
  if (ds.size() == 0) return {};
  const Matrix probs = predict_batch(p, ds.images);
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const Vector row = probs.row(i).transpose();
    if (decide(std::span<const double>(row.data(), static_cast<std::size_t>(row.size()))) ==
        ds.labels[static_cast<std::size_t>(i)]) {
      ++correct;
    }
  }
  return {loss(probs, ds.labels), static_cast<double>(correct) / static_cast<double>(ds.size())};
}

template <typename OnEpochEnd>
TrainResult run_training(const transform::IdxDataset& train_set,
                         const transform::IdxDataset& validation_set, std::size_t outputs,
                         const TrainConfig& config, const EpochCallback& on_epoch,
                         OnEpochEnd&& on_epoch_end) {
  config.validate();
  train_set.validate();
  if (train_set.size() == 0) {
    throw Error(ErrorKind::EmptyTrainingSet, "training set has no instances");
  }

  TrainResult result;
  result.params = init_params(config.hidden, outputs, config.seed, config.init_stddev);
  AdamState state = AdamState::zeros_like(result.params);
  Rng shuffle_rng(derive_seed(config.seed, "shuffle"));

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<transform::PayloadVector> batch_images;
  std::vector<std::uint8_t> batch_labels;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      batch_images.clear();
      batch_labels.clear();
      for (std::size_t k = start; k < start + n; ++k) {
        batch_images.push_back(train_set.images[order[k]]);
        batch_labels.push_back(train_set.labels[order[k]]);
      }
      const Matrix x = to_input(batch_images);
      const ForwardResult fwd = forward(result.params, x);
      loss_sum += loss(fwd.output, batch_labels) * static_cast<double>(n);
      const Gradients g = backward(result.params, x, fwd, batch_labels);
      adam_step(result.params, g, state, config.adam);
    }

    const ValidationScore val = score(result.params, validation_set);
    EpochStats stats{epoch, loss_sum / static_cast<double>(order.size()), val.loss, val.accuracy};
    result.history.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
    on_epoch_end(result);
  }
  return result;
}

}  // namespace

TrainResult train(const transform::IdxDataset& train_set,
                  const transform::IdxDataset& validation_set, std::size_t outputs,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  return run_training(train_set, validation_set, outputs, config, on_epoch,
                      [](const TrainResult&) {});
}

SelectedModel train_with_epoch_selection(const transform::IdxDataset& train_set,
                                         const transform::IdxDataset& validation_set,
                                         std::size_t outputs, const TrainConfig& config,
                                         const EpochCallback& on_epoch) {
  SelectedModel selected;
  TrainResult full = run_training(
      train_set, validation_set, outputs, config, on_epoch, [&](const TrainResult& r) {
        if (r.history.best_epoch() == r.history.epochs.back().epoch) {
          selected.params = r.params;
        }
      });
  selected.history = std::move(full.history);
  selected.best_epoch = selected.history.best_epoch();
  return selected;
}

void save_model(const ModelParams& p, const std::filesystem::path& path) {
  p.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot create " + path.string());
  out.write("IOTP", 4);
  put_u32(out, kModelFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(p.hidden()));
  put_u32(out, static_cast<std::uint32_t>(p.outputs()));
  put_u32(out, static_cast<std::uint32_t>(p.output_kind));
  put_doubles(out, flat(p.w1));
  put_doubles(out, flat(p.b1));
  put_doubles(out, flat(p.w2));
  put_doubles(out, flat(p.b2));
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

ModelParams load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  if (bytes.size() < 4 || !std::equal(bytes.begin(), bytes.begin() + 4, "IOTP")) {
    throw Error(ErrorKind::BadModelMagic, path.string() + ": missing IOTP magic");
  }
  ByteCursor cursor{bytes, 4, path};
  const std::uint32_t version = cursor.u32();
  if (version != kModelFormatVersion) {
    throw Error(ErrorKind::VersionMismatch, path.string() + ": format version " +
                                                std::to_string(version) + ", expected " +
                                                std::to_string(kModelFormatVersion));
  }
  const std::uint32_t hidden = cursor.u32();
  const std::uint32_t outputs = cursor.u32();
  const std::uint32_t kind = cursor.u32();
  if (hidden == 0 || outputs == 0 || kind > 1) {
    throw Error(ErrorKind::ShapeMismatch, path.string() + ": bad shape header");
  }
  ModelParams p;
  p.output_kind = static_cast<OutputKind>(kind);
  p.w1.resize(hidden, static_cast<Eigen::Index>(kInputSize));
  p.b1.resize(hidden);
  p.w2.resize(outputs, hidden);
  p.b2.resize(outputs);
  cursor.doubles(flat(p.w1));
  cursor.doubles(flat(p.b1));
  cursor.doubles(flat(p.w2));
  cursor.doubles(flat(p.b2));
  if (cursor.offset != bytes.size()) {
    throw Error(ErrorKind::ShapeMismatch, path.string() + ": trailing bytes after parameters");
  }
  p.validate();
  return p;
}

}  // namespace iotprint::nn
