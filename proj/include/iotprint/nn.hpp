#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "iotprint/dataset.hpp"
#include "iotprint/transform.hpp"

namespace iotprint::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr std::size_t kInputSize = transform::kVectorSize;

enum class OutputKind : std::uint32_t { Sigmoid = 0, Softmax = 1 };

/// Two dense layers: input(784) -> hidden(H, ReLU) -> output(X).
/// A single output neuron uses a sigmoid, wider outputs a softmax.
struct ModelParams {
  Matrix w1;  // H x 784
  Vector b1;  // H
  Matrix w2;  // X x H
  Vector b2;  // X
  OutputKind output_kind = OutputKind::Sigmoid;

  std::size_t hidden() const { return static_cast<std::size_t>(w1.rows()); }
  std::size_t outputs() const { return static_cast<std::size_t>(w2.rows()); }
  bool all_finite() const;
  /// Throws ShapeMismatch if the layer shapes or output kind disagree.
  void validate() const;

  bool operator==(const ModelParams& other) const;
};

/// Same layout as ModelParams; output_kind is unused.
using Gradients = ModelParams;

/// Weights ~ N(0, stddev^2), biases zero. Deterministic in `seed`.
ModelParams init_params(std::size_t hidden, std::size_t outputs, std::uint64_t seed,
                        double stddev = 0.05);

struct ForwardResult {
  Matrix hidden;  // B x H, post-ReLU
  Matrix output;  // B x X, probabilities
};

ForwardResult forward(const ModelParams& p, const Matrix& batch);

/// Mean cross-entropy; binary form for a single sigmoid output. Probabilities
/// are clamped to [1e-12, 1 - 1e-12] before the log.
double loss(const Matrix& output, std::span<const std::uint8_t> targets);

/// Gradients of loss(forward(p, batch).output, targets). ReLU'(0) = 0.
Gradients backward(const ModelParams& p, const Matrix& batch,
                   std::span<const std::uint8_t> targets);
Gradients backward(const ModelParams& p, const Matrix& batch, const ForwardResult& fwd,
                   std::span<const std::uint8_t> targets);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;

  void validate() const;
};

/// One bias-corrected Adam update of `params` in place; t >= 1 is the step count.
void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, const AdamConfig& config, std::uint64_t t);

struct AdamState {
  Gradients m;
  Gradients v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const ModelParams& p);
};

/// Advances state.step and applies adam_update to every tensor.
void adam_step(ModelParams& p, const Gradients& g, AdamState& state, const AdamConfig& config);

struct TrainConfig {
  std::size_t epochs = 25;
  std::size_t batch_size = 100;
  std::size_t hidden = 784;
  double init_stddev = 0.05;
  AdamConfig adam;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double validation_accuracy = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;

  /// 1-based epoch with the highest validation accuracy; ties go to the lower
  /// validation loss, then to the earlier epoch.
  std::size_t best_epoch() const;
  bool operator==(const TrainHistory&) const = default;
};

bool operator==(const EpochStats& a, const EpochStats& b);

using EpochCallback = std::function<void(const EpochStats&)>;

struct TrainResult {
  ModelParams params;
  TrainHistory history;
};

/// Mini-batch Adam training. Each epoch visits the training set in a fresh
/// seeded permutation; the final batch may be short. Validation loss and
/// accuracy are recorded after every epoch.
TrainResult train(const transform::IdxDataset& train_set,
                  const transform::IdxDataset& validation_set, std::size_t outputs,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

struct SelectedModel {
  ModelParams params;          // parameters after best_epoch epochs
  TrainHistory history;        // the full max-epoch run
  std::size_t best_epoch = 0;  // 1-based
};

/// Runs config.epochs epochs and keeps the parameters of the best epoch.
/// Training is deterministic, so this equals a fresh run of best_epoch epochs.
SelectedModel train_with_epoch_selection(const transform::IdxDataset& train_set,
                                         const transform::IdxDataset& validation_set,
                                         std::size_t outputs, const TrainConfig& config,
                                         const EpochCallback& on_epoch = {});

/// Scales bytes into [0, 1] (x / 255), one row per image.
Matrix to_input(std::span<const transform::PayloadVector> images);

std::vector<double> predict(const ModelParams& p, const transform::PayloadVector& image);
Matrix predict_batch(const ModelParams& p, std::span<const transform::PayloadVector> images);

/// Decision for one probability row: sigmoid -> (p >= 0.5), softmax -> argmax
/// with the lowest index winning ties.
std::uint8_t decide(std::span<const double> probs);

/// Binary container: "IOTP", u32 version, u32 H, u32 X, u32 output_kind, then
/// little-endian doubles for W1 (row-major), b1, W2 (row-major), b2.
inline constexpr std::uint32_t kModelFormatVersion = 1;
void save_model(const ModelParams& p, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);

}  // namespace iotprint::nn
