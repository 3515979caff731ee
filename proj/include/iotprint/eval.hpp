#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iotprint/nn.hpp"
#include "iotprint/transform.hpp"

namespace iotprint::eval {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;  // true instances of the class
};

struct ThresholdResult {
  double threshold = 0.0;
  double achieved_validation_accuracy = 0.0;
};

/// Rows are actual classes, columns predicted classes.
using Confusion = std::vector<std::vector<std::uint64_t>>;

struct EvalReport {
  std::vector<std::string> labels;
  Confusion confusion;
  std::vector<ClassMetrics> per_class;
  ClassMetrics weighted;  // support-weighted means; support = total
  double accuracy = 0.0;
  std::optional<ThresholdResult> threshold;
  std::vector<std::string> warnings;

  std::uint64_t total() const;
};

/// Builds per-class, weighted and overall metrics. A class with no true or no
/// predicted instances gets 0 for the undefined metric and a warning.
EvalReport report_from_confusion(Confusion confusion, std::vector<std::string> labels);

/// Binary models predict 1 iff p >= 0.5; multiclass models take the argmax
/// (lowest index on ties). Throws Error(LabelOutOfRange).
EvalReport evaluate(const nn::ModelParams& model, const transform::IdxDataset& test);

/// Known label when max(probs) strictly exceeds the threshold, otherwise
/// std::nullopt (Unknown).
std::optional<std::uint8_t> classify_with_threshold(std::span<const double> probs,
                                                    double threshold);

/// Grid points 0, step, 2*step, ..., 1.
std::vector<double> threshold_grid(double step);

/// Picks the grid threshold maximizing accuracy over known instances (correct
/// when mapped to their label) and unknown instances (correct when Unknown).
/// Ties go to the smallest threshold. Throws Error(EmptyPool).
ThresholdResult calibrate_threshold(const nn::Matrix& known_probs,
                                    std::span<const std::uint8_t> known_labels,
                                    const nn::Matrix& unknown_probs, double step = 0.01);

ThresholdResult calibrate_threshold(const nn::ModelParams& model,
                                    const transform::IdxDataset& known_validation,
                                    std::span<const transform::PayloadVector> unknown_pool,
                                    double step = 0.01);

/// (X+1)-class report whose last class is "Unknown".
EvalReport unknown_detection_report(const nn::Matrix& known_probs,
                                    std::span<const std::uint8_t> known_labels,
                                    const nn::Matrix& unknown_probs,
                                    std::vector<std::string> known_names, double threshold);

EvalReport unknown_detection_report(const nn::ModelParams& model, double threshold,
                                    const transform::IdxDataset& known_test,
                                    std::span<const transform::PayloadVector> unknown_test);

/// Plain-text confusion matrix with P/R/F1 columns and a weighted-average row.
std::string format_table(const EvalReport& report);

/// Machine-readable form: confusion, per-class metrics, weighted averages,
/// accuracy and (when present) the threshold.
std::string to_csv(const EvalReport& report);

}  // namespace iotprint::eval
