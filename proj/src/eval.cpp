#include "iotprint/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "iotprint/error.hpp"

namespace iotprint::eval {

namespace {

std::span<const double> row_of(const nn::Matrix& m, Eigen::Index i) {
  // Row-major storage: each row is contiguous.
  return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::size_t class_count(const nn::ModelParams& model) {
  return model.outputs() == 1 ? 2 : model.outputs();
}

}  // namespace

std::uint64_t EvalReport::total() const {
  std::uint64_t sum = 0;
  for (const auto& row : confusion) {
    for (std::uint64_t c : row) sum += c;
  }
  return sum;
}

EvalReport report_from_confusion(Confusion confusion, std::vector<std::string> labels) {
  const std::size_t n = confusion.size();
  for (const auto& row : confusion) {
    if (row.size() != n) throw Error(ErrorKind::ShapeMismatch, "confusion matrix is not square");
  }
  while (labels.size() < n) labels.push_back(std::to_string(labels.size()));

  EvalReport r;
  r.labels = std::move(labels);
  r.confusion = std::move(confusion);
  r.per_class.resize(n);

  std::uint64_t total = 0;
  std::uint64_t correct = 0;
  for (std::size_t c = 0; c < n; ++c) {
    std::uint64_t row_sum = 0;
    std::uint64_t col_sum = 0;
    for (std::size_t k = 0; k < n; ++k) {
      row_sum += r.confusion[c][k];
      col_sum += r.confusion[k][c];
    }
    const double tp = static_cast<double>(r.confusion[c][c]);
    ClassMetrics& m = r.per_class[c];
    m.support = row_sum;
    if (col_sum > 0) {
      m.precision = tp / static_cast<double>(col_sum);
    } else {
      r.warnings.push_back("class '" + r.labels[c] + "' was never predicted; precision set to 0");
    }
    if (row_sum > 0) {
      m.recall = tp / static_cast<double>(row_sum);
    } else {
      r.warnings.push_back("class '" + r.labels[c] + "' has no true instances; recall set to 0");
    }
    m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    total += row_sum;
    correct += r.confusion[c][c];
  }

  r.weighted.support = total;
  if (total > 0) {
    for (const ClassMetrics& m : r.per_class) {
      const double w = static_cast<double>(m.support) / static_cast<double>(total);
      r.weighted.precision += w * m.precision;
      r.weighted.recall += w * m.recall;
      r.weighted.f1 += w * m.f1;
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  }
  return r;
}

EvalReport evaluate(const nn::ModelParams& model, const transform::IdxDataset& test) {
  const std::size_t classes = class_count(model);
  if (test.images.size() != test.labels.size()) {
    throw Error(ErrorKind::CountMismatch, "test images and labels differ in count");
  }
  for (std::size_t i = 0; i < test.labels.size(); ++i) {
    if (test.labels[i] >= classes) {
      throw Error(ErrorKind::LabelOutOfRange,
                  "test label " + std::to_string(test.labels[i]) + " at index " +
                      std::to_string(i) + " but the model has " + std::to_string(classes) +
                      " classes");
    }
  }
  Confusion confusion(classes, std::vector<std::uint64_t>(classes, 0));
  const nn::Matrix probs = nn::predict_batch(model, test.images);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    ++confusion[test.labels[static_cast<std::size_t>(i)]][nn::decide(row_of(probs, i))];
  }
  std::vector<std::string> labels = test.label_names;
  labels.resize(std::max(labels.size(), classes));
  labels.resize(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    if (labels[c].empty()) labels[c] = std::to_string(c);
  }
  return report_from_confusion(std::move(confusion), std::move(labels));
}

std::optional<std::uint8_t> classify_with_threshold(std::span<const double> probs,
                                                    double threshold) {
  if (probs.empty()) return std::nullopt;
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  if (probs[best] > threshold) return static_cast<std::uint8_t>(best);
  return std::nullopt;
}

std::vector<double> threshold_grid(double step) {
  if (!(step > 0) || step > 1) {
    throw Error(ErrorKind::InvalidArgument, "threshold grid step must be in (0, 1]");
  }
  const auto steps = static_cast<std::size_t>(std::llround(1.0 / step));
  std::vector<double> grid;
  if (std::abs(static_cast<double>(steps) * step - 1.0) < 1e-9) {
    // Divide rather than accumulate so 0.01 * 13 lands exactly on 0.13.
    for (std::size_t i = 0; i <= steps; ++i) {
      grid.push_back(static_cast<double>(i) / static_cast<double>(steps));
    }
  } else {
    for (std::size_t i = 0; static_cast<double>(i) * step <= 1.0; ++i) {
      grid.push_back(static_cast<double>(i) * step);
    }
  }
  return grid;
}

ThresholdResult calibrate_threshold(const nn::Matrix& known_probs,
                                    std::span<const std::uint8_t> known_labels,
                                    const nn::Matrix& unknown_probs, double step) {
  if (known_probs.rows() == 0 || unknown_probs.rows() == 0) {
    throw Error(ErrorKind::EmptyPool,
                "threshold calibration needs both known and unknown instances");
  }
  if (static_cast<std::size_t>(known_probs.rows()) != known_labels.size()) {
    throw Error(ErrorKind::CountMismatch, "known probabilities and labels differ in count");
  }
  const double total = static_cast<double>(known_probs.rows() + unknown_probs.rows());
  ThresholdResult best{0.0, -1.0};
  for (double t : threshold_grid(step)) {
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < known_probs.rows(); ++i) {
      const auto label = classify_with_threshold(row_of(known_probs, i), t);
      if (label && *label == known_labels[static_cast<std::size_t>(i)]) ++correct;
    }
    for (Eigen::Index i = 0; i < unknown_probs.rows(); ++i) {
      if (!classify_with_threshold(row_of(unknown_probs, i), t)) ++correct;
    }
    const double accuracy = static_cast<double>(correct) / total;
    if (accuracy > best.achieved_validation_accuracy) best = {t, accuracy};
  }
  return best;
}

ThresholdResult calibrate_threshold(const nn::ModelParams& model,
                                    const transform::IdxDataset& known_validation,
                                    std::span<const transform::PayloadVector> unknown_pool,
                                    double step) {
  return calibrate_threshold(nn::predict_batch(model, known_validation.images),
                             known_validation.labels, nn::predict_batch(model, unknown_pool),
                             step);
}

EvalReport unknown_detection_report(const nn::Matrix& known_probs,
                                    std::span<const std::uint8_t> known_labels,
                                    const nn::Matrix& unknown_probs,
                                    std::vector<std::string> known_names, double threshold) {
  const std::size_t known = static_cast<std::size_t>(
      std::max(known_probs.cols(), unknown_probs.cols()));
  const std::size_t unknown_index = known;
  Confusion confusion(known + 1, std::vector<std::uint64_t>(known + 1, 0));
  for (Eigen::Index i = 0; i < known_probs.rows(); ++i) {
    const std::uint8_t actual = known_labels[static_cast<std::size_t>(i)];
    if (actual >= known) {
      throw Error(ErrorKind::LabelOutOfRange, "known label " + std::to_string(actual));
    }
    const auto predicted = classify_with_threshold(row_of(known_probs, i), threshold);
    ++confusion[actual][predicted ? *predicted : unknown_index];
  }
  for (Eigen::Index i = 0; i < unknown_probs.rows(); ++i) {
    const auto predicted = classify_with_threshold(row_of(unknown_probs, i), threshold);
    ++confusion[unknown_index][predicted ? *predicted : unknown_index];
  }
  known_names.resize(known);
  for (std::size_t c = 0; c < known; ++c) {
    if (known_names[c].empty()) known_names[c] = std::to_string(c);
  }
  known_names.push_back("Unknown");
  EvalReport report = report_from_confusion(std::move(confusion), std::move(known_names));
  report.threshold = ThresholdResult{threshold, 0.0};
  return report;
}

EvalReport unknown_detection_report(const nn::ModelParams& model, double threshold,
                                    const transform::IdxDataset& known_test,
                                    std::span<const transform::PayloadVector> unknown_test) {
  return unknown_detection_report(nn::predict_batch(model, known_test.images), known_test.labels,
                                  nn::predict_batch(model, unknown_test), known_test.label_names,
                                  threshold);
}

std::string format_table(const EvalReport& report) {
  const std::size_t n = report.labels.size();
  std::vector<std::string> row_names;
  std::size_t name_width = std::string("Actual / Classified as").size();
  for (std::size_t c = 0; c < n; ++c) {
    row_names.push_back(std::to_string(c) + "- " + report.labels[c]);
    name_width = std::max(name_width, row_names.back().size());
  }
  std::size_t cell = 5;
  for (const auto& row : report.confusion) {
    for (std::uint64_t v : row) cell = std::max(cell, std::to_string(v).size() + 1);
  }

  std::ostringstream out;
  auto pad_left = [&](const std::string& s, std::size_t w) {
    out << std::string(w > s.size() ? w - s.size() : 0, ' ') << s;
  };
  auto pad_right = [&](const std::string& s, std::size_t w) {
    out << s << std::string(w > s.size() ? w - s.size() : 0, ' ');
  };

  pad_right("Actual / Classified as", name_width);
  for (std::size_t c = 0; c < n; ++c) pad_left(std::to_string(c), cell + 1);
  pad_left("P", 8);
  pad_left("R", 8);
  pad_left("F1", 8);
  pad_left("Support", 9);
  out << '\n';
  for (std::size_t r = 0; r < n; ++r) {
    pad_right(row_names[r], name_width);
    for (std::size_t c = 0; c < n; ++c) pad_left(std::to_string(report.confusion[r][c]), cell + 1);
    pad_left(fixed3(report.per_class[r].precision), 8);
    pad_left(fixed3(report.per_class[r].recall), 8);
    pad_left(fixed3(report.per_class[r].f1), 8);
    pad_left(std::to_string(report.per_class[r].support), 9);
    out << '\n';
  }
  pad_right("Weighted Avg", name_width + n * (cell + 1));
  pad_left(fixed3(report.weighted.precision), 8);
  pad_left(fixed3(report.weighted.recall), 8);
  pad_left(fixed3(report.weighted.f1), 8);
  pad_left(std::to_string(report.weighted.support), 9);
  out << '\n';

  char acc[64];
  std::snprintf(acc, sizeof acc, "Accuracy: %.4f%% (%llu instances)\n", report.accuracy * 100.0,
                static_cast<unsigned long long>(report.total()));
  out << acc;
  if (report.threshold) {
    char thr[96];
    std::snprintf(thr, sizeof thr, "Posterior threshold: %.2f\n", report.threshold->threshold);
    out << thr;
  }
  for (const std::string& w : report.warnings) out << "warning: " << w << '\n';
  return out.str();
}

std::string to_csv(const EvalReport& report) {
  std::ostringstream out;
  out.precision(17);
  const std::size_t n = report.labels.size();
  out << "section,actual";
  for (std::size_t c = 0; c < n; ++c) out << ',' << csv_field(report.labels[c]);
  out << '\n';
  for (std::size_t r = 0; r < n; ++r) {
    out << "confusion," << csv_field(report.labels[r]);
    for (std::uint64_t v : report.confusion[r]) out << ',' << v;
    out << '\n';
  }
  out << "metrics,label,precision,recall,f1,support\n";
  for (std::size_t c = 0; c < n; ++c) {
    const ClassMetrics& m = report.per_class[c];
    out << "class," << csv_field(report.labels[c]) << ',' << m.precision << ',' << m.recall << ','
        << m.f1 << ',' << m.support << '\n';
  }
  out << "weighted,Weighted Avg," << report.weighted.precision << ',' << report.weighted.recall
      << ',' << report.weighted.f1 << ',' << report.weighted.support << '\n';
  out << "accuracy," << report.accuracy << '\n';
  if (report.threshold) out << "threshold," << report.threshold->threshold << '\n';
  return out.str();
}

}  // namespace iotprint::eval
