#include <doctest.h>

#include <cmath>

#include "iotprint/eval.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace iotprint::eval;
using iotprint::ErrorKind;
using iotprint::nn::Matrix;
using support::error_kind;

namespace {

double round3(double x) { return std::round(x * 1000.0) / 1000.0; }

Matrix rows(std::initializer_list<std::initializer_list<double>> values) {
  Matrix m(static_cast<Eigen::Index>(values.size()),
           static_cast<Eigen::Index>(values.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : values) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

}  // namespace

TEST_CASE("binary report for the IoT vs non-IoT confusion matrix") {
  const EvalReport r = report_from_confusion({{2225, 1}, {7, 6453}}, {"Non-IoT", "IoT"});
  CHECK(r.total() == 8686);
  CHECK(round3(r.per_class[0].precision) == 0.997);
  CHECK(round3(r.per_class[0].recall) == 1.0);
  CHECK(round3(r.per_class[0].f1) == 0.998);
  CHECK(round3(r.per_class[1].precision) == 1.0);
  CHECK(round3(r.per_class[1].recall) == 0.999);
  CHECK(round3(r.per_class[1].f1) == 0.999);
  CHECK(round3(r.weighted.precision) == 0.999);
  CHECK(round3(r.weighted.recall) == 0.999);
  CHECK(round3(r.weighted.f1) == 0.999);
  CHECK(r.per_class[0].support == 2226);
  CHECK(r.weighted.support == 8686);
  CHECK(r.accuracy == doctest::Approx(8678.0 / 8686.0).epsilon(1e-15));
  CHECK(r.warnings.empty());
}

TEST_CASE("metrics agree with direct formulas on random confusion matrices") {
  CHECK(oracles::metrics_max_error(500, 21) <= 1e-12);
}

TEST_CASE("undefined metrics are zero and warned about") {
  const EvalReport r = report_from_confusion({{5, 0, 0}, {2, 0, 0}, {1, 0, 3}}, {"a", "b", "c"});
  CHECK(r.per_class[1].precision == 0.0);
  CHECK(r.per_class[1].recall == 0.0);
  CHECK(r.per_class[1].f1 == 0.0);
  CHECK(r.warnings.size() == 1);

  const EvalReport empty_row = report_from_confusion({{5, 0}, {0, 0}}, {"a", "b"});
  CHECK(empty_row.per_class[1].recall == 0.0);
  CHECK(empty_row.warnings.size() == 2);
}

TEST_CASE("threshold grid is exact at every step") {
  const auto grid = threshold_grid(0.01);
  REQUIRE(grid.size() == 101);
  CHECK(grid[13] == 0.13);
  CHECK(grid[29] == 0.29);
  CHECK(grid.front() == 0.0);
  CHECK(grid.back() == 1.0);
  CHECK(threshold_grid(0.25) == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
  CHECK(error_kind([] { threshold_grid(0.0); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("classification with a threshold is strict") {
  const std::vector<double> p{0.2, 0.8};
  CHECK(classify_with_threshold(p, 0.79) == std::optional<std::uint8_t>{1});
  CHECK_FALSE(classify_with_threshold(p, 0.8).has_value());
  CHECK_FALSE(classify_with_threshold(p, 1.0).has_value());
}

TEST_CASE("calibration") {
  SUBCASE("agrees with the sorted-score oracle") {
    const auto check = oracles::calibration_matches_oracle(100, 31);
    INFO(check.detail);
    CHECK(check.pass);
  }
  SUBCASE("hand-worked pool") {
    // Known: correct at 0.9 and 0.7, wrong label at 0.95. Unknown: 0.6, 0.75.
    const Matrix known = rows({{0.9, 0.1}, {0.3, 0.7}, {0.95, 0.05}});
    const std::vector<std::uint8_t> labels{0, 1, 1};
    const Matrix unknown = rows({{0.6, 0.4}, {0.25, 0.75}});
    const ThresholdResult r = calibrate_threshold(known, labels, unknown, 0.01);
    // Best is 3/5: any t in [0.60, 0.70) or [0.75, 0.90); ties go low.
    CHECK(r.threshold == 0.6);
    CHECK(r.achieved_validation_accuracy == doctest::Approx(0.6));
  }
  SUBCASE("empty pools") {
    const Matrix none(0, 2);
    const Matrix some = rows({{0.5, 0.5}});
    const std::vector<std::uint8_t> one{0};
    CHECK(error_kind([&] { calibrate_threshold(some, one, none); }) == ErrorKind::EmptyPool);
    CHECK(error_kind([&] { calibrate_threshold(none, {}, some); }) == ErrorKind::EmptyPool);
  }
}

TEST_CASE("unknown sets grow with the threshold") {
  const auto check = oracles::threshold_monotonicity(20, 41);
  INFO(check.detail);
  CHECK(check.pass);
}

TEST_CASE("unknown-detection report appends an Unknown class") {
  const Matrix known = rows({{0.9, 0.1}, {0.45, 0.55}, {0.2, 0.8}});
  const std::vector<std::uint8_t> labels{0, 1, 1};
  const Matrix unknown = rows({{0.5, 0.5}, {0.99, 0.01}});
  const EvalReport r = unknown_detection_report(known, labels, unknown, {"cam", "plug"}, 0.6);
  CHECK(r.labels == std::vector<std::string>{"cam", "plug", "Unknown"});
  const Confusion want{{1, 0, 0}, {0, 1, 1}, {1, 0, 1}};
  CHECK(r.confusion == want);
  CHECK(r.accuracy == doctest::Approx(3.0 / 5.0));
  REQUIRE(r.threshold);
  CHECK(r.threshold->threshold == 0.6);
}

TEST_CASE("report rendering") {
  EvalReport r = report_from_confusion({{2225, 1}, {7, 6453}}, {"Non-IoT devices", "IoT devices"});
  const std::string table = format_table(r);
  CHECK(table.find("0- Non-IoT devices") != std::string::npos);
  CHECK(table.find("Weighted Avg") != std::string::npos);
  CHECK(table.find("2225") != std::string::npos);
  r.threshold = ThresholdResult{0.13, 0.98};
  CHECK(format_table(r).find("0.13") != std::string::npos);
  const std::string csv = to_csv(r);
  CHECK(csv.find("Non-IoT devices") != std::string::npos);
  CHECK(csv.find("threshold") != std::string::npos);
}
