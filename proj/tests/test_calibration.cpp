#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "alea/calibration.hpp"
#include "alea/error.hpp"

using namespace alea;
using namespace alea::calib;
using data::NoiseLevel;

namespace {

UncertaintyReport report(NoiseLevel level, double mean, double std = 0.01) {
  UncertaintyReport r;
  r.id.level = level;
  r.mean_sigma_al = mean;
  r.std_sigma_al = std;
  r.sigma_y_true = data::sigma_for(level);
  r.calibrated = is_calibrated(mean, std, r.sigma_y_true);
  return r;
}

std::vector<UncertaintyReport> triple(double low, double medium, double high) {
  return {report(NoiseLevel::Low, low), report(NoiseLevel::Medium, medium), report(NoiseLevel::High, high)};
}

// Full grid where the first `calibrated` cells sit on the truth and the rest
// are off by far more than their spread, all scaling with the noise level.
std::vector<UncertaintyReport> grid(train::Method method, std::size_t calibrated) {
  std::vector<UncertaintyReport> out;
  for (const auto& id : grid_cells(method)) {
    const double truth = data::sigma_for(id.level);
    const bool on = out.size() < calibrated;
    UncertaintyReport r;
    r.id = id;
    r.sigma_y_true = truth;
    r.mean_sigma_al = on ? truth : 1.5 * truth;
    r.std_sigma_al = 0.1 * truth;
    r.calibrated = is_calibrated(r.mean_sigma_al, r.std_sigma_al, truth);
    out.push_back(r);
  }
  return out;
}

}  // namespace

TEST(Summarize, DegenerateExactDistribution) {
  const std::vector<double> s(50, 0.1);
  const auto r = summarize(s, 0.1);
  EXPECT_EQ(r.mean_sigma_al, 0.1);
  EXPECT_EQ(r.std_sigma_al, 0.0);
  EXPECT_TRUE(r.calibrated);
  EXPECT_THROW(summarize(std::vector<double>{}, 0.1), DataError);
}

TEST(Calibrated, ConstructedCases) {
  EXPECT_TRUE(is_calibrated(0.098, 0.01, 0.1));
  EXPECT_FALSE(is_calibrated(0.05, 0.01, 0.1));
}

TEST(Calibrated, FlipsExactlyAtTheInclusiveBoundary) {
  // Dyadic values: mean 0.125 and sample std 0.0625 are exact.
  const std::vector<double> s{0.0625, 0.125, 0.1875};
  ASSERT_EQ(summarize(s, 0.1).std_sigma_al, 0.0625);
  EXPECT_TRUE(summarize(s, 0.1875).calibrated);
  EXPECT_FALSE(summarize(s, std::nextafter(0.1875, 1.0)).calibrated);
  EXPECT_TRUE(summarize(s, 0.0625).calibrated);
  EXPECT_FALSE(summarize(s, 0.125 - std::nextafter(0.0625, 1.0)).calibrated);
}

TEST(Summarize, FromPredictionSetCarriesMetadata) {
  train::PredictionSet p;
  p.sigma_al = {0.09, 0.1, 0.11};
  p.mean = {0, 0, 0};
  ExperimentId id{train::Method::DER, data::Dimensionality::D2, data::Injection::Input, NoiseLevel::High};
  const auto r = summarize(p, 0.1, id, 0.01, -0.8);
  EXPECT_EQ(r.id, id);
  EXPECT_NEAR(r.mean_sigma_al, 0.1, 1e-15);
  EXPECT_NEAR(r.std_sigma_al, 0.01, 1e-15);
  EXPECT_EQ(r.final_mse, 0.01);
  EXPECT_EQ(r.final_loss, -0.8);
  EXPECT_EQ(id.cell_name(), "2d_input_high");
}

TEST(CheckScaling, SpecExamples) {
  EXPECT_TRUE(check_scaling(triple(0.012, 0.048, 0.097)));
  EXPECT_FALSE(check_scaling(triple(0.05, 0.05, 0.05)));
  EXPECT_FALSE(check_scaling(triple(0.02, 0.01, 0.1)));
}

TEST(CheckScaling, OrderFreeButComplete) {
  auto r = triple(0.012, 0.048, 0.097);
  std::swap(r[0], r[2]);
  EXPECT_TRUE(check_scaling(r));
  r.pop_back();
  EXPECT_THROW(check_scaling(r), DataError);
  auto dup = triple(0.01, 0.02, 0.03);
  dup[1].id.level = NoiseLevel::Low;
  EXPECT_THROW(check_scaling(dup), DataError);
  auto mixed = triple(0.01, 0.02, 0.03);
  mixed[2].id.dim = data::Dimensionality::D2;
  EXPECT_THROW(check_scaling(mixed), DataError);
}

TEST(MseMetric, SpecExamples) {
  const std::vector<double> y{0.1, 0.5, 1.9};
  EXPECT_EQ(mse_metric(y, y), 0.0);
  EXPECT_NEAR(mse_metric(std::vector<double>{0.35, 0.75, 2.15}, y), 0.0625, 1e-15);
  EXPECT_THROW(mse_metric(std::vector<double>{}, std::vector<double>{}), DataError);
  EXPECT_THROW(mse_metric(std::vector<double>{1.0}, y), ShapeError);
}

TEST(MseMetric, GaussianResidualsAtNoiseFloor) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  std::normal_distribution<double> noise(0.0, 0.1);
  std::vector<double> y(10000), pred(10000);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = u(rng);
    pred[i] = y[i] + noise(rng);
  }
  const double mse = mse_metric(pred, y);
  EXPECT_GE(mse, 0.0094);
  EXPECT_LE(mse, 0.0106);
}

TEST(GridCells, TwelveDistinctCells) {
  const auto cells = grid_cells(train::Method::DER);
  ASSERT_EQ(cells.size(), 12u);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    EXPECT_EQ(cells[i].method, train::Method::DER);
    for (std::size_t j = 0; j < i; ++j) EXPECT_FALSE(cells[i] == cells[j]);
  }
}

TEST(Desiderata, AllGood) {
  const auto v = desiderata(grid(train::Method::DE, 12));
  EXPECT_TRUE(v.scaling_ok);
  EXPECT_TRUE(v.calibration_ok);
  EXPECT_TRUE(v.universal_ok);
  EXPECT_EQ(v.calibrated_count, 12u);
  EXPECT_EQ(v.report_count, 12u);
}

TEST(Desiderata, PublishedOutcomesAreNotUniversal) {
  const auto de = desiderata(grid(train::Method::DE, 7));
  EXPECT_EQ(de.calibrated_count, 7u);
  EXPECT_TRUE(de.scaling_ok);
  EXPECT_FALSE(de.calibration_ok);
  EXPECT_FALSE(de.universal_ok);
  const auto der = desiderata(grid(train::Method::DER, 2));
  EXPECT_EQ(der.calibrated_count, 2u);
  EXPECT_FALSE(der.universal_ok);
}

TEST(Desiderata, ScalingFromFourTriples) {
  auto reports = grid(train::Method::DE, 12);
  // Break monotonicity in a single (dim, injection) cell.
  reports[4].mean_sigma_al = 1.0;
  const auto v = desiderata(reports);
  EXPECT_FALSE(v.scaling_ok);
  EXPECT_FALSE(v.universal_ok);
}

TEST(Desiderata, IncompleteGridListsMissing) {
  auto reports = grid(train::Method::DE, 12);
  const auto missing = reports[5].id.cell_name();
  reports.erase(reports.begin() + 5);
  try {
    desiderata(reports);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(missing), std::string::npos);
  }
}

TEST(ReportsCsv, RoundTripIsExact) {
  auto reports = grid(train::Method::DER, 5);
  reports[0].final_mse = 0.1 + 0.2;
  reports[0].final_loss = -1.0 / 3.0;
  const auto path = std::filesystem::temp_directory_path() / "alea_reports_test.csv";
  write_reports_csv(path, reports);
  const auto back = read_reports_csv(path);
  ASSERT_EQ(back.size(), reports.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].id, reports[i].id);
    EXPECT_EQ(back[i].mean_sigma_al, reports[i].mean_sigma_al);
    EXPECT_EQ(back[i].std_sigma_al, reports[i].std_sigma_al);
    EXPECT_EQ(back[i].calibrated, reports[i].calibrated);
    EXPECT_EQ(back[i].final_mse, reports[i].final_mse);
    EXPECT_EQ(back[i].final_loss, reports[i].final_loss);
  }
  EXPECT_EQ(report_csv_header(),
            "method,dim,injection,level,sigma_y_true,mean_sigma_al,std_sigma_al,calibrated,final_mse,final_loss");
  std::filesystem::remove(path);
}
