#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "alea/synth_data.hpp"
#include "alea/train.hpp"

namespace alea::calib {

struct ExperimentId {
  train::Method method = train::Method::DE;
  data::Dimensionality dim = data::Dimensionality::D0;
  data::Injection injection = data::Injection::Output;
  data::NoiseLevel level = data::NoiseLevel::Low;

  /// e.g. "0d_output_high".
  std::string cell_name() const;
  friend bool operator==(const ExperimentId&, const ExperimentId&) = default;
};

struct UncertaintyReport {
  ExperimentId id;
  double mean_sigma_al = 0.0;
  double std_sigma_al = 0.0;
  double sigma_y_true = 0.0;
  bool calibrated = false;
  double final_mse = 0.0;
  double final_loss = 0.0;
};

/// Calibrated in the inclusive sense |mean - true| <= std.
bool is_calibrated(double mean_sigma_al, double std_sigma_al, double sigma_y_true);

/// Mean and (n - 1) std of the predicted sigma_al over the test split.
UncertaintyReport summarize(std::span<const double> sigma_al, double sigma_y_true,
                            const ExperimentId& id = {}, double final_mse = 0.0,
                            double final_loss = 0.0);
UncertaintyReport summarize(const train::PredictionSet& preds, double sigma_y_true,
                            const ExperimentId& id = {}, double final_mse = 0.0,
                            double final_loss = 0.0);

/// True iff mean sigma_al strictly increases Low -> Medium -> High. Reports
/// are matched by level, in any order; all three must share method, dim and
/// injection.
bool check_scaling(std::span<const UncertaintyReport> reports);

double mse_metric(std::span<const double> predicted, std::span<const double> targets);

struct DesiderataVerdict {
  bool scaling_ok = false;      // every (dim, injection) cell scales with noise
  bool calibration_ok = false;  // every report calibrated
  bool universal_ok = false;    // both of the above across all cells
  std::size_t calibrated_count = 0;
  std::size_t report_count = 0;
};

/// Expects the full 2 x 2 x 3 grid of one method.
DesiderataVerdict desiderata(std::span<const UncertaintyReport> reports);

/// All twelve (dim, injection, level) cells for a method, in grid order.
std::vector<ExperimentId> grid_cells(train::Method method);

/// method,dim,injection,level,sigma_y_true,mean_sigma_al,std_sigma_al,calibrated,final_mse,final_loss
std::string report_csv_header();
std::string report_csv_row(const UncertaintyReport& r);
void write_reports_csv(const std::filesystem::path& path, std::span<const UncertaintyReport> reports);
std::vector<UncertaintyReport> read_reports_csv(const std::filesystem::path& path);

}  // namespace alea::calib
