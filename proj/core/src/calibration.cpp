#include "alea/calibration.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include "alea/error.hpp"
#include "alea/io.hpp"
#include "alea/stats.hpp"

namespace alea::calib {

std::string ExperimentId::cell_name() const {
  return std::string(data::to_string(dim)) + "_" + std::string(data::to_string(injection)) + "_" +
         std::string(data::to_string(level));
}

bool is_calibrated(double mean_sigma_al, double std_sigma_al, double sigma_y_true) {
  return std::abs(mean_sigma_al - sigma_y_true) <= std_sigma_al;
}

UncertaintyReport summarize(std::span<const double> sigma_al, double sigma_y_true, const ExperimentId& id,
                            double final_mse, double final_loss) {
  if (sigma_al.empty()) throw DataError("summarize: no predictions");
  UncertaintyReport r;
  r.id = id;
  r.mean_sigma_al = stats::mean(sigma_al);
  r.std_sigma_al = stats::sample_std(sigma_al);
  r.sigma_y_true = sigma_y_true;
  r.calibrated = is_calibrated(r.mean_sigma_al, r.std_sigma_al, sigma_y_true);
  r.final_mse = final_mse;
  r.final_loss = final_loss;
  return r;
}

UncertaintyReport summarize(const train::PredictionSet& preds, double sigma_y_true, const ExperimentId& id,
                            double final_mse, double final_loss) {
  return summarize(preds.sigma_al, sigma_y_true, id, final_mse, final_loss);
}

bool check_scaling(std::span<const UncertaintyReport> reports) {
  if (reports.size() != 3) throw DataError("check_scaling needs exactly three reports");
  std::array<std::optional<double>, 3> means;
  for (const auto& r : reports) {
    const auto& ref = reports.front().id;
    if (r.id.method != ref.method || r.id.dim != ref.dim || r.id.injection != ref.injection) {
      throw DataError("check_scaling: reports come from different experiments");
    }
    auto& slot = means[static_cast<std::size_t>(r.id.level)];
    if (slot) throw DataError("check_scaling: duplicate noise level");
    slot = r.mean_sigma_al;
  }
  for (const auto& m : means) {
    if (!m) throw DataError("check_scaling: missing noise level");
  }
  return *means[0] < *means[1] && *means[1] < *means[2];
}

double mse_metric(std::span<const double> predicted, std::span<const double> targets) {
  if (predicted.size() != targets.size()) throw ShapeError("mse_metric: length mismatch");
  if (predicted.empty()) throw DataError("mse_metric: empty input");
  double se = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) se += (predicted[i] - targets[i]) * (predicted[i] - targets[i]);
  return se / static_cast<double>(predicted.size());
}

std::vector<ExperimentId> grid_cells(train::Method method) {
  std::vector<ExperimentId> cells;
  for (auto dim : {data::Dimensionality::D0, data::Dimensionality::D2}) {
    for (auto inj : {data::Injection::Output, data::Injection::Input}) {
      for (auto lvl : {data::NoiseLevel::Low, data::NoiseLevel::Medium, data::NoiseLevel::High}) {
        cells.push_back({method, dim, inj, lvl});
      }
    }
  }
  return cells;
}

DesiderataVerdict desiderata(std::span<const UncertaintyReport> reports) {
  if (reports.empty()) throw DataError("desiderata: no reports");
  const auto method = reports.front().id.method;
  const auto cells = grid_cells(method);
  std::vector<const UncertaintyReport*> by_cell(cells.size(), nullptr);
  for (const auto& r : reports) {
    if (r.id.method != method) throw DataError("desiderata: reports mix methods");
    bool placed = false;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i] == r.id) {
        if (by_cell[i]) throw DataError("desiderata: duplicate experiment " + r.id.cell_name());
        by_cell[i] = &r;
        placed = true;
      }
    }
    if (!placed) throw DataError("desiderata: unexpected experiment " + r.id.cell_name());
  }
  std::string missing;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!by_cell[i]) missing += " " + cells[i].cell_name();
  }
  if (!missing.empty()) throw DataError("desiderata: incomplete grid, missing" + missing);

  DesiderataVerdict v;
  v.scaling_ok = true;
  for (std::size_t c = 0; c < cells.size(); c += 3) {
    const std::array<UncertaintyReport, 3> triple{*by_cell[c], *by_cell[c + 1], *by_cell[c + 2]};
    v.scaling_ok = v.scaling_ok && check_scaling(triple);
  }
  v.report_count = cells.size();
  for (const auto* r : by_cell) v.calibrated_count += r->calibrated ? 1 : 0;
  v.calibration_ok = v.calibrated_count == v.report_count;
  v.universal_ok = v.scaling_ok && v.calibration_ok;
  return v;
}

std::string report_csv_header() {
  return "method,dim,injection,level,sigma_y_true,mean_sigma_al,std_sigma_al,calibrated,final_mse,final_loss";
}

std::string report_csv_row(const UncertaintyReport& r) {
  std::ostringstream os;
  os << train::to_string(r.id.method) << ',' << data::to_string(r.id.dim) << ','
     << data::to_string(r.id.injection) << ',' << data::to_string(r.id.level) << ','
     << io::format_double(r.sigma_y_true) << ',' << io::format_double(r.mean_sigma_al) << ','
     << io::format_double(r.std_sigma_al) << ',' << (r.calibrated ? "true" : "false") << ','
     << io::format_double(r.final_mse) << ',' << io::format_double(r.final_loss);
  return os.str();
}

void write_reports_csv(const std::filesystem::path& path, std::span<const UncertaintyReport> reports) {
  std::ostringstream os;
  os << report_csv_header() << '\n';
  for (const auto& r : reports) os << report_csv_row(r) << '\n';
  io::write_text_file(path, os.str());
}

std::vector<UncertaintyReport> read_reports_csv(const std::filesystem::path& path) {
  std::istringstream in(io::read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || line != report_csv_header()) {
    throw DataError(path.string() + ": not a report CSV");
  }
  std::vector<UncertaintyReport> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 10) throw DataError(path.string() + ": malformed row");
    UncertaintyReport r;
    r.id = {train::parse_method(f[0]), data::parse_dimensionality(f[1]), data::parse_injection(f[2]),
            data::parse_level(f[3])};
    r.sigma_y_true = io::parse_double(f[4]);
    r.mean_sigma_al = io::parse_double(f[5]);
    r.std_sigma_al = io::parse_double(f[6]);
    r.calibrated = f[7] == "true";
    r.final_mse = io::parse_double(f[8]);
    r.final_loss = io::parse_double(f[9]);
    out.push_back(r);
  }
  return out;
}

}  // namespace alea::calib
