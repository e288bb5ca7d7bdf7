#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "alea/calibration.hpp"
#include "alea/io.hpp"
#include "alea/synth_data.hpp"
#include "alea/train.hpp"

namespace alea::runner {

/// Paper scale uses the full splits and 100 epochs. Desk scale uses 0D
/// splits 9000/1000/1000, 2D splits 1500/200/200 and 40 epochs.
enum class Scale { Paper, Desk };

std::string_view to_string(Scale s);
Scale parse_scale(std::string_view s);

inline constexpr std::size_t kPaperEpochs = 100;
inline constexpr std::size_t kDeskEpochs = 40;

struct ExperimentConfig {
  train::Method method = train::Method::DE;
  data::Dimensionality dim = data::Dimensionality::D0;
  data::Injection injection = data::Injection::Output;
  data::NoiseLevel level = data::NoiseLevel::Low;
  std::uint64_t seed = 0;
  std::optional<std::size_t> epochs;  // defaults per scale
  std::size_t ensemble_size = 10;
  Scale scale = Scale::Desk;
  std::filesystem::path out_dir = "results";
  std::optional<double> lambda;       // NIG regulariser, default 0.01
  std::optional<double> beta_weight;  // beta-NLL exponent, default 0.5
  std::optional<std::size_t> batch_size;  // default 128 (0D) / 32 (2D)
  std::string beta_schedule = "constant";
  std::optional<double> sigma_y;  // overrides the level's sigma_y
  std::size_t workers = 1;        // concurrent ensemble members
  std::optional<double> grad_clip = 10.0;  // nullopt disables clipping

  std::size_t resolved_epochs() const;
  std::size_t resolved_batch_size() const;
  data::SplitSizes resolved_sizes() const;
  data::NoiseSpec noise() const;
  train::TrainConfig train_config() const;
  calib::ExperimentId id() const;
  /// out_dir/<method>/<dim>_<inject>_<level>
  std::filesystem::path experiment_dir() const;
  void validate() const;
};

/// Applies config-file keys (flag names without the leading dashes:
/// method, dim, inject, noise, seed, epochs, ensemble-size, scale, out-dir,
/// lambda, beta-weight, batch-size, beta-schedule, sigma-y, workers,
/// grad-clip where "off" disables clipping).
ExperimentConfig apply_key_values(ExperimentConfig base, const io::KeyValues& kv);
io::KeyValues to_key_values(const ExperimentConfig& cfg);

using LogSink = std::function<void(std::string_view line)>;

struct ExperimentOutcome {
  calib::UncertaintyReport report;
  train::PredictionSet predictions;
  /// Per-epoch validation metrics; for ensembles the mean over members.
  train::TrainTrace trace;
  std::vector<train::TrainTrace> member_traces;
};

/// Generates data, trains, predicts on the test split, summarises, and writes
/// report.csv, trace.csv, sigma_al.csv and checkpoints/ under experiment_dir().
ExperimentOutcome run_experiment(const ExperimentConfig& cfg, const LogSink& log = {});

struct GridResult {
  std::vector<calib::UncertaintyReport> reports;
  calib::DesiderataVerdict verdict;
};

/// Raised when any experiment of a grid fails; a partial-results manifest has
/// been written next to the grid outputs.
class IncompleteGrid : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// All 12 (dim, injection, level) experiments for base.method. Writes
/// grid.csv, verdict.json and figure2_<method>.svg under out_dir/<method>/.
GridResult run_grid(const ExperimentConfig& base, std::size_t jobs, const LogSink& log = {});

std::string verdict_json(const calib::DesiderataVerdict& v, train::Method method);

struct FigureCell {
  calib::UncertaintyReport report;
  std::vector<double> sigma_al;
};

/// SVG with one panel per (dim, injection): per-level sigma_al silhouettes, a
/// marker at the mean, +-std error bars and dashed lines at each true sigma_y.
std::string render_figure(std::span<const FigureCell> cells);
void emit_figure(std::span<const FigureCell> cells, const std::filesystem::path& out);

/// Example data: one panel of 0D lines y = m x over the x grid, one panel
/// of 2D images in grayscale with their targets.
std::string render_data_figure(const data::Dataset& lines, const data::Dataset& images,
                               std::size_t n_examples = 4);

/// Reads report.csv and sigma_al.csv from every experiment directory that
/// exists under out_dir/<method>/.
std::vector<FigureCell> load_figure_cells(const std::filesystem::path& out_dir, train::Method method);

std::vector<double> read_sigma_al_csv(const std::filesystem::path& path);

/// Published final-epoch validation metrics for the low (first table) and
/// high noise levels, used as comparison targets.
struct ReferenceValue {
  double mse = 0.0;
  double loss = 0.0;
};
std::optional<ReferenceValue> reference_value(data::NoiseLevel level, data::Dimensionality dim,
                                              data::Injection injection, train::Method method);

struct TableCell {
  calib::ExperimentId id;
  train::TrainTrace trace;
};

/// Rows "MSE Metric" and "Loss"; columns over dim x injection x method at one
/// level, from the final epoch of each trace. Throws DataError listing every
/// missing column.
std::string render_table(std::span<const TableCell> cells, data::NoiseLevel level);
void emit_tables(const std::filesystem::path& out_dir, data::NoiseLevel level,
                 const std::filesystem::path& out);

train::TrainTrace read_trace_csv(const std::filesystem::path& path);

/// Analytic vs Monte-Carlo sigma_y for the linear and image-sum rules and a
/// zero-noise case. Prints one line per case; true when all agree within 1%.
bool verify_propagation(std::ostream& out, std::uint64_t seed = 1, std::size_t n_samples = 1'000'000);

}  // namespace alea::runner
