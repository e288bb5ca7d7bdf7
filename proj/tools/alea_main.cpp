// alea: generate data, train UQ models, and render the experiment grid.

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "alea/error.hpp"
#include "alea/runner.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitIncomplete = 4;

using namespace alea;

// Flag values are kept as text and merged over the config file, so both go
// through the same key=value parser.
struct ExperimentFlags {
  std::string config;
  std::map<std::string, std::optional<std::string>> values;

  void attach(CLI::App& app) {
    app.add_option("--config", config, "key=value config file; flags override it");
    const std::map<std::string, std::string> help{
        {"method", "de | der"},
        {"dim", "0d | 2d"},
        {"inject", "input | output"},
        {"noise", "low | medium | high"},
        {"seed", "master seed"},
        {"epochs", "training epochs (default: 100 paper, 40 desk)"},
        {"ensemble-size", "deep ensemble members (default 10)"},
        {"scale", "paper | desk"},
        {"out-dir", "output directory (default results)"},
        {"lambda", "evidential regulariser weight (default 0.01)"},
        {"beta-weight", "beta-NLL exponent (default 0.5)"},
        {"batch-size", "mini-batch size (default 128 for 0d, 32 for 2d)"},
        {"beta-schedule", "constant | linear | step-half | step-zero"},
        {"sigma-y", "override the level's output noise"},
        {"workers", "ensemble members trained concurrently"},
        {"grad-clip", "global gradient-norm clip, or off (default 10)"},
    };
    for (const auto& [key, text] : help) app.add_option("--" + key, values[key], text);
  }

  runner::ExperimentConfig resolve() const {
    io::KeyValues kv;
    if (!config.empty()) kv = io::read_key_values(config);
    for (const auto& [key, v] : values) {
      if (v) kv[key] = *v;
    }
    return runner::apply_key_values({}, kv);
  }
};

void print_line(std::string_view line) { std::cout << line << '\n' << std::flush; }

int run(const ExperimentFlags& flags) {
  const auto cfg = flags.resolve();
  const auto out = runner::run_experiment(cfg, print_line);
  const auto& r = out.report;
  std::cout << "sigma_y_true=" << io::format_double(r.sigma_y_true)
            << " mean_sigma_al=" << io::format_double(r.mean_sigma_al)
            << " std_sigma_al=" << io::format_double(r.std_sigma_al)
            << " calibrated=" << (r.calibrated ? "true" : "false")
            << " final_mse=" << io::format_double(r.final_mse) << " final_loss=" << io::format_double(r.final_loss)
            << '\n'
            << "wrote " << cfg.experiment_dir().string() << '\n';
  return 0;
}

int grid(const ExperimentFlags& flags, std::size_t jobs) {
  const auto cfg = flags.resolve();
  const auto result = runner::run_grid(cfg, jobs, print_line);
  std::cout << runner::verdict_json(result.verdict, cfg.method);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aleatoric uncertainty benchmark"};
  app.require_subcommand(1);

  ExperimentFlags run_flags;
  auto* run_cmd = app.add_subcommand("run", "Run one experiment");
  run_flags.attach(*run_cmd);

  ExperimentFlags grid_flags;
  std::size_t jobs = 1;
  auto* grid_cmd = app.add_subcommand("grid", "Run all 12 experiments of one method");
  grid_flags.attach(*grid_cmd);
  grid_cmd->add_option("--jobs", jobs, "experiments run concurrently")->check(CLI::PositiveNumber);

  std::string fig_dir = "results";
  std::string fig_method = "de";
  std::string fig_out;
  auto* fig_cmd = app.add_subcommand("figure", "Render sigma_al distributions from finished runs");
  fig_cmd->add_option("--out-dir", fig_dir, "results directory");
  fig_cmd->add_option("--method", fig_method, "de | der");
  fig_cmd->add_option("--output", fig_out, "SVG path (default <out-dir>/<method>/figure2_<method>.svg)");

  std::string data_fig_out = "data_examples.svg";
  std::uint64_t data_fig_seed = 0;
  auto* data_fig_cmd = app.add_subcommand("data-figure", "Render example 0d lines and 2d images");
  data_fig_cmd->add_option("--output", data_fig_out, "SVG path");
  data_fig_cmd->add_option("--seed", data_fig_seed, "master seed");

  std::string tab_dir = "results";
  std::string tab_level = "high";
  std::string tab_out;
  auto* tab_cmd = app.add_subcommand("tables", "Final-epoch MSE and loss table for one noise level");
  tab_cmd->add_option("--out-dir", tab_dir, "results directory");
  tab_cmd->add_option("--noise", tab_level, "low | medium | high");
  tab_cmd->add_option("--output", tab_out, "CSV path (default <out-dir>/table_<noise>.csv)");

  std::uint64_t vp_seed = 1;
  std::size_t vp_samples = 1'000'000;
  auto* vp_cmd = app.add_subcommand("verify-propagation", "Compare analytic and Monte-Carlo noise propagation");
  vp_cmd->add_option("--seed", vp_seed, "Monte-Carlo seed");
  vp_cmd->add_option("--samples", vp_samples, "Monte-Carlo draws");

  ExperimentFlags gen_flags;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("generate", "Write a dataset to disk");
  gen_flags.attach(*gen_cmd);
  gen_cmd->add_option("--output", gen_out, "dataset directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run_cmd) return run(run_flags);
    if (*grid_cmd) return grid(grid_flags, jobs);
    if (*fig_cmd) {
      const auto method = train::parse_method(fig_method);
      const auto cells = runner::load_figure_cells(fig_dir, method);
      const std::filesystem::path out =
          fig_out.empty() ? std::filesystem::path(fig_dir) / fig_method / ("figure2_" + fig_method + ".svg")
                          : std::filesystem::path(fig_out);
      runner::emit_figure(cells, out);
      std::cout << "wrote " << out.string() << " (" << cells.size() << " experiments)\n";
      return 0;
    }
    if (*data_fig_cmd) {
      const auto d0 = data::generate(data::Dimensionality::D0, data::NoiseSpec::make(data::Injection::Output,
                                                                                     data::NoiseLevel::High),
                                     data_fig_seed, {8, 1, 1}, {.allow_custom_sizes = true});
      const auto d2 = data::generate(data::Dimensionality::D2, data::NoiseSpec::make(data::Injection::Input,
                                                                                     data::NoiseLevel::High),
                                     data_fig_seed, {4, 1, 1}, {.allow_custom_sizes = true});
      io::write_text_file(data_fig_out, runner::render_data_figure(d0.train, d2.train));
      std::cout << "wrote " << data_fig_out << '\n';
      return 0;
    }
    if (*tab_cmd) {
      const auto level = data::parse_level(tab_level);
      const std::filesystem::path out =
          tab_out.empty() ? std::filesystem::path(tab_dir) / ("table_" + tab_level + ".csv") : std::filesystem::path(tab_out);
      runner::emit_tables(tab_dir, level, out);
      std::cout << io::read_text_file(out);
      return 0;
    }
    if (*vp_cmd) {
      runner::verify_propagation(std::cout, vp_seed, vp_samples);
      return 0;
    }
    if (*gen_cmd) {
      const auto cfg = gen_flags.resolve();
      cfg.validate();
      const auto splits = data::generate(cfg.dim, cfg.noise(), cfg.seed, cfg.resolved_sizes(),
                                         {.allow_custom_sizes = cfg.scale == runner::Scale::Desk});
      data::save_dataset(gen_out, splits);
      std::cout << "wrote " << gen_out << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const TrainingDivergence& e) {
    std::cerr << "training diverged at epoch " << e.epoch() << ", batch " << e.batch() << ": " << e.what() << '\n';
    return kExitDivergence;
  } catch (const runner::IncompleteGrid& e) {
    std::cerr << e.what() << '\n';
    return kExitIncomplete;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
