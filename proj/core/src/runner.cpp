#include "alea/runner.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "alea/diffnet.hpp"
#include "alea/error.hpp"
#include "alea/propagate.hpp"

namespace alea::runner {
namespace fs = std::filesystem;

std::string_view to_string(Scale s) { return s == Scale::Paper ? "paper" : "desk"; }

Scale parse_scale(std::string_view s) {
  if (s == "paper") return Scale::Paper;
  if (s == "desk") return Scale::Desk;
  throw ConfigError("unknown scale '" + std::string(s) + "' (expected paper|desk)");
}

std::size_t ExperimentConfig::resolved_epochs() const {
  if (epochs) return *epochs;
  return scale == Scale::Paper ? kPaperEpochs : kDeskEpochs;
}

std::size_t ExperimentConfig::resolved_batch_size() const {
  if (batch_size) return *batch_size;
  return dim == data::Dimensionality::D0 ? 128 : 32;
}

data::SplitSizes ExperimentConfig::resolved_sizes() const {
  return scale == Scale::Paper ? data::paper_sizes(dim) : data::desk_sizes(dim);
}

data::NoiseSpec ExperimentConfig::noise() const {
  auto n = data::NoiseSpec::make(injection, level);
  if (sigma_y) n.sigma_y = *sigma_y;
  return n;
}

train::TrainConfig ExperimentConfig::train_config() const {
  train::TrainConfig t;
  t.epochs = resolved_epochs();
  t.batch_size = resolved_batch_size();
  t.seed = seed;
  t.method = method;
  t.ensemble_size = method == train::Method::DE ? ensemble_size : 1;
  if (lambda) t.loss.lambda_reg = *lambda;
  if (beta_weight) t.loss.beta_weight = *beta_weight;
  t.beta_schedule = loss::BetaSchedule::parse(beta_schedule, t.loss.beta_weight);
  t.workers = workers;
  t.grad_clip = grad_clip;
  return t;
}

calib::ExperimentId ExperimentConfig::id() const { return {method, dim, injection, level}; }

fs::path ExperimentConfig::experiment_dir() const {
  return out_dir / std::string(train::to_string(method)) / id().cell_name();
}

void ExperimentConfig::validate() const {
  if (epochs && *epochs == 0) throw ConfigError("epochs must be >= 1");
  if (ensemble_size == 0) throw ConfigError("ensemble size must be >= 1");
  if (batch_size && *batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (workers == 0) throw ConfigError("workers must be >= 1");
  if (out_dir.empty()) throw ConfigError("out-dir must not be empty");
  noise().validate();
  train_config().validate();
}

ExperimentConfig apply_key_values(ExperimentConfig cfg, const io::KeyValues& kv) {
  for (const auto& [key, value] : kv) {
    try {
      if (key == "method") cfg.method = train::parse_method(value);
      else if (key == "dim") cfg.dim = data::parse_dimensionality(value);
      else if (key == "inject") cfg.injection = data::parse_injection(value);
      else if (key == "noise") cfg.level = data::parse_level(value);
      else if (key == "seed") cfg.seed = io::parse_uint(value);
      else if (key == "epochs") cfg.epochs = io::parse_uint(value);
      else if (key == "ensemble-size") cfg.ensemble_size = io::parse_uint(value);
      else if (key == "scale") cfg.scale = parse_scale(value);
      else if (key == "out-dir") cfg.out_dir = value;
      else if (key == "lambda") cfg.lambda = io::parse_double(value);
      else if (key == "beta-weight") cfg.beta_weight = io::parse_double(value);
      else if (key == "batch-size") cfg.batch_size = io::parse_uint(value);
      else if (key == "beta-schedule") cfg.beta_schedule = value;
      else if (key == "sigma-y") cfg.sigma_y = io::parse_double(value);
      else if (key == "workers") cfg.workers = io::parse_uint(value);
      else if (key == "grad-clip") cfg.grad_clip = value == "off" ? std::nullopt : std::optional(io::parse_double(value));
      else throw ConfigError("unknown config key '" + key + "'");
    } catch (const DataError& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
  return cfg;
}

io::KeyValues to_key_values(const ExperimentConfig& cfg) {
  io::KeyValues kv;
  kv["method"] = std::string(train::to_string(cfg.method));
  kv["dim"] = std::string(data::to_string(cfg.dim));
  kv["inject"] = std::string(data::to_string(cfg.injection));
  kv["noise"] = std::string(data::to_string(cfg.level));
  kv["seed"] = std::to_string(cfg.seed);
  kv["epochs"] = std::to_string(cfg.resolved_epochs());
  kv["ensemble-size"] = std::to_string(cfg.ensemble_size);
  kv["scale"] = std::string(to_string(cfg.scale));
  kv["out-dir"] = cfg.out_dir.string();
  const auto t = cfg.train_config();
  kv["lambda"] = io::format_double(t.loss.lambda_reg);
  kv["beta-weight"] = io::format_double(t.loss.beta_weight);
  kv["batch-size"] = std::to_string(t.batch_size);
  kv["beta-schedule"] = cfg.beta_schedule;
  kv["sigma-y"] = io::format_double(cfg.noise().sigma_y);
  kv["grad-clip"] = cfg.grad_clip ? io::format_double(*cfg.grad_clip) : "off";
  return kv;
}

namespace {

std::string fmt_epoch(std::string_view tag, const train::EpochRecord& r) {
  std::ostringstream os;
  os << '[' << tag << "] epoch " << r.epoch << " train_loss=" << io::format_double(r.train_loss)
     << " val_loss=" << io::format_double(r.val_loss) << " val_mse=" << io::format_double(r.val_mse);
  return os.str();
}

train::TrainTrace mean_trace(std::span<const train::TrainTrace> members) {
  train::TrainTrace out;
  const std::size_t epochs = members.front().epochs.size();
  const double k = static_cast<double>(members.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    train::EpochRecord r{e, 0.0, 0.0, 0.0};
    for (const auto& m : members) {
      r.train_loss += m.epochs[e].train_loss / k;
      r.val_mse += m.epochs[e].val_mse / k;
      r.val_loss += m.epochs[e].val_loss / k;
    }
    out.epochs.push_back(r);
  }
  return out;
}

void write_sigma_al_csv(const fs::path& path, const train::PredictionSet& p) {
  std::ostringstream os;
  os << "index,mean,sigma_al\n";
  for (std::size_t i = 0; i < p.sigma_al.size(); ++i) {
    os << i << ',' << io::format_double(p.mean[i]) << ',' << io::format_double(p.sigma_al[i]) << '\n';
  }
  io::write_text_file(path, os.str());
}

}  // namespace

ExperimentOutcome run_experiment(const ExperimentConfig& cfg, const LogSink& log) {
  cfg.validate();
  const auto noise = cfg.noise();
  const auto sizes = cfg.resolved_sizes();
  data::GenerateOptions gen;
  gen.allow_custom_sizes = cfg.scale == Scale::Desk;
  const auto splits = data::generate(cfg.dim, noise, cfg.seed, sizes, gen);
  auto train_data = train::TensorData::from(splits.train);
  auto val_data = train::TensorData::from(splits.val);
  auto test_data = train::TensorData::from(splits.test);
  const auto scaling = train::InputScaling::fit(
      train_data, cfg.dim == data::Dimensionality::D0 ? train::InputScaling::Mode::PerFeature
                                                       : train::InputScaling::Mode::Shared);
  scaling.apply(train_data);
  scaling.apply(val_data);
  scaling.apply(test_data);

  const auto heads = cfg.method == train::Method::DE ? nn::mve_heads() : nn::der_heads();
  const nn::Network net(cfg.dim == data::Dimensionality::D0 ? nn::build_mlp_0d(heads) : nn::build_cnn_2d(heads));
  const auto tcfg = cfg.train_config();
  const std::string tag = std::string(train::to_string(cfg.method)) + " " + cfg.id().cell_name();

  const fs::path dir = cfg.experiment_dir();
  const fs::path ckpt_dir = dir / "checkpoints";
  std::error_code ec;
  fs::create_directories(ckpt_dir, ec);
  if (ec) throw DataError("cannot create " + ckpt_dir.string() + ": " + ec.message());

  {
    std::ofstream out(ckpt_dir / "input_scaling.txt", std::ios::trunc);
    if (!out) throw DataError("cannot write " + (ckpt_dir / "input_scaling.txt").string());
    io::write_key_values(out, scaling.to_key_values());
  }

  ExperimentOutcome outcome;
  if (cfg.method == train::Method::DE) {
    auto result = train::train_de(train_data, val_data, net, tcfg, [&](std::size_t m, const train::EpochRecord& r) {
      if (log) log(fmt_epoch(tag + " m" + std::to_string(m), r));
    });
    outcome.predictions = train::predict_de(result.members, net, test_data);
    for (std::size_t m = 0; m < result.members.size(); ++m) {
      const fs::path ck = ckpt_dir / ("member_" + std::to_string(m) + ".ckpt");
      nn::save_checkpoint(ck, net, result.members[m], tcfg.seed + m);
      train::write_trace_csv(ckpt_dir / ("member_" + std::to_string(m) + ".trace.csv"), result.traces[m]);
      result.traces[m].checkpoints.push_back(ck.string());
    }
    outcome.member_traces = std::move(result.traces);
    outcome.trace = mean_trace(outcome.member_traces);
  } else {
    auto result = train::train_der(train_data, val_data, net, tcfg, [&](const train::EpochRecord& r) {
      if (log) log(fmt_epoch(tag, r));
    });
    outcome.predictions = train::predict_der(result.params, net, test_data);
    const fs::path ck = ckpt_dir / "model.ckpt";
    nn::save_checkpoint(ck, net, result.params, tcfg.seed);
    result.trace.checkpoints.push_back(ck.string());
    outcome.trace = result.trace;
    outcome.member_traces = {result.trace};
  }
  outcome.predictions.dataset_id = std::string(data::to_string(cfg.dim)) + "/" +
                                   std::string(data::to_string(noise.injection)) + "/" +
                                   std::string(data::to_string(noise.level)) + "/seed=" + std::to_string(cfg.seed);

  const auto& last = outcome.trace.final_epoch();
  outcome.report = calib::summarize(outcome.predictions, noise.sigma_y, cfg.id(), last.val_mse, last.val_loss);

  const std::array<calib::UncertaintyReport, 1> one{outcome.report};
  calib::write_reports_csv(dir / "report.csv", one);
  train::write_trace_csv(dir / "trace.csv", outcome.trace);
  write_sigma_al_csv(dir / "sigma_al.csv", outcome.predictions);
  {
    std::ofstream out(dir / "config.txt", std::ios::trunc);
    if (!out) throw DataError("cannot write " + (dir / "config.txt").string());
    io::write_key_values(out, to_key_values(cfg));
  }
  return outcome;
}

std::string verdict_json(const calib::DesiderataVerdict& v, train::Method method) {
  nlohmann::ordered_json j;
  j["method"] = std::string(train::to_string(method));
  j["scaling_ok"] = v.scaling_ok;
  j["calibration_ok"] = v.calibration_ok;
  j["universal_ok"] = v.universal_ok;
  j["calibrated_count"] = v.calibrated_count;
  j["report_count"] = v.report_count;
  return j.dump(2) + "\n";
}

GridResult run_grid(const ExperimentConfig& base, std::size_t jobs, const LogSink& log) {
  base.validate();
  if (jobs == 0) throw ConfigError("jobs must be >= 1");
  const auto cells = calib::grid_cells(base.method);
  const fs::path method_dir = base.out_dir / std::string(train::to_string(base.method));
  fs::create_directories(method_dir);

  std::vector<std::optional<ExperimentOutcome>> outcomes(cells.size());
  std::vector<std::string> failures(cells.size());
  std::mutex log_mu;
  LogSink locked_log;
  if (log) {
    locked_log = [&](std::string_view line) {
      std::lock_guard lock(log_mu);
      log(line);
    };
  }

  auto run_cell = [&](std::size_t i) {
    ExperimentConfig cfg = base;
    cfg.dim = cells[i].dim;
    cfg.injection = cells[i].injection;
    cfg.level = cells[i].level;
    try {
      outcomes[i] = run_experiment(cfg, locked_log);
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  };

  std::mutex queue_mu;
  std::size_t next = 0;
  bool abort = false;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(jobs, cells.size()); ++w) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard lock(queue_mu);
            if (abort || next == cells.size()) return;
            i = next++;
          }
          run_cell(i);
          if (!failures[i].empty()) {
            std::lock_guard lock(queue_mu);
            abort = true;
          }
        }
      });
    }
  }

  GridResult result;
  std::ostringstream manifest;
  bool complete = true;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    manifest << cells[i].cell_name() << ' ';
    if (outcomes[i]) {
      manifest << "ok\n";
      result.reports.push_back(outcomes[i]->report);
    } else {
      complete = false;
      manifest << (failures[i].empty() ? "not-run" : "failed: " + failures[i]) << '\n';
    }
  }
  if (!complete) {
    io::write_text_file(method_dir / "partial_manifest.txt", manifest.str());
    calib::write_reports_csv(method_dir / "grid.partial.csv", result.reports);
    throw IncompleteGrid("grid incomplete; see " + (method_dir / "partial_manifest.txt").string());
  }

  result.verdict = calib::desiderata(result.reports);
  calib::write_reports_csv(method_dir / "grid.csv", result.reports);
  io::write_text_file(method_dir / "verdict.json", verdict_json(result.verdict, base.method));

  std::vector<FigureCell> fig;
  for (std::size_t i = 0; i < cells.size(); ++i) fig.push_back({outcomes[i]->report, outcomes[i]->predictions.sigma_al});
  emit_figure(fig, method_dir / ("figure2_" + std::string(train::to_string(base.method)) + ".svg"));
  return result;
}

std::vector<double> read_sigma_al_csv(const fs::path& path) {
  std::istringstream in(io::read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "index,mean,sigma_al") throw DataError(path.string() + ": not a sigma_al CSV");
  std::vector<double> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto last = line.rfind(',');
    if (last == std::string::npos) throw DataError(path.string() + ": malformed row");
    out.push_back(io::parse_double(std::string_view(line).substr(last + 1)));
  }
  return out;
}

std::vector<FigureCell> load_figure_cells(const fs::path& out_dir, train::Method method) {
  std::vector<FigureCell> cells;
  for (const auto& id : calib::grid_cells(method)) {
    const fs::path dir = out_dir / std::string(train::to_string(method)) / id.cell_name();
    if (!fs::exists(dir / "report.csv") || !fs::exists(dir / "sigma_al.csv")) continue;
    const auto reports = calib::read_reports_csv(dir / "report.csv");
    if (reports.size() != 1) throw DataError((dir / "report.csv").string() + ": expected one report");
    cells.push_back({reports.front(), read_sigma_al_csv(dir / "sigma_al.csv")});
  }
  return cells;
}

std::optional<ReferenceValue> reference_value(data::NoiseLevel level, data::Dimensionality dim,
                                              data::Injection injection, train::Method method) {
  // Column order: 0D output, 0D input, 2D output, 2D input; DE then DER.
  static constexpr std::array<ReferenceValue, 8> kLow{{{0.0001, -0.0502}, {0.0001, -3.0890},
                                                        {0.0001, -0.0416}, {0.0001, -2.9338},
                                                        {0.0006, -0.0426}, {0.0002, -2.7691},
                                                        {0.0002, -0.0993}, {0.0001, -3.0639}}};
  static constexpr std::array<ReferenceValue, 8> kHigh{{{0.0098, -0.1724}, {0.0097, -0.8728},
                                                         {0.0091, -0.1678}, {0.0092, -0.9018},
                                                         {0.0099, -0.1767}, {0.0086, -0.9202},
                                                         {0.0047, -0.1330}, {0.0042, -1.3358}}};
  if (level == data::NoiseLevel::Medium) return std::nullopt;
  const std::size_t col = (dim == data::Dimensionality::D2 ? 4 : 0) +
                          (injection == data::Injection::Input ? 2 : 0) +
                          (method == train::Method::DER ? 1 : 0);
  return level == data::NoiseLevel::Low ? kLow[col] : kHigh[col];
}

train::TrainTrace read_trace_csv(const fs::path& path) {
  std::istringstream in(io::read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || line.rfind("epoch,val_mse,val_loss", 0) != 0) {
    throw DataError(path.string() + ": not a trace CSV");
  }
  train::TrainTrace trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() < 3) throw DataError(path.string() + ": malformed row");
    train::EpochRecord r;
    r.epoch = io::parse_uint(f[0]);
    r.val_mse = io::parse_double(f[1]);
    r.val_loss = io::parse_double(f[2]);
    if (f.size() > 3) r.train_loss = io::parse_double(f[3]);
    trace.epochs.push_back(r);
  }
  return trace;
}

std::string render_table(std::span<const TableCell> cells, data::NoiseLevel level) {
  struct Column {
    data::Dimensionality dim;
    data::Injection inj;
    train::Method method;
  };
  std::vector<Column> columns;
  for (auto dim : {data::Dimensionality::D0, data::Dimensionality::D2}) {
    for (auto inj : {data::Injection::Output, data::Injection::Input}) {
      for (auto m : {train::Method::DE, train::Method::DER}) columns.push_back({dim, inj, m});
    }
  }
  std::vector<const train::TrainTrace*> found(columns.size(), nullptr);
  for (const auto& c : cells) {
    if (c.id.level != level) continue;
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i].dim == c.id.dim && columns[i].inj == c.id.injection && columns[i].method == c.id.method) {
        found[i] = &c.trace;
      }
    }
  }
  std::string missing;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (!found[i] || found[i]->epochs.empty()) {
      missing += " " + std::string(train::to_string(columns[i].method)) + "/" +
                 calib::ExperimentId{columns[i].method, columns[i].dim, columns[i].inj, level}.cell_name();
    }
  }
  if (!missing.empty()) throw DataError("table is missing experiments:" + missing);

  std::ostringstream os;
  os << "metric";
  for (const auto& c : columns) {
    os << ',' << data::to_string(c.dim) << '_' << data::to_string(c.inj) << '_' << train::to_string(c.method);
  }
  os << "\nMSE Metric";
  for (const auto* t : found) os << ',' << io::format_double(t->final_epoch().val_mse);
  os << "\nLoss";
  for (const auto* t : found) os << ',' << io::format_double(t->final_epoch().val_loss);
  os << '\n';
  if (level != data::NoiseLevel::Medium) {
    os << "Reference MSE";
    for (const auto& c : columns) os << ',' << io::format_double(reference_value(level, c.dim, c.inj, c.method)->mse);
    os << "\nReference Loss";
    for (const auto& c : columns) os << ',' << io::format_double(reference_value(level, c.dim, c.inj, c.method)->loss);
    os << '\n';
  }
  return os.str();
}

void emit_tables(const fs::path& out_dir, data::NoiseLevel level, const fs::path& out) {
  std::vector<TableCell> cells;
  for (auto m : {train::Method::DE, train::Method::DER}) {
    for (const auto& id : calib::grid_cells(m)) {
      if (id.level != level) continue;
      const fs::path trace = out_dir / std::string(train::to_string(m)) / id.cell_name() / "trace.csv";
      if (fs::exists(trace)) cells.push_back({id, read_trace_csv(trace)});
    }
  }
  io::write_text_file(out, render_table(cells, level));
}

bool verify_propagation(std::ostream& out, std::uint64_t seed, std::size_t n_samples) {
  struct Case {
    std::string name;
    double analytic;
    propagate::MonteCarloResult mc;
  };
  std::vector<Case> cases;

  {
    const double m = 2.0;
    const double sx = 0.05;
    const std::array<double, 1> x0{1.0};
    const std::array<double, 1> s{sx};
    cases.push_back({"linear y=m*x (m=2, sigma_x=0.05)", propagate::propagate_linear(m, sx),
                     propagate::mc_propagate([m](std::span<const double> x) { return m * x[0]; }, x0, s,
                                             n_samples, seed)});
  }
  {
    const double sx = 0.003125;
    const std::vector<double> x0(data::kImagePixels, 0.0);
    const std::array<double, 1> s{sx};
    auto sum = [](std::span<const double> x) {
      double t = 0.0;
      for (double v : x) t += v;
      return t;
    };
    cases.push_back({"image sum (sigma_x=0.003125, N=1024)", propagate::propagate_image_sum(sx, data::kImagePixels),
                     propagate::mc_propagate(sum, x0, s, n_samples, seed)});
  }
  {
    const std::array<double, 1> x0{1.0};
    const std::array<double, 1> s{0.0};
    cases.push_back({"zero noise", propagate::propagate_linear(2.0, 0.0),
                     propagate::mc_propagate([](std::span<const double> x) { return 2.0 * x[0]; }, x0, s,
                                             n_samples, seed)});
  }

  bool all = true;
  for (const auto& c : cases) {
    const bool ok = c.analytic == 0.0 ? c.mc.std == 0.0
                                      : std::abs(c.mc.std - c.analytic) <= 0.01 * c.analytic;
    all = all && ok;
    out << (ok ? "PASS " : "FAIL ") << c.name << ": analytic=" << io::format_double(c.analytic)
        << " monte_carlo=" << io::format_double(c.mc.std) << '\n';
  }
  return all;
}

}  // namespace alea::runner
