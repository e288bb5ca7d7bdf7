#include <algorithm>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <gtest/gtest.h>

#include "alea/error.hpp"
#include "alea/io.hpp"
#include "alea/runner.hpp"

using namespace alea;
using namespace alea::runner;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("alea_runner_" + name);
  fs::remove_all(p);
  return p;
}

std::size_t count_of(const std::string& haystack, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

bool well_formed_xml(const std::string& text) {
  std::istringstream in(text);
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_xml(in, tree);
  } catch (const boost::property_tree::xml_parser_error&) {
    return false;
  }
  return tree.count("svg") == 1;
}

ExperimentConfig quick(train::Method method, const fs::path& out) {
  ExperimentConfig c;
  c.method = method;
  c.level = data::NoiseLevel::High;
  c.seed = 3;
  c.epochs = 1;
  c.ensemble_size = 2;
  c.out_dir = out;
  return c;
}

FigureCell cell(data::Dimensionality dim, data::Injection inj, data::NoiseLevel level, std::vector<double> s) {
  FigureCell c;
  c.report = calib::summarize(s, data::sigma_for(level), {train::Method::DE, dim, inj, level});
  c.sigma_al = std::move(s);
  return c;
}

std::vector<TableCell> table_cells(data::NoiseLevel level) {
  std::vector<TableCell> cells;
  double v = 0.001;
  for (auto m : {train::Method::DE, train::Method::DER}) {
    for (const auto& id : calib::grid_cells(m)) {
      if (id.level != level) continue;
      train::TrainTrace t;
      t.epochs = {{0, 0.0, 1.0, 1.0}, {1, 0.0, v, -v}};
      v += 0.001;
      cells.push_back({id, t});
    }
  }
  return cells;
}

}  // namespace

TEST(Scale, ParseAndResolve) {
  EXPECT_EQ(parse_scale("desk"), Scale::Desk);
  EXPECT_EQ(to_string(Scale::Paper), "paper");
  EXPECT_THROW(parse_scale("huge"), ConfigError);
  ExperimentConfig c;
  EXPECT_EQ(c.resolved_epochs(), kDeskEpochs);
  EXPECT_EQ(c.resolved_sizes(), (data::SplitSizes{9000, 1000, 1000}));
  EXPECT_EQ(c.resolved_batch_size(), 128u);
  c.scale = Scale::Paper;
  EXPECT_EQ(c.resolved_epochs(), kPaperEpochs);
  EXPECT_EQ(c.resolved_sizes(), (data::SplitSizes{90000, 10000, 10000}));
  c.dim = data::Dimensionality::D2;
  EXPECT_EQ(c.resolved_sizes(), (data::SplitSizes{4500, 500, 500}));
  EXPECT_EQ(c.resolved_batch_size(), 32u);
}

TEST(ExperimentConfig, DerUsesOneModel) {
  ExperimentConfig c;
  c.method = train::Method::DER;
  c.lambda = 0.0;
  const auto t = c.train_config();
  EXPECT_EQ(t.ensemble_size, 1u);
  EXPECT_EQ(t.loss.lambda_reg, 0.0);
  EXPECT_EQ(t.method, train::Method::DER);
}

TEST(ExperimentConfig, DirectoryLayout) {
  ExperimentConfig c;
  c.out_dir = "res";
  c.method = train::Method::DER;
  c.injection = data::Injection::Input;
  c.level = data::NoiseLevel::Medium;
  EXPECT_EQ(c.experiment_dir(), fs::path("res") / "der" / "0d_input_medium");
}

TEST(KeyValues, ApplyAndRoundTrip) {
  const io::KeyValues kv{{"method", "der"},   {"dim", "2d"},        {"inject", "input"},
                         {"noise", "medium"}, {"seed", "17"},       {"epochs", "5"},
                         {"lambda", "0.1"},   {"batch-size", "16"}, {"grad-clip", "off"},
                         {"beta-schedule", "linear"}};
  const auto c = apply_key_values({}, kv);
  EXPECT_EQ(c.method, train::Method::DER);
  EXPECT_EQ(c.dim, data::Dimensionality::D2);
  EXPECT_EQ(c.injection, data::Injection::Input);
  EXPECT_EQ(c.level, data::NoiseLevel::Medium);
  EXPECT_EQ(c.seed, 17u);
  EXPECT_EQ(c.epochs, 5u);
  EXPECT_EQ(c.lambda, 0.1);
  EXPECT_EQ(c.batch_size, 16u);
  EXPECT_FALSE(c.grad_clip.has_value());
  EXPECT_EQ(c.beta_schedule, "linear");

  const auto back = apply_key_values({}, to_key_values(c));
  EXPECT_EQ(to_key_values(back), to_key_values(c));
}

TEST(KeyValues, InvalidValuesAreConfigErrors) {
  EXPECT_THROW(apply_key_values({}, {{"method", "gp"}}), ConfigError);
  EXPECT_THROW(apply_key_values({}, {{"noise", "extreme"}}), ConfigError);
  EXPECT_THROW(apply_key_values({}, {{"seed", "-3"}}), ConfigError);
  EXPECT_THROW(apply_key_values({}, {{"colour", "red"}}), ConfigError);
  EXPECT_THROW(apply_key_values({}, {{"epochs", "0"}}).validate(), ConfigError);
  EXPECT_THROW(apply_key_values({}, {{"grad-clip", "-1"}}).validate(), ConfigError);
}

TEST(ExperimentConfig, SigmaOverride) {
  ExperimentConfig c;
  c.level = data::NoiseLevel::High;
  EXPECT_EQ(c.noise().sigma_y, 0.1);
  c.sigma_y = 0.0;
  EXPECT_EQ(c.noise().sigma_y, 0.0);
}

TEST(RunExperiment, DeHighNoiseWritesArtifacts) {
  const auto out = scratch("de");
  const auto cfg = quick(train::Method::DE, out);
  std::vector<std::string> lines;
  const auto o = run_experiment(cfg, [&](std::string_view l) { lines.emplace_back(l); });
  EXPECT_EQ(o.report.sigma_y_true, 0.1);
  EXPECT_EQ(o.predictions.sigma_al.size(), 1000u);
  EXPECT_EQ(o.member_traces.size(), 2u);
  EXPECT_EQ(lines.size(), 2u);
  const auto dir = cfg.experiment_dir();
  for (const char* f : {"report.csv", "trace.csv", "sigma_al.csv", "config.txt", "checkpoints/member_0.ckpt",
                        "checkpoints/member_1.ckpt", "checkpoints/input_scaling.txt"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const auto reports = calib::read_reports_csv(dir / "report.csv");
  ASSERT_EQ(reports.size(), 1u);
  EXPECT_EQ(reports[0].mean_sigma_al, o.report.mean_sigma_al);
  EXPECT_EQ(read_sigma_al_csv(dir / "sigma_al.csv"), o.predictions.sigma_al);
  EXPECT_EQ(apply_key_values({}, io::read_key_values(dir / "config.txt")).seed, 3u);
  fs::remove_all(out);
}

TEST(RunExperiment, RerunIsByteIdentical) {
  const auto a = scratch("det_a");
  const auto b = scratch("det_b");
  run_experiment(quick(train::Method::DER, a));
  run_experiment(quick(train::Method::DER, b));
  const auto rel = quick(train::Method::DER, "").experiment_dir();
  for (const char* f : {"report.csv", "sigma_al.csv", "trace.csv"}) {
    EXPECT_EQ(io::read_text_file(a / rel / f), io::read_text_file(b / rel / f)) << f;
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(RunExperiment, DerWithoutRegulariserReportsMeanNegativeLogPdf) {
  const auto out = scratch("der_l0");
  auto cfg = quick(train::Method::DER, out);
  cfg.lambda = 0.0;
  const auto o = run_experiment(cfg);

  // Rebuild the validation split and the trained model from disk.
  const auto splits = data::generate(cfg.dim, cfg.noise(), cfg.seed, cfg.resolved_sizes(), {.allow_custom_sizes = true});
  auto val = train::TensorData::from(splits.val);
  train::InputScaling::from_key_values(io::read_key_values(cfg.experiment_dir() / "checkpoints/input_scaling.txt"))
      .apply(val);
  const nn::Network net(nn::build_mlp_0d(nn::der_heads()));
  const auto ckpt = nn::load_checkpoint(cfg.experiment_dir() / "checkpoints/model.ckpt", net);
  const auto heads = net.forward(ckpt.params, val.inputs, val.n);
  double expected = 0.0;
  for (std::size_t i = 0; i < val.n; ++i) {
    expected -= loss::st_log_pdf(val.targets[i], {heads(i, 0), heads(i, 1), heads(i, 2), heads(i, 3)});
  }
  EXPECT_NEAR(o.trace.final_epoch().val_loss, expected / static_cast<double>(val.n), 1e-12);
  fs::remove_all(out);
}

TEST(RunExperiment, UnwritableOutputDirectory) {
  const auto out = scratch("blocked");
  fs::create_directories(out);
  io::write_text_file(out / "de", "not a directory");
  EXPECT_THROW(run_experiment(quick(train::Method::DE, out)), DataError);
  fs::remove_all(out);
}

TEST(VerdictJson, Fields) {
  calib::DesiderataVerdict v{true, false, false, 7, 12};
  const auto j = verdict_json(v, train::Method::DE);
  EXPECT_NE(j.find("\"method\": \"de\""), std::string::npos);
  EXPECT_NE(j.find("\"scaling_ok\": true"), std::string::npos);
  EXPECT_NE(j.find("\"calibrated_count\": 7"), std::string::npos);
}

TEST(Figure, ThreeLevelsGiveThreeSilhouettesAndThreeDashedLines) {
  const std::vector<FigureCell> cells{
      cell(data::Dimensionality::D0, data::Injection::Output, data::NoiseLevel::Low, {0.009, 0.011, 0.012}),
      cell(data::Dimensionality::D0, data::Injection::Output, data::NoiseLevel::Medium, {0.04, 0.05, 0.06}),
      cell(data::Dimensionality::D0, data::Injection::Output, data::NoiseLevel::High, {0.09, 0.1, 0.13})};
  const auto svg = render_figure(cells);
  EXPECT_TRUE(well_formed_xml(svg));
  EXPECT_EQ(count_of(svg, "class=\"silhouette\""), 3u);
  EXPECT_EQ(count_of(svg, "class=\"mean\""), 3u);
  EXPECT_EQ(count_of(svg, "class=\"error-bar\""), 3u);
  // Dashed truth lines are drawn in each of the four panels.
  EXPECT_EQ(count_of(svg, "class=\"true-sigma\""), 12u);
}

TEST(Figure, DegenerateDistributionHasZeroLengthErrorBar) {
  const std::vector<FigureCell> cells{
      cell(data::Dimensionality::D2, data::Injection::Input, data::NoiseLevel::High, std::vector<double>(20, 0.1))};
  const auto svg = render_figure(cells);
  EXPECT_TRUE(well_formed_xml(svg));
  const auto pos = svg.find("class=\"error-bar\"");
  ASSERT_NE(pos, std::string::npos);
  const auto tag_start = svg.rfind('<', pos);
  const auto tag = svg.substr(tag_start, svg.find('>', pos) - tag_start);
  auto attr = [&](const std::string& name) {
    const auto p = tag.find(" " + name + "=\"") + name.size() + 3;
    return tag.substr(p, tag.find('"', p) - p);
  };
  EXPECT_EQ(attr("x1"), attr("x2"));
  EXPECT_NE(svg.find("data-std=\"0\""), std::string::npos);
}

TEST(Figure, EmptyInputThrows) {
  EXPECT_THROW(emit_figure({}, fs::temp_directory_path() / "alea_empty.svg"), DataError);
}

TEST(DataFigure, WellFormed) {
  const auto lines = data::generate_0d(data::NoiseSpec::make(data::Injection::Output, data::NoiseLevel::High), 1,
                                       {20, 5, 5}, {.allow_custom_sizes = true});
  const auto images = data::generate_2d(data::NoiseSpec::make(data::Injection::Input, data::NoiseLevel::High), 1,
                                        {6, 2, 2}, {.allow_custom_sizes = true});
  const auto svg = render_data_figure(lines.train, images.train, 4);
  EXPECT_TRUE(well_formed_xml(svg));
  EXPECT_EQ(count_of(svg, "data-target="), 4u);
}

TEST(Tables, PublishedReferenceValues) {
  using data::Dimensionality;
  using data::Injection;
  using data::NoiseLevel;
  EXPECT_EQ(reference_value(NoiseLevel::Low, Dimensionality::D0, Injection::Output, train::Method::DE)->mse, 0.0001);
  EXPECT_EQ(reference_value(NoiseLevel::High, Dimensionality::D0, Injection::Output, train::Method::DE)->mse, 0.0098);
  EXPECT_EQ(reference_value(NoiseLevel::High, Dimensionality::D0, Injection::Output, train::Method::DER)->loss,
            -0.8728);
  EXPECT_EQ(reference_value(NoiseLevel::Low, Dimensionality::D2, Injection::Output, train::Method::DE)->mse, 0.0006);
  EXPECT_EQ(reference_value(NoiseLevel::High, Dimensionality::D2, Injection::Input, train::Method::DER)->loss,
            -1.3358);
  EXPECT_FALSE(reference_value(NoiseLevel::Medium, Dimensionality::D0, Injection::Output, train::Method::DE));
}

TEST(Tables, LayoutMirrorsPublishedTables) {
  const auto csv = render_table(table_cells(data::NoiseLevel::High), data::NoiseLevel::High);
  std::istringstream in(csv);
  std::string header, mse, loss, ref_mse;
  std::getline(in, header);
  std::getline(in, mse);
  std::getline(in, loss);
  std::getline(in, ref_mse);
  EXPECT_EQ(header,
            "metric,0d_output_de,0d_output_der,0d_input_de,0d_input_der,2d_output_de,2d_output_der,2d_input_de,"
            "2d_input_der");
  EXPECT_EQ(mse.rfind("MSE Metric,", 0), 0u);
  EXPECT_EQ(loss.rfind("Loss,", 0), 0u);
  EXPECT_EQ(ref_mse, "Reference MSE,0.0098,0.0097,0.0091,0.0092,0.0099,0.0086,0.0047,0.0042");
  EXPECT_EQ(std::count(mse.begin(), mse.end(), ','), 8);
}

TEST(Tables, MissingCellsAreListed) {
  auto cells = table_cells(data::NoiseLevel::Low);
  cells.erase(cells.begin());
  try {
    render_table(cells, data::NoiseLevel::Low);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("de/0d_output_low"), std::string::npos);
  }
}

TEST(Tables, EmitFromRunDirectory) {
  const auto out = scratch("tables");
  EXPECT_THROW(emit_tables(out, data::NoiseLevel::High, out / "t.csv"), DataError);
  const auto cfg = quick(train::Method::DER, out);
  run_experiment(cfg);
  const auto trace = read_trace_csv(cfg.experiment_dir() / "trace.csv");
  EXPECT_EQ(trace.epochs.size(), 1u);
  fs::remove_all(out);
}

TEST(VerifyPropagation, AllCasesAgree) {
  std::ostringstream os;
  EXPECT_TRUE(verify_propagation(os, 1, 100000));
  EXPECT_EQ(count_of(os.str(), "PASS "), 3u);
}
