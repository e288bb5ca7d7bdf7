#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "alea/error.hpp"
#include "alea/io.hpp"
#include "alea/stats.hpp"
#include "alea/synth_data.hpp"

using namespace alea;
using namespace alea::data;

namespace {

std::vector<double> residuals_output(const Dataset& d) {
  std::vector<double> r;
  for (const auto& s : d.samples_0d()) r.push_back(*s.y_noisy - s.y);
  return r;
}

std::vector<double> residuals_input(const Dataset& d) {
  std::vector<double> r;
  for (const auto& s : d.samples_0d()) r.push_back(s.m * *s.x_noisy - s.y);
  return r;
}

double image_sum(const Image& img) {
  double t = 0.0;
  for (double v : img) t += v;
  return t;
}

double central_fraction(const Image& img) {
  const std::size_t h = kImageSide / 2;
  const double centre = img[(h - 1) * kImageSide + h - 1] + img[(h - 1) * kImageSide + h] +
                        img[h * kImageSide + h - 1] + img[h * kImageSide + h];
  return centre / image_sum(img);
}

}  // namespace

TEST(NoiseSpec, LevelMapping) {
  EXPECT_EQ(sigma_for(NoiseLevel::Low), 0.01);
  EXPECT_EQ(sigma_for(NoiseLevel::Medium), 0.05);
  EXPECT_EQ(sigma_for(NoiseLevel::High), 0.1);
  EXPECT_EQ(NoiseSpec::make(Injection::Input, NoiseLevel::High).sigma_y, 0.1);
}

TEST(NoiseSpec, EnumStringsRoundTrip) {
  for (auto v : {Injection::Input, Injection::Output}) EXPECT_EQ(parse_injection(to_string(v)), v);
  for (auto v : {NoiseLevel::Low, NoiseLevel::Medium, NoiseLevel::High}) EXPECT_EQ(parse_level(to_string(v)), v);
  for (auto v : {Dimensionality::D0, Dimensionality::D2}) EXPECT_EQ(parse_dimensionality(to_string(v)), v);
  EXPECT_THROW(parse_level("extreme"), ConfigError);
}

TEST(Generate0D, PaperSizesOutputHighNoiseStd) {
  const auto d = generate_0d(NoiseSpec::make(Injection::Output, NoiseLevel::High), 7, paper_sizes(Dimensionality::D0));
  EXPECT_EQ(d.train.size(), 90000u);
  EXPECT_EQ(d.val.size(), 10000u);
  EXPECT_EQ(d.test.size(), 10000u);
  const double s = stats::sample_std(residuals_output(d.train));
  EXPECT_GE(s, 0.099);
  EXPECT_LE(s, 0.101);
}

TEST(Generate0D, ZeroNoiseOverrideIsIdentity) {
  NoiseSpec n = NoiseSpec::make(Injection::Output, NoiseLevel::Low);
  n.sigma_y = 0.0;
  const auto d = generate_0d(n, 4, {500, 50, 50}, {.allow_custom_sizes = true});
  for (const auto& s : d.train.samples_0d()) EXPECT_EQ(*s.y_noisy, s.y);
}

TEST(Generate0D, InputInjectionPropagatesToSigmaY) {
  const auto d = generate_0d(NoiseSpec::make(Injection::Input, NoiseLevel::High), 7, paper_sizes(Dimensionality::D0));
  const double s = stats::sample_std(residuals_input(d.train));
  EXPECT_GE(s, 0.099);
  EXPECT_LE(s, 0.101);
  for (const auto& x : d.train.samples_0d()) {
    EXPECT_FALSE(x.y_noisy.has_value());
    EXPECT_GE(std::abs(x.m), 1e-6);
  }
}

TEST(Generate0D, TargetsUniformAndGridded) {
  const auto d = generate_0d(NoiseSpec::make(Injection::Output, NoiseLevel::Medium), 2, paper_sizes(Dimensionality::D0));
  const auto y = d.train.clean_targets();
  EXPECT_LT(stats::ks_uniform(y, 0.0, 2.0), 0.01);
  const double step = (10.0 - 0.5) / 999.0;
  for (std::size_t i = 0; i < 2000; ++i) {
    const auto& s = d.train.samples_0d()[i];
    EXPECT_GE(s.y, 0.0);
    EXPECT_LE(s.y, 2.0);
    const double k = (s.x - 0.5) / step;
    EXPECT_NEAR(k, std::round(k), 1e-9);
    EXPECT_NEAR(s.m * s.x, s.y, 1e-12);
  }
}

TEST(Generate0D, InputOutputDuality) {
  const auto out = generate_0d(NoiseSpec::make(Injection::Output, NoiseLevel::Medium), 21, paper_sizes(Dimensionality::D0));
  const auto in = generate_0d(NoiseSpec::make(Injection::Input, NoiseLevel::Medium), 21, paper_sizes(Dimensionality::D0));
  const double so = stats::sample_std(residuals_output(out.train));
  const double si = stats::sample_std(residuals_input(in.train));
  EXPECT_LT(std::abs(si - so) / so, 0.02);
}

TEST(Generate0D, Homoskedastic) {
  const auto d = generate_0d(NoiseSpec::make(Injection::Input, NoiseLevel::Low), 8, paper_sizes(Dimensionality::D0));
  auto r = residuals_input(d.train);
  std::mt19937_64 rng(1);
  std::shuffle(r.begin(), r.end(), rng);
  const std::size_t h = r.size() / 2;
  const double a = stats::sample_std(std::span<const double>(r).first(h));
  const double b = stats::sample_std(std::span<const double>(r).subspan(h));
  EXPECT_LT(std::abs(a - b) / b, 0.05);
}

TEST(Generate0D, Deterministic) {
  const auto n = NoiseSpec::make(Injection::Input, NoiseLevel::Medium);
  const auto a = generate_0d(n, 3, {2000, 100, 100}, {.allow_custom_sizes = true});
  const auto b = generate_0d(n, 3, {2000, 100, 100}, {.allow_custom_sizes = true});
  EXPECT_EQ(a.train.model_inputs(), b.train.model_inputs());
  EXPECT_EQ(a.test.model_targets(), b.test.model_targets());
  const auto c = generate_0d(n, 4, {2000, 100, 100}, {.allow_custom_sizes = true});
  EXPECT_NE(a.train.model_inputs(), c.train.model_inputs());
}

TEST(Generate0D, Errors) {
  const auto n = NoiseSpec::make(Injection::Output, NoiseLevel::Low);
  EXPECT_THROW(generate_0d(n, 1, {10, 10, 10}), ConfigError);
  EXPECT_THROW(generate_0d(n, 1, {10, 10, 10}, {.allow_custom_sizes = true, .x_min = 0.0}), ConfigError);
  EXPECT_THROW(generate_0d(n, 1, {0, 10, 10}, {.allow_custom_sizes = true}), ConfigError);
}

TEST(Generate0D, ModelViewsFollowInjection) {
  const auto in = generate_0d(NoiseSpec::make(Injection::Input, NoiseLevel::High), 1, {50, 5, 5}, {.allow_custom_sizes = true});
  const auto inputs = in.train.model_inputs();
  const auto targets = in.train.model_targets();
  ASSERT_EQ(in.train.feature_count(), 2u);
  for (std::size_t i = 0; i < in.train.size(); ++i) {
    const auto& s = in.train.samples_0d()[i];
    EXPECT_EQ(inputs[2 * i], s.m);
    EXPECT_EQ(inputs[2 * i + 1], *s.x_noisy);
    EXPECT_EQ(targets[i], s.y);
  }
  const auto out = generate_0d(NoiseSpec::make(Injection::Output, NoiseLevel::High), 1, {50, 5, 5}, {.allow_custom_sizes = true});
  EXPECT_EQ(out.train.model_targets()[0], *out.train.samples_0d()[0].y_noisy);
  EXPECT_EQ(out.train.model_inputs()[1], out.train.samples_0d()[0].x);
}

TEST(Sersic, NonNegativeAndPeakedAtCentre) {
  const SersicParams p{0.008, 3.0, 0.7};
  const Image img = render_sersic(p);
  const double peak = *std::max_element(img.begin(), img.end());
  const std::size_t h = kImageSide / 2;
  for (double v : img) EXPECT_GE(v, 0.0);
  EXPECT_EQ(peak, std::max({img[(h - 1) * kImageSide + h - 1], img[(h - 1) * kImageSide + h],
                            img[h * kImageSide + h - 1], img[h * kImageSide + h]}));
}

TEST(Sersic, LinearInAmplitude) {
  const Image a = render_sersic({0.006, 2.0, 0.2});
  const Image b = render_sersic({0.006, 4.0, 0.2});
  for (std::size_t i = 0; i < kImagePixels; ++i) EXPECT_EQ(b[i], 2.0 * a[i]);
}

TEST(Sersic, RotationByPiIsInvariant) {
  const Image a = render_sersic({0.009, 5.0, 0.3});
  const Image b = render_sersic({0.009, 5.0, 0.3 - std::numbers::pi});
  for (std::size_t i = 0; i < kImagePixels; ++i) EXPECT_NEAR(a[i], b[i], 1e-12 * std::max(1.0, a[i]));
}

TEST(Sersic, ConcentratesAsRadiusShrinks) {
  double prev = 0.0;
  for (double r : {0.01, 0.008, 0.006, 0.004, 0.002}) {
    const double f = central_fraction(render_sersic({r, 1.0, 0.0}));
    EXPECT_GT(f, prev);
    prev = f;
  }
}

TEST(Sersic, RejectsOutOfRange) {
  EXPECT_THROW(render_sersic({0.02, 1.0, 0.0}), ConfigError);
  EXPECT_THROW(render_sersic({0.005, 0.5, 0.0}), ConfigError);
  EXPECT_THROW(render_sersic({0.005, 1.0, std::nan("")}), ConfigError);
  EXPECT_THROW((SersicParams{0.005, 1.0, 2.0}.validate()), ConfigError);
}

TEST(FinalizeTargets, ScalingArithmetic) {
  const std::vector<double> raw{0.0, 1.0, 2.0};
  const auto t = apply_target_scale(raw, 0.9);
  EXPECT_DOUBLE_EQ(t[1], 0.9);
  EXPECT_DOUBLE_EQ(t[2], 1.8);
  const std::vector<double> big{0.0, 1.0, 3.0};
  EXPECT_THROW(apply_target_scale(big, 1.0), DataError);
  const auto f = finalize_targets(big);
  EXPECT_LT(f.scale, 1.0);
  EXPECT_DOUBLE_EQ(f.targets[2], 2.0);
}

TEST(FinalizeTargets, SingleSumMapsToTwo) {
  const std::vector<double> raw{4.0};
  const auto f = finalize_targets(raw);
  EXPECT_DOUBLE_EQ(f.scale, 0.5);
  EXPECT_DOUBLE_EQ(f.targets[0], 2.0);
}

TEST(FinalizeTargets, AllZeroIsDegenerate) {
  const std::vector<double> raw{0.0, 0.0};
  EXPECT_THROW(finalize_targets(raw), DataError);
  const std::vector<double> empty;
  EXPECT_THROW(finalize_targets(empty), DataError);
}

TEST(Generate2D, UniformTargetsAtSeed3) {
  const auto d = generate_2d(NoiseSpec::make(Injection::Output, NoiseLevel::Medium), 3, paper_sizes(Dimensionality::D2));
  ASSERT_EQ(d.train.size(), 4500u);
  const auto y = d.train.clean_targets();
  EXPECT_LT(stats::ks_uniform(y, 0.0, 2.0), 0.05);
  for (const auto& s : d.train.images()) {
    EXPECT_GE(s.y, 0.0);
    EXPECT_LE(s.y, 2.0);
    EXPECT_NEAR(image_sum(s.pixels), s.y, 1e-12);
  }
  for (const auto* split : {&d.val, &d.test}) {
    for (const auto& s : split->images()) EXPECT_LE(s.y, 2.0);
  }
  // Output medium: std(y_noisy - y) within 3% of 0.05.
  std::vector<double> r;
  for (const auto& s : d.train.images()) r.push_back(*s.y_noisy - s.y);
  EXPECT_NEAR(stats::sample_std(r), 0.05, 0.05 * 0.03);
}

TEST(Generate2D, InputNoisePropagatesAsImageSum) {
  const auto d = generate_2d(NoiseSpec::make(Injection::Input, NoiseLevel::High), 5, paper_sizes(Dimensionality::D2));
  std::vector<double> r;
  for (const auto& s : d.train.images()) {
    ASSERT_TRUE(s.pixels_noisy.has_value());
    EXPECT_FALSE(s.y_noisy.has_value());
    r.push_back(image_sum(*s.pixels_noisy) - image_sum(s.pixels));
  }
  const double sd = stats::sample_std(r);
  EXPECT_GE(sd, 0.096);
  EXPECT_LE(sd, 0.104);
  // Per-pixel noise of sigma_y / 32.
  std::vector<double> px;
  for (std::size_t i = 0; i < 200; ++i) {
    const auto& s = d.train.images()[i];
    for (std::size_t k = 0; k < kImagePixels; ++k) px.push_back((*s.pixels_noisy)[k] - s.pixels[k]);
  }
  EXPECT_NEAR(stats::sample_std(px), 0.003125, 0.003125 * 0.01);
}

TEST(Generate2D, DeterministicAndSeedSensitive) {
  const auto n = NoiseSpec::make(Injection::Input, NoiseLevel::Low);
  const auto a = generate_2d(n, 9, {40, 5, 5}, {.allow_custom_sizes = true});
  const auto b = generate_2d(n, 9, {40, 5, 5}, {.allow_custom_sizes = true});
  EXPECT_EQ(a.train.model_inputs(), b.train.model_inputs());
  EXPECT_EQ(a.train.scale, b.train.scale);
  const auto c = generate_2d(n, 10, {40, 5, 5}, {.allow_custom_sizes = true});
  EXPECT_NE(a.train.model_inputs(), c.train.model_inputs());
}

TEST(DatasetIo, RoundTrip0DAnd2D) {
  const auto dir = std::filesystem::temp_directory_path() / "alea_dataset_roundtrip";
  std::filesystem::remove_all(dir);
  const auto d0 = generate_0d(NoiseSpec::make(Injection::Input, NoiseLevel::Medium), 5, {30, 4, 4}, {.allow_custom_sizes = true});
  save_dataset(dir / "d0", d0);
  const auto l0 = load_dataset(dir / "d0");
  EXPECT_EQ(l0.train.model_inputs(), d0.train.model_inputs());
  EXPECT_EQ(l0.test.clean_targets(), d0.test.clean_targets());
  EXPECT_EQ(l0.val.noise.sigma_y, 0.05);
  EXPECT_EQ(l0.train.seed, 5u);

  const auto d2 = generate_2d(NoiseSpec::make(Injection::Output, NoiseLevel::High), 6, {10, 2, 2}, {.allow_custom_sizes = true});
  save_dataset(dir / "d2", d2);
  const auto l2 = load_dataset(dir / "d2");
  EXPECT_EQ(l2.train.model_inputs(), d2.train.model_inputs());
  EXPECT_EQ(l2.train.model_targets(), d2.train.model_targets());
  EXPECT_EQ(l2.train.scale, d2.train.scale);
  std::filesystem::remove_all(dir);
}

TEST(DatasetIo, HeaderIsKeyValueText) {
  const auto dir = std::filesystem::temp_directory_path() / "alea_dataset_header";
  std::filesystem::remove_all(dir);
  save_dataset(dir, generate_0d(NoiseSpec::make(Injection::Output, NoiseLevel::Low), 1, {10, 2, 2}, {.allow_custom_sizes = true}));
  const auto kv = io::read_key_values(dir / "dataset.txt");
  EXPECT_EQ(kv.at("dimensionality"), "0d");
  EXPECT_EQ(kv.at("injection"), "output");
  EXPECT_EQ(kv.at("level"), "low");
  EXPECT_EQ(kv.at("n_train"), "10");
  EXPECT_EQ(std::filesystem::file_size(dir / "train.bin"), 10u * 4u * 8u);
  std::filesystem::remove_all(dir);
}
