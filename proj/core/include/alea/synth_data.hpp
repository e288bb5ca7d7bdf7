#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace alea::data {

enum class Injection { Input, Output };
enum class NoiseLevel { Low, Medium, High };
enum class Dimensionality { D0, D2 };
enum class Split { Train, Val, Test };

/// Target output uncertainty for a level: Low 0.01, Medium 0.05, High 0.1.
double sigma_for(NoiseLevel level);

std::string_view to_string(Injection v);
std::string_view to_string(NoiseLevel v);
std::string_view to_string(Dimensionality v);
std::string_view to_string(Split v);
Injection parse_injection(std::string_view s);
NoiseLevel parse_level(std::string_view s);
Dimensionality parse_dimensionality(std::string_view s);

struct NoiseSpec {
  Injection injection = Injection::Output;
  NoiseLevel level = NoiseLevel::Low;
  double sigma_y = 0.01;  // output-space standard deviation, target units

  static NoiseSpec make(Injection injection, NoiseLevel level);
  void validate() const;
};

struct Sample0D {
  double m = 0.0;
  double x = 0.0;
  double y = 0.0;
  std::optional<double> x_noisy;  // input injection only
  std::optional<double> y_noisy;  // output injection only
};

inline constexpr std::size_t kImageSide = 32;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;
using Image = std::array<double, kImagePixels>;  // row-major

struct SersicParams {
  double radius = 0.005;   // effective radius, unit-square coordinates, [0, 0.01]
  double amplitude = 1.0;  // [1, 10]
  double angle = 0.0;      // position angle in radians, [-1.5, 1.5]

  void validate() const;
};

struct ImageSample {
  Image pixels{};                     // clean, already in target units
  std::optional<Image> pixels_noisy;  // input injection only
  SersicParams params;
  double y = 0.0;
  std::optional<double> y_noisy;  // output injection only
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;

  friend bool operator==(const SplitSizes&, const SplitSizes&) = default;
};

/// 90000/10000/10000 for 0D and 4500/500/500 for 2D.
SplitSizes paper_sizes(Dimensionality dim);
/// 9000/1000/1000 for 0D and 1500/200/200 for 2D.
SplitSizes desk_sizes(Dimensionality dim);

struct Dataset {
  Dimensionality dimensionality = Dimensionality::D0;
  Split split = Split::Train;
  NoiseSpec noise;
  std::uint64_t seed = 0;
  double scale = 1.0;  // 2D raw-sum to target scale factor; 1 for 0D
  std::variant<std::vector<Sample0D>, std::vector<ImageSample>> samples;

  std::size_t size() const;
  const std::vector<Sample0D>& samples_0d() const;
  const std::vector<ImageSample>& images() const;

  /// Network input width: 2 for 0D (m, x), 1024 for 2D.
  std::size_t feature_count() const;
  /// Inputs the model sees, row-major n x feature_count. Input injection
  /// uses the noisy inputs, output injection the clean ones.
  std::vector<double> model_inputs() const;
  /// Labels the model is trained on: y_noisy for output injection, y otherwise.
  std::vector<double> model_targets() const;
  std::vector<double> clean_targets() const;
};

struct DatasetSplits {
  Dataset train;
  Dataset val;
  Dataset test;

  const Dataset& get(Split split) const;
};

struct GenerateOptions {
  /// Sizes other than the paper splits are refused unless this is set.
  bool allow_custom_sizes = false;
  /// Lower end of the 0D x grid. Must be > 0.
  double x_min = 0.5;
  std::size_t x_grid_points = 1000;
};

/// y ~ U[0, 2], x from a linear grid on [x_min, 10], m = y / x. Output
/// injection adds N(0, sigma_y^2) to y; input injection adds
/// N(0, (sigma_y / |m|)^2) to x so the propagated output sigma equals sigma_y.
DatasetSplits generate_0d(const NoiseSpec& noise, std::uint64_t seed, const SplitSizes& sizes,
                          const GenerateOptions& options = {});

/// Exponential (n = 1) Sersic profile with ellipticity 0.5 centred on the unit
/// square, sampled at the 32 x 32 pixel centres. Radius and amplitude must be
/// in range; any finite angle is accepted.
Image render_sersic(const SersicParams& params);

struct TargetScaling {
  double scale = 1.0;
  std::vector<double> targets;
};

/// Single scale mapping the largest raw sum to 2.
TargetScaling finalize_targets(std::span<const double> raw_sums);

/// raw_sums * scale; throws DataError if any result leaves [0, 2].
std::vector<double> apply_target_scale(std::span<const double> raw_sums, double scale);

/// Sersic images with uniform targets on [0, 2]. Output injection perturbs y;
/// input injection adds N(0, (sigma_y / 32)^2) to every rescaled pixel.
DatasetSplits generate_2d(const NoiseSpec& noise, std::uint64_t seed, const SplitSizes& sizes,
                          const GenerateOptions& options = {});

DatasetSplits generate(Dimensionality dim, const NoiseSpec& noise, std::uint64_t seed,
                       const SplitSizes& sizes, const GenerateOptions& options = {});

/// Writes dataset.txt (key=value header) and {train,val,test}.bin rows of
/// little-endian float64. 0D rows: m, x, [x_noisy], y, [y_noisy]. 2D rows:
/// 1024 pixels, [1024 noisy pixels], y, [y_noisy].
void save_dataset(const std::filesystem::path& dir, const DatasetSplits& splits);
DatasetSplits load_dataset(const std::filesystem::path& dir);

}  // namespace alea::data
