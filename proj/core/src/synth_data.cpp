#include "alea/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "alea/error.hpp"
#include "alea/io.hpp"
#include "alea/propagate.hpp"
#include "alea/rng.hpp"

namespace alea::data {
namespace {

constexpr double kTargetMax = 2.0;
constexpr double kXMax = 10.0;
constexpr double kMinSlope = 1e-6;

// b_n for n = 1: the solution of gamma_lower(2, b) = Gamma(2) / 2.
constexpr double kSersicB1 = 1.6783469900166612;
constexpr double kEllipticity = 0.5;
constexpr double kRadiusMax = 0.01;
constexpr double kAmplitudeMin = 1.0;
constexpr double kAmplitudeMax = 10.0;
constexpr double kAngleMax = 1.5;
constexpr std::size_t kMaxParamTries = 100'000;

Stream clean_stream(Split s) {
  switch (s) {
    case Split::Train: return Stream::CleanTrain;
    case Split::Val: return Stream::CleanVal;
    case Split::Test: return Stream::CleanTest;
  }
  return Stream::CleanTrain;
}

Stream noise_stream(Split s) {
  switch (s) {
    case Split::Train: return Stream::NoiseTrain;
    case Split::Val: return Stream::NoiseVal;
    case Split::Test: return Stream::NoiseTest;
  }
  return Stream::NoiseTrain;
}

std::size_t count_for(const SplitSizes& sizes, Split s) {
  switch (s) {
    case Split::Train: return sizes.train;
    case Split::Val: return sizes.val;
    case Split::Test: return sizes.test;
  }
  return 0;
}

constexpr std::array<Split, 3> kSplits{Split::Train, Split::Val, Split::Test};

void check_request(Dimensionality dim, const NoiseSpec& noise, const SplitSizes& sizes,
                   const GenerateOptions& options) {
  noise.validate();
  if (sizes.train == 0 || sizes.val == 0 || sizes.test == 0) {
    throw ConfigError("split sizes must all be > 0");
  }
  if (!options.allow_custom_sizes && sizes != paper_sizes(dim)) {
    throw ConfigError("split sizes differ from the standard " + std::string(to_string(dim)) +
                    " splits; set allow_custom_sizes to override");
  }
  if (!(options.x_min > 0.0) || !(options.x_min < kXMax)) {
    throw ConfigError("x_min must lie in (0, 10)");
  }
  if (options.x_grid_points < 2) throw ConfigError("x grid needs at least two points");
}

Dataset empty_dataset(Dimensionality dim, Split split, const NoiseSpec& noise, std::uint64_t seed) {
  Dataset d;
  d.dimensionality = dim;
  d.split = split;
  d.noise = noise;
  d.seed = seed;
  return d;
}

Dataset& split_ref(DatasetSplits& splits, Split s) {
  switch (s) {
    case Split::Train: return splits.train;
    case Split::Val: return splits.val;
    case Split::Test: return splits.test;
  }
  return splits.train;
}

// Pixel value of a unit-amplitude profile at offset (dx, dy) from the centre.
double sersic_at(double dx, double dy, double c, double s, double inv_radius) {
  constexpr double kInvQ = 1.0 / (1.0 - kEllipticity);
  const double major = dx * c + dy * s;
  const double minor = (-dx * s + dy * c) * kInvQ;
  return std::exp(-kSersicB1 * (std::sqrt(major * major + minor * minor) * inv_radius - 1.0));
}

double pixel_offset(std::size_t i) { return (static_cast<double>(i) + 0.5) / static_cast<double>(kImageSide) - 0.5; }

// Total flux of a unit-amplitude source. The profile is symmetric under
// rotation by pi about the centre, so the upper half is summed twice.
double unit_sum(double radius, double angle) {
  if (radius == 0.0) return 0.0;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double inv_radius = 1.0 / radius;
  double sum = 0.0;
  for (std::size_t row = 0; row < kImageSide / 2; ++row) {
    const double dy = pixel_offset(row);
    for (std::size_t col = 0; col < kImageSide; ++col) sum += sersic_at(pixel_offset(col), dy, c, s, inv_radius);
  }
  return 2.0 * sum;
}

// Largest unit-amplitude flux over the angle range at the largest radius.
// Flux is monotone in radius, so this bounds every draw up to the grid
// resolution in angle.
double max_unit_sum() {
  constexpr int kAngles = 301;
  double best = 0.0;
  for (int i = 0; i < kAngles; ++i) {
    const double angle = -kAngleMax + 2.0 * kAngleMax * i / (kAngles - 1);
    best = std::max(best, unit_sum(kRadiusMax, angle));
  }
  return best;
}

}  // namespace

double sigma_for(NoiseLevel level) {
  switch (level) {
    case NoiseLevel::Low: return 0.01;
    case NoiseLevel::Medium: return 0.05;
    case NoiseLevel::High: return 0.1;
  }
  return 0.0;
}

std::string_view to_string(Injection v) { return v == Injection::Input ? "input" : "output"; }

std::string_view to_string(NoiseLevel v) {
  switch (v) {
    case NoiseLevel::Low: return "low";
    case NoiseLevel::Medium: return "medium";
    case NoiseLevel::High: return "high";
  }
  return "?";
}

std::string_view to_string(Dimensionality v) { return v == Dimensionality::D0 ? "0d" : "2d"; }

std::string_view to_string(Split v) {
  switch (v) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Injection parse_injection(std::string_view s) {
  if (s == "input") return Injection::Input;
  if (s == "output") return Injection::Output;
  throw ConfigError("unknown injection '" + std::string(s) + "' (expected input|output)");
}

NoiseLevel parse_level(std::string_view s) {
  if (s == "low") return NoiseLevel::Low;
  if (s == "medium") return NoiseLevel::Medium;
  if (s == "high") return NoiseLevel::High;
  throw ConfigError("unknown noise level '" + std::string(s) + "' (expected low|medium|high)");
}

Dimensionality parse_dimensionality(std::string_view s) {
  if (s == "0d") return Dimensionality::D0;
  if (s == "2d") return Dimensionality::D2;
  throw ConfigError("unknown dimensionality '" + std::string(s) + "' (expected 0d|2d)");
}

NoiseSpec NoiseSpec::make(Injection injection, NoiseLevel level) {
  return {injection, level, sigma_for(level)};
}

void NoiseSpec::validate() const {
  if (!(sigma_y >= 0.0) || !std::isfinite(sigma_y)) throw ConfigError("sigma_y must be finite and >= 0");
}

void SersicParams::validate() const {
  if (!(radius >= 0.0 && radius <= kRadiusMax)) throw ConfigError("Sersic radius outside [0, 0.01]");
  if (!(amplitude >= kAmplitudeMin && amplitude <= kAmplitudeMax)) {
    throw ConfigError("Sersic amplitude outside [1, 10]");
  }
  if (!(angle >= -kAngleMax && angle <= kAngleMax)) throw ConfigError("Sersic angle outside [-1.5, 1.5]");
}

SplitSizes paper_sizes(Dimensionality dim) {
  return dim == Dimensionality::D0 ? SplitSizes{90000, 10000, 10000} : SplitSizes{4500, 500, 500};
}

SplitSizes desk_sizes(Dimensionality dim) {
  return dim == Dimensionality::D0 ? SplitSizes{9000, 1000, 1000} : SplitSizes{1500, 200, 200};
}

std::size_t Dataset::size() const {
  return std::visit([](const auto& v) { return v.size(); }, samples);
}

const std::vector<Sample0D>& Dataset::samples_0d() const {
  if (const auto* v = std::get_if<std::vector<Sample0D>>(&samples)) return *v;
  throw DataError("dataset holds images, not 0D samples");
}

const std::vector<ImageSample>& Dataset::images() const {
  if (const auto* v = std::get_if<std::vector<ImageSample>>(&samples)) return *v;
  throw DataError("dataset holds 0D samples, not images");
}

std::size_t Dataset::feature_count() const {
  return dimensionality == Dimensionality::D0 ? 2 : kImagePixels;
}

std::vector<double> Dataset::model_inputs() const {
  const bool noisy = noise.injection == Injection::Input;
  std::vector<double> out;
  out.reserve(size() * feature_count());
  if (dimensionality == Dimensionality::D0) {
    for (const auto& s : samples_0d()) {
      out.push_back(s.m);
      out.push_back(noisy ? s.x_noisy.value() : s.x);
    }
  } else {
    for (const auto& s : images()) {
      const Image& px = noisy ? s.pixels_noisy.value() : s.pixels;
      out.insert(out.end(), px.begin(), px.end());
    }
  }
  return out;
}

std::vector<double> Dataset::model_targets() const {
  const bool noisy = noise.injection == Injection::Output;
  std::vector<double> out;
  out.reserve(size());
  std::visit(
      [&](const auto& v) {
        for (const auto& s : v) out.push_back(noisy ? s.y_noisy.value() : s.y);
      },
      samples);
  return out;
}

std::vector<double> Dataset::clean_targets() const {
  std::vector<double> out;
  out.reserve(size());
  std::visit(
      [&](const auto& v) {
        for (const auto& s : v) out.push_back(s.y);
      },
      samples);
  return out;
}

const Dataset& DatasetSplits::get(Split split) const {
  switch (split) {
    case Split::Train: return train;
    case Split::Val: return val;
    case Split::Test: return test;
  }
  return train;
}

DatasetSplits generate_0d(const NoiseSpec& noise, std::uint64_t seed, const SplitSizes& sizes,
                          const GenerateOptions& options) {
  check_request(Dimensionality::D0, noise, sizes, options);
  const bool input = noise.injection == Injection::Input;
  const std::size_t grid_n = options.x_grid_points;
  const double dx = (kXMax - options.x_min) / static_cast<double>(grid_n - 1);

  DatasetSplits out;
  for (Split split : kSplits) {
    Dataset d = empty_dataset(Dimensionality::D0, split, noise, seed);
    auto clean = make_engine(seed, clean_stream(split));
    auto noisy = make_engine(seed, noise_stream(split));
    std::uniform_real_distribution<double> target(0.0, kTargetMax);
    std::uniform_int_distribution<std::size_t> grid(0, grid_n - 1);
    std::normal_distribution<double> unit(0.0, 1.0);

    std::vector<Sample0D> samples(count_for(sizes, split));
    for (auto& s : samples) {
      do {
        s.y = target(clean);
        s.x = options.x_min + dx * static_cast<double>(grid(clean));
        s.m = s.y / s.x;
        // sigma_x = sigma_y / |m| diverges for flat lines.
      } while (input && std::abs(s.m) < kMinSlope);

      const double z = unit(noisy);
      if (input) {
        const double sigma_x = noise.sigma_y / std::abs(s.m);
        s.x_noisy = s.x + sigma_x * z;
      } else {
        s.y_noisy = s.y + noise.sigma_y * z;
      }
    }
    d.samples = std::move(samples);
    split_ref(out, split) = std::move(d);
  }
  return out;
}

Image render_sersic(const SersicParams& params) {
  // Any finite angle renders; the sampling range is enforced by validate().
  SersicParams in_range = params;
  in_range.angle = 0.0;
  in_range.validate();
  if (!std::isfinite(params.angle)) throw ConfigError("Sersic angle must be finite");
  Image img{};
  if (params.radius == 0.0) return img;  // zero-size source: no flux
  const double c = std::cos(params.angle);
  const double s = std::sin(params.angle);
  const double inv_radius = 1.0 / params.radius;
  for (std::size_t row = 0; row < kImageSide; ++row) {
    const double dy = pixel_offset(row);
    for (std::size_t col = 0; col < kImageSide; ++col) {
      img[row * kImageSide + col] = params.amplitude * sersic_at(pixel_offset(col), dy, c, s, inv_radius);
    }
  }
  return img;
}

TargetScaling finalize_targets(std::span<const double> raw_sums) {
  if (raw_sums.empty()) throw DataError("finalize_targets: no raw sums");
  double max_sum = 0.0;
  for (double v : raw_sums) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DataError("finalize_targets: raw sums must be finite and >= 0");
    max_sum = std::max(max_sum, v);
  }
  if (max_sum == 0.0) throw DataError("finalize_targets: all raw sums are zero (degenerate dataset)");
  TargetScaling result;
  result.scale = kTargetMax / max_sum;
  result.targets.reserve(raw_sums.size());
  for (double v : raw_sums) result.targets.push_back(std::min(v * result.scale, kTargetMax));
  return result;
}

std::vector<double> apply_target_scale(std::span<const double> raw_sums, double scale) {
  std::vector<double> out;
  out.reserve(raw_sums.size());
  for (double v : raw_sums) {
    const double t = v * scale;
    if (!(t >= 0.0 && t <= kTargetMax)) {
      throw DataError("scaled target " + io::format_double(t) + " outside [0, 2]");
    }
    out.push_back(t);
  }
  return out;
}

DatasetSplits generate_2d(const NoiseSpec& noise, std::uint64_t seed, const SplitSizes& sizes,
                          const GenerateOptions& options) {
  check_request(Dimensionality::D2, noise, sizes, options);

  // Targets are drawn uniformly first; each one is then realised by
  // rejection-sampling (radius, angle) until the amplitude that reproduces it
  // falls inside [1, 10]. Flux is linear in amplitude, so this yields an
  // exactly uniform target distribution over the parameter box.
  const double provisional_scale = kTargetMax / (kAmplitudeMax * max_unit_sum());

  struct Draw {
    SersicParams params;
    double raw_sum;
  };
  std::array<std::vector<Draw>, 3> draws;
  std::vector<double> all_raw;
  for (std::size_t k = 0; k < kSplits.size(); ++k) {
    const Split split = kSplits[k];
    auto engine = make_engine(seed, clean_stream(split));
    std::uniform_real_distribution<double> target(0.0, kTargetMax);
    std::uniform_real_distribution<double> radius(0.0, kRadiusMax);
    std::uniform_real_distribution<double> angle(-kAngleMax, kAngleMax);
    const std::size_t n = count_for(sizes, split);
    draws[k].reserve(n);
    while (draws[k].size() < n) {
      const double t = target(engine);
      for (std::size_t attempt = 0; attempt < kMaxParamTries; ++attempt) {
        const double r = radius(engine);
        const double a = angle(engine);
        const double flux = unit_sum(r, a);
        if (flux <= 0.0) continue;
        const double amplitude = t / (provisional_scale * flux);
        if (amplitude < kAmplitudeMin || amplitude > kAmplitudeMax) continue;
        draws[k].push_back({{r, amplitude, a}, amplitude * flux});
        all_raw.push_back(amplitude * flux);
        break;
      }
      // A target that no draw could realise is abandoned and redrawn.
    }
  }

  const double scale = finalize_targets(all_raw).scale;
  const double pixel_sigma = propagate::pixel_sigma_for(noise.sigma_y, kImagePixels);
  const bool input = noise.injection == Injection::Input;

  DatasetSplits out;
  for (std::size_t k = 0; k < kSplits.size(); ++k) {
    const Split split = kSplits[k];
    Dataset d = empty_dataset(Dimensionality::D2, split, noise, seed);
    d.scale = scale;
    auto noisy = make_engine(seed, noise_stream(split));
    std::normal_distribution<double> unit(0.0, 1.0);

    std::vector<ImageSample> samples;
    samples.reserve(draws[k].size());
    for (const Draw& draw : draws[k]) {
      ImageSample s;
      s.params = draw.params;
      s.pixels = render_sersic(draw.params);
      for (double& p : s.pixels) p *= scale;
      s.y = std::min(draw.raw_sum * scale, kTargetMax);
      if (input) {
        Image noisy_px = s.pixels;
        for (double& p : noisy_px) p += pixel_sigma * unit(noisy);
        s.pixels_noisy = noisy_px;
      } else {
        s.y_noisy = s.y + noise.sigma_y * unit(noisy);
      }
      samples.push_back(std::move(s));
    }
    d.samples = std::move(samples);
    split_ref(out, split) = std::move(d);
  }
  return out;
}

DatasetSplits generate(Dimensionality dim, const NoiseSpec& noise, std::uint64_t seed,
                       const SplitSizes& sizes, const GenerateOptions& options) {
  return dim == Dimensionality::D0 ? generate_0d(noise, seed, sizes, options)
                                   : generate_2d(noise, seed, sizes, options);
}

namespace {

std::vector<double> flatten_rows(const Dataset& d) {
  std::vector<double> rows;
  if (d.dimensionality == Dimensionality::D0) {
    for (const auto& s : d.samples_0d()) {
      rows.push_back(s.m);
      rows.push_back(s.x);
      if (s.x_noisy) rows.push_back(*s.x_noisy);
      rows.push_back(s.y);
      if (s.y_noisy) rows.push_back(*s.y_noisy);
    }
  } else {
    for (const auto& s : d.images()) {
      rows.insert(rows.end(), s.pixels.begin(), s.pixels.end());
      if (s.pixels_noisy) rows.insert(rows.end(), s.pixels_noisy->begin(), s.pixels_noisy->end());
      rows.push_back(s.y);
      if (s.y_noisy) rows.push_back(*s.y_noisy);
    }
  }
  return rows;
}

std::size_t row_width(Dimensionality dim, Injection inj) {
  const bool input = inj == Injection::Input;
  if (dim == Dimensionality::D0) return 4;  // m, x, x_noisy|y_noisy, y
  return kImagePixels + (input ? kImagePixels : 0) + 1 + (input ? 0 : 1);
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const DatasetSplits& splits) {
  std::filesystem::create_directories(dir);
  const Dataset& t = splits.train;
  io::KeyValues header;
  header["dimensionality"] = std::string(to_string(t.dimensionality));
  header["injection"] = std::string(to_string(t.noise.injection));
  header["level"] = std::string(to_string(t.noise.level));
  header["sigma_y"] = io::format_double(t.noise.sigma_y);
  header["seed"] = std::to_string(t.seed);
  header["n_train"] = std::to_string(splits.train.size());
  header["n_val"] = std::to_string(splits.val.size());
  header["n_test"] = std::to_string(splits.test.size());
  header["scale"] = io::format_double(t.scale);
  header["row_width"] = std::to_string(row_width(t.dimensionality, t.noise.injection));
  header["encoding"] = "float64-le";
  {
    std::ofstream out(dir / "dataset.txt", std::ios::trunc);
    if (!out) throw DataError("cannot write " + (dir / "dataset.txt").string());
    io::write_key_values(out, header);
  }
  for (Split s : kSplits) {
    io::write_f64_file(dir / (std::string(to_string(s)) + ".bin"), flatten_rows(splits.get(s)));
  }
}

DatasetSplits load_dataset(const std::filesystem::path& dir) {
  const auto header = io::read_key_values(dir / "dataset.txt");
  auto field = [&](const std::string& key) -> const std::string& {
    const auto it = header.find(key);
    if (it == header.end()) throw DataError("dataset header missing '" + key + "'");
    return it->second;
  };
  NoiseSpec noise;
  noise.injection = parse_injection(field("injection"));
  noise.level = parse_level(field("level"));
  noise.sigma_y = io::parse_double(field("sigma_y"));
  const auto dim = parse_dimensionality(field("dimensionality"));
  const auto seed = static_cast<std::uint64_t>(io::parse_uint(field("seed")));
  const double scale = io::parse_double(field("scale"));
  const SplitSizes sizes{io::parse_uint(field("n_train")), io::parse_uint(field("n_val")),
                         io::parse_uint(field("n_test"))};
  const bool input = noise.injection == Injection::Input;
  const std::size_t width = row_width(dim, noise.injection);

  DatasetSplits out;
  for (Split s : kSplits) {
    const std::size_t n = count_for(sizes, s);
    const auto values = io::read_f64_file(dir / (std::string(to_string(s)) + ".bin"));
    if (values.size() != n * width) throw DataError(std::string(to_string(s)) + ".bin has the wrong size");
    Dataset d = empty_dataset(dim, s, noise, seed);
    d.scale = scale;
    if (dim == Dimensionality::D0) {
      std::vector<Sample0D> samples(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double* row = values.data() + i * width;
        auto& smp = samples[i];
        smp.m = row[0];
        smp.x = row[1];
        if (input) {
          smp.x_noisy = row[2];
          smp.y = row[3];
        } else {
          smp.y = row[2];
          smp.y_noisy = row[3];
        }
      }
      d.samples = std::move(samples);
    } else {
      std::vector<ImageSample> samples(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double* row = values.data() + i * width;
        auto& smp = samples[i];
        std::copy_n(row, kImagePixels, smp.pixels.begin());
        row += kImagePixels;
        if (input) {
          Image noisy{};
          std::copy_n(row, kImagePixels, noisy.begin());
          smp.pixels_noisy = noisy;
          row += kImagePixels;
        }
        smp.y = row[0];
        if (!input) smp.y_noisy = row[1];
      }
      d.samples = std::move(samples);
    }
    split_ref(out, s) = std::move(d);
  }
  return out;
}

}  // namespace alea::data
