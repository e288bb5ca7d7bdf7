#include <algorithm>
#include <cmath>
#include <sstream>

#include "alea/error.hpp"
#include "alea/runner.hpp"

namespace alea::runner {
namespace {

constexpr double kPanelW = 360.0;
constexpr double kPanelH = 280.0;
constexpr double kMargin = 50.0;
constexpr std::size_t kBins = 40;

std::string num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

struct Panel {
  data::Dimensionality dim;
  data::Injection injection;
};

}  // namespace

std::string render_figure(std::span<const FigureCell> cells) {
  const std::array<Panel, 4> panels{{{data::Dimensionality::D0, data::Injection::Output},
                                     {data::Dimensionality::D0, data::Injection::Input},
                                     {data::Dimensionality::D2, data::Injection::Output},
                                     {data::Dimensionality::D2, data::Injection::Input}}};
  const std::array<data::NoiseLevel, 3> levels{data::NoiseLevel::Low, data::NoiseLevel::Medium,
                                               data::NoiseLevel::High};

  double x_max = 0.12;
  for (const auto& c : cells) {
    x_max = std::max(x_max, c.report.mean_sigma_al + 2.0 * c.report.std_sigma_al);
    x_max = std::max(x_max, c.report.sigma_y_true * 1.2);
  }
  x_max *= 1.05;

  const double width = 2 * kPanelW + 3 * kMargin;
  const double height = 2 * kPanelH + 3 * kMargin;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const double x0 = kMargin + static_cast<double>(p % 2) * (kPanelW + kMargin);
    const double y0 = kMargin + static_cast<double>(p / 2) * (kPanelH + kMargin);
    auto xpix = [&](double v) { return x0 + kPanelW * v / x_max; };
    const std::string title = std::string(data::to_string(panels[p].dim)) + " " +
                              std::string(data::to_string(panels[p].injection)) + " noise";

    svg << "<g class=\"panel\" data-dim=\"" << data::to_string(panels[p].dim) << "\" data-injection=\""
        << data::to_string(panels[p].injection) << "\">\n";
    svg << "<rect x=\"" << num(x0) << "\" y=\"" << num(y0) << "\" width=\"" << num(kPanelW) << "\" height=\""
        << num(kPanelH) << "\" fill=\"none\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << num(x0 + kPanelW / 2) << "\" y=\"" << num(y0 - 8)
        << "\" text-anchor=\"middle\">" << title << "</text>\n";
    for (int t = 0; t <= 4; ++t) {
      const double v = x_max * t / 4.0;
      svg << "<text x=\"" << num(xpix(v)) << "\" y=\"" << num(y0 + kPanelH + 14) << "\" text-anchor=\"middle\">"
          << num(std::round(v * 1000.0) / 1000.0) << "</text>\n";
    }

    for (std::size_t l = 0; l < levels.size(); ++l) {
      const double sigma_true = data::sigma_for(levels[l]);
      svg << "<line class=\"true-sigma\" x1=\"" << num(xpix(sigma_true)) << "\" x2=\"" << num(xpix(sigma_true))
          << "\" y1=\"" << num(y0) << "\" y2=\"" << num(y0 + kPanelH)
          << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
      const double cy = y0 + kPanelH * (static_cast<double>(l) + 0.5) / 3.0;
      svg << "<text x=\"" << num(x0 + 4) << "\" y=\"" << num(cy - kPanelH / 6.0 + 12) << "\">"
          << data::to_string(levels[l]) << "</text>\n";

      const auto it = std::find_if(cells.begin(), cells.end(), [&](const FigureCell& c) {
        return c.report.id.dim == panels[p].dim && c.report.id.injection == panels[p].injection &&
               c.report.id.level == levels[l];
      });
      if (it == cells.end()) continue;

      std::array<double, kBins> hist{};
      double peak = 0.0;
      for (double s : it->sigma_al) {
        if (!std::isfinite(s)) continue;
        const auto b = static_cast<std::size_t>(std::clamp(s / x_max, 0.0, 1.0 - 1e-12) * kBins);
        peak = std::max(peak, ++hist[b]);
      }
      const double half = kPanelH / 7.0;
      std::string upper;
      std::string lower;
      for (std::size_t b = 0; b < kBins; ++b) {
        const double h = peak > 0 ? half * hist[b] / peak : 0.0;
        const double xa = xpix(x_max * static_cast<double>(b) / kBins);
        const double xb = xpix(x_max * static_cast<double>(b + 1) / kBins);
        upper += num(xa) + "," + num(cy - h) + " " + num(xb) + "," + num(cy - h) + " ";
        lower = num(xb) + "," + num(cy + h) + " " + num(xa) + "," + num(cy + h) + " " + lower;
      }
      const auto& r = it->report;
      svg << "<g class=\"level\" data-level=\"" << data::to_string(levels[l]) << "\" data-mean=\""
          << io::format_double(r.mean_sigma_al) << "\" data-std=\"" << io::format_double(r.std_sigma_al)
          << "\" data-sigma-true=\"" << io::format_double(r.sigma_y_true) << "\" data-calibrated=\""
          << (r.calibrated ? "true" : "false") << "\">\n";
      svg << "<polygon class=\"silhouette\" points=\"" << upper << lower
          << "\" fill=\"steelblue\" fill-opacity=\"0.4\" stroke=\"steelblue\"/>\n";
      svg << "<line class=\"error-bar\" x1=\"" << num(xpix(std::max(0.0, r.mean_sigma_al - r.std_sigma_al)))
          << "\" x2=\"" << num(xpix(std::min(x_max, r.mean_sigma_al + r.std_sigma_al))) << "\" y1=\"" << num(cy)
          << "\" y2=\"" << num(cy) << "\" stroke=\"black\"/>\n";
      svg << "<circle class=\"mean\" cx=\"" << num(xpix(std::min(x_max, r.mean_sigma_al))) << "\" cy=\"" << num(cy)
          << "\" r=\"3.5\" fill=\"" << (r.calibrated ? "black" : "crimson") << "\"/>\n";
      svg << "</g>\n";
    }
    svg << "</g>\n";
  }
  svg << "<text x=\"" << num(width / 2) << "\" y=\"" << num(height - 10)
      << "\" text-anchor=\"middle\">predicted sigma_al</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

std::string render_data_figure(const data::Dataset& lines, const data::Dataset& images,
                               std::size_t n_examples) {
  if (lines.dimensionality != data::Dimensionality::D0 || images.dimensionality != data::Dimensionality::D2) {
    throw DataError("data figure needs a 0d and a 2d dataset");
  }
  const auto& samples = lines.samples_0d();
  const auto& imgs = images.images();
  const std::size_t n_lines = std::min(n_examples, samples.size());
  const std::size_t n_imgs = std::min(n_examples, imgs.size());
  if (n_lines == 0 || n_imgs == 0) throw DataError("data figure needs at least one example of each kind");

  constexpr double kCell = 4.0;
  const double img_side = kCell * data::kImageSide;
  const double width = kMargin * 2 + kPanelW + kMargin + static_cast<double>(n_imgs) * (img_side + 10.0);
  const double height = kPanelH + 2 * kMargin;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  const double x0 = kMargin;
  const double y0 = kMargin;
  svg << "<rect x=\"" << num(x0) << "\" y=\"" << num(y0) << "\" width=\"" << num(kPanelW) << "\" height=\""
      << num(kPanelH) << "\" fill=\"none\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << num(x0 + kPanelW / 2) << "\" y=\"" << num(y0 - 8) << "\" text-anchor=\"middle\">0d: y = m x</text>\n";
  double y_top = 0.0;
  for (std::size_t i = 0; i < n_lines; ++i) y_top = std::max(y_top, samples[i].m * 10.0);
  y_top = std::max(y_top, 2.0);
  for (std::size_t i = 0; i < n_lines; ++i) {
    const auto& s = samples[i];
    auto px = [&](double x) { return x0 + kPanelW * x / 10.0; };
    auto py = [&](double y) { return y0 + kPanelH * (1.0 - y / y_top); };
    svg << "<line x1=\"" << num(px(0.0)) << "\" y1=\"" << num(py(0.0)) << "\" x2=\"" << num(px(10.0)) << "\" y2=\""
        << num(py(s.m * 10.0)) << "\" stroke=\"steelblue\"/>\n";
    const double xs = s.x_noisy.value_or(s.x);
    const double ys = s.y_noisy.value_or(s.y);
    svg << "<circle cx=\"" << num(px(xs)) << "\" cy=\"" << num(py(ys)) << "\" r=\"3\" fill=\"crimson\"/>\n";
  }

  const double ix0 = x0 + kPanelW + kMargin;
  for (std::size_t k = 0; k < n_imgs; ++k) {
    const auto& px = imgs[k].pixels_noisy.value_or(imgs[k].pixels);
    double hi = 0.0;
    for (double v : px) hi = std::max(hi, v);
    const double ox = ix0 + static_cast<double>(k) * (img_side + 10.0);
    svg << "<g class=\"image\" data-target=\"" << io::format_double(imgs[k].y) << "\">\n";
    for (std::size_t r = 0; r < data::kImageSide; ++r) {
      for (std::size_t c = 0; c < data::kImageSide; ++c) {
        const double v = hi > 0 ? std::clamp(px[r * data::kImageSide + c] / hi, 0.0, 1.0) : 0.0;
        const int g = static_cast<int>(std::lround(255.0 * v));
        svg << "<rect x=\"" << num(ox + kCell * c) << "\" y=\"" << num(y0 + kCell * r) << "\" width=\"" << num(kCell)
            << "\" height=\"" << num(kCell) << "\" fill=\"rgb(" << g << ',' << g << ',' << g << ")\"/>\n";
      }
    }
    svg << "<text x=\"" << num(ox + img_side / 2) << "\" y=\"" << num(y0 + img_side + 14)
        << "\" text-anchor=\"middle\">y = " << num(imgs[k].y) << "</text>\n";
    svg << "</g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void emit_figure(std::span<const FigureCell> cells, const std::filesystem::path& out) {
  if (cells.empty()) throw DataError("no experiment results to plot");
  io::write_text_file(out, render_figure(cells));
}

}  // namespace alea::runner
