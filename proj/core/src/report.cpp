#include "fmseg/report.hpp"

#include <algorithm>
#include <cmath>

namespace fmseg {

namespace {

std::string num(double v) { return format_double(v); }

void svg_open(std::string& s, int w, int h) {
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) +
       "\" height=\"" + std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " +
       std::to_string(h) + "\">\n";
  s += "<rect width=\"" + std::to_string(w) + "\" height=\"" + std::to_string(h) +
       "\" fill=\"white\"/>\n";
}

void svg_line(std::string& s, double x1, double y1, double x2, double y2,
              const std::string& color, double width = 1.0) {
  s += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" +
       num(y2) + "\" stroke=\"" + color + "\" stroke-width=\"" + num(width) + "\"/>\n";
}

void svg_circle(std::string& s, double cx, double cy, double r, const std::string& color) {
  s += "<circle cx=\"" + num(cx) + "\" cy=\"" + num(cy) + "\" r=\"" + num(r) + "\" fill=\"" +
       color + "\"/>\n";
}

void svg_rect(std::string& s, double x, double y, double w, double h, const std::string& fill,
              const std::string& stroke = "none") {
  s += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) + "\" height=\"" +
       num(h) + "\" fill=\"" + fill + "\" stroke=\"" + stroke + "\"/>\n";
}

void svg_text(std::string& s, double x, double y, const std::string& text, int size = 11,
              const std::string& anchor = "start") {
  s += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" + std::to_string(size) +
       "\" font-family=\"sans-serif\" text-anchor=\"" + anchor + "\">" + text + "</text>\n";
}

}  // namespace

std::string fig_quality_scatter(const QualityEval& eval, const std::string& regressor_name) {
  const int W = 960, H = 420;
  const double left = 60, right = 20, top = 40, bottom = 70;
  const double plot_w = W - left - right, plot_h = H - top - bottom;
  const std::size_t n = eval.per_combination.size();

  std::string s;
  svg_open(s, W, H);
  svg_text(s, left, 22, "predicted vs true F1 per marker combination (" + regressor_name + ")",
           13);
  svg_text(s, left + 260, 22, "R2 of means = " + num(eval.r2_of_means), 13);

  auto ymap = [&](double v) { return top + plot_h * (1.0 - std::clamp(v, 0.0, 1.0)); };
  // axes and gridlines at 0, 0.25, .., 1
  for (int i = 0; i <= 4; ++i) {
    const double v = i / 4.0;
    svg_line(s, left, ymap(v), left + plot_w, ymap(v), "#dddddd");
    svg_text(s, left - 8, ymap(v) + 4, num(v), 10, "end");
  }
  svg_line(s, left, top, left, top + plot_h, "#000000");
  svg_line(s, left, top + plot_h, left + plot_w, top + plot_h, "#000000");

  for (std::size_t i = 0; i < n; ++i) {
    const ComboAggregate& c = eval.per_combination[i];
    const double x = left + plot_w * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    // truth (black, offset left), prediction (blue, offset right), SD bars
    const double xt = x - 4, xp = x + 4;
    svg_line(s, xt, ymap(c.mean_true - c.sd_true), xt, ymap(c.mean_true + c.sd_true), "#444444");
    svg_circle(s, xt, ymap(c.mean_true), 3, "#000000");
    svg_line(s, xp, ymap(c.mean_pred - c.sd_pred), xp, ymap(c.mean_pred + c.sd_pred), "#6699ee");
    svg_circle(s, xp, ymap(c.mean_pred), 3, "#2255cc");
    s += "<text x=\"" + num(x) + "\" y=\"" + num(top + plot_h + 12) +
         "\" font-size=\"8\" font-family=\"sans-serif\" text-anchor=\"end\" transform=\"rotate(-60 " +
         num(x) + " " + num(top + plot_h + 12) + ")\">" + c.combo.name() + "</text>\n";
  }
  svg_circle(s, left + plot_w - 150, top + 8, 3, "#000000");
  svg_text(s, left + plot_w - 142, top + 12, "true (mean, SD over folds)", 10);
  svg_circle(s, left + plot_w - 150, top + 24, 3, "#2255cc");
  svg_text(s, left + plot_w - 142, top + 28, "predicted", 10);
  s += "</svg>\n";
  return s;
}

std::string fig_rmse_bars(
    const std::vector<std::pair<std::string, std::vector<double>>>& fold_rmses) {
  const int W = 520, H = 340;
  const double left = 60, right = 20, top = 40, bottom = 50;
  const double plot_w = W - left - right, plot_h = H - top - bottom;

  double vmax = 0.0;
  for (const auto& [name, values] : fold_rmses)
    for (double v : values) vmax = std::max(vmax, v);
  vmax = std::max(vmax * 1.25, 1e-9);

  std::string s;
  svg_open(s, W, H);
  svg_text(s, left, 22, "F1-prediction RMSE per regressor (mean over folds, SD whiskers)", 12);
  auto ymap = [&](double v) { return top + plot_h * (1.0 - v / vmax); };
  for (int i = 0; i <= 4; ++i) {
    const double v = vmax * i / 4.0;
    svg_line(s, left, ymap(v), left + plot_w, ymap(v), "#dddddd");
    svg_text(s, left - 8, ymap(v) + 4, num(v), 10, "end");
  }
  const std::size_t n = fold_rmses.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [name, values] = fold_rmses[i];
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double sd = 0.0;
    for (double v : values) sd += (v - mean) * (v - mean);
    sd = std::sqrt(sd / static_cast<double>(values.size()));

    const double bw = plot_w / static_cast<double>(n) * 0.55;
    const double x = left + plot_w * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    svg_rect(s, x - bw / 2, ymap(mean), bw, top + plot_h - ymap(mean), "#88aadd", "#335588");
    svg_line(s, x, ymap(mean - sd), x, ymap(mean + sd), "#333333", 1.5);
    svg_text(s, x, top + plot_h + 16, name, 11, "middle");
    svg_text(s, x, ymap(mean) - 6, num(mean), 9, "middle");
  }
  svg_line(s, left, top + plot_h, left + plot_w, top + plot_h, "#000000");
  s += "</svg>\n";
  return s;
}

std::string fig_delta_f1(
    const std::vector<std::pair<std::string, std::vector<double>>>& deltas) {
  const int W = 560, H = 360;
  const double left = 70, right = 20, top = 40, bottom = 60;
  const double plot_w = W - left - right, plot_h = H - top - bottom;

  double lo = 0.0, hi = 0.0;
  for (const auto& [name, values] : deltas) {
    for (double v : values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const double span = std::max(hi - lo, 1e-9);
  lo -= span * 0.1;
  hi += span * 0.1;

  std::string s;
  svg_open(s, W, H);
  svg_text(s, left, 22, "paired delta F1 vs reference (per patch x combination x fold)", 12);
  auto ymap = [&](double v) { return top + plot_h * (1.0 - (v - lo) / (hi - lo)); };
  svg_line(s, left, ymap(0.0), left + plot_w, ymap(0.0), "#999999");
  svg_text(s, left - 8, ymap(0) + 4, "0", 10, "end");

  auto quantile = [](std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double rank = q * static_cast<double>(v.size() - 1);
    const std::size_t k = static_cast<std::size_t>(rank);
    const double f = rank - static_cast<double>(k);
    const std::size_t k2 = std::min(k + 1, v.size() - 1);
    return v[k] + f * (v[k2] - v[k]);
  };

  const std::size_t n = deltas.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [name, values] = deltas[i];
    if (values.empty()) continue;
    const double q1 = quantile(values, 0.25), med = quantile(values, 0.5),
                 q3 = quantile(values, 0.75);
    const double vmin = *std::min_element(values.begin(), values.end());
    const double vmax = *std::max_element(values.begin(), values.end());
    std::size_t pos = 0;
    for (double v : values) pos += v > 0.0;
    const double frac = static_cast<double>(pos) / static_cast<double>(values.size());

    const double x = left + plot_w * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double bw = plot_w / static_cast<double>(n) * 0.4;
    svg_line(s, x, ymap(vmin), x, ymap(vmax), "#666666");
    svg_rect(s, x - bw / 2, ymap(q3), bw, ymap(q1) - ymap(q3), "#cdd9f0", "#335588");
    svg_line(s, x - bw / 2, ymap(med), x + bw / 2, ymap(med), "#cc3333", 1.5);
    svg_text(s, x, top + plot_h + 16, name, 11, "middle");
    svg_text(s, x, top + plot_h + 32, "frac>0: " + num(frac), 9, "middle");
  }
  s += "</svg>\n";
  return s;
}

namespace {

void raster_panel(std::string& s, const Tensor& map, double ox, double oy, double scale,
                  double vmax, const std::string& label) {
  const std::size_t H = map.extent(0), W = map.extent(1);
  svg_text(s, ox, oy - 4, label, 11);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const double v = std::clamp(vmax > 0 ? map.at2(y, x) / vmax : 0.0, 0.0, 1.0);
      const int g = static_cast<int>(std::lround(255.0 * v));
      char color[8];
      std::snprintf(color, sizeof(color), "#%02x%02x%02x", g, g, g);
      svg_rect(s, ox + static_cast<double>(x) * scale, oy + static_cast<double>(y) * scale,
               scale, scale, color);
    }
  }
}

}  // namespace

std::string fig_uncertainty_maps(const UncertaintyBundle& bundle, const Tensor& mask) {
  const std::size_t H = bundle.mean_prob.extent(0), W = bundle.mean_prob.extent(1);
  const double scale = 2.0;
  const double pad = 22.0;
  const double pw = static_cast<double>(W) * scale;
  const int cols = 5;
  const int width = static_cast<int>(pad + cols * (pw + pad));
  const int height = static_cast<int>(2 * pad + static_cast<double>(H) * scale + 20);

  // error panel: disagreement between the thresholded mean and the mask
  Tensor error({H, W});
  for (std::size_t i = 0; i < error.size(); ++i) {
    const bool pred = bundle.mean_prob[i] > 0.5;
    const bool truth = mask[i] != 0.0;
    error[i] = pred == truth ? 0.0 : 1.0;
  }
  const double ue_max = std::max(bundle.u_e.max(), 1e-12);
  const double ua_max = std::max(bundle.u_a.max(), 1e-12);

  std::string s;
  svg_open(s, width, height);
  double ox = pad;
  const double oy = pad + 14;
  raster_panel(s, mask, ox, oy, scale, 1.0, "mask");
  ox += pw + pad;
  raster_panel(s, bundle.mean_prob, ox, oy, scale, 1.0, "mean prob");
  ox += pw + pad;
  raster_panel(s, bundle.u_e, ox, oy, scale, ue_max, "u_e (max " + num(ue_max) + ")");
  ox += pw + pad;
  raster_panel(s, bundle.u_a, ox, oy, scale, ua_max, "u_a (max " + num(ua_max) + ")");
  ox += pw + pad;
  raster_panel(s, error, ox, oy, scale, 1.0, "error");
  s += "</svg>\n";
  return s;
}

}  // namespace fmseg
