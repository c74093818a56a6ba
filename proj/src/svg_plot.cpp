#include "sinkdem/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "sinkdem/errors.hpp"
#include "sinkdem/metrics.hpp"

namespace sinkdem::plot {

namespace {

constexpr int kWidth = 640, kHeight = 400;
constexpr int kLeft = 64, kRight = 150, kTop = 36, kBottom = 44;

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                         "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

}  // namespace

std::string render_svg(const std::string& title, const std::string& xlabel,
                       const std::string& ylabel, const std::vector<Series>& series) {
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool any = false;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
      if (!any) {
        xmin = xmax = s.xs[i];
        ymin = ymax = s.ys[i];
        any = true;
      } else {
        xmin = std::min(xmin, s.xs[i]);
        xmax = std::max(xmax, s.xs[i]);
        ymin = std::min(ymin, s.ys[i]);
        ymax = std::max(ymax, s.ys[i]);
      }
    }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;

  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return kTop + ph - (y - ymin) / (ymax - ymin) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  svg << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kLeft << "\" y=\"20\" font-family=\"monospace\" font-size=\"14\">"
      << escape(title) << "</text>\n";

  // frame and ticks
  svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << num(pw)
      << "\" height=\"" << num(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double fx = xmin + (xmax - xmin) * t / 4.0;
    const double fy = ymin + (ymax - ymin) * t / 4.0;
    svg << "<line x1=\"" << num(px(fx)) << "\" y1=\"" << kTop + ph << "\" x2=\""
        << num(px(fx)) << "\" y2=\"" << num(kTop + ph + 4) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << num(px(fx)) << "\" y=\"" << num(kTop + ph + 16)
        << "\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"middle\">" << num(fx)
        << "</text>\n";
    svg << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << num(py(fy)) << "\" x2=\"" << kLeft
        << "\" y2=\"" << num(py(fy)) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(py(fy) + 3)
        << "\" font-family=\"monospace\" font-size=\"10\" text-anchor=\"end\">" << num(fy)
        << "</text>\n";
  }
  svg << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << kHeight - 8
      << "\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">"
      << escape(xlabel) << "</text>\n";
  svg << "<text x=\"14\" y=\"" << num(kTop + ph / 2)
      << "\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\" "
         "transform=\"rotate(-90 14 "
      << num(kTop + ph / 2) << ")\">" << escape(ylabel) << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kColors[si % 8];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      if (!std::isfinite(s.xs[i]) || !std::isfinite(s.ys[i])) continue;
      svg << num(px(s.xs[i])) << "," << num(py(s.ys[i])) << " ";
    }
    svg << "\"/>\n";
    const double ly = kTop + 14 + 16 * static_cast<double>(si);
    svg << "<line x1=\"" << kWidth - kRight + 8 << "\" y1=\"" << num(ly - 4) << "\" x2=\""
        << kWidth - kRight + 28 << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << color
        << "\" stroke-width=\"1.5\"/>\n";
    svg << "<text x=\"" << kWidth - kRight + 32 << "\" y=\"" << num(ly)
        << "\" font-family=\"monospace\" font-size=\"11\">" << escape(s.label)
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<Panel> panels_from_csvs(const std::vector<std::string>& csv_paths) {
  if (csv_paths.empty()) throw ValidationError("plot: no CSV inputs");
  struct Loaded {
    std::string label;
    std::vector<data::MetricsRecord> recs;
  };
  std::vector<Loaded> loaded;
  for (const auto& p : csv_paths) {
    Loaded l;
    l.label = std::filesystem::path(p).parent_path().filename().string();
    if (l.label.empty()) l.label = std::filesystem::path(p).stem().string();
    l.recs = data::read_metrics_csv(p);
    loaded.push_back(std::move(l));
  }

  auto series_of = [&](auto getter) {
    std::vector<Series> out;
    for (const auto& l : loaded) {
      Series s;
      s.label = l.label;
      for (const auto& r : l.recs) {
        const double v = getter(r);
        if (!std::isfinite(v)) continue;
        s.xs.push_back(r.epoch);
        s.ys.push_back(v);
      }
      out.push_back(std::move(s));
    }
    return out;
  };

  std::vector<Panel> panels;
  panels.push_back({"loss_vs_epoch.svg",
                    render_svg("pixel loss vs epoch", "epoch", "L_P",
                               series_of([](const data::MetricsRecord& r) { return r.loss_p; }))});
  panels.push_back({"mse_vs_epoch.svg",
                    render_svg("held-out mse vs epoch", "epoch", "mse",
                               series_of([](const data::MetricsRecord& r) { return r.mse; }))});
  {
    std::vector<Series> grads;
    for (const auto& l : loaded) {
      Series first, hidden;
      first.label = l.label + " first";
      hidden.label = l.label + " hidden";
      for (const auto& r : l.recs) {
        if (std::isfinite(r.grad_specnorm_first)) {
          first.xs.push_back(r.epoch);
          first.ys.push_back(r.grad_specnorm_first);
        }
        if (std::isfinite(r.grad_specnorm_hidden)) {
          hidden.xs.push_back(r.epoch);
          hidden.ys.push_back(r.grad_specnorm_hidden);
        }
      }
      grads.push_back(std::move(first));
      grads.push_back(std::move(hidden));
    }
    panels.push_back({"grad_norms_vs_epoch.svg",
                      render_svg("gradient spectral norms vs epoch", "epoch", "||grad||_2",
                                 grads)});
  }
  return panels;
}

}  // namespace sinkdem::plot
