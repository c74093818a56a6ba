#pragma once

#include <string>
#include <vector>

namespace sinkdem::plot {

struct Series {
  std::string label;
  std::vector<double> xs, ys;
};

// Deterministic standalone SVG: identical inputs give identical bytes.
std::string render_svg(const std::string& title, const std::string& xlabel,
                       const std::string& ylabel, const std::vector<Series>& series);

struct Panel {
  std::string filename;  // e.g. "loss_vs_epoch.svg"
  std::string svg;
};

// Standard panels for one or more metrics CSVs: loss-vs-epoch,
// gradient-norm-vs-epoch (first/hidden) and an MSE overlay. With several
// CSVs each file contributes one legend entry per panel.
std::vector<Panel> panels_from_csvs(const std::vector<std::string>& csv_paths);

}  // namespace sinkdem::plot
