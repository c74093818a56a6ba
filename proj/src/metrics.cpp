#include "sinkdem/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sinkdem/errors.hpp"

namespace sinkdem::data {

std::string format_metric(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

namespace {

double parse_metric(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::stod(s);
}

}  // namespace

void write_metrics_csv(const std::vector<MetricsRecord>& records, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("metrics csv: cannot open for write: " + path);
  f << kMetricsCsvHeader << "\n";
  for (const auto& r : records) {
    f << r.epoch << "," << format_metric(r.wallclock_s) << "," << format_metric(r.mse)
      << "," << format_metric(r.rmse) << "," << format_metric(r.mae) << ","
      << format_metric(r.psnr) << "," << format_metric(r.ssim_pct) << ","
      << format_metric(r.grad_specnorm_first) << ","
      << format_metric(r.grad_specnorm_hidden) << "," << format_metric(r.loss_p) << ","
      << format_metric(r.loss_str) << "," << format_metric(r.loss_adv) << ","
      << format_metric(r.loss_ot) << "," << format_metric(r.loss_da) << "\n";
  }
  if (!f) throw IoError("metrics csv: write failed: " + path);
}

std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("metrics csv: cannot open: " + path);
  std::string line;
  if (!std::getline(f, line)) throw FormatError("metrics csv: empty file: " + path);
  if (line == std::string(kMetricsCsvHeader) + "\r") line.pop_back();
  if (line != kMetricsCsvHeader)
    throw FormatError("metrics csv: header mismatch in " + path + ": '" + line + "'");

  std::vector<MetricsRecord> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 14)
      throw FormatError("metrics csv: expected 14 fields, got " +
                        std::to_string(fields.size()) + " in " + path);
    MetricsRecord r;
    r.epoch = std::stoi(fields[0]);
    r.wallclock_s = parse_metric(fields[1]);
    r.mse = parse_metric(fields[2]);
    r.rmse = parse_metric(fields[3]);
    r.mae = parse_metric(fields[4]);
    r.psnr = parse_metric(fields[5]);
    r.ssim_pct = parse_metric(fields[6]);
    r.grad_specnorm_first = parse_metric(fields[7]);
    r.grad_specnorm_hidden = parse_metric(fields[8]);
    r.loss_p = parse_metric(fields[9]);
    r.loss_str = parse_metric(fields[10]);
    r.loss_adv = parse_metric(fields[11]);
    r.loss_ot = parse_metric(fields[12]);
    r.loss_da = parse_metric(fields[13]);
    out.push_back(r);
  }
  return out;
}

}  // namespace sinkdem::data
