#pragma once

#include <limits>
#include <string>
#include <vector>

namespace sinkdem::data {

// One per-epoch row of the normative metrics CSV.
struct MetricsRecord {
  int epoch = 0;
  double wallclock_s = 0.0;
  double mse = std::numeric_limits<double>::quiet_NaN();
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double mae = std::numeric_limits<double>::quiet_NaN();
  double psnr = std::numeric_limits<double>::quiet_NaN();  // +inf sentinel at mse == 0
  double ssim_pct = std::numeric_limits<double>::quiet_NaN();
  double grad_specnorm_first = std::numeric_limits<double>::quiet_NaN();
  double grad_specnorm_hidden = std::numeric_limits<double>::quiet_NaN();
  double loss_p = std::numeric_limits<double>::quiet_NaN();
  double loss_str = std::numeric_limits<double>::quiet_NaN();
  double loss_adv = std::numeric_limits<double>::quiet_NaN();
  double loss_ot = std::numeric_limits<double>::quiet_NaN();
  double loss_da = std::numeric_limits<double>::quiet_NaN();
};

inline const char* kMetricsCsvHeader =
    "epoch,wallclock_s,mse,rmse,mae,psnr,ssim,g_first,g_hidden,L_P,L_str,L_ADV,L_OT,L_DA";

void write_metrics_csv(const std::vector<MetricsRecord>& records, const std::string& path);
std::vector<MetricsRecord> read_metrics_csv(const std::string& path);

// Deterministic numeric formatting shared by the CSV writer and the plots.
std::string format_metric(double v);

}  // namespace sinkdem::data
