#pragma once

#include <utility>
#include <vector>

#include "sinkdem/config.hpp"
#include "sinkdem/metrics.hpp"
#include "sinkdem/net.hpp"

namespace sinkdem::experiments {

struct RunResult {
  std::vector<data::MetricsRecord> records;
  int epochs_to_target = -1;  // -1: target not reached
  bool failed = false;
  std::string failure;

  bool reached() const { return epochs_to_target >= 0; }
  // sentinel used when comparing convergence speeds
  int epochs_or(int cap) const { return reached() ? epochs_to_target : cap; }
};

// Denoising on the digit corpus: trains cfg.method until the held-out
// clean-reconstruction MSE hits target_mse or max_epochs, logging one
// MetricsRecord per epoch (losses, gradient spectral norms). Outputs under
// cfg.out_dir: metrics.csv, config.echo, generator/discriminator checkpoints.
RunResult run_denoise(const ExperimentConfig& cfg);

struct SweepEntry {
  double epsilon = 0.0;
  RunResult run;
  double near_opt_hidden = 0.0;  // mean hidden-layer gradient norm in the window
  double near_opt_first = 0.0;
};

struct SweepResult {
  std::vector<SweepEntry> entries;
};

// One run_denoise per epsilon (method fixed to sinkhorn_gan); the
// near-optimal window is the last 10% of epochs before the target.
SweepResult run_eps_sweep(const ExperimentConfig& cfg);

// Same seed and architecture across methods; only the objective differs.
std::vector<std::pair<Method, RunResult>> run_baselines(const ExperimentConfig& cfg);

struct SrToyResult {
  RunResult run;
  data::MetricsRecord bicubic;  // degraded-input baseline on the test split
  data::MetricsRecord final_eval;
  int epochs_to_pixel_target = -1;
};

// Synthetic-terrain SIRAN training with the ablation flags
// {prior, attention, psa, sinkhorn}.
SrToyResult run_sr_toy(const ExperimentConfig& cfg);

struct SmoothnessRow {
  double epsilon = 0.0;
  double gamma_hat = 0.0;  // max gradient-difference ratio over random pairs
};

// Empirical smoothness of the divergence for a fixed linear generator on
// fixed data; one row per epsilon in cfg.epsilon_list.
std::vector<SmoothnessRow> smoothness_probe(const ExperimentConfig& cfg);

// Near-optimal window over a finished series: the last 10% of epochs before
// the target epoch (or of the whole series when the target was not reached).
std::pair<int, int> near_optimal_window(int epochs_to_target, int total_epochs);

// Gradient penalty on real/fake interpolates for a dense+relu critic;
// exposed for its definitional unit tests.
struct GpResult {
  double value = 0.0;
  std::vector<nn::NamedParamT<float>> param_grads;
};
GpResult wgan_gp_penalty(const nn::Network& critic, const nn::Tensor& real,
                         const nn::Tensor& fake, double gp_lambda, std::uint64_t seed);

}  // namespace sinkdem::experiments
