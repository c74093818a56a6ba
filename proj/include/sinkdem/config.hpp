#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sinkdem/losses.hpp"

namespace sinkdem::experiments {

enum class Method { kSinkhornGan, kGan, kWgan, kWganGp };

Method method_from_string(const std::string& s);
const char* method_name(Method m);

// Every field is addressable from the key=value config file and --set
// overrides; unknown keys are hard errors.
struct ExperimentConfig {
  std::string name = "run";
  std::uint64_t seed = 1;
  Method method = Method::kSinkhornGan;
  std::vector<double> epsilon_list = {0.001, 0.1, 10.0};
  int max_epochs = 500;
  double target_mse = 0.04;
  int batch = 64;
  double lr = 0.001;        // denoising; the SR preset drops this to 1e-4
  int subset_size = 6000;   // 0 = full training set
  int test_subset = 1000;   // 0 = full test set
  double noise_sigma = 0.3;
  double epsilon = 0.1;     // entropic weight for the training loss
  int sinkhorn_iters = 10;  // T
  double marginal_tol = 1e-6;
  double clip_c = 0.01;     // WGAN weight clip
  double gp_lambda = 10.0;  // WGAN-GP penalty weight
  losses::LossWeights weights{0.0, 1.0, 0.0, 0.15, 1.5};  // denoise defaults
  bool sinkhorn_per_pixel = false;  // estimator-granularity comparison flag
  std::string data_dir = "data";
  std::string out_dir = "runs/run";

  // synthetic super-resolution toy
  int sr_train = 192;
  int sr_test = 32;
  int sr_patch = 32;
  int sr_base_channels = 12;
  int sr_n_dmrb = 2;
  int sr_rcb = 2;
  int sr_factor = 4;
  double sr_blur_sigma = 1.0;
  double sr_terrain_roughness = 0.6;
  double sr_pixel_target = 0.0035;
  bool ablation_prior = true;
  bool ablation_attention = true;
  bool ablation_psa = true;
  bool ablation_sinkhorn = true;

  // smoothness probe
  int probe_pairs = 50;
  int probe_points = 12;
  double probe_lipschitz_scale = 1.0;

  int threads = 0;  // 0: SINKDEM_THREADS or hardware_concurrency

  void validate() const;
};

// Applies one key=value assignment; throws ConfigError on unknown keys or
// unparsable values.
void apply_config_kv(ExperimentConfig& cfg, const std::string& key,
                     const std::string& value);

// key=value file, one per line, '#' comments.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig config_from(const std::string& path /*may be empty*/,
                             const std::vector<std::string>& overrides);

// Full resolved config, re-parseable; written as config.echo next to outputs.
void write_config_echo(const ExperimentConfig& cfg, const std::string& path);

int effective_threads(const ExperimentConfig& cfg);

}  // namespace sinkdem::experiments
