#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sinkdem/attention.hpp"
#include "sinkdem/losses.hpp"
#include "sinkdem/metrics.hpp"
#include "sinkdem/net.hpp"

namespace sinkdem::siran {

struct SiranConfig {
  int base_channels = 64;  // 32 at toy scale
  int n_dmrb_g = 6;
  int n_dmrb_d = 6;        // also the attention tap count k
  int rcb_per_dmrb = 4;
  int scale_factor = 1;    // inputs arrive pre-upsampled
  float leaky_slope = 0.2f;
  int prior_channels = 3;

  void validate() const;
};

struct GeneratorModel {
  nn::Network net;  // inputs "xt" (N,1,H,W) and "prior" (N,3,H,W); output node "out"
  std::string output = "out";
  std::string probe_first;   // head conv weight, for gradient probes
  std::string probe_hidden;  // a mid-stack DMRB conv weight
};

// PSA internals: conv1x1 response on the single-channel map plus a scalar
// channel gate.
struct PsaParams {
  float w = 1.0f;
  float b = 0.0f;
  float gate = 0.0f;
};

struct DiscriminatorModel {
  nn::Network net;  // input "img" (N,1,H,W); output node "logit"
  std::string logit = "logit";
  std::vector<std::string> taps;  // one activation per DMRB
  PsaParams psa;
  std::string probe_first;
  std::string probe_hidden;
};

// RCB = conv3x3 -> leaky relu -> conv3x3 with an additive skip; DMRB chains
// rcb_per_dmrb RCBs, concatenates their outputs, fuses with conv1x1 and adds
// the block-level skip. The generator runs per-input head convs, a channel
// concat, n_dmrb_g DMRBs and a conv3x3 tail, with a conv1x1 global skip from
// the upsampled input (no activation on the skip). The discriminator runs a
// two-stage stride-2 encoder, n_dmrb_d DMRBs with exposed taps, a decoder
// conv, global average pooling and a two-layer MLP to one logit.
std::pair<GeneratorModel, DiscriminatorModel> build_siran(const SiranConfig& cfg,
                                                          std::uint64_t seed);

// ---- discriminator spatial attention ----

struct DsaCache {
  std::vector<nn::Tensor> taps;
  std::vector<nn::Tensor> channel_abs_sums;  // per tap, (N,1,h_i,w_i)
  nn::Tensor summed;                         // (N,1,H,W) before normalization
  std::vector<float> mins, maxs;             // per sample
};

// Channel-wise absolute activation sums across all taps, resized to a common
// spatial size and min-max normalized per sample; constant maps go to zero.
nn::Tensor d_spatial_attention(const std::vector<nn::Tensor>& taps, int out_h, int out_w,
                               DsaCache* cache = nullptr);

// Adjoint of d_spatial_attention; normalization bounds are treated as
// constants (subgradient choice). Returns one gradient tensor per tap.
std::vector<nn::Tensor> d_spatial_attention_backward(const DsaCache& cache,
                                                     const nn::Tensor& dmap);

// ---- PSA ----

struct PsaCache {
  nn::Tensor input;
  nn::Tensor softmaxed;  // (N,1,H,W)
  std::vector<float> mins, maxs;
  float gate_sig = 0.0f;
};

// Spatial softmax of a conv1x1 response, gated by a learned scalar, min-max
// renormalized to [0,1]; resolution preserved.
nn::Tensor psa(const nn::Tensor& map, const PsaParams& params, PsaCache* cache = nullptr);

struct PsaGrads {
  nn::Tensor dmap;
  float dw = 0.0f, db = 0.0f, dgate = 0.0f;
};
PsaGrads psa_backward(const PsaCache& cache, const PsaParams& params,
                      const nn::Tensor& dout);

// ---- generator conditioning ----

// Broadcast-multiplies the attention map onto every prior channel.
nn::Tensor condition_prior(const nn::Tensor& z, const nn::Tensor& a_s);

struct GeneratorForward {
  nn::ActsT<float> acts;
  nn::Tensor out;
};

GeneratorForward generator_forward(const GeneratorModel& g, const nn::Tensor& xt,
                                   const nn::Tensor& z, const nn::Tensor& a_s);

// ---- one adversarial training step ----

struct TrainStepOptions {
  losses::LossWeights weights;
  ot::SinkhornConfig sink;
  losses::SsimConfig ssim;
  bool use_attention = true;   // A_s = ones when off
  bool use_psa = true;         // raw D_SA map when off
  bool detach_attention = true;  // default: generator update leaves D untouched
  int probe_iters = 50;
};

struct TrainStepResult {
  data::MetricsRecord metrics;  // loss components and gradient spectral norms
  std::uint64_t d_hash_before = 0;
  std::uint64_t d_hash_at_g_update = 0;  // D parameters seen by the generator pass
  std::uint64_t d_hash_after = 0;
};

// One discriminator update (adversarial + lambda_DA domain adaptation on
// D_SA(xt) vs D_SA(y)), then one generator update on the weighted total with
// A_s recomputed from the updated discriminator.
TrainStepResult train_step(GeneratorModel& g, DiscriminatorModel& d,
                           nn::AdamStateT<float>& g_opt, nn::AdamStateT<float>& d_opt,
                           const nn::Tensor& xt, const nn::Tensor& z,
                           const nn::Tensor& y, const TrainStepOptions& opt);

// Computes A_s = psa(d_spatial_attention(taps of D on xt)) at the input's
// spatial size; the inference-time conditioning path.
nn::Tensor attention_for(const DiscriminatorModel& d, const nn::Tensor& xt,
                         bool use_psa = true);

// Writes base config keys and the seed; the checkpoint sidecar.
void write_model_manifest(const std::string& path, const SiranConfig& cfg,
                          std::uint64_t seed);

}  // namespace sinkdem::siran
