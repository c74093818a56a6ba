#pragma once

#include "sinkdem/ot.hpp"
#include "sinkdem/tensor.hpp"

namespace sinkdem::losses {

// Loss weights of the total objectives; defaults are the paper-scale values.
struct LossWeights {
  double lambda_DA = 0.1;
  double lambda_P = 100.0;
  double lambda_str = 1.0;
  double lambda_ADV = 1.0;
  double lambda_OT = 0.01;

  void validate() const {
    if (lambda_DA < 0 || lambda_P < 0 || lambda_str < 0 || lambda_ADV < 0 || lambda_OT < 0)
      throw ValidationError("loss weights must be nonnegative");
  }
};

struct SsimConfig {
  int window_size = 11;
  double window_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;   // L
  double ssim_clamp_min = 1e-4; // floor before the log

  void validate() const {
    if (window_size < 1 || window_size % 2 == 0)
      throw ConfigError("ssim: window_size must be odd and positive");
    if (!(dynamic_range > 0)) throw ConfigError("ssim: dynamic range must be > 0");
    if (!(ssim_clamp_min > 0) || !(ssim_clamp_min < 1))
      throw ConfigError("ssim: clamp must lie in (0, 1)");
  }
};

template <typename T>
struct LossValueT {
  double value = 0.0;
  nn::TensorT<T> grad;
};
using LossValue = LossValueT<float>;

// Mean squared error over all elements; grad = 2 (pred - target) / count.
template <typename T>
LossValueT<T> pixel_loss(const nn::TensorT<T>& pred, const nn::TensorT<T>& target);

// Gaussian-windowed mean SSIM over valid positions of single-channel images.
template <typename T>
double mean_ssim(const nn::TensorT<T>& pred, const nn::TensorT<T>& target,
                 const SsimConfig& cfg);

// -log(clamp(mean SSIM)), with the analytic gradient through the windowed
// statistics.
template <typename T>
LossValueT<T> ssim_loss(const nn::TensorT<T>& pred, const nn::TensorT<T>& target,
                        const SsimConfig& cfg);

// Non-saturating generator loss: mean softplus(-logit).
template <typename T>
LossValueT<T> adv_g_loss(const nn::TensorT<T>& fake_logits);

template <typename T>
struct AdvDLossT {
  double value = 0.0;
  double real_term = 0.0;  // mean softplus(-real)
  double fake_term = 0.0;  // mean softplus(fake)
  nn::TensorT<T> grad_real;
  nn::TensorT<T> grad_fake;
};

// Stable cross-entropy on logits for the discriminator.
template <typename T>
AdvDLossT<T> adv_d_loss(const nn::TensorT<T>& real_logits,
                        const nn::TensorT<T>& fake_logits);

// Mean squared difference between attention maps; gradient flows to the
// coarse branch only (the real branch is the target constant).
template <typename T>
LossValueT<T> da_loss(const nn::TensorT<T>& sa_coarse, const nn::TensorT<T>& sa_real);

// Debiased Sinkhorn divergence between batches, each image flattened to one
// support point with uniform weights. Gradient is the envelope-theorem
// gradient reshaped back to image shape.
template <typename T>
LossValueT<T> sinkhorn_batch_loss(const nn::TensorT<T>& fake_batch,
                                  const nn::TensorT<T>& real_batch,
                                  const ot::SinkhornConfig& cfg);

// Comparison mode: each image's pixels form a 1-D intensity cloud and the
// per-pair divergences are averaged (the estimator-granularity alternative).
template <typename T>
LossValueT<T> sinkhorn_pixel_loss(const nn::TensorT<T>& fake_batch,
                                  const nn::TensorT<T>& real_batch,
                                  const ot::SinkhornConfig& cfg);

// lambda_P L_P + lambda_str L_str + lambda_ADV L_ADV + lambda_OT L_OT,
// all parts holding gradients with respect to the same prediction.
template <typename T>
LossValueT<T> generator_total(const LossValueT<T>& pixel, const LossValueT<T>& str,
                              const LossValueT<T>& adv, const LossValueT<T>& otp,
                              const LossWeights& w);

// Adversarial sum plus lambda_DA times the domain adaptation value.
template <typename T>
double discriminator_total(const AdvDLossT<T>& adv, const LossValueT<T>& da,
                           double lambda_DA);

}  // namespace sinkdem::losses
