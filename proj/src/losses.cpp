#include "sinkdem/losses.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace sinkdem::losses {

using nn::TensorT;

namespace {

double softplus(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size) * size);
  const int half = size / 2;
  double sum = 0.0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double dy = y - half, dx = x - half;
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      w[static_cast<std::size_t>(y) * size + x] = v;
      sum += v;
    }
  for (auto& v : w) v /= sum;
  return w;
}

template <typename T>
void check_single_channel_pair(const TensorT<T>& a, const TensorT<T>& b,
                               const char* who) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(who) + ": shape mismatch " + nn::shape_str(a.shape) +
                     " vs " + nn::shape_str(b.shape));
  if (!a.is4d() || a.dim(1) != 1)
    throw ShapeError(std::string(who) + ": expected single-channel (N,1,H,W) images");
}

// Per-position SSIM statistics and value; shared by value and gradient paths.
struct SsimTerms {
  double mu_x, mu_y, sx, sy, sxy, a1, a2, b1, b2, s;
};

template <typename T>
double ssim_accumulate(const TensorT<T>& pred, const TensorT<T>& target,
                       const SsimConfig& cfg,
                       const std::function<void(int, int, int, const SsimTerms&)>& sink) {
  const int N = pred.dim(0), H = pred.dim(2), W = pred.dim(3);
  const int k = cfg.window_size, half = k / 2;
  if (H < k || W < k)
    throw ValidationError("ssim: image smaller than the window");
  const auto win = gaussian_window(k, cfg.window_sigma);
  const double c1 = cfg.k1 * cfg.dynamic_range * cfg.k1 * cfg.dynamic_range;
  const double c2 = cfg.k2 * cfg.dynamic_range * cfg.k2 * cfg.dynamic_range;

  double total = 0.0;
  std::size_t count = 0;
  for (int n = 0; n < N; ++n)
    for (int cy = half; cy < H - half; ++cy)
      for (int cx = half; cx < W - half; ++cx) {
        SsimTerms t{};
        std::size_t wi = 0;
        double ex = 0, ey = 0, exx = 0, eyy = 0, exy = 0;
        for (int dy = -half; dy <= half; ++dy)
          for (int dx = -half; dx <= half; ++dx, ++wi) {
            const double w = win[wi];
            const double xv = pred.at4(n, 0, cy + dy, cx + dx);
            const double yv = target.at4(n, 0, cy + dy, cx + dx);
            ex += w * xv;
            ey += w * yv;
            exx += w * xv * xv;
            eyy += w * yv * yv;
            exy += w * xv * yv;
          }
        t.mu_x = ex;
        t.mu_y = ey;
        t.sx = exx - ex * ex;
        t.sy = eyy - ey * ey;
        t.sxy = exy - ex * ey;
        t.a1 = 2 * t.mu_x * t.mu_y + c1;
        t.a2 = 2 * t.sxy + c2;
        t.b1 = t.mu_x * t.mu_x + t.mu_y * t.mu_y + c1;
        t.b2 = t.sx + t.sy + c2;
        t.s = (t.a1 * t.a2) / (t.b1 * t.b2);
        total += t.s;
        ++count;
        if (sink) sink(n, cy, cx, t);
      }
  return total / static_cast<double>(count);
}

}  // namespace

template <typename T>
LossValueT<T> pixel_loss(const TensorT<T>& pred, const TensorT<T>& target) {
  if (!pred.same_shape(target))
    throw ShapeError("pixel_loss: shape mismatch " + nn::shape_str(pred.shape) + " vs " +
                     nn::shape_str(target.shape));
  LossValueT<T> out;
  out.grad = pred.zeros_like();
  const double inv = 1.0 / static_cast<double>(pred.numel());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
    acc += d * d;
    out.grad.data[i] = static_cast<T>(2.0 * d * inv);
  }
  out.value = acc * inv;
  return out;
}

template <typename T>
double mean_ssim(const TensorT<T>& pred, const TensorT<T>& target, const SsimConfig& cfg) {
  cfg.validate();
  check_single_channel_pair(pred, target, "ssim");
  return ssim_accumulate(pred, target, cfg, nullptr);
}

template <typename T>
LossValueT<T> ssim_loss(const TensorT<T>& pred, const TensorT<T>& target,
                        const SsimConfig& cfg) {
  cfg.validate();
  check_single_channel_pair(pred, target, "ssim_loss");
  const int H = pred.dim(2), W = pred.dim(3);
  const int k = cfg.window_size, half = k / 2;
  const auto win = gaussian_window(k, cfg.window_sigma);

  // first pass: per-position partials of S wrt (mu_x, sigma_x^2, sigma_xy)
  struct Coef {
    double dmu, dsx, dsxy, mu_x, mu_y;
  };
  const int ph = H - 2 * half, pw = W - 2 * half;
  std::vector<Coef> coefs(static_cast<std::size_t>(pred.dim(0)) * ph * pw);
  const double msim = ssim_accumulate(
      pred, target, cfg, [&](int n, int cy, int cx, const SsimTerms& t) {
        Coef c{};
        const double bb = t.b1 * t.b2;
        c.dmu = 2.0 * (t.mu_y * t.a2 * t.b1 - t.mu_x * t.a1 * t.a2) / (t.b1 * bb);
        c.dsx = -t.a1 * t.a2 / (bb * t.b2);
        c.dsxy = 2.0 * t.a1 / bb;
        c.mu_x = t.mu_x;
        c.mu_y = t.mu_y;
        coefs[(static_cast<std::size_t>(n) * ph + (cy - half)) * pw + (cx - half)] = c;
      });

  LossValueT<T> out;
  const double clamped = std::min(1.0, std::max(cfg.ssim_clamp_min, msim));
  out.value = -std::log(clamped);
  out.grad = pred.zeros_like();
  const bool active = msim > cfg.ssim_clamp_min && msim < 1.0;
  if (!active) return out;  // clamped: subgradient zero

  const double dval = -1.0 / clamped / static_cast<double>(coefs.size());
  for (int n = 0; n < pred.dim(0); ++n)
    for (int cy = half; cy < H - half; ++cy)
      for (int cx = half; cx < W - half; ++cx) {
        const Coef& c =
            coefs[(static_cast<std::size_t>(n) * ph + (cy - half)) * pw + (cx - half)];
        std::size_t wi = 0;
        for (int dy = -half; dy <= half; ++dy)
          for (int dx = -half; dx <= half; ++dx, ++wi) {
            const double w = win[wi];
            const double xv = pred.at4(n, 0, cy + dy, cx + dx);
            const double yv = target.at4(n, 0, cy + dy, cx + dx);
            const double term =
                c.dmu * w + c.dsx * 2.0 * w * (xv - c.mu_x) + c.dsxy * w * (yv - c.mu_y);
            out.grad.at4(n, 0, cy + dy, cx + dx) += static_cast<T>(dval * term);
          }
      }
  return out;
}

template <typename T>
LossValueT<T> adv_g_loss(const TensorT<T>& fake_logits) {
  LossValueT<T> out;
  out.grad = fake_logits.zeros_like();
  const double inv = 1.0 / static_cast<double>(fake_logits.numel());
  double acc = 0.0;
  for (std::size_t i = 0; i < fake_logits.numel(); ++i) {
    const double l = fake_logits.data[i];
    acc += softplus(-l);
    out.grad.data[i] = static_cast<T>(-sigmoid(-l) * inv);
  }
  out.value = acc * inv;
  return out;
}

template <typename T>
AdvDLossT<T> adv_d_loss(const TensorT<T>& real_logits, const TensorT<T>& fake_logits) {
  if (real_logits.numel() == 0 || fake_logits.numel() == 0)
    throw ValidationError("adv_d_loss: empty batch");
  AdvDLossT<T> out;
  out.grad_real = real_logits.zeros_like();
  out.grad_fake = fake_logits.zeros_like();
  const double inv_r = 1.0 / static_cast<double>(real_logits.numel());
  const double inv_f = 1.0 / static_cast<double>(fake_logits.numel());
  for (std::size_t i = 0; i < real_logits.numel(); ++i) {
    const double l = real_logits.data[i];
    out.real_term += softplus(-l) * inv_r;
    out.grad_real.data[i] = static_cast<T>(-sigmoid(-l) * inv_r);
  }
  for (std::size_t i = 0; i < fake_logits.numel(); ++i) {
    const double l = fake_logits.data[i];
    out.fake_term += softplus(l) * inv_f;
    out.grad_fake.data[i] = static_cast<T>(sigmoid(l) * inv_f);
  }
  out.value = out.real_term + out.fake_term;
  return out;
}

template <typename T>
LossValueT<T> da_loss(const TensorT<T>& sa_coarse, const TensorT<T>& sa_real) {
  // definitional reuse of the pixel loss; target branch stays constant
  return pixel_loss(sa_coarse, sa_real);
}

namespace {

template <typename T>
ot::Matrix flatten_batch(const TensorT<T>& batch) {
  const int n = batch.dim(0);
  const std::size_t d = batch.numel() / static_cast<std::size_t>(n);
  ot::Matrix m(n, static_cast<Eigen::Index>(d));
  for (int i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      m(i, static_cast<Eigen::Index>(j)) = batch.data[static_cast<std::size_t>(i) * d + j];
  return m;
}

}  // namespace

template <typename T>
LossValueT<T> sinkhorn_batch_loss(const TensorT<T>& fake_batch,
                                  const TensorT<T>& real_batch,
                                  const ot::SinkhornConfig& cfg) {
  if (fake_batch.shape.size() != real_batch.shape.size() ||
      fake_batch.numel() / fake_batch.dim(0) != real_batch.numel() / real_batch.dim(0))
    throw ShapeError("sinkhorn_batch_loss: image shapes differ between batches");
  const ot::Matrix X = flatten_batch(fake_batch);
  const ot::Matrix Y = flatten_batch(real_batch);
  const ot::Vector mu = ot::Vector::Constant(X.rows(), 1.0 / static_cast<double>(X.rows()));
  const ot::Vector nu = ot::Vector::Constant(Y.rows(), 1.0 / static_cast<double>(Y.rows()));
  const auto res = ot::divergence_with_grad(X, Y, mu, nu, cfg);

  LossValueT<T> out;
  out.value = res.value;
  out.grad = fake_batch.zeros_like();
  const std::size_t d = fake_batch.numel() / static_cast<std::size_t>(fake_batch.dim(0));
  for (int i = 0; i < fake_batch.dim(0); ++i)
    for (std::size_t j = 0; j < d; ++j)
      out.grad.data[static_cast<std::size_t>(i) * d + j] =
          static_cast<T>(res.grad_x(i, static_cast<Eigen::Index>(j)));
  return out;
}

template <typename T>
LossValueT<T> sinkhorn_pixel_loss(const TensorT<T>& fake_batch,
                                  const TensorT<T>& real_batch,
                                  const ot::SinkhornConfig& cfg) {
  if (!fake_batch.same_shape(real_batch))
    throw ShapeError("sinkhorn_pixel_loss: batches must share shape");
  const int n = fake_batch.dim(0);
  const std::size_t d = fake_batch.numel() / static_cast<std::size_t>(n);
  LossValueT<T> out;
  out.grad = fake_batch.zeros_like();
  for (int i = 0; i < n; ++i) {
    ot::Matrix X(static_cast<Eigen::Index>(d), 1), Y(static_cast<Eigen::Index>(d), 1);
    for (std::size_t j = 0; j < d; ++j) {
      X(static_cast<Eigen::Index>(j), 0) = fake_batch.data[static_cast<std::size_t>(i) * d + j];
      Y(static_cast<Eigen::Index>(j), 0) = real_batch.data[static_cast<std::size_t>(i) * d + j];
    }
    const ot::Vector u = ot::Vector::Constant(static_cast<Eigen::Index>(d),
                                              1.0 / static_cast<double>(d));
    const auto res = ot::divergence_with_grad(X, Y, u, u, cfg);
    out.value += res.value / n;
    for (std::size_t j = 0; j < d; ++j)
      out.grad.data[static_cast<std::size_t>(i) * d + j] =
          static_cast<T>(res.grad_x(static_cast<Eigen::Index>(j), 0) / n);
  }
  return out;
}

template <typename T>
LossValueT<T> generator_total(const LossValueT<T>& pixel, const LossValueT<T>& str,
                              const LossValueT<T>& adv, const LossValueT<T>& otp,
                              const LossWeights& w) {
  w.validate();
  LossValueT<T> out;
  out.value = w.lambda_P * pixel.value + w.lambda_str * str.value +
              w.lambda_ADV * adv.value + w.lambda_OT * otp.value;
  out.grad = pixel.grad.zeros_like();
  auto accumulate = [&](const TensorT<T>& g, double lambda) {
    if (lambda == 0.0 && g.numel() == 0) return;  // unused part may be empty
    if (!g.same_shape(out.grad))
      throw ShapeError("generator_total: part gradients disagree on shape");
    for (std::size_t i = 0; i < g.numel(); ++i)
      out.grad.data[i] += static_cast<T>(lambda * static_cast<double>(g.data[i]));
  };
  accumulate(pixel.grad, w.lambda_P);
  accumulate(str.grad, w.lambda_str);
  accumulate(adv.grad, w.lambda_ADV);
  accumulate(otp.grad, w.lambda_OT);
  return out;
}

template <typename T>
double discriminator_total(const AdvDLossT<T>& adv, const LossValueT<T>& da,
                           double lambda_DA) {
  if (lambda_DA < 0) throw ValidationError("discriminator_total: lambda_DA must be >= 0");
  return adv.value + lambda_DA * da.value;
}

// explicit instantiations
#define SINKDEM_INSTANTIATE(T)                                                        \
  template LossValueT<T> pixel_loss(const TensorT<T>&, const TensorT<T>&);            \
  template double mean_ssim(const TensorT<T>&, const TensorT<T>&, const SsimConfig&); \
  template LossValueT<T> ssim_loss(const TensorT<T>&, const TensorT<T>&,              \
                                   const SsimConfig&);                                \
  template LossValueT<T> adv_g_loss(const TensorT<T>&);                               \
  template AdvDLossT<T> adv_d_loss(const TensorT<T>&, const TensorT<T>&);             \
  template LossValueT<T> da_loss(const TensorT<T>&, const TensorT<T>&);               \
  template LossValueT<T> sinkhorn_batch_loss(const TensorT<T>&, const TensorT<T>&,    \
                                             const ot::SinkhornConfig&);              \
  template LossValueT<T> sinkhorn_pixel_loss(const TensorT<T>&, const TensorT<T>&,    \
                                             const ot::SinkhornConfig&);              \
  template LossValueT<T> generator_total(const LossValueT<T>&, const LossValueT<T>&,  \
                                         const LossValueT<T>&, const LossValueT<T>&,  \
                                         const LossWeights&);                         \
  template double discriminator_total(const AdvDLossT<T>&, const LossValueT<T>&, double);

SINKDEM_INSTANTIATE(float)
SINKDEM_INSTANTIATE(double)
#undef SINKDEM_INSTANTIATE

}  // namespace sinkdem::losses
