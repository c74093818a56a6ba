#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sinkdem/losses.hpp"
#include "sinkdem/rng.hpp"

using namespace sinkdem;
using namespace sinkdem::losses;
using nn::Tensor;
using nn::TensorD;

namespace {

TensorD randu(Rng& rng, std::vector<int> shape, double lo = 0.0, double hi = 1.0) {
  TensorD t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Central-difference check of a loss gradient, in double.
template <typename LossFn>
double fd_max_rel(const TensorD& x0, LossFn f, const TensorD& analytic, double h,
                  int sample, Rng& rng) {
  double worst = 0.0;
  const double scale = [&] {
    double m = 0.0;
    for (double v : analytic.data) m = std::max(m, std::abs(v));
    return std::max(m, 1e-12);
  }();
  for (int s = 0; s < sample; ++s) {
    const std::size_t i = static_cast<std::size_t>(rng.below(x0.numel()));
    TensorD xp = x0, xm = x0;
    xp.data[i] += h;
    xm.data[i] -= h;
    const double fd = (f(xp) - f(xm)) / (2 * h);
    worst = std::max(worst, std::abs(fd - analytic.data[i]) / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("pixel_loss hand cases") {
  TensorD a({1, 1, 2, 2}), b({1, 1, 2, 2});
  a.data = {0, 0, 1, 1};
  b.data = {1, 1, 1, 1};
  const auto l = pixel_loss(a, b);
  CHECK(l.value == doctest::Approx(0.5));
  const auto zero = pixel_loss(b, b);
  CHECK(zero.value == 0.0);
  for (double g : zero.grad.data) CHECK(g == 0.0);
}

TEST_CASE("pixel_loss matches independent accumulation and FD") {
  Rng rng(31);
  const TensorD x = randu(rng, {2, 1, 4, 4});
  const TensorD y = randu(rng, {2, 1, 4, 4});
  const auto l = pixel_loss(x, y);
  // two-pass reference: sum of squares then divide
  double acc = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double d = x.data[i] - y.data[i];
    acc += d * d;
  }
  CHECK(l.value == doctest::Approx(acc / x.numel()).epsilon(1e-12));
  const double rel = fd_max_rel(
      x, [&](const TensorD& t) { return pixel_loss(t, y).value; }, l.grad, 1e-6, 16, rng);
  CHECK(rel <= 1e-6);
}

TEST_CASE("ssim identity and constant-image closed form") {
  SsimConfig cfg;
  Rng rng(32);
  const TensorD x = randu(rng, {1, 1, 32, 32});
  CHECK(mean_ssim(x, x, cfg) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(ssim_loss(x, x, cfg).value == doctest::Approx(0.0).epsilon(1e-9));

  TensorD a({1, 1, 32, 32}), b({1, 1, 32, 32});
  for (auto& v : a.data) v = 0.5;
  for (auto& v : b.data) v = 0.7;
  const double c1 = 0.01 * 0.01;
  const double expect = (2 * 0.5 * 0.7 + c1) / (0.5 * 0.5 + 0.7 * 0.7 + c1);
  CHECK(mean_ssim(a, b, cfg) == doctest::Approx(expect).epsilon(1e-9));
  CHECK(ssim_loss(a, b, cfg).value == doctest::Approx(-std::log(expect)).epsilon(1e-9));
}

TEST_CASE("ssim_loss gradient matches finite differences") {
  SsimConfig cfg;
  Rng rng(33);
  const TensorD x = randu(rng, {1, 1, 14, 14}, 0.2, 0.8);
  const TensorD y = randu(rng, {1, 1, 14, 14}, 0.2, 0.8);
  const auto l = ssim_loss(x, y, cfg);
  const double rel = fd_max_rel(
      x, [&](const TensorD& t) { return ssim_loss(t, y, cfg).value; }, l.grad, 1e-5, 40,
      rng);
  CHECK(rel <= 1e-3);
}

TEST_CASE("ssim_loss rejects undersized images and stays nonnegative") {
  SsimConfig cfg;
  TensorD tiny({1, 1, 8, 8});
  CHECK_THROWS_AS(ssim_loss(tiny, tiny, cfg), ValidationError);

  Rng rng(34);
  for (int trial = 0; trial < 5; ++trial) {
    const TensorD x = randu(rng, {1, 1, 16, 16});
    const TensorD y = randu(rng, {1, 1, 16, 16});
    CHECK(ssim_loss(x, y, cfg).value >= 0.0);
  }
}

TEST_CASE("adv_g_loss values at reference logits") {
  TensorD z({1, 1});
  z.data = {0.0};
  CHECK(adv_g_loss(z).value == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  z.data = {20.0};
  CHECK(adv_g_loss(z).value == doctest::Approx(2.061e-9).epsilon(1e-3));
  z.data = {-20.0};
  CHECK(adv_g_loss(z).value == doctest::Approx(20.0).epsilon(1e-6));
  // no overflow deep into saturation
  z.data = {80.0};
  CHECK(std::isfinite(adv_g_loss(z).value));
  z.data = {-80.0};
  CHECK(std::isfinite(adv_g_loss(z).value));
}

TEST_CASE("adv_g_loss gradient matches finite differences") {
  Rng rng(35);
  TensorD z({4, 1});
  for (auto& v : z.data) v = rng.uniform(-3.0, 3.0);
  const auto l = adv_g_loss(z);
  const double rel = fd_max_rel(
      z, [](const TensorD& t) { return adv_g_loss(t).value; }, l.grad, 1e-6, 8, rng);
  CHECK(rel <= 1e-6);
}

TEST_CASE("adv_d_loss values and gradient signs") {
  TensorD r({1, 1}), f({1, 1});
  r.data = {0.0};
  f.data = {0.0};
  auto l = adv_d_loss(r, f);
  CHECK(l.value == doctest::Approx(2 * std::log(2.0)).epsilon(1e-9));
  CHECK(l.grad_real.data[0] < 0.0);
  CHECK(l.grad_fake.data[0] > 0.0);

  r.data = {20.0};
  f.data = {-20.0};
  CHECK(adv_d_loss(r, f).value == doctest::Approx(0.0).epsilon(1e-7));

  Rng rng(36);
  TensorD rr({3, 1}), ff({3, 1});
  for (auto& v : rr.data) v = rng.uniform(-2, 2);
  for (auto& v : ff.data) v = rng.uniform(-2, 2);
  const auto big = adv_d_loss(rr, ff);
  const double rel_r = fd_max_rel(
      rr, [&](const TensorD& t) { return adv_d_loss(t, ff).value; }, big.grad_real, 1e-6,
      6, rng);
  const double rel_f = fd_max_rel(
      ff, [&](const TensorD& t) { return adv_d_loss(rr, t).value; }, big.grad_fake, 1e-6,
      6, rng);
  CHECK(rel_r <= 1e-6);
  CHECK(rel_f <= 1e-6);
}

TEST_CASE("da_loss equals pixel loss and targets stay constant") {
  Rng rng(37);
  const TensorD a = randu(rng, {1, 1, 6, 6});
  const TensorD b = randu(rng, {1, 1, 6, 6});
  CHECK(da_loss(a, b).value == doctest::Approx(pixel_loss(a, b).value).epsilon(1e-12));
  CHECK(da_loss(a, a).value == 0.0);
  TensorD zeros({1, 1, 3, 3}), ones({1, 1, 3, 3});
  for (auto& v : ones.data) v = 1.0;
  CHECK(da_loss(zeros, ones).value == doctest::Approx(1.0));
}

TEST_CASE("sinkhorn_batch_loss axioms and single-pair distance") {
  ot::SinkhornConfig cfg;
  cfg.epsilon = 0.1;
  cfg.max_iters = 5000;
  cfg.marginal_tol = 1e-12;

  Rng rng(38);
  const TensorD batch = randu(rng, {4, 1, 4, 4});
  const auto same = sinkhorn_batch_loss(batch, batch, cfg);
  CHECK(std::abs(same.value) <= 1e-8);
  for (double g : same.grad.data) CHECK(std::abs(g) <= 1e-8);

  const TensorD a = randu(rng, {1, 1, 3, 3});
  const TensorD b = randu(rng, {1, 1, 3, 3});
  const auto pair = sinkhorn_batch_loss(a, b, cfg);
  double dist = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = a.data[i] - b.data[i];
    dist += d * d;
  }
  dist = std::sqrt(dist);
  CHECK(pair.value == doctest::Approx(dist).epsilon(1e-9));
  double gnorm = 0.0;
  for (double g : pair.grad.data) gnorm += g * g;
  CHECK(std::sqrt(gnorm) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("sinkhorn_batch_loss permutation invariance") {
  ot::SinkhornConfig cfg;
  cfg.epsilon = 0.5;
  cfg.max_iters = 3000;
  cfg.marginal_tol = 1e-12;
  Rng rng(39);
  const TensorD fake = randu(rng, {4, 1, 3, 3});
  TensorD real = randu(rng, {4, 1, 3, 3});
  const double v1 = sinkhorn_batch_loss(fake, real, cfg).value;
  // rotate the real batch by one image
  TensorD rot = real;
  const std::size_t d = real.numel() / 4;
  for (int i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < d; ++j)
      rot.data[static_cast<std::size_t>(i) * d + j] =
          real.data[static_cast<std::size_t>((i + 1) % 4) * d + j];
  const double v2 = sinkhorn_batch_loss(fake, rot, cfg).value;
  CHECK(v1 == doctest::Approx(v2).epsilon(1e-9));
}

TEST_CASE("sinkhorn_batch_loss gradient matches finite differences") {
  ot::SinkhornConfig cfg;
  cfg.epsilon = 0.1;
  cfg.max_iters = 20000;
  cfg.marginal_tol = 1e-13;
  Rng rng(40);
  const TensorD fake = randu(rng, {4, 1, 8, 8});
  const TensorD real = randu(rng, {4, 1, 8, 8});
  const auto l = sinkhorn_batch_loss(fake, real, cfg);
  const double rel = fd_max_rel(
      fake, [&](const TensorD& t) { return sinkhorn_batch_loss(t, real, cfg).value; },
      l.grad, 1e-5, 24, rng);
  CHECK(rel <= 1e-3);
}

TEST_CASE("sinkhorn_pixel_loss comparison mode") {
  ot::SinkhornConfig cfg;
  cfg.epsilon = 0.5;
  cfg.max_iters = 2000;
  cfg.marginal_tol = 1e-10;
  Rng rng(41);
  const TensorD x = randu(rng, {2, 1, 4, 4});
  CHECK(std::abs(sinkhorn_pixel_loss(x, x, cfg).value) <= 1e-9);
  const TensorD y = randu(rng, {2, 1, 4, 4});
  CHECK(sinkhorn_pixel_loss(x, y, cfg).value >= -1e-9);
}

TEST_CASE("generator_total weighting") {
  LossWeights w;  // defaults: 100, 1, 1, 0.01
  auto unit = [](double v) {
    LossValueT<double> l;
    l.value = v;
    l.grad = TensorD({1, 1});
    l.grad.data[0] = v;
    return l;
  };
  const auto total = generator_total(unit(1), unit(1), unit(1), unit(1), w);
  CHECK(total.value == doctest::Approx(102.01));
  CHECK(total.grad.data[0] == doctest::Approx(102.01));

  const auto zeros = generator_total(unit(0), unit(0), unit(0), unit(0), w);
  CHECK(zeros.value == 0.0);

  LossWeights w2 = w;
  w2.lambda_P *= 2;
  const auto doubled = generator_total(unit(1), unit(1), unit(1), unit(1), w2);
  CHECK(doubled.value - total.value == doctest::Approx(100.0));
}

TEST_CASE("discriminator_total weighting") {
  TensorD r({1, 1}), f({1, 1});
  const auto adv = adv_d_loss(r, f);  // logits zero: 2 log 2
  LossValueT<double> da;
  da.value = 1.0;
  CHECK(discriminator_total(adv, da, 0.1) ==
        doctest::Approx(2 * std::log(2.0) + 0.1).epsilon(1e-9));
  da.value = 0.0;
  CHECK(discriminator_total(adv, da, 0.1) == doctest::Approx(adv.value));
  da.value = 5.0;
  CHECK(discriminator_total(adv, da, 0.0) == doctest::Approx(adv.value));
}

TEST_CASE("adv losses finite over the logit range") {
  for (double l : {-80.0, -40.0, 0.0, 40.0, 80.0}) {
    TensorD z({1, 1});
    z.data = {l};
    CHECK(std::isfinite(adv_g_loss(z).value));
    CHECK(std::isfinite(adv_g_loss(z).grad.data[0]));
    const auto d = adv_d_loss(z, z);
    CHECK(std::isfinite(d.value));
    CHECK(std::isfinite(d.grad_real.data[0]));
    CHECK(std::isfinite(d.grad_fake.data[0]));
  }
}
