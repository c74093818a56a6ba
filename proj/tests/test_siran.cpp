#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sinkdem/rng.hpp"
#include "sinkdem/siran.hpp"

using namespace sinkdem;
using namespace sinkdem::siran;
using nn::Tensor;

namespace {

Tensor randu(Rng& rng, std::vector<int> shape, double lo = 0.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

SiranConfig tiny_cfg() {
  SiranConfig cfg;
  cfg.base_channels = 8;
  cfg.n_dmrb_g = 2;
  cfg.n_dmrb_d = 2;
  cfg.rcb_per_dmrb = 2;
  return cfg;
}

// independent per-layer parameter count for the generator
std::size_t generator_param_formula(const SiranConfig& cfg) {
  const std::size_t c = static_cast<std::size_t>(cfg.base_channels);
  const std::size_t h = c / 2;
  std::size_t total = 0;
  total += 9 * 1 * h + h;                    // head conv on xt
  total += 9 * cfg.prior_channels * h + h;   // head conv on prior
  const std::size_t rcb = 2 * (9 * c * c + c);
  const std::size_t dmrb =
      static_cast<std::size_t>(cfg.rcb_per_dmrb) * rcb +
      (static_cast<std::size_t>(cfg.rcb_per_dmrb) * c) * c + c;  // fuse conv1x1
  total += static_cast<std::size_t>(cfg.n_dmrb_g) * dmrb;
  total += 9 * c * 1 + 1;  // tail
  total += 1 * 1 + 1;      // global skip conv1x1
  return total;
}

std::size_t count_params(const nn::Network& net) {
  std::size_t n = 0;
  for (const auto& p : net.params) n += p.value.numel();
  return n;
}

}  // namespace

TEST_CASE("generator parameter count matches the closed-form formula") {
  for (SiranConfig cfg : {tiny_cfg(), [] {
         SiranConfig c;
         c.base_channels = 32;  // toy scale
         return c;
       }()}) {
    auto [g, d] = build_siran(cfg, 7);
    CHECK(count_params(g.net) == generator_param_formula(cfg));
    (void)d;
  }
}

TEST_CASE("generator forward shape contract") {
  SiranConfig cfg;
  cfg.base_channels = 32;
  auto [g, d] = build_siran(cfg, 11);
  Rng rng(12);
  const Tensor xt = randu(rng, {1, 1, 64, 64});
  const Tensor z = randu(rng, {1, 3, 64, 64});
  const Tensor ones = [] {
    Tensor t({1, 1, 64, 64});
    std::fill(t.data.begin(), t.data.end(), 1.0f);
    return t;
  }();
  const auto fw = generator_forward(g, xt, z, ones);
  CHECK(fw.out.shape == xt.shape);
  (void)d;
}

TEST_CASE("global skip passes xt through when the body is zeroed") {
  auto [g, d] = build_siran(tiny_cfg(), 13);
  for (auto& p : g.net.params)
    std::fill(p.value.data.begin(), p.value.data.end(), 0.0f);
  g.net.param("g_skip.w").data[0] = 1.0f;  // identity-equivalent 1x1
  Rng rng(14);
  const Tensor xt = randu(rng, {2, 1, 12, 12});
  const Tensor z = randu(rng, {2, 3, 12, 12});
  const Tensor ones = [&] {
    Tensor t({2, 1, 12, 12});
    std::fill(t.data.begin(), t.data.end(), 1.0f);
    return t;
  }();
  const auto fw = generator_forward(g, xt, z, ones);
  for (std::size_t i = 0; i < xt.numel(); ++i)
    CHECK(fw.out.data[i] == doctest::Approx(xt.data[i]).epsilon(1e-6));
  (void)d;
}

TEST_CASE("d_spatial_attention hand arithmetic") {
  Tensor tap({1, 1, 2, 2});
  tap.data = {1.0f, -2.0f, 0.0f, 3.0f};
  const Tensor map = d_spatial_attention({tap}, 2, 2);
  CHECK(map.data[0] == doctest::Approx(1.0 / 3));
  CHECK(map.data[1] == doctest::Approx(2.0 / 3));
  CHECK(map.data[2] == doctest::Approx(0.0));
  CHECK(map.data[3] == doctest::Approx(1.0));

  Tensor zero({1, 2, 3, 3});
  const Tensor zmap = d_spatial_attention({zero}, 3, 3);
  for (float v : zmap.data) CHECK(v == 0.0f);

  // two identical taps: positive scaling cancels under min-max
  const Tensor two = d_spatial_attention({tap, tap}, 2, 2);
  for (std::size_t i = 0; i < 4; ++i) CHECK(two.data[i] == doctest::Approx(map.data[i]));
}

TEST_CASE("d_spatial_attention range and multi-resolution taps") {
  Rng rng(15);
  std::vector<Tensor> taps;
  taps.push_back(randu(rng, {2, 4, 8, 8}, -2, 2));
  taps.push_back(randu(rng, {2, 3, 4, 4}, -2, 2));  // decoder-side resolution
  const Tensor map = d_spatial_attention(taps, 16, 16, nullptr);
  CHECK(map.shape == std::vector<int>{2, 1, 16, 16});
  for (float v : map.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  for (const auto& m : to_maps(map)) m.validate();
}

TEST_CASE("psa uniform input, bounds and hotspot preservation") {
  PsaParams params;
  Tensor uni({1, 1, 4, 4});
  std::fill(uni.data.begin(), uni.data.end(), 0.37f);
  const Tensor out = psa(uni, params);
  for (float v : out.data) CHECK(v == out.data[0]);  // uniform stays uniform

  Rng rng(16);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor m = randu(rng, {1, 1, 5, 5});
    const Tensor o = psa(m, params);
    for (float v : o.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }

  Tensor hot({1, 1, 4, 4});
  std::fill(hot.data.begin(), hot.data.end(), 0.1f);
  hot.data[9] = 0.9f;  // dominant hotspot
  const Tensor ho = psa(hot, params);
  std::size_t argmax = 0;
  for (std::size_t i = 1; i < ho.numel(); ++i)
    if (ho.data[i] > ho.data[argmax]) argmax = i;
  CHECK(argmax == 9);
}

TEST_CASE("generator conditioning identities") {
  auto [g, d] = build_siran(tiny_cfg(), 17);
  Rng rng(18);
  const Tensor xt = randu(rng, {1, 1, 12, 12});
  const Tensor z1 = randu(rng, {1, 3, 12, 12});
  const Tensor z2 = randu(rng, {1, 3, 12, 12});
  Tensor ones({1, 1, 12, 12}), zeros({1, 1, 12, 12});
  std::fill(ones.data.begin(), ones.data.end(), 1.0f);

  // all-ones map: identical to the unconditioned prior pass
  const auto a = generator_forward(g, xt, z1, ones);
  nn::ActsT<float> in;
  in["xt"] = xt;
  in["prior"] = z1;
  const auto direct = nn::forward(g.net, in);
  for (std::size_t i = 0; i < a.out.numel(); ++i)
    CHECK(a.out.data[i] == direct.at("out").data[i]);

  // all-zeros map: output depends only on the xt path
  const auto b1 = generator_forward(g, xt, z1, zeros);
  const auto b2 = generator_forward(g, xt, z2, zeros);
  for (std::size_t i = 0; i < b1.out.numel(); ++i)
    CHECK(b1.out.data[i] == b2.out.data[i]);

  // determinism: fixed seed + fixed inputs -> bit-identical outputs
  const auto c1 = generator_forward(g, xt, z1, ones);
  const auto c2 = generator_forward(g, xt, z1, ones);
  CHECK(fnv1a64(c1.out.data.data(), c1.out.data.size() * 4) ==
        fnv1a64(c2.out.data.data(), c2.out.data.size() * 4));
  (void)d;
}

TEST_CASE("attention map range invariant through the model path") {
  auto [g, d] = build_siran(tiny_cfg(), 19);
  Rng rng(20);
  const Tensor xt = randu(rng, {2, 1, 16, 16});
  const Tensor raw = attention_for(d, xt, false);
  const Tensor refined = attention_for(d, xt, true);
  for (float v : raw.data) CHECK((v >= 0.0f && v <= 1.0f));
  for (float v : refined.data) CHECK((v >= 0.0f && v <= 1.0f));
  (void)g;
}

TEST_CASE("train_step supervised-only descent on a tiny fixture") {
  auto [g, d] = build_siran(tiny_cfg(), 21);
  nn::AdamStateT<float> g_opt, d_opt;
  g_opt.init_like(g.net.params, 1e-3);
  d_opt.init_like(d.net.params, 1e-3);

  TrainStepOptions opt;
  opt.weights.lambda_P = 1.0;
  opt.weights.lambda_str = 0.0;
  opt.weights.lambda_ADV = 0.0;
  opt.weights.lambda_OT = 0.0;
  opt.weights.lambda_DA = 0.0;
  opt.sink.epsilon = 0.1;
  opt.sink.max_iters = 10;

  Rng rng(22);
  const Tensor y = randu(rng, {2, 1, 16, 16});
  Tensor xt = y;
  for (auto& v : xt.data) v = std::min(1.0f, std::max(0.0f, v + static_cast<float>(rng.normal() * 0.1)));
  const Tensor z = randu(rng, {2, 3, 16, 16});

  double first = 0, last = 0;
  for (int step = 0; step < 50; ++step) {
    const auto res = train_step(g, d, g_opt, d_opt, xt, z, y, opt);
    if (step == 0) first = res.metrics.loss_p;
    last = res.metrics.loss_p;
  }
  CHECK(last < first);
  CHECK(last < 0.5 * first);  // fixture is small enough to fit quickly
}

TEST_CASE("train_step updates D before the generator gradient computation") {
  auto [g, d] = build_siran(tiny_cfg(), 23);
  nn::AdamStateT<float> g_opt, d_opt;
  g_opt.init_like(g.net.params, 1e-4);
  d_opt.init_like(d.net.params, 1e-4);
  TrainStepOptions opt;  // default weights keep every term active
  opt.sink.epsilon = 0.1;
  opt.sink.max_iters = 10;

  Rng rng(24);
  const Tensor xt = randu(rng, {2, 1, 16, 16});
  const Tensor z = randu(rng, {2, 3, 16, 16});
  const Tensor y = randu(rng, {2, 1, 16, 16});
  const auto res = train_step(g, d, g_opt, d_opt, xt, z, y, opt);
  CHECK(res.d_hash_before != res.d_hash_at_g_update);      // D moved first
  CHECK(res.d_hash_at_g_update == res.d_hash_after);       // G update left D alone
  CHECK(res.d_hash_after == d.net.param_hash());

  // all default weights: every loss component lands finite in the record
  CHECK(std::isfinite(res.metrics.loss_p));
  CHECK(std::isfinite(res.metrics.loss_str));
  CHECK(std::isfinite(res.metrics.loss_adv));
  CHECK(std::isfinite(res.metrics.loss_ot));
  CHECK(std::isfinite(res.metrics.loss_da));
  CHECK(std::isfinite(res.metrics.grad_specnorm_first));
  CHECK(std::isfinite(res.metrics.grad_specnorm_hidden));
}

TEST_CASE("train_step determinism under fixed seeds") {
  auto run = [] {
    auto [g, d] = build_siran(tiny_cfg(), 25);
    nn::AdamStateT<float> g_opt, d_opt;
    g_opt.init_like(g.net.params, 1e-4);
    d_opt.init_like(d.net.params, 1e-4);
    TrainStepOptions opt;
    opt.sink.epsilon = 0.1;
    opt.sink.max_iters = 10;
    Rng rng(26);
    Tensor xt({1, 1, 16, 16}), z({1, 3, 16, 16}), y({1, 1, 16, 16});
    for (auto& v : xt.data) v = static_cast<float>(rng.uniform());
    for (auto& v : z.data) v = static_cast<float>(rng.uniform());
    for (auto& v : y.data) v = static_cast<float>(rng.uniform());
    for (int i = 0; i < 3; ++i) train_step(g, d, g_opt, d_opt, xt, z, y, opt);
    return std::pair(g.net.param_hash(), d.net.param_hash());
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("prior head receives gradient for non-degenerate attention") {
  auto [g, d] = build_siran(tiny_cfg(), 27);
  Rng rng(28);
  const Tensor xt = randu(rng, {1, 1, 16, 16});
  const Tensor z = randu(rng, {1, 3, 16, 16});
  const Tensor y = randu(rng, {1, 1, 16, 16});
  const Tensor a_s = attention_for(d, xt, true);
  const auto fw = generator_forward(g, xt, z, a_s);
  const auto pix = losses::pixel_loss(fw.out, y);
  const auto grads = nn::backward(g.net, fw.acts, g.output, pix.grad);
  const int idx = g.net.param_index("g_head_z.w");
  double norm = 0.0;
  for (float v : grads.param_grads[static_cast<std::size_t>(idx)].value.data)
    norm += static_cast<double>(v) * v;
  CHECK(std::sqrt(norm) > 0.0);
}

TEST_CASE("no batch normalization node in either network") {
  auto [g, d] = build_siran(tiny_cfg(), 29);
  for (const nn::Network* net : {&g.net, &d.net})
    for (const auto& node : net->nodes) {
      const std::string kind = nn::layer_kind_name(node.kind);
      CHECK(kind.find("batch") == std::string::npos);
      CHECK(kind.find("norm") == std::string::npos);
    }
}

TEST_CASE("invalid configs are rejected") {
  SiranConfig cfg = tiny_cfg();
  cfg.base_channels = 7;
  CHECK_THROWS_AS(build_siran(cfg, 1), ConfigError);
  cfg = tiny_cfg();
  cfg.scale_factor = 2;
  CHECK_THROWS_AS(build_siran(cfg, 1), ConfigError);
  cfg = tiny_cfg();
  cfg.n_dmrb_d = 0;
  CHECK_THROWS_AS(build_siran(cfg, 1), ConfigError);
  CHECK_THROWS_AS(d_spatial_attention({}, 4, 4), ValidationError);
}
