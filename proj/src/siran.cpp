#include "sinkdem/siran.hpp"

#include <cmath>
#include <fstream>

#include "sinkdem/rng.hpp"

namespace sinkdem::siran {

using nn::Tensor;

// ---- attention map plumbing ----

void AttentionMap::validate() const {
  if (h < 1 || w < 1 || values.size() != static_cast<std::size_t>(h) * w)
    throw ShapeError("attention map: inconsistent dimensions");
  for (float v : values)
    if (!(v >= 0.0f && v <= 1.0f))
      throw ValidationError("attention map: value outside [0,1]");
}

std::vector<AttentionMap> to_maps(const Tensor& t) {
  if (!t.is4d() || t.dim(1) != 1)
    throw ShapeError("attention: expected (N,1,H,W) tensor");
  std::vector<AttentionMap> maps(static_cast<std::size_t>(t.dim(0)));
  const std::size_t hw = static_cast<std::size_t>(t.dim(2)) * t.dim(3);
  for (int n = 0; n < t.dim(0); ++n) {
    auto& m = maps[static_cast<std::size_t>(n)];
    m.h = t.dim(2);
    m.w = t.dim(3);
    m.values.assign(t.data.begin() + static_cast<std::ptrdiff_t>(n * hw),
                    t.data.begin() + static_cast<std::ptrdiff_t>((n + 1) * hw));
  }
  return maps;
}

Tensor from_maps(const std::vector<AttentionMap>& maps) {
  if (maps.empty()) throw ValidationError("attention: empty map list");
  Tensor t({static_cast<int>(maps.size()), 1, maps[0].h, maps[0].w});
  const std::size_t hw = static_cast<std::size_t>(maps[0].h) * maps[0].w;
  for (std::size_t n = 0; n < maps.size(); ++n) {
    if (maps[n].h != maps[0].h || maps[n].w != maps[0].w)
      throw ShapeError("attention: maps disagree on size");
    std::copy(maps[n].values.begin(), maps[n].values.end(),
              t.data.begin() + static_cast<std::ptrdiff_t>(n * hw));
  }
  return t;
}

// ---- config and builders ----

void SiranConfig::validate() const {
  if (base_channels < 2 || base_channels % 2 != 0)
    throw ConfigError("siran: base_channels must be even and >= 2");
  if (n_dmrb_g < 1 || n_dmrb_d < 1 || rcb_per_dmrb < 1 || prior_channels < 1)
    throw ConfigError("siran: block counts and channels must be positive");
  if (scale_factor != 1)
    throw ConfigError(
        "siran: scale_factor must be 1; inputs arrive pre-upsampled to the target grid");
  if (!(leaky_slope > 0.0f && leaky_slope < 1.0f))
    throw ConfigError("siran: leaky_slope must lie in (0,1)");
}

namespace {

std::string add_rcb(nn::Network& net, const std::string& prefix, const std::string& in,
                    int ch, float slope) {
  net.conv3x3(prefix + ".c1", in, ch, ch);
  net.leaky_relu(prefix + ".a", prefix + ".c1", slope);
  net.conv3x3(prefix + ".c2", prefix + ".a", ch, ch);
  net.add(prefix + ".sum", {in, prefix + ".c2"});
  return prefix + ".sum";
}

std::string add_dmrb(nn::Network& net, const std::string& prefix, const std::string& in,
                     int ch, int n_rcb, float slope) {
  std::vector<std::string> rcb_outs;
  std::string cur = in;
  for (int r = 1; r <= n_rcb; ++r) {
    cur = add_rcb(net, prefix + ".rcb" + std::to_string(r), cur, ch, slope);
    rcb_outs.push_back(cur);
  }
  net.concat(prefix + ".cat", rcb_outs);
  net.conv1x1(prefix + ".fuse", prefix + ".cat", ch * n_rcb, ch);
  net.add(prefix + ".sum", {in, prefix + ".fuse"});
  return prefix + ".sum";
}

}  // namespace

std::pair<GeneratorModel, DiscriminatorModel> build_siran(const SiranConfig& cfg,
                                                          std::uint64_t seed) {
  cfg.validate();
  const int c = cfg.base_channels;
  const float s = cfg.leaky_slope;

  GeneratorModel g;
  g.net.add_input("xt");
  g.net.add_input("prior");
  g.net.conv3x3("g_head_x", "xt", 1, c / 2);
  g.net.leaky_relu("g_head_x.a", "g_head_x", s);
  g.net.conv3x3("g_head_z", "prior", cfg.prior_channels, c / 2);
  g.net.leaky_relu("g_head_z.a", "g_head_z", s);
  g.net.concat("g_cat", {"g_head_x.a", "g_head_z.a"});
  std::string cur = "g_cat";
  for (int i = 1; i <= cfg.n_dmrb_g; ++i)
    cur = add_dmrb(g.net, "g_dmrb" + std::to_string(i), cur, c, cfg.rcb_per_dmrb, s);
  g.net.conv3x3("g_tail", cur, c, 1);
  g.net.conv1x1("g_skip", "xt", 1, 1);  // global skip, no activation
  g.net.add("out", {"g_tail", "g_skip"});
  g.net.init(seed);
  g.probe_first = "g_head_x.w";
  g.probe_hidden =
      "g_dmrb" + std::to_string((cfg.n_dmrb_g + 1) / 2 + 1) + ".rcb1.c1.w";
  if (g.net.param_index(g.probe_hidden) < 0) g.probe_hidden = "g_tail.w";

  DiscriminatorModel d;
  d.net.add_input("img");
  d.net.conv3x3("d_enc1", "img", 1, c, 2);
  d.net.leaky_relu("d_enc1.a", "d_enc1", s);
  d.net.conv3x3("d_enc2", "d_enc1.a", c, c, 2);
  d.net.leaky_relu("d_enc2.a", "d_enc2", s);
  cur = "d_enc2.a";
  for (int i = 1; i <= cfg.n_dmrb_d; ++i) {
    cur = add_dmrb(d.net, "d_dmrb" + std::to_string(i), cur, c, cfg.rcb_per_dmrb, s);
    d.taps.push_back(cur);
  }
  d.net.conv3x3("d_dec", cur, c, c);
  d.net.leaky_relu("d_dec.a", "d_dec", s);
  d.net.global_avg_pool("d_pool", "d_dec.a");
  d.net.dense("d_mlp1", "d_pool", c, c / 2);
  d.net.leaky_relu("d_mlp1.a", "d_mlp1", s);
  d.net.dense("logit", "d_mlp1.a", c / 2, 1);
  d.net.init(seed ^ 0xd15cULL);
  d.probe_first = "d_enc1.w";
  d.probe_hidden = "d_dmrb" + std::to_string((cfg.n_dmrb_d + 1) / 2) + ".rcb1.c1.w";
  d.psa = PsaParams{};
  return {std::move(g), std::move(d)};
}

// ---- discriminator spatial attention ----

Tensor d_spatial_attention(const std::vector<Tensor>& taps, int out_h, int out_w,
                           DsaCache* cache) {
  if (taps.empty()) throw ValidationError("d_spatial_attention: no taps");
  const int N = taps[0].dim(0);
  Tensor summed({N, 1, out_h, out_w});
  if (cache) {
    cache->taps = taps;
    cache->channel_abs_sums.clear();
  }
  for (const auto& tap : taps) {
    if (!tap.is4d() || tap.dim(0) != N)
      throw ShapeError("d_spatial_attention: taps disagree on batch size");
    Tensor abs_sum({N, 1, tap.dim(2), tap.dim(3)});
    for (int n = 0; n < N; ++n)
      for (int ch = 0; ch < tap.dim(1); ++ch)
        for (int y = 0; y < tap.dim(2); ++y)
          for (int x = 0; x < tap.dim(3); ++x)
            abs_sum.at4(n, 0, y, x) += std::abs(tap.at4(n, ch, y, x));
    Tensor resized = (tap.dim(2) == out_h && tap.dim(3) == out_w)
                         ? abs_sum
                         : nn::bilinear_resize(abs_sum, out_h, out_w);
    for (std::size_t i = 0; i < summed.numel(); ++i) summed.data[i] += resized.data[i];
    if (cache) cache->channel_abs_sums.push_back(std::move(abs_sum));
  }

  Tensor out({N, 1, out_h, out_w});
  std::vector<float> mins(static_cast<std::size_t>(N)), maxs(static_cast<std::size_t>(N));
  const std::size_t hw = static_cast<std::size_t>(out_h) * out_w;
  for (int n = 0; n < N; ++n) {
    float lo = summed.data[n * hw], hi = lo;
    for (std::size_t i = 0; i < hw; ++i) {
      const float v = summed.data[n * hw + i];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    mins[static_cast<std::size_t>(n)] = lo;
    maxs[static_cast<std::size_t>(n)] = hi;
    if (hi > lo) {
      const float inv = 1.0f / (hi - lo);
      for (std::size_t i = 0; i < hw; ++i)
        out.data[n * hw + i] = (summed.data[n * hw + i] - lo) * inv;
    }
    // constant map: stays all-zero (degenerate normalization rule)
  }
  if (cache) {
    cache->summed = std::move(summed);
    cache->mins = std::move(mins);
    cache->maxs = std::move(maxs);
  }
  return out;
}

std::vector<Tensor> d_spatial_attention_backward(const DsaCache& cache,
                                                 const Tensor& dmap) {
  const int N = dmap.dim(0), H = dmap.dim(2), W = dmap.dim(3);
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  Tensor dsummed({N, 1, H, W});
  for (int n = 0; n < N; ++n) {
    const float range = cache.maxs[static_cast<std::size_t>(n)] -
                        cache.mins[static_cast<std::size_t>(n)];
    if (range <= 0.0f) continue;  // degenerate map carried no signal
    const float inv = 1.0f / range;
    for (std::size_t i = 0; i < hw; ++i)
      dsummed.data[n * hw + i] = dmap.data[n * hw + i] * inv;
  }

  std::vector<Tensor> tap_grads;
  tap_grads.reserve(cache.taps.size());
  for (std::size_t t = 0; t < cache.taps.size(); ++t) {
    const Tensor& tap = cache.taps[t];
    const Tensor& abs_sum = cache.channel_abs_sums[t];
    Tensor dabs = abs_sum.zeros_like();
    if (tap.dim(2) == H && tap.dim(3) == W) {
      dabs = dsummed;
    } else {
      nn::bilinear_resize_backward(abs_sum, dsummed, dabs);
    }
    Tensor dtap = tap.zeros_like();
    for (int n = 0; n < tap.dim(0); ++n)
      for (int ch = 0; ch < tap.dim(1); ++ch)
        for (int y = 0; y < tap.dim(2); ++y)
          for (int x = 0; x < tap.dim(3); ++x) {
            const float v = tap.at4(n, ch, y, x);
            const float sgn = v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f);
            dtap.at4(n, ch, y, x) = sgn * dabs.at4(n, 0, y, x);
          }
    tap_grads.push_back(std::move(dtap));
  }
  return tap_grads;
}

// ---- PSA ----

namespace {

float sigmoidf(float x) {
  return x >= 0.0f ? 1.0f / (1.0f + std::exp(-x)) : std::exp(x) / (1.0f + std::exp(x));
}

}  // namespace

Tensor psa(const Tensor& map, const PsaParams& params, PsaCache* cache) {
  if (!map.is4d() || map.dim(1) != 1)
    throw ShapeError("psa: expected (N,1,H,W) attention map");
  const int N = map.dim(0), H = map.dim(2), W = map.dim(3);
  const std::size_t hw = static_cast<std::size_t>(H) * W;

  // spatial branch: softmax over all H*W positions of the conv1x1 response
  Tensor soft({N, 1, H, W});
  for (int n = 0; n < N; ++n) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < hw; ++i)
      mx = std::max(mx, static_cast<double>(params.w * map.data[n * hw + i] + params.b));
    double sum = 0.0;
    for (std::size_t i = 0; i < hw; ++i) {
      const double r = params.w * map.data[n * hw + i] + params.b;
      const double e = std::exp(r - mx);
      soft.data[n * hw + i] = static_cast<float>(e);
      sum += e;
    }
    for (std::size_t i = 0; i < hw; ++i)
      soft.data[n * hw + i] = static_cast<float>(soft.data[n * hw + i] / sum);
  }

  // channel branch degenerates to a scalar gate on the single-channel map
  const float gate = sigmoidf(params.gate);
  Tensor out({N, 1, H, W});
  std::vector<float> mins(static_cast<std::size_t>(N)), maxs(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n) {
    float lo = std::numeric_limits<float>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < hw; ++i) {
      const float v = gate * soft.data[n * hw + i] * static_cast<float>(hw);
      out.data[n * hw + i] = v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    mins[static_cast<std::size_t>(n)] = lo;
    maxs[static_cast<std::size_t>(n)] = hi;
    if (hi > lo) {
      const float inv = 1.0f / (hi - lo);
      for (std::size_t i = 0; i < hw; ++i)
        out.data[n * hw + i] = (out.data[n * hw + i] - lo) * inv;
    } else {
      for (std::size_t i = 0; i < hw; ++i) out.data[n * hw + i] = 0.0f;
    }
  }
  if (cache) {
    cache->input = map;
    cache->softmaxed = soft;
    cache->mins = std::move(mins);
    cache->maxs = std::move(maxs);
    cache->gate_sig = gate;
  }
  return out;
}

PsaGrads psa_backward(const PsaCache& cache, const PsaParams& params, const Tensor& dout) {
  const Tensor& map = cache.input;
  const int N = map.dim(0), H = map.dim(2), W = map.dim(3);
  const std::size_t hw = static_cast<std::size_t>(H) * W;
  PsaGrads g;
  g.dmap = map.zeros_like();
  const float gate = cache.gate_sig;
  for (int n = 0; n < N; ++n) {
    const float range = cache.maxs[static_cast<std::size_t>(n)] -
                        cache.mins[static_cast<std::size_t>(n)];
    if (range <= 0.0f) continue;
    const float inv = 1.0f / range;
    // through the detached min-max and the gate * softmax * H*W scaling
    double dot = 0.0;
    std::vector<double> dsoft(hw);
    for (std::size_t i = 0; i < hw; ++i) {
      const double dpre = static_cast<double>(dout.data[n * hw + i]) * inv *
                          static_cast<double>(hw);
      dsoft[i] = dpre * gate;
      g.dgate += static_cast<float>(dpre * cache.softmaxed.data[n * hw + i] * gate *
                                    (1.0 - gate));
    }
    for (std::size_t i = 0; i < hw; ++i)
      dot += dsoft[i] * cache.softmaxed.data[n * hw + i];
    for (std::size_t i = 0; i < hw; ++i) {
      const double dr = cache.softmaxed.data[n * hw + i] * (dsoft[i] - dot);
      g.dmap.data[n * hw + i] = static_cast<float>(dr * params.w);
      g.dw += static_cast<float>(dr * map.data[n * hw + i]);
      g.db += static_cast<float>(dr);
    }
  }
  return g;
}

// ---- generator conditioning and training ----

Tensor condition_prior(const Tensor& z, const Tensor& a_s) {
  if (!z.is4d() || !a_s.is4d() || a_s.dim(1) != 1)
    throw ShapeError("condition_prior: need (N,C,H,W) prior and (N,1,H,W) map");
  if (z.dim(0) != a_s.dim(0) || z.dim(2) != a_s.dim(2) || z.dim(3) != a_s.dim(3))
    throw ShapeError("condition_prior: attention map must match the prior's spatial shape");
  Tensor out = z;
  for (int n = 0; n < z.dim(0); ++n)
    for (int c = 0; c < z.dim(1); ++c)
      for (int y = 0; y < z.dim(2); ++y)
        for (int x = 0; x < z.dim(3); ++x) out.at4(n, c, y, x) *= a_s.at4(n, 0, y, x);
  return out;
}

GeneratorForward generator_forward(const GeneratorModel& g, const Tensor& xt,
                                   const Tensor& z, const Tensor& a_s) {
  GeneratorForward fw;
  nn::ActsT<float> in;
  in["xt"] = xt;
  in["prior"] = condition_prior(z, a_s);
  fw.acts = nn::forward(g.net, in);
  fw.out = fw.acts.at(g.output);
  return fw;
}

namespace {

struct AttentionForward {
  nn::ActsT<float> acts;
  DsaCache dsa;
  PsaCache psa_cache;
  Tensor raw_map;  // D_SA output before the PSA block (Eq.-3 operand)
  Tensor map;      // A_s actually fed to the generator
};

AttentionForward attention_fwd(const DiscriminatorModel& d, const Tensor& xt,
                               bool use_psa) {
  AttentionForward a;
  a.acts = nn::forward(d.net, {{"img", xt}});
  std::vector<Tensor> taps;
  for (const auto& t : d.taps) taps.push_back(a.acts.at(t));
  a.raw_map = d_spatial_attention(taps, xt.dim(2), xt.dim(3), &a.dsa);
  a.map = use_psa ? psa(a.raw_map, d.psa, &a.psa_cache) : a.raw_map;
  return a;
}

void accumulate_grads(std::vector<nn::NamedParamT<float>>& into,
                      const std::vector<nn::NamedParamT<float>>& from) {
  for (std::size_t i = 0; i < into.size(); ++i)
    for (std::size_t k = 0; k < into[i].value.data.size(); ++k)
      into[i].value.data[k] += from[i].value.data[k];
}

void require_finite(double v, const char* term) {
  if (!std::isfinite(v))
    throw NumericError(std::string("train_step: non-finite ") + term);
}

Tensor ones_like_map(const Tensor& xt) {
  Tensor t({xt.dim(0), 1, xt.dim(2), xt.dim(3)});
  std::fill(t.data.begin(), t.data.end(), 1.0f);
  return t;
}

}  // namespace

Tensor attention_for(const DiscriminatorModel& d, const Tensor& xt, bool use_psa) {
  return attention_fwd(d, xt, use_psa).map;
}

TrainStepResult train_step(GeneratorModel& g, DiscriminatorModel& d,
                           nn::AdamStateT<float>& g_opt, nn::AdamStateT<float>& d_opt,
                           const Tensor& xt, const Tensor& z, const Tensor& y,
                           const TrainStepOptions& opt) {
  opt.weights.validate();
  if (!xt.same_shape(y)) throw ShapeError("train_step: xt and y must share shape");
  if (z.dim(0) != xt.dim(0) || z.dim(2) != xt.dim(2) || z.dim(3) != xt.dim(3))
    throw ShapeError("train_step: prior spatial shape must match xt");

  TrainStepResult res;
  res.d_hash_before = d.net.param_hash();

  // ---- discriminator update ----
  AttentionForward att_xt;
  Tensor a_s;
  if (opt.use_attention) {
    att_xt = attention_fwd(d, xt, opt.use_psa);
    a_s = att_xt.map;
  } else {
    a_s = ones_like_map(xt);
  }
  const Tensor fake0 = generator_forward(g, xt, z, a_s).out;

  auto acts_real = nn::forward(d.net, {{"img", y}});
  auto acts_fake = nn::forward(d.net, {{"img", fake0}});
  const auto adv = losses::adv_d_loss(acts_real.at(d.logit), acts_fake.at(d.logit));
  require_finite(adv.value, "adversarial discriminator loss");

  std::vector<nn::NamedParamT<float>> d_grads;
  for (const auto& p : d.net.params) d_grads.push_back({p.name, p.value.zeros_like()});
  accumulate_grads(d_grads, nn::backward(d.net, acts_real, d.logit, adv.grad_real).param_grads);
  accumulate_grads(d_grads, nn::backward(d.net, acts_fake, d.logit, adv.grad_fake).param_grads);

  double da_value = 0.0;
  if (opt.weights.lambda_DA > 0.0) {
    if (!opt.use_attention) att_xt = attention_fwd(d, xt, /*use_psa=*/false);
    std::vector<Tensor> taps_real;
    for (const auto& t : d.taps) taps_real.push_back(acts_real.at(t));
    const Tensor map_real = d_spatial_attention(taps_real, xt.dim(2), xt.dim(3));
    auto da = losses::da_loss(att_xt.raw_map, map_real);  // Eq.-3 operands: raw D_SA maps
    require_finite(da.value, "domain adaptation loss");
    da_value = da.value;
    Tensor dmap = da.grad;
    for (auto& v : dmap.data) v *= static_cast<float>(opt.weights.lambda_DA);
    const auto tap_grads = d_spatial_attention_backward(att_xt.dsa, dmap);
    nn::ActsT<float> seeds;
    for (std::size_t t = 0; t < d.taps.size(); ++t) seeds[d.taps[t]] = tap_grads[t];
    accumulate_grads(d_grads, nn::backward(d.net, att_xt.acts, seeds).param_grads);
  }

  nn::adam_step(d.net.params, d_grads, d_opt);
  res.d_hash_at_g_update = d.net.param_hash();

  // ---- generator update, attention recomputed from the updated D ----
  AttentionForward att2;
  if (opt.use_attention) {
    att2 = attention_fwd(d, xt, opt.use_psa);
    a_s = att2.map;
  } else {
    a_s = ones_like_map(xt);
  }
  auto gen = generator_forward(g, xt, z, a_s);

  const auto pix = losses::pixel_loss(gen.out, y);
  require_finite(pix.value, "pixel loss");

  losses::LossValueT<float> str;
  str.grad = gen.out.zeros_like();
  if (opt.weights.lambda_str > 0.0) {
    str = losses::ssim_loss(gen.out, y, opt.ssim);
    require_finite(str.value, "structural similarity loss");
  }

  auto acts_d2 = nn::forward(d.net, {{"img", gen.out}});
  const auto advg = losses::adv_g_loss(acts_d2.at(d.logit));
  require_finite(advg.value, "adversarial generator loss");
  losses::LossValueT<float> adv_on_pred;
  adv_on_pred.value = advg.value;
  adv_on_pred.grad =
      nn::backward(d.net, acts_d2, d.logit, advg.grad).input_grads.at("img");

  losses::LossValueT<float> otl;
  otl.grad = gen.out.zeros_like();
  if (opt.weights.lambda_OT > 0.0) {
    otl = losses::sinkhorn_batch_loss(gen.out, y, opt.sink);
    require_finite(otl.value, "sinkhorn loss");
  }

  const auto total = losses::generator_total(pix, str, adv_on_pred, otl, opt.weights);
  require_finite(total.value, "total generator loss");

  auto g_grads = nn::backward(g.net, gen.acts, g.output, total.grad);

  const int fi = g.net.param_index(g.probe_first);
  const int hi = g.net.param_index(g.probe_hidden);
  res.metrics.grad_specnorm_first = nn::spectral_norm(
      nn::matrixize(g_grads.param_grads[static_cast<std::size_t>(fi)].value),
      opt.probe_iters, 0x9e37);
  res.metrics.grad_specnorm_hidden = nn::spectral_norm(
      nn::matrixize(g_grads.param_grads[static_cast<std::size_t>(hi)].value),
      opt.probe_iters, 0x9e37);

  nn::adam_step(g.net.params, g_grads.param_grads, g_opt);

  if (!opt.detach_attention && opt.use_attention) {
    // studied alternative: let the generator's update flow through A_s into
    // the PSA scalars and the discriminator
    Tensor dcond = g_grads.input_grads.at("prior");
    Tensor da_s({xt.dim(0), 1, xt.dim(2), xt.dim(3)});
    for (int n = 0; n < z.dim(0); ++n)
      for (int c = 0; c < z.dim(1); ++c)
        for (int yy = 0; yy < z.dim(2); ++yy)
          for (int xx = 0; xx < z.dim(3); ++xx)
            da_s.at4(n, 0, yy, xx) += dcond.at4(n, c, yy, xx) * z.at4(n, c, yy, xx);
    Tensor dmap = da_s;
    if (opt.use_psa) {
      const auto pg = psa_backward(att2.psa_cache, d.psa, da_s);
      dmap = pg.dmap;
      d.psa.w -= static_cast<float>(d_opt.lr) * pg.dw;
      d.psa.b -= static_cast<float>(d_opt.lr) * pg.db;
      d.psa.gate -= static_cast<float>(d_opt.lr) * pg.dgate;
    }
    const auto tap_grads = d_spatial_attention_backward(att2.dsa, dmap);
    nn::ActsT<float> seeds;
    for (std::size_t t = 0; t < d.taps.size(); ++t) seeds[d.taps[t]] = tap_grads[t];
    auto dd = nn::backward(d.net, att2.acts, seeds);
    nn::adam_step(d.net.params, dd.param_grads, d_opt);
  }

  res.d_hash_after = d.net.param_hash();
  res.metrics.loss_p = pix.value;
  res.metrics.loss_str = str.value;
  res.metrics.loss_adv = advg.value;
  res.metrics.loss_ot = otl.value;
  res.metrics.loss_da = da_value;
  return res;
}

void write_model_manifest(const std::string& path, const SiranConfig& cfg,
                          std::uint64_t seed) {
  std::ofstream f(path);
  if (!f) throw IoError("manifest: cannot open for write: " + path);
  f << "base_channels=" << cfg.base_channels << "\n"
    << "n_dmrb_g=" << cfg.n_dmrb_g << "\n"
    << "n_dmrb_d=" << cfg.n_dmrb_d << "\n"
    << "rcb_per_dmrb=" << cfg.rcb_per_dmrb << "\n"
    << "scale_factor=" << cfg.scale_factor << "\n"
    << "leaky_slope=" << cfg.leaky_slope << "\n"
    << "prior_channels=" << cfg.prior_channels << "\n"
    << "seed=" << seed << "\n";
}

}  // namespace sinkdem::siran
