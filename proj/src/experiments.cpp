#include "sinkdem/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <numeric>

#include "sinkdem/checkpoint.hpp"
#include "sinkdem/data.hpp"
#include "sinkdem/rng.hpp"
#include "sinkdem/siran.hpp"

namespace sinkdem::experiments {

namespace fs = std::filesystem;
using nn::Network;
using nn::Tensor;

namespace {

// ---- denoising models (simple autoencoder + fully connected critic) ----

struct DenoiseModels {
  Network g, d;
  std::string g_out = "d2";
  std::string logit = "logit";
  std::string probe_first = "e1.w";
  std::string probe_hidden = "d1.w";
};

DenoiseModels build_denoise_models(std::uint64_t seed) {
  DenoiseModels m;
  m.g.add_input("x");
  m.g.conv3x3("e1", "x", 1, 8, 2);
  m.g.leaky_relu("e1.a", "e1", 0.2f);
  m.g.conv3x3("e2", "e1.a", 8, 16, 2);
  m.g.leaky_relu("e2.a", "e2", 0.2f);
  m.g.upsample_bilinear("u1", "e2.a", 2);
  m.g.conv3x3("d1", "u1", 16, 8);
  m.g.leaky_relu("d1.a", "d1", 0.2f);
  m.g.upsample_bilinear("u2", "d1.a", 2);
  m.g.conv3x3("d2", "u2", 8, 1);
  m.g.init(seed);

  // three dense layers, ReLU everywhere but the output
  m.d.add_input("x");
  m.d.dense("f1", "x", 28 * 28, 1024);
  m.d.relu("f1.a", "f1");
  m.d.dense("f2", "f1.a", 1024, 256);
  m.d.relu("f2.a", "f2");
  m.d.dense("logit", "f2.a", 256, 1);
  m.d.init(seed ^ 0xdc01ULL);
  return m;
}

ot::SinkhornConfig sink_config(const ExperimentConfig& cfg) {
  ot::SinkhornConfig s;
  s.epsilon = cfg.epsilon;
  s.max_iters = cfg.sinkhorn_iters;
  s.marginal_tol = cfg.marginal_tol;
  s.p = 2.0;
  return s;
}

Tensor gather_images(const std::vector<float>& pool, int rows, int cols,
                     const std::vector<int>& idx, int from, int count) {
  Tensor t({count, 1, rows, cols});
  const std::size_t px = static_cast<std::size_t>(rows) * cols;
  for (int i = 0; i < count; ++i)
    std::copy_n(pool.data() + static_cast<std::size_t>(idx[static_cast<std::size_t>(from + i)]) * px,
                px, t.data.data() + static_cast<std::size_t>(i) * px);
  return t;
}

Tensor add_noise(const Tensor& clean, double sigma, Rng& rng) {
  Tensor noisy = clean;
  for (auto& v : noisy.data)
    v = std::min(1.0f, std::max(0.0f, v + static_cast<float>(rng.normal() * sigma)));
  return noisy;
}

void accumulate(std::vector<nn::NamedParamT<float>>& into,
                const std::vector<nn::NamedParamT<float>>& from, float scale = 1.0f) {
  for (std::size_t i = 0; i < into.size(); ++i)
    for (std::size_t k = 0; k < into[i].value.data.size(); ++k)
      into[i].value.data[k] += scale * from[i].value.data[k];
}

std::vector<nn::NamedParamT<float>> zero_grads(const Network& net) {
  std::vector<nn::NamedParamT<float>> g;
  g.reserve(net.params.size());
  for (const auto& p : net.params) g.push_back({p.name, p.value.zeros_like()});
  return g;
}

void clip_params(Network& net, float c) {
  for (auto& p : net.params)
    for (auto& v : p.value.data) v = std::min(c, std::max(-c, v));
}

struct StepStats {
  double loss_p = 0, loss_adv = 0, loss_ot = 0;
  double g_first = 0, g_hidden = 0;
};

StepStats denoise_step(DenoiseModels& m, nn::AdamStateT<float>& g_opt,
                       nn::AdamStateT<float>& d_opt, const Tensor& noisy,
                       const Tensor& clean, const ExperimentConfig& cfg,
                       std::uint64_t step_seed) {
  StepStats st;
  const bool wasserstein = cfg.method == Method::kWgan || cfg.method == Method::kWganGp;
  const int nb = clean.dim(0);

  // ---- critic update ----
  const Tensor fake = nn::forward(m.g, {{"x", noisy}}).at(m.g_out);
  auto acts_real = nn::forward(m.d, {{"x", clean}});
  auto acts_fake = nn::forward(m.d, {{"x", fake}});
  auto d_grads = zero_grads(m.d);
  if (wasserstein) {
    // critic maximizes E[D(real)] - E[D(fake)]
    Tensor gr({nb, 1}), gf({nb, 1});
    std::fill(gr.data.begin(), gr.data.end(), -1.0f / nb);
    std::fill(gf.data.begin(), gf.data.end(), 1.0f / nb);
    accumulate(d_grads, nn::backward(m.d, acts_real, m.logit, gr).param_grads);
    accumulate(d_grads, nn::backward(m.d, acts_fake, m.logit, gf).param_grads);
    if (cfg.method == Method::kWganGp) {
      const auto gp = wgan_gp_penalty(m.d, clean, fake, cfg.gp_lambda, step_seed);
      accumulate(d_grads, gp.param_grads);
    }
  } else {
    const auto adv = losses::adv_d_loss(acts_real.at(m.logit), acts_fake.at(m.logit));
    if (!std::isfinite(adv.value))
      throw NumericError("denoise: non-finite discriminator loss");
    accumulate(d_grads, nn::backward(m.d, acts_real, m.logit, adv.grad_real).param_grads);
    accumulate(d_grads, nn::backward(m.d, acts_fake, m.logit, adv.grad_fake).param_grads);
  }
  nn::adam_step(m.d.params, d_grads, d_opt);
  if (cfg.method == Method::kWgan) clip_params(m.d, static_cast<float>(cfg.clip_c));

  // ---- generator update ----
  auto acts_g = nn::forward(m.g, {{"x", noisy}});
  const Tensor& out = acts_g.at(m.g_out);
  const auto pix = losses::pixel_loss(out, clean);
  if (!std::isfinite(pix.value)) throw NumericError("denoise: non-finite pixel loss");

  losses::LossValueT<float> adv_on_pred;
  adv_on_pred.grad = out.zeros_like();
  if (cfg.weights.lambda_ADV > 0.0) {
    auto acts_d2 = nn::forward(m.d, {{"x", out}});
    if (wasserstein) {
      double v = 0.0;
      const Tensor& lg = acts_d2.at(m.logit);
      for (float l : lg.data) v -= static_cast<double>(l) / nb;
      adv_on_pred.value = v;
      Tensor gl({nb, 1});
      std::fill(gl.data.begin(), gl.data.end(), -1.0f / nb);
      adv_on_pred.grad = nn::backward(m.d, acts_d2, m.logit, gl).input_grads.at("x");
    } else {
      const auto advg = losses::adv_g_loss(acts_d2.at(m.logit));
      adv_on_pred.value = advg.value;
      adv_on_pred.grad =
          nn::backward(m.d, acts_d2, m.logit, advg.grad).input_grads.at("x");
    }
    if (!std::isfinite(adv_on_pred.value))
      throw NumericError("denoise: non-finite adversarial loss");
  }

  // the OT regularizer is what distinguishes sinkhorn_gan from the baselines
  const bool use_ot =
      cfg.method == Method::kSinkhornGan && cfg.weights.lambda_OT > 0.0;
  losses::LossValueT<float> otl;
  otl.grad = out.zeros_like();
  if (use_ot) {
    otl = cfg.sinkhorn_per_pixel
              ? losses::sinkhorn_pixel_loss(out, clean, sink_config(cfg))
              : losses::sinkhorn_batch_loss(out, clean, sink_config(cfg));
    if (!std::isfinite(otl.value)) throw NumericError("denoise: non-finite sinkhorn loss");
  }

  losses::LossValueT<float> strz;
  strz.grad = out.zeros_like();
  losses::LossWeights w = cfg.weights;
  w.lambda_str = 0.0;  // no structural term in the denoising protocol
  w.lambda_DA = 0.0;   // fully connected critic has no spatial taps
  if (!use_ot) w.lambda_OT = 0.0;
  const auto total = losses::generator_total(pix, strz, adv_on_pred, otl, w);
  if (!std::isfinite(total.value)) throw NumericError("denoise: non-finite total loss");

  auto g_grads = nn::backward(m.g, acts_g, m.g_out, total.grad);
  const int fi = m.g.param_index(m.probe_first);
  const int hi = m.g.param_index(m.probe_hidden);
  st.g_first = nn::spectral_norm(
      nn::matrixize(g_grads.param_grads[static_cast<std::size_t>(fi)].value), 50, 0x9e37);
  st.g_hidden = nn::spectral_norm(
      nn::matrixize(g_grads.param_grads[static_cast<std::size_t>(hi)].value), 50, 0x9e37);
  nn::adam_step(m.g.params, g_grads.param_grads, g_opt);

  st.loss_p = pix.value;
  st.loss_adv = adv_on_pred.value;
  st.loss_ot = otl.value;
  return st;
}

Tensor predict_batched(const Network& g, const std::string& out, const Tensor& inputs,
                       int chunk = 200) {
  const int n = inputs.dim(0);
  Tensor preds = inputs.zeros_like();
  const std::size_t px = inputs.numel() / static_cast<std::size_t>(n);
  for (int at = 0; at < n; at += chunk) {
    const int take = std::min(chunk, n - at);
    Tensor part({take, inputs.dim(1), inputs.dim(2), inputs.dim(3)});
    std::copy_n(inputs.data.data() + static_cast<std::size_t>(at) * px, take * px,
                part.data.data());
    const Tensor got = nn::forward(g, {{"x", part}}).at(out);
    std::copy_n(got.data.data(), take * px,
                preds.data.data() + static_cast<std::size_t>(at) * px);
  }
  return preds;
}

data::MetricsRecord failure_row(int epoch) {
  data::MetricsRecord r;
  r.epoch = epoch;
  return r;  // metric fields stay NaN: the documented failure row
}

void run_in_waves(int threads, std::vector<std::function<void()>> jobs) {
  if (threads < 1) threads = 1;
  std::size_t at = 0;
  while (at < jobs.size()) {
    std::vector<std::future<void>> wave;
    for (int t = 0; t < threads && at < jobs.size(); ++t, ++at)
      wave.push_back(std::async(std::launch::async, jobs[at]));
    for (auto& f : wave) f.get();
  }
}

}  // namespace

std::pair<int, int> near_optimal_window(int epochs_to_target, int total_epochs) {
  const int end = epochs_to_target >= 1 ? epochs_to_target : total_epochs;
  const int len = std::max(1, end / 10);
  return {end - len, end};  // half-open indices into the records vector
}

GpResult wgan_gp_penalty(const Network& critic, const Tensor& real, const Tensor& fake,
                         double gp_lambda, std::uint64_t seed) {
  if (!real.same_shape(fake)) throw ShapeError("wgan_gp_penalty: batch shapes differ");
  // validate the expected dense/relu chain and collect the dense node names
  std::vector<const nn::LayerSpec*> dense_nodes;
  for (const auto& node : critic.nodes) {
    if (node.kind == nn::LayerKind::kDense) dense_nodes.push_back(&node);
    else if (node.kind != nn::LayerKind::kRelu)
      throw ValidationError("wgan_gp_penalty: critic must be a dense/relu chain");
  }
  if (dense_nodes.empty() || dense_nodes.back()->units_out != 1)
    throw ValidationError("wgan_gp_penalty: critic must end in a single logit");

  const int nb = real.dim(0);
  Rng rng(seed ^ 0x6706ULL);
  Tensor mix = real;
  for (int i = 0; i < nb; ++i) {
    const float t = static_cast<float>(rng.uniform());
    const std::size_t px = real.numel() / static_cast<std::size_t>(nb);
    for (std::size_t k = 0; k < px; ++k) {
      const std::size_t at = static_cast<std::size_t>(i) * px + k;
      mix.data[at] = t * real.data[at] + (1.0f - t) * fake.data[at];
    }
  }

  auto acts = nn::forward(critic, {{"x", mix}});
  // input gradient g = dD/dx per sample
  Tensor ones({nb, 1});
  std::fill(ones.data.begin(), ones.data.end(), 1.0f);
  const Tensor gx = nn::backward(critic, acts, dense_nodes.back()->name, ones)
                        .input_grads.at("x");

  GpResult res;
  res.param_grads = zero_grads(critic);
  const std::size_t px = real.numel() / static_cast<std::size_t>(nb);

  for (int i = 0; i < nb; ++i) {
    double norm2 = 0.0;
    for (std::size_t k = 0; k < px; ++k) {
      const double v = gx.data[static_cast<std::size_t>(i) * px + k];
      norm2 += v * v;
    }
    const double norm = std::sqrt(norm2);
    res.value += (norm - 1.0) * (norm - 1.0) / nb;
    if (norm == 0.0) continue;  // subgradient 0 on the measure-zero corner
    const double scale = gp_lambda * 2.0 * (norm - 1.0) / (norm * nb);

    // forward-mode pass through the locally linear (fixed-mask) critic with
    // input tangent v = scale * g; parameter gradients of <grad_x D, v>
    Eigen::VectorXd tangent(static_cast<Eigen::Index>(px));
    for (std::size_t k = 0; k < px; ++k)
      tangent(static_cast<Eigen::Index>(k)) =
          scale * gx.data[static_cast<std::size_t>(i) * px + k];

    // collect per-layer inputs of the sample and masks
    std::vector<Eigen::VectorXd> layer_tangents;  // tangent entering each dense layer
    layer_tangents.push_back(tangent);
    Eigen::VectorXd cur = tangent;
    for (std::size_t li = 0; li < dense_nodes.size(); ++li) {
      const auto* node = dense_nodes[li];
      const auto& w = critic.param(node->name + ".w");
      Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic,
                                     Eigen::RowMajor>>
          wm(w.data.data(), node->units_out, node->units_in);
      Eigen::VectorXd nxt = wm.cast<double>() * cur;
      if (li + 1 < dense_nodes.size()) {
        // mask of the relu that follows this dense layer
        const auto& pre = acts.at(node->name);
        for (int u = 0; u < node->units_out; ++u)
          if (pre.at2(i, u) <= 0.0f) nxt(u) = 0.0;
      }
      layer_tangents.push_back(nxt);
      cur = nxt;
    }

    // backward adjoint of the scalar tangent output through fixed masks
    Eigen::VectorXd adj(1);
    adj(0) = 1.0;
    for (std::size_t li = dense_nodes.size(); li-- > 0;) {
      const auto* node = dense_nodes[li];
      const auto& w = critic.param(node->name + ".w");
      Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic,
                                     Eigen::RowMajor>>
          wm(w.data.data(), node->units_out, node->units_in);
      // dW += adj * layer_tangent_in^T  (bias grads vanish: masks are constant)
      const int wi = critic.param_index(node->name + ".w");
      auto& dw = res.param_grads[static_cast<std::size_t>(wi)].value;
      const Eigen::VectorXd& tin = layer_tangents[li];
      for (int r = 0; r < node->units_out; ++r)
        for (int cidx = 0; cidx < node->units_in; ++cidx)
          dw.data[static_cast<std::size_t>(r) * node->units_in + cidx] +=
              static_cast<float>(adj(r) * tin(cidx));
      Eigen::VectorXd prev = wm.cast<double>().transpose() * adj;
      if (li > 0) {
        const auto* below = dense_nodes[li - 1];
        const auto& pre = acts.at(below->name);
        for (int u = 0; u < below->units_out; ++u)
          if (pre.at2(i, u) <= 0.0f) prev(u) = 0.0;
      }
      adj = prev;
    }
  }
  // res.value stays unweighted; gp_lambda is folded into the gradients
  return res;
}

RunResult run_denoise(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  write_config_echo(cfg, (fs::path(cfg.out_dir) / "config.echo").string());

  const auto train = data::load_mnist(
      (fs::path(cfg.data_dir) / "train-images-idx3-ubyte").string(),
      (fs::path(cfg.data_dir) / "train-labels-idx1-ubyte").string());
  const auto test = data::load_mnist(
      (fs::path(cfg.data_dir) / "t10k-images-idx3-ubyte").string(),
      (fs::path(cfg.data_dir) / "t10k-labels-idx1-ubyte").string());
  const int n_train = cfg.subset_size > 0 ? std::min(cfg.subset_size, train.count)
                                          : train.count;
  const int n_test = cfg.test_subset > 0 ? std::min(cfg.test_subset, test.count)
                                         : test.count;

  std::vector<int> train_idx(static_cast<std::size_t>(n_train));
  std::iota(train_idx.begin(), train_idx.end(), 0);
  std::vector<int> test_idx(static_cast<std::size_t>(n_test));
  std::iota(test_idx.begin(), test_idx.end(), 0);
  const Tensor test_clean =
      gather_images(test.images, test.rows, test.cols, test_idx, 0, n_test);
  Rng test_noise_rng(cfg.seed ^ 0x7e57ULL);
  const Tensor test_noisy = add_noise(test_clean, cfg.noise_sigma, test_noise_rng);

  DenoiseModels m = build_denoise_models(cfg.seed);
  nn::AdamStateT<float> g_opt, d_opt;
  g_opt.init_like(m.g.params, cfg.lr);
  d_opt.init_like(m.d.params, cfg.lr);

  RunResult res;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
      Rng order_rng(cfg.seed * 0x9e3779b9ULL + static_cast<std::uint64_t>(epoch));
      std::vector<int> order = train_idx;
      for (int i = n_train - 1; i > 0; --i)
        std::swap(order[static_cast<std::size_t>(i)],
                  order[static_cast<std::size_t>(order_rng.below(static_cast<std::uint64_t>(i + 1)))]);
      Rng noise_rng(cfg.seed ^ (0x6e0123ULL + static_cast<std::uint64_t>(epoch) * 0x10001ULL));

      StepStats sums;
      int steps = 0;
      for (int at = 0; at + cfg.batch <= n_train; at += cfg.batch) {
        const Tensor clean =
            gather_images(train.images, train.rows, train.cols, order, at, cfg.batch);
        const Tensor noisy = add_noise(clean, cfg.noise_sigma, noise_rng);
        const auto st = denoise_step(m, g_opt, d_opt, noisy, clean, cfg,
                                     cfg.seed + static_cast<std::uint64_t>(epoch) * 10007ULL +
                                         static_cast<std::uint64_t>(at));
        sums.loss_p += st.loss_p;
        sums.loss_adv += st.loss_adv;
        sums.loss_ot += st.loss_ot;
        sums.g_first += st.g_first;
        sums.g_hidden += st.g_hidden;
        ++steps;
      }

      const Tensor preds = predict_batched(m.g, m.g_out, test_noisy);
      data::MetricsRecord rec = data::eval_metrics(preds, test_clean, 1.0);
      rec.epoch = epoch;
      rec.wallclock_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      rec.grad_specnorm_first = sums.g_first / steps;
      rec.grad_specnorm_hidden = sums.g_hidden / steps;
      rec.loss_p = sums.loss_p / steps;
      rec.loss_str = 0.0;
      rec.loss_adv = sums.loss_adv / steps;
      rec.loss_ot = sums.loss_ot / steps;
      rec.loss_da = 0.0;
      res.records.push_back(rec);

      if (rec.mse <= cfg.target_mse) {
        res.epochs_to_target = epoch;
        break;
      }
    }
  } catch (const NumericError& e) {
    res.failed = true;
    res.failure = e.what();
    res.records.push_back(failure_row(static_cast<int>(res.records.size()) + 1));
  }

  data::write_metrics_csv(res.records, (fs::path(cfg.out_dir) / "metrics.csv").string());
  nn::save_checkpoint((fs::path(cfg.out_dir) / "generator.sdnc").string(), m.g);
  nn::save_checkpoint((fs::path(cfg.out_dir) / "discriminator.sdnc").string(), m.d);
  return res;
}

SweepResult run_eps_sweep(const ExperimentConfig& cfg) {
  SweepResult sweep;
  sweep.entries.resize(cfg.epsilon_list.size());
  std::vector<std::function<void()>> jobs;
  for (std::size_t i = 0; i < cfg.epsilon_list.size(); ++i) {
    jobs.push_back([&cfg, &sweep, i] {
      ExperimentConfig sub = cfg;
      sub.method = Method::kSinkhornGan;
      sub.epsilon = cfg.epsilon_list[i];
      sub.out_dir =
          (fs::path(cfg.out_dir) / ("eps_" + data::format_metric(sub.epsilon))).string();
      SweepEntry entry;
      entry.epsilon = sub.epsilon;
      entry.run = run_denoise(sub);
      const auto [w0, w1] = near_optimal_window(entry.run.epochs_to_target,
                                                static_cast<int>(entry.run.records.size()));
      double fsum = 0, hsum = 0;
      int cnt = 0;
      for (int r = w0; r < w1; ++r) {
        fsum += entry.run.records[static_cast<std::size_t>(r)].grad_specnorm_first;
        hsum += entry.run.records[static_cast<std::size_t>(r)].grad_specnorm_hidden;
        ++cnt;
      }
      entry.near_opt_first = cnt ? fsum / cnt : 0.0;
      entry.near_opt_hidden = cnt ? hsum / cnt : 0.0;
      sweep.entries[i] = std::move(entry);
    });
  }
  run_in_waves(effective_threads(cfg), std::move(jobs));

  fs::create_directories(cfg.out_dir);
  std::ofstream f(fs::path(cfg.out_dir) / "sweep_summary.csv");
  f << "epsilon,epochs_to_target,near_opt_first,near_opt_hidden\n";
  for (const auto& e : sweep.entries)
    f << data::format_metric(e.epsilon) << ","
      << (e.run.reached() ? std::to_string(e.run.epochs_to_target) : "not_reached") << ","
      << data::format_metric(e.near_opt_first) << ","
      << data::format_metric(e.near_opt_hidden) << "\n";
  return sweep;
}

std::vector<std::pair<Method, RunResult>> run_baselines(const ExperimentConfig& cfg) {
  const Method methods[] = {Method::kSinkhornGan, Method::kGan, Method::kWgan,
                            Method::kWganGp};
  std::vector<std::pair<Method, RunResult>> out(4);
  std::vector<std::function<void()>> jobs;
  for (int i = 0; i < 4; ++i) {
    jobs.push_back([&cfg, &out, i, &methods] {
      ExperimentConfig sub = cfg;
      sub.method = methods[i];
      sub.out_dir = (fs::path(cfg.out_dir) / method_name(methods[i])).string();
      out[static_cast<std::size_t>(i)] = {methods[i], run_denoise(sub)};
    });
  }
  run_in_waves(effective_threads(cfg), std::move(jobs));

  fs::create_directories(cfg.out_dir);
  std::ofstream f(fs::path(cfg.out_dir) / "baselines_summary.csv");
  f << "method,epochs_to_target,final_mse\n";
  for (const auto& [method, run] : out)
    f << method_name(method) << ","
      << (run.reached() ? std::to_string(run.epochs_to_target) : "not_reached") << ","
      << data::format_metric(run.records.empty() ? std::nan("") : run.records.back().mse)
      << "\n";
  return out;
}

// ---- synthetic super-resolution toy ----

namespace {

struct SrDataset {
  Tensor xt, z, y;  // train tensors
  Tensor txt, tz, ty;
};

SrDataset make_sr_dataset(const ExperimentConfig& cfg) {
  const int patch = cfg.sr_patch;
  if (patch < 8 || (patch & (patch - 1)) != 0)
    throw ConfigError("sr: sr_patch must be a power of two >= 8");
  const int total = cfg.sr_train + cfg.sr_test;
  SrDataset ds;
  ds.xt = Tensor({cfg.sr_train, 1, patch, patch});
  ds.z = Tensor({cfg.sr_train, 3, patch, patch});
  ds.y = Tensor({cfg.sr_train, 1, patch, patch});
  ds.txt = Tensor({cfg.sr_test, 1, patch, patch});
  ds.tz = Tensor({cfg.sr_test, 3, patch, patch});
  ds.ty = Tensor({cfg.sr_test, 1, patch, patch});

  for (int i = 0; i < total; ++i) {
    const auto dem = data::gen_terrain(cfg.seed * 1000003ULL + static_cast<std::uint64_t>(i),
                                       patch + 1, cfg.sr_terrain_roughness);
    const auto coarse = data::degrade(dem, cfg.sr_factor, cfg.sr_blur_sigma);
    const auto prior = data::hillshade_prior(dem);
    const bool is_test = i >= cfg.sr_train;
    Tensor& xt = is_test ? ds.txt : ds.xt;
    Tensor& z = is_test ? ds.tz : ds.z;
    Tensor& y = is_test ? ds.ty : ds.y;
    const int n = is_test ? i - cfg.sr_train : i;
    for (int yy = 0; yy < patch; ++yy)
      for (int xx = 0; xx < patch; ++xx) {
        y.at4(n, 0, yy, xx) = dem.at(yy, xx);
        xt.at4(n, 0, yy, xx) = coarse.at(yy, xx);
        for (int c = 0; c < 3; ++c) z.at4(n, c, yy, xx) = prior[static_cast<std::size_t>(c)].at(yy, xx);
      }
  }
  if (!cfg.ablation_prior) {
    std::fill(ds.z.data.begin(), ds.z.data.end(), 0.0f);
    std::fill(ds.tz.data.begin(), ds.tz.data.end(), 0.0f);
  }
  return ds;
}

Tensor slice_batch(const Tensor& all, const std::vector<int>& order, int from, int count) {
  Tensor t({count, all.dim(1), all.dim(2), all.dim(3)});
  const std::size_t px = all.numel() / static_cast<std::size_t>(all.dim(0));
  for (int i = 0; i < count; ++i)
    std::copy_n(all.data.data() + static_cast<std::size_t>(order[static_cast<std::size_t>(from + i)]) * px,
                px, t.data.data() + static_cast<std::size_t>(i) * px);
  return t;
}

}  // namespace

SrToyResult run_sr_toy(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  write_config_echo(cfg, (fs::path(cfg.out_dir) / "config.echo").string());

  const SrDataset ds = make_sr_dataset(cfg);
  SrToyResult result;
  result.bicubic = data::eval_metrics(ds.txt, ds.ty, 1.0);

  siran::SiranConfig scfg;
  scfg.base_channels = cfg.sr_base_channels;
  scfg.n_dmrb_g = cfg.sr_n_dmrb;
  scfg.n_dmrb_d = cfg.sr_n_dmrb;
  scfg.rcb_per_dmrb = cfg.sr_rcb;
  auto [g, d] = siran::build_siran(scfg, cfg.seed);
  siran::write_model_manifest((fs::path(cfg.out_dir) / "model.manifest").string(), scfg,
                              cfg.seed);

  nn::AdamStateT<float> g_opt, d_opt;
  g_opt.init_like(g.net.params, cfg.lr);
  d_opt.init_like(d.net.params, cfg.lr);

  siran::TrainStepOptions opt;
  opt.weights = cfg.weights;
  if (!cfg.ablation_sinkhorn) opt.weights.lambda_OT = 0.0;
  opt.sink = sink_config(cfg);
  opt.use_attention = cfg.ablation_attention;
  opt.use_psa = cfg.ablation_psa;

  auto evaluate = [&]() {
    Tensor preds = ds.txt.zeros_like();
    const int chunk = 16;
    const std::size_t px = static_cast<std::size_t>(cfg.sr_patch) * cfg.sr_patch;
    for (int at = 0; at < cfg.sr_test; at += chunk) {
      const int take = std::min(chunk, cfg.sr_test - at);
      std::vector<int> idx(static_cast<std::size_t>(take));
      std::iota(idx.begin(), idx.end(), at);
      const Tensor xt = slice_batch(ds.txt, idx, 0, take);
      const Tensor z = slice_batch(ds.tz, idx, 0, take);
      const Tensor a_s = opt.use_attention
                             ? siran::attention_for(d, xt, opt.use_psa)
                             : [&] {
                                 Tensor t({take, 1, cfg.sr_patch, cfg.sr_patch});
                                 std::fill(t.data.begin(), t.data.end(), 1.0f);
                                 return t;
                               }();
      const auto fw = siran::generator_forward(g, xt, z, a_s);
      std::copy_n(fw.out.data.data(), static_cast<std::size_t>(take) * px,
                  preds.data.data() + static_cast<std::size_t>(at) * px);
    }
    return std::pair(data::eval_metrics(preds, ds.ty, 1.0), preds);
  };

  RunResult& run = result.run;
  const auto t0 = std::chrono::steady_clock::now();
  Tensor last_preds;
  try {
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
      Rng order_rng(cfg.seed * 0x51f15eedULL + static_cast<std::uint64_t>(epoch));
      std::vector<int> order(static_cast<std::size_t>(cfg.sr_train));
      std::iota(order.begin(), order.end(), 0);
      for (int i = cfg.sr_train - 1; i > 0; --i)
        std::swap(order[static_cast<std::size_t>(i)],
                  order[static_cast<std::size_t>(order_rng.below(static_cast<std::uint64_t>(i + 1)))]);

      double lp = 0, lstr = 0, ladv = 0, lot = 0, lda = 0, gf = 0, gh = 0;
      int steps = 0;
      for (int at = 0; at + cfg.batch <= cfg.sr_train; at += cfg.batch) {
        const Tensor xt = slice_batch(ds.xt, order, at, cfg.batch);
        const Tensor z = slice_batch(ds.z, order, at, cfg.batch);
        const Tensor y = slice_batch(ds.y, order, at, cfg.batch);
        const auto st = siran::train_step(g, d, g_opt, d_opt, xt, z, y, opt);
        lp += st.metrics.loss_p;
        lstr += st.metrics.loss_str;
        ladv += st.metrics.loss_adv;
        lot += st.metrics.loss_ot;
        lda += st.metrics.loss_da;
        gf += st.metrics.grad_specnorm_first;
        gh += st.metrics.grad_specnorm_hidden;
        ++steps;
      }

      auto [rec, preds] = evaluate();
      last_preds = std::move(preds);
      rec.epoch = epoch;
      rec.wallclock_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      rec.grad_specnorm_first = gf / steps;
      rec.grad_specnorm_hidden = gh / steps;
      rec.loss_p = lp / steps;
      rec.loss_str = lstr / steps;
      rec.loss_adv = ladv / steps;
      rec.loss_ot = lot / steps;
      rec.loss_da = lda / steps;
      run.records.push_back(rec);

      if (result.epochs_to_pixel_target < 0 && rec.mse <= cfg.sr_pixel_target)
        result.epochs_to_pixel_target = epoch;
    }
  } catch (const NumericError& e) {
    run.failed = true;
    run.failure = e.what();
    run.records.push_back(failure_row(static_cast<int>(run.records.size()) + 1));
  }
  run.epochs_to_target = result.epochs_to_pixel_target;

  data::write_metrics_csv(run.records, (fs::path(cfg.out_dir) / "metrics.csv").string());
  nn::save_checkpoint((fs::path(cfg.out_dir) / "generator.sdnc").string(), g.net);
  nn::save_checkpoint((fs::path(cfg.out_dir) / "discriminator.sdnc").string(), d.net);
  if (!run.records.empty()) result.final_eval = run.records.back();

  if (last_preds.numel() > 0) {
    const auto pred0 = data::tensor_to_raster(last_preds, 0);
    const auto truth0 = data::tensor_to_raster(ds.ty, 0);
    const auto input0 = data::tensor_to_raster(ds.txt, 0);
    data::write_raster_sdem((fs::path(cfg.out_dir) / "sample_pred.sdem").string(), pred0);
    data::write_raster_sdem((fs::path(cfg.out_dir) / "sample_truth.sdem").string(), truth0);
    data::write_raster_sdem((fs::path(cfg.out_dir) / "sample_input.sdem").string(), input0);
    data::write_raster_pgm16((fs::path(cfg.out_dir) / "sample_pred.pgm").string(), pred0);
    data::write_raster_pgm16((fs::path(cfg.out_dir) / "sample_truth.pgm").string(), truth0);
    data::write_raster_pgm16((fs::path(cfg.out_dir) / "sample_input.pgm").string(), input0);
  }
  return result;
}

std::vector<SmoothnessRow> smoothness_probe(const ExperimentConfig& cfg) {
  cfg.validate();
  const int n = cfg.probe_points;
  Rng data_rng(cfg.seed ^ 0x5300ULL);
  ot::Matrix xs(n, 2), ys(n, 2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 2; ++j) {
      // probe_lipschitz_scale scales the inputs: for the linear generator
      // theta*x this is exactly its Lipschitz bound in theta
      xs(i, j) = data_rng.uniform(-1.0, 1.0) * cfg.probe_lipschitz_scale;
      ys(i, j) = data_rng.uniform(-1.0, 1.0);
    }
  const ot::Vector u = ot::Vector::Constant(n, 1.0 / n);

  auto grad_theta = [&](const Eigen::Matrix2d& theta, const ot::SinkhornConfig& sc) {
    const ot::Matrix mapped = xs * theta.transpose();
    const ot::Matrix gx = ot::divergence_grad_x(mapped, ys, u, u, sc);
    Eigen::Matrix2d g = Eigen::Matrix2d::Zero();
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) g(a, b) += gx(i, a) * xs(i, b);
    return g;
  };

  std::vector<SmoothnessRow> rows;
  for (double eps : cfg.epsilon_list) {
    ot::SinkhornConfig sc;
    sc.epsilon = eps;
    sc.max_iters = 3000;
    sc.marginal_tol = 1e-10;
    sc.p = 2.0;
    Rng theta_rng(cfg.seed ^ 0x7a11ULL);
    double gamma = 0.0;
    for (int pair = 0; pair < cfg.probe_pairs; ++pair) {
      Eigen::Matrix2d t1, t2;
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          t1(a, b) = theta_rng.normal();
          t2(a, b) = theta_rng.normal();
        }
      const double dt = (t1 - t2).norm();
      if (dt < 1e-9) continue;
      const double dg = (grad_theta(t1, sc) - grad_theta(t2, sc)).norm();
      gamma = std::max(gamma, dg / dt);
    }
    rows.push_back({eps, gamma});
  }

  fs::create_directories(cfg.out_dir);
  std::ofstream f(fs::path(cfg.out_dir) / "smoothness.csv");
  f << "epsilon,gamma_hat\n";
  for (const auto& r : rows)
    f << data::format_metric(r.epsilon) << "," << data::format_metric(r.gamma_hat) << "\n";
  return rows;
}

}  // namespace sinkdem::experiments
