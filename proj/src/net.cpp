#include "sinkdem/net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sinkdem/rng.hpp"

namespace sinkdem::nn {

namespace {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using EMatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

int conv_kernel(LayerKind k) { return k == LayerKind::kConv3x3 ? 3 : 1; }

[[noreturn]] void node_error(const LayerSpec& node, const std::string& what) {
  throw ShapeError("node '" + node.name + "' (" + layer_kind_name(node.kind) + "): " + what);
}

template <typename T>
const TensorT<T>& fetch(const ActsT<T>& acts, const LayerSpec& node,
                        const std::string& name) {
  auto it = acts.find(name);
  if (it == acts.end())
    throw ProtocolError("node '" + node.name + "': missing activation for '" + name + "'");
  return it->second;
}

// ---- conv ----

template <typename T>
void im2col(const TensorT<T>& in, int n, int k, int stride, int pad, int ho, int wo,
            EMat<T>& col) {
  const int C = in.dim(1), H = in.dim(2), W = in.dim(3);
  col.resize(static_cast<Eigen::Index>(C) * k * k, static_cast<Eigen::Index>(ho) * wo);
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Eigen::Index row = (static_cast<Eigen::Index>(c) * k + ky) * k + kx;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          T* dst = col.data() + row + static_cast<Eigen::Index>(oy) * wo * col.rows();
          if (iy < 0 || iy >= H) {
            for (int ox = 0; ox < wo; ++ox) dst[static_cast<Eigen::Index>(ox) * col.rows()] = T(0);
            continue;
          }
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            dst[static_cast<Eigen::Index>(ox) * col.rows()] =
                (ix < 0 || ix >= W) ? T(0) : in.at4(n, c, iy, ix);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const EMat<T>& col, int n, int k, int stride, int pad, int ho, int wo,
                TensorT<T>& din) {
  const int C = din.dim(1), H = din.dim(2), W = din.dim(3);
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Eigen::Index row = (static_cast<Eigen::Index>(c) * k + ky) * k + kx;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix < 0 || ix >= W) continue;
            din.at4(n, c, iy, ix) += col(row, static_cast<Eigen::Index>(oy) * wo + ox);
          }
        }
      }
    }
  }
}

template <typename T>
TensorT<T> conv_forward(const LayerSpec& node, const TensorT<T>& in,
                        const TensorT<T>& w, const TensorT<T>* b) {
  if (!in.is4d()) node_error(node, "expected 4-D input, got " + shape_str(in.shape));
  if (in.dim(1) != node.in_channels)
    node_error(node, "expected " + std::to_string(node.in_channels) + " input channels, got " +
                         std::to_string(in.dim(1)));
  const int k = conv_kernel(node.kind);
  const int pad = k / 2;
  const int N = in.dim(0), H = in.dim(2), W = in.dim(3);
  const int ho = (H + 2 * pad - k) / node.stride + 1;
  const int wo = (W + 2 * pad - k) / node.stride + 1;
  TensorT<T> out({N, node.out_channels, ho, wo});

  Eigen::Map<const EMatRM<T>> wm(w.data.data(), node.out_channels,
                                 static_cast<Eigen::Index>(node.in_channels) * k * k);
  EMat<T> col;
  for (int n = 0; n < N; ++n) {
    im2col(in, n, k, node.stride, pad, ho, wo, col);
    Eigen::Map<EMatRM<T>> om(&out.at4(n, 0, 0, 0), node.out_channels,
                             static_cast<Eigen::Index>(ho) * wo);
    om.noalias() = wm * col;
    if (b) {
      for (int oc = 0; oc < node.out_channels; ++oc)
        om.row(oc).array() += static_cast<T>(b->data[oc]);
    }
  }
  return out;
}

template <typename T>
void conv_backward(const LayerSpec& node, const TensorT<T>& in, const TensorT<T>& w,
                   const TensorT<T>& dout, TensorT<T>& din, TensorT<T>& dw, TensorT<T>* db) {
  const int k = conv_kernel(node.kind);
  const int pad = k / 2;
  const int N = in.dim(0);
  const int ho = dout.dim(2), wo = dout.dim(3);

  Eigen::Map<const EMatRM<T>> wm(w.data.data(), node.out_channels,
                                 static_cast<Eigen::Index>(node.in_channels) * k * k);
  Eigen::Map<EMatRM<T>> dwm(dw.data.data(), node.out_channels,
                            static_cast<Eigen::Index>(node.in_channels) * k * k);
  EMat<T> col, dcol;
  for (int n = 0; n < N; ++n) {
    Eigen::Map<const EMatRM<T>> dom(&dout.at4(n, 0, 0, 0), node.out_channels,
                                    static_cast<Eigen::Index>(ho) * wo);
    im2col(in, n, k, node.stride, pad, ho, wo, col);
    dwm.noalias() += dom * col.transpose();
    if (db) {
      // fixed-order accumulation; vectorized reductions over unaligned maps
      // would make the sum order depend on buffer addresses
      const T* dptr = &dout.at4(n, 0, 0, 0);
      const std::size_t hw = static_cast<std::size_t>(ho) * wo;
      for (int oc = 0; oc < node.out_channels; ++oc) {
        T acc = T(0);
        for (std::size_t i = 0; i < hw; ++i) acc += dptr[static_cast<std::size_t>(oc) * hw + i];
        db->data[oc] += acc;
      }
    }
    dcol.noalias() = wm.transpose() * dom;
    col2im_add(dcol, n, k, node.stride, pad, ho, wo, din);
  }
}

// ---- dense ----

template <typename T>
int flat_features(const TensorT<T>& t) {
  std::size_t f = 1;
  for (std::size_t i = 1; i < t.shape.size(); ++i) f *= static_cast<std::size_t>(t.shape[i]);
  return static_cast<int>(f);
}

template <typename T>
TensorT<T> dense_forward(const LayerSpec& node, const TensorT<T>& in,
                         const TensorT<T>& w, const TensorT<T>* b) {
  const int N = in.dim(0);
  const int fin = flat_features(in);
  if (fin != node.units_in)
    node_error(node, "expected " + std::to_string(node.units_in) + " input features, got " +
                         std::to_string(fin));
  TensorT<T> out({N, node.units_out});
  Eigen::Map<const EMatRM<T>> xm(in.data.data(), N, fin);
  Eigen::Map<const EMatRM<T>> wm(w.data.data(), node.units_out, fin);
  Eigen::Map<EMatRM<T>> ym(out.data.data(), N, node.units_out);
  ym.noalias() = xm * wm.transpose();
  if (b) {
    for (int n = 0; n < N; ++n)
      for (int u = 0; u < node.units_out; ++u) out.at2(n, u) += b->data[u];
  }
  return out;
}

template <typename T>
void dense_backward(const LayerSpec& node, const TensorT<T>& in, const TensorT<T>& w,
                    const TensorT<T>& dout, TensorT<T>& din, TensorT<T>& dw, TensorT<T>* db) {
  const int N = in.dim(0);
  const int fin = flat_features(in);
  Eigen::Map<const EMatRM<T>> xm(in.data.data(), N, fin);
  Eigen::Map<const EMatRM<T>> wm(w.data.data(), node.units_out, fin);
  Eigen::Map<const EMatRM<T>> dym(dout.data.data(), N, node.units_out);
  Eigen::Map<EMatRM<T>> dxm(din.data.data(), N, fin);
  Eigen::Map<EMatRM<T>> dwm(dw.data.data(), node.units_out, fin);
  dxm.noalias() += dym * wm;
  dwm.noalias() += dym.transpose() * xm;
  if (db) {
    for (int n = 0; n < N; ++n)
      for (int u = 0; u < node.units_out; ++u) db->data[u] += dout.at2(n, u);
  }
}

// ---- bilinear resize ----

struct LerpTap {
  int i0, i1;
  double w1;  // weight on i1; (1 - w1) on i0
};

std::vector<LerpTap> lerp_taps(int in_size, int out_size) {
  std::vector<LerpTap> taps(static_cast<std::size_t>(out_size));
  const double scale = static_cast<double>(in_size) / out_size;
  for (int d = 0; d < out_size; ++d) {
    const double src = (d + 0.5) * scale - 0.5;
    double f = std::floor(src);
    int i0 = static_cast<int>(f);
    double w1 = src - f;
    if (i0 < 0) {
      i0 = 0;
      w1 = 0.0;
    }
    int i1 = i0 + 1;
    if (i1 > in_size - 1) {
      i1 = in_size - 1;
      w1 = 0.0;
    }
    taps[static_cast<std::size_t>(d)] = {i0, i1, w1};
  }
  return taps;
}

}  // namespace

template <typename T>
TensorT<T> bilinear_resize(const TensorT<T>& in, int out_h, int out_w) {
  if (!in.is4d()) throw ShapeError("bilinear_resize: expected 4-D input");
  const int N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  TensorT<T> out({N, C, out_h, out_w});
  const auto ty = lerp_taps(H, out_h), tx = lerp_taps(W, out_w);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < out_h; ++y) {
        const auto& a = ty[static_cast<std::size_t>(y)];
        for (int x = 0; x < out_w; ++x) {
          const auto& b = tx[static_cast<std::size_t>(x)];
          const double v00 = in.at4(n, c, a.i0, b.i0), v01 = in.at4(n, c, a.i0, b.i1);
          const double v10 = in.at4(n, c, a.i1, b.i0), v11 = in.at4(n, c, a.i1, b.i1);
          out.at4(n, c, y, x) = static_cast<T>(
              (1 - a.w1) * ((1 - b.w1) * v00 + b.w1 * v01) +
              a.w1 * ((1 - b.w1) * v10 + b.w1 * v11));
        }
      }
  return out;
}

template <typename T>
void bilinear_resize_backward(const TensorT<T>& in_like, const TensorT<T>& dout,
                              TensorT<T>& din) {
  const int N = in_like.dim(0), C = in_like.dim(1), H = in_like.dim(2), W = in_like.dim(3);
  const int oh = dout.dim(2), ow = dout.dim(3);
  const auto ty = lerp_taps(H, oh), tx = lerp_taps(W, ow);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < oh; ++y) {
        const auto& a = ty[static_cast<std::size_t>(y)];
        for (int x = 0; x < ow; ++x) {
          const auto& b = tx[static_cast<std::size_t>(x)];
          const T g = dout.at4(n, c, y, x);
          din.at4(n, c, a.i0, b.i0) += static_cast<T>((1 - a.w1) * (1 - b.w1)) * g;
          din.at4(n, c, a.i0, b.i1) += static_cast<T>((1 - a.w1) * b.w1) * g;
          din.at4(n, c, a.i1, b.i0) += static_cast<T>(a.w1 * (1 - b.w1)) * g;
          din.at4(n, c, a.i1, b.i1) += static_cast<T>(a.w1 * b.w1) * g;
        }
      }
}

namespace {

template <typename T>
TensorT<T> upsample_forward(const LayerSpec& node, const TensorT<T>& in) {
  if (!in.is4d()) node_error(node, "expected 4-D input");
  return bilinear_resize(in, in.dim(2) * node.factor, in.dim(3) * node.factor);
}

template <typename T>
void upsample_backward(const LayerSpec&, const TensorT<T>& in, const TensorT<T>& dout,
                       TensorT<T>& din) {
  bilinear_resize_backward(in, dout, din);
}

// ---- softmax ----

template <typename T>
TensorT<T> softmax_forward(const LayerSpec& node, const TensorT<T>& in) {
  TensorT<T> out = in;
  const std::size_t groups = in.is4d()
                                 ? static_cast<std::size_t>(in.dim(0)) * in.dim(1)
                                 : static_cast<std::size_t>(in.dim(0));
  if (!in.is4d() && !in.is2d()) node_error(node, "softmax expects 2-D or 4-D input");
  const std::size_t len = in.numel() / groups;
  for (std::size_t g = 0; g < groups; ++g) {
    T* p = out.data.data() + g * len;
    T mx = p[0];
    for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, p[i]);
    double s = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      p[i] = static_cast<T>(std::exp(static_cast<double>(p[i] - mx)));
      s += p[i];
    }
    for (std::size_t i = 0; i < len; ++i) p[i] = static_cast<T>(p[i] / s);
  }
  return out;
}

template <typename T>
void softmax_backward(const TensorT<T>& out, const TensorT<T>& dout, TensorT<T>& din) {
  const std::size_t groups = out.is4d()
                                 ? static_cast<std::size_t>(out.dim(0)) * out.dim(1)
                                 : static_cast<std::size_t>(out.dim(0));
  const std::size_t len = out.numel() / groups;
  for (std::size_t g = 0; g < groups; ++g) {
    const T* y = out.data.data() + g * len;
    const T* gy = dout.data.data() + g * len;
    T* gx = din.data.data() + g * len;
    double dot = 0.0;
    for (std::size_t i = 0; i < len; ++i) dot += static_cast<double>(y[i]) * gy[i];
    for (std::size_t i = 0; i < len; ++i)
      gx[i] += static_cast<T>(y[i] * (gy[i] - dot));
  }
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kConv3x3: return "conv3x3";
    case LayerKind::kConv1x1: return "conv1x1";
    case LayerKind::kDense: return "dense";
    case LayerKind::kLeakyRelu: return "leaky_relu";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kSigmoid: return "sigmoid";
    case LayerKind::kUpsampleBilinear: return "upsample_bilinear";
    case LayerKind::kConcat: return "concat";
    case LayerKind::kElementwiseMul: return "elementwise_mul";
    case LayerKind::kAdd: return "add";
    case LayerKind::kGlobalAvgPool: return "global_avg_pool";
    case LayerKind::kSoftmax: return "softmax";
  }
  return "?";
}

// ---- builder ----

template <typename T>
void NetworkT<T>::check_new_name(const std::string& name) const {
  if (has_name(name)) throw ConfigError("network: duplicate node name '" + name + "'");
}

template <typename T>
bool NetworkT<T>::has_name(const std::string& name) const {
  for (const auto& i : input_names)
    if (i == name) return true;
  for (const auto& n : nodes)
    if (n.name == name) return true;
  return false;
}

template <typename T>
void NetworkT<T>::check_ref(const std::string& node, const std::string& ref) const {
  if (!has_name(ref))
    throw ConfigError("network: node '" + node + "' references unknown '" + ref +
                      "' (inputs must be declared before use; graph stays acyclic)");
}

template <typename T>
void NetworkT<T>::register_param(const std::string& name, std::vector<int> shape) {
  params.push_back({name, TensorT<T>(std::move(shape))});
}

template <typename T>
void NetworkT<T>::add_input(const std::string& name) {
  check_new_name(name);
  input_names.push_back(name);
}

template <typename T>
void NetworkT<T>::conv3x3(const std::string& name, const std::string& in, int in_ch,
                          int out_ch, int stride, bool bias) {
  check_new_name(name);
  check_ref(name, in);
  LayerSpec s;
  s.kind = LayerKind::kConv3x3;
  s.name = name;
  s.inputs = {in};
  s.in_channels = in_ch;
  s.out_channels = out_ch;
  s.stride = stride;
  s.bias = bias;
  nodes.push_back(s);
  register_param(name + ".w", {out_ch, in_ch, 3, 3});
  if (bias) register_param(name + ".b", {out_ch});
}

template <typename T>
void NetworkT<T>::conv1x1(const std::string& name, const std::string& in, int in_ch,
                          int out_ch, bool bias) {
  check_new_name(name);
  check_ref(name, in);
  LayerSpec s;
  s.kind = LayerKind::kConv1x1;
  s.name = name;
  s.inputs = {in};
  s.in_channels = in_ch;
  s.out_channels = out_ch;
  s.bias = bias;
  nodes.push_back(s);
  register_param(name + ".w", {out_ch, in_ch, 1, 1});
  if (bias) register_param(name + ".b", {out_ch});
}

template <typename T>
void NetworkT<T>::dense(const std::string& name, const std::string& in, int units_in,
                        int units_out, bool bias) {
  check_new_name(name);
  check_ref(name, in);
  LayerSpec s;
  s.kind = LayerKind::kDense;
  s.name = name;
  s.inputs = {in};
  s.units_in = units_in;
  s.units_out = units_out;
  s.bias = bias;
  nodes.push_back(s);
  register_param(name + ".w", {units_out, units_in});
  if (bias) register_param(name + ".b", {units_out});
}

template <typename T>
void NetworkT<T>::leaky_relu(const std::string& name, const std::string& in, float slope) {
  check_new_name(name);
  check_ref(name, in);
  LayerSpec s;
  s.kind = LayerKind::kLeakyRelu;
  s.name = name;
  s.inputs = {in};
  s.slope = slope;
  nodes.push_back(s);
}

template <typename T>
void NetworkT<T>::relu(const std::string& name, const std::string& in) {
  check_new_name(name);
  check_ref(name, in);
  LayerSpec s;
  s.kind = LayerKind::kRelu;
  s.name = name;
  s.inputs = {in};
  nodes.push_back(s);
}

template <typename T>
void NetworkT<T>::sigmoid(const std::string& name, const std::string& in) {
  check_new_name(name);
  check_ref(name, in);
  LayerSpec s;
  s.kind = LayerKind::kSigmoid;
  s.name = name;
  s.inputs = {in};
  nodes.push_back(s);
}

template <typename T>
void NetworkT<T>::upsample_bilinear(const std::string& name, const std::string& in,
                                    int factor) {
  check_new_name(name);
  check_ref(name, in);
  if (factor < 1) throw ConfigError("upsample_bilinear: factor must be >= 1");
  LayerSpec s;
  s.kind = LayerKind::kUpsampleBilinear;
  s.name = name;
  s.inputs = {in};
  s.factor = factor;
  nodes.push_back(s);
}

template <typename T>
void NetworkT<T>::concat(const std::string& name, const std::vector<std::string>& ins) {
  check_new_name(name);
  if (ins.empty()) throw ConfigError("concat: needs at least one input");
  for (const auto& i : ins) check_ref(name, i);
  LayerSpec s;
  s.kind = LayerKind::kConcat;
  s.name = name;
  s.inputs = ins;
  nodes.push_back(s);
}

template <typename T>
void NetworkT<T>::elementwise_mul(const std::string& name, const std::string& a,
                                  const std::string& b) {
  check_new_name(name);
  check_ref(name, a);
  check_ref(name, b);
  LayerSpec s;
  s.kind = LayerKind::kElementwiseMul;
  s.name = name;
  s.inputs = {a, b};
  nodes.push_back(s);
}

template <typename T>
void NetworkT<T>::add(const std::string& name, const std::vector<std::string>& ins) {
  check_new_name(name);
  if (ins.size() < 2) throw ConfigError("add: needs at least two inputs");
  for (const auto& i : ins) check_ref(name, i);
  LayerSpec s;
  s.kind = LayerKind::kAdd;
  s.name = name;
  s.inputs = ins;
  nodes.push_back(s);
}

template <typename T>
void NetworkT<T>::global_avg_pool(const std::string& name, const std::string& in) {
  check_new_name(name);
  check_ref(name, in);
  LayerSpec s;
  s.kind = LayerKind::kGlobalAvgPool;
  s.name = name;
  s.inputs = {in};
  nodes.push_back(s);
}

template <typename T>
void NetworkT<T>::softmax(const std::string& name, const std::string& in) {
  check_new_name(name);
  check_ref(name, in);
  LayerSpec s;
  s.kind = LayerKind::kSoftmax;
  s.name = name;
  s.inputs = {in};
  nodes.push_back(s);
}

template <typename T>
void NetworkT<T>::init(std::uint64_t seed_value) {
  seed = seed_value;
  Rng rng(seed_value);
  for (auto& p : params) {
    const bool is_bias = p.name.size() >= 2 && p.name.substr(p.name.size() - 2) == ".b";
    if (is_bias) {
      std::fill(p.value.data.begin(), p.value.data.end(), T(0));
      continue;
    }
    // fan-in = everything but the leading output dimension
    std::size_t fan_in = 1;
    for (std::size_t i = 1; i < p.value.shape.size(); ++i)
      fan_in *= static_cast<std::size_t>(p.value.shape[i]);
    const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : p.value.data) v = static_cast<T>(rng.normal() * std_dev);
  }
}

template <typename T>
int NetworkT<T>::param_index(const std::string& name) const {
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].name == name) return static_cast<int>(i);
  return -1;
}

template <typename T>
const TensorT<T>& NetworkT<T>::param(const std::string& name) const {
  const int i = param_index(name);
  if (i < 0) throw ConfigError("network: unknown parameter '" + name + "'");
  return params[static_cast<std::size_t>(i)].value;
}

template <typename T>
TensorT<T>& NetworkT<T>::param(const std::string& name) {
  const int i = param_index(name);
  if (i < 0) throw ConfigError("network: unknown parameter '" + name + "'");
  return params[static_cast<std::size_t>(i)].value;
}

template <typename T>
std::uint64_t NetworkT<T>::param_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params) {
    h = fnv1a64(p.name.data(), p.name.size(), h);
    h = fnv1a64(p.value.data.data(), p.value.data.size() * sizeof(T), h);
  }
  return h;
}

// ---- forward ----

template <typename T>
ActsT<T> forward(const NetworkT<T>& net, const ActsT<T>& inputs) {
  ActsT<T> acts;
  for (const auto& name : net.input_names) {
    auto it = inputs.find(name);
    if (it == inputs.end())
      throw ProtocolError("forward: missing graph input '" + name + "'");
    acts[name] = it->second;
  }

  for (const auto& node : net.nodes) {
    switch (node.kind) {
      case LayerKind::kConv3x3:
      case LayerKind::kConv1x1: {
        const auto& in = fetch(acts, node, node.inputs[0]);
        const auto& w = net.param(node.name + ".w");
        const TensorT<T>* b = node.bias ? &net.param(node.name + ".b") : nullptr;
        acts[node.name] = conv_forward(node, in, w, b);
        break;
      }
      case LayerKind::kDense: {
        const auto& in = fetch(acts, node, node.inputs[0]);
        const auto& w = net.param(node.name + ".w");
        const TensorT<T>* b = node.bias ? &net.param(node.name + ".b") : nullptr;
        acts[node.name] = dense_forward(node, in, w, b);
        break;
      }
      case LayerKind::kLeakyRelu:
      case LayerKind::kRelu: {
        const auto& in = fetch(acts, node, node.inputs[0]);
        TensorT<T> out = in;
        const T slope = node.kind == LayerKind::kRelu ? T(0) : static_cast<T>(node.slope);
        for (auto& v : out.data)
          if (v < T(0)) v *= slope;
        acts[node.name] = std::move(out);
        break;
      }
      case LayerKind::kSigmoid: {
        const auto& in = fetch(acts, node, node.inputs[0]);
        TensorT<T> out = in;
        for (auto& v : out.data) v = stable_sigmoid(v);
        acts[node.name] = std::move(out);
        break;
      }
      case LayerKind::kUpsampleBilinear: {
        acts[node.name] = upsample_forward(node, fetch(acts, node, node.inputs[0]));
        break;
      }
      case LayerKind::kConcat: {
        const auto& first = fetch(acts, node, node.inputs[0]);
        if (!first.is4d()) node_error(node, "concat expects 4-D inputs");
        int ctotal = 0;
        for (const auto& i : node.inputs) {
          const auto& t = fetch(acts, node, i);
          if (t.dim(0) != first.dim(0) || t.dim(2) != first.dim(2) ||
              t.dim(3) != first.dim(3))
            node_error(node, "concat inputs disagree on N/H/W");
          ctotal += t.dim(1);
        }
        TensorT<T> out({first.dim(0), ctotal, first.dim(2), first.dim(3)});
        const std::size_t hw = static_cast<std::size_t>(first.dim(2)) * first.dim(3);
        for (int n = 0; n < first.dim(0); ++n) {
          int coff = 0;
          for (const auto& i : node.inputs) {
            const auto& t = acts[i];
            std::copy_n(&t.at4(n, 0, 0, 0), static_cast<std::size_t>(t.dim(1)) * hw,
                        &out.at4(n, coff, 0, 0));
            coff += t.dim(1);
          }
        }
        acts[node.name] = std::move(out);
        break;
      }
      case LayerKind::kElementwiseMul: {
        const auto& a = fetch(acts, node, node.inputs[0]);
        const auto& b = fetch(acts, node, node.inputs[1]);
        if (!a.is4d() || !b.is4d()) node_error(node, "expected 4-D operands");
        const bool bcast = b.dim(1) == 1 && a.dim(1) != 1;
        if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3) ||
            (!bcast && a.dim(1) != b.dim(1)))
          node_error(node, "operand shapes " + shape_str(a.shape) + " vs " +
                               shape_str(b.shape));
        TensorT<T> out = a;
        for (int n = 0; n < a.dim(0); ++n)
          for (int c = 0; c < a.dim(1); ++c)
            for (int y = 0; y < a.dim(2); ++y)
              for (int x = 0; x < a.dim(3); ++x)
                out.at4(n, c, y, x) *= b.at4(n, bcast ? 0 : c, y, x);
        acts[node.name] = std::move(out);
        break;
      }
      case LayerKind::kAdd: {
        TensorT<T> out = fetch(acts, node, node.inputs[0]);
        for (std::size_t i = 1; i < node.inputs.size(); ++i) {
          const auto& t = fetch(acts, node, node.inputs[i]);
          if (!t.same_shape(out)) node_error(node, "add operands disagree on shape");
          for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] += t.data[k];
        }
        acts[node.name] = std::move(out);
        break;
      }
      case LayerKind::kGlobalAvgPool: {
        const auto& in = fetch(acts, node, node.inputs[0]);
        if (!in.is4d()) node_error(node, "expected 4-D input");
        TensorT<T> out({in.dim(0), in.dim(1)});
        const double hw = static_cast<double>(in.dim(2)) * in.dim(3);
        for (int n = 0; n < in.dim(0); ++n)
          for (int c = 0; c < in.dim(1); ++c) {
            double s = 0.0;
            for (int y = 0; y < in.dim(2); ++y)
              for (int x = 0; x < in.dim(3); ++x) s += in.at4(n, c, y, x);
            out.at2(n, c) = static_cast<T>(s / hw);
          }
        acts[node.name] = std::move(out);
        break;
      }
      case LayerKind::kSoftmax: {
        acts[node.name] = softmax_forward(node, fetch(acts, node, node.inputs[0]));
        break;
      }
    }
  }
  return acts;
}

// ---- backward ----

template <typename T>
GradientsT<T> backward(const NetworkT<T>& net, const ActsT<T>& acts,
                       const ActsT<T>& seed_grads) {
  ActsT<T> grads;
  for (const auto& [name, g] : seed_grads) {
    auto it = acts.find(name);
    if (it == acts.end())
      throw ProtocolError("backward: seed gradient for unknown activation '" + name + "'");
    if (!g.same_shape(it->second))
      throw ShapeError("backward: seed gradient shape mismatch on '" + name + "'");
    grads[name] = g;
  }

  GradientsT<T> out;
  out.param_grads.reserve(net.params.size());
  for (const auto& p : net.params)
    out.param_grads.push_back({p.name, p.value.zeros_like()});

  auto grad_into = [&grads](const std::string& name, const TensorT<T>& like) -> TensorT<T>& {
    auto it = grads.find(name);
    if (it == grads.end()) it = grads.emplace(name, like.zeros_like()).first;
    return it->second;
  };

  auto pgrad = [&](const std::string& name) -> TensorT<T>& {
    const int i = net.param_index(name);
    return out.param_grads[static_cast<std::size_t>(i)].value;
  };

  for (auto it = net.nodes.rbegin(); it != net.nodes.rend(); ++it) {
    const LayerSpec& node = *it;
    auto git = grads.find(node.name);
    if (git == grads.end()) continue;  // node does not influence any seeded output
    const TensorT<T>& g = git->second;

    switch (node.kind) {
      case LayerKind::kConv3x3:
      case LayerKind::kConv1x1: {
        const auto& in = fetch(acts, node, node.inputs[0]);
        TensorT<T>& din = grad_into(node.inputs[0], in);
        conv_backward(node, in, net.param(node.name + ".w"), g, din,
                      pgrad(node.name + ".w"),
                      node.bias ? &pgrad(node.name + ".b") : nullptr);
        break;
      }
      case LayerKind::kDense: {
        const auto& in = fetch(acts, node, node.inputs[0]);
        TensorT<T>& din = grad_into(node.inputs[0], in);
        dense_backward(node, in, net.param(node.name + ".w"), g, din,
                       pgrad(node.name + ".w"),
                       node.bias ? &pgrad(node.name + ".b") : nullptr);
        break;
      }
      case LayerKind::kLeakyRelu:
      case LayerKind::kRelu: {
        const auto& in = fetch(acts, node, node.inputs[0]);
        TensorT<T>& din = grad_into(node.inputs[0], in);
        const T slope = node.kind == LayerKind::kRelu ? T(0) : static_cast<T>(node.slope);
        for (std::size_t k = 0; k < in.data.size(); ++k)
          din.data[k] += in.data[k] > T(0) ? g.data[k] : slope * g.data[k];
        break;
      }
      case LayerKind::kSigmoid: {
        const auto& y = fetch(acts, node, node.name);
        TensorT<T>& din = grad_into(node.inputs[0], fetch(acts, node, node.inputs[0]));
        for (std::size_t k = 0; k < y.data.size(); ++k)
          din.data[k] += g.data[k] * y.data[k] * (T(1) - y.data[k]);
        break;
      }
      case LayerKind::kUpsampleBilinear: {
        const auto& in = fetch(acts, node, node.inputs[0]);
        upsample_backward(node, in, g, grad_into(node.inputs[0], in));
        break;
      }
      case LayerKind::kConcat: {
        const std::size_t hw = static_cast<std::size_t>(g.dim(2)) * g.dim(3);
        for (int n = 0; n < g.dim(0); ++n) {
          int coff = 0;
          for (const auto& iname : node.inputs) {
            const auto& t = fetch(acts, node, iname);
            TensorT<T>& di = grad_into(iname, t);
            const std::size_t cnt = static_cast<std::size_t>(t.dim(1)) * hw;
            const T* src = &g.at4(n, coff, 0, 0);
            T* dst = &di.at4(n, 0, 0, 0);
            for (std::size_t k = 0; k < cnt; ++k) dst[k] += src[k];
            coff += t.dim(1);
          }
        }
        break;
      }
      case LayerKind::kElementwiseMul: {
        const auto& a = fetch(acts, node, node.inputs[0]);
        const auto& b = fetch(acts, node, node.inputs[1]);
        const bool bcast = b.dim(1) == 1 && a.dim(1) != 1;
        TensorT<T>& da = grad_into(node.inputs[0], a);
        TensorT<T>& db = grad_into(node.inputs[1], b);
        for (int n = 0; n < a.dim(0); ++n)
          for (int c = 0; c < a.dim(1); ++c)
            for (int y = 0; y < a.dim(2); ++y)
              for (int x = 0; x < a.dim(3); ++x) {
                const T gv = g.at4(n, c, y, x);
                da.at4(n, c, y, x) += gv * b.at4(n, bcast ? 0 : c, y, x);
                db.at4(n, bcast ? 0 : c, y, x) += gv * a.at4(n, c, y, x);
              }
        break;
      }
      case LayerKind::kAdd: {
        for (const auto& iname : node.inputs) {
          TensorT<T>& di = grad_into(iname, fetch(acts, node, iname));
          for (std::size_t k = 0; k < g.data.size(); ++k) di.data[k] += g.data[k];
        }
        break;
      }
      case LayerKind::kGlobalAvgPool: {
        const auto& in = fetch(acts, node, node.inputs[0]);
        TensorT<T>& din = grad_into(node.inputs[0], in);
        const T inv = static_cast<T>(1.0 / (static_cast<double>(in.dim(2)) * in.dim(3)));
        for (int n = 0; n < in.dim(0); ++n)
          for (int c = 0; c < in.dim(1); ++c) {
            const T gv = g.at2(n, c) * inv;
            for (int y = 0; y < in.dim(2); ++y)
              for (int x = 0; x < in.dim(3); ++x) din.at4(n, c, y, x) += gv;
          }
        break;
      }
      case LayerKind::kSoftmax: {
        const auto& y = fetch(acts, node, node.name);
        TensorT<T>& din = grad_into(node.inputs[0], fetch(acts, node, node.inputs[0]));
        softmax_backward(y, g, din);
        break;
      }
    }
  }

  for (const auto& name : net.input_names) {
    auto git = grads.find(name);
    out.input_grads[name] = git != grads.end()
                                ? std::move(git->second)
                                : (acts.count(name) ? acts.at(name).zeros_like() : TensorT<T>());
  }
  return out;
}

template <typename T>
GradientsT<T> backward(const NetworkT<T>& net, const ActsT<T>& acts,
                       const std::string& out_node, const TensorT<T>& loss_grad) {
  ActsT<T> seeds;
  seeds[out_node] = loss_grad;
  return backward(net, acts, seeds);
}

// ---- Adam ----

template <typename T>
void AdamStateT<T>::init_like(const std::vector<NamedParamT<T>>& params,
                              double learning_rate) {
  lr = learning_rate;
  t = 0;
  m.clear();
  v.clear();
  for (const auto& p : params) {
    m.push_back(p.value.zeros_like());
    v.push_back(p.value.zeros_like());
  }
}

template <typename T>
void adam_step(std::vector<NamedParamT<T>>& params,
               const std::vector<NamedParamT<T>>& grads, AdamStateT<T>& state) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ShapeError("adam_step: parameter/gradient/state count mismatch");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].value;
    const auto& g = grads[i].value;
    if (!p.same_shape(g)) throw ShapeError("adam_step: gradient shape mismatch on " + params[i].name);
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < p.data.size(); ++k) {
      const double gk = static_cast<double>(g.data[k]);
      const double mk = state.beta1 * static_cast<double>(m.data[k]) + (1.0 - state.beta1) * gk;
      const double vk = state.beta2 * static_cast<double>(v.data[k]) + (1.0 - state.beta2) * gk * gk;
      m.data[k] = static_cast<T>(mk);
      v.data[k] = static_cast<T>(vk);
      const double mhat = mk / bc1;
      const double vhat = vk / bc2;
      p.data[k] = static_cast<T>(static_cast<double>(p.data[k]) -
                                 state.lr * mhat / (std::sqrt(vhat) + state.eps_hat));
    }
  }
}

// ---- probes ----

double spectral_norm(const Eigen::MatrixXd& a, int iters, std::uint64_t seed) {
  if (iters < 1) throw ValidationError("spectral_norm: iters must be >= 1");
  if (a.size() == 0) return 0.0;
  if (a.cwiseAbs().maxCoeff() == 0.0) return 0.0;
  Rng rng(seed ^ 0x5eedULL);
  Eigen::VectorXd v(a.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
  double nv = v.norm();
  if (nv == 0.0) v.setOnes(), nv = v.norm();
  v /= nv;
  double sigma = 0.0;
  for (int it = 0; it < iters; ++it) {
    Eigen::VectorXd u = a * v;
    sigma = u.norm();
    if (sigma == 0.0) return 0.0;  // v in the null space; rank-deficient corner
    Eigen::VectorXd w = a.transpose() * u;
    const double nw = w.norm();
    if (nw == 0.0) break;
    v = w / nw;
  }
  return sigma;
}

template <typename T>
Eigen::MatrixXd matrixize(const TensorT<T>& param) {
  const auto& s = param.shape;
  Eigen::Index rows = 1, cols = 1;
  if (s.size() == 1) {
    rows = 1;
    cols = s[0];
  } else {
    rows = s[0];
    cols = static_cast<Eigen::Index>(param.numel()) / s[0];
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = static_cast<double>(param.data[static_cast<std::size_t>(r) * cols + c]);
  return m;
}

template <typename T>
GradCheckReport grad_check(
    const NetworkT<T>& net, const ActsT<T>& inputs, const std::string& out_node,
    const ScalarLoss& loss, double tol, double h, int max_coords, std::uint64_t seed,
    const std::function<void(std::vector<NamedParamT<T>>&)>& tamper) {
  // analytic gradients through the network as given
  ActsT<T> acts = forward(net, inputs);
  const TensorD out_d = acts.at(out_node).template cast<double>();
  const TensorT<T> seed_grad = loss.grad(out_d).template cast<T>();
  GradientsT<T> an = backward(net, acts, out_node, seed_grad);
  if (tamper) tamper(an.param_grads);

  // finite differences against a double-precision copy
  NetworkD dnet = net.template cast<double>();
  ActsT<double> dinputs;
  for (const auto& [k, v] : inputs) dinputs[k] = v.template cast<double>();

  std::size_t total = 0;
  for (const auto& p : net.params) total += p.value.numel();
  Rng rng(seed);

  GradCheckReport rep;
  const int coords =
      static_cast<int>(std::min<std::size_t>(total, static_cast<std::size_t>(max_coords)));
  for (int c = 0; c < coords; ++c) {
    std::size_t flat = static_cast<std::size_t>(rng.below(total));
    std::size_t pi = 0;
    while (flat >= net.params[pi].value.numel()) {
      flat -= net.params[pi].value.numel();
      ++pi;
    }
    double& slot = dnet.params[pi].value.data[flat];
    const double orig = slot;
    slot = orig + h;
    const double fp = loss.value(forward(dnet, dinputs).at(out_node));
    slot = orig - h;
    const double fm = loss.value(forward(dnet, dinputs).at(out_node));
    slot = orig;
    const double fd = (fp - fm) / (2.0 * h);
    const double a = static_cast<double>(an.param_grads[pi].value.data[flat]);
    const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8});
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_param = net.params[pi].name;
      rep.worst_index = static_cast<int>(flat);
    }
  }
  rep.passed = rep.max_rel_err <= tol;
  return rep;
}

// explicit instantiations
template struct NetworkT<float>;
template struct NetworkT<double>;
template struct AdamStateT<float>;
template struct AdamStateT<double>;
template ActsT<float> forward(const NetworkT<float>&, const ActsT<float>&);
template ActsT<double> forward(const NetworkT<double>&, const ActsT<double>&);
template GradientsT<float> backward(const NetworkT<float>&, const ActsT<float>&,
                                    const ActsT<float>&);
template GradientsT<double> backward(const NetworkT<double>&, const ActsT<double>&,
                                     const ActsT<double>&);
template GradientsT<float> backward(const NetworkT<float>&, const ActsT<float>&,
                                    const std::string&, const TensorT<float>&);
template GradientsT<double> backward(const NetworkT<double>&, const ActsT<double>&,
                                     const std::string&, const TensorT<double>&);
template void adam_step(std::vector<NamedParamT<float>>&,
                        const std::vector<NamedParamT<float>>&, AdamStateT<float>&);
template void adam_step(std::vector<NamedParamT<double>>&,
                        const std::vector<NamedParamT<double>>&, AdamStateT<double>&);
template Eigen::MatrixXd matrixize(const TensorT<float>&);
template Eigen::MatrixXd matrixize(const TensorT<double>&);
template TensorT<float> bilinear_resize(const TensorT<float>&, int, int);
template TensorT<double> bilinear_resize(const TensorT<double>&, int, int);
template void bilinear_resize_backward(const TensorT<float>&, const TensorT<float>&,
                                       TensorT<float>&);
template void bilinear_resize_backward(const TensorT<double>&, const TensorT<double>&,
                                       TensorT<double>&);
template GradCheckReport grad_check(
    const NetworkT<float>&, const ActsT<float>&, const std::string&, const ScalarLoss&,
    double, double, int, std::uint64_t,
    const std::function<void(std::vector<NamedParamT<float>>&)>&);
template GradCheckReport grad_check(
    const NetworkT<double>&, const ActsT<double>&, const std::string&, const ScalarLoss&,
    double, double, int, std::uint64_t,
    const std::function<void(std::vector<NamedParamT<double>>&)>&);

}  // namespace sinkdem::nn
