#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sinkdem/tensor.hpp"

namespace sinkdem::nn {

// Layer vocabulary. Deliberately small: what the generator/discriminator
// stacks need, no batch normalization.
enum class LayerKind {
  kConv3x3,
  kConv1x1,
  kDense,
  kLeakyRelu,
  kRelu,
  kSigmoid,
  kUpsampleBilinear,
  kConcat,          // channel axis
  kElementwiseMul,  // second operand may have 1 channel (broadcast)
  kAdd,
  kGlobalAvgPool,
  kSoftmax,  // spatial positions for 4-D input, features for 2-D
};

const char* layer_kind_name(LayerKind k);

struct LayerSpec {
  LayerKind kind{};
  std::string name;
  std::vector<std::string> inputs;
  int in_channels = 0;
  int out_channels = 0;
  int stride = 1;
  int units_in = 0;
  int units_out = 0;
  float slope = 0.0f;  // leaky_relu
  int factor = 2;      // upsample_bilinear
  bool bias = true;
};

template <typename T>
struct NamedParamT {
  std::string name;
  TensorT<T> value;
};

template <typename T>
using ActsT = std::map<std::string, TensorT<T>>;

// DAG of LayerSpec nodes over named inputs. Nodes are stored in insertion
// order, which the builder guarantees is topological (a node may only read
// names that already exist). Same seed + same spec -> bit-identical params.
template <typename T>
struct NetworkT {
  std::vector<LayerSpec> nodes;
  std::vector<std::string> input_names;
  std::vector<NamedParamT<T>> params;
  std::uint64_t seed = 0;

  void add_input(const std::string& name);

  // builder helpers; each validates references and registers parameters
  void conv3x3(const std::string& name, const std::string& in, int in_ch, int out_ch,
               int stride = 1, bool bias = true);
  void conv1x1(const std::string& name, const std::string& in, int in_ch, int out_ch,
               bool bias = true);
  void dense(const std::string& name, const std::string& in, int units_in, int units_out,
             bool bias = true);
  void leaky_relu(const std::string& name, const std::string& in, float slope);
  void relu(const std::string& name, const std::string& in);
  void sigmoid(const std::string& name, const std::string& in);
  void upsample_bilinear(const std::string& name, const std::string& in, int factor);
  void concat(const std::string& name, const std::vector<std::string>& ins);
  void elementwise_mul(const std::string& name, const std::string& a, const std::string& b);
  void add(const std::string& name, const std::vector<std::string>& ins);
  void global_avg_pool(const std::string& name, const std::string& in);
  void softmax(const std::string& name, const std::string& in);

  // He fan-in normal init for conv/dense weights, zero biases
  void init(std::uint64_t seed_value);

  int param_index(const std::string& name) const;  // -1 when missing
  const TensorT<T>& param(const std::string& name) const;
  TensorT<T>& param(const std::string& name);

  std::uint64_t param_hash() const;

  bool has_name(const std::string& name) const;

  template <typename U>
  NetworkT<U> cast() const {
    NetworkT<U> out;
    out.nodes = nodes;
    out.input_names = input_names;
    out.seed = seed;
    for (const auto& p : params) out.params.push_back({p.name, p.value.template cast<U>()});
    return out;
  }

 private:
  void check_new_name(const std::string& name) const;
  void check_ref(const std::string& node, const std::string& ref) const;
  void register_param(const std::string& name, std::vector<int> shape);
};

using Network = NetworkT<float>;
using NetworkD = NetworkT<double>;

// Runs every node once; the returned map holds inputs plus every node's
// activation under its node name (declared taps included).
template <typename T>
ActsT<T> forward(const NetworkT<T>& net, const ActsT<T>& inputs);

template <typename T>
struct GradientsT {
  std::vector<NamedParamT<T>> param_grads;  // aligned with net.params
  ActsT<T> input_grads;
};

// Reverse-mode pass seeded by gradients on one or more nodes.
template <typename T>
GradientsT<T> backward(const NetworkT<T>& net, const ActsT<T>& acts,
                       const ActsT<T>& seed_grads);

template <typename T>
GradientsT<T> backward(const NetworkT<T>& net, const ActsT<T>& acts,
                       const std::string& out_node, const TensorT<T>& loss_grad);

template <typename T>
struct AdamStateT {
  std::vector<TensorT<T>> m, v;
  long t = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;

  void init_like(const std::vector<NamedParamT<T>>& params, double learning_rate);
};

// Standard bias-corrected Adam update, in place.
template <typename T>
void adam_step(std::vector<NamedParamT<T>>& params,
               const std::vector<NamedParamT<T>>& grads, AdamStateT<T>& state);

// Power-iteration estimate of the largest singular value. Zero matrix -> 0.
double spectral_norm(const Eigen::MatrixXd& a, int iters, std::uint64_t seed);

// Standalone bilinear resize of a 4-D tensor to an arbitrary spatial size,
// plus its adjoint; the upsample layer and the attention-tap resizing share
// this path.
template <typename T>
TensorT<T> bilinear_resize(const TensorT<T>& in, int out_h, int out_w);

template <typename T>
void bilinear_resize_backward(const TensorT<T>& in_like, const TensorT<T>& dout,
                              TensorT<T>& din);

// A parameter tensor as an operator: conv (out, in*k*k), dense (out, in),
// bias (1, n).
template <typename T>
Eigen::MatrixXd matrixize(const TensorT<T>& param);

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int worst_index = -1;
  bool passed = false;
};

// Scalar loss on the output node, defined on doubles so the finite-difference
// reference can always be evaluated at full precision.
struct ScalarLoss {
  std::function<double(const TensorD&)> value;
  std::function<TensorD(const TensorD&)> grad;
};

// Central-difference check of backward on up to max_coords sampled parameter
// coordinates. The reference run is a double-precision copy of the network,
// so the comparison measures the backward pass, not FD cancellation noise.
// tamper, when set, perturbs the analytic gradients before the comparison
// (used to prove the check flags faults).
template <typename T>
GradCheckReport grad_check(
    const NetworkT<T>& net, const ActsT<T>& inputs, const std::string& out_node,
    const ScalarLoss& loss, double tol, double h, int max_coords,
    std::uint64_t seed,
    const std::function<void(std::vector<NamedParamT<T>>&)>& tamper = nullptr);

}  // namespace sinkdem::nn
