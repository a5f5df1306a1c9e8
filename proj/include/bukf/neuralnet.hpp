#pragma once

#include "bukf/numerics.hpp"

#include <json.hpp>

#include <vector>

namespace bukf::nn {

enum class Activation { Linear, ReLU, Sigmoid };

std::string activation_to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct Layer {
  Eigen::MatrixXd W;  // out × in
  Eigen::VectorXd b;
  Activation act = Activation::Linear;
};

/// Fully-connected network y = Lₖ(...L₁(x)). Hidden layers use ReLU and the
/// output layer is linear unless configured otherwise.
struct MlpParams {
  std::vector<Layer> layers;

  int input_dim() const;
  int output_dim() const;
};

/// Shape-congruent per-layer gradient buffers.
struct Gradients {
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::VectorXd> db;

  static Gradients zeros_like(const MlpParams& p);
  void set_zero();
  Gradients& operator+=(const Gradients& o);
  void scale(double c);
  double dot(const Gradients& o) const;
  bool all_finite() const;
};

/// He-style uniform init scaled by fan-in, biases zero; hidden ReLU, output linear.
MlpParams make_mlp(int input, const std::vector<int>& hidden, int output, RngStream& rng);

Eigen::VectorXd forward(const MlpParams& p, const Eigen::VectorXd& x);
/// Batched forward; columns are samples.
Eigen::MatrixXd forward(const MlpParams& p, const Eigen::MatrixXd& X);

struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;  // inputs[l] feeds layer l
  std::vector<Eigen::MatrixXd> pre;     // pre-activation of layer l
};

Eigen::MatrixXd forward_cached(const MlpParams& p, const Eigen::MatrixXd& X, ForwardCache& cache);

/// Exact reverse-mode gradients of forward composed with the upstream linear
/// functional, summed over batch columns. Optionally also returns d/d(input).
Gradients backward(const MlpParams& p, const ForwardCache& cache, const Eigen::MatrixXd& upstream,
                   Eigen::MatrixXd* input_grad = nullptr);
/// Convenience overload that runs the forward pass internally.
Gradients backward(const MlpParams& p, const Eigen::MatrixXd& input,
                   const Eigen::MatrixXd& upstream);

/// Concatenation of (sin(2π·2ᵏ·s), cos(2π·2ᵏ·s)) for k = 0..pairs−1.
/// s is reduced modulo 1 so the encoding is exactly 1-periodic.
Eigen::VectorXd time_encoding(double s, int pairs);

struct BceLoss {
  double loss;
  double dlogit;  // σ(logit) − y
};

/// Numerically stable binary cross-entropy on a logit.
BceLoss bce_loss(double logit, int label);

void sgd_step(MlpParams& p, const Gradients& g, double lr);

struct AdamState {
  std::vector<Eigen::MatrixXd> mW, vW;
  std::vector<Eigen::VectorXd> mb, vb;
  long step = 0;

  static AdamState zeros_like(const MlpParams& p);
};

/// Adam with β₁ = 0.9, β₂ = 0.999, ε = 1e-8 and bias correction.
void adam_step(MlpParams& p, const Gradients& g, double lr, AdamState& state);

nlohmann::json checkpoint_json(const MlpParams& p, std::uint64_t seed, long step);
MlpParams mlp_from_checkpoint(const nlohmann::json& j);

}  // namespace bukf::nn
