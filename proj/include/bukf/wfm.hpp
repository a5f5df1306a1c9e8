#pragma once

#include "bukf/neuralnet.hpp"
#include "bukf/sensing.hpp"

#include <string>

namespace bukf::wfm {

/// Raised when a minibatch carries no usable weight mass.
struct DegenerateBatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Parametric vector field v(s, x; Θ) with input [x ‖ time_encoding(s)].
struct FlowField {
  nn::MlpParams net;
  int d = 0;
  double eps_min = 1e-3;
  int encoding_pairs = 8;

  Eigen::VectorXd velocity(double s, const Eigen::VectorXd& x) const;
  /// Batched; columns are states, all advanced at the same s.
  Eigen::MatrixXd velocity(double s, const Eigen::MatrixXd& X) const;
};

struct FlowTrainConfig {
  int epochs = 10000;
  double lr = 1e-5;  // Adam
  double eps_min = 1e-3;
  int batch_size = 256;
  int ode_steps = 100;
  std::vector<int> hidden = {256, 256, 256, 256, 256};
  int encoding_pairs = 8;
};

struct GaussianBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// OT path point (1−(1−ε_min)s)·x0 + s·x1.
Eigen::VectorXd ot_interpolate(const Eigen::VectorXd& x0, const Eigen::VectorXd& x1, double s,
                               double eps_min);

/// Conditional OT target velocity along the path — the exact s-derivative of
/// ot_interpolate, evaluated in the Eulerian form
/// (x1 − (1−ε_min)·x_s)/(1 − (1−ε_min)·s) at x_s on the path.
Eigen::VectorXd target_velocity(const Eigen::VectorXd& x0, const Eigen::VectorXd& x1, double s,
                                double eps_min);

/// One realized minibatch of (x0, x1, s) triplets; columns are elements.
struct FlowBatch {
  Eigen::MatrixXd x0;
  Eigen::MatrixXd x1;
  Eigen::VectorXd s;
};

struct LossGrad {
  double loss = 0.0;
  nn::Gradients grads;
};

/// Weight-normalized regression loss Σ wⱼ‖v−u‖² / Σ wⱼ with its gradients.
LossGrad wfm_loss(const FlowField& field, const FlowBatch& batch, const Eigen::VectorXd& weights);

/// Trains a flow on weighted samples X (columns) by Adam over minibatches of
/// fresh prior draws, weight-proportionally resampled data points and fresh
/// s ~ U[0,1]. The field's output layer starts at zero so the untrained flow
/// is the identity transport.
FlowField wfm_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& weights,
                  const FlowTrainConfig& cfg, RngStream& rng);

/// wfm_fit on the train split of a reliability-weighted dataset.
FlowField wfm_train(const WeightedDataset& dataset, const FlowTrainConfig& cfg, RngStream& rng);

/// Draws x0 ~ N(0, I_d) and integrates dx/ds = v(s, x) by RK4 on [0, 1].
/// Returns d × m samples.
Eigen::MatrixXd wfm_sample(const FlowField& field, int m, RngStream& rng, int ode_steps = 100);

/// Sample mean and unbiased covariance, jitter-floored to stay PD.
GaussianBelief gaussian_summary(const Eigen::MatrixXd& samples);

void save_flow_json(const FlowField& field, const std::string& path, std::uint64_t seed,
                    long step = 0);
FlowField load_flow_json(const std::string& path);

void save_summary_json(const GaussianBelief& summary, int m, const std::string& path,
                       std::uint64_t seed, std::uint64_t config_hash = 0);
GaussianBelief load_summary_json(const std::string& path);

}  // namespace bukf::wfm
