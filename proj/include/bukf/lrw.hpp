#pragma once

#include "bukf/neuralnet.hpp"
#include "bukf/sensing.hpp"

#include <string>
#include <vector>

namespace bukf::lrw {

/// One supervised example for the reliability classifier.
struct LabeledExample {
  Eigen::VectorXd x;
  int y = 0;
};

struct LrwConfig {
  int epochs = 200;
  double meta_lr = 3e-4;      // η_Υ, used for both the inner probe and the outer step
  double baseline_lr = 1e-4;  // fixed-lr reference run
  int batch_size = 32;
  std::vector<int> hidden = {64, 32};
};

/// One SGD step on the perturbation-weighted loss Σ εₙ·ℓₙ(Υ).
nn::MlpParams inner_step(const nn::MlpParams& params, const std::vector<LabeledExample>& batch,
                         const Eigen::VectorXd& eps, double lr);

/// Unweighted mean BCE loss over a batch.
double mean_loss(const nn::MlpParams& params, const std::vector<LabeledExample>& batch);

/// Meta-gradients uₙ = −∂L_val(Υ'(ε))/∂εₙ at ε = 0, evaluated in closed form
/// as η·⟨∇_Υ L_val(Υ), ∇_Υ ℓₙ(Υ)⟩ (the inner update vanishes at ε = 0).
Eigen::VectorXd meta_gradients(const nn::MlpParams& params,
                               const std::vector<LabeledExample>& train_batch,
                               const std::vector<LabeledExample>& val_batch, double lr);

/// Clip negatives to zero and ℓ₁-normalize; uniform 1/|B| when the sum vanishes.
Eigen::VectorXd normalize_weights(const Eigen::VectorXd& u);

struct LrwResult {
  /// Indexed by dataset sample id; zero for samples outside the train split.
  std::vector<double> weight;      // per-sample means, renormalized over the train split
  std::vector<double> raw_weight;  // per-sample means of the clipped meta-gradients
  nn::MlpParams classifier;
  std::vector<double> train_accuracy;  // per epoch
  std::vector<double> test_accuracy;   // per epoch
  double final_test_accuracy = 0.0;
};

/// Algorithm: per batch an inner probe, meta-gradient, weight normalization,
/// and re-weighted outer step; per-sample weights averaged across epochs.
/// Batch composition is keyed on sample ids so results are invariant to
/// dataset reordering under the same seed.
LrwResult lrw_train(const WeightedDataset& dataset, const LrwConfig& cfg, RngStream& rng);

/// Fixed-learning-rate unweighted training of the same classifier (reference).
struct BaselineResult {
  nn::MlpParams classifier;
  std::vector<double> train_accuracy;
  std::vector<double> test_accuracy;
  double final_test_accuracy = 0.0;
};
BaselineResult baseline_train(const WeightedDataset& dataset, const LrwConfig& cfg,
                              RngStream& rng);

/// Copies the learned weights into dataset.samples[i].weight (normalized to
/// sum to 1 over the train split; other splits get weight 0).
void apply_weights(WeightedDataset& dataset, const LrwResult& result);

void save_weight_table(const WeightedDataset& dataset, const LrwResult& result,
                       const std::string& path, std::uint64_t seed,
                       std::uint64_t config_hash = 0);

}  // namespace bukf::lrw
