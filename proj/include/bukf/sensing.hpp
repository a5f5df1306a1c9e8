#pragma once

#include "bukf/dynamics.hpp"
#include "bukf/numerics.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace bukf {

/// Stacked noisy sensor reading z = [q (renormalized); ω] ∈ ℝ⁷ at time t.
struct Measurement {
  Eigen::Matrix<double, 7, 1> z = Eigen::Matrix<double, 7, 1>::Zero();
  double t = 0.0;

  Eigen::Vector4d quat() const { return z.head<4>(); }
  Eigen::Vector3d omega() const { return z.tail<3>(); }
};

enum class Split { Train, Val, Test };

std::string split_to_string(Split s);
Split split_from_string(const std::string& s);

/// One surrogate-inertia training sample with its reliability score.
struct TrainingSample {
  int id = 0;
  double Jx = 0.0, Jy = 0.0, Jz = 0.0;
  double e = 0.0;       // trajectory MSE against the measured reference, (rad/s)²
  double zscore = 0.0;  // (e - μ_e)/σ_e over the dataset
  int label = 0;        // 1 ⇔ e > median(e)
  double weight = 0.0;  // reliability weight, sums to 1 over the dataset
  Split split = Split::Train;

  Eigen::Vector3d inertia_vec() const { return {Jx, Jy, Jz}; }
};

struct WeightedDataset {
  std::vector<TrainingSample> samples;
  std::uint64_t seed = 0;
  double sigma = 0.0;  // injected gyro-noise std, rad/s
  int snapshots = 0;   // M

  std::vector<int> indices_of(Split s) const;
};

/// Adds σ_quat²I₄ Gaussian noise to q then renormalizes, σ_gyro²I₃ noise to ω,
/// and stacks into z ∈ ℝ⁷.
Measurement measure(const RigidBodyState& x, double sigma_quat, double sigma_gyro,
                    RngStream& rng, double t = 0.0);

/// Jx ~ N(100,10²), Jy ~ N(80,8²), Jz ~ N(70,7²); draws failing the inertia
/// invariants are rejected and redrawn. Throws after 1000 consecutive
/// rejections of a single slot.
std::vector<InertiaTriple> sample_inertias(int n, RngStream& rng);

/// Discrete mean-squared error (1/M)·Σₖ‖ω_s(tₖ)−ω_m(tₖ)‖².
double reliability_error(const std::vector<Eigen::Vector3d>& omega_s,
                         const std::vector<Eigen::Vector3d>& omega_m);

/// Full training-data pipeline: reference trajectory from the nominal inertia
/// over [0,30] s at Δt = 0.05 (M = 600 snapshots), noise injection at level
/// sigma, n surrogate trajectories, reliability scores, z-scores, median-split
/// labels, and train/val/test assignment (val = lowest-error 10%, test = a
/// random 20% of the rest).
WeightedDataset build_dataset(int n, double sigma, RngStream& rng);

/// Same pipeline for caller-supplied surrogate inertias.
WeightedDataset dataset_from_inertias(const std::vector<InertiaTriple>& inertias, double sigma,
                                      RngStream& rng);

void save_dataset_json(const WeightedDataset& ds, const std::string& path,
                       std::uint64_t config_hash = 0);
WeightedDataset load_dataset_json(const std::string& path);

}  // namespace bukf
