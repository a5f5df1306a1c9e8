#pragma once

#include "bukf/dynamics.hpp"
#include "bukf/numerics.hpp"

#include <functional>

namespace bukf::filters {

/// Raised when an ensemble loses all spread while noise is still active.
struct EnsembleCollapseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Van der Merwe scaled unscented transform parameters.
struct UtParams {
  double alpha = 1e-3;
  double beta = 2.0;
  double kappa = 0.0;

  double scale(int n) const { return alpha * alpha * (n + kappa); }  // n + λ
  double lambda(int n) const { return scale(n) - n; }
  Eigen::VectorXd mean_weights(int n) const;
  Eigen::VectorXd cov_weights(int n) const;
};

struct FilterBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// One-step discrete process map f(x, τ, Δt).
using ProcessFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::Vector3d&,
                                                double)>;
using ObserveFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
/// Optional post-step fixup applied to state means (e.g. quaternion renorm).
using ConditionFn = std::function<void(Eigen::VectorXd&)>;

/// X⁽⁰⁾ = mean, X⁽ⁱ⁾ = mean ± column i of chol((n+λ)·cov); n × (2n+1).
/// A failed factorization is retried once after symmetrize_jitter.
Eigen::MatrixXd sigma_points(const FilterBelief& belief, const UtParams& ut);

struct Prediction {
  FilterBelief belief;
  Eigen::MatrixXd sigma;  // propagated sigma points
};

Prediction ukf_predict(const FilterBelief& belief, const UtParams& ut, const ProcessFn& process,
                       const Eigen::Vector3d& tau, double dt, const Eigen::MatrixXd& Q,
                       const ConditionFn& condition = nullptr);

FilterBelief ukf_update(const Prediction& pred, const Eigen::VectorXd& z, const ObserveFn& h,
                        const Eigen::MatrixXd& R, const UtParams& ut,
                        const ConditionFn& condition = nullptr,
                        double* innovation_norm = nullptr);

/// Standard EKF step with central finite-difference Jacobians
/// (per-component steps of 1e-6 relative), same conditioning as the UKF.
FilterBelief ekf_step(const FilterBelief& belief, const Eigen::VectorXd& z,
                      const ProcessFn& process, const ObserveFn& h, const Eigen::Vector3d& tau,
                      double dt, const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                      const ConditionFn& condition = nullptr,
                      double* innovation_norm = nullptr);

/// Stochastic EnKF with perturbed observations; ensemble columns are members.
Eigen::MatrixXd enkf_step(const Eigen::MatrixXd& ensemble, const Eigen::VectorXd& z,
                          const ProcessFn& process, const ObserveFn& h,
                          const Eigen::Vector3d& tau, double dt, const Eigen::MatrixXd& Q,
                          const Eigen::MatrixXd& R, RngStream& rng,
                          const ConditionFn& condition = nullptr,
                          double* innovation_norm = nullptr);

/// Elementwise log-moment coordinates θ = (ln Jx, ln Jy, ln Jz).
Eigen::Vector3d theta_map(const InertiaTriple& J);
InertiaTriple theta_unmap(const Eigen::Vector3d& theta);

/// Maps a physical-space inertia prior through theta_map by the unscented
/// transform; the covariance image is jitter-floored to stay PD.
void map_prior_to_theta(const Eigen::Vector3d& mu_phys, const Eigen::Matrix3d& cov_phys,
                        const UtParams& ut, Eigen::Vector3d* mu_theta,
                        Eigen::Matrix3d* cov_theta);

// -------- augmented spacecraft model: x = [q(4); ω(3); θ(3)] --------

inline constexpr int kAugDim = 10;
inline constexpr int kMeasDim = 7;

/// RK4 step of (q, ω) with J = exp(θ) held per point; θ carries through
/// unchanged. The quaternion block is not renormalized inside the map.
ProcessFn spacecraft_process();

/// h(x) = [q; ω].
ObserveFn spacecraft_observe();

/// Renormalizes the quaternion block of a mean state.
ConditionFn quat_renorm_condition();

}  // namespace bukf::filters
