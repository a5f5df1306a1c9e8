#pragma once

#include "bukf/filters.hpp"
#include "bukf/sensing.hpp"
#include "bukf/wfm.hpp"

#include <optional>
#include <vector>

namespace bukf::boosted {

/// Generative pseudo-measurement of the parameter block: z_vs = μ_wfm with
/// noise covariance R_vs = Σ_wfm, applied on a step schedule.
struct VirtualSensor {
  Eigen::Vector3d z_vs = Eigen::Vector3d::Zero();
  Eigen::Matrix3d R_vs = Eigen::Matrix3d::Identity();
  long period = 1;
  long start = 0;

  bool active_at(long step) const {
    return period > 0 && step >= start && (step - start) % period == 0;
  }

  static VirtualSensor from_summary(const wfm::GaussianBelief& summary, long period = 1,
                                    long start = 0);
};

/// Filter initialization and noise settings. Defaults reproduce the reference
/// configuration: prior inertia mean (140, 20, 36) with covariance
/// diag(1700, 20, 120), x̂₀ = [1,0,0,0, 0.1,0.1,0.1, θ(prior)], P₀ =
/// diag(1e-3·I₄, 1e-2·I₃, Σ_θ), Q₀ = 1e-7·I₁₀, R₀ = 2.5e-5·I₇ and scaled
/// sigma-point parameters (α, β, κ) = (0.001, 2, 0).
struct BoostedConfig {
  Eigen::Vector3d prior_mean{140.0, 20.0, 36.0};
  Eigen::Vector3d prior_var{1700.0, 20.0, 120.0};  // diagonal of Σ, kg²·m⁴
  Quaternion q0{1.0, 0.0, 0.0, 0.0};
  Eigen::Vector3d omega0{0.1, 0.1, 0.1};
  double quat_var0 = 1e-3;
  double rate_var0 = 1e-2;
  double process_var = 1e-7;
  double meas_var = 2.5e-5;
  filters::UtParams ut{};
  double horizon = 400.0;
  double dt = 0.01;
  bool recenter_log_coords = false;  // reserved hook, currently a no-op
  bool check_pd_every_step = false;

  filters::FilterBelief initial_belief() const;
  Eigen::MatrixXd process_noise() const;      // Q, 10×10
  Eigen::MatrixXd measurement_noise() const;  // R, 7×7
  long steps() const { return static_cast<long>(horizon / dt + 0.5); }
};

/// Parameter observation: exp(θ block), kg·m².
Eigen::Vector3d h_vs(const Eigen::VectorXd& x);

/// Second Kalman update against the pseudo-measurement, with sigma points
/// rebuilt about the posterior. A schedule-skipped step returns the input
/// unchanged. h_override replaces the exp(θ) observation (tests only).
filters::FilterBelief virtual_update(const filters::FilterBelief& belief,
                                     const VirtualSensor& vs, const filters::UtParams& ut,
                                     long step = 0,
                                     const filters::ObserveFn& h_override = nullptr);

struct TraceRow {
  double t = 0.0;
  Eigen::VectorXd mean;       // 10
  Eigen::VectorXd std;        // 10, marginal
  Eigen::Vector3d J_est;      // exp(θ mean)
  double innovation_norm = 0.0;
};

struct RunTrace {
  std::vector<TraceRow> rows;
  filters::FilterBelief final_belief;
};

/// Full loop: predict with the regime torque, correct with z_k, apply the
/// virtual-sensor correction on its schedule. With vs disabled (nullopt) this
/// is exactly the plain UKF.
RunTrace run_boosted(const BoostedConfig& cfg, const std::optional<VirtualSensor>& vs,
                     const std::vector<Measurement>& measurements,
                     const TorqueProfile& torque);

void write_trace_csv(const std::string& path, const RunTrace& trace);

}  // namespace bukf::boosted
