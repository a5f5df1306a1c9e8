#pragma once

#include "bukf/numerics.hpp"

#include <string>
#include <vector>

namespace bukf {

/// Principal moments of inertia (diagonal inertia matrix), kg·m².
/// Construction enforces positivity and the triangle inequalities.
struct InertiaTriple {
  double Jx;
  double Jy;
  double Jz;

  InertiaTriple(double jx, double jy, double jz);

  Eigen::Vector3d vec() const { return {Jx, Jy, Jz}; }
  static bool valid(double jx, double jy, double jz);
  static InertiaTriple from_vec(const Eigen::Vector3d& v) { return {v[0], v[1], v[2]}; }
};

/// Nominal ("true") spacecraft inertia used throughout the experiments.
InertiaTriple nominal_inertia();  // diag(100, 80, 70) kg·m²

/// Attitude quaternion (inertial-to-body) plus body angular velocity.
struct RigidBodyState {
  Quaternion q;
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();
};

enum class TorqueRegime { Zero, Full, Windowed, Persistent };

/// Torque excitation, N·m, evaluable at any t ≥ 0.
///  - Zero: no torque.
///  - Full: continuous multi-frequency profile on all t.
///  - Windowed: the full profile inside 1 s pulses at [200,201), [250,251), [300,301) s.
///  - Persistent: the full profile inside fourteen 1 s bursts starting every 25 s
///    from 50 s through 375 s.
struct TorqueProfile {
  TorqueRegime regime = TorqueRegime::Zero;
};

Eigen::Vector3d torque_at(const TorqueProfile& profile, double t);

TorqueRegime regime_from_string(const std::string& name);
std::string regime_to_string(TorqueRegime regime);

/// Body-frame angular acceleration J⁻¹(−ω×(Jω)+τ).
Eigen::Vector3d euler_rhs(const InertiaTriple& J, const Eigen::Vector3d& omega,
                          const Eigen::Vector3d& tau);

/// Quaternion kinematics ½ q ⊗ [0, ω].
Eigen::Vector4d quat_rhs(const Quaternion& q, const Eigen::Vector3d& omega);

/// RK4 trajectory of the coupled (q, ω) system with torque evaluated at the
/// RK4 stage times; q renormalized after every step. Returns steps+1 states
/// including x0.
std::vector<RigidBodyState> propagate(const InertiaTriple& J, const RigidBodyState& x0,
                                      const TorqueProfile& profile, double dt, int steps);

/// One step of the discrete-time process model: RK4 with the torque held
/// constant over the step. This is the map the filters assume.
RigidBodyState step_zoh(const InertiaTriple& J, const RigidBodyState& x,
                        const Eigen::Vector3d& tau, double dt);

/// Columns: t, qw, qx, qy, qz, wx, wy, wz.
void write_trajectory_csv(const std::string& path, const std::vector<RigidBodyState>& traj,
                          double dt);

}  // namespace bukf
