#pragma once

#include "bukf/numerics.hpp"

#include <Eigen/Dense>

#include <vector>

namespace bukf::testing {

/// Closed-form linear Kalman filter, the oracle the nonlinear filters are
/// checked against. Deliberately independent of the filters module.
struct KalmanOracle {
  Eigen::MatrixXd A, H, Q, R;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  void step(const Eigen::VectorXd& z) {
    mean = A * mean;
    cov = A * cov * A.transpose() + Q;
    const Eigen::MatrixXd S = H * cov * H.transpose() + R;
    const Eigen::MatrixXd K = cov * H.transpose() * S.inverse();
    mean += K * (z - H * mean);
    cov = cov - K * S * K.transpose();
    cov = 0.5 * (cov + cov.transpose());
  }
};

/// Random symmetric positive definite matrix with eigenvalues in [lo, hi].
inline Eigen::MatrixXd random_spd(int n, RngStream& rng, double lo = 0.5, double hi = 2.0) {
  Eigen::MatrixXd M(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) M(r, c) = rng.normal();
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(M);
  const Eigen::MatrixXd Qm = qr.householderQ();
  Eigen::VectorXd eig(n);
  for (int i = 0; i < n; ++i) eig[i] = lo + (hi - lo) * rng.uniform();
  return Qm * eig.asDiagonal() * Qm.transpose();
}

inline Eigen::VectorXd random_vec(int n, RngStream& rng) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

/// A well-behaved random 4-state linear-Gaussian system for filter oracles.
struct LinearSystem {
  Eigen::MatrixXd A, H, Q, R;
  Eigen::VectorXd x0;
  Eigen::MatrixXd P0;

  static LinearSystem make(RngStream& rng, int n = 4, int m = 2) {
    LinearSystem sys;
    Eigen::MatrixXd A(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) A(r, c) = 0.4 * rng.normal();
    // Scale to spectral radius 0.9 so the filter reaches a steady state.
    const double rho = A.eigenvalues().cwiseAbs().maxCoeff();
    sys.A = A * (0.9 / rho);
    sys.H.resize(m, n);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < n; ++c) sys.H(r, c) = rng.normal();
    sys.Q = random_spd(n, rng, 0.01, 0.05);
    sys.R = random_spd(m, rng, 0.05, 0.2);
    sys.x0 = random_vec(n, rng);
    sys.P0 = random_spd(n, rng, 0.2, 1.0);
    return sys;
  }

  /// Simulated trajectory with process and measurement noise.
  std::vector<Eigen::VectorXd> simulate_measurements(int steps, RngStream& rng,
                                                     Eigen::VectorXd* final_state = nullptr) {
    std::vector<Eigen::VectorXd> zs;
    Eigen::VectorXd x = x0;
    for (int k = 0; k < steps; ++k) {
      x = A * x + gaussian_sample(rng, Eigen::VectorXd::Zero(x.size()), Q);
      zs.push_back(H * x + gaussian_sample(rng, Eigen::VectorXd::Zero(H.rows()), R));
    }
    if (final_state != nullptr) *final_state = x;
    return zs;
  }
};

}  // namespace bukf::testing
