#include "bukf/filters.hpp"

#include <cmath>

namespace bukf::filters {

namespace {

// Solve K·S = Pxz for K with one jittered retry on a failed factorization.
Eigen::MatrixXd gain_solve(const Eigen::MatrixXd& Pxz, const Eigen::MatrixXd& S) {
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) {
    const Eigen::MatrixXd S2 = symmetrize_jitter(S, default_jitter(S));
    llt.compute(S2);
    if (llt.info() != Eigen::Success)
      throw DecompositionError("filters: innovation covariance is not positive definite");
  }
  return llt.solve(Pxz.transpose()).transpose();
}

Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd J(f0.size(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    J.col(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return J;
}

}  // namespace

Eigen::VectorXd UtParams::mean_weights(int n) const {
  const double c = scale(n);
  Eigen::VectorXd w = Eigen::VectorXd::Constant(2 * n + 1, 1.0 / (2.0 * c));
  w[0] = lambda(n) / c;
  return w;
}

Eigen::VectorXd UtParams::cov_weights(int n) const {
  Eigen::VectorXd w = mean_weights(n);
  w[0] += 1.0 - alpha * alpha + beta;
  return w;
}

Eigen::MatrixXd sigma_points(const FilterBelief& belief, const UtParams& ut) {
  const int n = static_cast<int>(belief.mean.size());
  const double c = ut.scale(n);
  Eigen::MatrixXd L;
  try {
    L = cholesky(c * belief.cov);
  } catch (const DecompositionError&) {
    L = cholesky(c * symmetrize_jitter(belief.cov, default_jitter(belief.cov)));
  }
  Eigen::MatrixXd X(n, 2 * n + 1);
  X.col(0) = belief.mean;
  for (int i = 0; i < n; ++i) {
    X.col(1 + i) = belief.mean + L.col(i);
    X.col(1 + n + i) = belief.mean - L.col(i);
  }
  return X;
}

Prediction ukf_predict(const FilterBelief& belief, const UtParams& ut, const ProcessFn& process,
                       const Eigen::Vector3d& tau, double dt, const Eigen::MatrixXd& Q,
                       const ConditionFn& condition) {
  const int n = static_cast<int>(belief.mean.size());
  Eigen::MatrixXd X = sigma_points(belief, ut);
  for (Eigen::Index i = 0; i < X.cols(); ++i) X.col(i) = process(X.col(i), tau, dt);

  const Eigen::VectorXd wm = ut.mean_weights(n);
  const Eigen::VectorXd wc = ut.cov_weights(n);
  Eigen::VectorXd mean = X * wm;
  Eigen::MatrixXd P = Q;
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    const Eigen::VectorXd d = X.col(i) - mean;
    P.noalias() += wc[i] * d * d.transpose();
  }
  if (condition) condition(mean);

  Prediction out;
  out.belief = {std::move(mean), std::move(P)};
  // Redraw about (x̂⁻, P⁻) so the measurement update sees the process noise;
  // reusing the propagated points would drop Q from the innovation covariance.
  out.sigma = sigma_points(out.belief, ut);
  return out;
}

FilterBelief ukf_update(const Prediction& pred, const Eigen::VectorXd& z, const ObserveFn& h,
                        const Eigen::MatrixXd& R, const UtParams& ut,
                        const ConditionFn& condition, double* innovation_norm) {
  const int n = static_cast<int>(pred.belief.mean.size());
  const Eigen::VectorXd wm = ut.mean_weights(n);
  const Eigen::VectorXd wc = ut.cov_weights(n);

  Eigen::MatrixXd Z(z.size(), pred.sigma.cols());
  for (Eigen::Index i = 0; i < pred.sigma.cols(); ++i) Z.col(i) = h(pred.sigma.col(i));
  if (Z.rows() != R.rows()) throw DimensionError("ukf_update: measurement dimension mismatch");

  const Eigen::VectorXd zhat = Z * wm;
  Eigen::MatrixXd S = R;
  Eigen::MatrixXd Pxz = Eigen::MatrixXd::Zero(n, z.size());
  for (Eigen::Index i = 0; i < Z.cols(); ++i) {
    const Eigen::VectorXd dz = Z.col(i) - zhat;
    const Eigen::VectorXd dx = pred.sigma.col(i) - pred.belief.mean;
    S.noalias() += wc[i] * dz * dz.transpose();
    Pxz.noalias() += wc[i] * dx * dz.transpose();
  }

  const Eigen::MatrixXd K = gain_solve(Pxz, S);
  const Eigen::VectorXd innovation = z - zhat;
  if (innovation_norm != nullptr) *innovation_norm = innovation.norm();

  FilterBelief out;
  out.mean = pred.belief.mean + K * innovation;
  out.cov = pred.belief.cov - K * S * K.transpose();
  out.cov = symmetrize_jitter(out.cov, 0.0);  // PD rescue lives in the sigma-point retry
  if (condition) condition(out.mean);
  return out;
}

FilterBelief ekf_step(const FilterBelief& belief, const Eigen::VectorXd& z,
                      const ProcessFn& process, const ObserveFn& h, const Eigen::Vector3d& tau,
                      double dt, const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                      const ConditionFn& condition, double* innovation_norm) {
  const auto step = [&](const Eigen::VectorXd& x) { return process(x, tau, dt); };
  const Eigen::MatrixXd F = fd_jacobian(step, belief.mean);
  Eigen::VectorXd mean = step(belief.mean);
  if (condition) condition(mean);
  Eigen::MatrixXd P = F * belief.cov * F.transpose() + Q;

  const Eigen::MatrixXd H = fd_jacobian(h, mean);
  const Eigen::VectorXd zhat = h(mean);
  const Eigen::MatrixXd S = H * P * H.transpose() + R;
  const Eigen::MatrixXd Pxz = P * H.transpose();
  const Eigen::MatrixXd K = gain_solve(Pxz, S);
  const Eigen::VectorXd innovation = z - zhat;
  if (innovation_norm != nullptr) *innovation_norm = innovation.norm();

  FilterBelief out;
  out.mean = mean + K * innovation;
  out.cov = P - K * S * K.transpose();
  out.cov = symmetrize_jitter(out.cov, 0.0);  // PD rescue lives in the sigma-point retry
  if (condition) condition(out.mean);
  return out;
}

Eigen::MatrixXd enkf_step(const Eigen::MatrixXd& ensemble, const Eigen::VectorXd& z,
                          const ProcessFn& process, const ObserveFn& h,
                          const Eigen::Vector3d& tau, double dt, const Eigen::MatrixXd& Q,
                          const Eigen::MatrixXd& R, RngStream& rng,
                          const ConditionFn& condition, double* innovation_norm) {
  const Eigen::Index N = ensemble.cols();
  if (N < 2) throw DimensionError("enkf_step: ensemble size must be >= 2");

  const Eigen::VectorXd zero_q = Eigen::VectorXd::Zero(ensemble.rows());
  Eigen::MatrixXd X = ensemble;
  for (Eigen::Index i = 0; i < N; ++i) {
    Eigen::VectorXd xi = process(X.col(i), tau, dt);
    xi += gaussian_sample(rng, zero_q, Q);
    if (condition) condition(xi);
    X.col(i) = xi;
  }

  const Eigen::VectorXd xbar = X.rowwise().mean();
  const double spread = (X.colwise() - xbar).cwiseAbs().maxCoeff();
  if (spread < 1e-14) {
    // With exactly zero process and measurement noise this is a deterministic
    // fixed point (the gain would vanish); otherwise the ensemble collapsed.
    if (Q.isZero(0.0) && R.isZero(0.0)) {
      if (innovation_norm != nullptr) *innovation_norm = (z - h(xbar)).norm();
      return X;
    }
    throw EnsembleCollapseError("enkf_step: ensemble spread below 1e-14");
  }

  Eigen::MatrixXd Z(z.size(), N);
  for (Eigen::Index i = 0; i < N; ++i) Z.col(i) = h(X.col(i));
  const Eigen::VectorXd zbar = Z.rowwise().mean();
  const Eigen::MatrixXd Xc = X.colwise() - xbar;
  const Eigen::MatrixXd Zc = Z.colwise() - zbar;
  const double norm = 1.0 / static_cast<double>(N - 1);
  const Eigen::MatrixXd Pxz = norm * Xc * Zc.transpose();
  const Eigen::MatrixXd S = norm * Zc * Zc.transpose() + R;
  const Eigen::MatrixXd K = gain_solve(Pxz, S);
  if (innovation_norm != nullptr) *innovation_norm = (z - zbar).norm();

  const Eigen::VectorXd zero_r = Eigen::VectorXd::Zero(z.size());
  for (Eigen::Index i = 0; i < N; ++i) {
    const Eigen::VectorXd nu = gaussian_sample(rng, zero_r, R);
    Eigen::VectorXd xi = X.col(i) + K * (z + nu - Z.col(i));
    if (condition) condition(xi);
    X.col(i) = xi;
  }
  return X;
}

Eigen::Vector3d theta_map(const InertiaTriple& J) {
  return {std::log(J.Jx), std::log(J.Jy), std::log(J.Jz)};
}

InertiaTriple theta_unmap(const Eigen::Vector3d& theta) {
  if (!theta.allFinite()) throw DimensionError("theta_unmap: theta must be finite");
  return {std::exp(theta[0]), std::exp(theta[1]), std::exp(theta[2])};
}

void map_prior_to_theta(const Eigen::Vector3d& mu_phys, const Eigen::Matrix3d& cov_phys,
                        const UtParams& ut, Eigen::Vector3d* mu_theta,
                        Eigen::Matrix3d* cov_theta) {
  FilterBelief prior{mu_phys, cov_phys};
  const Eigen::MatrixXd X = sigma_points(prior, ut);
  Eigen::MatrixXd Y(3, X.cols());
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    if ((X.col(i).array() <= 0.0).any())
      throw DimensionError("map_prior_to_theta: sigma point left the positive orthant");
    Y.col(i) = X.col(i).array().log();
  }
  const Eigen::VectorXd wm = ut.mean_weights(3);
  const Eigen::VectorXd wc = ut.cov_weights(3);
  const Eigen::VectorXd mean = Y * wm;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (Eigen::Index i = 0; i < Y.cols(); ++i) {
    const Eigen::Vector3d d = Y.col(i) - mean;
    cov += wc[i] * d * d.transpose();
  }
  cov = symmetrize_jitter(cov, std::max(default_jitter(cov), 1e-12));
  *mu_theta = mean;
  *cov_theta = cov;
}

ProcessFn spacecraft_process() {
  return [](const Eigen::VectorXd& x, const Eigen::Vector3d& tau, double dt) -> Eigen::VectorXd {
    if (x.size() != kAugDim) throw DimensionError("spacecraft_process: state must be 10-dim");
    // Raw exp(θ) moments: positivity is guaranteed, but the filter may pass
    // through triangle-violating regions, so no InertiaTriple validation here.
    const Eigen::Vector3d J = x.tail<3>().array().exp();
    using Vec7 = Eigen::Matrix<double, 7, 1>;
    const auto rhs = [&](double, const Vec7& v) -> Vec7 {
      const Quaternion q{v[0], v[1], v[2], v[3]};
      const Eigen::Vector3d omega = v.tail<3>();
      const Eigen::Vector3d Jw = J.cwiseProduct(omega);
      const Eigen::Vector3d torque_balance = -omega.cross(Jw) + tau;
      Vec7 d;
      d.head<4>() = quat_rhs(q, omega);
      d.tail<3>() = torque_balance.cwiseQuotient(J);
      return d;
    };
    const Vec7 next = rk4_step(rhs, Vec7(x.head<7>()), 0.0, dt);
    Eigen::VectorXd out(kAugDim);
    out.head<7>() = next;
    out.tail<3>() = x.tail<3>();
    return out;
  };
}

ObserveFn spacecraft_observe() {
  return [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return x.head<7>(); };
}

ConditionFn quat_renorm_condition() {
  return [](Eigen::VectorXd& x) {
    const double n = x.head<4>().norm();
    if (n > 0.0) x.head<4>() /= n;
  };
}

}  // namespace bukf::filters
