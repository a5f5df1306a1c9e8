#include "bukf/boosted.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace bukf::boosted {

namespace {

// Reserved re-centering of the log coordinates; intentionally does nothing.
void recenter_hook(filters::FilterBelief&) {}

void assert_pd(const Eigen::MatrixXd& P, long step) {
  if (!P.isApprox(P.transpose(), 1e-9))
    throw DecompositionError("run_boosted: covariance asymmetric at step " +
                             std::to_string(step));
  Eigen::LLT<Eigen::MatrixXd> llt(P);
  if (llt.info() != Eigen::Success)
    throw DecompositionError("run_boosted: covariance not PD at step " + std::to_string(step));
}

}  // namespace

VirtualSensor VirtualSensor::from_summary(const wfm::GaussianBelief& summary, long period,
                                          long start) {
  VirtualSensor vs;
  vs.z_vs = summary.mean;
  vs.R_vs = summary.cov;
  vs.period = period;
  vs.start = start;
  return vs;
}

filters::FilterBelief BoostedConfig::initial_belief() const {
  Eigen::Vector3d mu_theta;
  Eigen::Matrix3d cov_theta;
  filters::map_prior_to_theta(prior_mean, prior_var.asDiagonal(), ut, &mu_theta, &cov_theta);

  filters::FilterBelief b;
  b.mean.resize(filters::kAugDim);
  b.mean.head<4>() = q0.coeffs();
  b.mean.segment<3>(4) = omega0;
  b.mean.tail<3>() = mu_theta;
  b.cov = Eigen::MatrixXd::Zero(filters::kAugDim, filters::kAugDim);
  b.cov.topLeftCorner<4, 4>() = quat_var0 * Eigen::Matrix4d::Identity();
  b.cov.block<3, 3>(4, 4) = rate_var0 * Eigen::Matrix3d::Identity();
  b.cov.bottomRightCorner<3, 3>() = cov_theta;
  return b;
}

Eigen::MatrixXd BoostedConfig::process_noise() const {
  return process_var * Eigen::MatrixXd::Identity(filters::kAugDim, filters::kAugDim);
}

Eigen::MatrixXd BoostedConfig::measurement_noise() const {
  return meas_var * Eigen::MatrixXd::Identity(filters::kMeasDim, filters::kMeasDim);
}

Eigen::Vector3d h_vs(const Eigen::VectorXd& x) {
  return x.tail<3>().array().exp();
}

filters::FilterBelief virtual_update(const filters::FilterBelief& belief,
                                     const VirtualSensor& vs, const filters::UtParams& ut,
                                     long step, const filters::ObserveFn& h_override) {
  if (!vs.active_at(step)) return belief;

  const filters::ObserveFn h =
      h_override ? h_override
                 : filters::ObserveFn([](const Eigen::VectorXd& x) -> Eigen::VectorXd {
                     return h_vs(x);
                   });

  const Eigen::MatrixXd R_vs = symmetrize_jitter(vs.R_vs, std::max(default_jitter(vs.R_vs), 1e-12));

  filters::Prediction about_posterior;
  about_posterior.belief = belief;
  about_posterior.sigma = filters::sigma_points(belief, ut);
  return filters::ukf_update(about_posterior, vs.z_vs, h, R_vs, ut,
                             filters::quat_renorm_condition());
}

RunTrace run_boosted(const BoostedConfig& cfg, const std::optional<VirtualSensor>& vs,
                     const std::vector<Measurement>& measurements,
                     const TorqueProfile& torque) {
  const auto process = filters::spacecraft_process();
  const auto observe = filters::spacecraft_observe();
  const auto condition = filters::quat_renorm_condition();
  const Eigen::MatrixXd Q = cfg.process_noise();
  const Eigen::MatrixXd R = cfg.measurement_noise();

  filters::FilterBelief belief = cfg.initial_belief();
  RunTrace trace;
  trace.rows.reserve(measurements.size());

  for (long k = 0; k < static_cast<long>(measurements.size()); ++k) {
    const double t_start = measurements[k].t - cfg.dt;
    const Eigen::Vector3d tau = torque_at(torque, t_start);
    try {
      const filters::Prediction pred =
          filters::ukf_predict(belief, cfg.ut, process, tau, cfg.dt, Q, condition);
      double innovation = 0.0;
      belief = filters::ukf_update(pred, measurements[k].z, observe, R, cfg.ut, condition,
                                   &innovation);
      if (vs.has_value()) belief = virtual_update(belief, *vs, cfg.ut, k);
      if (cfg.recenter_log_coords) recenter_hook(belief);
      if (cfg.check_pd_every_step) assert_pd(belief.cov, k);

      TraceRow row;
      row.t = measurements[k].t;
      row.mean = belief.mean;
      row.std = belief.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
      row.J_est = h_vs(belief.mean);
      row.innovation_norm = innovation;
      trace.rows.push_back(std::move(row));
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(e.what()) + " (step " + std::to_string(k) + ")", e.t);
    }
  }
  trace.final_belief = belief;
  return trace;
}

void write_trace_csv(const std::string& path, const RunTrace& trace) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "t";
  for (int i = 0; i < filters::kAugDim; ++i) f << ",mean" << i;
  for (int i = 0; i < filters::kAugDim; ++i) f << ",std" << i;
  f << ",Jx,Jy,Jz,innovation_norm\n";
  char buf[64];
  for (const auto& row : trace.rows) {
    std::snprintf(buf, sizeof(buf), "%.9g", row.t);
    f << buf;
    for (int i = 0; i < filters::kAugDim; ++i) {
      std::snprintf(buf, sizeof(buf), ",%.17g", row.mean[i]);
      f << buf;
    }
    for (int i = 0; i < filters::kAugDim; ++i) {
      std::snprintf(buf, sizeof(buf), ",%.17g", row.std[i]);
      f << buf;
    }
    for (int i = 0; i < 3; ++i) {
      std::snprintf(buf, sizeof(buf), ",%.17g", row.J_est[i]);
      f << buf;
    }
    std::snprintf(buf, sizeof(buf), ",%.17g\n", row.innovation_norm);
    f << buf;
  }
}

}  // namespace bukf::boosted
