#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bukf/boosted.hpp"
#include "bukf/experiment.hpp"
#include "helpers.hpp"

#include <cmath>

using namespace bukf;
using namespace bukf::boosted;
using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

namespace {

std::vector<Measurement> make_measurements(TorqueRegime regime, double horizon, double dt,
                                           std::uint64_t seed) {
  RngStream rng(seed);
  const auto truth = experiment::generate_truth(nominal_inertia(), {regime}, horizon, dt,
                                                0.005, 0.005, rng);
  return truth.measurements;
}

bool rows_identical(const RunTrace& a, const RunTrace& b) {
  if (a.rows.size() != b.rows.size()) return false;
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    if (a.rows[k].mean != b.rows[k].mean) return false;
    if (a.rows[k].std != b.rows[k].std) return false;
    if (a.rows[k].innovation_norm != b.rows[k].innovation_norm) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("BoostedConfig: defaults reproduce the reference initialization") {
  const BoostedConfig cfg;
  CHECK(cfg.prior_mean == Vector3d(140.0, 20.0, 36.0));
  CHECK(cfg.prior_var == Vector3d(1700.0, 20.0, 120.0));
  CHECK(cfg.q0.w == 1.0);
  CHECK(cfg.q0.x == 0.0);
  CHECK(cfg.omega0 == Vector3d(0.1, 0.1, 0.1));
  CHECK(cfg.quat_var0 == 1e-3);
  CHECK(cfg.rate_var0 == 1e-2);
  CHECK(cfg.process_var == 1e-7);
  CHECK(cfg.meas_var == 2.5e-5);
  CHECK(cfg.ut.alpha == 1e-3);
  CHECK(cfg.ut.beta == 2.0);
  CHECK(cfg.ut.kappa == 0.0);
  CHECK(cfg.horizon == 400.0);
  CHECK(cfg.dt == 0.01);
  CHECK(cfg.steps() == 40000);

  const MatrixXd Q = cfg.process_noise();
  CHECK(Q.rows() == 10);
  CHECK(Q(0, 0) == 1e-7);
  CHECK(Q(9, 9) == 1e-7);
  const MatrixXd R = cfg.measurement_noise();
  CHECK(R.rows() == 7);
  CHECK(R(0, 0) == 2.5e-5);

  const filters::FilterBelief b = cfg.initial_belief();
  CHECK(b.mean.head<4>() == Eigen::Vector4d(1.0, 0.0, 0.0, 0.0));
  CHECK(b.mean.segment<3>(4) == Vector3d(0.1, 0.1, 0.1));
  const Vector3d J0 = b.mean.tail<3>().array().exp();
  for (int i = 0; i < 3; ++i) CHECK(std::abs(J0[i] - cfg.prior_mean[i]) < 0.1 * cfg.prior_mean[i]);
  CHECK(b.cov(0, 0) == 1e-3);
  CHECK(b.cov(4, 4) == 1e-2);
  CHECK(b.cov.bottomRightCorner<3, 3>().trace() > 0.0);
}

TEST_CASE("h_vs: parameter read-out") {
  VectorXd x = VectorXd::Zero(10);
  CHECK(h_vs(x) == Vector3d(1.0, 1.0, 1.0));

  x.tail<3>() = Vector3d(std::log(100.0), std::log(80.0), std::log(70.0));
  CHECK((h_vs(x) - Vector3d(100.0, 80.0, 70.0)).cwiseAbs().maxCoeff() < 1e-10);

  VectorXd y = x;
  y.head<7>() = VectorXd::Constant(7, 0.37);
  CHECK(h_vs(y) == h_vs(x));
}

TEST_CASE("virtual_update: schedule skip returns the input unchanged") {
  RngStream rng(1);
  filters::FilterBelief b;
  b.mean = bukf::testing::random_vec(10, rng);
  b.cov = bukf::testing::random_spd(10, rng, 0.1, 0.5);
  VirtualSensor vs;
  vs.z_vs = Vector3d(100.0, 80.0, 70.0);
  vs.R_vs = Eigen::Matrix3d::Identity();
  vs.period = 5;
  vs.start = 0;
  const filters::UtParams ut{1e-3, 2.0, 0.0};
  const filters::FilterBelief out = virtual_update(b, vs, ut, 3);
  CHECK(out.mean == b.mean);
  CHECK(out.cov == b.cov);
  // active on multiples of the period
  const filters::FilterBelief applied = virtual_update(b, vs, ut, 5);
  CHECK(applied.mean != b.mean);
}

TEST_CASE("virtual_update: an uninformative pseudo-measurement changes nothing") {
  RngStream rng(2);
  filters::FilterBelief b;
  b.mean = VectorXd::Zero(10);
  b.mean[0] = 1.0;
  b.mean.tail<3>() = Vector3d(4.6, 4.3, 4.2);
  b.cov = bukf::testing::random_spd(10, rng, 0.01, 0.1);
  VirtualSensor vs;
  vs.z_vs = Vector3d(90.0, 75.0, 65.0);
  vs.R_vs = 1e12 * Eigen::Matrix3d::Identity();
  const filters::FilterBelief out = virtual_update(b, vs, filters::UtParams{1e-3, 2.0, 0.0}, 0);
  CHECK((out.mean - b.mean).norm() < 1e-6 * std::max(1.0, b.mean.norm()));
  CHECK((out.cov - b.cov).norm() < 1e-6 * b.cov.norm());
}

TEST_CASE("virtual_update: linear θ-block observation matches the block Kalman update") {
  RngStream rng(3);
  filters::FilterBelief b;
  b.mean = bukf::testing::random_vec(10, rng);
  b.cov = MatrixXd::Zero(10, 10);
  b.cov.topLeftCorner<7, 7>() = bukf::testing::random_spd(7, rng, 0.1, 0.4);
  b.cov.bottomRightCorner<3, 3>() = bukf::testing::random_spd(3, rng, 0.2, 0.6);

  VirtualSensor vs;
  vs.z_vs = Vector3d(0.5, -0.3, 0.8);
  vs.R_vs = bukf::testing::random_spd(3, rng, 0.1, 0.3);

  const auto theta_identity = [](const VectorXd& x) -> VectorXd { return x.tail<3>(); };
  const filters::FilterBelief out = virtual_update(b, vs, filters::UtParams{1e-3, 2.0, 0.0}, 0,
                                                   theta_identity);

  // closed-form Kalman update confined to the θ block
  const Eigen::Matrix3d P = b.cov.bottomRightCorner<3, 3>();
  const Eigen::Matrix3d S = P + vs.R_vs;
  const Eigen::Matrix3d K = P * S.inverse();
  const Vector3d mean_ref =
      b.mean.tail<3>() + K * (vs.z_vs - b.mean.tail<3>());
  const Eigen::Matrix3d cov_ref = P - K * S * K.transpose();

  CHECK((out.mean.tail<3>() - mean_ref).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((out.cov.bottomRightCorner<3, 3>() - cov_ref).cwiseAbs().maxCoeff() < 1e-7);
  // physical blocks are untouched by a block-diagonal belief
  CHECK((out.mean.segment<3>(4) - b.mean.segment<3>(4)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("virtual_update: never grows the θ-block covariance trace") {
  RngStream rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    filters::FilterBelief b;
    b.mean = bukf::testing::random_vec(10, rng);
    b.mean.tail<3>() = Vector3d(4.5, 4.2, 4.0) + 0.1 * bukf::testing::random_vec(3, rng);
    b.cov = bukf::testing::random_spd(10, rng, 0.05, 0.3);
    VirtualSensor vs;
    vs.z_vs = Vector3d(95.0, 72.0, 61.0);
    vs.R_vs = bukf::testing::random_spd(3, rng, 0.5, 2.0);
    const filters::FilterBelief out =
        virtual_update(b, vs, filters::UtParams{1e-3, 2.0, 0.0}, 0);
    CHECK(out.cov.bottomRightCorner<3, 3>().trace() <=
          b.cov.bottomRightCorner<3, 3>().trace() + 1e-10);
  }
}

TEST_CASE("run_boosted: disabled virtual sensor reproduces the plain UKF bitwise") {
  BoostedConfig cfg;
  cfg.horizon = 3.0;
  const auto ms = make_measurements(TorqueRegime::Full, cfg.horizon, cfg.dt, 5);

  const RunTrace plain = run_boosted(cfg, std::nullopt, ms, {TorqueRegime::Full});

  VirtualSensor disabled;
  disabled.z_vs = Vector3d(100.0, 80.0, 70.0);
  disabled.R_vs = Eigen::Matrix3d::Identity();
  disabled.period = 0;  // never fires
  const RunTrace gated = run_boosted(cfg, disabled, ms, {TorqueRegime::Full});

  CHECK(rows_identical(plain, gated));
  CHECK(plain.final_belief.mean == gated.final_belief.mean);
  CHECK(plain.final_belief.cov == gated.final_belief.cov);
}

TEST_CASE("run_boosted: huge-R virtual sensor tracks the plain UKF") {
  BoostedConfig cfg;
  cfg.horizon = 2.0;
  const auto ms = make_measurements(TorqueRegime::Full, cfg.horizon, cfg.dt, 6);

  const RunTrace plain = run_boosted(cfg, std::nullopt, ms, {TorqueRegime::Full});
  VirtualSensor faint;
  faint.z_vs = Vector3d(100.0, 80.0, 70.0);
  faint.R_vs = 1e15 * Eigen::Matrix3d::Identity();
  const RunTrace boosted = run_boosted(cfg, faint, ms, {TorqueRegime::Full});

  for (std::size_t k = 0; k < plain.rows.size(); ++k) {
    CHECK((plain.rows[k].mean - boosted.rows[k].mean).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("run_boosted: a sharp true-valued pseudo-measurement pins the estimate") {
  BoostedConfig cfg;
  cfg.horizon = 60.0;
  const auto ms = make_measurements(TorqueRegime::Windowed, cfg.horizon, cfg.dt, 7);

  VirtualSensor vs;
  vs.z_vs = Vector3d(100.0, 80.0, 70.0);
  vs.R_vs = 1e-4 * Eigen::Matrix3d::Identity();
  const RunTrace trace = run_boosted(cfg, vs, ms, {TorqueRegime::Windowed});
  const Vector3d J = trace.rows.back().J_est;
  CHECK(std::abs(J[0] - 100.0) < 0.5);
  CHECK(std::abs(J[1] - 80.0) < 0.4);
  CHECK(std::abs(J[2] - 70.0) < 0.35);
}

TEST_CASE("run_boosted: deterministic trace under fixed seeds") {
  BoostedConfig cfg;
  cfg.horizon = 1.0;
  const auto ms = make_measurements(TorqueRegime::Persistent, cfg.horizon, cfg.dt, 8);
  VirtualSensor vs;
  vs.z_vs = Vector3d(101.0, 79.0, 71.0);
  vs.R_vs = 4.0 * Eigen::Matrix3d::Identity();
  const RunTrace a = run_boosted(cfg, vs, ms, {TorqueRegime::Persistent});
  const RunTrace b = run_boosted(cfg, vs, ms, {TorqueRegime::Persistent});
  CHECK(rows_identical(a, b));
}

TEST_CASE("run_boosted: final belief is a valid filter state") {
  BoostedConfig cfg;
  cfg.horizon = 2.0;
  const auto ms = make_measurements(TorqueRegime::Full, cfg.horizon, cfg.dt, 9);
  VirtualSensor vs;
  vs.z_vs = Vector3d(100.0, 80.0, 70.0);
  vs.R_vs = 25.0 * Eigen::Matrix3d::Identity();
  const RunTrace trace = run_boosted(cfg, vs, ms, {TorqueRegime::Full});
  CHECK(std::abs(trace.final_belief.mean.head<4>().norm() - 1.0) < 1e-9);
  CHECK_NOTHROW(cholesky(trace.final_belief.cov));
}

TEST_CASE("run_boosted: covariances stay symmetric PD over the full 40000-step run") {
  // Reference settings with per-step PD assertions enabled.
  BoostedConfig cfg;
  cfg.check_pd_every_step = true;
  const auto ms = make_measurements(TorqueRegime::Full, cfg.horizon, cfg.dt, 10);
  VirtualSensor vs;
  vs.z_vs = Vector3d(100.5, 79.5, 70.5);
  vs.R_vs = 0.25 * Eigen::Matrix3d::Identity();
  const RunTrace trace = run_boosted(cfg, vs, ms, {TorqueRegime::Full});
  CHECK(trace.rows.size() == 40000);
}

TEST_CASE("write_trace_csv: column layout") {
  BoostedConfig cfg;
  cfg.horizon = 0.1;
  const auto ms = make_measurements(TorqueRegime::Zero, cfg.horizon, cfg.dt, 11);
  const RunTrace trace = run_boosted(cfg, std::nullopt, ms, {TorqueRegime::Zero});
  write_trace_csv("trace_test.csv", trace);
  std::ifstream f("trace_test.csv");
  std::string header;
  std::getline(f, header);
  CHECK(header.find("t,mean0") == 0);
  CHECK(header.find("Jx,Jy,Jz,innovation_norm") != std::string::npos);
  int rows = 0;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 10);
  std::remove("trace_test.csv");
}
