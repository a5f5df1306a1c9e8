// Python bindings for the main operations: dynamics propagation, dataset
// generation, LRW/WFM preprocessing, and the filter runs.

#include "bukf/experiment.hpp"
#include "bukf/io.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

namespace py = pybind11;
using namespace bukf;

namespace {

Eigen::MatrixXd propagate_py(const Eigen::Vector3d& inertia, const Eigen::Vector3d& omega0,
                             const std::string& regime, double dt, int steps) {
  const InertiaTriple J(inertia[0], inertia[1], inertia[2]);
  RigidBodyState x0;
  x0.q = {1.0, 0.0, 0.0, 0.0};
  x0.omega = omega0;
  const auto traj = propagate(J, x0, {regime_from_string(regime)}, dt, steps);
  Eigen::MatrixXd out(traj.size(), 8);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    out(k, 0) = k * dt;
    out.row(k).segment<4>(1) = traj[k].q.coeffs();
    out.row(k).tail<3>() = traj[k].omega;
  }
  return out;
}

py::dict dataset_to_dict(const WeightedDataset& ds) {
  const int n = static_cast<int>(ds.samples.size());
  Eigen::MatrixXd J(n, 3);
  Eigen::VectorXd e(n), z(n), w(n);
  std::vector<int> label(n);
  std::vector<std::string> split(n);
  for (int i = 0; i < n; ++i) {
    const auto& s = ds.samples[i];
    J.row(i) = s.inertia_vec();
    e[i] = s.e;
    z[i] = s.zscore;
    w[i] = s.weight;
    label[i] = s.label;
    split[i] = split_to_string(s.split);
  }
  py::dict out;
  out["J"] = J;
  out["e"] = e;
  out["z"] = z;
  out["weight"] = w;
  out["label"] = label;
  out["split"] = split;
  out["sigma"] = ds.sigma;
  out["seed"] = ds.seed;
  out["M"] = ds.snapshots;
  return out;
}

py::dict build_dataset_py(int n, double sigma, std::uint64_t seed) {
  RngStream rng(seed);
  return dataset_to_dict(build_dataset(n, sigma, rng));
}

py::dict preprocess_py(double sigma, int n, std::uint64_t seed, int lrw_epochs, int wfm_epochs,
                       std::vector<int> wfm_hidden, double wfm_lr, int wfm_batch,
                       int summary_samples) {
  experiment::PreprocessConfig cfg;
  cfg.sigma = sigma;
  cfg.n = n;
  cfg.lrw.epochs = lrw_epochs;
  cfg.wfm.epochs = wfm_epochs;
  cfg.wfm.hidden = std::move(wfm_hidden);
  cfg.wfm.lr = wfm_lr;
  cfg.wfm.batch_size = wfm_batch;
  cfg.summary_samples = summary_samples;
  const experiment::PreprocessResult res = experiment::run_preprocessing(cfg, seed);

  py::dict out;
  out["dataset"] = dataset_to_dict(res.dataset);
  out["weights"] = res.weights.weight;
  out["raw_weights"] = res.weights.raw_weight;
  out["lrw_test_accuracy"] = res.weights.final_test_accuracy;
  out["mu_wfm"] = Eigen::VectorXd(res.summary.mean);
  out["sigma_wfm"] = Eigen::MatrixXd(res.summary.cov);
  return out;
}

py::dict run_filter_py(const std::string& filter, const std::string& regime,
                       std::uint64_t seed, double horizon, double dt,
                       std::optional<Eigen::Vector3d> vs_mean,
                       std::optional<Eigen::Matrix3d> vs_cov, int enkf_size, long vs_period,
                       long vs_start) {
  boosted::BoostedConfig cfg;
  cfg.horizon = horizon;
  cfg.dt = dt;
  const TorqueProfile torque{regime_from_string(regime)};

  std::optional<boosted::VirtualSensor> vs;
  if (vs_mean.has_value()) {
    boosted::VirtualSensor sensor;
    sensor.z_vs = *vs_mean;
    sensor.R_vs = vs_cov.value_or(Eigen::Matrix3d::Identity());
    sensor.period = vs_period;
    sensor.start = vs_start;
    vs = sensor;
  }

  RngStream root(seed);
  RngStream truth_rng = root.split(1);
  const experiment::Truth truth =
      experiment::generate_truth(nominal_inertia(), torque, horizon, dt,
                                 std::sqrt(cfg.meas_var), std::sqrt(cfg.meas_var), truth_rng);
  RngStream filter_rng = root.split(2);
  const experiment::RunResult res = experiment::run_filter(
      experiment::filter_from_string(filter), cfg, vs, truth, torque, filter_rng, enkf_size);

  const int rows = static_cast<int>(res.trace.rows.size());
  Eigen::VectorXd t(rows);
  Eigen::MatrixXd J_trace(rows, 3);
  for (int k = 0; k < rows; ++k) {
    t[k] = res.trace.rows[k].t;
    J_trace.row(k) = res.trace.rows[k].J_est;
  }
  py::dict out;
  out["final_J"] = Eigen::VectorXd(res.final_J);
  out["rel_err_pct"] = Eigen::VectorXd(res.rel_err_pct);
  out["final_std"] = Eigen::VectorXd(res.final_std);
  out["t"] = t;
  out["J_trace"] = J_trace;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Boosted UKF: rigid-body simulation, reliability-weighted flow matching and "
            "nonlinear filtering with a virtual-sensor correction";
  m.attr("__version__") = kToolVersion;

  py::class_<RngStream>(m, "RngStream")
      .def(py::init<std::uint64_t>(), py::arg("seed"))
      .def("uniform", &RngStream::uniform)
      .def("normal", &RngStream::normal)
      .def("split", &RngStream::split, py::arg("key"))
      .def_property_readonly("seed", &RngStream::seed);

  m.def(
      "quat_mul",
      [](const Eigen::Vector4d& a, const Eigen::Vector4d& b) {
        return quat_mul(Quaternion::from_coeffs(a), Quaternion::from_coeffs(b)).coeffs();
      },
      py::arg("a"), py::arg("b"), "Hamilton product on (w, x, y, z) coefficients");

  m.def(
      "torque_at",
      [](const std::string& regime, double t) {
        return torque_at({regime_from_string(regime)}, t);
      },
      py::arg("regime"), py::arg("t"), "Excitation torque (N·m) at time t");

  m.def(
      "euler_rhs",
      [](const Eigen::Vector3d& J, const Eigen::Vector3d& omega, const Eigen::Vector3d& tau) {
        return euler_rhs(InertiaTriple(J[0], J[1], J[2]), omega, tau);
      },
      py::arg("J"), py::arg("omega"), py::arg("tau"));

  m.def("propagate", &propagate_py, py::arg("J"), py::arg("omega0"), py::arg("regime"),
        py::arg("dt"), py::arg("steps"),
        "Rigid-body trajectory; rows are [t, qw, qx, qy, qz, wx, wy, wz]");

  m.def(
      "theta_map",
      [](const Eigen::Vector3d& J) {
        return filters::theta_map(InertiaTriple(J[0], J[1], J[2]));
      },
      py::arg("J"));
  m.def(
      "theta_unmap",
      [](const Eigen::Vector3d& theta) { return filters::theta_unmap(theta).vec(); },
      py::arg("theta"));

  m.def("ot_interpolate", &wfm::ot_interpolate, py::arg("x0"), py::arg("x1"), py::arg("s"),
        py::arg("eps_min"));
  m.def("target_velocity", &wfm::target_velocity, py::arg("x0"), py::arg("x1"), py::arg("s"),
        py::arg("eps_min"));
  m.def("time_encoding", &nn::time_encoding, py::arg("s"), py::arg("pairs"));

  m.def(
      "gaussian_summary",
      [](const Eigen::MatrixXd& samples) {
        const auto g = wfm::gaussian_summary(samples);
        return py::make_tuple(g.mean, g.cov);
      },
      py::arg("samples"), "Sample mean and jitter-floored covariance; columns are samples");

  m.def("build_dataset", &build_dataset_py, py::arg("n"), py::arg("sigma"), py::arg("seed"),
        "Surrogate-inertia dataset with reliability scores, labels and splits");

  m.def("preprocess", &preprocess_py, py::arg("sigma"), py::arg("n"), py::arg("seed"),
        py::arg("lrw_epochs") = 200, py::arg("wfm_epochs") = 2000,
        py::arg("wfm_hidden") = std::vector<int>{64, 64, 64}, py::arg("wfm_lr") = 1e-3,
        py::arg("wfm_batch") = 256, py::arg("summary_samples") = 4000,
        "Dataset generation, LRW reweighting, WFM training and Gaussian summary");

  m.def("run_filter", &run_filter_py, py::arg("filter"), py::arg("regime"), py::arg("seed"),
        py::arg("horizon") = 400.0, py::arg("dt") = 0.01, py::arg("vs_mean") = py::none(),
        py::arg("vs_cov") = py::none(), py::arg("enkf_size") = 100, py::arg("vs_period") = 1,
        py::arg("vs_start") = 0,
        "One filter run against a simulated truth; filter is ekf|ukf|enkf|boosted");
}
