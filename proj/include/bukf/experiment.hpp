#pragma once

#include "bukf/boosted.hpp"
#include "bukf/lrw.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace bukf::experiment {

enum class FilterKind { Ekf, Ukf, Enkf, Boosted };

std::string filter_to_string(FilterKind k);
FilterKind filter_from_string(const std::string& s);

/// Deterministic ground truth: the discrete-time process model driven by the
/// regime torque, with quaternion renormalization per step, plus noisy
/// measurements at every step.
struct Truth {
  std::vector<RigidBodyState> states;       // steps+1 entries
  std::vector<Measurement> measurements;    // one per step, t = (k+1)·dt
};

Truth generate_truth(const InertiaTriple& J, const TorqueProfile& torque, double horizon,
                     double dt, double sigma_quat, double sigma_gyro, RngStream& rng);

struct RunResult {
  FilterKind kind = FilterKind::Ukf;
  TorqueRegime regime = TorqueRegime::Zero;
  std::uint64_t seed = 0;
  Eigen::Vector3d final_J = Eigen::Vector3d::Zero();
  Eigen::Vector3d rel_err_pct = Eigen::Vector3d::Zero();  // signed, % of nominal
  Eigen::Vector3d final_std = Eigen::Vector3d::Zero();    // kg·m²
  boosted::RunTrace trace;
};

/// Runs one filter against a fixed truth; EnKF draws from rng.
RunResult run_filter(FilterKind kind, const boosted::BoostedConfig& cfg,
                     const std::optional<boosted::VirtualSensor>& vs, const Truth& truth,
                     const TorqueProfile& torque, RngStream& rng, int enkf_size = 100);

/// Signed per-axis relative error (est/truth − 1)·100.
Eigen::Vector3d rel_err_pct(const Eigen::Vector3d& estimate, const Eigen::Vector3d& truth);

/// Offline preprocessing: data generation, LRW reweighting, WFM training,
/// Gaussian summarization of generated samples.
struct PreprocessConfig {
  double sigma = 1e-3;
  int n = 2000;
  lrw::LrwConfig lrw;
  wfm::FlowTrainConfig wfm;
  int summary_samples = 4000;
};

struct PreprocessResult {
  WeightedDataset dataset;
  lrw::LrwResult weights;
  wfm::FlowField flow;
  wfm::GaussianBelief summary;
};

PreprocessResult run_preprocessing(const PreprocessConfig& cfg, std::uint64_t seed);

/// Monte Carlo over random initial inertia guesses (prior mean redrawn per
/// realization; redrawn again if any component is non-positive).
struct McConfig {
  TorqueRegime regime = TorqueRegime::Windowed;
  std::vector<FilterKind> filters{FilterKind::Ekf, FilterKind::Ukf, FilterKind::Enkf,
                                  FilterKind::Boosted};
  int n_realizations = 50;
  Eigen::Vector3d init_mean{140.0, 20.0, 36.0};
  Eigen::Vector3d init_std{10.0, 10.0, 10.0};
  boosted::BoostedConfig base;
  std::optional<boosted::VirtualSensor> vs;
  int enkf_size = 100;
  std::uint64_t seed = 1;
  int threads = 0;  // 0 = hardware concurrency
};

struct McCell {
  FilterKind kind = FilterKind::Ukf;
  Eigen::Vector3d mean_rel_err_pct = Eigen::Vector3d::Zero();
  Eigen::Vector3d std_rel_err_pct = Eigen::Vector3d::Zero();
  int n_realizations = 0;
};

std::vector<McCell> monte_carlo(const McConfig& cfg);

/// Mean and population std of signed per-axis relative errors (%).
void mc_metric(const std::vector<Eigen::Vector3d>& final_estimates,
               const Eigen::Vector3d& truth, Eigen::Vector3d* mean_out,
               Eigen::Vector3d* std_out);

struct ResultEntry {
  std::string filter;
  std::string regime;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d stddev = Eigen::Vector3d::Zero();
  int n_realizations = 0;
};

nlohmann::json result_table_json(const std::vector<ResultEntry>& entries, std::uint64_t seed,
                                 std::uint64_t config_hash);
std::vector<ResultEntry> result_table_from_json(const nlohmann::json& j);

/// Fixed-layout table mirroring the published results: rows EKF, UKF, EnKF,
/// Boosted UKF; columns Full, Windowed, Persistent.
std::string format_report_text(const std::vector<ResultEntry>& entries);
std::string format_report_csv(const std::vector<ResultEntry>& entries);

nlohmann::json run_summary_json(const RunResult& result, std::uint64_t config_hash);

}  // namespace bukf::experiment
