#include "bukf/experiment.hpp"

#include "bukf/io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <thread>

namespace bukf::experiment {

namespace {

constexpr std::uint64_t kTruthStreamKey = 0x7472757468ULL;    // "truth"
constexpr std::uint64_t kEnkfStreamKey = 0x656e6b66ULL;       // "enkf"
constexpr std::uint64_t kInitStreamKey = 0x696e6974ULL;       // "init"

boosted::TraceRow trace_row_from(double t, const Eigen::VectorXd& mean,
                                 const Eigen::VectorXd& var_diag, double innovation) {
  boosted::TraceRow row;
  row.t = t;
  row.mean = mean;
  row.std = var_diag.cwiseMax(0.0).cwiseSqrt();
  row.J_est = boosted::h_vs(mean);
  row.innovation_norm = innovation;
  return row;
}

RunResult finish_result(FilterKind kind, const TorqueProfile& torque, std::uint64_t seed,
                        boosted::RunTrace trace, const Eigen::Vector3d& final_J,
                        const Eigen::Vector3d& final_std) {
  RunResult r;
  r.kind = kind;
  r.regime = torque.regime;
  r.seed = seed;
  r.final_J = final_J;
  r.rel_err_pct = rel_err_pct(final_J, nominal_inertia().vec());
  r.final_std = final_std;
  r.trace = std::move(trace);
  return r;
}

}  // namespace

std::string filter_to_string(FilterKind k) {
  switch (k) {
    case FilterKind::Ekf: return "ekf";
    case FilterKind::Ukf: return "ukf";
    case FilterKind::Enkf: return "enkf";
    case FilterKind::Boosted: return "boosted";
  }
  return "ukf";
}

FilterKind filter_from_string(const std::string& s) {
  if (s == "ekf") return FilterKind::Ekf;
  if (s == "ukf") return FilterKind::Ukf;
  if (s == "enkf") return FilterKind::Enkf;
  if (s == "boosted") return FilterKind::Boosted;
  throw std::invalid_argument("unknown filter: " + s);
}

Truth generate_truth(const InertiaTriple& J, const TorqueProfile& torque, double horizon,
                     double dt, double sigma_quat, double sigma_gyro, RngStream& rng) {
  const long steps = static_cast<long>(horizon / dt + 0.5);
  Truth truth;
  truth.states.reserve(steps + 1);
  truth.measurements.reserve(steps);

  RigidBodyState x;
  x.q = {1.0, 0.0, 0.0, 0.0};
  x.omega = {0.1, 0.1, 0.1};
  truth.states.push_back(x);
  for (long k = 0; k < steps; ++k) {
    const Eigen::Vector3d tau = torque_at(torque, k * dt);
    x = step_zoh(J, x, tau, dt);
    x.q = x.q.normalized();
    truth.states.push_back(x);
    truth.measurements.push_back(measure(x, sigma_quat, sigma_gyro, rng, (k + 1) * dt));
  }
  return truth;
}

Eigen::Vector3d rel_err_pct(const Eigen::Vector3d& estimate, const Eigen::Vector3d& truth) {
  return 100.0 * (estimate.array() / truth.array() - 1.0).matrix();
}

RunResult run_filter(FilterKind kind, const boosted::BoostedConfig& cfg,
                     const std::optional<boosted::VirtualSensor>& vs, const Truth& truth,
                     const TorqueProfile& torque, RngStream& rng, int enkf_size) {
  const std::uint64_t seed = rng.seed();

  if (kind == FilterKind::Ukf || kind == FilterKind::Boosted) {
    if (kind == FilterKind::Boosted && !vs.has_value())
      throw DimensionError("run_filter: boosted run requires a virtual sensor");
    std::optional<boosted::VirtualSensor> use_vs;
    if (kind == FilterKind::Boosted) use_vs = vs;
    boosted::RunTrace trace = run_boosted(cfg, use_vs, truth.measurements, torque);
    const Eigen::Vector3d final_J = boosted::h_vs(trace.final_belief.mean);
    const Eigen::Vector3d theta_std =
        trace.final_belief.cov.bottomRightCorner<3, 3>().diagonal().cwiseMax(0.0).cwiseSqrt();
    const Eigen::Vector3d final_std = final_J.cwiseProduct(theta_std);  // lognormal linearization
    return finish_result(kind, torque, seed, std::move(trace), final_J, final_std);
  }

  const auto process = filters::spacecraft_process();
  const auto observe = filters::spacecraft_observe();
  const auto condition = filters::quat_renorm_condition();
  const Eigen::MatrixXd Q = cfg.process_noise();
  const Eigen::MatrixXd R = cfg.measurement_noise();

  boosted::RunTrace trace;
  trace.rows.reserve(truth.measurements.size());

  if (kind == FilterKind::Ekf) {
    filters::FilterBelief belief = cfg.initial_belief();
    for (std::size_t k = 0; k < truth.measurements.size(); ++k) {
      const auto& m = truth.measurements[k];
      const Eigen::Vector3d tau = torque_at(torque, m.t - cfg.dt);
      double innov = 0.0;
      belief = filters::ekf_step(belief, m.z, process, observe, tau, cfg.dt, Q, R, condition,
                                 &innov);
      trace.rows.push_back(trace_row_from(m.t, belief.mean, belief.cov.diagonal(), innov));
    }
    trace.final_belief = belief;
    const Eigen::Vector3d final_J = boosted::h_vs(belief.mean);
    const Eigen::Vector3d theta_std =
        belief.cov.bottomRightCorner<3, 3>().diagonal().cwiseMax(0.0).cwiseSqrt();
    return finish_result(kind, torque, seed, std::move(trace), final_J,
                         final_J.cwiseProduct(theta_std));
  }

  // EnKF
  if (enkf_size < 2) throw DimensionError("run_filter: EnKF needs at least two members");
  const filters::FilterBelief init = cfg.initial_belief();
  Eigen::MatrixXd ensemble(filters::kAugDim, enkf_size);
  RngStream init_rng = rng.split(kInitStreamKey);
  for (int i = 0; i < enkf_size; ++i) {
    Eigen::VectorXd xi = gaussian_sample(init_rng, init.mean, init.cov);
    condition(xi);
    ensemble.col(i) = xi;
  }

  RngStream enkf_rng = rng.split(kEnkfStreamKey);
  for (std::size_t k = 0; k < truth.measurements.size(); ++k) {
    const auto& m = truth.measurements[k];
    const Eigen::Vector3d tau = torque_at(torque, m.t - cfg.dt);
    double innov = 0.0;
    ensemble = filters::enkf_step(ensemble, m.z, process, observe, tau, cfg.dt, Q, R, enkf_rng,
                                  condition, &innov);
    // Trace uses the ensemble statistics of the physical inertia.
    boosted::TraceRow row;
    row.t = m.t;
    row.mean = ensemble.rowwise().mean();
    Eigen::VectorXd var(filters::kAugDim);
    for (int r = 0; r < filters::kAugDim; ++r) {
      const auto centered = ensemble.row(r).array() - row.mean[r];
      var[r] = centered.square().sum() / std::max(1, enkf_size - 1);
    }
    row.std = var.cwiseSqrt();
    Eigen::Vector3d j_mean = Eigen::Vector3d::Zero();
    for (int i = 0; i < enkf_size; ++i) j_mean += boosted::h_vs(ensemble.col(i));
    row.J_est = j_mean / enkf_size;
    row.innovation_norm = innov;
    trace.rows.push_back(std::move(row));
  }

  trace.final_belief.mean = ensemble.rowwise().mean();
  Eigen::MatrixXd centered = ensemble.colwise() - trace.final_belief.mean;
  trace.final_belief.cov = centered * centered.transpose() / std::max(1, enkf_size - 1);

  Eigen::Vector3d j_mean = Eigen::Vector3d::Zero();
  for (int i = 0; i < enkf_size; ++i) j_mean += boosted::h_vs(ensemble.col(i));
  j_mean /= enkf_size;
  Eigen::Vector3d j_var = Eigen::Vector3d::Zero();
  for (int i = 0; i < enkf_size; ++i) {
    const Eigen::Vector3d d = boosted::h_vs(ensemble.col(i)) - j_mean;
    j_var += d.cwiseProduct(d);
  }
  j_var /= std::max(1, enkf_size - 1);
  return finish_result(kind, torque, seed, std::move(trace), j_mean, j_var.cwiseSqrt());
}

PreprocessResult run_preprocessing(const PreprocessConfig& cfg, std::uint64_t seed) {
  RngStream root(seed);
  PreprocessResult out;
  RngStream data_rng = root.split(1);
  out.dataset = build_dataset(cfg.n, cfg.sigma, data_rng);
  RngStream lrw_rng = root.split(2);
  out.weights = lrw::lrw_train(out.dataset, cfg.lrw, lrw_rng);
  lrw::apply_weights(out.dataset, out.weights);
  RngStream wfm_rng = root.split(3);
  out.flow = wfm::wfm_train(out.dataset, cfg.wfm, wfm_rng);
  RngStream sample_rng = root.split(4);
  const Eigen::MatrixXd samples =
      wfm::wfm_sample(out.flow, cfg.summary_samples, sample_rng, cfg.wfm.ode_steps);
  out.summary = wfm::gaussian_summary(samples);
  return out;
}

void mc_metric(const std::vector<Eigen::Vector3d>& final_estimates,
               const Eigen::Vector3d& truth, Eigen::Vector3d* mean_out,
               Eigen::Vector3d* std_out) {
  const int n = static_cast<int>(final_estimates.size());
  if (n < 1) throw DimensionError("mc_metric: need at least one realization");
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& est : final_estimates) mean += rel_err_pct(est, truth);
  mean /= n;
  Eigen::Vector3d var = Eigen::Vector3d::Zero();
  for (const auto& est : final_estimates) {
    const Eigen::Vector3d d = rel_err_pct(est, truth) - mean;
    var += d.cwiseProduct(d);
  }
  var /= n;  // population std
  *mean_out = mean;
  *std_out = var.cwiseSqrt();
}

std::vector<McCell> monte_carlo(const McConfig& cfg) {
  const TorqueProfile torque{cfg.regime};
  const int n_filters = static_cast<int>(cfg.filters.size());
  std::vector<std::vector<Eigen::Vector3d>> finals(
      n_filters, std::vector<Eigen::Vector3d>(cfg.n_realizations));

  const RngStream root(cfg.seed);
  const auto run_one = [&](int r) {
    RngStream realization = root.split(1000 + static_cast<std::uint64_t>(r));
    // Random initial inertia guess; redraw non-positive components.
    RngStream guess_rng = realization.split(1);
    Eigen::Vector3d guess;
    do {
      for (int i = 0; i < 3; ++i) guess[i] = cfg.init_mean[i] + cfg.init_std[i] * guess_rng.normal();
    } while (!(guess.array() > 0.0).all());

    boosted::BoostedConfig run_cfg = cfg.base;
    run_cfg.prior_mean = guess;

    RngStream truth_rng = realization.split(2);
    const Truth truth = generate_truth(nominal_inertia(), torque, run_cfg.horizon, run_cfg.dt,
                                       std::sqrt(run_cfg.meas_var), std::sqrt(run_cfg.meas_var),
                                       truth_rng);
    for (int f = 0; f < n_filters; ++f) {
      RngStream filter_rng = realization.split(3 + static_cast<std::uint64_t>(f));
      const RunResult res = run_filter(cfg.filters[f], run_cfg, cfg.vs, truth, torque,
                                       filter_rng, cfg.enkf_size);
      finals[f][r] = res.final_J;
    }
  };

  int n_threads = cfg.threads > 0 ? cfg.threads
                                  : static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::max(1, std::min(n_threads, cfg.n_realizations));
  if (n_threads == 1) {
    for (int r = 0; r < cfg.n_realizations; ++r) run_one(r);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_threads; ++w)
      pool.emplace_back([&, w] {
        for (int r = w; r < cfg.n_realizations; r += n_threads) run_one(r);
      });
    for (auto& th : pool) th.join();
  }

  std::vector<McCell> cells(n_filters);
  for (int f = 0; f < n_filters; ++f) {
    cells[f].kind = cfg.filters[f];
    cells[f].n_realizations = cfg.n_realizations;
    mc_metric(finals[f], nominal_inertia().vec(), &cells[f].mean_rel_err_pct,
              &cells[f].std_rel_err_pct);
  }
  return cells;
}

nlohmann::json result_table_json(const std::vector<ResultEntry>& entries, std::uint64_t seed,
                                 std::uint64_t config_hash) {
  nlohmann::json j;
  j["tool_version"] = kToolVersion;
  j["seed"] = seed;
  j["config_hash"] = hex_hash(config_hash);
  auto& arr = j["entries"] = nlohmann::json::array();
  for (const auto& e : entries) {
    arr.push_back({{"filter", e.filter},
                   {"regime", e.regime},
                   {"mean_rel_err_pct", {e.mean[0], e.mean[1], e.mean[2]}},
                   {"std_rel_err_pct", {e.stddev[0], e.stddev[1], e.stddev[2]}},
                   {"n_realizations", e.n_realizations}});
  }
  return j;
}

std::vector<ResultEntry> result_table_from_json(const nlohmann::json& j) {
  std::vector<ResultEntry> out;
  for (const auto& e : j.at("entries")) {
    ResultEntry entry;
    entry.filter = e.at("filter").get<std::string>();
    entry.regime = e.at("regime").get<std::string>();
    const auto m = e.at("mean_rel_err_pct").get<std::vector<double>>();
    const auto s = e.at("std_rel_err_pct").get<std::vector<double>>();
    entry.mean = Eigen::Vector3d(m[0], m[1], m[2]);
    entry.stddev = Eigen::Vector3d(s[0], s[1], s[2]);
    entry.n_realizations = e.at("n_realizations").get<int>();
    out.push_back(entry);
  }
  return out;
}

namespace {

const ResultEntry* find_entry(const std::vector<ResultEntry>& entries,
                              const std::string& filter, const std::string& regime) {
  for (const auto& e : entries)
    if (e.filter == filter && e.regime == regime) return &e;
  return nullptr;
}

std::string cell_text(const ResultEntry* e, int axis) {
  if (e == nullptr) return "-";
  static const char* names[3] = {"Jx", "Jy", "Jz"};
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%s: %8.4f +/- %7.4f", names[axis], e->mean[axis],
                e->stddev[axis]);
  return buf;
}

}  // namespace

std::string format_report_text(const std::vector<ResultEntry>& entries) {
  static const std::array<std::pair<const char*, const char*>, 4> rows = {{
      {"ekf", "EKF"}, {"ukf", "UKF"}, {"enkf", "EnKF"}, {"boosted", "Boosted UKF"}}};
  static const std::array<std::pair<const char*, const char*>, 3> cols = {{
      {"full", "Full"}, {"windowed", "Windowed"}, {"persistent", "Persistent"}}};

  std::ostringstream os;
  os << "Relative inertia estimation errors (%), mean +/- std over realizations\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-12s | %-28s | %-28s | %-28s\n", "Method", "Full",
                "Windowed", "Persistent");
  os << buf;
  os << std::string(12, '-') << "-+-" << std::string(28, '-') << "-+-" << std::string(28, '-')
     << "-+-" << std::string(28, '-') << "\n";
  for (const auto& [key, label] : rows) {
    bool any = false;
    for (const auto& [ckey, clabel] : cols)
      if (find_entry(entries, key, ckey) != nullptr) any = true;
    if (!any) continue;
    for (int axis = 0; axis < 3; ++axis) {
      std::snprintf(buf, sizeof(buf), "%-12s | %-28s | %-28s | %-28s\n",
                    axis == 0 ? label : "",
                    cell_text(find_entry(entries, key, "full"), axis).c_str(),
                    cell_text(find_entry(entries, key, "windowed"), axis).c_str(),
                    cell_text(find_entry(entries, key, "persistent"), axis).c_str());
      os << buf;
    }
  }
  return os.str();
}

std::string format_report_csv(const std::vector<ResultEntry>& entries) {
  std::ostringstream os;
  os << "filter,regime,axis,mean_rel_err_pct,std_rel_err_pct,n_realizations\n";
  static const char* axes[3] = {"Jx", "Jy", "Jz"};
  static const char* filter_order[4] = {"ekf", "ukf", "enkf", "boosted"};
  static const char* regime_order[3] = {"full", "windowed", "persistent"};
  for (const char* f : filter_order)
    for (const char* r : regime_order) {
      const ResultEntry* e = find_entry(entries, f, r);
      if (e == nullptr) continue;
      for (int axis = 0; axis < 3; ++axis) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.10g,%.10g,%d\n", f, r, axes[axis],
                      e->mean[axis], e->stddev[axis], e->n_realizations);
        os << buf;
      }
    }
  return os.str();
}

nlohmann::json run_summary_json(const RunResult& result, std::uint64_t config_hash) {
  nlohmann::json j;
  j["tool_version"] = kToolVersion;
  j["seed"] = result.seed;
  j["config_hash"] = hex_hash(config_hash);
  j["regime"] = regime_to_string(result.regime);
  j["filter"] = filter_to_string(result.kind);
  j["final_J"] = {result.final_J[0], result.final_J[1], result.final_J[2]};
  j["rel_err_pct"] = {result.rel_err_pct[0], result.rel_err_pct[1], result.rel_err_pct[2]};
  j["final_std"] = {result.final_std[0], result.final_std[1], result.final_std[2]};
  return j;
}

}  // namespace bukf::experiment
