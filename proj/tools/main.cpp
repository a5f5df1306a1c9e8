// Command-line front end: data generation, LRW/WFM preprocessing, filter
// runs across excitation regimes, and report assembly.

#include "bukf/experiment.hpp"
#include "bukf/io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace bukf;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

std::uint64_t resolve_seed(const CLI::App* cmd, std::uint64_t seed_flag) {
  if (cmd->count("--seed") > 0) return seed_flag;
  if (const char* env = std::getenv("BOOSTED_UKF_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw CLI::ValidationError("BOOSTED_UKF_SEED", "not a valid unsigned integer");
    }
  }
  return seed_flag;
}

std::uint64_t hash_config(const nlohmann::json& effective) {
  return fnv1a64(effective.dump());
}

void write_json(const nlohmann::json& j, const std::string& path) {
  write_text_file(path, j.dump(2) + "\n");
}

std::string provenance_comment(std::uint64_t seed, std::uint64_t config_hash) {
  std::ostringstream os;
  os << "# tool_version=" << kToolVersion << " seed=" << seed
     << " config_hash=" << hex_hash(config_hash) << "\n";
  return os.str();
}

struct TrainOptions {
  std::string dataset_path;
  std::string out_dir = ".";
  std::uint64_t seed = 1;
  int lrw_epochs = 200;
  double lrw_meta_lr = 3e-4;
  double lrw_baseline_lr = 1e-4;
  int lrw_batch = 32;
  int wfm_epochs = 10000;
  double wfm_lr = 1e-5;
  double wfm_eps_min = 1e-3;
  int wfm_batch = 256;
  int wfm_ode_steps = 100;
  std::vector<int> wfm_hidden = {256, 256, 256, 256, 256};
  int summary_samples = 4000;
  bool ci_scale = false;
};

struct RunOptions {
  std::string regime = "full";
  std::vector<std::string> filters = {"ekf", "ukf", "enkf", "boosted"};
  std::string summary_path;
  std::string out_dir = ".";
  std::uint64_t seed = 1;
  double horizon = 400.0;
  double dt = 0.01;
  int mc = 0;  // 0: single fixed-seed run
  int enkf_size = 100;
  long vs_period = 1;
  long vs_start = 0;
  double sigma = 1e-3;  // dataset noise for inline preprocessing
  int dataset_n = 2000;
  bool ci_scale = false;
  int threads = 0;
};

void apply_ci_scale_train(const CLI::App* cmd, TrainOptions& opt) {
  if (!opt.ci_scale) return;
  if (cmd->count("--wfm-epochs") == 0) opt.wfm_epochs = 2000;
  if (cmd->count("--wfm-lr") == 0) opt.wfm_lr = 1e-3;
  if (cmd->count("--wfm-hidden") == 0) opt.wfm_hidden = {64, 64, 64};
}

void apply_ci_scale_run(const CLI::App* cmd, RunOptions& opt) {
  if (!opt.ci_scale) return;
  if (cmd->count("--horizon") == 0) opt.horizon = 100.0;
  if (cmd->count("--mc") == 0 && opt.mc > 0) opt.mc = 5;
  if (cmd->count("--n") == 0) opt.dataset_n = 500;
}

wfm::FlowTrainConfig wfm_config_from(const TrainOptions& opt) {
  wfm::FlowTrainConfig cfg;
  cfg.epochs = opt.wfm_epochs;
  cfg.lr = opt.wfm_lr;
  cfg.eps_min = opt.wfm_eps_min;
  cfg.batch_size = opt.wfm_batch;
  cfg.ode_steps = opt.wfm_ode_steps;
  cfg.hidden = opt.wfm_hidden;
  return cfg;
}

int cmd_datagen(double sigma, int n, std::uint64_t seed, const std::string& out) {
  nlohmann::json effective{{"cmd", "datagen"}, {"sigma", sigma}, {"n", n}, {"seed", seed}};
  const std::uint64_t config_hash = hash_config(effective);
  RngStream rng(seed);
  const WeightedDataset ds = build_dataset(n, sigma, rng);
  save_dataset_json(ds, out, config_hash);
  std::cout << "wrote " << out << " (" << n << " samples, sigma=" << sigma << ")\n";
  return 0;
}

int cmd_train(const TrainOptions& opt) {
  const WeightedDataset loaded = load_dataset_json(opt.dataset_path);
  nlohmann::json effective{{"cmd", "train"},
                           {"dataset", opt.dataset_path},
                           {"seed", opt.seed},
                           {"lrw_epochs", opt.lrw_epochs},
                           {"wfm_epochs", opt.wfm_epochs},
                           {"wfm_lr", opt.wfm_lr},
                           {"wfm_hidden", opt.wfm_hidden},
                           {"summary_samples", opt.summary_samples}};
  const std::uint64_t config_hash = hash_config(effective);

  WeightedDataset ds = loaded;
  lrw::LrwConfig lrw_cfg;
  lrw_cfg.epochs = opt.lrw_epochs;
  lrw_cfg.meta_lr = opt.lrw_meta_lr;
  lrw_cfg.baseline_lr = opt.lrw_baseline_lr;
  lrw_cfg.batch_size = opt.lrw_batch;

  RngStream root(opt.seed);
  RngStream lrw_rng = root.split(2);
  const lrw::LrwResult weights = lrw::lrw_train(ds, lrw_cfg, lrw_rng);
  lrw::apply_weights(ds, weights);

  RngStream wfm_rng = root.split(3);
  const wfm::FlowField flow = wfm::wfm_train(ds, wfm_config_from(opt), wfm_rng);

  RngStream sample_rng = root.split(4);
  const Eigen::MatrixXd samples =
      wfm::wfm_sample(flow, opt.summary_samples, sample_rng, opt.wfm_ode_steps);
  const wfm::GaussianBelief summary = wfm::gaussian_summary(samples);

  fs::create_directories(opt.out_dir);
  const std::string weights_path = (fs::path(opt.out_dir) / "weights.json").string();
  const std::string flow_path = (fs::path(opt.out_dir) / "flow.json").string();
  const std::string summary_path = (fs::path(opt.out_dir) / "summary.json").string();
  lrw::save_weight_table(ds, weights, weights_path, opt.seed, config_hash);
  wfm::save_flow_json(flow, flow_path, opt.seed);
  wfm::save_summary_json(summary, opt.summary_samples, summary_path, opt.seed, config_hash);

  std::cout << "lrw final test accuracy: " << weights.final_test_accuracy << "\n";
  std::cout << "wfm summary mean: [" << summary.mean.transpose() << "]\n";
  std::cout << "wrote " << weights_path << ", " << flow_path << ", " << summary_path << "\n";
  return 0;
}

int cmd_run(const RunOptions& opt) {
  const TorqueRegime regime = regime_from_string(opt.regime);
  std::vector<experiment::FilterKind> kinds;
  for (const auto& f : opt.filters) kinds.push_back(experiment::filter_from_string(f));

  nlohmann::json effective{{"cmd", "run"},       {"regime", opt.regime},
                           {"filters", opt.filters}, {"seed", opt.seed},
                           {"horizon", opt.horizon}, {"dt", opt.dt},
                           {"mc", opt.mc},           {"enkf_size", opt.enkf_size},
                           {"vs_period", opt.vs_period}, {"vs_start", opt.vs_start}};
  const std::uint64_t config_hash = hash_config(effective);

  boosted::BoostedConfig base;
  base.horizon = opt.horizon;
  base.dt = opt.dt;

  const bool needs_vs =
      std::find(kinds.begin(), kinds.end(), experiment::FilterKind::Boosted) != kinds.end();
  std::optional<boosted::VirtualSensor> vs;
  if (needs_vs) {
    wfm::GaussianBelief summary;
    if (!opt.summary_path.empty()) {
      summary = wfm::load_summary_json(opt.summary_path);
    } else {
      std::cout << "no --summary given; running LRW/WFM preprocessing inline\n";
      experiment::PreprocessConfig pre;
      pre.sigma = opt.sigma;
      pre.n = opt.dataset_n;
      if (opt.ci_scale) {
        pre.wfm.epochs = 2000;
        pre.wfm.lr = 1e-3;
        pre.wfm.hidden = {64, 64, 64};
      }
      summary = experiment::run_preprocessing(pre, opt.seed).summary;
    }
    vs = boosted::VirtualSensor::from_summary(summary, opt.vs_period, opt.vs_start);
  }

  fs::create_directories(opt.out_dir);
  std::vector<experiment::ResultEntry> entries;

  if (opt.mc > 0) {
    experiment::McConfig mc;
    mc.regime = regime;
    mc.filters = kinds;
    mc.n_realizations = opt.mc;
    mc.base = base;
    mc.vs = vs;
    mc.enkf_size = opt.enkf_size;
    mc.seed = opt.seed;
    mc.threads = opt.threads;
    const auto cells = experiment::monte_carlo(mc);
    for (const auto& cell : cells) {
      experiment::ResultEntry e;
      e.filter = experiment::filter_to_string(cell.kind);
      e.regime = opt.regime;
      e.mean = cell.mean_rel_err_pct;
      e.stddev = cell.std_rel_err_pct;
      e.n_realizations = cell.n_realizations;
      entries.push_back(e);
    }
  } else {
    RngStream root(opt.seed);
    RngStream truth_rng = root.split(1);
    const experiment::Truth truth =
        experiment::generate_truth(nominal_inertia(), {regime}, opt.horizon, opt.dt,
                                   std::sqrt(base.meas_var), std::sqrt(base.meas_var),
                                   truth_rng);
    for (const auto kind : kinds) {
      RngStream rng = root.split(10 + static_cast<std::uint64_t>(kind));
      const experiment::RunResult res =
          experiment::run_filter(kind, base, vs, truth, {regime}, rng, opt.enkf_size);
      const std::string tag =
          experiment::filter_to_string(kind) + "_" + opt.regime;
      const std::string trace_path =
          (fs::path(opt.out_dir) / ("trace_" + tag + ".csv")).string();
      {
        std::ostringstream os;
        os << provenance_comment(opt.seed, config_hash);
        const std::string tmp = trace_path + ".tmp";
        boosted::write_trace_csv(tmp, res.trace);
        os << read_text_file(tmp);
        fs::remove(tmp);
        write_text_file(trace_path, os.str());
      }
      nlohmann::json summary = experiment::run_summary_json(res, config_hash);
      write_json(summary, (fs::path(opt.out_dir) / ("summary_" + tag + ".json")).string());

      experiment::ResultEntry e;
      e.filter = experiment::filter_to_string(kind);
      e.regime = opt.regime;
      e.mean = res.rel_err_pct;
      e.stddev = Eigen::Vector3d::Zero();
      e.n_realizations = 1;
      entries.push_back(e);
      std::cout << tag << ": rel err % = [" << res.rel_err_pct.transpose() << "]\n";
    }
  }

  const std::string results_path = (fs::path(opt.out_dir) / "results.json").string();
  write_json(experiment::result_table_json(entries, opt.seed, config_hash), results_path);
  std::cout << "wrote " << results_path << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& files, const std::string& csv_out) {
  std::vector<experiment::ResultEntry> entries;
  std::uint64_t seed = 0;
  for (const auto& path : files) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    nlohmann::json j;
    f >> j;
    seed = j.value("seed", seed);
    for (auto& e : experiment::result_table_from_json(j)) entries.push_back(std::move(e));
  }
  std::cout << experiment::format_report_text(entries);
  if (!csv_out.empty()) {
    std::ostringstream os;
    os << provenance_comment(seed, hash_config(nlohmann::json{{"cmd", "report"}}));
    os << experiment::format_report_csv(entries);
    write_text_file(csv_out, os.str());
    std::cout << "wrote " << csv_out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boosted UKF experiments: spacecraft inertia estimation with a "
               "reliability-weighted generative prior"};
  app.set_config("--config", "", "TOML configuration file (flags override file values)");
  app.require_subcommand(1);

  // datagen
  auto* datagen = app.add_subcommand("datagen", "Generate the weighted training dataset");
  double dg_sigma = 1e-3;
  int dg_n = 2000;
  std::uint64_t dg_seed = 1;
  std::string dg_out = "dataset.json";
  datagen->add_option("--sigma", dg_sigma, "Gyro noise std, rad/s")->capture_default_str();
  datagen->add_option("--n", dg_n, "Number of surrogate inertia samples")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  datagen->add_option("--seed", dg_seed, "RNG seed")->capture_default_str();
  datagen->add_option("--out", dg_out, "Output JSON path")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Run LRW reweighting and WFM training");
  TrainOptions topt;
  train->add_option("--dataset", topt.dataset_path, "Dataset JSON from datagen")->required();
  train->add_option("--out-dir", topt.out_dir, "Output directory")->capture_default_str();
  train->add_option("--seed", topt.seed, "RNG seed")->capture_default_str();
  train->add_option("--lrw-epochs", topt.lrw_epochs)->capture_default_str();
  train->add_option("--lrw-meta-lr", topt.lrw_meta_lr)->capture_default_str();
  train->add_option("--lrw-baseline-lr", topt.lrw_baseline_lr)->capture_default_str();
  train->add_option("--lrw-batch", topt.lrw_batch)->capture_default_str();
  train->add_option("--wfm-epochs", topt.wfm_epochs)->capture_default_str();
  train->add_option("--wfm-lr", topt.wfm_lr)->capture_default_str();
  train->add_option("--wfm-eps-min", topt.wfm_eps_min)->capture_default_str();
  train->add_option("--wfm-batch", topt.wfm_batch)->capture_default_str();
  train->add_option("--wfm-ode-steps", topt.wfm_ode_steps)->capture_default_str();
  train->add_option("--wfm-hidden", topt.wfm_hidden, "Hidden widths")->delimiter(',');
  train->add_option("--summary-samples", topt.summary_samples)->capture_default_str();
  train->add_flag("--ci-scale", topt.ci_scale, "Desk-scale defaults (WFM 2000 epochs)");

  // run
  auto* run = app.add_subcommand("run", "Run filters against a simulated truth");
  RunOptions ropt;
  run->add_option("--regime", ropt.regime, "zero|full|windowed|persistent")
      ->capture_default_str();
  run->add_option("--filters", ropt.filters, "Subset of ekf,ukf,enkf,boosted")
      ->delimiter(',')
      ->capture_default_str();
  run->add_option("--summary", ropt.summary_path, "WFM summary JSON for the virtual sensor");
  run->add_option("--out-dir", ropt.out_dir)->capture_default_str();
  run->add_option("--seed", ropt.seed)->capture_default_str();
  run->add_option("--horizon", ropt.horizon, "Seconds")->capture_default_str();
  run->add_option("--dt", ropt.dt, "Step size, seconds")->capture_default_str();
  run->add_option("--mc", ropt.mc, "Monte Carlo realizations (0 = single run)")
      ->capture_default_str();
  run->add_option("--enkf-size", ropt.enkf_size)->capture_default_str();
  run->add_option("--vs-period", ropt.vs_period, "Virtual-sensor period in steps")
      ->capture_default_str();
  run->add_option("--vs-start", ropt.vs_start, "Virtual-sensor start step")
      ->capture_default_str();
  run->add_option("--sigma", ropt.sigma, "Dataset noise for inline preprocessing")
      ->capture_default_str();
  run->add_option("--n", ropt.dataset_n, "Dataset size for inline preprocessing")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  run->add_option("--threads", ropt.threads, "Worker threads (0 = hardware)")
      ->capture_default_str();
  run->add_flag("--ci-scale", ropt.ci_scale, "Desk scale: horizon 100 s, MC 5, dataset 500");

  // report
  auto* report = app.add_subcommand("report", "Merge result tables into the summary layout");
  std::vector<std::string> report_files;
  std::string report_csv;
  report->add_option("files", report_files, "results.json files")
      ->required()
      ->check(CLI::ExistingFile);
  report->add_option("--csv", report_csv, "Also write a long-format CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (datagen->parsed()) {
      return cmd_datagen(dg_sigma, dg_n, resolve_seed(datagen, dg_seed), dg_out);
    }
    if (train->parsed()) {
      topt.seed = resolve_seed(train, topt.seed);
      apply_ci_scale_train(train, topt);
      return cmd_train(topt);
    }
    if (run->parsed()) {
      ropt.seed = resolve_seed(run, ropt.seed);
      apply_ci_scale_run(run, ropt);
      return cmd_run(ropt);
    }
    if (report->parsed()) {
      return cmd_report(report_files, report_csv);
    }
  } catch (const CLI::Error& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return 0;
}
