#include "bukf/sensing.hpp"

#include "bukf/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace bukf {

namespace {

constexpr double kDatasetHorizon = 30.0;
constexpr double kDatasetDt = 0.05;
constexpr int kDatasetSnapshots = 600;

RigidBodyState dataset_initial_state() {
  RigidBodyState x;
  x.q = {1.0, 0.0, 0.0, 0.0};
  x.omega = {0.1, 0.1, 0.1};
  return x;
}

// ω at t_k = k·Δt for k = 1..M (the initial condition is not a snapshot).
std::vector<Eigen::Vector3d> omega_snapshots(const InertiaTriple& J) {
  const TorqueProfile torque_free{TorqueRegime::Zero};
  const auto states =
      propagate(J, dataset_initial_state(), torque_free, kDatasetDt, kDatasetSnapshots);
  std::vector<Eigen::Vector3d> omega;
  omega.reserve(kDatasetSnapshots);
  for (int k = 1; k <= kDatasetSnapshots; ++k) omega.push_back(states[k].omega);
  return omega;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::string split_to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw std::invalid_argument("unknown split: " + s);
}

std::vector<int> WeightedDataset::indices_of(Split s) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == s) out.push_back(static_cast<int>(i));
  return out;
}

Measurement measure(const RigidBodyState& x, double sigma_quat, double sigma_gyro,
                    RngStream& rng, double t) {
  if (sigma_quat < 0.0 || sigma_gyro < 0.0)
    throw DimensionError("measure: noise levels must be non-negative");
  Measurement m;
  m.t = t;
  Eigen::Vector4d q = x.q.coeffs();
  for (int i = 0; i < 4; ++i) q[i] += sigma_quat * rng.normal();
  const double n = q.norm();
  if (!(n > 0.0)) throw DivergenceError("measure: quaternion collapsed under noise", t);
  m.z.head<4>() = q / n;
  Eigen::Vector3d w = x.omega;
  for (int i = 0; i < 3; ++i) w[i] += sigma_gyro * rng.normal();
  m.z.tail<3>() = w;
  return m;
}

std::vector<InertiaTriple> sample_inertias(int n, RngStream& rng) {
  if (n < 1) throw DimensionError("sample_inertias: n must be >= 1");
  const Eigen::Vector3d mean(100.0, 80.0, 70.0);
  const Eigen::Vector3d std_dev(10.0, 8.0, 7.0);
  std::vector<InertiaTriple> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    int rejections = 0;
    for (;;) {
      const double jx = mean[0] + std_dev[0] * rng.normal();
      const double jy = mean[1] + std_dev[1] * rng.normal();
      const double jz = mean[2] + std_dev[2] * rng.normal();
      if (InertiaTriple::valid(jx, jy, jz)) {
        out.emplace_back(jx, jy, jz);
        break;
      }
      if (++rejections >= 1000)
        throw DivergenceError("sample_inertias: 1000 consecutive rejections");
    }
  }
  return out;
}

double reliability_error(const std::vector<Eigen::Vector3d>& omega_s,
                         const std::vector<Eigen::Vector3d>& omega_m) {
  if (omega_s.size() != omega_m.size() || omega_s.empty())
    throw DimensionError("reliability_error: trajectories must be non-empty and equal length");
  double acc = 0.0;
  for (std::size_t k = 0; k < omega_s.size(); ++k)
    acc += (omega_s[k] - omega_m[k]).squaredNorm();
  return acc / static_cast<double>(omega_s.size());
}

WeightedDataset build_dataset(int n, double sigma, RngStream& rng) {
  return dataset_from_inertias(sample_inertias(n, rng), sigma, rng);
}

WeightedDataset dataset_from_inertias(const std::vector<InertiaTriple>& inertias, double sigma,
                                      RngStream& rng) {
  const int n = static_cast<int>(inertias.size());
  if (n < 1) throw DimensionError("dataset_from_inertias: need at least one sample");

  const auto omega_ref = omega_snapshots(nominal_inertia());
  std::vector<Eigen::Vector3d> omega_m = omega_ref;
  for (auto& w : omega_m)
    for (int i = 0; i < 3; ++i) w[i] += sigma * rng.normal();

  WeightedDataset ds;
  ds.seed = rng.seed();
  ds.sigma = sigma;
  ds.snapshots = kDatasetSnapshots;
  ds.samples.resize(n);

  std::vector<double> errors(n);
  for (int i = 0; i < n; ++i) {
    const auto omega_s = omega_snapshots(inertias[i]);
    errors[i] = reliability_error(omega_s, omega_m);
    auto& s = ds.samples[i];
    s.id = i;
    s.Jx = inertias[i].Jx;
    s.Jy = inertias[i].Jy;
    s.Jz = inertias[i].Jz;
    s.e = errors[i];
    s.weight = 1.0 / n;
  }

  const double mu_e = std::accumulate(errors.begin(), errors.end(), 0.0) / n;
  double var_e = 0.0;
  for (double e : errors) var_e += (e - mu_e) * (e - mu_e);
  var_e /= n;
  const double sd_e = std::sqrt(var_e);
  const double med = median_of(errors);
  for (auto& s : ds.samples) {
    s.zscore = sd_e > 0.0 ? (s.e - mu_e) / sd_e : 0.0;
    s.label = s.e > med ? 1 : 0;
  }

  // Meta/validation set: the 10% of samples with lowest error. Test set: a
  // random 20% of the remainder. Everything else trains.
  std::vector<int> by_error(n);
  std::iota(by_error.begin(), by_error.end(), 0);
  std::stable_sort(by_error.begin(), by_error.end(),
                   [&](int a, int b) { return errors[a] < errors[b]; });
  const int n_val = std::max(1, n / 10);
  for (int k = 0; k < n_val; ++k) ds.samples[by_error[k]].split = Split::Val;

  std::vector<int> rest(by_error.begin() + n_val, by_error.end());
  // Fisher-Yates on the remaining ids, then take the first chunk as test.
  for (int i = static_cast<int>(rest.size()) - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform() * (i + 1));
    std::swap(rest[i], rest[std::min(j, i)]);
  }
  const int n_test = std::min<int>(std::max(1, n / 5), static_cast<int>(rest.size()) - 1);
  for (int k = 0; k < n_test; ++k) ds.samples[rest[k]].split = Split::Test;
  for (std::size_t k = n_test; k < rest.size(); ++k) ds.samples[rest[k]].split = Split::Train;

  return ds;
}

void save_dataset_json(const WeightedDataset& ds, const std::string& path,
                       std::uint64_t config_hash) {
  nlohmann::json j;
  j["tool_version"] = kToolVersion;
  j["seed"] = ds.seed;
  j["config_hash"] = hex_hash(config_hash);
  j["sigma"] = ds.sigma;
  j["M"] = ds.snapshots;
  j["n"] = ds.samples.size();
  auto& arr = j["samples"] = nlohmann::json::array();
  for (const auto& s : ds.samples) {
    arr.push_back({{"Jx", s.Jx},
                   {"Jy", s.Jy},
                   {"Jz", s.Jz},
                   {"e", s.e},
                   {"z", s.zscore},
                   {"label", s.label},
                   {"weight", s.weight},
                   {"split", split_to_string(s.split)}});
  }
  write_text_file(path, j.dump(2) + "\n");
}

WeightedDataset load_dataset_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  f >> j;
  WeightedDataset ds;
  ds.seed = j.at("seed").get<std::uint64_t>();
  ds.sigma = j.at("sigma").get<double>();
  ds.snapshots = j.at("M").get<int>();
  int id = 0;
  for (const auto& e : j.at("samples")) {
    TrainingSample s;
    s.id = id++;
    s.Jx = e.at("Jx").get<double>();
    s.Jy = e.at("Jy").get<double>();
    s.Jz = e.at("Jz").get<double>();
    s.e = e.at("e").get<double>();
    s.zscore = e.at("z").get<double>();
    s.label = e.at("label").get<int>();
    s.weight = e.at("weight").get<double>();
    s.split = split_from_string(e.at("split").get<std::string>());
    ds.samples.push_back(s);
  }
  return ds;
}

}  // namespace bukf
