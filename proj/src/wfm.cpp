#include "bukf/wfm.hpp"

#include "bukf/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace bukf::wfm {

namespace {

Eigen::MatrixXd assemble_input(const Eigen::MatrixXd& X, const Eigen::VectorXd& s, int pairs) {
  Eigen::MatrixXd in(X.rows() + 2 * pairs, X.cols());
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    in.col(c).head(X.rows()) = X.col(c);
    in.col(c).tail(2 * pairs) = nn::time_encoding(s[c], pairs);
  }
  return in;
}

// CDF-inversion pick proportional to non-negative weights.
struct WeightedPicker {
  std::vector<double> cdf;
  explicit WeightedPicker(const Eigen::VectorXd& w) {
    cdf.resize(w.size());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      acc += std::max(w[i], 0.0);
      cdf[static_cast<std::size_t>(i)] = acc;
    }
    if (!(acc > 0.0)) throw DegenerateBatchError("weighted pick: total weight is zero");
  }
  Eigen::Index pick(RngStream& rng) const {
    const double u = rng.uniform() * cdf.back();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return static_cast<Eigen::Index>(std::min<std::size_t>(
        static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1));
  }
};

}  // namespace

Eigen::VectorXd FlowField::velocity(double s, const Eigen::VectorXd& x) const {
  Eigen::VectorXd in(d + 2 * encoding_pairs);
  in.head(d) = x;
  in.tail(2 * encoding_pairs) = nn::time_encoding(s, encoding_pairs);
  return nn::forward(net, in);
}

Eigen::MatrixXd FlowField::velocity(double s, const Eigen::MatrixXd& X) const {
  const Eigen::VectorXd enc = nn::time_encoding(s, encoding_pairs);
  Eigen::MatrixXd in(d + 2 * encoding_pairs, X.cols());
  in.topRows(d) = X;
  in.bottomRows(2 * encoding_pairs).colwise() = enc;
  return nn::forward(net, in);
}

Eigen::VectorXd ot_interpolate(const Eigen::VectorXd& x0, const Eigen::VectorXd& x1, double s,
                               double eps_min) {
  return (1.0 - (1.0 - eps_min) * s) * x0 + s * x1;
}

Eigen::VectorXd target_velocity(const Eigen::VectorXd& x0, const Eigen::VectorXd& x1, double s,
                                double eps_min) {
  const double shrink = 1.0 - (1.0 - eps_min) * s;
  if (!(shrink > 0.0)) throw DimensionError("target_velocity: path coefficient must be positive");
  const Eigen::VectorXd xs = ot_interpolate(x0, x1, s, eps_min);
  return (x1 - (1.0 - eps_min) * xs) / shrink;
}

LossGrad wfm_loss(const FlowField& field, const FlowBatch& batch,
                  const Eigen::VectorXd& weights) {
  const Eigen::Index B = batch.s.size();
  if (batch.x0.cols() != B || batch.x1.cols() != B || weights.size() != B)
    throw DimensionError("wfm_loss: batch shape mismatch");
  const double wsum = weights.sum();
  if (!(wsum > 0.0)) throw DegenerateBatchError("wfm_loss: all batch weights are zero");

  Eigen::MatrixXd path(field.d, B);
  Eigen::MatrixXd target(field.d, B);
  for (Eigen::Index c = 0; c < B; ++c) {
    path.col(c) = ot_interpolate(batch.x0.col(c), batch.x1.col(c), batch.s[c], field.eps_min);
    target.col(c) = target_velocity(batch.x0.col(c), batch.x1.col(c), batch.s[c], field.eps_min);
  }

  const Eigen::MatrixXd in = assemble_input(path, batch.s, field.encoding_pairs);
  nn::ForwardCache cache;
  const Eigen::MatrixXd v = nn::forward_cached(field.net, in, cache);
  const Eigen::MatrixXd resid = v - target;

  double loss = 0.0;
  Eigen::MatrixXd upstream(field.d, B);
  for (Eigen::Index c = 0; c < B; ++c) {
    loss += weights[c] * resid.col(c).squaredNorm();
    upstream.col(c) = (2.0 * weights[c] / wsum) * resid.col(c);
  }
  loss /= wsum;

  LossGrad out;
  out.loss = loss;
  out.grads = nn::backward(field.net, cache, upstream);
  return out;
}

FlowField wfm_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& weights,
                  const FlowTrainConfig& cfg, RngStream& rng) {
  if (X.cols() < 1) throw DimensionError("wfm_fit: need at least one sample");
  if (weights.size() != X.cols()) throw DimensionError("wfm_fit: weight/sample count mismatch");
  if (!(cfg.eps_min > 0.0 && cfg.eps_min < 1.0))
    throw DimensionError("wfm_fit: eps_min must lie in (0, 1)");

  FlowField field;
  field.d = static_cast<int>(X.rows());
  field.eps_min = cfg.eps_min;
  field.encoding_pairs = cfg.encoding_pairs;
  field.net = nn::make_mlp(field.d + 2 * cfg.encoding_pairs, cfg.hidden, field.d, rng);
  field.net.layers.back().W.setZero();  // identity transport before training

  const WeightedPicker picker(weights);
  nn::AdamState adam = nn::AdamState::zeros_like(field.net);

  const Eigen::Index M1 = X.cols();
  const int batches_per_epoch =
      static_cast<int>((M1 + cfg.batch_size - 1) / cfg.batch_size);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(cfg.batch_size);

  FlowBatch batch;
  batch.x0.resize(field.d, cfg.batch_size);
  batch.x1.resize(field.d, cfg.batch_size);
  batch.s.resize(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int bi = 0; bi < batches_per_epoch; ++bi) {
      for (int c = 0; c < cfg.batch_size; ++c) {
        for (int r = 0; r < field.d; ++r) batch.x0(r, c) = rng.normal();
        batch.x1.col(c) = X.col(picker.pick(rng));
        batch.s[c] = rng.uniform();
      }
      // Weights are realized through the resampling of x1, so the regression
      // itself is uniform over the minibatch.
      const LossGrad lg = wfm_loss(field, batch, ones);
      if (!std::isfinite(lg.loss)) throw DivergenceError("wfm_fit: non-finite loss");
      nn::adam_step(field.net, lg.grads, cfg.lr, adam);
    }
  }
  return field;
}

FlowField wfm_train(const WeightedDataset& dataset, const FlowTrainConfig& cfg, RngStream& rng) {
  const auto train_ids = dataset.indices_of(Split::Train);
  if (train_ids.empty()) throw DimensionError("wfm_train: train split is empty");
  Eigen::MatrixXd X(3, static_cast<Eigen::Index>(train_ids.size()));
  Eigen::VectorXd w(static_cast<Eigen::Index>(train_ids.size()));
  for (std::size_t i = 0; i < train_ids.size(); ++i) {
    const auto& s = dataset.samples[train_ids[i]];
    X.col(static_cast<Eigen::Index>(i)) = s.inertia_vec();
    w[static_cast<Eigen::Index>(i)] = s.weight;
  }
  return wfm_fit(X, w, cfg, rng);
}

Eigen::MatrixXd wfm_sample(const FlowField& field, int m, RngStream& rng, int ode_steps) {
  if (m < 1) throw DimensionError("wfm_sample: m must be >= 1");
  if (ode_steps < 1) throw DimensionError("wfm_sample: ode_steps must be >= 1");
  Eigen::MatrixXd X(field.d, m);
  for (Eigen::Index c = 0; c < m; ++c)
    for (int r = 0; r < field.d; ++r) X(r, c) = rng.normal();

  const auto rhs = [&](double s, const Eigen::MatrixXd& x) { return field.velocity(s, x); };
  const double ds = 1.0 / static_cast<double>(ode_steps);
  for (int k = 0; k < ode_steps; ++k) X = rk4_step(rhs, X, k * ds, ds);
  return X;
}

GaussianBelief gaussian_summary(const Eigen::MatrixXd& samples) {
  const Eigen::Index m = samples.cols();
  if (m < 2) throw DimensionError("gaussian_summary: need at least two samples");
  GaussianBelief out;
  out.mean = samples.rowwise().mean();
  const Eigen::MatrixXd centered = samples.colwise() - out.mean;
  out.cov = (centered * centered.transpose()) / static_cast<double>(m - 1);
  // Absolute floor keeps the zero-spread case PD as well.
  const double eps = std::max(default_jitter(out.cov), 1e-9);
  out.cov = symmetrize_jitter(out.cov, eps);
  return out;
}

void save_flow_json(const FlowField& field, const std::string& path, std::uint64_t seed,
                    long step) {
  nlohmann::json j = nn::checkpoint_json(field.net, seed, step);
  j["tool_version"] = kToolVersion;
  j["d"] = field.d;
  j["eps_min"] = field.eps_min;
  j["encoding_pairs"] = field.encoding_pairs;
  write_text_file(path, j.dump() + "\n");
}

FlowField load_flow_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  f >> j;
  FlowField field;
  field.net = nn::mlp_from_checkpoint(j);
  field.d = j.at("d").get<int>();
  field.eps_min = j.at("eps_min").get<double>();
  field.encoding_pairs = j.at("encoding_pairs").get<int>();
  return field;
}

void save_summary_json(const GaussianBelief& summary, int m, const std::string& path,
                       std::uint64_t seed, std::uint64_t config_hash) {
  nlohmann::json j;
  j["tool_version"] = kToolVersion;
  j["seed"] = seed;
  j["config_hash"] = hex_hash(config_hash);
  j["m"] = m;
  j["mu"] = std::vector<double>(summary.mean.data(), summary.mean.data() + summary.mean.size());
  auto& rows = j["sigma"] = nlohmann::json::array();
  for (Eigen::Index r = 0; r < summary.cov.rows(); ++r) {
    std::vector<double> row(summary.cov.cols());
    for (Eigen::Index c = 0; c < summary.cov.cols(); ++c) row[c] = summary.cov(r, c);
    rows.push_back(row);
  }
  write_text_file(path, j.dump(2) + "\n");
}

GaussianBelief load_summary_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  f >> j;
  GaussianBelief out;
  const auto mu = j.at("mu").get<std::vector<double>>();
  out.mean = Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(mu.size()));
  const auto rows = j.at("sigma");
  out.cov.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
  for (Eigen::Index r = 0; r < out.cov.rows(); ++r) {
    const auto row = rows[static_cast<std::size_t>(r)].get<std::vector<double>>();
    for (Eigen::Index c = 0; c < out.cov.cols(); ++c) out.cov(r, c) = row[c];
  }
  return out;
}

}  // namespace bukf::wfm
