#include "bukf/lrw.hpp"

#include "bukf/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bukf::lrw {

namespace {

// Per-sample loss gradient ∇_Υ ℓₙ(Υ) for a scalar-logit classifier.
nn::Gradients sample_gradient(const nn::MlpParams& params, const LabeledExample& ex,
                              double* loss_out = nullptr) {
  nn::ForwardCache cache;
  const Eigen::MatrixXd out = nn::forward_cached(params, ex.x, cache);
  const auto bce = nn::bce_loss(out(0, 0), ex.y);
  if (loss_out != nullptr) *loss_out = bce.loss;
  Eigen::MatrixXd upstream(1, 1);
  upstream(0, 0) = bce.dlogit;
  return nn::backward(params, cache, upstream);
}

// Mean-loss gradient over a batch.
nn::Gradients batch_gradient(const nn::MlpParams& params,
                             const std::vector<LabeledExample>& batch) {
  nn::Gradients acc = nn::Gradients::zeros_like(params);
  for (const auto& ex : batch) acc += sample_gradient(params, ex);
  acc.scale(1.0 / static_cast<double>(batch.size()));
  return acc;
}

// Deterministic ordering key: a sample keeps its key under dataset reordering.
std::uint64_t order_key(std::uint64_t seed, std::uint64_t epoch, std::uint64_t slot,
                        std::uint64_t id) {
  std::uint64_t h = fnv1a64(std::to_string(seed) + ":" + std::to_string(epoch) + ":" +
                            std::to_string(slot) + ":" + std::to_string(id));
  return h;
}

LabeledExample example_of(const TrainingSample& s) {
  LabeledExample ex;
  ex.x = Eigen::VectorXd::Constant(1, s.zscore);
  ex.y = s.label;
  return ex;
}

double accuracy(const nn::MlpParams& params, const std::vector<LabeledExample>& set) {
  if (set.empty()) return 0.0;
  int correct = 0;
  for (const auto& ex : set) {
    const double logit = nn::forward(params, ex.x)[0];
    const int pred = logit > 0.0 ? 1 : 0;
    if (pred == ex.y) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

struct SplitView {
  std::vector<int> ids;                  // dataset sample ids, ascending
  std::vector<LabeledExample> examples;  // aligned with ids
};

SplitView view_of(const WeightedDataset& ds, Split split) {
  SplitView v;
  for (const auto& s : ds.samples)
    if (s.split == split) v.ids.push_back(s.id);
  std::sort(v.ids.begin(), v.ids.end());
  for (int id : v.ids) {
    const auto it = std::find_if(ds.samples.begin(), ds.samples.end(),
                                 [id](const TrainingSample& s) { return s.id == id; });
    v.examples.push_back(example_of(*it));
  }
  return v;
}

}  // namespace

nn::MlpParams inner_step(const nn::MlpParams& params, const std::vector<LabeledExample>& batch,
                         const Eigen::VectorXd& eps, double lr) {
  if (eps.size() != static_cast<Eigen::Index>(batch.size()))
    throw DimensionError("inner_step: eps length must match batch size");
  nn::Gradients acc = nn::Gradients::zeros_like(params);
  for (std::size_t n = 0; n < batch.size(); ++n) {
    nn::Gradients g = sample_gradient(params, batch[n]);
    g.scale(eps[static_cast<Eigen::Index>(n)]);
    acc += g;
  }
  nn::MlpParams out = params;
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    out.layers[l].W -= lr * acc.dW[l];
    out.layers[l].b -= lr * acc.db[l];
  }
  return out;
}

double mean_loss(const nn::MlpParams& params, const std::vector<LabeledExample>& batch) {
  double acc = 0.0;
  for (const auto& ex : batch) {
    const double logit = nn::forward(params, ex.x)[0];
    acc += nn::bce_loss(logit, ex.y).loss;
  }
  return acc / static_cast<double>(batch.size());
}

Eigen::VectorXd meta_gradients(const nn::MlpParams& params,
                               const std::vector<LabeledExample>& train_batch,
                               const std::vector<LabeledExample>& val_batch, double lr) {
  if (val_batch.empty()) throw DimensionError("meta_gradients: validation batch is empty");
  const nn::Gradients val_grad = batch_gradient(params, val_batch);
  Eigen::VectorXd u(static_cast<Eigen::Index>(train_batch.size()));
  for (std::size_t n = 0; n < train_batch.size(); ++n) {
    const nn::Gradients gn = sample_gradient(params, train_batch[n]);
    u[static_cast<Eigen::Index>(n)] = lr * val_grad.dot(gn);
  }
  return u;
}

Eigen::VectorXd normalize_weights(const Eigen::VectorXd& u) {
  Eigen::VectorXd w = u.cwiseMax(0.0);
  const double total = w.sum();
  if (total > 0.0) return w / total;
  return Eigen::VectorXd::Constant(u.size(), 1.0 / static_cast<double>(u.size()));
}

LrwResult lrw_train(const WeightedDataset& dataset, const LrwConfig& cfg, RngStream& rng) {
  const SplitView train = view_of(dataset, Split::Train);
  const SplitView val = view_of(dataset, Split::Val);
  const SplitView test = view_of(dataset, Split::Test);
  if (train.ids.empty() || val.ids.empty())
    throw DimensionError("lrw_train: train and validation splits must be non-empty");

  const int input_dim = static_cast<int>(train.examples.front().x.size());
  nn::MlpParams net = nn::make_mlp(input_dim, cfg.hidden, 1, rng);

  const int n_total = static_cast<int>(dataset.samples.size());
  std::vector<double> sum_norm(n_total, 0.0), sum_raw(n_total, 0.0);
  std::vector<long> appearances(n_total, 0);

  const std::uint64_t seed = rng.seed();
  std::vector<int> order(train.ids.size());
  std::iota(order.begin(), order.end(), 0);

  LrwResult res;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Without-replacement epoch order keyed on sample ids (not positions).
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const auto ka = order_key(seed, epoch, 0, train.ids[a]);
      const auto kb = order_key(seed, epoch, 0, train.ids[b]);
      return ka != kb ? ka < kb : train.ids[a] < train.ids[b];
    });

    const int n_train = static_cast<int>(order.size());
    int batch_index = 0;
    for (int begin = 0; begin < n_train; begin += cfg.batch_size, ++batch_index) {
      const int end = std::min(begin + cfg.batch_size, n_train);
      std::vector<LabeledExample> batch;
      std::vector<int> batch_ids;
      for (int i = begin; i < end; ++i) {
        batch.push_back(train.examples[order[i]]);
        batch_ids.push_back(train.ids[order[i]]);
      }

      // Validation mini-batch, also keyed on ids.
      std::vector<int> val_order(val.ids.size());
      std::iota(val_order.begin(), val_order.end(), 0);
      std::sort(val_order.begin(), val_order.end(), [&](int a, int b) {
        const auto ka = order_key(seed, epoch, 1000 + batch_index, val.ids[a]);
        const auto kb = order_key(seed, epoch, 1000 + batch_index, val.ids[b]);
        return ka != kb ? ka < kb : val.ids[a] < val.ids[b];
      });
      std::vector<LabeledExample> val_batch;
      const int n_val_batch = std::min<int>(cfg.batch_size, static_cast<int>(val.ids.size()));
      for (int i = 0; i < n_val_batch; ++i) val_batch.push_back(val.examples[val_order[i]]);

      const Eigen::VectorXd u = meta_gradients(net, batch, val_batch, cfg.meta_lr);
      const Eigen::VectorXd w = normalize_weights(u);

      // Outer step on the re-weighted loss.
      nn::Gradients outer = nn::Gradients::zeros_like(net);
      for (std::size_t n = 0; n < batch.size(); ++n) {
        nn::Gradients g = sample_gradient(net, batch[n]);
        g.scale(w[static_cast<Eigen::Index>(n)]);
        outer += g;
      }
      if (!outer.all_finite()) throw DivergenceError("lrw_train: non-finite outer gradient");
      for (std::size_t l = 0; l < net.layers.size(); ++l) {
        net.layers[l].W -= cfg.meta_lr * outer.dW[l];
        net.layers[l].b -= cfg.meta_lr * outer.db[l];
      }

      for (std::size_t n = 0; n < batch_ids.size(); ++n) {
        const int id = batch_ids[n];
        sum_raw[id] += std::max(u[static_cast<Eigen::Index>(n)], 0.0);
        sum_norm[id] += w[static_cast<Eigen::Index>(n)];
        appearances[id] += 1;
      }
    }

    res.train_accuracy.push_back(accuracy(net, train.examples));
    res.test_accuracy.push_back(accuracy(net, test.examples));
  }

  res.weight.assign(n_total, 0.0);
  res.raw_weight.assign(n_total, 0.0);
  double total = 0.0;
  for (int id : train.ids) {
    if (appearances[id] > 0) {
      res.weight[id] = sum_norm[id] / static_cast<double>(appearances[id]);
      res.raw_weight[id] = sum_raw[id] / static_cast<double>(appearances[id]);
    }
    total += res.weight[id];
  }
  if (total > 0.0)
    for (int id : train.ids) res.weight[id] /= total;
  res.classifier = std::move(net);
  res.final_test_accuracy = res.test_accuracy.empty() ? 0.0 : res.test_accuracy.back();
  return res;
}

BaselineResult baseline_train(const WeightedDataset& dataset, const LrwConfig& cfg,
                              RngStream& rng) {
  const SplitView train = view_of(dataset, Split::Train);
  const SplitView test = view_of(dataset, Split::Test);
  if (train.ids.empty()) throw DimensionError("baseline_train: train split is empty");

  const int input_dim = static_cast<int>(train.examples.front().x.size());
  nn::MlpParams net = nn::make_mlp(input_dim, cfg.hidden, 1, rng);
  const std::uint64_t seed = rng.seed();

  std::vector<int> order(train.ids.size());
  std::iota(order.begin(), order.end(), 0);

  BaselineResult res;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const auto ka = order_key(seed, epoch, 0, train.ids[a]);
      const auto kb = order_key(seed, epoch, 0, train.ids[b]);
      return ka != kb ? ka < kb : train.ids[a] < train.ids[b];
    });
    const int n_train = static_cast<int>(order.size());
    for (int begin = 0; begin < n_train; begin += cfg.batch_size) {
      const int end = std::min(begin + cfg.batch_size, n_train);
      std::vector<LabeledExample> batch;
      for (int i = begin; i < end; ++i) batch.push_back(train.examples[order[i]]);
      const nn::Gradients g = batch_gradient(net, batch);
      if (!g.all_finite()) throw DivergenceError("baseline_train: non-finite gradient");
      for (std::size_t l = 0; l < net.layers.size(); ++l) {
        net.layers[l].W -= cfg.baseline_lr * g.dW[l];
        net.layers[l].b -= cfg.baseline_lr * g.db[l];
      }
    }
    res.train_accuracy.push_back(accuracy(net, train.examples));
    res.test_accuracy.push_back(accuracy(net, test.examples));
  }
  res.classifier = std::move(net);
  res.final_test_accuracy = res.test_accuracy.empty() ? 0.0 : res.test_accuracy.back();
  return res;
}

void apply_weights(WeightedDataset& dataset, const LrwResult& result) {
  for (auto& s : dataset.samples) s.weight = result.weight[s.id];
}

void save_weight_table(const WeightedDataset& dataset, const LrwResult& result,
                       const std::string& path, std::uint64_t seed, std::uint64_t config_hash) {
  nlohmann::json j;
  j["tool_version"] = kToolVersion;
  j["seed"] = seed;
  j["config_hash"] = hex_hash(config_hash);
  auto& arr = j["weights"] = nlohmann::json::array();
  for (const auto& s : dataset.samples) {
    if (s.split != Split::Train) continue;
    arr.push_back({{"sample_id", s.id},
                   {"Jx", s.Jx},
                   {"Jy", s.Jy},
                   {"Jz", s.Jz},
                   {"raw_weight", result.raw_weight[s.id]},
                   {"normalized_weight", result.weight[s.id]}});
  }
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace bukf::lrw
