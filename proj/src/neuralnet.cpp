#include "bukf/neuralnet.hpp"

#include <cmath>

namespace bukf::nn {

namespace {

Eigen::MatrixXd apply_activation(Activation act, const Eigen::MatrixXd& z) {
  switch (act) {
    case Activation::Linear:
      return z;
    case Activation::ReLU:
      return z.cwiseMax(0.0);
    case Activation::Sigmoid:
      return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  }
  return z;
}

Eigen::MatrixXd activation_grad(Activation act, const Eigen::MatrixXd& z) {
  switch (act) {
    case Activation::Linear:
      return Eigen::MatrixXd::Ones(z.rows(), z.cols());
    case Activation::ReLU:
      return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    case Activation::Sigmoid:
      return z.unaryExpr([](double v) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 - s);
      });
  }
  return Eigen::MatrixXd::Ones(z.rows(), z.cols());
}

double stable_sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

std::string activation_to_string(Activation a) {
  switch (a) {
    case Activation::Linear: return "linear";
    case Activation::ReLU: return "relu";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "linear";
}

Activation activation_from_string(const std::string& s) {
  if (s == "linear") return Activation::Linear;
  if (s == "relu") return Activation::ReLU;
  if (s == "sigmoid") return Activation::Sigmoid;
  throw std::invalid_argument("unknown activation: " + s);
}

int MlpParams::input_dim() const {
  return layers.empty() ? 0 : static_cast<int>(layers.front().W.cols());
}

int MlpParams::output_dim() const {
  return layers.empty() ? 0 : static_cast<int>(layers.back().W.rows());
}

Gradients Gradients::zeros_like(const MlpParams& p) {
  Gradients g;
  for (const auto& l : p.layers) {
    g.dW.emplace_back(Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()));
    g.db.emplace_back(Eigen::VectorXd::Zero(l.b.size()));
  }
  return g;
}

void Gradients::set_zero() {
  for (auto& m : dW) m.setZero();
  for (auto& v : db) v.setZero();
}

Gradients& Gradients::operator+=(const Gradients& o) {
  for (std::size_t l = 0; l < dW.size(); ++l) {
    dW[l] += o.dW[l];
    db[l] += o.db[l];
  }
  return *this;
}

void Gradients::scale(double c) {
  for (auto& m : dW) m *= c;
  for (auto& v : db) v *= c;
}

double Gradients::dot(const Gradients& o) const {
  double acc = 0.0;
  for (std::size_t l = 0; l < dW.size(); ++l) {
    acc += dW[l].cwiseProduct(o.dW[l]).sum();
    acc += db[l].dot(o.db[l]);
  }
  return acc;
}

bool Gradients::all_finite() const {
  for (const auto& m : dW)
    if (!m.allFinite()) return false;
  for (const auto& v : db)
    if (!v.allFinite()) return false;
  return true;
}

MlpParams make_mlp(int input, const std::vector<int>& hidden, int output, RngStream& rng) {
  if (input < 1 || output < 1) throw DimensionError("make_mlp: invalid dimensions");
  std::vector<int> widths;
  widths.push_back(input);
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(output);

  MlpParams p;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    Layer layer;
    const int fan_in = widths[l];
    const int fan_out = widths[l + 1];
    const double limit = std::sqrt(6.0 / fan_in);
    layer.W.resize(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) layer.W(r, c) = limit * (2.0 * rng.uniform() - 1.0);
    layer.b = Eigen::VectorXd::Zero(fan_out);
    layer.act = (l + 2 < widths.size()) ? Activation::ReLU : Activation::Linear;
    p.layers.push_back(std::move(layer));
  }
  return p;
}

Eigen::MatrixXd forward(const MlpParams& p, const Eigen::MatrixXd& X) {
  if (X.rows() != p.input_dim()) throw DimensionError("forward: input width mismatch");
  Eigen::MatrixXd a = X;
  for (const auto& l : p.layers) {
    Eigen::MatrixXd z = (l.W * a).colwise() + l.b;
    a = apply_activation(l.act, z);
  }
  return a;
}

Eigen::VectorXd forward(const MlpParams& p, const Eigen::VectorXd& x) {
  return forward(p, Eigen::MatrixXd(x)).col(0);
}

Eigen::MatrixXd forward_cached(const MlpParams& p, const Eigen::MatrixXd& X,
                               ForwardCache& cache) {
  if (X.rows() != p.input_dim()) throw DimensionError("forward_cached: input width mismatch");
  cache.inputs.clear();
  cache.pre.clear();
  Eigen::MatrixXd a = X;
  for (const auto& l : p.layers) {
    cache.inputs.push_back(a);
    Eigen::MatrixXd z = (l.W * a).colwise() + l.b;
    cache.pre.push_back(z);
    a = apply_activation(l.act, z);
  }
  return a;
}

Gradients backward(const MlpParams& p, const ForwardCache& cache, const Eigen::MatrixXd& upstream,
                   Eigen::MatrixXd* input_grad) {
  const int L = static_cast<int>(p.layers.size());
  if (static_cast<int>(cache.inputs.size()) != L)
    throw DimensionError("backward: cache does not match network");
  if (upstream.rows() != p.output_dim() || upstream.cols() != cache.inputs.front().cols())
    throw DimensionError("backward: upstream shape mismatch");

  Gradients g = Gradients::zeros_like(p);
  Eigen::MatrixXd delta = upstream;
  for (int l = L - 1; l >= 0; --l) {
    delta = delta.cwiseProduct(activation_grad(p.layers[l].act, cache.pre[l]));
    g.dW[l] = delta * cache.inputs[l].transpose();
    g.db[l] = delta.rowwise().sum();
    if (l > 0 || input_grad != nullptr) delta = p.layers[l].W.transpose() * delta;
  }
  if (input_grad != nullptr) *input_grad = delta;
  return g;
}

Gradients backward(const MlpParams& p, const Eigen::MatrixXd& input,
                   const Eigen::MatrixXd& upstream) {
  ForwardCache cache;
  forward_cached(p, input, cache);
  return backward(p, cache, upstream);
}

Eigen::VectorXd time_encoding(double s, int pairs) {
  if (pairs < 1) throw DimensionError("time_encoding: pairs must be >= 1");
  const double frac = s - std::floor(s);
  Eigen::VectorXd enc(2 * pairs);
  double freq = 1.0;
  for (int k = 0; k < pairs; ++k) {
    const double arg = 2.0 * M_PI * freq * frac;
    enc[2 * k] = std::sin(arg);
    enc[2 * k + 1] = std::cos(arg);
    freq *= 2.0;
  }
  return enc;
}

BceLoss bce_loss(double logit, int label) {
  const double y = label ? 1.0 : 0.0;
  const double loss =
      std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-std::abs(logit)));
  return {loss, stable_sigmoid(logit) - y};
}

void sgd_step(MlpParams& p, const Gradients& g, double lr) {
  if (!(lr > 0.0)) throw DimensionError("sgd_step: lr must be positive");
  if (!g.all_finite()) throw DivergenceError("sgd_step: non-finite gradients");
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    p.layers[l].W -= lr * g.dW[l];
    p.layers[l].b -= lr * g.db[l];
  }
}

AdamState AdamState::zeros_like(const MlpParams& p) {
  AdamState st;
  for (const auto& l : p.layers) {
    st.mW.emplace_back(Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()));
    st.vW.emplace_back(Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()));
    st.mb.emplace_back(Eigen::VectorXd::Zero(l.b.size()));
    st.vb.emplace_back(Eigen::VectorXd::Zero(l.b.size()));
  }
  return st;
}

void adam_step(MlpParams& p, const Gradients& g, double lr, AdamState& state) {
  if (!(lr > 0.0)) throw DimensionError("adam_step: lr must be positive");
  if (!g.all_finite()) throw DivergenceError("adam_step: non-finite gradients");
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  state.step += 1;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    state.mW[l] = b1 * state.mW[l] + (1.0 - b1) * g.dW[l];
    state.vW[l] = b2 * state.vW[l] + (1.0 - b2) * g.dW[l].cwiseProduct(g.dW[l]);
    state.mb[l] = b1 * state.mb[l] + (1.0 - b1) * g.db[l];
    state.vb[l] = b2 * state.vb[l] + (1.0 - b2) * g.db[l].cwiseProduct(g.db[l]);
    p.layers[l].W -=
        lr * ((state.mW[l] / c1).array() / ((state.vW[l] / c2).cwiseSqrt().array() + eps))
                 .matrix();
    p.layers[l].b -=
        lr * ((state.mb[l] / c1).array() / ((state.vb[l] / c2).cwiseSqrt().array() + eps))
                 .matrix();
  }
}

nlohmann::json checkpoint_json(const MlpParams& p, std::uint64_t seed, long step) {
  nlohmann::json j;
  j["seed"] = seed;
  j["step"] = step;
  auto& layers = j["layers"] = nlohmann::json::array();
  for (const auto& l : p.layers) {
    nlohmann::json lj;
    lj["rows"] = l.W.rows();
    lj["cols"] = l.W.cols();
    lj["activation"] = activation_to_string(l.act);
    std::vector<double> w(l.W.size());
    for (Eigen::Index r = 0; r < l.W.rows(); ++r)
      for (Eigen::Index c = 0; c < l.W.cols(); ++c)
        w[static_cast<std::size_t>(r * l.W.cols() + c)] = l.W(r, c);  // row-major
    lj["W"] = w;
    lj["b"] = std::vector<double>(l.b.data(), l.b.data() + l.b.size());
    layers.push_back(std::move(lj));
  }
  return j;
}

MlpParams mlp_from_checkpoint(const nlohmann::json& j) {
  MlpParams p;
  for (const auto& lj : j.at("layers")) {
    Layer l;
    const Eigen::Index rows = lj.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = lj.at("cols").get<Eigen::Index>();
    l.act = activation_from_string(lj.at("activation").get<std::string>());
    const auto w = lj.at("W").get<std::vector<double>>();
    const auto b = lj.at("b").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != rows * cols ||
        static_cast<Eigen::Index>(b.size()) != rows)
      throw DimensionError("mlp_from_checkpoint: shape mismatch");
    l.W.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) l.W(r, c) = w[static_cast<std::size_t>(r * cols + c)];
    l.b = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
    p.layers.push_back(std::move(l));
  }
  return p;
}

}  // namespace bukf::nn
