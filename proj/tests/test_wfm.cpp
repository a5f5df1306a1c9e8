#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bukf/io.hpp"
#include "bukf/wfm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

using namespace bukf;
using namespace bukf::wfm;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

FlowField constant_field(int d, const VectorXd& c, double eps_min = 1e-3, int pairs = 8) {
  FlowField f;
  f.d = d;
  f.eps_min = eps_min;
  f.encoding_pairs = pairs;
  nn::Layer layer;
  layer.W = MatrixXd::Zero(d, d + 2 * pairs);
  layer.b = c;
  layer.act = nn::Activation::Linear;
  f.net.layers.push_back(layer);
  return f;
}

FlowTrainConfig quick_config(int epochs, std::vector<int> hidden = {32, 32}) {
  FlowTrainConfig cfg;
  cfg.epochs = epochs;
  cfg.lr = 1e-3;
  cfg.batch_size = 64;
  cfg.hidden = std::move(hidden);
  cfg.ode_steps = 50;
  return cfg;
}

double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("ot_interpolate: endpoints and the eps-free midpoint") {
  VectorXd x0(1), x1(1);
  x0 << 1.0;
  x1 << 3.0;
  CHECK(ot_interpolate(x0, x1, 0.0, 0.01) == x0);
  CHECK(ot_interpolate(x0, x1, 1.0, 0.01)[0] == doctest::Approx(3.01));
  CHECK(ot_interpolate(x0, x1, 0.5, 0.0)[0] == doctest::Approx(2.0));
}

TEST_CASE("target_velocity: unit denominator at s = 0, stationary path") {
  RngStream rng(1);
  VectorXd x0(3), x1(3);
  for (int i = 0; i < 3; ++i) {
    x0[i] = rng.normal();
    x1[i] = rng.normal();
  }
  const double eps = 0.01;
  CHECK((target_velocity(x0, x1, 0.0, eps) - (x1 - (1.0 - eps) * x0)).norm() < 1e-14);

  const VectorXd stationary = (1.0 - eps) * x0;
  for (double s : {0.0, 0.3, 0.7, 1.0})
    CHECK(target_velocity(x0, stationary, s, eps).norm() < 1e-14);
}

TEST_CASE("target_velocity: exact s-derivative of the interpolation") {
  RngStream rng(2);
  VectorXd x0(4), x1(4);
  for (int i = 0; i < 4; ++i) {
    x0[i] = rng.normal();
    x1[i] = 2.0 * rng.normal();
  }
  const double eps = 1e-3;
  const double h = 1e-6;
  for (double s : {0.05, 0.3, 0.55, 0.8, 0.95}) {
    const VectorXd fd =
        (ot_interpolate(x0, x1, s + h, eps) - ot_interpolate(x0, x1, s - h, eps)) / (2.0 * h);
    const VectorXd u = target_velocity(x0, x1, s, eps);
    CHECK((u - fd).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("wfm_loss: normalization cancels for uniform weights") {
  RngStream rng(3);
  FlowField field;
  field.d = 2;
  field.eps_min = 1e-3;
  field.encoding_pairs = 4;
  field.net = nn::make_mlp(2 + 8, {8}, 2, rng);

  const int B = 64;
  FlowBatch batch;
  batch.x0.resize(2, B);
  batch.x1.resize(2, B);
  batch.s.resize(B);
  for (int c = 0; c < B; ++c) {
    for (int r = 0; r < 2; ++r) {
      batch.x0(r, c) = rng.normal();
      batch.x1(r, c) = rng.normal() + 2.0;
    }
    batch.s[c] = rng.uniform();
  }

  const LossGrad unit = wfm_loss(field, batch, VectorXd::Ones(B));
  const LossGrad scaled = wfm_loss(field, batch, VectorXd::Constant(B, 1.0 / 64.0));
  CHECK(unit.loss == scaled.loss);  // bitwise: 1/64 scales are exact
  for (std::size_t l = 0; l < unit.grads.dW.size(); ++l)
    CHECK(unit.grads.dW[l] == scaled.grads.dW[l]);
}

TEST_CASE("wfm_loss: weight concentrated on one element reduces to that element") {
  RngStream rng(4);
  FlowField field;
  field.d = 1;
  field.eps_min = 1e-3;
  field.encoding_pairs = 2;
  field.net = nn::make_mlp(1 + 4, {6}, 1, rng);

  const int B = 5;
  FlowBatch batch;
  batch.x0.resize(1, B);
  batch.x1.resize(1, B);
  batch.s.resize(B);
  for (int c = 0; c < B; ++c) {
    batch.x0(0, c) = rng.normal();
    batch.x1(0, c) = rng.normal();
    batch.s[c] = rng.uniform();
  }
  VectorXd w = VectorXd::Zero(B);
  w[2] = 0.7;
  const double focused = wfm_loss(field, batch, w).loss;

  FlowBatch single;
  single.x0 = batch.x0.col(2);
  single.x1 = batch.x1.col(2);
  single.s = batch.s.segment(2, 1);
  const double alone = wfm_loss(field, single, VectorXd::Ones(1)).loss;
  CHECK(focused == doctest::Approx(alone).epsilon(1e-12));
}

TEST_CASE("wfm_loss: vanishes when the field equals the target") {
  // single fixed pair: the conditional target is constant, so a bias-only
  // net reproduces it exactly
  VectorXd x0(2), x1(2);
  x0 << 0.5, -1.0;
  x1 << 2.0, 1.0;
  const double eps = 1e-3;
  const VectorXd u = x1 - (1.0 - eps) * x0;
  const FlowField field = constant_field(2, u, eps, 3);

  FlowBatch batch;
  const int B = 7;
  batch.x0 = x0.replicate(1, B);
  batch.x1 = x1.replicate(1, B);
  batch.s.resize(B);
  for (int c = 0; c < B; ++c) batch.s[c] = c / 7.0;
  const LossGrad lg = wfm_loss(field, batch, VectorXd::Ones(B));
  CHECK(lg.loss < 1e-22);
}

TEST_CASE("wfm_loss: all-zero weights raise a degenerate-batch error") {
  const FlowField field = constant_field(1, VectorXd::Zero(1));
  FlowBatch batch;
  batch.x0 = MatrixXd::Zero(1, 3);
  batch.x1 = MatrixXd::Ones(1, 3);
  batch.s = VectorXd::Constant(3, 0.5);
  CHECK_THROWS_AS(wfm_loss(field, batch, VectorXd::Zero(3)), DegenerateBatchError);
}

TEST_CASE("wfm_sample: the zero field is the identity transport") {
  const FlowField zero = constant_field(2, VectorXd::Zero(2));
  RngStream rng(5);
  const MatrixXd samples = wfm_sample(zero, 40, rng, 30);

  RngStream replay(5);
  MatrixXd draws(2, 40);
  for (int c = 0; c < 40; ++c)
    for (int r = 0; r < 2; ++r) draws(r, c) = replay.normal();
  CHECK(samples == draws);
}

TEST_CASE("wfm_sample: a constant field shifts the draws") {
  VectorXd c(2);
  c << 1.5, -2.0;
  const FlowField field = constant_field(2, c);
  RngStream rng(6);
  const MatrixXd samples = wfm_sample(field, 25, rng, 100);
  RngStream replay(6);
  for (int col = 0; col < 25; ++col) {
    VectorXd draw(2);
    for (int r = 0; r < 2; ++r) draw[r] = replay.normal();
    CHECK((samples.col(col) - (draw + c)).norm() < 1e-9);
  }
}

TEST_CASE("wfm_sample: doubling the ODE steps barely moves smooth-field endpoints") {
  RngStream init(7);
  FlowField field;
  field.d = 2;
  field.eps_min = 1e-3;
  field.encoding_pairs = 2;  // low frequency content, as in a trained field
  field.net = nn::make_mlp(2 + 4, {16, 16}, 2, init);
  for (auto& l : field.net.layers) {
    l.W *= 0.3;  // keep the field mild
    if (l.act == nn::Activation::ReLU) l.act = nn::Activation::Sigmoid;  // C∞ in x
  }

  RngStream r1(8), r2(8);
  const MatrixXd a = wfm_sample(field, 20, r1, 100);
  const MatrixXd b = wfm_sample(field, 20, r2, 200);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("wfm_sample: zero field passes a KS test against the standard normal") {
  const FlowField zero = constant_field(1, VectorXd::Zero(1));
  RngStream rng(9);
  const int m = 5000;
  const MatrixXd samples = wfm_sample(zero, m, rng, 20);
  std::vector<double> sorted(samples.data(), samples.data() + m);
  std::sort(sorted.begin(), sorted.end());
  double ks = 0.0;
  for (int i = 0; i < m; ++i) {
    const double cdf = standard_normal_cdf(sorted[i]);
    ks = std::max(ks, std::abs(cdf - (i + 1.0) / m));
    ks = std::max(ks, std::abs(cdf - static_cast<double>(i) / m));
  }
  CHECK(ks < 1.628 / std::sqrt(static_cast<double>(m)));  // α = 0.01
}

TEST_CASE("gaussian_summary: two-point and degenerate cases") {
  {
    MatrixXd s(3, 2);
    s.col(0) = Eigen::Vector3d(0.0, 0.0, 0.0);
    s.col(1) = Eigen::Vector3d(2.0, 2.0, 2.0);
    const GaussianBelief g = gaussian_summary(s);
    CHECK((g.mean - Eigen::Vector3d(1.0, 1.0, 1.0)).norm() < 1e-14);
    const MatrixXd expected = 2.0 * MatrixXd::Ones(3, 3);
    CHECK((g.cov - expected).cwiseAbs().maxCoeff() < 1e-8);  // jitter on the diagonal
    CHECK(g.cov(0, 0) > 2.0);
  }
  {
    MatrixXd s = MatrixXd::Constant(2, 5, 4.2);
    const GaussianBelief g = gaussian_summary(s);
    CHECK(g.mean[0] == doctest::Approx(4.2));
    CHECK((g.cov - 1e-9 * MatrixXd::Identity(2, 2)).norm() == 0.0);
    CHECK_NOTHROW(cholesky(g.cov));
  }
}

TEST_CASE("gaussian_summary: recovers the moments of a known Gaussian") {
  RngStream rng(10);
  VectorXd mu(2);
  mu << 3.0, -1.0;
  MatrixXd cov(2, 2);
  cov << 2.0, 0.6, 0.6, 1.0;
  const int m = 20000;
  MatrixXd samples(2, m);
  for (int c = 0; c < m; ++c) samples.col(c) = gaussian_sample(rng, mu, cov);
  const GaussianBelief g = gaussian_summary(samples);
  CHECK((g.mean - mu).cwiseAbs().maxCoeff() < 0.05);
  CHECK((g.cov - cov).cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("wfm_fit: recovers a shifted 1-D Gaussian at desk scale") {
  RngStream data_rng(11);
  const int n = 500;
  MatrixXd X(1, n);
  for (int i = 0; i < n; ++i) X(0, i) = 2.0 + 0.5 * data_rng.normal();

  RngStream rng(12);
  const FlowField field = wfm_fit(X, VectorXd::Ones(n), quick_config(400), rng);

  RngStream sample_rng(13);
  const MatrixXd gen = wfm_sample(field, 2000, sample_rng, 50);
  const double mean = gen.mean();
  const double sd = std::sqrt((gen.array() - mean).square().sum() / (gen.cols() - 1));
  CHECK(std::abs(mean - 2.0) < 0.2);
  CHECK(std::abs(sd - 0.5) < 0.2);
}

TEST_CASE("wfm_fit: zero-weight mode receives almost no generated mass") {
  RngStream data_rng(14);
  const int n = 400;
  MatrixXd X(1, n);
  VectorXd w(n);
  for (int i = 0; i < n; ++i) {
    const bool left = i < n / 2;
    X(0, i) = (left ? -3.0 : 3.0) + 0.3 * data_rng.normal();
    w[i] = left ? 1.0 : 0.0;
  }
  RngStream rng(15);
  const FlowField field = wfm_fit(X, w, quick_config(300), rng);
  RngStream sample_rng(16);
  const MatrixXd gen = wfm_sample(field, 2000, sample_rng, 50);
  int in_right_mode = 0;
  for (int c = 0; c < gen.cols(); ++c)
    if (gen(0, c) > 3.0 - 0.9 && gen(0, c) < 3.0 + 0.9) ++in_right_mode;
  CHECK(static_cast<double>(in_right_mode) / gen.cols() < 0.05);
}

TEST_CASE("wfm_fit: identical checkpoints under a fixed seed") {
  RngStream data_rng(17);
  MatrixXd X(1, 50);
  for (int i = 0; i < 50; ++i) X(0, i) = data_rng.normal();
  RngStream r1(18), r2(18);
  const FlowField a = wfm_fit(X, VectorXd::Ones(50), quick_config(5, {8}), r1);
  const FlowField b = wfm_fit(X, VectorXd::Ones(50), quick_config(5, {8}), r2);
  save_flow_json(a, "flow_a.json", 18);
  save_flow_json(b, "flow_b.json", 18);
  CHECK(hash_file("flow_a.json") == hash_file("flow_b.json"));

  const FlowField loaded = load_flow_json("flow_a.json");
  CHECK(loaded.d == a.d);
  CHECK(loaded.eps_min == a.eps_min);
  CHECK(loaded.net.layers.size() == a.net.layers.size());
  for (std::size_t l = 0; l < a.net.layers.size(); ++l)
    CHECK(loaded.net.layers[l].W == a.net.layers[l].W);
  std::remove("flow_a.json");
  std::remove("flow_b.json");
}

TEST_CASE("summary json: round-trip") {
  GaussianBelief g;
  g.mean = Eigen::Vector3d(100.0, 80.0, 70.0);
  g.cov = Eigen::Vector3d(1.0, 2.0, 3.0).asDiagonal();
  save_summary_json(g, 4000, "summary_test.json", 42, 7);
  const GaussianBelief back = load_summary_json("summary_test.json");
  CHECK(back.mean == g.mean);
  CHECK(back.cov == g.cov);
  const std::string text = read_text_file("summary_test.json");
  CHECK(text.find("config_hash") != std::string::npos);
  CHECK(text.find("tool_version") != std::string::npos);
  std::remove("summary_test.json");
}
