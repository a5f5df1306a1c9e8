#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bukf/neuralnet.hpp"

#include <cmath>

using namespace bukf;
using namespace bukf::nn;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Central finite-difference gradient of a scalar function of the parameters.
template <class LossFn>
Gradients fd_gradients(MlpParams params, const LossFn& loss, double h = 1e-5) {
  Gradients g = Gradients::zeros_like(params);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& W = params.layers[l].W;
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) {
        const double keep = W(r, c);
        W(r, c) = keep + h;
        const double up = loss(params);
        W(r, c) = keep - h;
        const double dn = loss(params);
        W(r, c) = keep;
        g.dW[l](r, c) = (up - dn) / (2.0 * h);
      }
    auto& b = params.layers[l].b;
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      const double keep = b[i];
      b[i] = keep + h;
      const double up = loss(params);
      b[i] = keep - h;
      const double dn = loss(params);
      b[i] = keep;
      g.db[l][i] = (up - dn) / (2.0 * h);
    }
  }
  return g;
}

double rel_grad_error(const Gradients& a, const Gradients& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t l = 0; l < a.dW.size(); ++l) {
    num += (a.dW[l] - b.dW[l]).squaredNorm() + (a.db[l] - b.db[l]).squaredNorm();
    den += b.dW[l].squaredNorm() + b.db[l].squaredNorm();
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

}  // namespace

TEST_CASE("forward: zero parameters give zero output") {
  MlpParams p;
  p.layers.push_back({MatrixXd::Zero(3, 2), VectorXd::Zero(3), Activation::ReLU});
  p.layers.push_back({MatrixXd::Zero(1, 3), VectorXd::Zero(1), Activation::Linear});
  VectorXd x(2);
  x << 1.5, -0.5;
  CHECK(forward(p, x)[0] == 0.0);
}

TEST_CASE("forward: single linear layer affine arithmetic") {
  MlpParams p;
  MatrixXd W(1, 1);
  W << 2.0;
  VectorXd b(1);
  b << 1.0;
  p.layers.push_back({W, b, Activation::Linear});
  VectorXd x(1);
  x << 3.0;
  CHECK(forward(p, x)[0] == doctest::Approx(7.0));
}

TEST_CASE("forward: ReLU clamps negatives") {
  MlpParams p;
  p.layers.push_back({MatrixXd::Identity(2, 2), VectorXd::Zero(2), Activation::ReLU});
  VectorXd x(2);
  x << -1.0, 2.0;
  const VectorXd y = forward(p, x);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 2.0);
}

TEST_CASE("forward: dimension mismatch throws") {
  RngStream rng(1);
  const MlpParams p = make_mlp(3, {4}, 2, rng);
  CHECK_THROWS_AS(forward(p, VectorXd(VectorXd::Zero(5))), DimensionError);
}

TEST_CASE("backward: zero upstream gives zero gradients") {
  RngStream rng(2);
  const MlpParams p = make_mlp(3, {5, 4}, 2, rng);
  const MatrixXd X = MatrixXd::Random(3, 6);
  const Gradients g = backward(p, X, MatrixXd::Zero(2, 6));
  for (const auto& m : g.dW) CHECK(m.norm() == 0.0);
  for (const auto& v : g.db) CHECK(v.norm() == 0.0);
}

TEST_CASE("backward: matches central finite differences on every layer type") {
  RngStream rng(3);
  const struct {
    std::vector<int> hidden;
    Activation hidden_act;
  } configs[] = {
      {{6}, Activation::ReLU},
      {{5, 4}, Activation::ReLU},
      {{4}, Activation::Sigmoid},
      {{}, Activation::Linear},
  };
  for (const auto& cfg : configs) {
    MlpParams p = make_mlp(3, cfg.hidden, 2, rng);
    for (std::size_t l = 0; l + 1 < p.layers.size(); ++l) p.layers[l].act = cfg.hidden_act;
    const MatrixXd X = MatrixXd::Random(3, 4);
    MatrixXd upstream = MatrixXd::Random(2, 4);

    const auto loss = [&](const MlpParams& q) {
      return (forward(q, X).cwiseProduct(upstream)).sum();
    };
    const Gradients analytic = backward(p, X, upstream);
    const Gradients numeric = fd_gradients(p, loss);
    CHECK(rel_grad_error(analytic, numeric) < 1e-4);
  }
}

TEST_CASE("backward: linear-layer weight gradient is the outer product") {
  MlpParams p;
  p.layers.push_back({MatrixXd::Random(3, 2), VectorXd::Random(3), Activation::Linear});
  const VectorXd x = VectorXd::Random(2);
  const VectorXd up = VectorXd::Random(3);
  const Gradients g = backward(p, MatrixXd(x), MatrixXd(up));
  CHECK((g.dW[0] - up * x.transpose()).norm() < 1e-12);
  CHECK((g.db[0] - up).norm() < 1e-12);
}

TEST_CASE("backward: input gradient is exact for a linear layer") {
  MlpParams p;
  p.layers.push_back({MatrixXd::Random(3, 2), VectorXd::Zero(3), Activation::Linear});
  ForwardCache cache;
  const MatrixXd X = MatrixXd::Random(2, 1);
  forward_cached(p, X, cache);
  const MatrixXd up = MatrixXd::Random(3, 1);
  MatrixXd dx;
  backward(p, cache, up, &dx);
  CHECK((dx - p.layers[0].W.transpose() * up).norm() < 1e-12);
}

TEST_CASE("time_encoding: endpoint values and periodicity") {
  const VectorXd at0 = time_encoding(0.0, 3);
  REQUIRE(at0.size() == 6);
  for (int k = 0; k < 3; ++k) {
    CHECK(at0[2 * k] == 0.0);
    CHECK(at0[2 * k + 1] == 1.0);
  }
  const VectorXd at_half = time_encoding(0.5, 1);
  CHECK(std::abs(at_half[0]) < 1e-15);          // sin π
  CHECK(at_half[1] == doctest::Approx(-1.0));   // cos π

  // exactly periodic whenever s+1 is representable (dyadic s)
  const VectorXd a = time_encoding(0.375, 4);
  const VectorXd b = time_encoding(1.375, 4);
  CHECK(a == b);
  CHECK((time_encoding(0.37, 4) - time_encoding(1.37, 4)).norm() < 1e-14);
}

TEST_CASE("bce_loss: values, limits and gradients") {
  CHECK(bce_loss(0.0, 1).loss == doctest::Approx(std::log(2.0)));
  CHECK(bce_loss(40.0, 1).loss < 1e-12);
  CHECK(bce_loss(-40.0, 0).loss < 1e-12);
  CHECK(bce_loss(0.0, 0).dlogit == doctest::Approx(0.5));
  CHECK(bce_loss(0.0, 1).dlogit == doctest::Approx(-0.5));
  // stable in the far tails
  CHECK(std::isfinite(bce_loss(800.0, 0).loss));
  CHECK(std::isfinite(bce_loss(-800.0, 1).loss));
}

TEST_CASE("sgd_step: scalar arithmetic and zero-gradient fixpoint") {
  MlpParams p;
  MatrixXd W(1, 1);
  W << 1.0;
  p.layers.push_back({W, VectorXd::Zero(1), Activation::Linear});
  Gradients g = Gradients::zeros_like(p);
  g.dW[0](0, 0) = 2.0;
  sgd_step(p, g, 0.1);
  CHECK(p.layers[0].W(0, 0) == doctest::Approx(0.8));

  const MlpParams before = p;
  g.set_zero();
  sgd_step(p, g, 0.1);
  CHECK(p.layers[0].W(0, 0) == before.layers[0].W(0, 0));
}

TEST_CASE("adam_step: bias-corrected unit first step, zero-gradient fixpoint") {
  RngStream rng(4);
  MlpParams p = make_mlp(1, {}, 1, rng);
  AdamState st = AdamState::zeros_like(p);
  Gradients g = Gradients::zeros_like(p);
  g.dW[0](0, 0) = 0.37;
  const double before = p.layers[0].W(0, 0);
  adam_step(p, g, 1e-3, st);
  CHECK(std::abs(std::abs(p.layers[0].W(0, 0) - before) - 1e-3) < 1e-6 * 1e-3 + 1e-11);

  MlpParams q = make_mlp(1, {}, 1, rng);
  AdamState st2 = AdamState::zeros_like(q);
  const double keep = q.layers[0].W(0, 0);
  Gradients zero = Gradients::zeros_like(q);
  adam_step(q, zero, 1e-3, st2);
  CHECK(std::abs(q.layers[0].W(0, 0) - keep) < 1e-12);
}

TEST_CASE("optimizers: non-finite gradients raise a divergence error") {
  RngStream rng(5);
  MlpParams p = make_mlp(2, {3}, 1, rng);
  Gradients g = Gradients::zeros_like(p);
  g.dW[0](0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(sgd_step(p, g, 0.1), DivergenceError);
  AdamState st = AdamState::zeros_like(p);
  CHECK_THROWS_AS(adam_step(p, g, 0.1, st), DivergenceError);
}

TEST_CASE("training: loss decreases on a linearly separable toy set") {
  RngStream rng(6);
  MlpParams p = make_mlp(1, {8}, 1, rng);
  std::vector<std::pair<double, int>> data;
  for (int i = 0; i < 40; ++i) {
    const double x = rng.normal();
    data.push_back({x, x > 0.0 ? 1 : 0});
  }
  const auto epoch_loss = [&](const MlpParams& q) {
    double acc = 0.0;
    for (const auto& [x, y] : data)
      acc += bce_loss(forward(q, VectorXd(VectorXd::Constant(1, x)))[0], y).loss;
    return acc / data.size();
  };

  std::vector<double> losses;
  for (int step = 0; step < 100; ++step) {
    losses.push_back(epoch_loss(p));
    Gradients g = Gradients::zeros_like(p);
    for (const auto& [x, y] : data) {
      ForwardCache cache;
      const MatrixXd out = forward_cached(p, MatrixXd(VectorXd::Constant(1, x)), cache);
      MatrixXd up(1, 1);
      up(0, 0) = bce_loss(out(0, 0), y).dlogit / data.size();
      g += backward(p, cache, up);
    }
    sgd_step(p, g, 0.5);
  }
  // monotone after averaging windows of 10
  for (int w = 0; w + 1 < 10; ++w) {
    double a = 0.0, b = 0.0;
    for (int i = 0; i < 10; ++i) {
      a += losses[10 * w + i];
      b += losses[10 * (w + 1) + i];
    }
    CHECK(b <= a + 1e-12);
  }
}

TEST_CASE("checkpoint: round-trip preserves parameters bitwise") {
  RngStream rng(7);
  const MlpParams p = make_mlp(3, {5, 4}, 2, rng);
  const nlohmann::json j = checkpoint_json(p, 7, 123);
  const MlpParams q = mlp_from_checkpoint(j);
  REQUIRE(q.layers.size() == p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    CHECK(q.layers[l].W == p.layers[l].W);
    CHECK(q.layers[l].b == p.layers[l].b);
    CHECK(q.layers[l].act == p.layers[l].act);
  }
  CHECK(j.at("seed").get<std::uint64_t>() == 7);
  CHECK(j.at("step").get<long>() == 123);
}

TEST_CASE("make_mlp: deterministic and finite under a fixed seed") {
  RngStream a(8), b(8);
  const MlpParams pa = make_mlp(4, {16, 8}, 3, a);
  const MlpParams pb = make_mlp(4, {16, 8}, 3, b);
  for (std::size_t l = 0; l < pa.layers.size(); ++l) {
    CHECK(pa.layers[l].W == pb.layers[l].W);
    CHECK(pa.layers[l].W.allFinite());
  }
  CHECK(pa.input_dim() == 4);
  CHECK(pa.output_dim() == 3);
}
