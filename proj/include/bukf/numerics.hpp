#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace bukf {

/// Raised when an integrator or training loop produces non-finite values.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& what, double time = 0.0)
      : std::runtime_error(what), t(time) {}
  double t;
};

/// Raised when a factorization fails (e.g. Cholesky on an indefinite matrix).
struct DecompositionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised on mismatched vector/matrix dimensions.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Scalar-first quaternion, Hamilton convention.
struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const;
  Quaternion normalized() const;
  Quaternion conjugate() const;
  Eigen::Vector4d coeffs() const;  // (w, x, y, z)
  static Quaternion from_coeffs(const Eigen::Vector4d& v);
};

/// Hamilton product a ⊗ b.
Quaternion quat_mul(const Quaternion& a, const Quaternion& b);

/// Deterministic seedable random stream: xoshiro256++ seeded through
/// splitmix64, normal variates by Box-Muller. The same seed yields a
/// bit-identical sequence on every platform. A stream is single-owner;
/// concurrent consumers must derive independent substreams via split().
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();  // [0, 1)
  double normal();   // N(0, 1)

  /// Independent substream keyed on (seed, key).
  RngStream split(std::uint64_t key) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Classical fixed-step RK4 update for dx/dt = f(t, x).
/// Throws DivergenceError (carrying t) if the result is non-finite.
template <class F, class Vec>
Vec rk4_step(F&& f, const Vec& x, double t, double dt) {
  if (!(dt > 0.0)) throw DimensionError("rk4_step: dt must be positive");
  const Vec k1 = f(t, x);
  const Vec k2 = f(t + 0.5 * dt, Vec(x + (0.5 * dt) * k1));
  const Vec k3 = f(t + 0.5 * dt, Vec(x + (0.5 * dt) * k2));
  const Vec k4 = f(t + dt, Vec(x + dt * k3));
  Vec out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!out.allFinite()) throw DivergenceError("rk4_step: non-finite state", t);
  return out;
}

/// Lower-triangular L with L·Lᵀ = P. Throws DecompositionError when P is not
/// positive definite; callers apply symmetrize_jitter and retry once.
Eigen::MatrixXd cholesky(const Eigen::MatrixXd& P);

/// (P + Pᵀ)/2 + eps·I.
Eigen::MatrixXd symmetrize_jitter(const Eigen::MatrixXd& P, double eps);

/// Module default jitter: 1e-9 × mean diagonal magnitude.
double default_jitter(const Eigen::MatrixXd& P);

/// mean + L·z with z i.i.d. standard normal and L = cholesky(cov).
/// A covariance with an all-zero diagonal short-circuits to the mean exactly
/// without consuming draws.
Eigen::VectorXd gaussian_sample(RngStream& rng, const Eigen::VectorXd& mean,
                                const Eigen::MatrixXd& cov);

/// FNV-1a over a byte string; stable across platforms, used for content hashes.
std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace bukf
