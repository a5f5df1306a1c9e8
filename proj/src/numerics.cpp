#include "bukf/numerics.hpp"

#include <cmath>

namespace bukf {

namespace {

inline std::uint64_t rotl64(std::uint64_t v, int k) {
  return (v << k) | (v >> (64 - k));
}

inline std::uint64_t splitmix64(std::uint64_t& s) {
  std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

double Quaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quaternion Quaternion::normalized() const {
  const double n = norm();
  if (n <= 0.0) throw DivergenceError("Quaternion::normalized: zero norm");
  return {w / n, x / n, y / n, z / n};
}

Quaternion Quaternion::conjugate() const { return {w, -x, -y, -z}; }

Eigen::Vector4d Quaternion::coeffs() const { return {w, x, y, z}; }

Quaternion Quaternion::from_coeffs(const Eigen::Vector4d& v) {
  return {v[0], v[1], v[2], v[3]};
}

Quaternion quat_mul(const Quaternion& a, const Quaternion& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

RngStream::RngStream(std::uint64_t seed) : seed_(seed) {
  std::uint64_t s = seed;
  for (auto& word : state_) word = splitmix64(s);
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t result = rotl64(state_[0] + state_[3], 23) + state_[0];
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl64(state_[3], 45);
  return result;
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

RngStream RngStream::split(std::uint64_t key) const {
  std::uint64_t s = seed_ ^ rotl64(key + 0x9e3779b97f4a7c15ULL, 31);
  const std::uint64_t a = splitmix64(s);
  std::uint64_t s2 = a ^ key;
  return RngStream(splitmix64(s2));
}

Eigen::MatrixXd cholesky(const Eigen::MatrixXd& P) {
  if (P.rows() != P.cols()) throw DimensionError("cholesky: matrix must be square");
  Eigen::LLT<Eigen::MatrixXd> llt(P);
  if (llt.info() != Eigen::Success)
    throw DecompositionError("cholesky: matrix is not positive definite");
  return llt.matrixL();
}

Eigen::MatrixXd symmetrize_jitter(const Eigen::MatrixXd& P, double eps) {
  if (P.rows() != P.cols()) throw DimensionError("symmetrize_jitter: matrix must be square");
  Eigen::MatrixXd out = 0.5 * (P + P.transpose());
  out.diagonal().array() += eps;
  return out;
}

double default_jitter(const Eigen::MatrixXd& P) {
  return 1e-9 * P.diagonal().cwiseAbs().mean();
}

Eigen::VectorXd gaussian_sample(RngStream& rng, const Eigen::VectorXd& mean,
                                const Eigen::MatrixXd& cov) {
  if (cov.rows() != mean.size() || cov.cols() != mean.size())
    throw DimensionError("gaussian_sample: covariance/mean dimension mismatch");
  if (cov.diagonal().isZero(0.0)) return mean;
  const Eigen::MatrixXd L = cholesky(cov);
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return mean + L * z;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= static_cast<std::uint64_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace bukf
