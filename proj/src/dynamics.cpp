#include "bukf/dynamics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace bukf {

namespace {

using Vec7 = Eigen::Matrix<double, 7, 1>;

Eigen::Vector3d full_profile(double t) {
  return {1.0 * std::sin(0.1 * t) + 2.5 * std::cos(0.3 * t) + 1.0 * std::sin(0.7 * t) +
              1.0 * std::sin(1.5 * t),
          2.6 * std::cos(0.15 * t) + 3.0 * std::sin(0.4 * t) + 2.4 * std::cos(0.8 * t) +
              1.8 * std::cos(1.8 * t),
          3.4 * std::sin(0.12 * t) + 2.1 * std::cos(0.5 * t) + 1.0 * std::sin(0.9 * t) +
              1.5 * std::sin(2.0 * t)};
}

// Pulse membership uses half-open intervals [t0, t0+1).
bool in_windowed_pulse(double t) {
  return (t >= 200.0 && t < 201.0) || (t >= 250.0 && t < 251.0) || (t >= 300.0 && t < 301.0);
}

bool in_persistent_pulse(double t) {
  if (t < 50.0 || t >= 376.0) return false;
  const double offset = t - 50.0;
  const double phase = offset - 25.0 * std::floor(offset / 25.0);
  return phase < 1.0;
}

Vec7 pack(const RigidBodyState& x) {
  Vec7 v;
  v << x.q.w, x.q.x, x.q.y, x.q.z, x.omega;
  return v;
}

RigidBodyState unpack(const Vec7& v) {
  RigidBodyState x;
  x.q = {v[0], v[1], v[2], v[3]};
  x.omega = v.tail<3>();
  return x;
}

}  // namespace

InertiaTriple::InertiaTriple(double jx, double jy, double jz) : Jx(jx), Jy(jy), Jz(jz) {
  if (!valid(jx, jy, jz))
    throw std::invalid_argument("InertiaTriple: moments must be positive and satisfy the "
                                "triangle inequalities");
}

bool InertiaTriple::valid(double jx, double jy, double jz) {
  if (!(jx > 0.0 && jy > 0.0 && jz > 0.0)) return false;
  return jx + jy >= jz && jy + jz >= jx && jz + jx >= jy;
}

InertiaTriple nominal_inertia() { return {100.0, 80.0, 70.0}; }

Eigen::Vector3d torque_at(const TorqueProfile& profile, double t) {
  switch (profile.regime) {
    case TorqueRegime::Zero:
      return Eigen::Vector3d::Zero();
    case TorqueRegime::Full:
      return full_profile(t);
    case TorqueRegime::Windowed:
      return in_windowed_pulse(t) ? full_profile(t) : Eigen::Vector3d::Zero();
    case TorqueRegime::Persistent:
      return in_persistent_pulse(t) ? full_profile(t) : Eigen::Vector3d::Zero();
  }
  return Eigen::Vector3d::Zero();
}

TorqueRegime regime_from_string(const std::string& name) {
  if (name == "zero") return TorqueRegime::Zero;
  if (name == "full") return TorqueRegime::Full;
  if (name == "windowed") return TorqueRegime::Windowed;
  if (name == "persistent") return TorqueRegime::Persistent;
  throw std::invalid_argument("unknown torque regime: " + name);
}

std::string regime_to_string(TorqueRegime regime) {
  switch (regime) {
    case TorqueRegime::Zero: return "zero";
    case TorqueRegime::Full: return "full";
    case TorqueRegime::Windowed: return "windowed";
    case TorqueRegime::Persistent: return "persistent";
  }
  return "zero";
}

Eigen::Vector3d euler_rhs(const InertiaTriple& J, const Eigen::Vector3d& omega,
                          const Eigen::Vector3d& tau) {
  const Eigen::Vector3d Jw(J.Jx * omega.x(), J.Jy * omega.y(), J.Jz * omega.z());
  const Eigen::Vector3d rhs = -omega.cross(Jw) + tau;
  return {rhs.x() / J.Jx, rhs.y() / J.Jy, rhs.z() / J.Jz};
}

Eigen::Vector4d quat_rhs(const Quaternion& q, const Eigen::Vector3d& omega) {
  const Quaternion w{0.0, omega.x(), omega.y(), omega.z()};
  const Quaternion qdot = quat_mul(q, w);
  return 0.5 * qdot.coeffs();
}

std::vector<RigidBodyState> propagate(const InertiaTriple& J, const RigidBodyState& x0,
                                      const TorqueProfile& profile, double dt, int steps) {
  if (!(dt > 0.0)) throw DimensionError("propagate: dt must be positive");
  std::vector<RigidBodyState> out;
  out.reserve(static_cast<std::size_t>(steps) + 1);
  out.push_back(x0);

  const auto rhs = [&](double t, const Vec7& v) -> Vec7 {
    const RigidBodyState x = unpack(v);
    Vec7 d;
    d.head<4>() = quat_rhs(x.q, x.omega);
    d.tail<3>() = euler_rhs(J, x.omega, torque_at(profile, t));
    return d;
  };

  Vec7 v = pack(x0);
  for (int k = 0; k < steps; ++k) {
    v = rk4_step(rhs, v, k * dt, dt);
    const double n = v.head<4>().norm();
    if (!(n > 0.0)) throw DivergenceError("propagate: quaternion collapsed", k * dt);
    v.head<4>() /= n;
    out.push_back(unpack(v));
  }
  return out;
}

RigidBodyState step_zoh(const InertiaTriple& J, const RigidBodyState& x,
                        const Eigen::Vector3d& tau, double dt) {
  const auto rhs = [&](double, const Vec7& v) -> Vec7 {
    const RigidBodyState s = unpack(v);
    Vec7 d;
    d.head<4>() = quat_rhs(s.q, s.omega);
    d.tail<3>() = euler_rhs(J, s.omega, tau);
    return d;
  };
  return unpack(rk4_step(rhs, pack(x), 0.0, dt));
}

void write_trajectory_csv(const std::string& path, const std::vector<RigidBodyState>& traj,
                          double dt) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "t,qw,qx,qy,qz,wx,wy,wz\n";
  char line[256];
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const auto& x = traj[k];
    std::snprintf(line, sizeof(line),
                  "%.9g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", k * dt, x.q.w, x.q.x,
                  x.q.y, x.q.z, x.omega.x(), x.omega.y(), x.omega.z());
    f << line;
  }
}

}  // namespace bukf
