#pragma once

// Synthetic planar world: smooth random trajectories and the IMU readings a
// yaw-only body would produce while following them.

#include "ftin/imu_data.hpp"
#include "ftin/rng.hpp"

#include <Eigen/Geometry>
#include <json.hpp>

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <vector>

namespace ftin {

inline const Eigen::Vector3d kGravityWorld{0.0, 0.0, -9.81};

struct TrajectorySpec {
  double duration = 60.0;  // s
  double rate = 100.0;     // Hz
  std::array<double, 2> speed_range{0.5, 1.5};  // m/s
  double turn_rate_max = 0.5;  // rad/s
  double noise_acce = 0.02;    // m/s^2 std
  double noise_gyro = 0.002;   // rad/s std
  std::uint64_t seed = 0;
};

struct Trajectory {
  std::vector<double> t;
  std::vector<Eigen::Vector3d> pos;
  std::vector<double> yaw;

  Index size() const { return static_cast<Index>(t.size()); }
};

inline void validate(const TrajectorySpec& s) {
  auto bad = [](const char* field, const char* why) {
    throw ValidationError(std::string("trajectory spec field '") + field + "' " + why);
  };
  if (!(s.duration > 0.0) || !std::isfinite(s.duration)) bad("duration", "must be > 0");
  if (!(s.rate > 0.0) || !std::isfinite(s.rate)) bad("rate", "must be > 0");
  if (!(s.speed_range[0] >= 0.0) || !(s.speed_range[0] <= s.speed_range[1])) bad("speed_range", "must satisfy 0 <= min <= max");
  if (!(s.turn_rate_max >= 0.0)) bad("turn_rate_max", "must be >= 0");
  if (!(s.noise_acce >= 0.0)) bad("noise_acce", "must be >= 0");
  if (!(s.noise_gyro >= 0.0)) bad("noise_gyro", "must be >= 0");
}

inline void to_json(nlohmann::json& j, const TrajectorySpec& s) {
  j = nlohmann::json{{"duration_s", s.duration},     {"rate_hz", s.rate},           {"speed_range", s.speed_range},
                     {"turn_rate_max", s.turn_rate_max}, {"noise_acce", s.noise_acce}, {"noise_gyro", s.noise_gyro},
                     {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, TrajectorySpec& s) {
  auto get = [&j](const char* key, auto& out) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(out);
    } catch (const nlohmann::json::exception&) {
      throw SchemaError(key);
    }
  };
  get("duration_s", s.duration);
  get("rate_hz", s.rate);
  get("speed_range", s.speed_range);
  get("turn_rate_max", s.turn_rate_max);
  get("noise_acce", s.noise_acce);
  get("noise_gyro", s.noise_gyro);
  get("seed", s.seed);
}

namespace detail {

// Quintic smoothstep: monotone on [0,1] with zero first and second
// derivatives at both ends, so a piecewise profile built from it is C2 and
// never leaves the range of its knot values.
inline double smoothstep5(double u) { return u * u * u * (u * (6.0 * u - 15.0) + 10.0); }
inline double smoothstep5_integral(double u) {
  const double u4 = u * u * u * u;
  return u4 * (u * (u - 3.0) + 2.5);
}

class KnotProfile {
 public:
  KnotProfile(std::vector<double> knots, double spacing) : knots_(std::move(knots)), spacing_(spacing) {
    cumulative_.assign(knots_.size(), 0.0);
    for (std::size_t k = 1; k < knots_.size(); ++k) {
      cumulative_[k] = cumulative_[k - 1] + spacing_ * 0.5 * (knots_[k - 1] + knots_[k]);
    }
  }

  double value(double t) const {
    const auto [k, u] = locate(t);
    return knots_[k] + (knots_[k + 1] - knots_[k]) * smoothstep5(u);
  }

  // Integral of the profile from 0 to t.
  double integral(double t) const {
    const auto [k, u] = locate(t);
    return cumulative_[k] + spacing_ * (knots_[k] * u + (knots_[k + 1] - knots_[k]) * smoothstep5_integral(u));
  }

 private:
  std::pair<std::size_t, double> locate(double t) const {
    double s = std::max(0.0, t / spacing_);
    auto k = static_cast<std::size_t>(s);
    if (k >= knots_.size() - 1) k = knots_.size() - 2;
    return {k, std::min(1.0, s - static_cast<double>(k))};
  }

  std::vector<double> knots_;
  std::vector<double> cumulative_;
  double spacing_;
};

inline Eigen::Quaterniond yaw_quat(double yaw) {
  return Eigen::Quaterniond(std::cos(0.5 * yaw), 0.0, 0.0, std::sin(0.5 * yaw));
}

}  // namespace detail

inline constexpr double kKnotSpacing = 2.0;  // s between random speed / turn-rate knots

// Planar trajectory whose speed and turn rate follow C2 profiles through
// random knots; heading is the direction of travel and position is the
// integral of velocity.
inline Trajectory gen_trajectory(const TrajectorySpec& spec) {
  validate(spec);
  Rng rng(spec.seed, 1);
  const auto n = static_cast<Index>(std::llround(spec.duration * spec.rate)) + 1;
  const auto n_knots = static_cast<std::size_t>(std::ceil(spec.duration / kKnotSpacing)) + 2;
  std::vector<double> speed(n_knots), turn(n_knots);
  for (std::size_t k = 0; k < n_knots; ++k) {
    speed[k] = rng.uniform(spec.speed_range[0], spec.speed_range[1]);
    turn[k] = rng.uniform(-spec.turn_rate_max, spec.turn_rate_max);
  }
  const double yaw0 = rng.uniform(-std::numbers::pi, std::numbers::pi);
  const detail::KnotProfile speed_profile(std::move(speed), kKnotSpacing);
  const detail::KnotProfile turn_profile(std::move(turn), kKnotSpacing);

  auto velocity = [&](double t) {
    const double s = speed_profile.value(t);
    const double psi = yaw0 + turn_profile.integral(t);
    return Eigen::Vector2d(s * std::cos(psi), s * std::sin(psi));
  };

  Trajectory traj;
  traj.t.resize(n);
  traj.pos.resize(n);
  traj.yaw.resize(n);
  const double h = 1.0 / spec.rate;
  constexpr int kSub = 8;  // Simpson panels per sample interval
  Eigen::Vector2d p(0.0, 0.0);
  for (Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * h;
    if (i > 0) {
      const double t0 = static_cast<double>(i - 1) * h;
      const double sh = h / kSub;
      Eigen::Vector2d acc = velocity(t0) + velocity(t);
      for (int m = 1; m < kSub; ++m) acc += (m % 2 ? 4.0 : 2.0) * velocity(t0 + m * sh);
      p += acc * (sh / 3.0);
    }
    traj.t[i] = t;
    traj.pos[i] = Eigen::Vector3d(p.x(), p.y(), 0.0);
    traj.yaw[i] = yaw0 + turn_profile.integral(t);
  }
  return traj;
}

// Simulates a yaw-only IMU riding the trajectory. World acceleration is the
// second difference of the sampled positions, so double integration of the
// noiseless output reproduces the positions.
inline ImuSequence simulate_imu(const Trajectory& traj, const TrajectorySpec& spec) {
  validate(spec);
  const Index n = traj.size();
  if (n < 3) throw SizeError("simulate_imu: need at least 3 trajectory samples, got " + std::to_string(n));
  if (static_cast<Index>(traj.pos.size()) != n || static_cast<Index>(traj.yaw.size()) != n) {
    throw ContractError("simulate_imu: trajectory arrays differ in length");
  }
  const double h = 1.0 / spec.rate;
  for (Index i = 1; i < n; ++i) {
    if (std::abs((traj.t[i] - traj.t[i - 1]) - h) > 1e-3 * h) {
      throw PreconditionError("simulate_imu: trajectory not sampled at spec rate (index " + std::to_string(i) + ")");
    }
  }

  std::vector<Eigen::Vector3d> acc(n);
  for (Index i = 1; i + 1 < n; ++i) acc[i] = (traj.pos[i + 1] - 2.0 * traj.pos[i] + traj.pos[i - 1]) / (h * h);
  acc[0] = acc[1];
  acc[n - 1] = acc[n - 2];

  std::vector<double> yaw_rate(n);
  for (Index i = 1; i + 1 < n; ++i) yaw_rate[i] = (traj.yaw[i + 1] - traj.yaw[i - 1]) / (2.0 * h);
  yaw_rate[0] = (traj.yaw[1] - traj.yaw[0]) / h;
  yaw_rate[n - 1] = (traj.yaw[n - 1] - traj.yaw[n - 2]) / h;

  Rng noise(spec.seed, 2);
  ImuSequence seq;
  seq.rate = spec.rate;
  seq.frame = Frame::Body;
  seq.meta = {{"device", "synthetic"}, {"duration_s", traj.t.back() - traj.t.front()}};
  seq.samples.resize(n);
  for (Index i = 0; i < n; ++i) {
    auto& s = seq.samples[i];
    const Eigen::Quaterniond q = detail::yaw_quat(traj.yaw[i]);
    s.t = traj.t[i];
    s.gyro = Eigen::Vector3d(0.0, 0.0, yaw_rate[i]);
    s.acce = q.conjugate() * (acc[i] - kGravityWorld);
    if (spec.noise_gyro > 0.0 || spec.noise_acce > 0.0) {
      for (int k = 0; k < 3; ++k) s.gyro[k] += spec.noise_gyro * noise.normal();
      for (int k = 0; k < 3; ++k) s.acce[k] += spec.noise_acce * noise.normal();
    }
    s.quat = q;
    s.pos = traj.pos[i];
  }
  return seq;
}

struct ResidualReport {
  double max = 0.0;  // m
  double rms = 0.0;  // m
};

// Double-integrates gravity-compensated world acceleration from the first two
// ground-truth positions and compares against the trajectory.
inline ResidualReport verify_consistency(const ImuSequence& seq, const Trajectory& traj) {
  const Index n = std::min(seq.size(), traj.size());
  ResidualReport r;
  if (n < 2) return r;
  const double h = 1.0 / seq.rate;
  Eigen::Vector3d prev = traj.pos[0];
  Eigen::Vector3d cur = traj.pos[1];
  double sq = 0.0;
  for (Index i = 1; i + 1 < n; ++i) {
    const auto& s = seq.samples[i];
    const Eigen::Quaterniond q = s.quat ? *s.quat : detail::yaw_quat(traj.yaw[i]);
    const Eigen::Vector3d a = (seq.frame == Frame::World ? s.acce : q * s.acce) + kGravityWorld;
    const Eigen::Vector3d next = 2.0 * cur - prev + a * (h * h);
    prev = cur;
    cur = next;
    const double e = (cur - traj.pos[i + 1]).norm();
    r.max = std::max(r.max, e);
    sq += e * e;
  }
  r.rms = std::sqrt(sq / static_cast<double>(n));
  return r;
}

struct CorpusSpec {
  int count = 200;
  std::uint64_t seed = 0;
  TrajectorySpec trajectory;
};

inline void validate(const CorpusSpec& c) {
  if (c.count < 1) throw ValidationError("corpus spec field 'count' must be >= 1");
  validate(c.trajectory);
}

inline CorpusSpec corpus_spec_from_json(const nlohmann::json& j) {
  CorpusSpec c;
  try {
    if (j.contains("count")) j.at("count").get_to(c.count);
  } catch (const nlohmann::json::exception&) {
    throw SchemaError("count");
  }
  try {
    if (j.contains("seed")) j.at("seed").get_to(c.seed);
  } catch (const nlohmann::json::exception&) {
    throw SchemaError("seed");
  }
  if (j.contains("trajectory")) from_json(j.at("trajectory"), c.trajectory);
  return c;
}

inline std::string corpus_member_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "seq_%04d", i);
  return buf;
}

// Writes one canonical directory per trajectory plus corpus.json. Member i
// uses seed derive_seed(corpus seed, i), so members are independent of
// generation order.
inline nlohmann::json write_corpus(const CorpusSpec& corpus, const fs::path& out_dir) {
  validate(corpus);
  fs::create_directories(out_dir);
  nlohmann::json members = nlohmann::json::array();
  for (int i = 0; i < corpus.count; ++i) {
    TrajectorySpec spec = corpus.trajectory;
    spec.seed = derive_seed(corpus.seed, static_cast<std::uint64_t>(i));
    const Trajectory traj = gen_trajectory(spec);
    const ImuSequence seq = simulate_imu(traj, spec);
    const std::string name = corpus_member_name(i);
    save_canonical(seq, out_dir / name);
    members.push_back({{"name", name}, {"seed", spec.seed}, {"spec", spec}});
  }
  nlohmann::json manifest = {{"version", 1}, {"count", corpus.count}, {"seed", corpus.seed}, {"trajectories", members}};
  std::ofstream(out_dir / "corpus.json", std::ios::binary) << manifest.dump(2) << '\n';
  return manifest;
}

}  // namespace ftin
