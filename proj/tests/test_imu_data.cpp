#include "ftin/imu_data.hpp"
#include "ftin/synth_world.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <numeric>

#include <numbers>
#include <set>

using namespace ftin;
using ftin::test::TempDir;

namespace {

const char* kMeta = R"({"rate_hz": 100, "frame": "body", "has_quat": false, "has_pos": false, "device": "unit"})";

ImuSequence line_sequence(Index n, double rate, Eigen::Vector2d vel) {
  ImuSequence s;
  s.rate = rate;
  s.frame = Frame::World;
  for (Index i = 0; i < n; ++i) {
    ImuSample x;
    x.t = static_cast<double>(i) / rate;
    x.acce = {0.0, 0.0, 9.81};
    x.gyro = {0.01 * static_cast<double>(i), 0.0, 0.0};
    x.pos = Eigen::Vector3d(vel.x() * x.t, vel.y() * x.t, 0.0);
    x.quat = Eigen::Quaterniond::Identity();
    s.samples.push_back(x);
  }
  return s;
}

ImuSequence spline_sequence(std::uint64_t seed, double duration = 10.0) {
  TrajectorySpec spec;
  spec.duration = duration;
  spec.seed = seed;
  return rotate_to_world(simulate_imu(gen_trajectory(spec), spec));
}

// Rotation matrix from a unit quaternion (w, x, y, z), written out.
Eigen::Matrix3d quat_matrix(double w, double x, double y, double z) {
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

}  // namespace

TEST(LoadCanonical, ParsesThreeRows) {
  TempDir dir("load3");
  test::spit(dir / "meta.json", kMeta);
  test::spit(dir / "data.csv", "t,gx,gy,gz,ax,ay,az\n0,0,0,0,0,0,9.81\n0.01,0,0,0.1,0,0,9.81\n0.02,0,0,0.2,0,0,9.81\n");
  const ImuSequence s = load_canonical(dir.path());
  EXPECT_EQ(s.size(), 3);
  EXPECT_EQ(s.rate, 100.0);
  EXPECT_EQ(s.frame, Frame::Body);
  EXPECT_DOUBLE_EQ(s.samples[2].gyro.z(), 0.2);
  EXPECT_EQ(s.meta.at("device"), "unit");
}

TEST(LoadCanonical, MissingColumnNamesIt) {
  TempDir dir("missing_ax");
  test::spit(dir / "meta.json", kMeta);
  test::spit(dir / "data.csv", "t,gx,gy,gz,ay,az\n0,0,0,0,0,9.81\n0.01,0,0,0,0,9.81\n");
  try {
    load_canonical(dir.path());
    FAIL() << "expected schema error";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.field(), "ax");
  }
}

TEST(LoadCanonical, NonMonotoneTimestampsReportFirstIndex) {
  TempDir dir("nonmono");
  test::spit(dir / "meta.json", kMeta);
  test::spit(dir / "data.csv", "t,gx,gy,gz,ax,ay,az\n0,0,0,0,0,0,0\n0.01,0,0,0,0,0,0\n0.02,0,0,0,0,0,0\n0.02,0,0,0,0,0,0\n0.01,0,0,0,0,0,0\n");
  try {
    load_canonical(dir.path());
    FAIL() << "expected integrity error";
  } catch (const IntegrityError& e) {
    EXPECT_EQ(e.index(), 3);
  }
}

TEST(LoadCanonical, RejectsNonUnitQuaternion) {
  TempDir dir("badquat");
  test::spit(dir / "meta.json", R"({"rate_hz": 100, "frame": "body", "has_quat": true, "has_pos": false})");
  test::spit(dir / "data.csv", "t,gx,gy,gz,ax,ay,az,qw,qx,qy,qz\n0,0,0,0,0,0,0,1,0,0,0\n0.01,0,0,0,0,0,0,1.1,0,0,0\n");
  EXPECT_THROW(load_canonical(dir.path()), IntegrityError);
}

TEST(LoadCanonical, RejectsRateInconsistentWithTimestamps) {
  TempDir dir("badrate");
  test::spit(dir / "meta.json", kMeta);
  test::spit(dir / "data.csv", "t,gx,gy,gz,ax,ay,az\n0,0,0,0,0,0,0\n0.02,0,0,0,0,0,0\n0.04,0,0,0,0,0,0\n");
  EXPECT_THROW(load_canonical(dir.path()), ValidationError);
}

TEST(LoadCanonical, SaveThenLoadIsBitIdentical) {
  TempDir dir("roundtrip");
  TrajectorySpec spec;
  spec.duration = 3.0;
  spec.seed = 11;
  const ImuSequence a = simulate_imu(gen_trajectory(spec), spec);
  save_canonical(a, dir.path());
  const ImuSequence b = load_canonical(dir.path());
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(a.rate, b.rate);
  EXPECT_EQ(a.frame, b.frame);
  EXPECT_EQ(a.meta, b.meta);
  for (Index i = 0; i < a.size(); ++i) {
    const auto& x = a.samples[i];
    const auto& y = b.samples[i];
    EXPECT_EQ(x.t, y.t);
    EXPECT_EQ(x.gyro, y.gyro);
    EXPECT_EQ(x.acce, y.acce);
    EXPECT_EQ(x.quat->coeffs(), y.quat->coeffs());
    EXPECT_EQ(*x.pos, *y.pos);
  }
}

TEST(RotateToWorld, IdentityQuaternionIsNoOp) {
  ImuSequence s = line_sequence(5, 100, {1, 0});
  s.frame = Frame::Body;
  s.samples[2].acce = {0.3, -0.2, 9.7};
  const ImuSequence w = rotate_to_world(s);
  EXPECT_EQ(w.frame, Frame::World);
  for (Index i = 0; i < s.size(); ++i) {
    EXPECT_EQ(w.samples[i].acce, s.samples[i].acce);
    EXPECT_EQ(w.samples[i].gyro, s.samples[i].gyro);
    EXPECT_EQ(*w.samples[i].pos, *s.samples[i].pos);
  }
}

TEST(RotateToWorld, QuarterTurnYaw) {
  ImuSequence s = line_sequence(2, 100, {0, 0});
  s.frame = Frame::Body;
  const double h = std::numbers::pi / 4;
  for (auto& x : s.samples) {
    x.quat = Eigen::Quaterniond(std::cos(h), 0, 0, std::sin(h));
    x.acce = {1, 0, 0};
  }
  const ImuSequence w = rotate_to_world(s);
  EXPECT_NEAR(w.samples[0].acce.x(), 0.0, 1e-9);
  EXPECT_NEAR(w.samples[0].acce.y(), 1.0, 1e-9);
  EXPECT_NEAR(w.samples[0].acce.z(), 0.0, 1e-9);
}

TEST(RotateToWorld, MatchesMatrixOracle) {
  Rng rng(5);
  ImuSequence s;
  s.rate = 100;
  for (int i = 0; i < 200; ++i) {
    ImuSample x;
    x.t = i * 0.01;
    Eigen::Vector4d q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    x.quat = Eigen::Quaterniond(q[0], q[1], q[2], q[3]);
    x.acce = {rng.normal(), rng.normal(), rng.normal()};
    x.gyro = {rng.normal(), rng.normal(), rng.normal()};
    s.samples.push_back(x);
  }
  const ImuSequence w = rotate_to_world(s);
  for (int i = 0; i < 200; ++i) {
    const auto& q = *s.samples[i].quat;
    const Eigen::Matrix3d r = quat_matrix(q.w(), q.x(), q.y(), q.z());
    EXPECT_LT((w.samples[i].acce - r * s.samples[i].acce).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((w.samples[i].gyro - r * s.samples[i].gyro).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(RotateToWorld, MissingQuaternionIsPreconditionError) {
  ImuSequence s = line_sequence(3, 100, {1, 0});
  s.frame = Frame::Body;
  s.samples[1].quat.reset();
  EXPECT_THROW(rotate_to_world(s), PreconditionError);
}

// The label needs the position one sample past the window, so a window at
// offset o needs o + L < N: 401 samples give offsets 0, 100, 200.
TEST(MakeWindows, OffsetsFollowStride) {
  const auto w = make_windows(line_sequence(401, 100, {1, 0}), 200, 100);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[0].offset, 0);
  EXPECT_EQ(w[1].offset, 100);
  EXPECT_EQ(w[2].offset, 200);
  EXPECT_DOUBLE_EQ(w[2].t_start, 2.0);
  EXPECT_EQ(make_windows(line_sequence(400, 100, {1, 0}), 200, 100).size(), 2u);
}

TEST(MakeWindows, StraightLineLabels) {
  for (const auto& w : make_windows(line_sequence(1000, 100, {1, 0}), 100, 37)) {
    EXPECT_NEAR(w.v.x(), 1.0, 1e-12);
    EXPECT_NEAR(w.v.y(), 0.0, 1e-12);
  }
}

TEST(MakeWindows, LabelsMatchFiniteDifferenceOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ImuSequence s = spline_sequence(seed);
    const Index L = 150;
    for (const auto& w : make_windows(s, L, 23)) {
      const auto& p0 = *s.samples[w.offset].pos;
      const auto& p1 = *s.samples[w.offset + L].pos;
      EXPECT_NEAR(w.v.x(), (p1.x() - p0.x()) * s.rate / L, 1e-9);
      EXPECT_NEAR(w.v.y(), (p1.y() - p0.y()) * s.rate / L, 1e-9);
    }
  }
}

TEST(MakeWindows, WindowsAtStrideLReproduceSignal) {
  const ImuSequence s = spline_sequence(3);
  const Index L = 100;
  const auto w = make_windows(s, L, L);
  for (std::size_t k = 0; k < w.size(); ++k) {
    for (Index j = 0; j < L; ++j) {
      const auto& x = s.samples[static_cast<Index>(k) * L + j];
      EXPECT_EQ(w[k].x.col(j).head<3>(), x.acce);
      EXPECT_EQ(w[k].x.col(j).tail<3>(), x.gyro);
    }
  }
  EXPECT_EQ(static_cast<Index>(w.size()), (s.size() - 1) / L);
}

TEST(MakeWindows, GlobalYawRotatesLabels) {
  const ImuSequence s = spline_sequence(4);
  const double theta = 0.7;
  const Eigen::Matrix3d r = Eigen::AngleAxisd(theta, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  ImuSequence rs = s;
  for (auto& x : rs.samples) {
    *x.pos = r * *x.pos;
    x.acce = r * x.acce;
    x.gyro = r * x.gyro;
  }
  const auto a = make_windows(s, 200, 50);
  const auto b = make_windows(rs, 200, 50);
  ASSERT_EQ(a.size(), b.size());
  const Eigen::Matrix2d r2 = r.topLeftCorner<2, 2>();
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_LT((r2 * a[k].v - b[k].v).norm(), 1e-9);
}

TEST(MakeWindows, Errors) {
  EXPECT_THROW(make_windows(line_sequence(100, 100, {1, 0}), 101, 10), SizeError);
  ImuSequence nopos = line_sequence(300, 100, {1, 0});
  for (auto& x : nopos.samples) x.pos.reset();
  EXPECT_THROW(make_windows(nopos, 100, 10), PreconditionError);
  ImuSequence body = line_sequence(300, 100, {1, 0});
  body.frame = Frame::Body;
  EXPECT_THROW(make_windows(body, 100, 10), PreconditionError);
}

TEST(SplitDataset, TenGiveEightOneOne) {
  std::vector<int> items(10);
  std::iota(items.begin(), items.end(), 0);
  const auto s = split_dataset(items, 42);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.val.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
}

TEST(SplitDataset, DeterministicPerSeed) {
  std::vector<int> items(57);
  std::iota(items.begin(), items.end(), 0);
  const auto a = split_dataset(items, 9);
  const auto b = split_dataset(items, 9);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.val, b.val);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(split_dataset(items, 10).test, a.test);
}

TEST(SplitDataset, PartitionIsDisjointAndExhaustive) {
  std::vector<int> items(100);
  std::iota(items.begin(), items.end(), 0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = split_dataset(items, seed);
    EXPECT_EQ(s.train.size(), 80u);
    EXPECT_EQ(s.val.size(), 10u);
    EXPECT_EQ(s.test.size(), 10u);
    std::set<int> all;
    for (const auto* part : {&s.train, &s.val, &s.test}) all.insert(part->begin(), part->end());
    EXPECT_EQ(all.size(), 100u);
  }
}

TEST(SplitDataset, NoBucketEverEmpty) {
  for (std::size_t n = 10; n < 40; ++n) {
    const auto s = split_indices(n, 1);
    EXPECT_GE(s.val.size(), 1u);
    EXPECT_GE(s.test.size(), 1u);
    EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), n);
  }
  std::vector<int> nine(9);
  EXPECT_THROW(split_dataset(nine, 0), SizeError);
}
