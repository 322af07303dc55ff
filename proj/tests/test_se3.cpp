#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <ppd/rng.hpp>
#include <ppd/se3.hpp>

#include <Eigen/Geometry>
#include <cmath>

using namespace ppd;

namespace {

Eigen::Matrix3d random_rotation(Rng& rng) {
  // Uniform-ish rotation from a normalized random quaternion.
  Eigen::Quaterniond q(rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian());
  q.normalize();
  return q.toRotationMatrix();
}

Eigen::Vector3d random_vector(Rng& rng, double scale) {
  return {rng.uniform(-scale, scale), rng.uniform(-scale, scale), rng.uniform(-scale, scale)};
}

Pose random_pose(Rng& rng) {
  return Pose{random_rotation(rng), random_vector(rng, 1.0)};
}

}  // namespace

TEST_CASE("so3_exp matches the angle-axis rotation it parameterizes") {
  Rng rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::Vector3d w = random_vector(rng, 3.0);
    if (w.norm() > 3.1) w *= 3.0 / w.norm();
    Eigen::Matrix3d expected =
        w.norm() < 1e-300 ? Eigen::Matrix3d::Identity()
                          : Eigen::AngleAxisd(w.norm(), w.normalized()).toRotationMatrix();
    CHECK((so3_exp(w) - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("so3_exp small-angle branch agrees with the generic branch") {
  Eigen::Vector3d dir(0.6, -0.48, 0.64);
  dir.normalize();
  for (double angle : {1e-7, 1e-9, 1e-12}) {
    Eigen::Vector3d w = angle * dir;
    Eigen::Matrix3d expected = Eigen::AngleAxisd(angle, dir).toRotationMatrix();
    CHECK((so3_exp(w) - expected).cwiseAbs().maxCoeff() < 1e-15);
  }
  CHECK(so3_exp(Eigen::Vector3d::Zero()).isIdentity(0.0));
}

TEST_CASE("so3_log inverts so3_exp away from pi") {
  Rng rng(202);
  for (int trial = 0; trial < 500; ++trial) {
    Eigen::Vector3d w = random_vector(rng, 1.0).normalized() * rng.uniform(0.0, 3.0);
    bool degenerate = false;
    Eigen::Vector3d back = so3_log(so3_exp(w), &degenerate);
    CHECK(!degenerate);
    CHECK((back - w).norm() < 1e-9);
  }
}

TEST_CASE("so3_log flags angles near pi and still recovers the rotation") {
  Eigen::Vector3d axis(1.0, 2.0, -0.5);
  axis.normalize();
  Eigen::Matrix3d R = Eigen::AngleAxisd(M_PI - 1e-9, axis).toRotationMatrix();
  bool degenerate = false;
  Eigen::Vector3d w = so3_log(R, &degenerate);
  CHECK(degenerate);
  CHECK((so3_exp(w) - R).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("exp_twist matches explicit Euler integration of the pose flow") {
  // Oracle: integrate dR/dt = [w]x R, dp/dt = v with small renormalized steps.
  Rng rng(303);
  for (int trial = 0; trial < 20; ++trial) {
    Twist xi;
    xi.angular = random_vector(rng, 2.0);
    xi.translational = random_vector(rng, 1.0);
    Pose start = random_pose(rng);
    const double dt = 0.5;

    const int substeps = 20000;
    const double h = dt / substeps;
    Pose euler = start;
    for (int i = 0; i < substeps; ++i) {
      euler.rotation = (Eigen::Matrix3d::Identity() + skew(xi.angular) * h) * euler.rotation;
      euler.translation += xi.translational * h;
      if (i % 64 == 0) euler.renormalize();
    }
    euler.renormalize();

    Pose closed = apply_displacement(exp_twist(xi, dt), start);
    CHECK((closed.rotation - euler.rotation).cwiseAbs().maxCoeff() < 2e-4);
    // The oracle sums 20000 tiny steps, so allow its accumulated rounding.
    CHECK((closed.translation - euler.translation).norm() < 1e-10);
  }
}

TEST_CASE("pose_error is the exact inverse of applying a displacement") {
  Rng rng(404);
  for (int trial = 0; trial < 200; ++trial) {
    Pose current = random_pose(rng);
    Pose target = random_pose(rng);
    Twist err = pose_error(current, target);
    Pose disp{so3_exp(err.angular), err.translational};
    Pose reached = apply_displacement(disp, current);
    CHECK((reached.rotation - target.rotation).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((reached.translation - target.translation).norm() < 1e-12);
  }
}

TEST_CASE("pose_error of a pose against itself is zero") {
  Rng rng(505);
  Pose pose = random_pose(rng);
  Twist err = pose_error(pose, pose);
  CHECK(err.angular.norm() < 1e-12);
  CHECK(err.translational.norm() == 0.0);
}

TEST_CASE("pose composition and inverse satisfy group identities") {
  Rng rng(606);
  for (int trial = 0; trial < 100; ++trial) {
    Pose a = random_pose(rng);
    Pose b = random_pose(rng);
    Eigen::Vector3d x = random_vector(rng, 2.0);
    CHECK(((a * b).apply(x) - a.apply(b.apply(x))).norm() < 1e-12);
    Pose ident = a * a.inverse();
    CHECK((ident.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(ident.translation.norm() < 1e-12);
  }
}

TEST_CASE("orthonormality stays below 1e-9 across ten thousand compositions") {
  Rng rng(707);
  Pose acc = Pose::identity();
  for (int i = 0; i < 10000; ++i) {
    acc = acc * random_pose(rng);
    if (acc.translation.norm() > 10.0) acc.translation.setZero();
  }
  CHECK(acc.orthonormality_error() < 1e-9);
}

TEST_CASE("renormalize restores a perturbed rotation to orthonormal") {
  Rng rng(808);
  Pose pose = random_pose(rng);
  pose.rotation += 1e-6 * Eigen::Matrix3d::Random();
  CHECK(pose.orthonormality_error() > 1e-7);
  pose.renormalize();
  CHECK(pose.orthonormality_error() < 1e-14);
}

TEST_CASE("pose point encoding is equivariant under rigid transforms") {
  Rng rng(909);
  for (int trial = 0; trial < 50; ++trial) {
    Pose x = random_pose(rng);
    Pose t = random_pose(rng);
    Eigen::Matrix<double, 3, 9> enc = encode_pose_points(t * x);
    Eigen::Matrix<double, 3, 9> moved = encode_pose_points(x);
    for (int c = 0; c < 9; ++c) moved.col(c) = t.apply(moved.col(c));
    CHECK((enc - moved).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("pose point encoding places the center in column 8") {
  Pose x{Eigen::Matrix3d::Identity(), Eigen::Vector3d(0.3, -0.1, 0.5)};
  Eigen::Matrix<double, 3, 9> enc = encode_pose_points(x);
  CHECK((enc.col(8) - x.translation).norm() == 0.0);
  // Corners sit on the cube of half-width equal to the encoding scale.
  for (int c = 0; c < 8; ++c) {
    Eigen::Vector3d d = enc.col(c) - x.translation;
    CHECK(std::abs(d.cwiseAbs().maxCoeff() - pose_encoding_half_width()) < 1e-15);
    CHECK(std::abs(d.cwiseAbs().minCoeff() - pose_encoding_half_width()) < 1e-15);
  }
}

TEST_CASE("se3_distance is a symmetric premetric with translation weight two") {
  Rng rng(111);
  Pose a = random_pose(rng);
  Pose b = random_pose(rng);
  CHECK(se3_distance(a, a) < 1e-12);
  CHECK(se3_distance(a, b) == doctest::Approx(se3_distance(b, a)).epsilon(1e-12));

  Pose c = a;
  c.translation += Eigen::Vector3d(0.1, 0.0, 0.0);
  CHECK(se3_distance(a, c) == doctest::Approx(0.2).epsilon(1e-12));

  Pose d = a;
  d.rotation = so3_exp(Eigen::Vector3d(0.0, 0.0, 0.3)) * d.rotation;
  CHECK(se3_distance(a, d) == doctest::Approx(0.3).epsilon(1e-9));
}

TEST_CASE("deterministic rng reproduces streams and derives independent ones") {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng base(42);
  Rng d1 = base.derive(1);
  Rng d2 = base.derive(2);
  int equal = 0;
  for (int i = 0; i < 64; ++i) equal += d1.next_u64() == d2.next_u64();
  CHECK(equal == 0);
}

TEST_CASE("rng uniforms stay in range and gaussians have sane moments") {
  Rng rng(1234);
  double sum = 0.0;
  double sum_sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    double g = rng.gaussian();
    sum += g;
    sum_sq += g * g;
  }
  double mean = sum / n;
  double var = sum_sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("counter_gaussian is a pure function of its counters") {
  double a = counter_gaussian(7, 3, 14, 2);
  double b = counter_gaussian(7, 3, 14, 2);
  CHECK(a == b);
  CHECK(counter_gaussian(7, 3, 14, 3) != a);
  CHECK(counter_gaussian(8, 3, 14, 2) != a);

  // Moments over a block of lanes stay near standard normal.
  double sum = 0.0;
  double sum_sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double g = counter_gaussian(99, static_cast<std::uint64_t>(i) / 64, (i / 8) % 8, i % 8);
    sum += g;
    sum_sq += g * g;
  }
  double mean = sum / n;
  double var = sum_sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::abs(var - 1.0) < 0.05);
}
