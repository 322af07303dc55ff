#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <ppd/chain.hpp>
#include <ppd/rng.hpp>
#include <ppd/se3.hpp>

#include <Eigen/Geometry>
#include <cmath>
#include <cstdio>
#include <filesystem>

using namespace ppd;

namespace {

KinematicChain fixture() { return KinematicChain::load(std::string(PPD_DATA_DIR) + "/chains/tabletop7.json"); }

JointConfig random_config(const KinematicChain& chain, Rng& rng) {
  JointConfig q(chain.joint_count());
  for (int i = 0; i < chain.joint_count(); ++i) {
    // Stay a little inside the limits so finite differences do not cross them.
    q[i] = rng.uniform(chain.lower_limits()[i] + 0.01, chain.upper_limits()[i] - 0.01);
  }
  return q;
}

KinematicChain single_z_joint() {
  JointDescriptor j;
  j.fixed = Pose::identity();
  j.axis = Eigen::Vector3d::UnitZ();
  j.q_min = -3.0;
  j.q_max = 3.0;
  Pose tcp{Eigen::Matrix3d::Identity(), Eigen::Vector3d(1.0, 0.0, 0.0)};
  return KinematicChain("single_z", {j}, tcp, {});
}

}  // namespace

TEST_CASE("single revolute joint about z with tcp at (1,0,0)") {
  KinematicChain chain = single_z_joint();
  JointConfig q(1);
  q << 0.0;
  ChainState state = chain.compute(q);
  CHECK((state.tcp.translation - Eigen::Vector3d(1, 0, 0)).norm() < 1e-15);

  Eigen::MatrixXd jac = chain.spatial_jacobian(state);
  Eigen::VectorXd expected(6);
  expected << 0, 0, 1, 0, 1, 0;
  CHECK((jac.col(0) - expected).norm() < 1e-15);

  q << M_PI / 2;
  state = chain.compute(q);
  CHECK((state.tcp.translation - Eigen::Vector3d(0, 1, 0)).norm() < 1e-12);
  jac = chain.spatial_jacobian(state);
  expected << 0, 0, 1, -1, 0, 0;
  CHECK((jac.col(0) - expected).norm() < 1e-12);
}

TEST_CASE("forward kinematics matches an independently composed transform chain") {
  // Three-joint chain recomputed in the test with plain Eigen isometries.
  std::vector<JointDescriptor> joints(3);
  joints[0].fixed = Pose{Eigen::Matrix3d::Identity(), Eigen::Vector3d(0, 0, 0.5)};
  joints[0].axis = Eigen::Vector3d::UnitZ();
  joints[0].q_min = -3;
  joints[0].q_max = 3;
  joints[1].fixed = Pose{so3_exp(Eigen::Vector3d(0.3, 0, 0)), Eigen::Vector3d(0.2, 0, 0)};
  joints[1].axis = Eigen::Vector3d::UnitY();
  joints[1].q_min = -3;
  joints[1].q_max = 3;
  joints[2].fixed = Pose{so3_exp(Eigen::Vector3d(0, -0.2, 0.1)), Eigen::Vector3d(0, 0.1, 0.3)};
  joints[2].axis = Eigen::Vector3d(1, 1, 0).normalized();
  joints[2].q_min = -3;
  joints[2].q_max = 3;
  Pose tcp{so3_exp(Eigen::Vector3d(0.1, 0.2, 0.3)), Eigen::Vector3d(0.05, -0.02, 0.3)};
  KinematicChain chain("triple", joints, tcp, {});

  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    JointConfig q = random_config(chain, rng);
    Eigen::Isometry3d expected = Eigen::Isometry3d::Identity();
    for (int i = 0; i < 3; ++i) {
      Eigen::Isometry3d fixed = Eigen::Isometry3d::Identity();
      fixed.linear() = joints[i].fixed.rotation;
      fixed.translation() = joints[i].fixed.translation;
      expected = expected * fixed * Eigen::AngleAxisd(q[i], joints[i].axis);
    }
    Eigen::Isometry3d tool = Eigen::Isometry3d::Identity();
    tool.linear() = tcp.rotation;
    tool.translation() = tcp.translation;
    expected = expected * tool;

    Pose got = chain.forward_kinematics(q);
    CHECK((got.rotation - expected.linear()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((got.translation - expected.translation()).norm() < 1e-12);
  }
}

TEST_CASE("spatial jacobian matches central finite differences of the pose") {
  KinematicChain chain = fixture();
  Rng rng(7);
  const double h = 1e-6;
  for (int trial = 0; trial < 25; ++trial) {
    JointConfig q = random_config(chain, rng);
    Eigen::MatrixXd jac = chain.spatial_jacobian(chain.compute(q));
    for (int i = 0; i < chain.joint_count(); ++i) {
      JointConfig qp = q, qm = q;
      qp[i] += h;
      qm[i] -= h;
      Pose plus = chain.forward_kinematics(qp);
      Pose minus = chain.forward_kinematics(qm);
      Twist fd = pose_error(minus, plus);
      Eigen::VectorXd col = fd.stacked() / (2 * h);
      CHECK((jac.col(i) - col).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("point jacobian matches finite differences and respects the chain prefix") {
  KinematicChain chain = fixture();
  Rng rng(8);
  const double h = 1e-6;
  for (int trial = 0; trial < 10; ++trial) {
    JointConfig q = random_config(chain, rng);
    ChainState state = chain.compute(q);
    for (int link = 0; link < chain.joint_count(); ++link) {
      Eigen::Vector3d local(0.05, -0.02, 0.1);
      Eigen::Vector3d world = state.link_frames[link].apply(local);
      Eigen::MatrixXd jac = chain.point_jacobian(state, link, world);
      for (int i = 0; i < chain.joint_count(); ++i) {
        JointConfig qp = q, qm = q;
        qp[i] += h;
        qm[i] -= h;
        Eigen::Vector3d wp = chain.compute(qp).link_frames[link].apply(local);
        Eigen::Vector3d wm = chain.compute(qm).link_frames[link].apply(local);
        Eigen::Vector3d col = (wp - wm) / (2 * h);
        CHECK((jac.col(i) - col).cwiseAbs().maxCoeff() < 1e-6);
        if (i > link) CHECK(jac.col(i).norm() == 0.0);
      }
    }
  }
}

TEST_CASE("bundled tabletop chain loads with expected structure") {
  KinematicChain chain = fixture();
  CHECK(chain.joint_count() == 7);
  CHECK(chain.spheres().size() == 20);
  CHECK(chain.lower_limits()[3] == doctest::Approx(-3.0718));
  CHECK(chain.upper_limits()[3] == doctest::Approx(-0.0698));

  JointConfig ready = chain.named_config("ready");
  CHECK(chain.inside_limits(ready, 0.0));

  // Ready pose hovers over the workspace with the tool axis pointing down.
  Pose tcp = chain.forward_kinematics(ready);
  CHECK(tcp.translation.x() > 0.35);
  CHECK(tcp.translation.x() < 0.55);
  CHECK(std::abs(tcp.translation.y()) < 1e-9);
  CHECK(tcp.translation.z() > 0.15);
  CHECK(tcp.translation.z() < 0.35);
  CHECK((tcp.rotation.col(2) - Eigen::Vector3d(0, 0, -1)).norm() < 1e-9);
}

TEST_CASE("chain json roundtrips through save and load") {
  KinematicChain chain = fixture();
  std::string path = std::string(PPD_BUILD_DIR) + "/chain_roundtrip.json";
  chain.save(path);
  KinematicChain back = KinematicChain::load(path);

  CHECK(back.joint_count() == chain.joint_count());
  CHECK(back.spheres().size() == chain.spheres().size());
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    JointConfig q = random_config(chain, rng);
    Pose a = chain.forward_kinematics(q);
    Pose b = back.forward_kinematics(q);
    CHECK((a.rotation - b.rotation).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((a.translation - b.translation).norm() < 1e-15);
  }
  std::filesystem::remove(path);
}

TEST_CASE("limit helpers clamp and test configurations") {
  KinematicChain chain = fixture();
  JointConfig q = chain.named_config("ready");
  CHECK(chain.inside_limits(q, 0.0));

  q[0] = chain.upper_limits()[0] + 0.5;
  CHECK(!chain.inside_limits(q, 0.0));
  CHECK(chain.inside_limits(q, 0.6));

  JointConfig clamped = chain.clamp_to_limits(q);
  CHECK(clamped[0] == chain.upper_limits()[0]);
  CHECK(chain.inside_limits(clamped, 0.0));
}

TEST_CASE("posed spheres ride their link frames") {
  KinematicChain chain = single_z_joint();
  std::vector<LinkSphere> spheres;
  LinkSphere s;
  s.link = 0;
  s.tcp_frame = false;
  s.center = Eigen::Vector3d(0.5, 0, 0);
  s.radius = 0.05;
  spheres.push_back(s);
  LinkSphere t;
  t.link = 0;
  t.tcp_frame = true;
  t.center = Eigen::Vector3d(0, 0, -0.1);
  t.radius = 0.02;
  spheres.push_back(t);
  KinematicChain with = KinematicChain("single_z", chain.joints(), chain.tcp_offset(), spheres);

  JointConfig q(1);
  q << M_PI / 2;
  ChainState state = with.compute(q);
  std::vector<PosedSphere> posed = with.posed_spheres(state);
  REQUIRE(posed.size() == 2);
  CHECK((posed[0].center - Eigen::Vector3d(0, 0.5, 0)).norm() < 1e-12);
  CHECK(posed[0].radius == 0.05);
  // The tcp-frame sphere follows the tool pose, tcp at (0,1,0).
  CHECK((posed[1].center - Eigen::Vector3d(0, 1.0, -0.1)).norm() < 1e-12);
}
