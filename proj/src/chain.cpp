#include "ppd/chain.hpp"

#include <ppd/jsonio.hpp>

#include <Eigen/Geometry>

#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <stdexcept>

namespace ppd {

using nlohmann::json;
using jsonio::pose_from_json;
using jsonio::pose_to_json;

KinematicChain::KinematicChain(std::string name,
                               std::vector<JointDescriptor> joints,
                               Pose tcp_offset, std::vector<LinkSphere> spheres)
    : name_(std::move(name)),
      joints_(std::move(joints)),
      tcp_offset_(tcp_offset),
      spheres_(std::move(spheres)) {
  const int n = static_cast<int>(joints_.size());
  if (n < 1) throw std::invalid_argument("chain needs at least one joint");
  q_min_.resize(n);
  q_max_.resize(n);
  for (int i = 0; i < n; ++i) {
    auto& jd = joints_[i];
    if (std::abs(jd.axis.norm() - 1.0) > 1e-9)
      throw std::invalid_argument("joint axis must be unit norm");
    if (!(jd.q_min < jd.q_max))
      throw std::invalid_argument("joint limits must satisfy q_min < q_max");
    q_min_[i] = jd.q_min;
    q_max_[i] = jd.q_max;
  }
  for (const auto& s : spheres_) {
    if (s.radius <= 0.0) throw std::invalid_argument("sphere radius must be > 0");
    if (s.link < 0 || s.link >= n)
      throw std::invalid_argument("sphere link index out of range");
  }
}

bool KinematicChain::inside_limits(const JointConfig& q, double tol) const {
  if (q.size() != joint_count()) return false;
  for (int i = 0; i < joint_count(); ++i)
    if (q[i] < q_min_[i] - tol || q[i] > q_max_[i] + tol) return false;
  return true;
}

JointConfig KinematicChain::clamp_to_limits(const JointConfig& q) const {
  return q.cwiseMax(q_min_).cwiseMin(q_max_);
}

JointConfig KinematicChain::named_config(const std::string& name) const {
  for (const auto& [k, v] : named_configs_)
    if (k == name) return v;
  throw std::out_of_range("no named config '" + name + "'");
}

void KinematicChain::set_named_config(const std::string& name,
                                      const JointConfig& q) {
  for (auto& [k, v] : named_configs_)
    if (k == name) {
      v = q;
      return;
    }
  named_configs_.emplace_back(name, q);
}

ChainState KinematicChain::compute(const JointConfig& q) const {
  const int n = joint_count();
  if (q.size() != n) throw std::invalid_argument("config length mismatch");
  ChainState st;
  st.link_frames.reserve(n);
  st.joint_axes_world.reserve(n);
  st.joint_origins_world.reserve(n);
  Pose t = Pose::identity();
  for (int i = 0; i < n; ++i) {
    t = t * joints_[i].fixed;
    st.joint_axes_world.push_back(t.rotation * joints_[i].axis);
    st.joint_origins_world.push_back(t.translation);
    Pose rot;
    rot.rotation = so3_exp(joints_[i].axis * q[i]);
    t = t * rot;
    st.link_frames.push_back(t);
  }
  st.tcp = t * tcp_offset_;
  return st;
}

Pose KinematicChain::forward_kinematics(const JointConfig& q) const {
  return compute(q).tcp;
}

Eigen::MatrixXd KinematicChain::spatial_jacobian(const ChainState& state) const {
  const int n = joint_count();
  Eigen::MatrixXd jac(6, n);
  const Vector3d& p_tcp = state.tcp.translation;
  for (int i = 0; i < n; ++i) {
    const Vector3d& z = state.joint_axes_world[i];
    jac.block<3, 1>(0, i) = z;
    jac.block<3, 1>(3, i) = z.cross(p_tcp - state.joint_origins_world[i]);
  }
  return jac;
}

Eigen::MatrixXd KinematicChain::spatial_jacobian(const JointConfig& q) const {
  return spatial_jacobian(compute(q));
}

Eigen::MatrixXd KinematicChain::point_jacobian(const ChainState& state, int link,
                                               const Vector3d& world_point) const {
  const int n = joint_count();
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(3, n);
  for (int i = 0; i <= link && i < n; ++i) {
    const Vector3d& z = state.joint_axes_world[i];
    jac.col(i) = z.cross(world_point - state.joint_origins_world[i]);
  }
  return jac;
}

std::vector<PosedSphere> KinematicChain::posed_spheres(
    const ChainState& state) const {
  std::vector<PosedSphere> out;
  out.reserve(spheres_.size());
  const int n = joint_count();
  for (const auto& s : spheres_) {
    const Pose& frame = s.tcp_frame ? state.tcp : state.link_frames[s.link];
    out.push_back({frame.apply(s.center), s.radius, s.tcp_frame ? n - 1 : s.link});
  }
  return out;
}

KinematicChain KinematicChain::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open chain file: " + path);
  json j;
  in >> j;
  const int version = j.value("format_version", 0);
  if (version != 1)
    throw std::runtime_error("unsupported chain format_version in " + path);

  std::vector<JointDescriptor> joints;
  for (const auto& jj : j.at("joints")) {
    JointDescriptor d;
    d.fixed = pose_from_json(jj.at("origin"));
    auto a = jj.at("axis");
    d.axis = Vector3d(a.at(0), a.at(1), a.at(2));
    auto lim = jj.at("limits");
    d.q_min = lim.at(0);
    d.q_max = lim.at(1);
    joints.push_back(d);
  }

  Pose tcp = Pose::identity();
  if (j.contains("tcp_offset")) tcp = pose_from_json(j.at("tcp_offset"));

  std::vector<LinkSphere> spheres;
  if (j.contains("collision_spheres")) {
    for (const auto& js : j.at("collision_spheres")) {
      LinkSphere s;
      const auto& link = js.at("link");
      if (link.is_string()) {
        if (link.get<std::string>() != "tcp")
          throw std::runtime_error("sphere link must be an index or \"tcp\"");
        s.tcp_frame = true;
        s.link = static_cast<int>(joints.size()) - 1;
      } else {
        s.link = link.get<int>();
      }
      auto c = js.at("center");
      s.center = Vector3d(c.at(0), c.at(1), c.at(2));
      s.radius = js.at("radius");
      spheres.push_back(s);
    }
  }

  KinematicChain chain(j.value("name", "chain"), std::move(joints), tcp,
                       std::move(spheres));
  if (j.contains("named_configs")) {
    for (const auto& [name, arr] : j.at("named_configs").items()) {
      JointConfig q(arr.size());
      for (size_t i = 0; i < arr.size(); ++i) q[i] = arr.at(i);
      chain.set_named_config(name, q);
    }
  }
  return chain;
}

void KinematicChain::save(const std::string& path) const {
  json j;
  j["format_version"] = 1;
  j["name"] = name_;
  json joints = json::array();
  for (const auto& d : joints_) {
    joints.push_back({{"origin", pose_to_json(d.fixed)},
                      {"axis", {d.axis.x(), d.axis.y(), d.axis.z()}},
                      {"limits", {d.q_min, d.q_max}}});
  }
  j["joints"] = joints;
  j["tcp_offset"] = pose_to_json(tcp_offset_);
  json spheres = json::array();
  for (const auto& s : spheres_) {
    json js{{"center", {s.center.x(), s.center.y(), s.center.z()}},
            {"radius", s.radius}};
    if (s.tcp_frame)
      js["link"] = "tcp";
    else
      js["link"] = s.link;
    spheres.push_back(js);
  }
  j["collision_spheres"] = spheres;
  json named;
  for (const auto& [name, q] : named_configs_) {
    json arr = json::array();
    for (int i = 0; i < q.size(); ++i) arr.push_back(q[i]);
    named[name] = arr;
  }
  if (!named.is_null()) j["named_configs"] = named;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write chain file: " + path);
  out << std::setprecision(17) << j.dump(2) << "\n";
}

}  // namespace ppd
