#include <ppd/jsonio.hpp>

#include <Eigen/Geometry>

namespace ppd::jsonio {

using nlohmann::json;

json vec3_to_json(const Eigen::Vector3d& v) { return json{v.x(), v.y(), v.z()}; }

Eigen::Vector3d vec3_from_json(const json& j) {
  return Eigen::Vector3d(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
}

json pose_to_json(const Pose& p) {
  Eigen::Quaterniond q(p.rotation);
  return json{{"xyz", vec3_to_json(p.translation)},
              {"quat_wxyz", {q.w(), q.x(), q.y(), q.z()}}};
}

Pose pose_from_json(const json& j) {
  Pose p;
  if (j.contains("xyz")) p.translation = vec3_from_json(j.at("xyz"));
  if (j.contains("quat_wxyz")) {
    auto v = j.at("quat_wxyz");
    Eigen::Quaterniond q(v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>(),
                         v.at(3).get<double>());
    q.normalize();
    p.rotation = q.toRotationMatrix();
  } else if (j.contains("rpy")) {
    auto v = j.at("rpy");
    p.rotation = so3_exp(Eigen::Vector3d::UnitZ() * v.at(2).get<double>()) *
                 so3_exp(Eigen::Vector3d::UnitY() * v.at(1).get<double>()) *
                 so3_exp(Eigen::Vector3d::UnitX() * v.at(0).get<double>());
  }
  return p;
}

}  // namespace ppd::jsonio
