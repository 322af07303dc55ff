#pragma once

#include <ppd/se3.hpp>

#include <json.hpp>

/// Shared json helpers for the on-disk formats (chains, environments, scenes).
namespace ppd::jsonio {

nlohmann::json vec3_to_json(const Eigen::Vector3d& v);
Eigen::Vector3d vec3_from_json(const nlohmann::json& j);

/// Serialized with translation and a wxyz quaternion so reload is exact up to
/// quaternion rounding.
nlohmann::json pose_to_json(const Pose& p);

/// Accepts {"xyz", "quat_wxyz"} or {"xyz", "rpy"} (fixed-axis roll pitch yaw,
/// applied x then y then z); missing fields mean identity.
Pose pose_from_json(const nlohmann::json& j);

}  // namespace ppd::jsonio
