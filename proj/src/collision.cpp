#include <ppd/collision.hpp>

#include <ppd/jsonio.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <limits>
#include <map>
#include <stdexcept>

namespace ppd {

using nlohmann::json;

CollisionBody CollisionBody::make_sphere(std::string name, const Eigen::Vector3d& center,
                                         double radius) {
  CollisionBody b;
  b.kind = Kind::sphere;
  b.name = std::move(name);
  b.pose = Pose{Eigen::Matrix3d::Identity(), center};
  b.radius = radius;
  return b;
}

CollisionBody CollisionBody::make_capsule(std::string name, const Pose& pose, double radius,
                                          double half_length) {
  CollisionBody b;
  b.kind = Kind::capsule;
  b.name = std::move(name);
  b.pose = pose;
  b.radius = radius;
  b.half_length = half_length;
  return b;
}

CollisionBody CollisionBody::make_box(std::string name, const Pose& pose,
                                      const Eigen::Vector3d& half_extents) {
  CollisionBody b;
  b.kind = Kind::box;
  b.name = std::move(name);
  b.pose = pose;
  b.half_extents = half_extents;
  return b;
}

CollisionBody CollisionBody::make_cloud(std::string name,
                                        std::shared_ptr<const PointCloud> cloud,
                                        const Pose& pose) {
  CollisionBody b;
  b.kind = Kind::cloud;
  b.name = std::move(name);
  b.pose = pose;
  b.cloud = std::move(cloud);
  return b;
}

BodyDistance body_point_distance(const CollisionBody& body, const Pose& body_pose,
                                 const Eigen::Vector3d& point) {
  BodyDistance out;
  switch (body.kind) {
    case CollisionBody::Kind::sphere: {
      Eigen::Vector3d c = body_pose.translation;
      Eigen::Vector3d d = point - c;
      double n = d.norm();
      out.normal = n > 1e-12 ? Eigen::Vector3d(d / n) : Eigen::Vector3d::UnitZ();
      out.distance = n - body.radius;
      out.witness = c + body.radius * out.normal;
      return out;
    }
    case CollisionBody::Kind::capsule: {
      Eigen::Vector3d a = body_pose.apply(Eigen::Vector3d(0, 0, -body.half_length));
      Eigen::Vector3d b = body_pose.apply(Eigen::Vector3d(0, 0, body.half_length));
      Eigen::Vector3d ab = b - a;
      double t = ab.squaredNorm() > 0 ? (point - a).dot(ab) / ab.squaredNorm() : 0.0;
      Eigen::Vector3d p = a + std::clamp(t, 0.0, 1.0) * ab;
      Eigen::Vector3d d = point - p;
      double n = d.norm();
      out.normal = n > 1e-12 ? Eigen::Vector3d(d / n) : Eigen::Vector3d::UnitZ();
      out.distance = n - body.radius;
      out.witness = p + body.radius * out.normal;
      return out;
    }
    case CollisionBody::Kind::box: {
      Eigen::Vector3d local = body_pose.inverse().apply(point);
      Eigen::Vector3d he = body.half_extents;
      Eigen::Vector3d clamped = local.cwiseMax(-he).cwiseMin(he);
      if ((local - clamped).squaredNorm() > 0) {
        Eigen::Vector3d d = local - clamped;
        double n = d.norm();
        out.distance = n;
        out.witness = body_pose.apply(clamped);
        out.normal = body_pose.rotation * (d / n);
      } else {
        // Inside: exit through the nearest face.
        int axis = 0;
        double best = std::numeric_limits<double>::infinity();
        for (int a = 0; a < 3; ++a) {
          double margin = he[a] - std::abs(local[a]);
          if (margin < best) {
            best = margin;
            axis = a;
          }
        }
        double sign = local[axis] >= 0 ? 1.0 : -1.0;
        Eigen::Vector3d face = local;
        face[axis] = sign * he[axis];
        out.distance = -best;
        out.witness = body_pose.apply(face);
        out.normal = sign * body_pose.rotation.col(axis);
      }
      return out;
    }
    case CollisionBody::Kind::cloud: {
      if (!body.cloud || body.cloud->empty())
        throw std::runtime_error("collision body '" + body.name + "' has an empty cloud");
      Eigen::Vector3d local = body_pose.inverse().apply(point);
      PointCloud::Nearest nn = body.cloud->nearest(local);
      Eigen::Vector3d d = local - nn.point;
      Eigen::Vector3d n_local =
          nn.distance > 1e-12 ? Eigen::Vector3d(d / nn.distance) : Eigen::Vector3d::UnitZ();
      out.distance = nn.distance;
      out.witness = body_pose.apply(nn.point);
      out.normal = body_pose.rotation * n_local;
      return out;
    }
  }
  throw std::logic_error("unreachable collision body kind");
}

namespace {

struct PairProbe {
  double distance = std::numeric_limits<double>::infinity();
  Eigen::Vector3d robot_point = Eigen::Vector3d::Zero();
  Eigen::Vector3d env_point = Eigen::Vector3d::Zero();
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
};

void probe_point(const CollisionBody& world_body, const Eigen::Vector3d& robot_point,
                 double robot_radius, PairProbe& best) {
  BodyDistance bd = body_point_distance(world_body, world_body.pose, robot_point);
  double d = bd.distance - robot_radius;
  if (d < best.distance) {
    best.distance = d;
    best.normal = bd.normal;
    best.env_point = bd.witness;
    best.robot_point = robot_point - robot_radius * bd.normal;
  }
}

/// Per world body, the closest witness pair for every robot link. Attached
/// bodies (held objects) count as geometry of their attachment link.
void probe_environment(const KinematicChain& chain, const ChainState& state,
                       const Environment& environment,
                       std::vector<std::vector<PairProbe>>& probes) {
  std::vector<PosedSphere> spheres = chain.posed_spheres(state);
  const int n = chain.joint_count();

  probes.assign(environment.size(), {});
  for (std::size_t b = 0; b < environment.size(); ++b) {
    const CollisionBody& body = environment[b];
    if (body.attached_link >= 0) continue;
    probes[b].assign(static_cast<std::size_t>(n), PairProbe{});
    for (const PosedSphere& s : spheres)
      probe_point(body, s.center, s.radius, probes[b][static_cast<std::size_t>(s.link)]);

    for (const CollisionBody& held : environment) {
      if (held.attached_link < 0) continue;
      if (held.attached_link >= n)
        throw std::runtime_error("collision body '" + held.name + "' attached to missing link");
      Pose world_pose = state.link_frames[static_cast<std::size_t>(held.attached_link)] * held.pose;
      PairProbe& best = probes[b][static_cast<std::size_t>(held.attached_link)];
      if (held.kind == CollisionBody::Kind::sphere) {
        probe_point(body, world_pose.translation, held.radius, best);
      } else if (held.kind == CollisionBody::Kind::cloud) {
        if (!held.cloud || held.cloud->empty())
          throw std::runtime_error("attached body '" + held.name + "' has an empty cloud");
        for (std::size_t i = 0; i < held.cloud->size(); ++i)
          probe_point(body, world_pose.apply(held.cloud->point(i)), 0.0, best);
      } else {
        throw std::runtime_error("attached body '" + held.name +
                                 "' must be a sphere or a point cloud");
      }
    }
  }
}

}  // namespace

ContactSet query_proximal_contacts(const KinematicChain& chain, const JointConfig& q,
                                   const Environment& environment, double threshold) {
  if (threshold <= 0) throw std::invalid_argument("proximity threshold must be positive");
  ChainState state = chain.compute(q);
  std::vector<std::vector<PairProbe>> probes;
  probe_environment(chain, state, environment, probes);

  ContactSet contacts;
  for (std::size_t b = 0; b < environment.size(); ++b) {
    for (std::size_t link = 0; link < probes[b].size(); ++link) {
      const PairProbe& p = probes[b][link];
      if (p.distance < threshold) {
        Contact c;
        c.link = static_cast<int>(link);
        c.robot_point = p.robot_point;
        c.env_point = p.env_point;
        c.normal = p.normal;
        c.distance = p.distance;
        contacts.push_back(c);
      }
    }
  }
  return contacts;
}

ContactSet query_attached_body_contacts(const KinematicChain& chain, const JointConfig& q,
                                        const CollisionBody& attached,
                                        const Environment& environment, double threshold) {
  if (threshold <= 0) throw std::invalid_argument("proximity threshold must be positive");
  if (attached.attached_link < 0 || attached.attached_link >= chain.joint_count())
    throw std::invalid_argument("collision body '" + attached.name +
                                "' is not attached to a link of this chain");
  ChainState state = chain.compute(q);
  Pose world_pose =
      state.link_frames[static_cast<std::size_t>(attached.attached_link)] * attached.pose;

  ContactSet contacts;
  for (const CollisionBody& body : environment) {
    if (body.attached_link >= 0) continue;
    PairProbe best;
    if (attached.kind == CollisionBody::Kind::sphere) {
      probe_point(body, world_pose.translation, attached.radius, best);
    } else if (attached.kind == CollisionBody::Kind::cloud) {
      if (!attached.cloud || attached.cloud->empty())
        throw std::runtime_error("attached body '" + attached.name + "' has an empty cloud");
      for (std::size_t i = 0; i < attached.cloud->size(); ++i)
        probe_point(body, world_pose.apply(attached.cloud->point(i)), 0.0, best);
    } else {
      throw std::runtime_error("attached body '" + attached.name +
                               "' must be a sphere or a point cloud");
    }
    if (best.distance < threshold) {
      Contact c;
      c.link = attached.attached_link;
      c.robot_point = best.robot_point;
      c.env_point = best.env_point;
      c.normal = best.normal;
      c.distance = best.distance;
      contacts.push_back(c);
    }
  }
  return contacts;
}

Eigen::MatrixXd contact_jacobian(const KinematicChain& chain, const JointConfig& q,
                                 const ContactSet& contacts) {
  ChainState state = chain.compute(q);
  Eigen::MatrixXd rows(contacts.size(), chain.joint_count());
  for (std::size_t j = 0; j < contacts.size(); ++j) {
    Eigen::MatrixXd jp = chain.point_jacobian(state, contacts[j].link, contacts[j].robot_point);
    rows.row(j) = -contacts[j].normal.transpose() * jp;
  }
  return rows;
}

double min_clearance(const KinematicChain& chain, const JointConfig& q,
                     const Environment& environment) {
  ChainState state = chain.compute(q);
  std::vector<std::vector<PairProbe>> probes;
  probe_environment(chain, state, environment, probes);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& per_body : probes)
    for (const PairProbe& p : per_body) best = std::min(best, p.distance);
  return best;
}

Environment load_environment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open environment file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("cannot parse environment file " + path + ": " + e.what());
  }
  if (j.value("format_version", 0) != 1)
    throw std::runtime_error("unsupported environment format in " + path);

  std::filesystem::path dir = std::filesystem::path(path).parent_path();
  Environment env;
  for (const json& jb : j.at("bodies")) {
    CollisionBody b;
    b.name = jb.value("name", "");
    b.pose = jb.contains("pose") ? jsonio::pose_from_json(jb.at("pose")) : Pose::identity();
    b.attached_link = jb.value("attached_link", -1);
    std::string kind = jb.at("kind");
    if (kind == "sphere") {
      b.kind = CollisionBody::Kind::sphere;
      b.radius = jb.at("radius");
    } else if (kind == "capsule") {
      b.kind = CollisionBody::Kind::capsule;
      b.radius = jb.at("radius");
      b.half_length = jb.at("half_length");
    } else if (kind == "box") {
      b.kind = CollisionBody::Kind::box;
      b.half_extents = jsonio::vec3_from_json(jb.at("half_extents"));
    } else if (kind == "cloud") {
      b.kind = CollisionBody::Kind::cloud;
      std::string file = jb.at("cloud_file");
      b.cloud = std::make_shared<PointCloud>(PointCloud::load((dir / file).string()));
    } else {
      throw std::runtime_error("unknown body kind '" + kind + "' in " + path);
    }
    if ((b.kind == CollisionBody::Kind::sphere || b.kind == CollisionBody::Kind::capsule) &&
        b.radius <= 0)
      throw std::runtime_error("non-positive radius in " + path);
    if (b.kind == CollisionBody::Kind::box && (b.half_extents.array() <= 0).any())
      throw std::runtime_error("non-positive box extents in " + path);
    if (b.kind == CollisionBody::Kind::cloud && b.cloud->empty())
      throw std::runtime_error("empty point cloud body in " + path);
    env.push_back(std::move(b));
  }
  return env;
}

void save_environment(const Environment& environment, const std::string& path) {
  std::filesystem::path dir = std::filesystem::path(path).parent_path();
  json bodies = json::array();
  std::map<std::string, int> used_names;
  for (const CollisionBody& b : environment) {
    json jb;
    std::string base = b.name.empty() ? "body" : b.name;
    int n = used_names[base]++;
    std::string unique = n == 0 ? base : base + "_" + std::to_string(n);
    jb["name"] = b.name;
    jb["pose"] = jsonio::pose_to_json(b.pose);
    if (b.attached_link >= 0) jb["attached_link"] = b.attached_link;
    switch (b.kind) {
      case CollisionBody::Kind::sphere:
        jb["kind"] = "sphere";
        jb["radius"] = b.radius;
        break;
      case CollisionBody::Kind::capsule:
        jb["kind"] = "capsule";
        jb["radius"] = b.radius;
        jb["half_length"] = b.half_length;
        break;
      case CollisionBody::Kind::box:
        jb["kind"] = "box";
        jb["half_extents"] = jsonio::vec3_to_json(b.half_extents);
        break;
      case CollisionBody::Kind::cloud: {
        jb["kind"] = "cloud";
        std::string file = unique + ".pc";
        b.cloud->save((dir / file).string());
        jb["cloud_file"] = file;
        break;
      }
    }
    bodies.push_back(std::move(jb));
  }
  json j{{"format_version", 1}, {"bodies", std::move(bodies)}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write environment file: " + path);
  out << std::setw(2) << j << "\n";
}

}  // namespace ppd
