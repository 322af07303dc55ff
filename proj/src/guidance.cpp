#include "ppd/guidance.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "ppd/rng.hpp"

namespace ppd {

void NoiseSchedule::validate() const {
  if (steps < 1) throw std::invalid_argument("noise schedule needs at least one step");
  if (!(dt > 0.0)) throw std::invalid_argument("noise schedule dt must be positive");
  if (sigma_angular_max < 0.0 || sigma_translational_max < 0.0)
    throw std::invalid_argument("noise schedule scales must be non-negative");
}

int nearest_grasp_index(const Pose& hand, const std::vector<GraspCandidate>& grasps,
                        ScoreBin bin) {
  int best = -1;
  double best_distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grasps.size(); ++i) {
    if (grasps[i].bin != bin) continue;
    const double d = se3_distance(hand, grasps[i].hand_pose);
    if (d < best_distance) {
      best_distance = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

Twist oracle_field(const GuidanceQuery& query, const std::vector<GraspCandidate>& grasps,
                   const NoiseSchedule& schedule, std::uint64_t noise_seed) {
  schedule.validate();
  if (query.k < 0 || query.k > schedule.steps)
    throw std::invalid_argument("guidance query timestep outside [0, K]");

  const int nearest = nearest_grasp_index(query.hand, grasps, query.bin);
  if (nearest < 0)
    throw BinExhausted(std::string("bin exhausted: no grasps in bin ") +
                       score_bin_name(query.bin));

  Twist twist = pose_error(query.hand, grasps[nearest].hand_pose) * schedule.gain(query.k);
  const double sa = schedule.sigma_angular(query.k);
  const double st = schedule.sigma_translational(query.k);
  const auto sample = static_cast<std::uint64_t>(query.sample);
  const auto step = static_cast<std::uint64_t>(query.k);
  for (int lane = 0; lane < 3; ++lane)
    twist.angular[lane] += sa * counter_gaussian(noise_seed, sample, step, lane);
  for (int lane = 0; lane < 3; ++lane)
    twist.translational[lane] += st * counter_gaussian(noise_seed, sample, step, lane + 3);
  return twist;
}

std::vector<std::pair<Pose, double>> filter_and_sort(const std::vector<Pose>& final_poses,
                                                     const SceneVolumes& volumes,
                                                     double validity_threshold) {
  std::vector<std::pair<Pose, double>> survivors;
  for (const Pose& pose : final_poses) {
    const TrilinearSample validity = lookup_trilinear(volumes.grasp_validity, pose.translation);
    if (validity.out_of_bounds || validity.value < validity_threshold) continue;
    const TrilinearSample score = lookup_trilinear(volumes.gravity_score, pose.translation);
    survivors.emplace_back(pose, score.value);
  }
  std::stable_sort(survivors.begin(), survivors.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return survivors;
}

}  // namespace ppd
