#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ppd/grasps.hpp"
#include "ppd/se3.hpp"
#include "ppd/volume.hpp"

namespace ppd {

/// Annealing schedule driving the analytic guidance field. The attraction
/// gain 1/((k+1)*dt) spreads the remaining pose error over the remaining
/// steps so the final (noiseless) step closes it completely; the noise scale
/// shrinks linearly from sigma_max at k = K to exactly zero at k = 0.
struct NoiseSchedule {
  int steps = 100;
  double dt = 1.0;
  double sigma_angular_max = 0.3;        // rad/s at k = K
  double sigma_translational_max = 0.1;  // m/s at k = K

  double gain(int k) const { return 1.0 / ((k + 1) * dt); }
  double sigma_angular(int k) const {
    return sigma_angular_max * static_cast<double>(k) / steps;
  }
  double sigma_translational(int k) const {
    return sigma_translational_max * static_cast<double>(k) / steps;
  }

  /// Throws std::invalid_argument unless steps >= 1, dt > 0 and both noise
  /// scales are non-negative.
  void validate() const;
};

/// One request to a guidance field: where the hand is, how far along the
/// anneal we are, and which score bin conditions the answer. `sample` is the
/// batch lane and salts the noise stream so candidates decorrelate.
/// `scene_ref` names the scene directory for out-of-process servers; the
/// in-process oracle ignores it.
struct GuidanceQuery {
  Pose hand;
  int k = 0;
  ScoreBin bin = ScoreBin::high;
  int sample = 0;
  std::string scene_ref;
};

/// Raised when the queried score bin holds no grasps, so the orchestrator
/// can retry with the next bin instead of treating it as a hard failure.
struct BinExhausted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Index of the bin grasp nearest to `hand` under se3_distance, lowest index
/// on ties; -1 when the bin is empty.
int nearest_grasp_index(const Pose& hand, const std::vector<GraspCandidate>& grasps,
                        ScoreBin bin);

/// Analytic stand-in for a learned velocity field: an annealed attractor
/// toward the nearest grasp of the queried bin,
///   twist = gain(k) * pose_error(hand, nearest) + sigma(k) * gaussian,
/// with counter-based noise addressed by (noise_seed, sample, k, lane) so an
/// external process can reproduce the sequence bit-exactly. Throws
/// BinExhausted when the bin has no grasps and std::invalid_argument when k
/// lies outside [0, steps].
Twist oracle_field(const GuidanceQuery& query, const std::vector<GraspCandidate>& grasps,
                   const NoiseSchedule& schedule, std::uint64_t noise_seed);

/// Keep the poses whose TCP reads at least `validity_threshold` in the
/// trilinear validity volume (boundary-clamped lookups that left the grid are
/// dropped), attach each survivor's trilinear gravity score, and order by
/// descending score. Stable: equal scores keep input order, and the output is
/// always a subsequence of the input.
std::vector<std::pair<Pose, double>> filter_and_sort(const std::vector<Pose>& final_poses,
                                                     const SceneVolumes& volumes,
                                                     double validity_threshold = 0.5);

/// Seam between the denoising loop and whatever produces hand twists: the
/// in-process oracle below, or a live connection to an external model
/// process. One field instance serves one run at a time.
class GuidanceField {
 public:
  virtual ~GuidanceField() = default;
  virtual Twist sample(const GuidanceQuery& query) = 0;
};

/// oracle_field bound to a fixed grasp list, schedule and noise seed.
class OracleField : public GuidanceField {
 public:
  OracleField(std::vector<GraspCandidate> grasps, NoiseSchedule schedule,
              std::uint64_t noise_seed)
      : grasps_(std::move(grasps)), schedule_(schedule), noise_seed_(noise_seed) {}

  Twist sample(const GuidanceQuery& query) override {
    return oracle_field(query, grasps_, schedule_, noise_seed_);
  }

  const NoiseSchedule& schedule() const { return schedule_; }
  const std::vector<GraspCandidate>& grasps() const { return grasps_; }

 private:
  std::vector<GraspCandidate> grasps_;
  NoiseSchedule schedule_;
  std::uint64_t noise_seed_;
};

}  // namespace ppd
