#ifndef UNA_COVERAGE_HPP
#define UNA_COVERAGE_HPP

#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "una/geometry.hpp"

namespace una {

/// Sector camera: a target is visible between r_min and r_max meters when its
/// bearing lies within fov/2 of the heading.
struct CameraModel {
  double fov = 93.0 * std::numbers::pi / 180.0;
  double r_min = 0.1;
  double r_max = 1.0;

  void validate() const;
};

/// Candidate poses: positions on a square lattice with `pitch` spacing
/// starting at the arena origin, each at `orientations` evenly spaced headings.
struct CandidateGrid {
  double pitch = 0.1;
  int orientations = 8;
};

struct DronePose {
  std::string id;
  Pose2D pose;
};

struct CoverageInstance {
  Bounds arena{1.25, 2.1};
  std::vector<Vector2> targets;
  std::vector<DronePose> drones;
  CameraModel camera;
  CandidateGrid grid;

  void validate() const;
};

struct Directive {
  std::map<std::string, Pose2D> assignments;
  int covered_count = 0;
};

enum class OptimizerMode { kCentral, kDistributed, kEmulation };

const char* to_string(OptimizerMode mode);
OptimizerMode optimizer_mode_from_string(const std::string& s);

class CoverageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A target at the camera position has no bearing and is never covered.
bool is_covered(const Vector2& target, const Pose2D& pose, const CameraModel& cam);

/// Grid order: x index, then y index, then heading index.
std::vector<Pose2D> candidate_poses(const Bounds& arena, const CandidateGrid& grid);

/// Number of targets covered by at least one assigned pose.
int count_covered(const std::vector<Vector2>& targets, const std::vector<Pose2D>& poses,
                  const CameraModel& cam);

/// Greedy over drones in ascending id order. Each drone takes the pose
/// covering the most not-yet-covered targets among its current pose and the
/// grid; ties go to the shorter move, then to the current pose, then grid order.
Directive solve_central(const CoverageInstance& inst);

/// Exact optimum over the same per-drone candidate sets; exponential in the
/// number of drones, meant as a reference for small instances.
Directive solve_exhaustive(const CoverageInstance& inst);

/// What one drone knows when planning on its own.
struct LocalView {
  std::string drone;
  Pose2D pose;
  std::vector<Vector2> targets;
  std::vector<Vector2> claimed;  // targets already covered by peers
  Bounds arena{1.25, 2.1};
  CameraModel camera;
  CandidateGrid grid;
};

/// The same selection rule as one greedy step of solve_central, applied to
/// the targets not claimed by peers.
Pose2D solve_distributed_step(const LocalView& view);

/// Targets covered from `pose`; what a drone broadcasts as its claim.
std::vector<Vector2> claims_for(const std::vector<Vector2>& targets, const Pose2D& pose,
                                const CameraModel& cam);

/// Somewhere a drone can off-load a planning step. Returns nothing when the
/// far end is unreachable.
class OffloadEndpoint {
 public:
  virtual ~OffloadEndpoint() = default;
  virtual std::optional<Pose2D> offload(const LocalView& view) = 0;
};

struct EmulatedResult {
  Pose2D pose;
  bool degraded = false;
};

/// Falls back to the current pose (a hover objective) when the endpoint is
/// unreachable.
EmulatedResult solve_emulated(const LocalView& view, OffloadEndpoint& endpoint);

/// Local view of one drone within a full instance, with the given claims.
LocalView view_of(const CoverageInstance& inst, const std::string& drone,
                  std::vector<Vector2> claimed = {});

/// Instance file (YAML or JSON).
CoverageInstance load_instance(const std::filesystem::path& path);

}  // namespace una

#endif  // UNA_COVERAGE_HPP
