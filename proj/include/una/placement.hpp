#ifndef UNA_PLACEMENT_HPP
#define UNA_PLACEMENT_HPP

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "una/arena.hpp"
#include "una/control.hpp"
#include "una/vision.hpp"

namespace una {

/// Calibration matching the renderer of `world`: one tag per drone color and
/// one shared target tag when the world has targets.
Calibration calibration_for(const WorldState& world);

struct PlacementRun {
  ArenaConfig arena;
  Pose2D start;
  Pose2D goal;
  int max_ticks = 3000;
  double vision_period = 0.05;
  ControllerGains gains;
  Tolerances tolerances;
  bool record_trace = false;
};

struct PlacementResult {
  bool reached = false;
  int ticks = 0;  // arena ticks until DONE, or max_ticks
  double error = 0;  // at DONE, against the vision fix
  Detection final_fix;
  Pose2D final_pose;  // ground truth
  std::vector<ControlPhase> phases;
  std::vector<ControlTraceRow> trace;
};

/// Flies one airborne drone from `start` to `goal` through the full loop:
/// arena step, overhead render at the vision rate, tag detection, controller.
PlacementResult run_placement(const PlacementRun& run);

struct BenchmarkConfig {
  int trials = 14;
  Pose2D goal{0.625, 1.05, std::numbers::pi / 2};
  NoiseConfig noise = NoiseConfig::standard();
  ArenaConfig arena;
  int max_ticks = 3000;
  double start_margin = 0.15;  // keeps random starts clear of the walls
  std::string scenario = "placement";
};

struct TrialRecord {
  int trial = 0;
  std::uint64_t seed = 0;
  Pose2D start;
  Pose2D goal;
  Detection final_fix;
  double error = 0;
  int ticks = 0;
  bool timed_out = false;
};

struct ExperimentRecord {
  std::string scenario;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::vector<TrialRecord> trials;

  /// Errors of trials that reached DONE, ascending.
  std::vector<double> sorted_errors() const;
  /// Empirical CDF over completed trials: (error, fraction <= error).
  std::vector<std::pair<double, double>> cdf() const;
};

/// Trial i draws its start pose and noise from seed + i.
ExperimentRecord run_placement_benchmark(const BenchmarkConfig& config);

/// Two sections separated by a blank line: `trial,error_m` (timeouts written
/// as `timeout`), then `cdf_x,cdf_y`.
void write_benchmark_csv(std::ostream& out, const ExperimentRecord& record);

}  // namespace una

#endif  // UNA_PLACEMENT_HPP
