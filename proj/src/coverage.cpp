#include "una/coverage.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>

#include <yaml-cpp/yaml.h>

namespace una {

void CameraModel::validate() const {
  if (!(fov > 0 && fov < 2 * std::numbers::pi)) throw CoverageError("camera fov must lie in (0, 2*pi)");
  if (!(r_min >= 0 && r_min < r_max)) throw CoverageError("camera range needs 0 <= r_min < r_max");
}

void CoverageInstance::validate() const {
  camera.validate();
  if (!(grid.pitch > 0) || grid.orientations < 1) throw CoverageError("candidate grid is empty");
  for (const auto& t : targets)
    if (!arena.contains(t)) throw CoverageError("target outside arena bounds");
  std::set<std::string> ids;
  for (const auto& d : drones) {
    if (!arena.contains(d.pose.position())) throw CoverageError("drone " + d.id + " outside arena bounds");
    if (!ids.insert(d.id).second) throw CoverageError("duplicate drone id " + d.id);
  }
}

const char* to_string(OptimizerMode mode) {
  switch (mode) {
    case OptimizerMode::kCentral: return "central";
    case OptimizerMode::kDistributed: return "distributed";
    case OptimizerMode::kEmulation: return "emulation";
  }
  return "?";
}

OptimizerMode optimizer_mode_from_string(const std::string& s) {
  if (s == "central") return OptimizerMode::kCentral;
  if (s == "distributed") return OptimizerMode::kDistributed;
  if (s == "emulation") return OptimizerMode::kEmulation;
  throw std::invalid_argument("unknown optimizer mode '" + s + "'");
}

bool is_covered(const Vector2& target, const Pose2D& pose, const CameraModel& cam) {
  const Vector2 d = target - pose.position();
  const double dist = d.norm();
  if (dist == 0 || dist < cam.r_min || dist > cam.r_max) return false;
  const double bearing = std::atan2(d.y(), d.x());
  return std::abs(angle_diff(bearing, pose.yaw())) <= cam.fov / 2;
}

std::vector<Pose2D> candidate_poses(const Bounds& arena, const CandidateGrid& grid) {
  std::vector<Pose2D> out;
  if (!(grid.pitch > 0) || grid.orientations < 1) return out;
  const int nx = static_cast<int>(std::floor(arena.width / grid.pitch + 1e-9)) + 1;
  const int ny = static_cast<int>(std::floor(arena.height / grid.pitch + 1e-9)) + 1;
  out.reserve(std::size_t(nx) * ny * grid.orientations);
  for (int ix = 0; ix < nx; ++ix)
    for (int iy = 0; iy < ny; ++iy)
      for (int k = 0; k < grid.orientations; ++k)
        out.emplace_back(ix * grid.pitch, iy * grid.pitch, 2 * std::numbers::pi * k / grid.orientations);
  return out;
}

int count_covered(const std::vector<Vector2>& targets, const std::vector<Pose2D>& poses,
                  const CameraModel& cam) {
  int n = 0;
  for (const auto& t : targets)
    if (std::any_of(poses.begin(), poses.end(), [&](const Pose2D& p) { return is_covered(t, p, cam); })) ++n;
  return n;
}

namespace {

int score(const std::vector<Vector2>& targets, const Pose2D& pose, const CameraModel& cam) {
  return static_cast<int>(std::count_if(targets.begin(), targets.end(),
                                        [&](const Vector2& t) { return is_covered(t, pose, cam); }));
}

// Shared selection rule for greedy and distributed planning.
Pose2D best_pose(const Pose2D& current, const std::vector<Vector2>& open_targets,
                 const std::vector<Pose2D>& grid, const CameraModel& cam) {
  Pose2D best = current;
  int best_score = score(open_targets, current, cam);
  double best_travel = 0;
  if (open_targets.empty()) return best;
  for (const auto& cand : grid) {
    const int s = score(open_targets, cand, cam);
    if (s < best_score) continue;
    const double travel = (cand.position() - current.position()).norm();
    if (s > best_score || travel < best_travel) {
      best = cand;
      best_score = s;
      best_travel = travel;
    }
  }
  return best;
}

std::vector<Vector2> uncovered_by(const std::vector<Vector2>& targets, const Pose2D& pose,
                                  const CameraModel& cam) {
  std::vector<Vector2> out;
  for (const auto& t : targets)
    if (!is_covered(t, pose, cam)) out.push_back(t);
  return out;
}

std::vector<DronePose> sorted_drones(const CoverageInstance& inst) {
  auto drones = inst.drones;
  std::sort(drones.begin(), drones.end(), [](const DronePose& a, const DronePose& b) { return a.id < b.id; });
  return drones;
}

std::vector<Pose2D> assigned_poses(const Directive& d) {
  std::vector<Pose2D> poses;
  for (const auto& [id, pose] : d.assignments) poses.push_back(pose);
  return poses;
}

}  // namespace

Directive solve_central(const CoverageInstance& inst) {
  const auto grid = candidate_poses(inst.arena, inst.grid);
  if (grid.empty()) throw CoverageError("no candidate poses in bounds");

  Directive out;
  auto open = inst.targets;
  for (const auto& drone : sorted_drones(inst)) {
    const Pose2D pose = best_pose(drone.pose, open, grid, inst.camera);
    out.assignments[drone.id] = pose;
    open = uncovered_by(open, pose, inst.camera);
  }
  out.covered_count = count_covered(inst.targets, assigned_poses(out), inst.camera);
  return out;
}

Directive solve_exhaustive(const CoverageInstance& inst) {
  const auto grid = candidate_poses(inst.arena, inst.grid);
  if (grid.empty()) throw CoverageError("no candidate poses in bounds");
  const auto drones = sorted_drones(inst);
  const std::size_t words = (inst.targets.size() + 63) / 64;

  using Bits = std::vector<std::uint64_t>;
  auto coverage_bits = [&](const Pose2D& pose) {
    Bits bits(words, 0);
    for (std::size_t t = 0; t < inst.targets.size(); ++t)
      if (is_covered(inst.targets[t], pose, inst.camera)) bits[t / 64] |= std::uint64_t{1} << (t % 64);
    return bits;
  };

  std::vector<std::vector<Pose2D>> options(drones.size());
  std::vector<std::vector<Bits>> option_bits(drones.size());
  double combos = 1;
  for (std::size_t i = 0; i < drones.size(); ++i) {
    options[i].push_back(drones[i].pose);
    options[i].insert(options[i].end(), grid.begin(), grid.end());
    for (const auto& p : options[i]) option_bits[i].push_back(coverage_bits(p));
    combos *= static_cast<double>(options[i].size());
  }
  if (combos > 5e7) throw CoverageError("instance too large for exhaustive search");

  auto popcount = [](const Bits& b) {
    int n = 0;
    for (auto w : b) n += __builtin_popcountll(w);
    return n;
  };

  std::vector<std::size_t> choice(drones.size(), 0), best_choice(drones.size(), 0);
  int best = -1;
  std::function<void(std::size_t, const Bits&)> search = [&](std::size_t i, const Bits& acc) {
    if (i == drones.size()) {
      const int n = popcount(acc);
      if (n > best) {
        best = n;
        best_choice = choice;
      }
      return;
    }
    Bits next(words);
    for (std::size_t k = 0; k < options[i].size(); ++k) {
      for (std::size_t w = 0; w < words; ++w) next[w] = acc[w] | option_bits[i][k][w];
      choice[i] = k;
      search(i + 1, next);
      if (best == static_cast<int>(inst.targets.size())) return;
    }
  };
  search(0, Bits(words, 0));

  Directive out;
  for (std::size_t i = 0; i < drones.size(); ++i) out.assignments[drones[i].id] = options[i][best_choice[i]];
  out.covered_count = std::max(best, 0);
  return out;
}

std::vector<Vector2> claims_for(const std::vector<Vector2>& targets, const Pose2D& pose,
                                const CameraModel& cam) {
  std::vector<Vector2> out;
  for (const auto& t : targets)
    if (is_covered(t, pose, cam)) out.push_back(t);
  return out;
}

Pose2D solve_distributed_step(const LocalView& view) {
  std::vector<Vector2> open;
  for (const auto& t : view.targets) {
    const bool claimed = std::any_of(view.claimed.begin(), view.claimed.end(),
                                     [&](const Vector2& c) { return (c - t).norm() <= 1e-9; });
    if (!claimed) open.push_back(t);
  }
  if (open.empty()) return view.pose;
  const auto grid = candidate_poses(view.arena, view.grid);
  return best_pose(view.pose, open, grid, view.camera);
}

EmulatedResult solve_emulated(const LocalView& view, OffloadEndpoint& endpoint) {
  if (auto pose = endpoint.offload(view)) return {*pose, false};
  return {view.pose, true};
}

LocalView view_of(const CoverageInstance& inst, const std::string& drone, std::vector<Vector2> claimed) {
  LocalView view;
  view.drone = drone;
  auto it = std::find_if(inst.drones.begin(), inst.drones.end(), [&](const DronePose& d) { return d.id == drone; });
  if (it == inst.drones.end()) throw CoverageError("unknown drone " + drone);
  view.pose = it->pose;
  view.targets = inst.targets;
  view.claimed = std::move(claimed);
  view.arena = inst.arena;
  view.camera = inst.camera;
  view.grid = inst.grid;
  return view;
}

namespace {

[[noreturn]] void instance_error(const YAML::Node& node, const std::string& what) {
  throw CoverageError("instance line " + std::to_string(node.Mark().line + 1) + ": " + what);
}

Vector2 read_point(const YAML::Node& node) {
  if (!node.IsSequence() || node.size() != 2) instance_error(node, "expected [x, y]");
  return {node[0].as<double>(), node[1].as<double>()};
}

}  // namespace

CoverageInstance load_instance(const std::filesystem::path& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    throw CoverageError("instance " + path.string() + ": " + e.what());
  }
  CoverageInstance inst;
  try {
    if (auto a = root["arena"]) {
      inst.arena.width = a["width"].as<double>(inst.arena.width);
      inst.arena.height = a["height"].as<double>(inst.arena.height);
    }
    if (auto c = root["camera"]) {
      if (c["fov_deg"]) inst.camera.fov = c["fov_deg"].as<double>() * std::numbers::pi / 180.0;
      inst.camera.r_min = c["r_min"].as<double>(inst.camera.r_min);
      inst.camera.r_max = c["r_max"].as<double>(inst.camera.r_max);
    }
    if (auto g = root["grid"]) {
      inst.grid.pitch = g["pitch"].as<double>(inst.grid.pitch);
      inst.grid.orientations = g["orientations"].as<int>(inst.grid.orientations);
    }
    for (const auto& t : root["targets"]) inst.targets.push_back(read_point(t));
    for (const auto& d : root["drones"]) {
      const auto pose = d["pose"];
      if (!pose.IsSequence() || pose.size() != 3) instance_error(d, "drone pose must be [x, y, yaw]");
      inst.drones.push_back({d["id"].as<std::string>(),
                             Pose2D(pose[0].as<double>(), pose[1].as<double>(), pose[2].as<double>())});
    }
  } catch (const YAML::Exception& e) {
    throw CoverageError("instance line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  inst.validate();
  return inst;
}

}  // namespace una
