#ifndef UNA_VISION_HPP
#define UNA_VISION_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "una/frame.hpp"
#include "una/geometry.hpp"

namespace una {

/// Hue in degrees [0, 360), saturation and value in [0, 1].
struct Hsv {
  double h = 0, s = 0, v = 0;
};

Hsv to_hsv(Rgb c);

/// Channel-wise HSV box. When hue_low > hue_high the hue interval wraps
/// through 0, e.g. [340, 20].
struct ColorRange {
  double hue_low = 0, hue_high = 360;
  double sat_low = 0, sat_high = 1;
  double val_low = 0, val_high = 1;

  bool wraps() const { return hue_low > hue_high; }
  bool contains(const Hsv& c) const;
  /// Symmetric box around a color: +-hue_tol degrees, saturation and value
  /// floors as given.
  static ColorRange around(Rgb color, double hue_tol = 20, double sat_min = 0.4,
                           double val_min = 0.35);
};

class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height) : width_(width), height_(height), bits_(std::size_t(width) * height, 0) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool get(int u, int v) const { return bits_[std::size_t(v) * width_ + u] != 0; }
  void set(int u, int v, bool on = true) { bits_[std::size_t(v) * width_ + u] = on ? 1 : 0; }
  std::size_t count() const;

  const std::vector<std::uint8_t>& data() const { return bits_; }
  std::vector<std::uint8_t>& data() { return bits_; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct PixelPoint {
  int u = 0, v = 0;
  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

/// One 8-connected foreground component.
struct Region {
  std::vector<PixelPoint> boundary;  // outer border, traced from its topmost-leftmost pixel
  std::size_t area = 0;
  Vector2 centroid = Vector2::Zero();  // pixel-mass mean (u, v)
};

BinaryMask in_range(const Frame& frame, const ColorRange& range);

/// 3x3 erosion; pixels outside the image count as unset.
BinaryMask erode(const BinaryMask& mask, int iterations = 1);

/// Border following over the mask. Regions are ordered by area descending,
/// then by centroid row, then by centroid column.
std::vector<Region> find_contours(const BinaryMask& mask);

enum class TagKind { kDrone, kTarget };

struct TagSpec {
  std::string tag;
  TagKind kind = TagKind::kDrone;
  ColorRange range;
};

/// Axis-aligned pixel-to-world map: x = (u - origin_u) * meters_per_pixel_x.
struct Calibration {
  double meters_per_pixel_x = 0;
  double meters_per_pixel_y = 0;
  double origin_u = -0.5;
  double origin_v = -0.5;
  int erode_iterations = 1;
  std::vector<TagSpec> tags;

  Vector2 to_world(const Vector2& pixel) const {
    return {(pixel.x() - origin_u) * meters_per_pixel_x, (pixel.y() - origin_v) * meters_per_pixel_y};
  }
  /// Throws std::invalid_argument on non-positive scales, duplicate tags, or
  /// more than one target tag.
  void validate() const;
};

/// Shared tag name given to every target detection.
inline constexpr const char* kTargetTag = "target";

struct Detection {
  std::string tag;
  TagKind kind = TagKind::kDrone;
  Vector2 pixel_centroid = Vector2::Zero();
  Vector2 world_position = Vector2::Zero();
  std::size_t area = 0;
  double timestamp = 0;
};

struct TagScan {
  std::vector<Detection> detections;
  std::vector<std::string> missing;  // drone tags with no surviving region
};

TagScan locate_tags(const Frame& frame, const Calibration& cal, double timestamp = 0);

struct DetectionBatch {
  std::uint64_t sequence = 0;
  double timestamp = 0;
  bool stale = false;
  std::vector<Detection> detections;
  std::vector<std::string> missing;

  const Detection* find(const std::string& tag) const;
  std::vector<Vector2> targets() const;
};

/// Fixed-rate tracker. Each tick pulls a frame; when the provider has none,
/// the previous batch is re-published with the stale flag set.
class Tracker {
 public:
  using FrameProvider = std::function<std::optional<Frame>()>;
  using Subscriber = std::function<void(const DetectionBatch&)>;

  Tracker(FrameProvider provider, Calibration cal, double period = 0.05);

  const DetectionBatch& tick();
  void subscribe(Subscriber s) { subscribers_.push_back(std::move(s)); }

  double period() const { return period_; }
  double next_time() const { return static_cast<double>(ticks_) * period_; }
  const DetectionBatch& latest() const { return latest_; }
  const Calibration& calibration() const { return cal_; }

 private:
  FrameProvider provider_;
  Calibration cal_;
  double period_;
  std::uint64_t ticks_ = 0;
  DetectionBatch latest_;
  std::vector<Subscriber> subscribers_;
};

/// Calibration file (YAML): scale, origin and per-tag HSV ranges.
Calibration load_calibration(const std::filesystem::path& path);
std::string dump_calibration(const Calibration& cal);

}  // namespace una

#endif  // UNA_VISION_HPP
