#include "una/vision.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include <yaml-cpp/yaml.h>

namespace una {

Hsv to_hsv(Rgb c) {
  const double r = c.r / 255.0, g = c.g / 255.0, b = c.b / 255.0;
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  Hsv out;
  out.v = mx;
  out.s = mx > 0 ? delta / mx : 0.0;
  if (delta > 0) {
    double h;
    if (mx == r) {
      h = 60.0 * std::fmod((g - b) / delta, 6.0);
    } else if (mx == g) {
      h = 60.0 * ((b - r) / delta + 2.0);
    } else {
      h = 60.0 * ((r - g) / delta + 4.0);
    }
    if (h < 0) h += 360.0;
    if (h >= 360.0) h -= 360.0;
    out.h = h;
  }
  return out;
}

bool ColorRange::contains(const Hsv& c) const {
  const bool hue_ok = wraps() ? (c.h >= hue_low || c.h <= hue_high)
                              : (c.h >= hue_low && c.h <= hue_high);
  return hue_ok && c.s >= sat_low && c.s <= sat_high && c.v >= val_low && c.v <= val_high;
}

ColorRange ColorRange::around(Rgb color, double hue_tol, double sat_min, double val_min) {
  const Hsv hsv = to_hsv(color);
  ColorRange range;
  range.sat_low = sat_min;
  range.val_low = val_min;
  if (hue_tol >= 180) return range;
  auto wrap360 = [](double h) {
    h = std::fmod(h, 360.0);
    return h < 0 ? h + 360.0 : h;
  };
  range.hue_low = wrap360(hsv.h - hue_tol);
  range.hue_high = wrap360(hsv.h + hue_tol);
  return range;
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BinaryMask in_range(const Frame& frame, const ColorRange& range) {
  BinaryMask mask(frame.width(), frame.height());
  auto bytes = frame.bytes();
  auto& bits = mask.data();
  // Synthetic frames are dominated by a few flat colors; memoize the last one.
  Rgb last{};
  bool last_in = range.contains(to_hsv(last));
  for (std::size_t i = 0, p = 0; i < bits.size(); ++i, p += 3) {
    const Rgb c{bytes[p], bytes[p + 1], bytes[p + 2]};
    if (!(c == last)) {
      last = c;
      last_in = range.contains(to_hsv(c));
    }
    bits[i] = last_in ? 1 : 0;
  }
  return mask;
}

namespace {

BinaryMask erode_once(const BinaryMask& in) {
  const int w = in.width(), h = in.height();
  BinaryMask out(w, h);
  if (w < 3 || h < 3) return out;
  const auto& src = in.data();
  // Horizontal 3-AND first, then vertical.
  std::vector<std::uint8_t> row_and(src.size(), 0);
  for (int v = 0; v < h; ++v) {
    const std::uint8_t* s = &src[std::size_t(v) * w];
    std::uint8_t* d = &row_and[std::size_t(v) * w];
    for (int u = 1; u + 1 < w; ++u) d[u] = s[u - 1] & s[u] & s[u + 1];
  }
  auto& dst = out.data();
  for (int v = 1; v + 1 < h; ++v) {
    const std::uint8_t* a = &row_and[std::size_t(v - 1) * w];
    const std::uint8_t* b = &row_and[std::size_t(v) * w];
    const std::uint8_t* c = &row_and[std::size_t(v + 1) * w];
    std::uint8_t* d = &dst[std::size_t(v) * w];
    for (int u = 1; u + 1 < w; ++u) d[u] = a[u] & b[u] & c[u];
  }
  return out;
}

}  // namespace

BinaryMask erode(const BinaryMask& mask, int iterations) {
  if (iterations < 1) throw std::invalid_argument("erode needs at least one iteration");
  BinaryMask out = erode_once(mask);
  for (int i = 1; i < iterations; ++i) out = erode_once(out);
  return out;
}

namespace {

// Neighbor offsets (drow, dcol), counterclockwise as seen on screen starting
// at the right neighbor.
constexpr std::array<std::array<int, 2>, 8> kDirs{{
    {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}, {1, 0}, {1, 1}}};

int direction_of(int dr, int dc) {
  for (int d = 0; d < 8; ++d)
    if (kDirs[d][0] == dr && kDirs[d][1] == dc) return d;
  return -1;
}

struct Border {
  bool outer = false;
  int parent = 0;
  int component = 0;  // id of the outer border of the owning component
};

class BorderFollower {
 public:
  explicit BorderFollower(const BinaryMask& mask)
      : w_(mask.width() + 2), h_(mask.height() + 2), f_(std::size_t(w_) * h_, 0) {
    for (int v = 0; v < mask.height(); ++v)
      for (int u = 0; u < mask.width(); ++u)
        if (mask.get(u, v)) f_[idx(v + 1, u + 1)] = 1;
    borders_.resize(2);
    borders_[1] = {false, 0, 0};  // the frame acts as a hole border
  }

  std::vector<Region> run() {
    std::vector<Region> regions;
    std::vector<int> region_of(2, -1);

    for (int r = 1; r < h_ - 1; ++r) {
      int lnbd = 1;
      for (int c = 1; c < w_ - 1; ++c) {
        const int val = f_[idx(r, c)];
        if (val == 0) continue;

        bool start = false;
        bool outer = false;
        int from_dir = 0;
        if (val == 1 && f_[idx(r, c - 1)] == 0) {
          start = true;
          outer = true;
          from_dir = 4;
        } else if (val >= 1 && f_[idx(r, c + 1)] == 0) {
          start = true;
          from_dir = 0;
          if (val > 1) lnbd = val;
        }

        if (start) {
          const int nbd = static_cast<int>(borders_.size());
          Border b;
          b.outer = outer;
          const Border& prev = borders_[lnbd];
          b.parent = (outer == prev.outer) ? prev.parent : lnbd;
          b.component = outer ? nbd : borders_[b.parent].component;
          borders_.push_back(b);
          region_of.push_back(-1);

          std::vector<PixelPoint> points;
          follow(r, c, from_dir, nbd, points);
          if (outer) {
            region_of[nbd] = static_cast<int>(regions.size());
            Region region;
            region.boundary = std::move(points);
            regions.push_back(std::move(region));
          }
        }

        const int now = f_[idx(r, c)];
        if (now != 1) lnbd = std::abs(now);

        Region& region = regions[region_of[borders_[lnbd].component]];
        region.area += 1;
        region.centroid += Vector2(c - 1, r - 1);
      }
    }

    for (auto& region : regions) region.centroid /= static_cast<double>(region.area);
    return regions;
  }

 private:
  std::size_t idx(int r, int c) const { return std::size_t(r) * w_ + c; }

  void follow(int r, int c, int from_dir, int nbd, std::vector<PixelPoint>& points) {
    // Clockwise search from the entry neighbor for any nonzero pixel.
    int found = -1;
    for (int k = 0; k < 8; ++k) {
      const int d = (from_dir - k + 8) % 8;
      if (f_[idx(r + kDirs[d][0], c + kDirs[d][1])] != 0) {
        found = d;
        break;
      }
    }
    points.push_back({c - 1, r - 1});
    if (found < 0) {
      f_[idx(r, c)] = -nbd;
      return;
    }

    const int r1 = r + kDirs[found][0], c1 = c + kDirs[found][1];
    int r2 = r1, c2 = c1;
    int r3 = r, c3 = c;
    while (true) {
      // Counterclockwise from the neighbor after (r2, c2).
      const int back = direction_of(r2 - r3, c2 - c3);
      bool right_zero = false;
      int r4 = r3, c4 = c3;
      for (int k = 1; k <= 8; ++k) {
        const int d = (back + k) % 8;
        const int rr = r3 + kDirs[d][0], cc = c3 + kDirs[d][1];
        if (f_[idx(rr, cc)] != 0) {
          r4 = rr;
          c4 = cc;
          break;
        }
        if (d == 0) right_zero = true;
      }

      int& cell = f_[idx(r3, c3)];
      if (right_zero) {
        cell = -nbd;
      } else if (cell == 1) {
        cell = nbd;
      }

      if (r4 == r && c4 == c && r3 == r1 && c3 == c1) break;
      r2 = r3;
      c2 = c3;
      r3 = r4;
      c3 = c4;
      points.push_back({c3 - 1, r3 - 1});
    }
  }

  int w_, h_;
  std::vector<int> f_;
  std::vector<Border> borders_;
};

}  // namespace

std::vector<Region> find_contours(const BinaryMask& mask) {
  if (mask.width() == 0 || mask.height() == 0) return {};
  auto regions = BorderFollower(mask).run();
  std::stable_sort(regions.begin(), regions.end(), [](const Region& a, const Region& b) {
    if (a.area != b.area) return a.area > b.area;
    if (a.centroid.y() != b.centroid.y()) return a.centroid.y() < b.centroid.y();
    return a.centroid.x() < b.centroid.x();
  });
  return regions;
}

void Calibration::validate() const {
  if (!(meters_per_pixel_x > 0) || !(meters_per_pixel_y > 0))
    throw std::invalid_argument("calibration scales must be positive");
  if (erode_iterations < 1) throw std::invalid_argument("erode_iterations must be >= 1");
  std::set<std::string> seen;
  int targets = 0;
  for (const auto& t : tags) {
    if (!seen.insert(t.tag).second) throw std::invalid_argument("duplicate calibration tag: " + t.tag);
    if (t.kind == TagKind::kTarget) ++targets;
  }
  if (targets > 1) throw std::invalid_argument("calibration has more than one target range");
}

TagScan locate_tags(const Frame& frame, const Calibration& cal, double timestamp) {
  TagScan scan;
  for (const auto& spec : cal.tags) {
    const auto regions = find_contours(erode(in_range(frame, spec.range), cal.erode_iterations));
    auto make = [&](const Region& region) {
      Detection d;
      d.tag = spec.kind == TagKind::kTarget ? std::string(kTargetTag) : spec.tag;
      d.kind = spec.kind;
      d.pixel_centroid = region.centroid;
      d.world_position = cal.to_world(region.centroid);
      d.area = region.area;
      d.timestamp = timestamp;
      return d;
    };
    if (spec.kind == TagKind::kDrone) {
      if (regions.empty()) {
        scan.missing.push_back(spec.tag);
      } else {
        scan.detections.push_back(make(regions.front()));
      }
    } else {
      for (const auto& region : regions) scan.detections.push_back(make(region));
    }
  }
  return scan;
}

const Detection* DetectionBatch::find(const std::string& tag) const {
  for (const auto& d : detections)
    if (d.kind == TagKind::kDrone && d.tag == tag) return &d;
  return nullptr;
}

std::vector<Vector2> DetectionBatch::targets() const {
  std::vector<Vector2> out;
  for (const auto& d : detections)
    if (d.kind == TagKind::kTarget) out.push_back(d.world_position);
  return out;
}

Tracker::Tracker(FrameProvider provider, Calibration cal, double period)
    : provider_(std::move(provider)), cal_(std::move(cal)), period_(period) {
  cal_.validate();
  if (!(period_ > 0)) throw std::invalid_argument("tracker period must be positive");
}

const DetectionBatch& Tracker::tick() {
  const double now = next_time();
  std::optional<Frame> frame;
  try {
    frame = provider_();
  } catch (const std::exception&) {
    frame.reset();
  }

  DetectionBatch batch;
  if (frame) {
    auto scan = locate_tags(*frame, cal_, now);
    batch.detections = std::move(scan.detections);
    batch.missing = std::move(scan.missing);
  } else {
    batch = latest_;
    batch.stale = true;
  }
  batch.sequence = ticks_;
  batch.timestamp = now;
  ++ticks_;
  latest_ = std::move(batch);
  for (const auto& s : subscribers_) s(latest_);
  return latest_;
}

namespace {

std::pair<double, double> read_pair(const YAML::Node& node, const char* key, std::pair<double, double> fallback) {
  const auto n = node[key];
  if (!n) return fallback;
  if (!n.IsSequence() || n.size() != 2)
    throw std::invalid_argument(std::string("calibration: '") + key + "' must be [low, high] (line " +
                                std::to_string(n.Mark().line + 1) + ")");
  return {n[0].as<double>(), n[1].as<double>()};
}

}  // namespace

Calibration load_calibration(const std::filesystem::path& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    throw std::invalid_argument("calibration " + path.string() + ": " + e.what());
  }
  Calibration cal;
  cal.meters_per_pixel_x = root["meters_per_pixel_x"].as<double>(0.0);
  cal.meters_per_pixel_y = root["meters_per_pixel_y"].as<double>(0.0);
  cal.origin_u = root["origin_u"].as<double>(-0.5);
  cal.origin_v = root["origin_v"].as<double>(-0.5);
  cal.erode_iterations = root["erode_iterations"].as<int>(1);
  for (const auto& t : root["tags"]) {
    TagSpec spec;
    spec.tag = t["tag"].as<std::string>();
    const auto kind = t["kind"].as<std::string>("drone");
    if (kind == "drone") {
      spec.kind = TagKind::kDrone;
    } else if (kind == "target") {
      spec.kind = TagKind::kTarget;
    } else {
      throw std::invalid_argument("calibration: unknown tag kind '" + kind + "' (line " +
                                  std::to_string(t.Mark().line + 1) + ")");
    }
    std::tie(spec.range.hue_low, spec.range.hue_high) = read_pair(t, "hue", {0, 360});
    std::tie(spec.range.sat_low, spec.range.sat_high) = read_pair(t, "sat", {0, 1});
    std::tie(spec.range.val_low, spec.range.val_high) = read_pair(t, "val", {0, 1});
    cal.tags.push_back(spec);
  }
  cal.validate();
  return cal;
}

std::string dump_calibration(const Calibration& cal) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "meters_per_pixel_x" << YAML::Value << cal.meters_per_pixel_x;
  out << YAML::Key << "meters_per_pixel_y" << YAML::Value << cal.meters_per_pixel_y;
  out << YAML::Key << "origin_u" << YAML::Value << cal.origin_u;
  out << YAML::Key << "origin_v" << YAML::Value << cal.origin_v;
  out << YAML::Key << "erode_iterations" << YAML::Value << cal.erode_iterations;
  out << YAML::Key << "tags" << YAML::Value << YAML::BeginSeq;
  for (const auto& t : cal.tags) {
    out << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "tag" << YAML::Value << t.tag;
    out << YAML::Key << "kind" << YAML::Value << (t.kind == TagKind::kTarget ? "target" : "drone");
    out << YAML::Key << "hue" << YAML::Value << YAML::Flow << YAML::BeginSeq << t.range.hue_low
        << t.range.hue_high << YAML::EndSeq;
    out << YAML::Key << "sat" << YAML::Value << YAML::Flow << YAML::BeginSeq << t.range.sat_low
        << t.range.sat_high << YAML::EndSeq;
    out << YAML::Key << "val" << YAML::Value << YAML::Flow << YAML::BeginSeq << t.range.val_low
        << t.range.val_high << YAML::EndSeq;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace una
