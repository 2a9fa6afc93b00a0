#ifndef UNA_FRAME_HPP
#define UNA_FRAME_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace una {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Row-major 8-bit RGB raster.
class Frame {
 public:
  Frame() = default;
  Frame(int width, int height, Rgb fill = {});

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return width_ == 0 || height_ == 0; }

  Rgb at(int u, int v) const {
    const auto* p = &pixels_[index(u, v)];
    return {p[0], p[1], p[2]};
  }
  void set(int u, int v, Rgb c) {
    auto* p = &pixels_[index(u, v)];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  std::span<const std::uint8_t> bytes() const { return pixels_; }
  std::span<std::uint8_t> bytes() { return pixels_; }

  friend bool operator==(const Frame&, const Frame&) = default;

 private:
  std::size_t index(int u, int v) const {
    return (static_cast<std::size_t>(v) * width_ + u) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

class PpmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary PPM (P6, maxval 255).
std::string encode_ppm(const Frame& frame);
Frame decode_ppm(std::span<const std::uint8_t> data);
Frame decode_ppm(const std::string& data);

void write_ppm(const std::filesystem::path& path, const Frame& frame);
Frame read_ppm(const std::filesystem::path& path);

}  // namespace una

#endif  // UNA_FRAME_HPP
