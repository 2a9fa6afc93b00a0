#include "una/frame.hpp"

#include <cctype>
#include <fstream>
#include <iterator>

namespace una {

Frame::Frame(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw std::invalid_argument("negative frame size");
  pixels_.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = fill.r;
    pixels_[i + 1] = fill.g;
    pixels_[i + 2] = fill.b;
  }
}

std::string encode_ppm(const Frame& frame) {
  std::string out = "P6\n" + std::to_string(frame.width()) + " " +
                    std::to_string(frame.height()) + "\n255\n";
  auto bytes = frame.bytes();
  out.append(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  return out;
}

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> data) : data_(data) {}

  int next_int() {
    skip_space_and_comments();
    if (pos_ >= data_.size() || !std::isdigit(data_[pos_]))
      throw PpmError("malformed PPM header");
    long value = 0;
    while (pos_ < data_.size() && std::isdigit(data_[pos_])) {
      value = value * 10 + (data_[pos_++] - '0');
      if (value > 1'000'000) throw PpmError("PPM dimension too large");
    }
    return static_cast<int>(value);
  }

  void expect_magic() {
    if (data_.size() < 2 || data_[0] != 'P' || data_[1] != '6')
      throw PpmError("not a binary PPM (P6)");
    pos_ = 2;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= data_.size() || !std::isspace(data_[pos_]))
      throw PpmError("malformed PPM header");
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < data_.size()) {
      if (std::isspace(data_[pos_])) {
        ++pos_;
      } else if (data_[pos_] == '#') {
        while (pos_ < data_.size() && data_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace

Frame decode_ppm(std::span<const std::uint8_t> data) {
  HeaderReader reader(data);
  reader.expect_magic();
  const int width = reader.next_int();
  const int height = reader.next_int();
  const int maxval = reader.next_int();
  if (maxval != 255) throw PpmError("only maxval 255 is supported");
  const std::size_t start = reader.raster_start();
  const std::size_t need = static_cast<std::size_t>(width) * height * 3;
  if (data.size() - start < need) throw PpmError("truncated PPM raster");

  Frame frame(width, height);
  std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(start), need, frame.bytes().begin());
  return frame;
}

Frame decode_ppm(const std::string& data) {
  return decode_ppm(std::span(reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

void write_ppm(const std::filesystem::path& path, const Frame& frame) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PpmError("cannot open " + path.string() + " for writing");
  const auto encoded = encode_ppm(frame);
  out.write(encoded.data(), static_cast<std::streamsize>(encoded.size()));
}

Frame read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PpmError("cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_ppm(data);
}

}  // namespace una
