#include "ttn/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "ttn/error.hpp"
#include "ttn/io.hpp"

namespace ttn::image {

namespace {

class PpmHeaderReader {
 public:
  explicit PpmHeaderReader(std::string_view b) : b_(b) {}

  std::size_t number() {
    skip_space_and_comments();
    std::size_t v = 0;
    std::size_t digits = 0;
    while (pos_ < b_.size() && std::isdigit(static_cast<unsigned char>(b_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(b_[pos_] - '0');
      require(v < 1u << 24, ErrorCode::DecodeError, "PPM header value too large");
      ++pos_;
      ++digits;
    }
    require(digits > 0, ErrorCode::DecodeError, "malformed PPM header");
    return v;
  }

  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_start() {
    require(pos_ < b_.size() && std::isspace(static_cast<unsigned char>(b_[pos_])), ErrorCode::DecodeError,
            "malformed PPM header");
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (std::isspace(static_cast<unsigned char>(b_[pos_]))) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::string_view b_;
  std::size_t pos_ = 2;
};

}  // namespace

Tensor decode_ppm(std::string_view bytes) {
  require(bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6', ErrorCode::DecodeError, "not a binary PPM (P6)");
  PpmHeaderReader r(bytes);
  const auto w = r.number();
  const auto h = r.number();
  const auto maxval = r.number();
  require(w > 0 && h > 0, ErrorCode::DecodeError, "PPM has zero size");
  require(maxval == 255, ErrorCode::DecodeError, "only maxval 255 is supported");
  const auto start = r.raster_start();
  require(bytes.size() - start >= 3 * w * h, ErrorCode::DecodeError, "PPM raster truncated");
  Tensor img({3, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const auto v = static_cast<unsigned char>(bytes[start + 3 * (y * w + x) + c]);
        img[(c * h + y) * w + x] = static_cast<double>(v) / 255.0;
      }
    }
  }
  return img;
}

Tensor read_ppm(const std::filesystem::path& path) {
  try {
    return decode_ppm(io::read_file(path));
  } catch (const Error& e) {
    fail(ErrorCode::DecodeError, path.string() + ": " + e.what());
  }
}

std::string encode_ppm(const Tensor& img) {
  require(img.rank() == 3 && img.dim(0) == 3, ErrorCode::ShapeMismatch, "PPM needs a (3, H, W) image");
  const std::size_t h = img.dim(1), w = img.dim(2);
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + 3 * w * h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(img[(c * h + y) * w + x], 0.0, 1.0);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
      }
    }
  }
  return out;
}

void write_ppm(const std::filesystem::path& path, const Tensor& img) { io::write_atomic(path, encode_ppm(img)); }

Tensor crop(const Tensor& img, std::size_t y, std::size_t x, std::size_t size) {
  require(img.rank() == 3, ErrorCode::ShapeMismatch, "crop needs a (C, H, W) image");
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  require(size > 0 && y + size <= h && x + size <= w, ErrorCode::CropTooLarge,
          "crop " + std::to_string(size) + " at (" + std::to_string(y) + "," + std::to_string(x) +
              ") exceeds image " + shape_str(img.shape()));
  Tensor out({c, size, size});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t r = 0; r < size; ++r) {
      const double* src = &img.values()[(ch * h + y + r) * w + x];
      std::copy(src, src + size, &out.values()[(ch * size + r) * size]);
    }
  }
  return out;
}

Tensor mirror(const Tensor& img) {
  require(img.rank() == 3, ErrorCode::ShapeMismatch, "mirror needs a (C, H, W) image");
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  Tensor out(img.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t x = 0; x < w; ++x) out[(ch * h + r) * w + x] = img[(ch * h + r) * w + (w - 1 - x)];
    }
  }
  return out;
}

}  // namespace ttn::image
