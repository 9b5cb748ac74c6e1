#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "endoslam/geometry/types.h"

namespace endoslam {

// Dense row-major single-channel image.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<size_t>(width) * height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }

  T& operator()(int x, int y) { return data_[static_cast<size_t>(y) * width_ + x]; }
  const T& operator()(int x, int y) const {
    return data_[static_cast<size_t>(y) * width_ + x];
  }

  T* row(int y) { return data_.data() + static_cast<size_t>(y) * width_; }
  const T* row(int y) const { return data_.data() + static_cast<size_t>(y) * width_; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool contains(int x, int y) const {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  bool operator==(const Image& other) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using GrayImage = Image<std::uint8_t>;
using FloatImage = Image<float>;

// Bilinear sample; the caller guarantees 0 <= x < w-1, 0 <= y < h-1.
template <typename T>
inline double bilinear(const Image<T>& img, double x, double y) {
  const int x0 = static_cast<int>(x);
  const int y0 = static_cast<int>(y);
  const double ax = x - x0, ay = y - y0;
  const T* r0 = img.row(y0) + x0;
  const T* r1 = img.row(y0 + 1) + x0;
  return (1.0 - ay) * ((1.0 - ax) * r0[0] + ax * r0[1]) +
         ay * ((1.0 - ax) * r1[0] + ax * r1[1]);
}

template <typename T>
inline bool bilinear_inside(const Image<T>& img, double x, double y, double border = 0.0) {
  return x >= border && y >= border && x < img.width() - 1 - border &&
         y < img.height() - 1 - border;
}

// Area-average resampling to the given size (deterministic, integer output
// rounded half up).
GrayImage resize_area(const GrayImage& src, int width, int height);

// Separable box blur of the given radius, applied `passes` times; edges are
// clamped.
GrayImage box_blur(const GrayImage& src, int radius, int passes);

FloatImage to_float(const GrayImage& src);

// Binary PGM (P5, maxval 255) I/O.
GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const GrayImage& image, const std::filesystem::path& path);

}  // namespace endoslam
