#include "endoslam/image/image.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "endoslam/util/error.h"
#include "endoslam/util/strings.h"

namespace endoslam {

GrayImage resize_area(const GrayImage& src, int width, int height) {
  if (width == src.width() && height == src.height()) return src;
  GrayImage dst(width, height);
  const double sx = static_cast<double>(src.width()) / width;
  const double sy = static_cast<double>(src.height()) / height;

  // Per-axis coverage weights, shared by all rows/columns.
  struct Span {
    int begin;
    std::vector<double> weights;
  };
  const auto spans = [](int n_dst, int n_src, double scale) {
    std::vector<Span> out(n_dst);
    for (int i = 0; i < n_dst; ++i) {
      const double a = i * scale;
      const double b = std::min((i + 1) * scale, static_cast<double>(n_src));
      const int first = static_cast<int>(std::floor(a));
      const int last = std::min(static_cast<int>(std::ceil(b)), n_src);
      out[i].begin = first;
      for (int s = first; s < last; ++s) {
        const double w = std::min<double>(s + 1, b) - std::max<double>(s, a);
        out[i].weights.push_back(std::max(w, 0.0));
      }
    }
    return out;
  };
  const auto xs = spans(width, src.width(), sx);
  const auto ys = spans(height, src.height(), sy);

  std::vector<double> acc(width);
  for (int y = 0; y < height; ++y) {
    std::fill(acc.begin(), acc.end(), 0.0);
    double wy_total = 0.0;
    for (size_t j = 0; j < ys[y].weights.size(); ++j) {
      const double wy = ys[y].weights[j];
      wy_total += wy;
      const std::uint8_t* row = src.row(ys[y].begin + static_cast<int>(j));
      for (int x = 0; x < width; ++x) {
        const Span& sp = xs[x];
        double s = 0.0;
        for (size_t i = 0; i < sp.weights.size(); ++i)
          s += sp.weights[i] * row[sp.begin + i];
        acc[x] += wy * s;
      }
    }
    for (int x = 0; x < width; ++x) {
      double wx_total = 0.0;
      for (double w : xs[x].weights) wx_total += w;
      const double v = acc[x] / (wx_total * wy_total);
      dst(x, y) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
    }
  }
  return dst;
}

GrayImage box_blur(const GrayImage& src, int radius, int passes) {
  if (radius <= 0 || passes <= 0 || src.empty()) return src;
  const int w = src.width(), h = src.height();
  const int n = 2 * radius + 1;
  // Work in integers scaled by n per axis; round once per pass.
  GrayImage cur = src;
  std::vector<int> tmp(static_cast<size_t>(w) * h);
  for (int p = 0; p < passes; ++p) {
    for (int y = 0; y < h; ++y) {
      const std::uint8_t* row = cur.row(y);
      int sum = 0;
      for (int k = -radius; k <= radius; ++k) sum += row[std::clamp(k, 0, w - 1)];
      for (int x = 0; x < w; ++x) {
        tmp[static_cast<size_t>(y) * w + x] = sum;
        sum += row[std::min(x + radius + 1, w - 1)] - row[std::max(x - radius, 0)];
      }
    }
    for (int x = 0; x < w; ++x) {
      int sum = 0;
      for (int k = -radius; k <= radius; ++k)
        sum += tmp[static_cast<size_t>(std::clamp(k, 0, h - 1)) * w + x];
      for (int y = 0; y < h; ++y) {
        cur(x, y) = static_cast<std::uint8_t>((sum + n * n / 2) / (n * n));
        sum += tmp[static_cast<size_t>(std::min(y + radius + 1, h - 1)) * w + x] -
               tmp[static_cast<size_t>(std::max(y - radius, 0)) * w + x];
      }
    }
  }
  return cur;
}

FloatImage to_float(const GrayImage& src) {
  FloatImage out(src.width(), src.height());
  std::transform(src.data().begin(), src.data().end(), out.data().begin(),
                 [](std::uint8_t v) { return static_cast<float>(v); });
  return out;
}

namespace {

// Reads the next header token, skipping whitespace and comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {}
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  if (next_token(in) != "P5") fail(ErrorCode::kParse, path.string() + ": not a binary PGM");
  const auto number = [&]() {
    const auto v = parse_int(next_token(in));
    if (!v) fail(ErrorCode::kParse, path.string() + ": bad PGM header");
    return static_cast<int>(*v);
  };
  const int w = number();
  const int h = number();
  const int maxval = number();
  if (w <= 0 || h <= 0 || maxval != 255)
    fail(ErrorCode::kParse, path.string() + ": unsupported PGM header");
  GrayImage img(w, h);
  in.read(reinterpret_cast<char*>(img.data().data()),
          static_cast<std::streamsize>(img.data().size()));
  if (in.gcount() != static_cast<std::streamsize>(img.data().size()))
    fail(ErrorCode::kParse, path.string() + ": truncated PGM");
  return img;
}

void write_pgm(const GrayImage& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out << "P5\n" << image.width() << " " << image.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.data().data()),
            static_cast<std::streamsize>(image.data().size()));
  if (!out) fail(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace endoslam
