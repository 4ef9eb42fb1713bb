#pragma once

// Grayscale image in [0,1] with a quality tag, plus binary PGM (P5, 8-bit)
// reading and writing. Writes are atomic (temp file + rename).

#include <string>
#include <vector>

#include "dspk/common.hpp"

namespace dspk {

enum class Quality { low, high, generated };

const char* quality_name(Quality q);
Quality quality_from_name(const std::string& s);

struct Image {
  int h = 0;
  int w = 0;
  std::vector<float> px;  // row-major, values in [0,1]
  Quality tag = Quality::low;

  Image() = default;
  Image(int height, int width, Quality q)
      : h(height), w(width), px(size_t(height) * width, 0.0f), tag(q) {}

  float& at(int y, int x) { return px[size_t(y) * w + x]; }
  float at(int y, int x) const { return px[size_t(y) * w + x]; }
};

Image read_pgm(const std::string& path, Quality tag);
void write_pgm(const Image& img, const std::string& path);

}  // namespace dspk
