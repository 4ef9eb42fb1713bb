#include "dspk/image.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace dspk {

const char* quality_name(Quality q) {
  switch (q) {
    case Quality::low: return "low";
    case Quality::high: return "high";
    case Quality::generated: return "generated";
  }
  return "?";
}

Quality quality_from_name(const std::string& s) {
  if (s == "low") return Quality::low;
  if (s == "high") return Quality::high;
  if (s == "generated") return Quality::generated;
  throw ContractError("unknown quality label: " + s);
}

namespace {

// Skips whitespace and '#' comment lines in a PGM header.
int next_header_int(std::istream& is) {
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
    } else if (!std::isspace(c)) {
      is.unget();
      break;
    }
  }
  int v;
  if (!(is >> v)) throw IoError("pgm: malformed header");
  return v;
}

}  // namespace

Image read_pgm(const std::string& path, Quality tag) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char m0 = 0, m1 = 0;
  is.get(m0);
  is.get(m1);
  if (m0 != 'P' || m1 != '5') throw IoError("not a binary PGM (P5): " + path);
  const int w = next_header_int(is);
  const int h = next_header_int(is);
  const int maxval = next_header_int(is);
  if (w <= 0 || h <= 0 || maxval != 255)
    throw IoError("unsupported PGM geometry in " + path);
  is.get();  // single whitespace after maxval
  std::vector<unsigned char> raw(size_t(w) * h);
  is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (is.gcount() != std::streamsize(raw.size()))
    throw IoError("truncated PGM payload in " + path);
  Image img(h, w, tag);
  for (size_t i = 0; i < raw.size(); ++i) img.px[i] = float(raw[i]) / 255.0f;
  return img;
}

void write_pgm(const Image& img, const std::string& path) {
  check(img.h > 0 && img.w > 0 && img.px.size() == size_t(img.h) * img.w,
        "write_pgm: malformed image");
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + tmp);
    os << "P5\n" << img.w << " " << img.h << "\n255\n";
    std::vector<unsigned char> raw(img.px.size());
    for (size_t i = 0; i < raw.size(); ++i) {
      float v = img.px[i];
      v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
      raw[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    os.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
    if (!os) throw IoError("short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp + " to " + path);
}

}  // namespace dspk
