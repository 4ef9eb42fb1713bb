#include "dspk/specklesim.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "dspk/ops.hpp"

namespace dspk::sim {
namespace {

constexpr double kMinContrast = 0.15;  // separation between region values
constexpr int kPlacementRetries = 200;

// 1-D Gaussian taps normalized to unit energy (sum of squares = 1), so the
// filtered field keeps the local echogenicity as its variance.
std::vector<double> psf_taps(double sigma) {
  const int r = int(std::ceil(3.0 * sigma));
  std::vector<double> w(size_t(2 * r + 1));
  double e = 0.0;
  for (int i = -r; i <= r; ++i) {
    w[size_t(i + r)] = std::exp(-0.5 * double(i) * i / (sigma * sigma));
    e += w[size_t(i + r)] * w[size_t(i + r)];
  }
  const double inv = 1.0 / std::sqrt(e);
  for (auto& v : w) v *= inv;
  return w;
}

// Separable zero-padded convolution of a real field, double accumulation.
void filter_field(std::vector<float>& f, int size,
                  const std::vector<double>& wy, const std::vector<double>& wx) {
  const int ry = (int(wy.size()) - 1) / 2;
  const int rx = (int(wx.size()) - 1) / 2;
  std::vector<float> tmp(f.size());
  for (int y = 0; y < size; ++y) {  // horizontal
    for (int x = 0; x < size; ++x) {
      double acc = 0.0;
      for (int d = -rx; d <= rx; ++d) {
        const int ix = x + d;
        if (ix >= 0 && ix < size)
          acc += wx[size_t(d + rx)] * double(f[size_t(y) * size + ix]);
      }
      tmp[size_t(y) * size + x] = float(acc);
    }
  }
  for (int x = 0; x < size; ++x) {  // vertical
    for (int y = 0; y < size; ++y) {
      double acc = 0.0;
      for (int d = -ry; d <= ry; ++d) {
        const int iy = y + d;
        if (iy >= 0 && iy < size)
          acc += wy[size_t(d + ry)] * double(tmp[size_t(iy) * size + x]);
      }
      f[size_t(y) * size + x] = float(acc);
    }
  }
}

bool inside_ellipse(const Inclusion& e, double x, double y) {
  const double dx = x - e.cx, dy = y - e.cy;
  const double c = std::cos(e.angle), s = std::sin(e.angle);
  const double u = (dx * c + dy * s) / e.ax;
  const double v = (-dx * s + dy * c) / e.ay;
  return u * u + v * v <= 1.0;
}

}  // namespace

void PsfProfile::validate() const {
  check(axial_sigma > 0 && lateral_sigma > 0,
        "PsfProfile: sigmas must be positive");
  check(looks >= 1, "PsfProfile: looks must be >= 1");
}

int PsfProfile::support() const {
  const double s = std::max(axial_sigma, lateral_sigma);
  return 2 * int(std::ceil(3.0 * s)) + 1;
}

Phantom make_phantom(int size, int n_inclusions, uint64_t seed) {
  check(size >= 64, "make_phantom: size must be >= 64");
  check(n_inclusions >= 0, "make_phantom: negative inclusion count");
  Rng rng(seed);
  Phantom ph;
  ph.size = size;
  ph.seed = seed;
  const double bg = rng.uniform(0.35, 0.55);
  ph.map.assign(size_t(size) * size, float(bg));

  std::vector<double> taken = {bg};
  double area_budget = 0.70 * double(size) * size;
  for (int i = 0; i < n_inclusions; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementRetries && !placed; ++attempt) {
      Inclusion inc;
      inc.ax = rng.uniform(size / 16.0, size / 6.0);
      inc.ay = rng.uniform(size / 16.0, size / 6.0);
      inc.angle = rng.uniform(0.0, 3.14159265358979323846);
      const double r = std::max(inc.ax, inc.ay);
      inc.cx = rng.uniform(r + 2.0, size - r - 2.0);
      inc.cy = rng.uniform(r + 2.0, size - r - 2.0);
      inc.value = rng.uniform(0.1, 1.0);
      bool ok = true;
      for (double v : taken)
        if (std::abs(inc.value - v) < kMinContrast) ok = false;
      for (const auto& other : ph.inclusions) {
        const double dx = inc.cx - other.cx, dy = inc.cy - other.cy;
        const double rr = std::max(other.ax, other.ay);
        if (std::sqrt(dx * dx + dy * dy) < r + rr + 2.0) ok = false;
      }
      const double area = 3.14159265358979323846 * inc.ax * inc.ay;
      if (area > area_budget) ok = false;
      if (!ok) continue;
      ph.inclusions.push_back(inc);
      taken.push_back(inc.value);
      area_budget -= area;
      placed = true;
    }
    if (!placed)
      throw PlacementError(
          "make_phantom: could not place inclusion " + std::to_string(i) +
          " after bounded retries");
  }

  for (const auto& inc : ph.inclusions) {
    const int x0 = std::max(0, int(inc.cx - std::max(inc.ax, inc.ay)) - 1);
    const int x1 = std::min(size - 1, int(inc.cx + std::max(inc.ax, inc.ay)) + 1);
    const int y0 = std::max(0, int(inc.cy - std::max(inc.ax, inc.ay)) - 1);
    const int y1 = std::min(size - 1, int(inc.cy + std::max(inc.ax, inc.ay)) + 1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if (inside_ellipse(inc, x + 0.5, y + 0.5))
          ph.map[size_t(y) * size + x] = float(inc.value);
  }

  // soften region boundaries; values stay inside the hull of region values
  Tensor<float> t = Tensor<float>::from(Shape{1, 1, size, size},
                                        std::vector<float>(ph.map));
  Tensor<float> blurred = gaussian_blur<float>(nullptr, t, 1.0);
  std::copy(blurred.data(), blurred.data() + blurred.size(), ph.map.begin());

  int64_t bg_count = 0;
  for (float v : ph.map)
    if (std::abs(double(v) - bg) < 0.02) ++bg_count;
  check(bg_count * 4 >= int64_t(size) * size,
        "make_phantom: background region below 25% of area");
  return ph;
}

std::vector<float> simulate_envelope(const Phantom& phantom,
                                     const PsfProfile& psf, uint64_t seed) {
  psf.validate();
  check_dim(phantom.size >= 4 * psf.support(),
            "simulate_envelope: PSF too large for phantom");
  const int size = phantom.size;
  const size_t n = size_t(size) * size;
  const auto wy = psf_taps(psf.axial_sigma);
  const auto wx = psf_taps(psf.lateral_sigma);
  Rng rng(seed);

  std::vector<float> env(n, 0.0f);
  std::vector<float> re(n), im(n);
  for (int look = 0; look < psf.looks; ++look) {
    for (size_t i = 0; i < n; ++i) {
      // circular complex Gaussian with E|z|^2 = echogenicity
      const double amp = std::sqrt(double(phantom.map[i]) * 0.5);
      re[i] = float(rng.normal() * amp);
      im[i] = float(rng.normal() * amp);
    }
    filter_field(re, size, wy, wx);
    filter_field(im, size, wy, wx);
    for (size_t i = 0; i < n; ++i) {
      env[i] += std::sqrt(re[i] * re[i] + im[i] * im[i]);
    }
  }
  const float inv = 1.0f / float(psf.looks);
  for (auto& v : env) v *= inv;
  return env;
}

Image simulate_speckle(const Phantom& phantom, const PsfProfile& psf,
                       uint64_t seed) {
  const auto env = simulate_envelope(phantom, psf, seed);
  Image img(phantom.size, phantom.size, psf.label);
  float maxv = 0.0f;
  for (float v : env) maxv = std::max(maxv, v);
  check(maxv > 0.0f, "simulate_speckle: empty envelope");
  for (size_t i = 0; i < env.size(); ++i) {
    const double ratio = std::max(double(env[i]), 1e-20) / double(maxv);
    const double db = 20.0 * std::log10(ratio);
    const double v = (db + kDynamicRangeDb) / kDynamicRangeDb;
    img.px[i] = float(std::clamp(v, 0.0, 1.0));
  }
  return img;
}

std::vector<ManifestEntry> make_dataset(int n_images, const PsfProfile& psf,
                                        const std::string& out_dir,
                                        uint64_t seed, int size,
                                        int max_inclusions) {
  check(n_images >= 1, "make_dataset: n_images must be >= 1");
  psf.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir);

  std::vector<ManifestEntry> entries;
  const std::string prefix = quality_name(psf.label);
  for (int i = 0; i < n_images; ++i) {
    const uint64_t img_seed = mix_seed(seed, uint64_t(i));
    const int n_inc =
        max_inclusions > 0 ? int(mix_seed(seed, 1000u + uint64_t(i)) %
                                 uint64_t(max_inclusions + 1))
                           : 0;
    Phantom ph = make_phantom(size, n_inc, mix_seed(img_seed, 1));
    Image img = simulate_speckle(ph, psf, mix_seed(img_seed, 2));
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%04d.pgm", prefix.c_str(), i);
    write_pgm(img, out_dir + "/" + name);
    entries.push_back({name, img_seed, psf.label});
  }
  write_manifest(out_dir + "/manifest.txt", entries);
  return entries;
}

void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw IoError("cannot write " + tmp);
    for (const auto& e : entries)
      os << e.filename << '\t' << e.seed << '\t' << quality_name(e.label) << '\n';
    if (!os) throw IoError("short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw IoError("malformed manifest line: " + line);
    ManifestEntry e;
    e.filename = line.substr(0, t1);
    e.seed = std::stoull(line.substr(t1 + 1, t2 - t1 - 1));
    e.label = quality_from_name(line.substr(t2 + 1));
    entries.push_back(e);
  }
  return entries;
}

std::vector<Image> load_manifest_images(const std::string& dir,
                                        const std::string& manifest_path) {
  const auto entries = read_manifest(manifest_path);
  std::vector<Image> images;
  images.reserve(entries.size());
  for (const auto& e : entries)
    images.push_back(read_pgm(dir + "/" + e.filename, e.label));
  return images;
}

}  // namespace dspk::sim
