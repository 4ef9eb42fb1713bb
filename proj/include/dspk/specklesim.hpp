#pragma once

// Synthetic B-mode speckle. A phantom supplies an echogenicity map; the
// scattering field is complex circular Gaussian noise amplitude-modulated by
// sqrt(echogenicity), filtered by an anisotropic Gaussian PSF. The envelope
// is Rayleigh in homogeneous regions for a single look; the high-quality
// profile averages several independent looks, which narrows the intensity
// distribution the way a better probe/processing chain does. Display mapping
// is 50 dB log compression normalized to [0,1].

#include <cstdint>
#include <string>
#include <vector>

#include "dspk/image.hpp"
#include "dspk/rng.hpp"

namespace dspk::sim {

struct Inclusion {
  double cx, cy;      // center, pixels
  double ax, ay;      // semi-axes, pixels
  double angle;       // radians
  double value;       // echogenicity
};

struct Phantom {
  int size = 0;
  std::vector<float> map;  // echogenicity in [0.1, 1.0]
  std::vector<Inclusion> inclusions;
  uint64_t seed = 0;

  float at(int y, int x) const { return map[size_t(y) * size + x]; }
};

struct PsfProfile {
  double axial_sigma;    // pixels, along rows (y)
  double lateral_sigma;  // pixels, along columns (x)
  int looks;             // independent envelopes averaged
  Quality label;

  static PsfProfile low_quality() { return {1.0, 3.0, 1, Quality::low}; }
  static PsfProfile high_quality() { return {1.0, 1.2, 4, Quality::high}; }

  void validate() const;
  int support() const;  // full width of the larger 1-D kernel
};

inline constexpr double kDynamicRangeDb = 50.0;

// Piecewise-smooth echogenicity with n non-overlapping elliptical inclusions
// whose contrasts are kept separated. Deterministic per seed.
Phantom make_phantom(int size, int n_inclusions, uint64_t seed);

// Pre-log envelope (looks averaged), row-major size x size.
std::vector<float> simulate_envelope(const Phantom& phantom,
                                     const PsfProfile& psf, uint64_t seed);

// Envelope, log-compressed to kDynamicRangeDb and normalized to [0,1].
Image simulate_speckle(const Phantom& phantom, const PsfProfile& psf,
                       uint64_t seed);

struct ManifestEntry {
  std::string filename;
  uint64_t seed;
  Quality label;
};

// Writes n images plus `manifest.txt` (filename <tab> seed <tab> label).
std::vector<ManifestEntry> make_dataset(int n_images, const PsfProfile& psf,
                                        const std::string& out_dir,
                                        uint64_t seed, int size = 128,
                                        int max_inclusions = 3);

void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

// Loads the images listed in a manifest, in manifest order.
std::vector<Image> load_manifest_images(const std::string& dir,
                                        const std::string& manifest_path);

}  // namespace dspk::sim
