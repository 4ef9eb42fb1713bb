#pragma once

// Evaluation: speckle region SNR over homogeneous ROIs, intensity PDFs,
// KL divergence, and report assembly.

#include <string>
#include <vector>

#include "dspk/image.hpp"

namespace dspk::metrics {

struct Roi {
  std::string label;
  int x = 0, y = 0, w = 0, h = 0;

  // Must sit fully inside an image of the given size and cover >= 256 px.
  void validate(int img_w, int img_h) const;
};

// mean/std of the ROI pixels on the 8-bit scale (values * 255), population
// std. Zero variance raises an error rather than returning infinity.
double ssnr(const Image& image, const Roi& roi);

// Normalized histogram over [0,1] with equal-width bins.
std::vector<double> intensity_pdf(const Image& image, const Roi& roi,
                                  int bins = 256);

// KL(p||q) with (v+eps)-smoothed, renormalized inputs; natural log.
double kl_divergence(const std::vector<double>& p, const std::vector<double>& q,
                     double epsilon = 1e-10);

struct ReportRow {
  std::string image;
  std::string roi;
  double ssnr_x = 0, ssnr_y = 0, ssnr_xhat = 0;
  double kl_x_xhat = 0, kl_y_xhat = 0;
  double seconds = 0;  // despeckling wall clock for this image
};

struct MetricsReport {
  std::vector<ReportRow> rows;

  double mean_ssnr_x() const;
  double mean_ssnr_xhat() const;
  double mean_kl_x_xhat() const;
  double mean_kl_y_xhat() const;
};

// reference (y), input (x) and despeckled (xhat) lists are index-aligned;
// timings has one entry per image (seconds).
MetricsReport evaluate(const std::vector<Image>& reference,
                       const std::vector<Image>& input,
                       const std::vector<Image>& despeckled,
                       const std::vector<Roi>& rois,
                       const std::vector<double>& timings,
                       const std::vector<std::string>& names = {});

void write_report_text(const MetricsReport& r, const std::string& path);
void write_report_tsv(const MetricsReport& r, const std::string& path);

// One "label x y w h" line per ROI.
std::vector<Roi> read_roi_file(const std::string& path);

}  // namespace dspk::metrics
