#include "dspk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace dspk::metrics {

void Roi::validate(int img_w, int img_h) const {
  check(w > 0 && h > 0, "roi: width/height must be positive");
  check(int64_t(w) * h >= 256, "roi: area must be >= 256 pixels");
  check(x >= 0 && y >= 0 && x + w <= img_w && y + h <= img_h,
        "roi '" + label + "': not fully inside the image");
}

double ssnr(const Image& image, const Roi& roi) {
  roi.validate(image.w, image.h);
  double sum = 0.0;
  const int64_t n = int64_t(roi.w) * roi.h;
  for (int r = 0; r < roi.h; ++r)
    for (int c = 0; c < roi.w; ++c)
      sum += double(image.at(roi.y + r, roi.x + c)) * 255.0;
  const double mean = sum / double(n);
  double sq = 0.0;
  for (int r = 0; r < roi.h; ++r)
    for (int c = 0; c < roi.w; ++c) {
      const double d = double(image.at(roi.y + r, roi.x + c)) * 255.0 - mean;
      sq += d * d;
    }
  const double var = sq / double(n);  // population variance
  if (var <= 0.0)
    throw ContractError("ssnr: undefined for zero-variance ROI '" + roi.label + "'");
  return mean / std::sqrt(var);
}

std::vector<double> intensity_pdf(const Image& image, const Roi& roi, int bins) {
  roi.validate(image.w, image.h);
  check(bins >= 1, "intensity_pdf: bins must be >= 1");
  std::vector<double> pdf(size_t(bins), 0.0);
  const int64_t n = int64_t(roi.w) * roi.h;
  for (int r = 0; r < roi.h; ++r)
    for (int c = 0; c < roi.w; ++c) {
      const float v = image.at(roi.y + r, roi.x + c);
      int b = int(double(v) * bins);
      b = std::clamp(b, 0, bins - 1);
      pdf[size_t(b)] += 1.0;
    }
  for (auto& v : pdf) v /= double(n);
  return pdf;
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q,
                     double epsilon) {
  check_dim(p.size() == q.size(), "kl_divergence: length mismatch");
  check(epsilon > 0, "kl_divergence: epsilon must be positive");
  double ps = 0.0, qs = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    ps += p[i] + epsilon;
    qs += q[i] + epsilon;
  }
  double kl = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    const double pi = (p[i] + epsilon) / ps;
    const double qi = (q[i] + epsilon) / qs;
    kl += pi * std::log(pi / qi);  // exactly 0 when p == q bitwise
  }
  return kl;
}

double MetricsReport::mean_ssnr_x() const {
  double s = 0;
  for (const auto& r : rows) s += r.ssnr_x;
  return rows.empty() ? 0.0 : s / double(rows.size());
}
double MetricsReport::mean_ssnr_xhat() const {
  double s = 0;
  for (const auto& r : rows) s += r.ssnr_xhat;
  return rows.empty() ? 0.0 : s / double(rows.size());
}
double MetricsReport::mean_kl_x_xhat() const {
  double s = 0;
  for (const auto& r : rows) s += r.kl_x_xhat;
  return rows.empty() ? 0.0 : s / double(rows.size());
}
double MetricsReport::mean_kl_y_xhat() const {
  double s = 0;
  for (const auto& r : rows) s += r.kl_y_xhat;
  return rows.empty() ? 0.0 : s / double(rows.size());
}

MetricsReport evaluate(const std::vector<Image>& reference,
                       const std::vector<Image>& input,
                       const std::vector<Image>& despeckled,
                       const std::vector<Roi>& rois,
                       const std::vector<double>& timings,
                       const std::vector<std::string>& names) {
  check_dim(reference.size() == input.size() &&
                input.size() == despeckled.size(),
            "evaluate: image lists must be aligned");
  check(!rois.empty(), "evaluate: no ROIs given");
  check_dim(timings.empty() || timings.size() == input.size(),
            "evaluate: timing list must match image count");
  MetricsReport report;
  for (size_t i = 0; i < input.size(); ++i) {
    for (const auto& roi : rois) {
      ReportRow row;
      row.image = i < names.size() ? names[i] : "image" + std::to_string(i);
      row.roi = roi.label;
      row.ssnr_x = ssnr(input[i], roi);
      row.ssnr_y = ssnr(reference[i], roi);
      row.ssnr_xhat = ssnr(despeckled[i], roi);
      const auto px = intensity_pdf(input[i], roi);
      const auto py = intensity_pdf(reference[i], roi);
      const auto ph = intensity_pdf(despeckled[i], roi);
      row.kl_x_xhat = kl_divergence(px, ph);
      row.kl_y_xhat = kl_divergence(py, ph);
      row.seconds = timings.empty() ? 0.0 : timings[i];
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

namespace {

void write_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw IoError("cannot write " + tmp);
    os << content;
    if (!os) throw IoError("short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp);
}

}  // namespace

void write_report_text(const MetricsReport& r, const std::string& path) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "%-16s %-10s %9s %9s %10s %10s %10s %9s\n",
                "image", "roi", "ssnr_x", "ssnr_y", "ssnr_xhat", "kl_x_xhat",
                "kl_y_xhat", "seconds");
  os << line;
  for (const auto& row : r.rows) {
    std::snprintf(line, sizeof(line),
                  "%-16s %-10s %9.4f %9.4f %10.4f %10.4f %10.4f %9.3f\n",
                  row.image.c_str(), row.roi.c_str(), row.ssnr_x, row.ssnr_y,
                  row.ssnr_xhat, row.kl_x_xhat, row.kl_y_xhat, row.seconds);
    os << line;
  }
  std::snprintf(line, sizeof(line),
                "mean: ssnr_x=%.4f ssnr_xhat=%.4f kl_x_xhat=%.4f kl_y_xhat=%.4f\n",
                r.mean_ssnr_x(), r.mean_ssnr_xhat(), r.mean_kl_x_xhat(),
                r.mean_kl_y_xhat());
  os << line;
  write_atomic(path, os.str());
}

void write_report_tsv(const MetricsReport& r, const std::string& path) {
  std::ostringstream os;
  os << "image\troi\tssnr_x\tssnr_y\tssnr_xhat\tkl_x_xhat\tkl_y_xhat\tseconds\n";
  for (const auto& row : r.rows) {
    char line[256];
    std::snprintf(line, sizeof(line), "%s\t%s\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\n",
                  row.image.c_str(), row.roi.c_str(), row.ssnr_x, row.ssnr_y,
                  row.ssnr_xhat, row.kl_x_xhat, row.kl_y_xhat, row.seconds);
    os << line;
  }
  write_atomic(path, os.str());
}

std::vector<Roi> read_roi_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open ROI file " + path);
  std::vector<Roi> rois;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Roi r;
    if (!(ls >> r.label >> r.x >> r.y >> r.w >> r.h))
      throw IoError("malformed ROI line: " + line);
    rois.push_back(r);
  }
  check(!rois.empty(), "ROI file has no entries: " + path);
  return rois;
}

}  // namespace dspk::metrics
