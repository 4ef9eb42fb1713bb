// SSNR, intensity PDFs, KL divergence and report assembly.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "dspk/metrics.hpp"
#include "dspk/rng.hpp"

using namespace dspk;
using metrics::Roi;

namespace {

Image two_level_image() {
  // 16x16 ROI with half the pixels 0.2 and half 0.4
  Image img(16, 16, Quality::low);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) img.at(y, x) = (x % 2 == 0) ? 0.2f : 0.4f;
  return img;
}

Image rayleigh_image(int side, uint64_t seed) {
  Image img(side, side, Quality::low);
  Rng rng(seed);
  const double s = 0.07;  // keeps samples inside [0,1)
  for (auto& v : img.px) {
    const double a = rng.normal() * s, b = rng.normal() * s;
    v = float(std::sqrt(a * a + b * b));
  }
  return img;
}

}  // namespace

TEST_CASE("ssnr two-point oracle") {
  Image img = two_level_image();
  Roi roi{"all", 0, 0, 16, 16};
  // values scale to 51 and 102: mean 76.5, population std 25.5
  CHECK(metrics::ssnr(img, roi) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("ssnr errors") {
  Image flat(16, 16, Quality::low);
  for (auto& v : flat.px) v = 0.5f;
  Roi roi{"all", 0, 0, 16, 16};
  CHECK_THROWS_AS(metrics::ssnr(flat, roi), ContractError);
  Roi outside{"bad", 8, 8, 16, 16};
  CHECK_THROWS_AS(metrics::ssnr(two_level_image(), outside), ContractError);
  Roi tiny{"small", 0, 0, 8, 8};  // 64 px < 256 floor
  CHECK_THROWS_AS(metrics::ssnr(two_level_image(), tiny), ContractError);
}

TEST_CASE("ssnr of a Rayleigh envelope is about 1.91") {
  Image img = rayleigh_image(96, 9);
  Roi roi{"all", 0, 0, 96, 96};
  CHECK(metrics::ssnr(img, roi) == doctest::Approx(1.9130).epsilon(0.05));
}

TEST_CASE("ssnr is stable under ROI translation in a stationary field") {
  Image img = rayleigh_image(160, 21);
  std::vector<double> vals;
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const int x = int(rng.uniform_below(160 - 48));
    const int y = int(rng.uniform_below(160 - 48));
    vals.push_back(metrics::ssnr(img, Roi{"r", x, y, 48, 48}));
  }
  double mean = 0;
  for (double v : vals) mean += v;
  mean /= double(vals.size());
  for (double v : vals) CHECK(std::abs(v - mean) / mean < 0.10);
}

TEST_CASE("intensity pdf") {
  Image flat(16, 16, Quality::low);
  for (auto& v : flat.px) v = 0.5f;
  Roi roi{"all", 0, 0, 16, 16};
  auto pdf = metrics::intensity_pdf(flat, roi);
  REQUIRE(pdf.size() == 256);
  CHECK(pdf[128] == doctest::Approx(1.0));

  // uniform image: every bin near 1/256 within 3-sigma multinomial bounds
  const int side = 512;  // 256*1024 samples
  Image uni(side, side, Quality::low);
  Rng rng(7);
  for (auto& v : uni.px) v = float(rng.uniform());
  auto updf = metrics::intensity_pdf(uni, Roi{"all", 0, 0, side, side});
  const double n = double(side) * side;
  const double p = 1.0 / 256.0;
  const double sigma = std::sqrt(p * (1 - p) / n);
  for (double b : updf) CHECK(std::abs(b - p) < 3.5 * sigma);

  double total = 0;
  for (double b : updf) total += b;
  CHECK(std::abs(total - 1.0) < 1e-9);

  // permutation invariance: histogram ignores pixel order
  Image shuffled = uni;
  Rng rs(9);
  for (size_t i = shuffled.px.size(); i > 1; --i)
    std::swap(shuffled.px[i - 1], shuffled.px[size_t(rs.uniform_below(i))]);
  auto spdf = metrics::intensity_pdf(shuffled, Roi{"all", 0, 0, side, side});
  for (size_t i = 0; i < spdf.size(); ++i)
    CHECK(spdf[i] == doctest::Approx(updf[i]).epsilon(1e-12));
}

TEST_CASE("kl divergence") {
  std::vector<double> p(256, 1.0 / 256.0);
  CHECK(metrics::kl_divergence(p, p) == 0.0);  // exactly zero

  std::vector<double> a = {1.0, 0.0}, b = {0.5, 0.5};
  const double kl = metrics::kl_divergence(a, b);
  CHECK(std::abs(kl - std::log(2.0)) < 1e-8);
  CHECK(metrics::kl_divergence(b, a) != doctest::Approx(kl));  // asymmetry

  std::vector<double> wrong(3, 1.0 / 3.0);
  CHECK_THROWS_AS(metrics::kl_divergence(a, wrong), DimensionError);

  // non-negativity on random pdf pairs
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> u(32), v(32);
    double su = 0, sv = 0;
    for (int i = 0; i < 32; ++i) {
      u[size_t(i)] = rng.uniform();
      v[size_t(i)] = rng.uniform();
      su += u[size_t(i)];
      sv += v[size_t(i)];
    }
    for (int i = 0; i < 32; ++i) {
      u[size_t(i)] /= su;
      v[size_t(i)] /= sv;
    }
    CHECK(metrics::kl_divergence(u, v) >= 0.0);
  }
}

TEST_CASE("evaluate report") {
  Rng rng(13);
  auto make_img = [&](float bias) {
    Image img(64, 64, Quality::low);
    for (auto& v : img.px) v = float(std::min(0.999, bias + 0.2 * rng.uniform()));
    return img;
  };
  std::vector<Image> input = {make_img(0.2f), make_img(0.25f)};
  std::vector<Image> reference = {make_img(0.5f), make_img(0.55f)};
  std::vector<Roi> rois = {Roi{"a", 0, 0, 32, 32}, Roi{"b", 32, 32, 32, 32}};

  // despeckled == input: KL(x,xhat) = 0 and identical SSNR
  auto rep = metrics::evaluate(reference, input, input, rois, {});
  CHECK(rep.rows.size() == 4);  // images x rois
  for (const auto& row : rep.rows) {
    CHECK(row.kl_x_xhat == 0.0);
    CHECK(row.ssnr_xhat == doctest::Approx(row.ssnr_x));
  }
  // despeckled == reference (oracle cheat): KL(y,xhat) ~ 0
  auto rep2 = metrics::evaluate(reference, input, reference, rois, {});
  for (const auto& row : rep2.rows) CHECK(row.kl_y_xhat == 0.0);

  metrics::write_report_text(rep, "metrics_report_test.txt");
  metrics::write_report_tsv(rep, "metrics_report_test.tsv");
  CHECK(std::filesystem::exists("metrics_report_test.txt"));
  CHECK(std::filesystem::exists("metrics_report_test.tsv"));
  std::filesystem::remove("metrics_report_test.txt");
  std::filesystem::remove("metrics_report_test.tsv");

  std::vector<Image> misaligned = {input[0]};
  CHECK_THROWS_AS(metrics::evaluate(reference, input, misaligned, rois, {}),
                  DimensionError);
}

TEST_CASE("roi file parsing") {
  {
    std::ofstream os("roi_test.txt");
    os << "# comment\n";
    os << "center 8 8 16 16\n";
    os << "edge 0 0 16 16\n";
  }
  auto rois = metrics::read_roi_file("roi_test.txt");
  REQUIRE(rois.size() == 2);
  CHECK(rois[0].label == "center");
  CHECK(rois[1].w == 16);
  std::filesystem::remove("roi_test.txt");
  CHECK_THROWS_AS(metrics::read_roi_file("missing_roi.txt"), IoError);
}
