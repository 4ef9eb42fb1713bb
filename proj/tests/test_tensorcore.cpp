// Tensor/tape semantics, per-op forward oracles, and finite-difference
// gradient checks on the double instantiation of the ops.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dspk/adam.hpp"
#include "dspk/ops.hpp"
#include "testutil.hpp"

using namespace dspk;
using testutil::grad_check;
using testutil::random_tensor;
using testutil::random_tensor_no_kink;

TEST_CASE("tensor invariants") {
  Tensor<float> t(Shape{2, 3});
  CHECK(t.size() == 6);
  CHECK_THROWS_AS(Tensor<float>(Shape{2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor<float>::from(Shape{2, 2}, {1.f, 2.f}), DimensionError);
  Tensor<float> nan_t = Tensor<float>::from(Shape{2}, {1.f, NAN});
  CHECK_FALSE(all_finite(nan_t));
  CHECK(all_finite(t));
}

TEST_CASE("backward: sum gives ones, sum of squares gives 2x") {
  Tensor<double> x = Tensor<double>::from(Shape{2}, {1.0, -2.0}, true);
  Tape<double> tape;
  Tensor<double> l = sum_all(&tape, mul(&tape, x, x));
  tape.backward(l);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(-4.0));

  Tensor<double> y = Tensor<double>::from(Shape{2, 2}, {1, 2, 3, 4}, true);
  Tape<double> tape2;
  tape2.backward(sum_all(&tape2, y));
  for (int i = 0; i < 4; ++i) CHECK(y.grad()[i] == doctest::Approx(1.0));
}

TEST_CASE("tape contracts") {
  Tensor<double> x = Tensor<double>::from(Shape{2}, {1.0, 2.0}, true);
  Tape<double> tape;
  Tensor<double> s = sum_all(&tape, x);
  tape.backward(s);
  CHECK_THROWS_AS(tape.backward(s), ContractError);  // consumed once
  Tape<double> tape2;
  Tensor<double> v = add(&tape2, x, x);
  CHECK_THROWS_AS(tape2.backward(v), ContractError);  // non-scalar loss
}

TEST_CASE("double-consumer accumulation matches finite differences") {
  Rng rng(3);
  auto x = random_tensor(Shape{4}, rng);
  auto r = grad_check(
      [&](Tape<double>* t) {
        // x feeds two consumers; contributions must add
        Tensor<double> a = mul(t, x, x);
        Tensor<double> b = mul_const(t, x, 3.0);
        return sum_all(t, add(t, a, b));
      },
      {x});
  CHECK(r.max_rel < 1e-3);
}

TEST_CASE("conv2d identity kernel is exact") {
  Rng rng(5);
  Tensor<float> x(Shape{1, 1, 3, 3});
  for (int i = 0; i < 9; ++i) x.data()[i] = float(rng.uniform());
  Tensor<float> k = Tensor<float>::from(Shape{1, 1, 1, 1}, {1.0f});
  Tensor<float> b = Tensor<float>::zeros(Shape{1});
  Tensor<float> y = conv2d<float>(nullptr, x, k, b, 1, Padding::same);
  for (int i = 0; i < 9; ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("conv2d stride-2 same padding truncates the window") {
  Tensor<float> x = Tensor<float>::full(Shape{1, 1, 4, 4}, 1.0f);
  Tensor<float> k = Tensor<float>::full(Shape{1, 1, 3, 3}, 1.0f);
  Tensor<float> b = Tensor<float>::zeros(Shape{1});
  Tensor<float> y = conv2d<float>(nullptr, x, k, b, 2, Padding::same);
  REQUIRE(y.shape() == Shape{1, 1, 2, 2});
  CHECK(y.data()[0] == 9.0f);  // fully inside
  CHECK(y.data()[1] == 6.0f);
  CHECK(y.data()[2] == 6.0f);
  CHECK(y.data()[3] == 4.0f);  // zero padding truncates bottom-right
}

TEST_CASE("conv2d matches the dense oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const int N = 1 + int(rng.uniform_below(2)), C = 1 + int(rng.uniform_below(3));
    const int F = 1 + int(rng.uniform_below(3)), H = 5 + int(rng.uniform_below(4));
    const int W = 5 + int(rng.uniform_below(4)), ks = 1 + 2 * int(rng.uniform_below(2));
    const int stride = 1 + int(rng.uniform_below(2));
    auto x = random_tensor(Shape{N, C, H, W}, rng);
    auto k = random_tensor(Shape{F, C, ks, ks}, rng);
    auto b = random_tensor(Shape{F}, rng);
    Tensor<double> y = conv2d<double>(nullptr, x, k, b, stride, Padding::same);
    auto want = testutil::conv2d_oracle(x.values(), N, C, H, W, k.values(), F,
                                        ks, b.values(), stride, true);
    REQUIRE(size_t(y.size()) == want.size());
    for (size_t i = 0; i < want.size(); ++i)
      CHECK(y.data()[i] == doctest::Approx(want[i]).epsilon(1e-10));
  }
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(13);
  auto x = random_tensor(Shape{1, 2, 5, 5}, rng);
  auto k = random_tensor(Shape{2, 2, 3, 3}, rng);
  auto b = random_tensor(Shape{2}, rng);
  auto r = grad_check(
      [&](Tape<double>* t) {
        return sum_all(t, conv2d(t, x, k, b, 1, Padding::same));
      },
      {x, k, b});
  CHECK(r.max_rel < 1e-3);
  // strided + valid
  auto r2 = grad_check(
      [&](Tape<double>* t) {
        Tensor<double> y = conv2d(t, x, k, b, 2, Padding::same);
        return mean_all(t, mul(t, y, y));
      },
      {x, k, b});
  CHECK(r2.max_rel < 1e-3);
}

TEST_CASE("conv2d validation errors") {
  Tensor<float> x(Shape{1, 1, 4, 4});
  Tensor<float> k(Shape{1, 2, 3, 3});  // channel mismatch
  Tensor<float> b(Shape{1});
  CHECK_THROWS_AS(conv2d<float>(nullptr, x, k, b, 1, Padding::same), DimensionError);
  Tensor<float> k2(Shape{1, 1, 3, 3});
  CHECK_THROWS_AS(conv2d<float>(nullptr, x, k2, b, 3, Padding::same), ContractError);
  Tensor<float> k3(Shape{1, 1, 5, 5});
  CHECK_THROWS_AS(conv2d<float>(nullptr, x, k3, b, 1, Padding::valid), DimensionError);
  Tensor<float> xn = Tensor<float>::full(Shape{1, 1, 4, 4}, NAN);
  CHECK_THROWS_AS(conv2d<float>(nullptr, xn, k2, b, 1, Padding::same), NumericError);
}

TEST_CASE("batch_norm forward oracles") {
  // constant channel, gamma=1, beta=0 -> zeros
  Tensor<float> x = Tensor<float>::full(Shape{2, 1, 2, 2}, 0.7f);
  Tensor<float> g = Tensor<float>::full(Shape{1}, 1.0f);
  Tensor<float> be = Tensor<float>::zeros(Shape{1});
  Tensor<float> rm = Tensor<float>::zeros(Shape{1});
  Tensor<float> rv = Tensor<float>::full(Shape{1}, 1.0f);
  Tensor<float> y =
      batch_norm<float>(nullptr, x, g, be, rm, rv, Mode::train, 0.9, 1e-5);
  for (int i = 0; i < y.size(); ++i) CHECK(y.data()[i] == doctest::Approx(0.0));

  // gamma=0, beta=c -> identically c
  Rng rng(17);
  Tensor<float> x2(Shape{2, 1, 2, 2});
  for (int i = 0; i < x2.size(); ++i) x2.data()[i] = float(rng.uniform());
  Tensor<float> g0 = Tensor<float>::zeros(Shape{1});
  Tensor<float> bc = Tensor<float>::full(Shape{1}, 0.31f);
  Tensor<float> y2 =
      batch_norm<float>(nullptr, x2, g0, bc, rm, rv, Mode::train, 0.9, 1e-5);
  for (int i = 0; i < y2.size(); ++i) CHECK(y2.data()[i] == 0.31f);

  // degenerate statistics
  Tensor<float> one(Shape{1, 2, 1, 1});
  Tensor<float> g2 = Tensor<float>::full(Shape{2}, 1.0f);
  Tensor<float> b2 = Tensor<float>::zeros(Shape{2});
  Tensor<float> rm2 = Tensor<float>::zeros(Shape{2});
  Tensor<float> rv2 = Tensor<float>::full(Shape{2}, 1.0f);
  CHECK_THROWS_AS(
      batch_norm<float>(nullptr, one, g2, b2, rm2, rv2, Mode::train, 0.9, 1e-5),
      ContractError);
}

TEST_CASE("batch_norm gradients match finite differences") {
  Rng rng(19);
  auto x = random_tensor(Shape{2, 3, 4, 4}, rng);
  auto g = random_tensor(Shape{3}, rng, 0.5, 1.5);
  auto b = random_tensor(Shape{3}, rng);
  for (Mode mode : {Mode::train, Mode::infer}) {
    Tensor<double> rm = Tensor<double>::zeros(Shape{3});
    Tensor<double> rv = Tensor<double>::full(Shape{3}, 1.0);
    auto r = grad_check(
        [&](Tape<double>* t) {
          Tensor<double> rmc = rm.clone();
          Tensor<double> rvc = rv.clone();
          Tensor<double> y = batch_norm(t, x, g, b, rmc, rvc, mode, 0.9, 1e-5);
          return mean_all(t, mul(t, y, y));
        },
        {x, g, b});
    CHECK(r.max_rel < 1e-3);
  }
}

TEST_CASE("activation oracles") {
  Tensor<float> x = Tensor<float>::from(Shape{3}, {-1.0f, 0.0f, 2.0f}, true);
  Tensor<float> lr = leaky_relu<float>(nullptr, x, 0.2);
  CHECK(lr.data()[0] == doctest::Approx(-0.2));
  CHECK(lr.data()[2] == doctest::Approx(2.0));
  Tensor<float> s = sigmoid<float>(nullptr, Tensor<float>::zeros(Shape{1}));
  CHECK(s.data()[0] == 0.5f);

  // relu gradient: 1 at x=2, 0 at x=-2
  Tensor<double> xr = Tensor<double>::from(Shape{2}, {2.0, -2.0}, true);
  Tape<double> tape;
  tape.backward(sum_all(&tape, relu(&tape, xr)));
  CHECK(xr.grad()[0] == 1.0);
  CHECK(xr.grad()[1] == 0.0);
}

TEST_CASE("activation gradients match finite differences") {
  Rng rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    auto x = random_tensor_no_kink(Shape{2, 7}, rng);
    auto r1 = grad_check(
        [&](Tape<double>* t) { return sum_all(t, relu(t, x)); }, {x});
    CHECK(r1.max_rel < 1e-3);
    auto r2 = grad_check(
        [&](Tape<double>* t) { return sum_all(t, leaky_relu(t, x, 0.2)); }, {x});
    CHECK(r2.max_rel < 1e-3);
    auto r3 = grad_check(
        [&](Tape<double>* t) {
          return mean_all(t, mul(t, sigmoid(t, x), sigmoid(t, x)));
        },
        {x});
    CHECK(r3.max_rel < 1e-3);
    auto r4 = grad_check(
        [&](Tape<double>* t) { return mean_all(t, abs_val(t, x)); }, {x});
    CHECK(r4.max_rel < 1e-3);
  }
}

TEST_CASE("global_avg_pool") {
  Tensor<float> x = Tensor<float>::from(Shape{1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor<float> y = global_avg_pool<float>(nullptr, x);
  CHECK(y.data()[0] == doctest::Approx(2.5));
  Tensor<float> c = Tensor<float>::full(Shape{2, 3, 4, 5}, 0.4f);
  Tensor<float> yc = global_avg_pool<float>(nullptr, c);
  for (int i = 0; i < yc.size(); ++i) CHECK(yc.data()[i] == doctest::Approx(0.4));

  Tensor<double> xd = Tensor<double>::from(Shape{1, 1, 2, 2}, {1, 2, 3, 4}, true);
  Tape<double> tape;
  tape.backward(sum_all(&tape, global_avg_pool(&tape, xd)));
  for (int i = 0; i < 4; ++i) CHECK(xd.grad()[i] == doctest::Approx(0.25));
}

TEST_CASE("gaussian_blur oracles") {
  // constant image exactly preserved
  Tensor<float> c = Tensor<float>::full(Shape{1, 1, 7, 9}, 0.3f);
  Tensor<float> bc = gaussian_blur<float>(nullptr, c, 1.3);
  for (int i = 0; i < bc.size(); ++i) CHECK(bc.data()[i] == 0.3f);

  // impulse response center equals the normalized kernel center weight
  Tensor<double> imp = Tensor<double>::zeros(Shape{1, 1, 9, 9});
  imp.data()[4 * 9 + 4] = 1.0;
  Tensor<double> bi = gaussian_blur<double>(nullptr, imp, 1.0);
  const auto taps = testutil::gauss_taps_oracle(1.0);
  const double center = taps[(taps.size() - 1) / 2];
  CHECK(bi.data()[4 * 9 + 4] == doctest::Approx(center * center).epsilon(1e-12));

  // transpose commutation for isotropic sigma
  Rng rng(29);
  Tensor<double> x = random_tensor(Shape{1, 1, 8, 8}, rng, 0.0, 1.0);
  Tensor<double> xt(Shape{1, 1, 8, 8});
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) xt.data()[j * 8 + i] = x.data()[i * 8 + j];
  Tensor<double> b1 = gaussian_blur<double>(nullptr, x, 1.0);
  Tensor<double> b2 = gaussian_blur<double>(nullptr, xt, 1.0);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j)
      CHECK(b1.data()[i * 8 + j] == doctest::Approx(b2.data()[j * 8 + i]).epsilon(1e-9));

  // global mean preserved within 1e-6 (symmetric reflection is mass-preserving)
  Tensor<double> r = random_tensor(Shape{1, 1, 12, 10}, rng, 0.0, 1.0);
  Tensor<double> br = gaussian_blur<double>(nullptr, r, 2.0);
  double m0 = 0, m1 = 0;
  for (int i = 0; i < r.size(); ++i) {
    m0 += r.data()[i];
    m1 += br.data()[i];
  }
  CHECK(std::abs(m0 - m1) / r.size() < 1e-6);

  CHECK_THROWS_AS(gaussian_blur<float>(nullptr, c, 0.0), ContractError);

  // matches the dense 2-D oracle
  auto want = testutil::blur2d_oracle(r.values(), 12, 10, 2.0);
  for (size_t i = 0; i < want.size(); ++i)
    CHECK(br.data()[i] == doctest::Approx(want[i]).epsilon(1e-9));
}

TEST_CASE("gaussian_blur gradient matches finite differences") {
  Rng rng(31);
  auto x = random_tensor(Shape{1, 1, 9, 9}, rng, 0.0, 1.0);
  auto r = grad_check(
      [&](Tape<double>* t) {
        Tensor<double> y = gaussian_blur(t, x, 1.0);
        return mean_all(t, mul(t, y, y));
      },
      {x});
  CHECK(r.max_rel < 1e-3);
}

TEST_CASE("elementwise op gradients match finite differences") {
  Rng rng(37);
  auto a = random_tensor(Shape{3, 4}, rng, 0.2, 1.0);
  auto b = random_tensor(Shape{3, 4}, rng, 0.3, 1.2);
  auto s = random_tensor(Shape{1}, rng, 0.5, 1.5);
  auto r = grad_check(
      [&](Tape<double>* t) {
        Tensor<double> d = div(t, a, b);
        Tensor<double> lg = log_val(t, b);
        Tensor<double> sc = scalar_scale(t, a, s);
        Tensor<double> mix = add(t, d, add(t, lg, sc));
        Tensor<double> sm = sample_mean(t, mix);  // [3]
        return mean_all(t, mul(t, sm, sm));
      },
      {a, b, s});
  CHECK(r.max_rel < 1e-3);
}

TEST_CASE("linear_vec gradient and forward") {
  Rng rng(41);
  auto x = random_tensor(Shape{3, 5}, rng);
  auto w = random_tensor(Shape{5}, rng);
  auto b = random_tensor(Shape{1}, rng);
  auto r = grad_check(
      [&](Tape<double>* t) {
        Tensor<double> y = linear_vec(t, x, w, b);
        return mean_all(t, mul(t, y, y));
      },
      {x, w, b});
  CHECK(r.max_rel < 1e-3);
}

TEST_CASE("adam first step magnitude is the learning rate") {
  // single-step closed form: |dp| = lr * |g| / (|g| + eps)
  Tensor<float> p = Tensor<float>::from(Shape{1}, {0.5f}, true);
  p.grad()[0] = 0.37f;
  std::vector<Tensor<float>> params = {p};
  AdamState<float> st{AdamConfig{}};
  st.step(params, 1e-3);
  const double expect = 1e-3 * 0.37 / (0.37 + 1e-8);
  CHECK(double(0.5f - p.data()[0]) == doctest::Approx(expect).epsilon(1e-6));
  CHECK(st.step_count() == 1);
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
  Tensor<float> p = Tensor<float>::from(Shape{3}, {1.f, 2.f, 3.f}, true);
  std::vector<Tensor<float>> params = {p};
  AdamState<float> st{AdamConfig{}};
  st.step(params, 1e-2);
  CHECK(p.data()[0] == 1.0f);
  CHECK(p.data()[1] == 2.0f);
  CHECK(p.data()[2] == 3.0f);
}

TEST_CASE("adam two steps follow the moment recurrence") {
  // scripted oracle: Adam recurrence in double precision
  const double g = 0.8, lr = 1e-2, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double p_ref = 0.25, m = 0, v = 0;
  for (int t = 1; t <= 2; ++t) {
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    p_ref -= lr * mh / (std::sqrt(vh) + eps);
  }
  Tensor<float> p = Tensor<float>::from(Shape{1}, {0.25f}, true);
  p.grad()[0] = float(g);
  std::vector<Tensor<float>> params = {p};
  AdamState<float> st{AdamConfig{}};
  st.step(params, lr);
  p.grad()[0] = float(g);
  st.step(params, lr);
  CHECK(st.step_count() == 2);
  CHECK(double(p.data()[0]) == doctest::Approx(p_ref).epsilon(1e-5));
}

TEST_CASE("adam rejects mismatched state") {
  Tensor<float> p(Shape{2}, true);
  std::vector<Tensor<float>> params = {p};
  AdamState<float> st{AdamConfig{}};
  st.step(params, 1e-3);
  Tensor<float> q(Shape{3}, true);
  std::vector<Tensor<float>> other = {q};
  CHECK_THROWS_AS(st.step(other, 1e-3), ContractError);
  CHECK_THROWS_AS(st.step(params, 0.0), ContractError);
}
