#include <cmath>

#include "doctest.h"
#include "dstrip/errors.hpp"
#include "dstrip/nn/adam.hpp"
#include "dstrip/nn/layers.hpp"
#include "dstrip/rng.hpp"

using namespace dstrip;
using namespace dstrip::nn;

namespace {

FeatureGrid<double> random_grid(Rng& rng, int c, std::array<int, 3> s, double lo = -1, double hi = 1) {
  FeatureGrid<double> g(c, s);
  for (auto& v : g.data) v = rng.uniform(lo, hi);
  return g;
}

double dot(const FeatureGrid<double>& a, const FeatureGrid<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

/// Max relative error of an analytic input gradient against central
/// differences of the scalar dot(w, f(x)).
template <typename F>
double fd_error(F f, FeatureGrid<double> x, const FeatureGrid<double>& w, const FeatureGrid<double>& analytic, Rng& rng,
                int probes) {
  const double h = 1e-5;
  double worst = 0;
  for (int t = 0; t < probes; ++t) {
    std::size_t i = rng.below(x.data.size());
    double keep = x.data[i];
    x.data[i] = keep + h;
    double up = dot(w, f(x));
    x.data[i] = keep - h;
    double dn = dot(w, f(x));
    x.data[i] = keep;
    double fd = (up - dn) / (2 * h);
    worst = std::max(worst, std::abs(fd - analytic.data[i]) / std::max({1e-8, std::abs(fd), std::abs(analytic.data[i])}));
  }
  return worst;
}

} // namespace

TEST_SUITE("layers") {

TEST_CASE("leaky relu forward and gradient") {
  Rng rng(1);
  auto x = random_grid(rng, 2, {6, 6, 6});
  for (auto& v : x.data)
    if (std::abs(v) < 1e-3) v = 0.5;
  const double slope = 0.2;
  auto y = leaky_relu(x, slope);
  for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(y.data[i] == (x.data[i] > 0 ? x.data[i] : slope * x.data[i]));
  auto w = random_grid(rng, 2, {6, 6, 6});
  auto g = leaky_relu_backward(y, w, slope);
  CHECK(fd_error([&](const FeatureGrid<double>& in) { return leaky_relu(in, slope); }, x, w, g, rng, 100) < 1e-6);
  CHECK(leaky_relu(FeatureGrid<double>(1, {1, 1, 1}, 0.0), 0.2).data[0] == 0.0);
}

TEST_CASE("max pooling forward, routing and gradient") {
  Rng rng(2);
  auto x = random_grid(rng, 3, {6, 4, 8});
  auto p = maxpool2(x);
  REQUIRE(p.output.spatial == std::array<int, 3>{3, 2, 4});
  for (int c = 0; c < 3; ++c)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 2; ++b)
        for (int d = 0; d < 4; ++d) {
          double m = -1e9;
          for (int i = 0; i < 8; ++i) m = std::max(m, x.at(c, 2 * a + (i >> 2), 2 * b + ((i >> 1) & 1), 2 * d + (i & 1)));
          CHECK(p.output.at(c, a, b, d) == m);
        }
  auto w = random_grid(rng, 3, {3, 2, 4});
  auto g = maxpool2_backward(p, w, x.spatial);
  int nonzero = 0;
  for (double v : g.data) nonzero += v != 0.0;
  CHECK(nonzero == static_cast<int>(w.data.size()));
  CHECK(fd_error([](const FeatureGrid<double>& in) { return maxpool2(in).output; }, x, w, g, rng, 100) < 1e-6);
  CHECK_THROWS_AS(maxpool2(random_grid(rng, 1, {3, 4, 4})), ParameterError);
}

TEST_CASE("pooling ties go to the lowest index") {
  FeatureGrid<double> x(1, {2, 2, 2}, 1.0);
  auto p = maxpool2(x);
  FeatureGrid<double> w(1, {1, 1, 1}, 1.0);
  auto g = maxpool2_backward(p, w, x.spatial);
  CHECK(g.data[0] == 1.0);
  for (std::size_t i = 1; i < 8; ++i) CHECK(g.data[i] == 0.0);
}

TEST_CASE("nearest upsampling and its adjoint") {
  Rng rng(3);
  auto x = random_grid(rng, 2, {2, 3, 2});
  auto u = upsample2(x);
  REQUIRE(u.spatial == std::array<int, 3>{4, 6, 4});
  for (int c = 0; c < 2; ++c)
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 6; ++b)
        for (int d = 0; d < 4; ++d) CHECK(u.at(c, a, b, d) == x.at(c, a / 2, b / 2, d / 2));
  auto w = random_grid(rng, 2, {4, 6, 4});
  auto g = upsample2_backward(w);
  CHECK(dot(w, u) == doctest::Approx(dot(g, x)).epsilon(1e-12));
  CHECK_THROWS_AS(upsample2_backward(random_grid(rng, 1, {3, 4, 4})), ParameterError);
}

TEST_CASE("concat") {
  Rng rng(4);
  auto a = random_grid(rng, 2, {2, 2, 2});
  auto b = random_grid(rng, 3, {2, 2, 2});
  auto c = concat(a, b);
  CHECK(c.channels == 5);
  for (int k = 0; k < 2; ++k) CHECK(c.at(k, 1, 0, 1) == a.at(k, 1, 0, 1));
  for (int k = 0; k < 3; ++k) CHECK(c.at(2 + k, 0, 1, 1) == b.at(k, 0, 1, 1));
  CHECK_THROWS_AS(concat(a, random_grid(rng, 1, {2, 2, 4})), ParameterError);
}

TEST_CASE("softmax forward and gradient") {
  Rng rng(5);
  auto z = random_grid(rng, 2, {6, 6, 6}, -4, 4);
  auto p = softmax(z);
  for (std::size_t v = 0; v < p.plane(); ++v) {
    CHECK(p.data[v] + p.data[p.plane() + v] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(p.data[v] == doctest::Approx(1.0 / (1.0 + std::exp(z.data[p.plane() + v] - z.data[v]))));
  }
  auto w = random_grid(rng, 2, {6, 6, 6});
  auto g = softmax_backward(p, w);
  CHECK(fd_error([](const FeatureGrid<double>& in) { return softmax(in); }, z, w, g, rng, 100) < 1e-6);
  FeatureGrid<double> big(2, {1, 1, 1});
  big.data = {1000.0, -1000.0};
  auto pb = softmax(big);
  CHECK(pb.data[0] == 1.0);
  CHECK(pb.data[1] == 0.0);
}

TEST_CASE("adam first step closed form") {
  ModelParams<double> p;
  p.tensors.push_back({"w", {1}, {0.5}});
  ModelParams<double> g = p.zeros_like();
  g.tensors[0].data[0] = 1.0;
  AdamHyper hyper{1e-3, 0.9, 0.999, 1e-8};
  auto state = AdamState<double>::init(p, hyper);
  CHECK(state.step == 0);
  adam_step(p, g, state);
  CHECK(state.step == 1);
  double delta = p.tensors[0].data[0] - 0.5;
  CHECK(std::abs(delta + hyper.lr) < hyper.lr * hyper.eps * 2);
  ModelParams<double> bad;
  CHECK_THROWS_AS(adam_step(p, bad, state), ParameterError);
}

TEST_CASE("adam matches a scalar reference over many steps") {
  ModelParams<double> p;
  p.tensors.push_back({"w", {2}, {1.0, -2.0}});
  AdamHyper hyper{0.01, 0.9, 0.999, 1e-8};
  auto state = AdamState<double>::init(p, hyper);
  double w[2] = {1.0, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 50; ++t) {
    ModelParams<double> g = p.zeros_like();
    for (int i = 0; i < 2; ++i) g.tensors[0].data[i] = 2 * p.tensors[0].data[i];
    adam_step(p, g, state);
    for (int i = 0; i < 2; ++i) {
      double gi = 2 * w[i];
      m[i] = 0.9 * m[i] + 0.1 * gi;
      v[i] = 0.999 * v[i] + 0.001 * gi * gi;
      double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      w[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  CHECK(p.tensors[0].data[0] == doctest::Approx(w[0]).epsilon(1e-12));
  CHECK(p.tensors[0].data[1] == doctest::Approx(w[1]).epsilon(1e-12));
}

} // TEST_SUITE
