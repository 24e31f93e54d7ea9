#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "gridadv/error.hpp"
#include "gridadv/gabor_noise.hpp"

using namespace gridadv;

namespace {

constexpr double kPi = std::numbers::pi;

// Independent long-double evaluation of the kernel sum.
long double oracle_sum(const std::vector<GaborImpulse>& impulses, double x, double y) {
  long double sum = 0.0L;
  const long double pi = 3.141592653589793238462643383279L;
  for (const auto& imp : impulses) {
    const long double dx = static_cast<long double>(x) - imp.x;
    const long double dy = static_cast<long double>(y) - imp.y;
    const long double s = imp.params.sigma;
    const long double env = s == 0.0L ? 1.0L : std::exp(-pi * s * s * (dx * dx + dy * dy));
    const long double arg = 2.0L * pi * imp.params.frequency *
                            (dx * std::cos(static_cast<long double>(imp.params.orientation)) +
                             dy * std::sin(static_cast<long double>(imp.params.orientation)));
    sum += imp.weight * imp.params.magnitude * env * std::cos(arg);
  }
  return sum;
}

GaborKernelParams random_kernel(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GaborKernelParams k;
  k.magnitude = 1.0;
  k.sigma = u(rng) < 0.1 ? 0.0 : 0.05 + 1.95 * u(rng);
  k.frequency = 5.0 * u(rng);
  k.orientation = kPi * u(rng) * 0.999999;
  return k;
}

}  // namespace

TEST_CASE("kernel closed forms") {
  GaborKernelParams p{2.5, 1.3, 0.7, 0.4};
  CHECK(gabor_kernel(p, 0.0, 0.0) == 2.5);
  CHECK(std::abs(gabor_kernel({1.0, 0.0, 0.25, 0.0}, 1.0, 0.3)) < 1e-15);
  CHECK(gabor_kernel({1.0, 1.0, 0.0, 0.0}, 0.5, 0.0) == doctest::Approx(0.45593812776599624).epsilon(1e-14));
}

TEST_CASE("kernel magnitude never exceeds |K|") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> c(-3.0, 3.0);
  for (int i = 0; i < 2000; ++i) {
    auto k = random_kernel(rng);
    k.magnitude = c(rng);
    CHECK(std::abs(gabor_kernel(k, c(rng), c(rng))) <= std::abs(k.magnitude));
  }
}

TEST_CASE("orientation is a rotation of the plane") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> c(-2.0, 2.0);
  for (int i = 0; i < 500; ++i) {
    auto k = random_kernel(rng);
    const double x = c(rng), y = c(rng);
    const double w = k.orientation;
    auto k0 = k;
    k0.orientation = 0.0;
    const double rx = x * std::cos(w) + y * std::sin(w);
    const double ry = -x * std::sin(w) + y * std::cos(w);
    CHECK(std::abs(gabor_kernel(k, x, y) - gabor_kernel(k0, rx, ry)) < 1e-12);
  }
}

TEST_CASE("zero frequency kernel is isotropic") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> c(-2.0, 2.0);
  std::uniform_real_distribution<double> a(0.0, 2 * kPi);
  for (int i = 0; i < 500; ++i) {
    auto k = random_kernel(rng);
    k.frequency = 0.0;
    const double x = c(rng), y = c(rng), t = a(rng);
    const double rx = x * std::cos(t) - y * std::sin(t);
    const double ry = x * std::sin(t) + y * std::cos(t);
    CHECK(std::abs(gabor_kernel(k, x, y) - gabor_kernel(k, rx, ry)) < 1e-12);
  }
}

TEST_CASE("kernel parameter validation") {
  CHECK_THROWS_AS(GaborKernelParams({1.0, -0.1, 1.0, 0.0}).validate(), ValidationError);
  CHECK_THROWS_AS(GaborKernelParams({1.0, 1.0, -1.0, 0.0}).validate(), ValidationError);
  CHECK_THROWS_AS(GaborKernelParams({1.0, 1.0, 1.0, kPi}).validate(), ValidationError);
  CHECK_THROWS_AS(GaborKernelParams({NAN, 1.0, 1.0, 0.0}).validate(), ValidationError);
  CHECK_NOTHROW(GaborKernelParams({1.0, 0.0, 0.0, 0.0}).validate());
}

TEST_CASE("field evaluation basics") {
  const GaborField empty({}, default_noise_domain(), 0);
  CHECK(empty.evaluate(0.5, 0.5) == 0.0);
  CHECK(empty.evaluate_direct(0.5, 0.5) == 0.0);

  const GaborField one({{0.3, 0.7, -0.5, {2.0, 1.0, 3.0, 0.2}}}, default_noise_domain(), 0);
  CHECK(one.evaluate(0.3, 0.7) == -1.0);
  CHECK(one.amplitude_bound() == 1.0);
}

TEST_CASE("accelerated evaluation matches the literal sum") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Rect dom = default_noise_domain();
  for (int f = 0; f < 5; ++f) {
    std::vector<GaborImpulse> imps;
    for (int i = 0; i < 50; ++i) {
      imps.push_back({-1.0 + 3.2 * u(rng), -1.0 + 4.3 * u(rng), u(rng) < 0.5 ? 1.0 : -1.0, random_kernel(rng)});
    }
    const GaborField field(imps, dom, 0);
    for (int q = 0; q < 1000; ++q) {
      const double x = dom.x_min + dom.width() * u(rng);
      const double y = dom.y_min + dom.height() * u(rng);
      const long double ref = oracle_sum(imps, x, y);
      const double denom = std::max(std::abs(static_cast<double>(ref)), 1e-6);
      CHECK(std::abs(field.evaluate(x, y) - static_cast<double>(ref)) / denom < 1e-9);
      CHECK(std::abs(field.evaluate_direct(x, y) - static_cast<double>(ref)) / denom < 1e-9);
      CHECK(std::abs(field.evaluate(x, y)) <= field.amplitude_bound() + 1e-12);
    }
  }
}

TEST_CASE("impulse count follows the Poisson mean") {
  const Rect dom = default_noise_domain();
  const double density = 500.0;
  const ImpulseLayout layout = sample_layout(density, dom, 9, 1.0);
  const double lambda = density * dom.expanded(3.0).area();
  CHECK(std::abs(static_cast<double>(layout.points.size()) - lambda) <= 3.0 * std::sqrt(lambda));
  for (const auto& p : layout.points) CHECK(dom.expanded(3.0).contains(p.x, p.y));
}

TEST_CASE("impulse weights are symmetric signs") {
  const auto layout = sample_layout(200.0, default_noise_domain(), 17, 1.0);
  REQUIRE(layout.points.size() >= 10000);
  double sum = 0.0;
  for (const auto& p : layout.points) {
    CHECK(std::abs(p.weight) == 1.0);
    sum += p.weight;
  }
  CHECK(std::abs(sum / static_cast<double>(layout.points.size())) < 0.03);
}

TEST_CASE("build_field is deterministic and respects the padding") {
  const GaborKernelParams k{1.0, 2.0, 1.0, 0.5};
  const auto a = build_field(k, 30.0, default_noise_domain(), 5);
  const auto b = build_field(k, 30.0, default_noise_domain(), 5);
  REQUIRE(a.impulses().size() == b.impulses().size());
  for (std::size_t i = 0; i < a.impulses().size(); ++i) {
    CHECK(a.impulses()[i].x == b.impulses()[i].x);
    CHECK(a.impulses()[i].y == b.impulses()[i].y);
    CHECK(a.impulses()[i].weight == b.impulses()[i].weight);
  }
  const Rect padded = default_noise_domain().expanded(3.0 / 2.0);
  for (const auto& imp : a.impulses()) CHECK(padded.contains(imp.x, imp.y));
  CHECK(build_field(k, 30.0, default_noise_domain(), 6).impulses().size() != 0);

  CHECK_THROWS_AS(build_field(k, 30.0, Rect{0, 0, 0, 1}, 1), ValidationError);
  CHECK_THROWS_AS(build_field(k, 0.0, default_noise_domain(), 1), ValidationError);
}

TEST_CASE("bus coordinates are natural logs") {
  CHECK(bus_coordinate(0) == 0.0);
  CHECK(bus_coordinate(1) == doctest::Approx(0.6931471805599453).epsilon(1e-15));
  CHECK(bus_coordinate(8) == doctest::Approx(2.1972245773362196).epsilon(1e-15));
}

TEST_CASE("perturbation vector") {
  const GaborField empty({}, default_noise_domain(), 0);
  const std::vector<double> frame = {1.04, 1.02, 0.99, 1.0, 0.95, 1.01, 1.03, 1.0, 0.97};
  CHECK(perturbation_vector(empty, frame) == std::vector<double>(9, 0.0));

  const auto field = build_field({1.0, 1.0, 1.5, 0.7}, 30.0, default_noise_domain(), 3);
  const auto n = perturbation_vector(field, frame);
  REQUIRE(n.size() == 9);
  std::vector<double> negated(frame);
  for (auto& v : negated) v = -v;
  CHECK(perturbation_vector(field, negated) == n);
  for (std::size_t i = 0; i < 9; ++i) CHECK(n[i] == field.evaluate(frame[i], bus_coordinate(i)));
}

TEST_CASE("field csv dump") {
  const GaborField one({{0.25, 0.5, -1.0, {1.0, 0.5, 2.0, 0.1}}}, default_noise_domain(), 0);
  std::ostringstream out;
  write_field_csv(out, one);
  std::istringstream in(out.str());
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "x,y,weight,K,sigma,F0,omega0");
  CHECK(row == "0.25,0.5,-1,1,0.5,2,0.10000000000000001");
}
