#include "gridadv/gabor_noise.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <random>

#include "gridadv/error.hpp"

namespace gridadv {

namespace {

constexpr double kPi = std::numbers::pi;
// exp(-41.45) < 1e-18: beyond this radius an impulse is below double resolution
// relative to any unit-magnitude contribution.
constexpr double kUnderflowExponent = 41.45;
constexpr std::size_t kMaxCellsPerAxis = 512;

}  // namespace

void GaborKernelParams::validate() const {
  if (!std::isfinite(magnitude)) throw ValidationError("K", "must be finite");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ValidationError("sigma", "must be finite and >= 0");
  if (!(frequency >= 0.0) || !std::isfinite(frequency)) throw ValidationError("F0", "must be finite and >= 0");
  if (!(orientation >= 0.0 && orientation < kPi)) throw ValidationError("omega0", "must lie in [0, pi)");
}

Rect default_noise_domain() { return {0.0, 1.2, 0.0, std::log(10.0)}; }

double gabor_kernel(const GaborKernelParams& p, double x, double y) {
  const double envelope = p.sigma == 0.0 ? 1.0 : std::exp(-kPi * p.sigma * p.sigma * (x * x + y * y));
  return p.magnitude * envelope *
         std::cos(2.0 * kPi * p.frequency * (x * std::cos(p.orientation) + y * std::sin(p.orientation)));
}

GaborField::GaborField(std::vector<GaborImpulse> impulses, Rect domain, std::uint64_t seed)
    : impulses_(std::move(impulses)), domain_(domain), seed_(seed) {
  for (const auto& imp : impulses_) {
    if (!std::isfinite(imp.x) || !std::isfinite(imp.y)) throw ValidationError("impulse.position", "must be finite");
    if (!std::isfinite(imp.weight)) throw ValidationError("impulse.weight", "must be finite");
    imp.params.validate();
  }
  build_index();
}

void GaborField::build_index() {
  cached_.clear();
  unbounded_.clear();
  cached_.reserve(impulses_.size());
  double max_radius = 0.0;
  double bx0 = 0, bx1 = 0, by0 = 0, by1 = 0;
  bool any_bounded = false;
  for (std::size_t i = 0; i < impulses_.size(); ++i) {
    const auto& imp = impulses_[i];
    const auto& p = imp.params;
    const double f = 2.0 * kPi * p.frequency;
    cached_.push_back({imp.x, imp.y, imp.weight * p.magnitude, kPi * p.sigma * p.sigma,
                       f * std::cos(p.orientation), f * std::sin(p.orientation)});
    if (p.sigma == 0.0) {
      unbounded_.push_back(i);
      continue;
    }
    max_radius = std::max(max_radius, std::sqrt(kUnderflowExponent / kPi) / p.sigma);
    if (!any_bounded) {
      bx0 = bx1 = imp.x;
      by0 = by1 = imp.y;
      any_bounded = true;
    } else {
      bx0 = std::min(bx0, imp.x);
      bx1 = std::max(bx1, imp.x);
      by0 = std::min(by0, imp.y);
      by1 = std::max(by1, imp.y);
    }
  }
  cols_ = rows_ = 0;
  cell_start_.clear();
  cell_items_.clear();
  if (!any_bounded) return;

  const double extent = std::max(bx1 - bx0, by1 - by0);
  cell_ = std::max(max_radius, extent / static_cast<double>(kMaxCellsPerAxis));
  grid_x0_ = bx0;
  grid_y0_ = by0;
  cols_ = static_cast<std::size_t>((bx1 - bx0) / cell_) + 1;
  rows_ = static_cast<std::size_t>((by1 - by0) / cell_) + 1;

  std::vector<std::size_t> counts(cols_ * rows_ + 1, 0);
  auto cell_of = [&](const GaborImpulse& imp) {
    const auto cx = std::min(cols_ - 1, static_cast<std::size_t>((imp.x - grid_x0_) / cell_));
    const auto cy = std::min(rows_ - 1, static_cast<std::size_t>((imp.y - grid_y0_) / cell_));
    return cy * cols_ + cx;
  };
  for (const auto& imp : impulses_) {
    if (imp.params.sigma != 0.0) ++counts[cell_of(imp) + 1];
  }
  for (std::size_t c = 1; c < counts.size(); ++c) counts[c] += counts[c - 1];
  cell_start_ = counts;
  cell_items_.resize(counts.back());
  for (std::size_t i = 0; i < impulses_.size(); ++i) {
    if (impulses_[i].params.sigma == 0.0) continue;
    cell_items_[counts[cell_of(impulses_[i])]++] = i;
  }
}

double GaborField::contribution(const Cached& c, double x, double y) const {
  const double dx = x - c.x;
  const double dy = y - c.y;
  const double envelope = c.gauss == 0.0 ? 1.0 : std::exp(-c.gauss * (dx * dx + dy * dy));
  return c.scaled_weight * envelope * std::cos(c.freq_cos * dx + c.freq_sin * dy);
}

double GaborField::evaluate(double x, double y) const {
  double sum = 0.0;
  for (auto i : unbounded_) sum += contribution(cached_[i], x, y);
  if (cols_ == 0) return sum;

  const auto fx = std::floor((x - grid_x0_) / cell_);
  const auto fy = std::floor((y - grid_y0_) / cell_);
  const auto lo_x = static_cast<long long>(std::max(fx - 1.0, 0.0));
  const auto hi_x = static_cast<long long>(std::min(fx + 1.0, static_cast<double>(cols_) - 1.0));
  const auto lo_y = static_cast<long long>(std::max(fy - 1.0, 0.0));
  const auto hi_y = static_cast<long long>(std::min(fy + 1.0, static_cast<double>(rows_) - 1.0));
  for (long long cy = lo_y; cy <= hi_y; ++cy) {
    for (long long cx = lo_x; cx <= hi_x; ++cx) {
      const auto cell = static_cast<std::size_t>(cy) * cols_ + static_cast<std::size_t>(cx);
      for (std::size_t k = cell_start_[cell]; k < cell_start_[cell + 1]; ++k) {
        sum += contribution(cached_[cell_items_[k]], x, y);
      }
    }
  }
  return sum;
}

double GaborField::evaluate_direct(double x, double y) const {
  double sum = 0.0;
  for (const auto& imp : impulses_) sum += imp.weight * gabor_kernel(imp.params, x - imp.x, y - imp.y);
  return sum;
}

double GaborField::amplitude_bound() const {
  double bound = 0.0;
  for (const auto& imp : impulses_) bound += std::abs(imp.weight * imp.params.magnitude);
  return bound;
}

ImpulseLayout sample_layout(double density, const Rect& domain, std::uint64_t seed, double sigma_floor) {
  if (!(density > 0.0) || !std::isfinite(density)) throw ValidationError("density", "must be positive");
  if (!(domain.width() > 0.0) || !(domain.height() > 0.0)) {
    throw ValidationError("domain", "degenerate rectangle");
  }
  if (!(sigma_floor > 0.0)) throw ValidationError("sigma_floor", "must be positive");

  ImpulseLayout layout;
  layout.domain = domain;
  layout.density = density;
  layout.sigma_floor = sigma_floor;
  layout.seed = seed;

  const Rect padded = domain.expanded(3.0 / sigma_floor);
  std::mt19937_64 rng(seed);
  std::poisson_distribution<long long> count_dist(density * padded.area());
  const auto count = static_cast<std::size_t>(count_dist(rng));
  std::uniform_real_distribution<double> ux(padded.x_min, padded.x_max);
  std::uniform_real_distribution<double> uy(padded.y_min, padded.y_max);
  std::bernoulli_distribution sign(0.5);
  layout.points.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double x = ux(rng);
    const double y = uy(rng);
    layout.points.push_back({x, y, sign(rng) ? 1.0 : -1.0});
  }
  return layout;
}

GaborField field_from_layout(const ImpulseLayout& layout, const GaborKernelParams& kernel) {
  kernel.validate();
  const Rect padded = layout.domain.expanded(3.0 / std::max(kernel.sigma, layout.sigma_floor));
  std::vector<GaborImpulse> impulses;
  impulses.reserve(layout.points.size());
  for (const auto& p : layout.points) {
    if (padded.contains(p.x, p.y)) impulses.push_back({p.x, p.y, p.weight, kernel});
  }
  return GaborField(std::move(impulses), layout.domain, layout.seed);
}

GaborField build_field(const GaborKernelParams& kernel, double density, const Rect& domain,
                       std::uint64_t seed, double sigma_floor) {
  return field_from_layout(sample_layout(density, domain, seed, sigma_floor), kernel);
}

double bus_coordinate(std::size_t bus_index) { return std::log(static_cast<double>(bus_index) + 1.0); }

std::vector<double> perturbation_vector(const GaborField& field, std::span<const double> frame) {
  std::vector<double> n(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) {
    n[i] = field.evaluate(std::abs(frame[i]), bus_coordinate(i));
  }
  return n;
}

void write_field_csv(std::ostream& out, const GaborField& field) {
  out << "x,y,weight,K,sigma,F0,omega0\n";
  char buf[256];
  for (const auto& imp : field.impulses()) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", imp.x, imp.y, imp.weight,
                  imp.params.magnitude, imp.params.sigma, imp.params.frequency, imp.params.orientation);
    out << buf;
  }
}

}  // namespace gridadv
