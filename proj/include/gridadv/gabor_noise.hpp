#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace gridadv {

// Kernel parameters: magnitude K, Gaussian width sigma, cosine frequency F0
// and orientation omega0 (radians).
struct GaborKernelParams {
  double magnitude = 1.0;
  double sigma = 1.0;
  double frequency = 0.0;
  double orientation = 0.0;

  void validate() const;
};

struct GaborImpulse {
  double x = 0.0;  // measurement axis (pu)
  double y = 0.0;  // log bus-index axis
  double weight = 1.0;
  GaborKernelParams params;
};

struct Rect {
  double x_min = 0.0, x_max = 1.0;
  double y_min = 0.0, y_max = 1.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool contains(double x, double y) const { return x >= x_min && x <= x_max && y >= y_min && y <= y_max; }
  Rect expanded(double pad) const { return {x_min - pad, x_max + pad, y_min - pad, y_max + pad}; }
};

/// Query domain for voltage perturbations: x in [0, 1.2] pu, y in [0, ln 10].
Rect default_noise_domain();

// Lower bound applied to sigma when sizing the impulse padding, so that a
// near-zero sigma does not demand an unbounded placement region.
inline constexpr double kDefaultSigmaFloor = 1.0;

/// g(x,y) = K exp(-pi sigma^2 (x^2+y^2)) cos(2 pi F0 (x cos w0 + y sin w0)).
/// sigma = 0 leaves the Gaussian factor at 1.
double gabor_kernel(const GaborKernelParams& params, double x, double y);

// Sparse-convolution noise N(x,y) = sum_i W_i g(params_i, x - x_i, y - y_i).
// Immutable after construction. `evaluate` skips impulses whose Gaussian
// envelope has underflowed below 1e-18 of their peak using a uniform grid;
// `evaluate_direct` is the literal sum.
class GaborField {
 public:
  GaborField() = default;
  GaborField(std::vector<GaborImpulse> impulses, Rect domain, std::uint64_t seed);

  double evaluate(double x, double y) const;
  double evaluate_direct(double x, double y) const;

  const std::vector<GaborImpulse>& impulses() const { return impulses_; }
  const Rect& domain() const { return domain_; }
  std::uint64_t seed() const { return seed_; }
  bool empty() const { return impulses_.empty(); }

  /// Upper bound on |N| anywhere: sum_i |W_i K_i|.
  double amplitude_bound() const;

 private:
  struct Cached {
    double x, y, scaled_weight, gauss, freq_cos, freq_sin;
  };
  void build_index();
  double contribution(const Cached& c, double x, double y) const;

  std::vector<GaborImpulse> impulses_;
  Rect domain_;
  std::uint64_t seed_ = 0;

  std::vector<Cached> cached_;
  // Impulses with a cutoff radius are bucketed; the rest (sigma = 0) are always summed.
  std::vector<std::size_t> unbounded_;
  double cell_ = 0.0;
  double grid_x0_ = 0.0, grid_y0_ = 0.0;
  std::size_t cols_ = 0, rows_ = 0;
  std::vector<std::size_t> cell_start_;
  std::vector<std::size_t> cell_items_;
};

// Impulse positions and signs independent of kernel parameters. Positions
// form a Poisson process on `domain` padded by 3 / sigma_floor.
struct ImpulseLayout {
  struct Point {
    double x, y, weight;
  };
  std::vector<Point> points;
  Rect domain;
  double density = 0.0;
  double sigma_floor = kDefaultSigmaFloor;
  std::uint64_t seed = 0;
};

ImpulseLayout sample_layout(double density, const Rect& domain, std::uint64_t seed,
                            double sigma_floor = kDefaultSigmaFloor);

/// Keeps the layout points inside domain padded by 3 / max(sigma, sigma_floor)
/// and assigns every impulse `kernel`. Restricting a Poisson process to a
/// sub-rectangle leaves it Poisson, so the count is Poisson(density * padded area).
GaborField field_from_layout(const ImpulseLayout& layout, const GaborKernelParams& kernel);

GaborField build_field(const GaborKernelParams& kernel, double density, const Rect& domain,
                       std::uint64_t seed, double sigma_floor = kDefaultSigmaFloor);

/// y_i = ln(i + 1) for zero-based bus index i.
double bus_coordinate(std::size_t bus_index);

/// n[i] = N(|frame[i]|, ln(i + 1)).
std::vector<double> perturbation_vector(const GaborField& field, std::span<const double> frame);

// Debug dump: CSV `x,y,weight,K,sigma,F0,omega0` per impulse.
void write_field_csv(std::ostream& out, const GaborField& field);

}  // namespace gridadv
