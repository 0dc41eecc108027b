#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace qsel {

enum class Family { Uniform, Power, Beta, ParetoTruncated, PiecewisePolyDensity };

/// Shape of m -> F(m) * m on an interval.
enum class Curvature { Convex, StrictlyConvex, Concave, Neither };

std::string to_string(Family family);
std::string to_string(Curvature curvature);

inline bool is_convex(Curvature c) {
  return c == Curvature::Convex || c == Curvature::StrictlyConvex;
}

/// One term coef * m^exponent of a piecewise density.
struct PowerTerm {
  double coef = 0.0;
  double exponent = 0.0;
};

/// Density on [lo, hi] given as a sum of power terms.
struct DensityPiece {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<PowerTerm> terms;
};

/// Buyer-type law on a bounded support [a, b].
///
/// Every family except Beta is stored internally as a list of power-term
/// pieces, so F and its antiderivative F2(m) = int_a^m F(t) dt are exact
/// closed forms. Beta goes through the regularized incomplete beta function.
/// Instances are immutable after construction.
class TypeDistribution {
 public:
  static TypeDistribution uniform(double a, double b);
  /// Density proportional to m^exponent on [a, b].
  static TypeDistribution power(double exponent, double a, double b);
  /// Beta(alpha, beta) mapped affinely onto [a, b].
  static TypeDistribution beta(double alpha, double beta, double a = 0.0, double b = 1.0);
  /// F(m) proportional to 1 - (a/m)^shape on [a, b], renormalized to mass 1.
  static TypeDistribution pareto_truncated(double shape, double a, double b);
  /// Contiguous pieces covering [a, b]. The total mass must be 1 within 1e-6;
  /// it is then renormalized exactly.
  static TypeDistribution piecewise(std::vector<DensityPiece> pieces);

  Family family() const noexcept { return family_; }
  double lower() const noexcept { return a_; }
  double upper() const noexcept { return b_; }
  /// Family parameters in declaration order (empty for Uniform and piecewise).
  const std::vector<double>& params() const noexcept { return params_; }
  const std::vector<DensityPiece>& pieces() const noexcept { return pieces_; }
  std::string describe() const;

  /// Clamped: 0 below a, 1 above b.
  double cdf(double m) const;
  /// Requires m in [a, b].
  double pdf(double m) const;
  /// F2(m) = int_a^m F(t) dt, m in [a, b].
  double antiderivative_cdf(double m) const;
  /// f'(m) m / f(m), m in the open interval (a, b).
  double density_elasticity(double m) const;

  /// pdf extended by zero outside [a, b].
  double density_or_zero(double m) const;
  /// F2 extended to the real line: 0 below a, F2(b) + (m - b) above b.
  double antiderivative_cdf_extended(double m) const;

  /// Constant elasticity on the whole support, when the family has one.
  std::optional<double> constant_elasticity() const;
  /// Closed-form inverse CDF where the family admits one.
  std::optional<double> closed_form_quantile(double u) const;

 private:
  TypeDistribution() = default;
  void index_pieces();
  std::size_t piece_at(double m) const;

  Family family_ = Family::Uniform;
  double a_ = 0.0;
  double b_ = 1.0;
  std::vector<double> params_;
  std::vector<DensityPiece> pieces_;
  // Cumulative F and F2 at each piece start.
  std::vector<double> cdf_at_start_;
  std::vector<double> f2_at_start_;
};

/// Classifies m -> F(m) m on [lo, hi] through the density elasticity
/// (convex iff elasticity >= -2). Families with constant elasticity are
/// classified exactly; the rest on `grid_points` interior samples plus
/// endpoint refinement. Jumps of a piecewise density at interior
/// breakpoints are taken into account (a downward jump breaks convexity).
Curvature classify_Fm_convexity(const TypeDistribution& dist, double lo, double hi,
                                std::size_t grid_points = 1024);

/// Smallest and largest sampled elasticity on [lo, hi] (same sampling as the
/// classifier).
std::pair<double, double> elasticity_range(const TypeDistribution& dist, double lo, double hi,
                                           std::size_t grid_points = 1024);

}  // namespace qsel
