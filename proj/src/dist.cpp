#include "qsel/dist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/special_functions/beta.hpp>

#include "qsel/errors.hpp"

namespace qsel {

std::string to_string(Family family) {
  switch (family) {
    case Family::Uniform: return "Uniform";
    case Family::Power: return "Power";
    case Family::Beta: return "Beta";
    case Family::ParetoTruncated: return "ParetoTruncated";
    case Family::PiecewisePolyDensity: return "PiecewisePolyDensity";
  }
  return "?";
}

std::string to_string(Curvature curvature) {
  switch (curvature) {
    case Curvature::Convex: return "Convex";
    case Curvature::StrictlyConvex: return "StrictlyConvex";
    case Curvature::Concave: return "Concave";
    case Curvature::Neither: return "Neither";
  }
  return "?";
}

namespace {

constexpr double kTieTolerance = 1e-9;

// Antiderivative of m^e.
double power_p1(double m, double e) {
  if (e == -1.0) return std::log(m);
  return std::pow(m, e + 1.0) / (e + 1.0);
}

// Antiderivative of power_p1.
double power_p2(double m, double e) {
  if (e == -1.0) return m * std::log(m) - m;
  if (e == -2.0) return -std::log(m);
  return std::pow(m, e + 2.0) / ((e + 1.0) * (e + 2.0));
}

double piece_density(const DensityPiece& piece, double m) {
  double s = 0.0;
  for (const auto& t : piece.terms) s += t.coef * std::pow(m, t.exponent);
  return s;
}

double piece_mass(const DensityPiece& piece, double from, double to) {
  double s = 0.0;
  for (const auto& t : piece.terms) s += t.coef * (power_p1(to, t.exponent) - power_p1(from, t.exponent));
  return s;
}

double piece_elasticity(const DensityPiece& piece, double m) {
  double num = 0.0;
  double den = 0.0;
  for (const auto& t : piece.terms) {
    const double v = t.coef * std::pow(m, t.exponent);
    num += t.exponent * v;
    den += v;
  }
  return num / den;
}

bool nonnegative_integer(double e) { return e >= 0.0 && std::floor(e) == e; }

void require_support(double a, double b) {
  if (!(std::isfinite(a) && std::isfinite(b)) || a < 0.0 || !(a < b)) {
    std::ostringstream os;
    os << "support must satisfy 0 <= a < b, got [" << a << ", " << b << "]";
    throw DomainError(os.str());
  }
}

DensityPiece normalized_power_piece(double exponent, double a, double b) {
  if (a == 0.0 && exponent <= -1.0) {
    throw DomainError("density m^e with e <= -1 is not integrable at 0");
  }
  DensityPiece piece{a, b, {{1.0, exponent}}};
  const double z = piece_mass(piece, a, b);
  piece.terms[0].coef = 1.0 / z;
  return piece;
}

double beta_t(double m, double a, double b) { return std::clamp((m - a) / (b - a), 0.0, 1.0); }

}  // namespace

TypeDistribution TypeDistribution::uniform(double a, double b) {
  require_support(a, b);
  TypeDistribution d;
  d.family_ = Family::Uniform;
  d.a_ = a;
  d.b_ = b;
  d.pieces_ = {DensityPiece{a, b, {{1.0 / (b - a), 0.0}}}};
  d.index_pieces();
  return d;
}

TypeDistribution TypeDistribution::power(double exponent, double a, double b) {
  require_support(a, b);
  if (!std::isfinite(exponent)) throw DomainError("power exponent must be finite");
  TypeDistribution d;
  d.family_ = Family::Power;
  d.a_ = a;
  d.b_ = b;
  d.params_ = {exponent};
  d.pieces_ = {normalized_power_piece(exponent, a, b)};
  d.index_pieces();
  return d;
}

TypeDistribution TypeDistribution::beta(double alpha, double beta, double a, double b) {
  require_support(a, b);
  if (!(alpha > 0.0) || !(beta > 0.0)) throw DomainError("beta parameters must be positive");
  TypeDistribution d;
  d.family_ = Family::Beta;
  d.a_ = a;
  d.b_ = b;
  d.params_ = {alpha, beta};
  return d;
}

TypeDistribution TypeDistribution::pareto_truncated(double shape, double a, double b) {
  require_support(a, b);
  if (!(shape > 0.0)) throw DomainError("pareto shape must be positive");
  if (!(a > 0.0)) throw DomainError("pareto scale (support lower bound) must be positive");
  TypeDistribution d;
  d.family_ = Family::ParetoTruncated;
  d.a_ = a;
  d.b_ = b;
  d.params_ = {shape};
  d.pieces_ = {normalized_power_piece(-shape - 1.0, a, b)};
  d.index_pieces();
  return d;
}

TypeDistribution TypeDistribution::piecewise(std::vector<DensityPiece> pieces) {
  if (pieces.empty()) throw DomainError("piecewise density needs at least one piece");
  std::sort(pieces.begin(), pieces.end(),
            [](const DensityPiece& l, const DensityPiece& r) { return l.lo < r.lo; });
  require_support(pieces.front().lo, pieces.back().hi);
  double total = 0.0;
  for (std::size_t j = 0; j < pieces.size(); ++j) {
    const auto& p = pieces[j];
    if (!(p.lo < p.hi)) throw DomainError("piece " + std::to_string(j) + " has an empty interval");
    if (p.terms.empty()) throw DomainError("piece " + std::to_string(j) + " has no terms");
    if (j > 0 && std::abs(pieces[j - 1].hi - p.lo) > 1e-12 * std::max(1.0, std::abs(p.lo))) {
      throw DomainError("pieces must be contiguous; gap or overlap before piece " + std::to_string(j));
    }
    for (const auto& t : p.terms) {
      if (!std::isfinite(t.coef) || !std::isfinite(t.exponent)) {
        throw DomainError("piece " + std::to_string(j) + " has a non-finite term");
      }
      if (p.lo <= 0.0 && !nonnegative_integer(t.exponent)) {
        throw DomainError("piece " + std::to_string(j) +
                          " reaches m=0 with a negative or fractional exponent");
      }
    }
    // Strict positivity on the open piece, sampled.
    constexpr int kChecks = 64;
    for (int i = 0; i <= kChecks; ++i) {
      const double m = p.lo + (p.hi - p.lo) * (i + 0.5) / (kChecks + 1);
      if (!(piece_density(p, m) > 0.0)) {
        std::ostringstream os;
        os << "density is not strictly positive at m=" << m << " (piece " << j << ")";
        throw DomainError(os.str());
      }
    }
    total += piece_mass(p, p.lo, p.hi);
  }
  if (!(std::abs(total - 1.0) <= 1e-6)) {
    std::ostringstream os;
    os.precision(12);
    os << "piecewise density integrates to " << total << ", expected 1";
    throw DomainError(os.str());
  }
  for (std::size_t j = 1; j < pieces.size(); ++j) pieces[j].lo = pieces[j - 1].hi;
  for (auto& p : pieces)
    for (auto& t : p.terms) t.coef /= total;

  TypeDistribution d;
  d.family_ = Family::PiecewisePolyDensity;
  d.a_ = pieces.front().lo;
  d.b_ = pieces.back().hi;
  d.pieces_ = std::move(pieces);
  d.index_pieces();
  return d;
}

void TypeDistribution::index_pieces() {
  cdf_at_start_.assign(pieces_.size(), 0.0);
  f2_at_start_.assign(pieces_.size(), 0.0);
  for (std::size_t j = 1; j < pieces_.size(); ++j) {
    const auto& prev = pieces_[j - 1];
    const double width = prev.hi - prev.lo;
    double f2_inc = cdf_at_start_[j - 1] * width;
    for (const auto& t : prev.terms) {
      f2_inc += t.coef * (power_p2(prev.hi, t.exponent) - power_p2(prev.lo, t.exponent) -
                          power_p1(prev.lo, t.exponent) * width);
    }
    cdf_at_start_[j] = cdf_at_start_[j - 1] + piece_mass(prev, prev.lo, prev.hi);
    f2_at_start_[j] = f2_at_start_[j - 1] + f2_inc;
  }
}

std::size_t TypeDistribution::piece_at(double m) const {
  auto it = std::upper_bound(pieces_.begin(), pieces_.end(), m,
                             [](double v, const DensityPiece& p) { return v < p.lo; });
  if (it == pieces_.begin()) return 0;
  return static_cast<std::size_t>(std::distance(pieces_.begin(), it)) - 1;
}

std::string TypeDistribution::describe() const {
  std::ostringstream os;
  os << to_string(family_);
  switch (family_) {
    case Family::Power: os << "(exponent=" << params_[0] << ")"; break;
    case Family::Beta: os << "(alpha=" << params_[0] << ", beta=" << params_[1] << ")"; break;
    case Family::ParetoTruncated: os << "(shape=" << params_[0] << ")"; break;
    case Family::PiecewisePolyDensity: os << "(" << pieces_.size() << " pieces)"; break;
    case Family::Uniform: break;
  }
  os << "[" << a_ << ", " << b_ << "]";
  return os.str();
}

double TypeDistribution::cdf(double m) const {
  if (!(m > a_)) return 0.0;
  if (m >= b_) return 1.0;
  if (family_ == Family::Beta) {
    return boost::math::ibeta(params_[0], params_[1], beta_t(m, a_, b_));
  }
  const std::size_t j = piece_at(m);
  const double v = cdf_at_start_[j] + piece_mass(pieces_[j], pieces_[j].lo, m);
  return std::clamp(v, 0.0, 1.0);
}

double TypeDistribution::pdf(double m) const {
  if (!(m >= a_ && m <= b_)) {
    std::ostringstream os;
    os << "pdf evaluated at m=" << m << " outside the support [" << a_ << ", " << b_ << "]";
    throw DomainError(os.str());
  }
  return density_or_zero(m);
}

double TypeDistribution::density_or_zero(double m) const {
  if (!(m >= a_ && m <= b_)) return 0.0;
  if (family_ == Family::Beta) {
    const double alpha = params_[0];
    const double beta = params_[1];
    const double t = beta_t(m, a_, b_);
    if ((t == 0.0 && alpha < 1.0) || (t == 1.0 && beta < 1.0)) {
      return std::numeric_limits<double>::infinity();
    }
    return boost::math::ibeta_derivative(alpha, beta, t) / (b_ - a_);
  }
  return piece_density(pieces_[piece_at(m)], m);
}

double TypeDistribution::antiderivative_cdf(double m) const {
  if (!(m >= a_ && m <= b_)) {
    std::ostringstream os;
    os << "antiderivative evaluated at m=" << m << " outside the support [" << a_ << ", " << b_
       << "]";
    throw DomainError(os.str());
  }
  return antiderivative_cdf_extended(m);
}

double TypeDistribution::antiderivative_cdf_extended(double m) const {
  if (!(m > a_)) return 0.0;
  if (m > b_) return antiderivative_cdf_extended(b_) + (m - b_);
  if (family_ == Family::Beta) {
    const double alpha = params_[0];
    const double beta = params_[1];
    const double t = beta_t(m, a_, b_);
    const double v = t * boost::math::ibeta(alpha, beta, t) -
                     alpha / (alpha + beta) * boost::math::ibeta(alpha + 1.0, beta, t);
    return (b_ - a_) * v;
  }
  const std::size_t j = piece_at(m);
  const auto& p = pieces_[j];
  const double dx = m - p.lo;
  double v = f2_at_start_[j] + cdf_at_start_[j] * dx;
  for (const auto& t : p.terms) {
    v += t.coef * (power_p2(m, t.exponent) - power_p2(p.lo, t.exponent) -
                   power_p1(p.lo, t.exponent) * dx);
  }
  return v;
}

double TypeDistribution::density_elasticity(double m) const {
  if (!(m > a_ && m < b_)) {
    std::ostringstream os;
    os << "elasticity requires m in the open support (" << a_ << ", " << b_ << "), got " << m;
    throw DomainError(os.str());
  }
  if (family_ == Family::Beta) {
    const double t = (m - a_) / (b_ - a_);
    return ((params_[0] - 1.0) / t - (params_[1] - 1.0) / (1.0 - t)) * m / (b_ - a_);
  }
  return piece_elasticity(pieces_[piece_at(m)], m);
}

std::optional<double> TypeDistribution::constant_elasticity() const {
  switch (family_) {
    case Family::Uniform: return 0.0;
    case Family::Power: return params_[0];
    case Family::ParetoTruncated: return -params_[0] - 1.0;
    case Family::PiecewisePolyDensity:
      if (pieces_.size() == 1 && pieces_[0].terms.size() == 1) return pieces_[0].terms[0].exponent;
      return std::nullopt;
    case Family::Beta: return std::nullopt;
  }
  return std::nullopt;
}

std::optional<double> TypeDistribution::closed_form_quantile(double u) const {
  if (!(u >= 0.0 && u <= 1.0)) throw DomainError("quantile level must lie in [0, 1]");
  if (family_ == Family::Uniform) return a_ + u * (b_ - a_);
  if (family_ != Family::Power && family_ != Family::ParetoTruncated) return std::nullopt;
  const PowerTerm t = pieces_[0].terms[0];
  const double e = t.exponent;
  const double level = power_p1(a_, e) + u / t.coef;
  double m = (e == -1.0) ? std::exp(level) : std::pow((e + 1.0) * level, 1.0 / (e + 1.0));
  return std::clamp(m, a_, b_);
}

namespace {

struct Samples {
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
  bool jump_up = false;
  bool jump_down = false;

  void add(double e) {
    if (std::isnan(e)) return;
    min = std::min(min, e);
    max = std::max(max, e);
  }
};

Samples sample_elasticity(const TypeDistribution& dist, double lo, double hi,
                          std::size_t grid_points) {
  if (!(lo < hi) || lo < dist.lower() - 1e-12 || hi > dist.upper() + 1e-12) {
    std::ostringstream os;
    os << "classification interval [" << lo << ", " << hi << "] must be a nondegenerate subset of ["
       << dist.lower() << ", " << dist.upper() << "]";
    throw DomainError(os.str());
  }
  lo = std::max(lo, dist.lower());
  hi = std::min(hi, dist.upper());
  Samples s;
  if (auto e = dist.constant_elasticity()) {
    s.add(*e);
    return s;
  }
  const std::size_t n = std::max<std::size_t>(grid_points, 2);
  if (dist.family() == Family::PiecewisePolyDensity) {
    const auto& pieces = dist.pieces();
    const double width = hi - lo;
    for (std::size_t j = 0; j < pieces.size(); ++j) {
      const auto& p = pieces[j];
      const double from = std::max(lo, p.lo);
      const double to = std::min(hi, p.hi);
      if (!(from < to)) continue;
      // One-sided evaluation with this piece's own formula, endpoints included.
      const double nudge = 1e-12 * (to - from);
      const std::size_t count =
          std::max<std::size_t>(16, static_cast<std::size_t>(n * (to - from) / width));
      for (std::size_t i = 0; i <= count; ++i) {
        double m = from + (to - from) * static_cast<double>(i) / static_cast<double>(count);
        if (m <= 0.0) m = from + nudge;
        s.add(piece_elasticity(p, m));
      }
      if (j > 0 && p.lo > lo && p.lo < hi) {
        const double left = piece_density(pieces[j - 1], p.lo);
        const double right = piece_density(p, p.lo);
        const double tol = kTieTolerance * std::max(std::abs(left), std::abs(right));
        if (right - left > tol) s.jump_up = true;
        if (left - right > tol) s.jump_down = true;
      }
    }
    return s;
  }
  const double w = hi - lo;
  for (std::size_t i = 0; i < n; ++i) {
    s.add(dist.density_elasticity(lo + w * (static_cast<double>(i) + 0.5) / static_cast<double>(n)));
  }
  for (double delta : {1e-9, 1e-6, 1e-3}) {
    s.add(dist.density_elasticity(lo + delta * w));
    s.add(dist.density_elasticity(hi - delta * w));
  }
  return s;
}

}  // namespace

std::pair<double, double> elasticity_range(const TypeDistribution& dist, double lo, double hi,
                                           std::size_t grid_points) {
  const Samples s = sample_elasticity(dist, lo, hi, grid_points);
  return {s.min, s.max};
}

Curvature classify_Fm_convexity(const TypeDistribution& dist, double lo, double hi,
                                std::size_t grid_points) {
  const Samples s = sample_elasticity(dist, lo, hi, grid_points);
  constexpr double kThreshold = -2.0;
  if (s.min >= kThreshold - kTieTolerance && !s.jump_down) {
    return s.min > kThreshold + kTieTolerance ? Curvature::StrictlyConvex : Curvature::Convex;
  }
  if (s.max <= kThreshold + kTieTolerance && !s.jump_up) return Curvature::Concave;
  return Curvature::Neither;
}

}  // namespace qsel
