#include "qsel/quantity_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "qsel/errors.hpp"
#include "qsel/parallel.hpp"

namespace qsel {

QuantityMarket::QuantityMarket(TypeDistribution dist, SellerPopulation pop, std::vector<double> cost_scale,
                               double alpha)
    : dist_(std::move(dist)), pop_(std::move(pop)), k_(std::move(cost_scale)), alpha_(alpha) {
  std::vector<std::string> problems;
  if (!(std::isfinite(alpha_) && alpha_ > 0.0)) problems.emplace_back("model.quantity.alpha must be > 0");
  if (k_.size() != pop_.atom_count()) {
    problems.push_back("model.quantity.k must have one entry per atom (" + std::to_string(pop_.atom_count()) +
                       "), got " + std::to_string(k_.size()));
  }
  for (std::size_t i = 0; i < k_.size(); ++i) {
    if (!(std::isfinite(k_[i]) && k_[i] > 0.0)) {
      problems.push_back("model.quantity.k[" + std::to_string(i) + "] must be > 0");
    }
  }
  if (!problems.empty()) throw ValidationError(std::move(problems));
  weights_.reserve(k_.size());
  for (double k : k_) weights_.push_back(std::pow(k, -1.0 / alpha_));
}

double optimal_quantity(std::size_t atom, double price, const QuantityMarket& market) {
  if (!(price > 0.0)) throw DomainError("optimal quantity needs a positive price");
  return std::pow(price / market.cost_scale().at(atom), 1.0 / market.alpha());
}

double expected_quality(std::span<const std::size_t> group, const QuantityMarket& market) {
  const IndexSet atoms = market.pop().atoms_of_blocks(group);
  return conditional_mean(market.pop(), atoms, market.quantity_weights());
}

double supply_weight(std::span<const std::size_t> group, const QuantityMarket& market) {
  double s = 0.0;
  for (std::size_t i : market.pop().atoms_of_blocks(group)) {
    s += market.quantity_weights()[i] * market.pop().atoms()[i].mass;
  }
  return s;
}

double supply(std::span<const std::size_t> group, double price, const QuantityMarket& market) {
  if (!(price > 0.0)) throw DomainError("supply needs a positive price");
  return std::pow(price, 1.0 / market.alpha()) * supply_weight(group, market);
}

OrderedGroups order_groups(const InformationStructure& structure, const QuantityMarket& market) {
  structure.validate(market.pop().block_count());
  const std::size_t n = structure.group_count();
  std::vector<double> q(n);
  for (std::size_t i = 0; i < n; ++i) q[i] = expected_quality(structure.groups[i], market);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return q[l] < q[r]; });
  OrderedGroups out;
  for (std::size_t i : order) {
    IndexSet g = structure.groups[i];
    std::sort(g.begin(), g.end());
    out.structure.groups.push_back(g);
    out.qualities.push_back(q[i]);
    out.weights.push_back(supply_weight(g, market));
  }
  return out;
}

std::vector<double> group_demands(std::span<const double> prices, std::span<const double> qualities,
                                  const TypeDistribution& dist) {
  const std::size_t n = prices.size();
  if (qualities.size() != n) throw DomainError("one quality per price is required");
  std::vector<double> cdf_at(n + 1, 1.0);
  double prev_p = 0.0;
  double prev_q = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dq = qualities[i] - prev_q;
    if (!(dq > 0.0)) throw DomainError("qualities must be positive and strictly increasing");
    cdf_at[i] = dist.cdf((prices[i] - prev_p) / dq);
    prev_p = prices[i];
    prev_q = qualities[i];
  }
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = cdf_at[i + 1] - cdf_at[i];
  return d;
}

namespace {

// psi and its derivatives for groups already in expected-quality order.
class Potential {
 public:
  Potential(const TypeDistribution& dist, std::vector<double> q, std::vector<double> weights, double alpha)
      : dist_(dist), q_(std::move(q)), w_(std::move(weights)), alpha_(alpha) {
    dq_.resize(q_.size());
    double prev = 0.0;
    for (std::size_t i = 0; i < q_.size(); ++i) {
      dq_[i] = q_[i] - prev;
      prev = q_[i];
    }
  }

  std::size_t size() const { return q_.size(); }

  std::vector<double> cutoffs(std::span<const double> p) const {
    std::vector<double> m(p.size());
    double prev = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = (p[i] - prev) / dq_[i];
      prev = p[i];
    }
    return m;
  }

  std::vector<double> demands(std::span<const double> p) const { return group_demands(p, q_, dist_); }

  std::vector<double> supplies(std::span<const double> p) const {
    std::vector<double> s(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) s[i] = w_[i] * std::pow(p[i], 1.0 / alpha_);
    return s;
  }

  // Empty string when p is in the open domain.
  std::string domain_violation(std::span<const double> p) const {
    std::ostringstream os;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!(p[i] > 0.0) || !std::isfinite(p[i])) {
        os << "price " << i + 1 << " must be positive and finite";
        return os.str();
      }
      if (i > 0 && !(p[i] > p[i - 1])) {
        os << "prices must increase with expected quality (group " << i << " vs " << i + 1 << ")";
        return os.str();
      }
    }
    const std::vector<double> d = demands(p);
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!(d[i] > 0.0)) {
        const std::vector<double> m = cutoffs(p);
        os << "group " << i + 1 << " has zero demand (cutoff " << m[i];
        if (i + 1 < m.size()) os << " vs next cutoff " << m[i + 1];
        os << ", support [" << dist_.lower() << ", " << dist_.upper() << "])";
        return os.str();
      }
    }
    return {};
  }

  double value(std::span<const double> p) const {
    const std::vector<double> m = cutoffs(p);
    const double expo = (alpha_ + 1.0) / alpha_;
    double v = -p.back();
    for (std::size_t i = 0; i < p.size(); ++i) {
      v += std::pow(p[i], expo) * w_[i] / (1.0 + 1.0 / alpha_);
      v += dist_.antiderivative_cdf_extended(m[i]) * dq_[i];
    }
    return v;
  }

  std::vector<double> gradient(std::span<const double> p) const {
    std::vector<double> s = supplies(p);
    const std::vector<double> d = demands(p);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] -= d[i];
    return s;
  }

  // Symmetric tridiagonal Hessian: diag[i], off[i] couples i and i+1.
  void hessian(std::span<const double> p, std::vector<double>& diag, std::vector<double>& off) const {
    const std::size_t n = p.size();
    const std::vector<double> m = cutoffs(p);
    diag.assign(n, 0.0);
    off.assign(n > 0 ? n - 1 : 0, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      diag[i] = w_[i] / alpha_ * std::pow(p[i], 1.0 / alpha_ - 1.0);
      const double own = dist_.density_or_zero(m[i]) / dq_[i];
      diag[i] += own;
      if (i > 0) {
        diag[i - 1] += own;
        off[i - 1] = -own;
      }
    }
  }

 private:
  const TypeDistribution& dist_;
  std::vector<double> q_;
  std::vector<double> w_;
  double alpha_;
  std::vector<double> dq_;
};

// Thomas algorithm for a symmetric tridiagonal system.
std::vector<double> solve_tridiagonal(std::vector<double> diag, const std::vector<double>& off,
                                      std::vector<double> rhs) {
  const std::size_t n = diag.size();
  for (std::size_t i = 1; i < n; ++i) {
    const double factor = off[i - 1] / diag[i - 1];
    diag[i] -= factor * off[i - 1];
    rhs[i] -= factor * rhs[i - 1];
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    x[i] = rhs[i];
    if (i + 1 < n) x[i] -= off[i] * x[i + 1];
    x[i] /= diag[i];
  }
  return x;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

Potential potential_for(const OrderedGroups& og, const QuantityMarket& market) {
  return Potential(market.dist(), og.qualities, og.weights, market.alpha());
}

void require_distinct_qualities(const OrderedGroups& og) {
  double prev = 0.0;
  for (std::size_t i = 0; i < og.qualities.size(); ++i) {
    if (!(og.qualities[i] > prev)) {
      throw DomainError(i == 0 ? "lowest group has zero expected quality"
                               : "groups " + std::to_string(i) + " and " + std::to_string(i + 1) +
                                     " (by quality) have equal expected quality");
    }
    prev = og.qualities[i];
  }
}

std::vector<double> checked_prices(std::span<const double> prices, const OrderedGroups& og,
                                   const Potential& pot) {
  if (prices.size() != og.qualities.size()) {
    throw DomainError("expected " + std::to_string(og.qualities.size()) + " prices, got " +
                      std::to_string(prices.size()));
  }
  require_distinct_qualities(og);
  const std::string why = pot.domain_violation(prices);
  if (!why.empty()) throw DomainError("prices outside the equilibrium domain: " + why);
  return {prices.begin(), prices.end()};
}

}  // namespace

double psi(std::span<const double> prices, const InformationStructure& structure, const QuantityMarket& market) {
  const OrderedGroups og = order_groups(structure, market);
  const Potential pot = potential_for(og, market);
  return pot.value(checked_prices(prices, og, pot));
}

std::vector<double> excess_supply(std::span<const double> prices, const InformationStructure& structure,
                                  const QuantityMarket& market) {
  const OrderedGroups og = order_groups(structure, market);
  const Potential pot = potential_for(og, market);
  return pot.gradient(checked_prices(prices, og, pot));
}

double EquilibriumResult::revenue() const {
  if (!implementable) return 0.0;
  double r = 0.0;
  for (std::size_t i = 0; i < prices.size(); ++i) r += prices[i] * std::min(demands[i], supplies[i]);
  return r;
}

namespace {

constexpr double kMinDemand = 1e-12;
constexpr double kCollapseDemand = 1e-8;

void fill_state(EquilibriumResult& r, const Potential& pot) {
  r.demands = pot.demands(r.prices);
  r.supplies = pot.supplies(r.prices);
  r.clearing_residual = 0.0;
  for (std::size_t i = 0; i < r.prices.size(); ++i) {
    r.clearing_residual = std::max(r.clearing_residual, std::abs(r.supplies[i] - r.demands[i]));
  }
}

void solve_single(EquilibriumResult& r, const Potential& pot, double quality, const TypeDistribution& dist) {
  // Excess supply K p^(1/alpha) - (1 - F(p/q)) increases from -1 to a positive value on (0, q b].
  double lo = 0.0;
  double hi = quality * dist.upper();
  std::vector<double> p(1);
  std::size_t it = 0;
  for (; it < 400 && hi - lo > 4.0 * std::numeric_limits<double>::epsilon() * hi; ++it) {
    p[0] = 0.5 * (lo + hi);
    (pot.gradient(p)[0] < 0.0 ? lo : hi) = p[0];
  }
  r.prices = {0.5 * (lo + hi)};
  r.iterations = it;
  fill_state(r, pot);
  r.implementable = r.demands[0] > kMinDemand;
  if (!r.implementable) r.diagnostic = "equilibrium demand vanishes";
}

}  // namespace

EquilibriumResult solve_equilibrium(const InformationStructure& structure, const QuantityMarket& market,
                                    const SolverOptions& options) {
  const OrderedGroups og = order_groups(structure, market);
  EquilibriumResult r;
  r.structure = og.structure;
  r.expected_qualities = og.qualities;
  try {
    require_distinct_qualities(og);
  } catch (const DomainError& e) {
    r.diagnostic = e.what();
    return r;
  }
  const Potential pot = potential_for(og, market);
  const TypeDistribution& dist = market.dist();
  const std::size_t n = og.qualities.size();
  if (n == 1) {
    solve_single(r, pot, og.qualities[0], dist);
    return r;
  }

  std::vector<double> p(n);
  if (options.initial_prices) {
    p = checked_prices(*options.initial_prices, og, pot);
  } else {
    // Evenly spaced interior cutoffs give positive demand to every group.
    const double a = dist.lower();
    const double b = dist.upper();
    double acc = 0.0;
    double prev_q = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double cutoff = a + (b - a) * static_cast<double>(i + 1) / static_cast<double>(n + 1);
      acc += cutoff * (og.qualities[i] - prev_q);
      prev_q = og.qualities[i];
      p[i] = acc;
    }
  }

  std::vector<double> diag;
  std::vector<double> off;
  std::vector<double> g = pot.gradient(p);
  double value = pot.value(p);
  bool converged = max_abs(g) < options.gradient_tolerance;
  std::size_t it = 0;
  for (; !converged && it < options.max_iterations; ++it) {
    pot.hessian(p, diag, off);
    std::vector<double> neg_g(n);
    for (std::size_t i = 0; i < n; ++i) neg_g[i] = -g[i];
    const std::vector<double> step = solve_tridiagonal(diag, off, neg_g);
    double slope = 0.0;
    for (std::size_t i = 0; i < n; ++i) slope += g[i] * step[i];

    bool accepted = false;
    std::vector<double> trial(n);
    for (double t = 1.0; t > 1e-20; t *= 0.5) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = p[i] + t * step[i];
      if (!pot.domain_violation(trial).empty()) continue;
      const double trial_value = pot.value(trial);
      const std::vector<double> trial_g = pot.gradient(trial);
      // Armijo, or a plain gradient decrease once psi differences drown in rounding.
      if (trial_value <= value + 1e-4 * t * slope || max_abs(trial_g) < max_abs(g)) {
        p = trial;
        g = trial_g;
        value = trial_value;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    converged = max_abs(g) < options.gradient_tolerance;
  }
  r.prices = p;
  r.iterations = it;
  fill_state(r, pot);
  const double min_demand = *std::min_element(r.demands.begin(), r.demands.end());

  if (converged) {
    r.implementable = min_demand > kMinDemand;
    if (!r.implementable) r.diagnostic = "equilibrium demand vanishes";
    return r;
  }
  if (min_demand < kCollapseDemand) {
    const auto group = static_cast<std::size_t>(std::min_element(r.demands.begin(), r.demands.end()) -
                                                r.demands.begin());
    std::ostringstream os;
    os << "boundary collapse: demand of group " << group + 1
       << " (by expected quality) tends to 0; no interior equilibrium";
    r.diagnostic = os.str();
    return r;
  }
  std::ostringstream os;
  os << "Newton did not converge for " << r.structure.label() << " after " << it
     << " iterations (|excess supply| = " << max_abs(g) << ")";
  throw NonConvergence(os.str());
}

Menu induced_menu(const InformationStructure& structure, const QuantityMarket& market) {
  const EquilibriumResult r = solve_equilibrium(structure, market);
  if (!r.implementable) {
    throw NotImplementable(structure.canonical().label() + " is not implementable: " + r.diagnostic);
  }
  std::vector<PriceQuality> pairs;
  for (std::size_t i = 0; i < r.prices.size(); ++i) pairs.push_back({r.prices[i], r.expected_qualities[i]});
  return Menu(std::move(pairs));
}

SupplyConditionReport check_supply_condition(const QuantityMarket& market) {
  SupplyConditionReport rep;
  const std::size_t l = market.pop().block_count();
  double best = -1.0;
  std::vector<double> qualities(l);
  for (std::size_t j = 0; j < l; ++j) {
    const InformationStructure s{{{j}}};
    const EquilibriumResult r = solve_equilibrium(s, market);
    if (!r.implementable) {
      throw NotImplementable("singleton structure {A" + std::to_string(j + 1) + "} is not solvable: " + r.diagnostic);
    }
    rep.singleton_prices.push_back(r.prices[0]);
    qualities[j] = r.expected_qualities[0];
    if (r.prices[0] > best) {
      best = r.prices[0];
      rep.high_block = j;
    }
  }
  const IndexSet group{rep.high_block};
  rep.high_price = best;
  rep.high_quality = qualities[rep.high_block];
  rep.monopoly = monopoly_price(rep.high_quality, market.dist());
  rep.supply_at_monopoly = supply(group, rep.monopoly, market);
  rep.demand_at_monopoly = 1.0 - market.dist().cdf(rep.monopoly / rep.high_quality);
  rep.holds = rep.supply_at_monopoly >= rep.demand_at_monopoly;

  const auto& d = market.dist();
  if (d.family() == Family::Uniform && d.lower() == 0.0 && d.upper() == 1.0 && market.alpha() == 1.0) {
    double sum = 0.0;
    for (std::size_t i : market.pop().atoms_of_blocks(group)) {
      sum += market.pop().atoms()[i].quality / market.cost_scale()[i] * market.pop().atoms()[i].mass;
    }
    rep.closed_form_sum = sum;
    rep.closed_form_agrees = (sum >= 1.0) == rep.holds;
  }
  return rep;
}

ConstraintSet QuantitySearchReport::constraint_set() const {
  ConstraintSet cs;
  for (const auto& row : table) {
    if (!row.implementable) continue;
    std::vector<PriceQuality> pairs;
    for (std::size_t i = 0; i < row.equilibrium.prices.size(); ++i) {
      pairs.push_back({row.equilibrium.prices[i], row.equilibrium.expected_qualities[i]});
    }
    cs.menus.emplace_back(std::move(pairs));
  }
  return cs;
}

QuantitySearchReport search_optimal_structure(const QuantityMarket& market, const SearchOptions& options) {
  const std::vector<InformationStructure> structures = enumerate_structures(market.pop(), options.cap);
  QuantitySearchReport rep;
  rep.table.resize(structures.size());
  parallel_for_index(structures.size(), options.jobs, [&](std::size_t i) {
    StructureOutcome& row = rep.table[i];
    row.structure = structures[i];
    try {
      row.equilibrium = solve_equilibrium(structures[i], market);
    } catch (const NonConvergence& e) {
      row.equilibrium.structure = structures[i];
      row.equilibrium.diagnostic = e.what();
    }
    row.implementable = row.equilibrium.implementable;
    row.revenue = row.equilibrium.revenue();
  });

  std::optional<std::size_t> winner;
  for (std::size_t i = 0; i < rep.table.size(); ++i) {
    const auto& row = rep.table[i];
    if (!row.implementable) continue;
    if (!winner) {
      winner = i;
      continue;
    }
    const auto& cur = rep.table[*winner];
    const double tol = 1e-12 * std::max(1.0, std::abs(cur.revenue));
    if (row.revenue > cur.revenue + tol ||
        (row.revenue >= cur.revenue - tol && row.structure.group_count() < cur.structure.group_count())) {
      winner = i;
    }
  }
  if (!winner) throw NotImplementable("no information structure is implementable");
  rep.winner = *winner;
  rep.revenue = rep.table[*winner].revenue;

  const auto& d = market.dist();
  rep.curvature = classify_Fm_convexity(d, d.lower(), d.upper());
  rep.supply = check_supply_condition(market);
  rep.single_group_guaranteed = rep.curvature == Curvature::StrictlyConvex && rep.supply.holds;

  const auto& win = rep.table[*winner];
  rep.winner_is_1_separating = win.structure.group_count() == 1;
  rep.winner_block_in_Io = rep.winner_is_1_separating && win.structure.groups[0].size() == 1;
  if (rep.winner_is_1_separating) {
    std::vector<PriceQuality> singles;
    for (const auto& row : rep.table) {
      if (row.implementable && row.structure.group_count() == 1) {
        singles.push_back({row.equilibrium.prices[0], row.equilibrium.expected_qualities[0]});
      }
    }
    rep.winner_menu_maximal =
        is_maximal({win.equilibrium.prices[0], win.equilibrium.expected_qualities[0]}, singles);
  }
  return rep;
}

}  // namespace qsel
