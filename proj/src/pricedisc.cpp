#include "qsel/pricedisc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "qsel/errors.hpp"

namespace qsel {

Menu::Menu(std::vector<PriceQuality> pairs) : pairs_(std::move(pairs)) {
  std::sort(pairs_.begin(), pairs_.end());
}

std::vector<double> Menu::prices() const {
  std::vector<double> out;
  out.reserve(pairs_.size());
  for (const auto& pq : pairs_) out.push_back(pq.price);
  return out;
}

std::vector<double> Menu::qualities() const {
  std::vector<double> out;
  out.reserve(pairs_.size());
  for (const auto& pq : pairs_) out.push_back(pq.quality);
  return out;
}

bool Menu::contains(const PriceQuality& pair) const {
  return std::binary_search(pairs_.begin(), pairs_.end(), pair);
}

double DemandSplit::total() const { return std::accumulate(demands.begin(), demands.end(), 0.0); }

std::size_t DemandSplit::separating_count() const {
  return static_cast<std::size_t>(
      std::count_if(demands.begin(), demands.end(), [](double d) { return d > 0.0; }));
}

std::string to_string(SubmenuVerdict verdict) {
  switch (verdict) {
    case SubmenuVerdict::SubBetterByConvexity: return "SubBetterByConvexity";
    case SubmenuVerdict::MenuBetterByConcavity: return "MenuBetterByConcavity";
    case SubmenuVerdict::Indeterminate: return "Indeterminate";
  }
  return "?";
}

namespace {

void require_positive_pairs(const Menu& menu) {
  for (std::size_t i = 0; i < menu.size(); ++i) {
    if (!(menu[i].price > 0.0) || !(menu[i].quality > 0.0)) {
      std::ostringstream os;
      os << "menu pair " << i << " (" << menu[i].price << ", " << menu[i].quality
         << ") must have positive price and quality";
      throw DomainError(os.str());
    }
  }
}

struct Line {
  double slope;      // quality
  double intercept;  // price, subtracted
  int id;            // menu index, -1 for the outside option
};

// Type at which two lines give equal utility.
double crossing(const Line& l, const Line& r) {
  return (r.intercept - l.intercept) / (r.slope - l.slope);
}

}  // namespace

DemandSplit demand_split(const Menu& menu, const TypeDistribution& dist) {
  require_positive_pairs(menu);
  const double a = dist.lower();
  const double b = dist.upper();
  const std::size_t k = menu.size();

  std::vector<Line> lines;
  lines.reserve(k + 1);
  lines.push_back({0.0, 0.0, -1});
  for (std::size_t i = 0; i < k; ++i) lines.push_back({menu[i].quality, menu[i].price, static_cast<int>(i)});
  // Ascending slope; among equal slopes the cheapest line first, and among
  // identical lines the highest index first (it wins ties).
  std::sort(lines.begin() + 1, lines.end(), [](const Line& l, const Line& r) {
    if (l.slope != r.slope) return l.slope < r.slope;
    if (l.intercept != r.intercept) return l.intercept < r.intercept;
    return l.id > r.id;
  });

  std::vector<Line> hull;
  for (const Line& line : lines) {
    if (!hull.empty() && hull.back().slope == line.slope) continue;  // dominated or duplicate
    while (hull.size() >= 2 &&
           crossing(hull[hull.size() - 2], line) <= crossing(hull[hull.size() - 2], hull.back())) {
      hull.pop_back();
    }
    hull.push_back(line);
  }

  std::vector<double> lo(k, 0.0);
  std::vector<double> hi(k, 0.0);
  std::vector<bool> positive(k, false);
  DemandSplit split;
  split.demands.assign(k, 0.0);
  for (std::size_t j = 0; j < hull.size(); ++j) {
    if (hull[j].id < 0) continue;
    const double start = j == 0 ? -std::numeric_limits<double>::infinity() : crossing(hull[j - 1], hull[j]);
    const double end =
        j + 1 == hull.size() ? std::numeric_limits<double>::infinity() : crossing(hull[j], hull[j + 1]);
    const double from = std::max(start, a);
    const double to = std::min(end, b);
    if (!(from < to)) continue;
    const auto id = static_cast<std::size_t>(hull[j].id);
    const double d = dist.cdf(to) - dist.cdf(from);
    if (d > 0.0) {
      lo[id] = from;
      hi[id] = to;
      positive[id] = true;
      split.demands[id] = d;
    }
  }

  split.cutoffs.assign(k + 1, b);
  for (std::size_t i = k; i-- > 0;) split.cutoffs[i] = positive[i] ? lo[i] : split.cutoffs[i + 1];
  return split;
}

double menu_revenue(const Menu& menu, const TypeDistribution& dist) {
  const DemandSplit split = demand_split(menu, dist);
  double r = 0.0;
  for (std::size_t i = 0; i < menu.size(); ++i) r += menu[i].price * split.demands[i];
  return r;
}

std::vector<double> raw_cutoffs(const Menu& menu) {
  std::vector<double> m;
  m.reserve(menu.size());
  double prev_p = 0.0;
  double prev_q = 0.0;
  for (const auto& pq : menu.pairs()) {
    if (!(pq.quality > prev_q)) {
      throw DomainError("cutoffs need strictly increasing qualities in price order");
    }
    m.push_back((pq.price - prev_p) / (pq.quality - prev_q));
    prev_p = pq.price;
    prev_q = pq.quality;
  }
  return m;
}

double revenue_identity(const Menu& menu, const TypeDistribution& dist) {
  require_positive_pairs(menu);
  if (menu.empty()) return 0.0;
  const std::vector<double> m = raw_cutoffs(menu);
  double value = menu.top().price;
  double prev_p = 0.0;
  for (std::size_t i = 0; i < menu.size(); ++i) {
    value -= (menu[i].price - prev_p) * dist.cdf(m[i]);
    prev_p = menu[i].price;
  }
  return value;
}

namespace {

// Revenue per unit quality at x = p/q.
double unit_revenue(const TypeDistribution& dist, double x) { return x * (1.0 - dist.cdf(x)); }

}  // namespace

double monopoly_price(double quality, const TypeDistribution& dist, std::size_t grid_points) {
  if (!(quality > 0.0)) throw DomainError("monopoly price needs a positive quality");
  const double a = dist.lower();
  const double b = dist.upper();

  if (classify_Fm_convexity(dist, a, b) == Curvature::StrictlyConvex) {
    // F(x) + x f(x) is strictly increasing; its crossing of 1 is the maximizer.
    auto foc = [&](double x) {
      const double density_term = x == 0.0 ? 0.0 : x * dist.density_or_zero(x);
      return dist.cdf(x) + density_term - 1.0;
    };
    if (foc(a) >= 0.0) return quality * a;
    double lo = a;
    double hi = b;
    for (int it = 0; it < 200 && hi - lo > 1e-16 * std::max(1.0, hi); ++it) {
      const double mid = 0.5 * (lo + hi);
      (foc(mid) < 0.0 ? lo : hi) = mid;
    }
    return quality * 0.5 * (lo + hi);
  }

  // Dense grid, then golden-section refinement around the leftmost best cell.
  const std::size_t n = std::max<std::size_t>(grid_points, 16);
  const double h = (b - a) / static_cast<double>(n);
  double best = -1.0;
  for (std::size_t i = 0; i <= n; ++i) best = std::max(best, unit_revenue(dist, a + h * i));
  const double tol = 1e-9 * std::max(1.0, best);
  std::size_t arg = 0;
  while (unit_revenue(dist, a + h * arg) < best - tol) ++arg;

  const double bracket_lo = arg == 0 ? a : a + h * (arg - 1);
  double lo = bracket_lo;
  double hi = std::min(b, a + h * (arg + 1));
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - phi * (hi - lo);
  double x2 = lo + phi * (hi - lo);
  double f1 = unit_revenue(dist, x1);
  double f2 = unit_revenue(dist, x2);
  for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, hi); ++it) {
    if (f1 >= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = unit_revenue(dist, x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = unit_revenue(dist, x2);
    }
  }
  double x = 0.5 * (lo + hi);
  // Boundary maximum: golden section only approaches the bracket end.
  if (unit_revenue(dist, bracket_lo) >= unit_revenue(dist, x)) x = bracket_lo;
  return quality * x;
}

Menu prune_to_Cp(const Menu& menu, const TypeDistribution& dist) {
  std::vector<PriceQuality> pairs = menu.pairs();
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  for (;;) {
    const Menu current(pairs);
    if (current.empty()) return current;
    const DemandSplit split = demand_split(current, dist);
    std::vector<PriceQuality> kept;
    for (std::size_t i = 0; i < current.size(); ++i)
      if (split.demands[i] > 0.0) kept.push_back(current[i]);
    if (kept.size() == current.size()) return current;
    pairs = std::move(kept);
  }
}

RegularityReport check_regularity(const ConstraintSet& cs, const TypeDistribution& dist) {
  RegularityReport report;
  std::vector<Menu> feasible;
  std::vector<PriceQuality> singles;
  for (const Menu& m : cs.menus) {
    Menu pruned = prune_to_Cp(m, dist);
    if (pruned.empty()) continue;
    if (pruned.size() == 1) singles.push_back(pruned[0]);
    feasible.push_back(std::move(pruned));
  }
  if (singles.empty()) {
    report.reason_i = "constraint set has no 1-separating menu";
    report.reason_ii = report.reason_i;
    return report;
  }

  report.condition_i = true;
  for (const Menu& m : feasible) {
    const PriceQuality top = m.top();
    const bool dominated = std::any_of(singles.begin(), singles.end(), [&](const PriceQuality& s) {
      return s.price >= top.price && s.quality >= top.quality;
    });
    if (!dominated) {
      report.condition_i = false;
      report.witness_i = m;
      std::ostringstream os;
      os << "no 1-separating menu has price >= " << top.price << " and quality >= " << top.quality;
      report.reason_i = os.str();
      break;
    }
  }

  double highest = -std::numeric_limits<double>::infinity();
  for (const auto& s : singles) highest = std::max(highest, s.price);
  report.condition_ii = true;
  for (const auto& s : singles) {
    if (s.price != highest) continue;
    const double pm = monopoly_price(s.quality, dist);
    if (s.price > pm + 1e-9) {
      report.condition_ii = false;
      report.witness_ii = Menu({s});
      std::ostringstream os;
      os << "highest 1-separating price " << s.price << " exceeds the monopoly price " << pm
         << " at quality " << s.quality;
      report.reason_ii = os.str();
      break;
    }
  }
  return report;
}

OptimalMenu optimal_menu(const ConstraintSet& cs, const TypeDistribution& dist) {
  if (cs.menus.empty()) throw DomainError("constraint set is empty");
  std::vector<double> revenue(cs.menus.size());
  std::vector<std::size_t> pairs(cs.menus.size());
  for (std::size_t i = 0; i < cs.menus.size(); ++i) {
    const DemandSplit split = demand_split(cs.menus[i], dist);
    double r = 0.0;
    for (std::size_t j = 0; j < cs.menus[i].size(); ++j) r += cs.menus[i][j].price * split.demands[j];
    revenue[i] = r;
    pairs[i] = split.separating_count();
  }
  const double best = *std::max_element(revenue.begin(), revenue.end());
  const double tol = 1e-12 * std::max(1.0, std::abs(best));
  OptimalMenu out;
  for (std::size_t i = 0; i < revenue.size(); ++i)
    if (revenue[i] >= best - tol) out.co_optimal.push_back(i);
  out.index = *std::min_element(out.co_optimal.begin(), out.co_optimal.end(), [&](std::size_t l, std::size_t r) {
    if (pairs[l] != pairs[r]) return pairs[l] < pairs[r];
    return cs.menus[l].prices() < cs.menus[r].prices();
  });
  out.menu = cs.menus[out.index];
  out.revenue = revenue[out.index];
  return out;
}

Curvature classify_cutoff_interval(const TypeDistribution& dist, double lo, double hi) {
  const double a = dist.lower();
  const double b = dist.upper();
  if (!(lo < hi)) throw DomainError("cutoff interval is degenerate");
  const double from = std::max(lo, a);
  const double to = std::min(hi, b);
  if (!(from < to)) {
    // Entirely outside the support: F(m) m is linear there (0 or m).
    return Curvature::Convex;
  }
  Curvature c = classify_Fm_convexity(dist, from, to);
  // F(m) m has a convex kink at a (slope jumps by a f(a)) and a concave kink
  // at b (slope drops by b f(b)).
  if (lo < a && c == Curvature::Concave && a * dist.density_or_zero(a) > 0.0) c = Curvature::Neither;
  if (hi > b && is_convex(c) && b * dist.density_or_zero(b) > 0.0) c = Curvature::Neither;
  return c;
}

SubmenuComparison compare_submenu(const Menu& menu, const Menu& sub, const TypeDistribution& dist) {
  for (const auto& pq : sub.pairs()) {
    if (!menu.contains(pq)) {
      std::ostringstream os;
      os << "submenu pair (" << pq.price << ", " << pq.quality << ") is not in the menu";
      throw DomainError(os.str());
    }
  }
  SubmenuComparison out;
  out.menu_revenue = menu_revenue(menu, dist);
  out.sub_revenue = menu_revenue(sub, dist);

  const Menu full = prune_to_Cp(menu, dist);
  const Menu part = prune_to_Cp(sub, dist);
  if (full.empty() || part.empty()) return out;
  if (!(part.top() == full.top())) {
    out.sub_missing_top_pair = true;
    return out;
  }
  // Positions (1-based) of the submenu's pairs inside the full menu.
  std::vector<std::size_t> mu{0};
  for (const auto& pq : part.pairs()) {
    auto it = std::find(full.pairs().begin(), full.pairs().end(), pq);
    if (it == full.pairs().end()) return out;  // kept pair had zero demand in the full menu
    mu.push_back(static_cast<std::size_t>(it - full.pairs().begin()) + 1);
  }
  const std::vector<double> m = raw_cutoffs(full);
  for (std::size_t j = 1; j < mu.size(); ++j) {
    if (mu[j] - mu[j - 1] <= 1) continue;
    const double lo = m[mu[j - 1]];  // m_{mu(j-1)+1}
    const double hi = m[mu[j] - 1];  // m_{mu(j)}
    out.intervals.emplace_back(lo, hi);
    out.curvatures.push_back(classify_cutoff_interval(dist, lo, hi));
  }
  if (out.intervals.empty()) return out;
  if (std::all_of(out.curvatures.begin(), out.curvatures.end(), is_convex)) {
    out.verdict = SubmenuVerdict::SubBetterByConvexity;
  } else if (std::all_of(out.curvatures.begin(), out.curvatures.end(),
                         [](Curvature c) { return c == Curvature::Concave; })) {
    out.verdict = SubmenuVerdict::MenuBetterByConcavity;
  }
  return out;
}

double Counterexample::margin() const { return revenue - std::max(low_pair_revenue, high_pair_revenue); }

std::optional<Counterexample> find_nonconvex_counterexample(const TypeDistribution& dist,
                                                            CounterexampleOptions options) {
  const double a = dist.lower();
  const double b = dist.upper();
  if (is_convex(classify_Fm_convexity(dist, a, b))) {
    throw DomainError("F(m)m is convex on the support; no counterexample exists");
  }
  if (!(options.resolution > 0.0 && options.resolution < 1.0) || options.quality_ratios == 0) {
    throw DomainError("counterexample search needs 0 < resolution < 1 and at least one ratio");
  }
  const auto steps = static_cast<std::size_t>(std::ceil(1.0 / options.resolution));
  const double h = (b - a) / static_cast<double>(steps);
  std::vector<double> grid_cdf(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) grid_cdf[i] = dist.cdf(a + h * i);

  // Cutoffs m1 < m2 < b; quality q1 = w q2 with q2 = 1. The menu
  // {(w m1, w), (w m1 + (1 - w) m2, 1)} sends types in [m1, m2) to the low
  // pair and [m2, b] to the high pair.
  double best_margin = 0.0;
  std::optional<Menu> best;
  for (std::size_t i = 0; i < steps; ++i) {
    const double m1 = a + h * i;
    if (!(m1 > 0.0)) continue;
    for (std::size_t j = i + 1; j < steps; ++j) {
      const double m2 = a + h * j;
      for (std::size_t r = 1; r <= options.quality_ratios; ++r) {
        const double w = static_cast<double>(r) / static_cast<double>(options.quality_ratios + 1);
        const double p1 = w * m1;
        const double p2 = p1 + (1.0 - w) * m2;
        const double full = p2 - p1 * grid_cdf[i] - (p2 - p1) * grid_cdf[j];
        const double low = p1 * (1.0 - grid_cdf[i]);
        const double high = p2 * (1.0 - dist.cdf(p2));
        const double margin = full - std::max(low, high);
        if (margin > best_margin) {
          best_margin = margin;
          best = Menu({{p1, w}, {p2, 1.0}});
        }
      }
    }
  }
  if (!best) return std::nullopt;

  // Confirm with the envelope demand model.
  const DemandSplit split = demand_split(*best, dist);
  if (split.separating_count() != 2) return std::nullopt;
  Counterexample ce;
  ce.menu = *best;
  ce.revenue = menu_revenue(*best, dist);
  ce.low_pair_revenue = menu_revenue(Menu({(*best)[0]}), dist);
  ce.high_pair_revenue = menu_revenue(Menu({(*best)[1]}), dist);
  if (!(ce.margin() > 1e-9)) return std::nullopt;
  return ce;
}

bool is_maximal(const PriceQuality& candidate, std::span<const PriceQuality> one_separating) {
  if (std::find(one_separating.begin(), one_separating.end(), candidate) == one_separating.end()) {
    throw DomainError("candidate is not in the 1-separating set");
  }
  return std::all_of(one_separating.begin(), one_separating.end(), [&](const PriceQuality& other) {
    return other == candidate || candidate.price > other.price || candidate.quality > other.quality;
  });
}

}  // namespace qsel
