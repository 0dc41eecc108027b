#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qsel/dist.hpp"

namespace qsel {

struct PriceQuality {
  double price = 0.0;
  double quality = 0.0;

  auto operator<=>(const PriceQuality&) const = default;
};

/// Finite list of price-quality pairs, kept sorted by (price, quality).
class Menu {
 public:
  Menu() = default;
  explicit Menu(std::vector<PriceQuality> pairs);

  const std::vector<PriceQuality>& pairs() const noexcept { return pairs_; }
  std::size_t size() const noexcept { return pairs_.size(); }
  bool empty() const noexcept { return pairs_.empty(); }
  const PriceQuality& operator[](std::size_t i) const { return pairs_[i]; }
  /// Highest-price pair.
  const PriceQuality& top() const { return pairs_.back(); }
  std::vector<double> prices() const;
  std::vector<double> qualities() const;
  bool contains(const PriceQuality& pair) const;

  bool operator==(const Menu&) const = default;

 private:
  std::vector<PriceQuality> pairs_;
};

/// Buyer choice over a menu. cutoffs has size()+1 entries: pair i is chosen
/// by types in [cutoffs[i], cutoffs[i+1]), cutoffs.back() == b. Pairs off the
/// upper envelope get an empty interval.
struct DemandSplit {
  std::vector<double> cutoffs;
  std::vector<double> demands;

  double total() const;
  /// Number of pairs with positive demand.
  std::size_t separating_count() const;
};

struct ConstraintSet {
  std::vector<Menu> menus;
};

/// Demand of every pair: each type m takes the pair maximizing m q - p when
/// that utility is >= 0. Computed from the upper envelope of the lines
/// m q_i - p_i and the zero line, clipped to the support.
DemandSplit demand_split(const Menu& menu, const TypeDistribution& dist);

/// pi(C) = sum_i p_i D_i(C).
double menu_revenue(const Menu& menu, const TypeDistribution& dist);

/// p_k - sum_i (p_i - p_{i-1}) F(m_i) with m_i = (p_i - p_{i-1}) / (q_i - q_{i-1}).
/// Equals menu_revenue for menus whose pairs all have positive demand.
/// Requires strictly increasing qualities.
double revenue_identity(const Menu& menu, const TypeDistribution& dist);

/// Raw cutoffs m_i(C) = (p_i - p_{i-1}) / (q_i - q_{i-1}), p_0 = q_0 = 0.
std::vector<double> raw_cutoffs(const Menu& menu);

/// Leftmost maximizer of p (1 - F(p/q)) over p >= 0.
double monopoly_price(double quality, const TypeDistribution& dist, std::size_t grid_points = 20000);

/// Repeatedly drops duplicate and zero-demand pairs. Revenue is unchanged.
/// An empty result means no pair attracted any buyer.
Menu prune_to_Cp(const Menu& menu, const TypeDistribution& dist);

struct RegularityReport {
  bool condition_i = false;
  std::optional<Menu> witness_i;
  std::string reason_i;
  bool condition_ii = false;
  std::optional<Menu> witness_ii;
  std::string reason_ii;
  bool regular() const { return condition_i && condition_ii; }
};

/// Both regularity conditions over the pruned menus of `cs`.
RegularityReport check_regularity(const ConstraintSet& cs, const TypeDistribution& dist);

struct OptimalMenu {
  std::size_t index = 0;
  Menu menu;
  double revenue = 0.0;
  /// Every menu index whose revenue ties the winner within 1e-12.
  std::vector<std::size_t> co_optimal;
};

/// Exhaustive argmax of revenue. Ties go to the menu with fewer
/// positive-demand pairs, then to the lexicographically smaller price vector.
OptimalMenu optimal_menu(const ConstraintSet& cs, const TypeDistribution& dist);

/// Curvature of F(m) m on [lo, hi] where the interval may extend past the
/// support (F is 0 below a and 1 above b there).
Curvature classify_cutoff_interval(const TypeDistribution& dist, double lo, double hi);

enum class SubmenuVerdict { SubBetterByConvexity, MenuBetterByConcavity, Indeterminate };
std::string to_string(SubmenuVerdict verdict);

struct SubmenuComparison {
  SubmenuVerdict verdict = SubmenuVerdict::Indeterminate;
  double menu_revenue = 0.0;
  double sub_revenue = 0.0;
  /// Cutoff interval of every merged run of consecutive dropped pairs.
  std::vector<std::pair<double, double>> intervals;
  std::vector<Curvature> curvatures;
  /// The submenu lacks the menu's top-price pair, so the local rule does not apply.
  bool sub_missing_top_pair = false;
};

/// Local comparison of a menu with one of its submenus: convexity of
/// F(m) m on every merged-run interval favours the submenu, concavity
/// favours the full menu.
SubmenuComparison compare_submenu(const Menu& menu, const Menu& sub, const TypeDistribution& dist);

struct CounterexampleOptions {
  /// Cutoff lattice step as a fraction of b - a.
  double resolution = 0.01;
  /// Number of interior quality ratios q_1/q_2 tried per cutoff pair.
  std::size_t quality_ratios = 19;
};

struct Counterexample {
  Menu menu;
  double revenue = 0.0;
  double low_pair_revenue = 0.0;
  double high_pair_revenue = 0.0;
  double margin() const;
};

/// Searches for a two-pair menu whose revenue beats both of its one-pair
/// submenus. Throws DomainError when F(m) m is convex on the support.
std::optional<Counterexample> find_nonconvex_counterexample(const TypeDistribution& dist,
                                                            CounterexampleOptions options = {});

/// True iff every other pair in `one_separating` has a strictly lower price
/// or a strictly lower quality than `candidate`.
bool is_maximal(const PriceQuality& candidate, std::span<const PriceQuality> one_separating);

}  // namespace qsel
