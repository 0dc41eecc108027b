#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "qsel/dist.hpp"
#include "qsel/population.hpp"
#include "qsel/pricedisc.hpp"
#include "qsel/quantity_model.hpp"

namespace qsel {

/// Sellers set prices and compete a la Bertrand inside each group. Marginal
/// cost is constant on each block and strictly increasing in block index.
class PriceMarket {
 public:
  /// Throws ValidationError.
  PriceMarket(TypeDistribution dist, SellerPopulation pop, std::vector<double> block_costs);

  const TypeDistribution& dist() const noexcept { return dist_; }
  const SellerPopulation& pop() const noexcept { return pop_; }
  const std::vector<double>& costs() const noexcept { return costs_; }

 private:
  TypeDistribution dist_;
  SellerPopulation pop_;
  std::vector<double> costs_;
};

/// The lowest-index (cheapest) block of every group, ascending by cost.
IndexSet lowest_cost_blocks(const InformationStructure& structure, const PriceMarket& market);

/// Equilibrium menu of a structure: group i trades at c(G_i) with expected
/// quality E[X | G_i]; only G_i sellers participate.
struct BertrandMenu {
  /// Groups reordered to follow `menu` (ascending price).
  InformationStructure structure;
  Menu menu;
  /// participating[i] is G_i for menu pair i.
  IndexSet participating;
};

BertrandMenu bertrand_menu(const InformationStructure& structure, const PriceMarket& market);

struct Implementability {
  bool implementable = false;
  /// Demand per menu pair (ascending price).
  std::vector<double> demands;
};

Implementability is_implementable(const InformationStructure& structure, const PriceMarket& market);

/// Full disclosure: every block in its own group.
InformationStructure full_disclosure(std::size_t block_count);

/// When full disclosure is implementable, every nonempty submenu of its menu
/// C_o (ascending bitmask order). Otherwise the distinct menus of all
/// implementable structures, in enumeration order.
ConstraintSet constraint_set(const PriceMarket& market, std::size_t cap = kDefaultEnumerationCap);

struct PriceStructureOutcome {
  BertrandMenu induced;
  std::vector<double> demands;
  bool implementable = false;
  double revenue = 0.0;
  /// For non-implementable rows: the structure without its zero-demand groups.
  std::string pruned_hint;
};

struct PriceSearchReport {
  std::vector<PriceStructureOutcome> table;  // enumeration order
  std::size_t winner = 0;
  double revenue = 0.0;
  Curvature curvature = Curvature::Neither;
  double best_1_separating_revenue = 0.0;
  /// F(m)m convex on [a,b] and the winner ties the best 1-separating revenue.
  bool matches_convex_prediction = false;
  bool winner_is_top_block_only = false;
  bool full_disclosure_is_winner = false;
};

/// Brute force over every information structure; ties go to fewer groups.
PriceSearchReport search_optimal_price_structure(const PriceMarket& market, const SearchOptions& options = {});

enum class LocalRecommendation { DropLowest, KeepLowest, FullDisclosureOptimal, Indeterminate };
std::string to_string(LocalRecommendation r);

struct LocalRuleVerdict {
  double interval_lo = 0.0;
  double interval_hi = 0.0;
  Curvature curvature = Curvature::Neither;
  LocalRecommendation recommendation = LocalRecommendation::Indeterminate;
  /// Revenue with and without the lowest-price group (drop rule), or of
  /// full disclosure and the best other structure (disclosure rule).
  double revenue_kept = 0.0;
  double revenue_alternative = 0.0;
};

/// Whether dropping the cheapest group raises revenue, from the curvature of
/// F(m)m between the first two cutoffs of the structure's menu.
LocalRuleVerdict local_drop_rule(const InformationStructure& structure, const PriceMarket& market);

/// Certifies full disclosure as optimal when F(m)m is concave between the
/// first and last cutoffs of its menu.
LocalRuleVerdict full_disclosure_rule(const PriceMarket& market);

}  // namespace qsel
