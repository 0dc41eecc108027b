#include "qsel/price_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>

#include "qsel/errors.hpp"
#include "qsel/parallel.hpp"

namespace qsel {

PriceMarket::PriceMarket(TypeDistribution dist, SellerPopulation pop, std::vector<double> block_costs)
    : dist_(std::move(dist)), pop_(std::move(pop)), costs_(std::move(block_costs)) {
  std::vector<std::string> problems;
  if (costs_.size() != pop_.block_count()) {
    problems.push_back("model.price.costs must have one entry per block (" + std::to_string(pop_.block_count()) +
                       "), got " + std::to_string(costs_.size()));
  }
  for (std::size_t i = 0; i < costs_.size(); ++i) {
    if (!(std::isfinite(costs_[i]) && costs_[i] > 0.0)) {
      problems.push_back("model.price.costs[" + std::to_string(i) + "] must be > 0");
    }
    if (i > 0 && !(costs_[i] > costs_[i - 1])) {
      problems.push_back("model.price.costs[" + std::to_string(i) +
                         "] must exceed the previous block's cost (costs strictly increase with block index)");
    }
  }
  if (!problems.empty()) throw ValidationError(std::move(problems));
}

IndexSet lowest_cost_blocks(const InformationStructure& structure, const PriceMarket& market) {
  structure.validate(market.pop().block_count());
  IndexSet g;
  for (const auto& group : structure.groups) g.push_back(*std::min_element(group.begin(), group.end()));
  std::sort(g.begin(), g.end());
  return g;
}

BertrandMenu bertrand_menu(const InformationStructure& structure, const PriceMarket& market) {
  structure.validate(market.pop().block_count());
  std::vector<std::size_t> order(structure.group_count());
  std::iota(order.begin(), order.end(), 0);
  auto cheapest = [&](std::size_t g) {
    return *std::min_element(structure.groups[g].begin(), structure.groups[g].end());
  };
  std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return cheapest(l) < cheapest(r); });

  BertrandMenu out;
  std::vector<PriceQuality> pairs;
  for (std::size_t g : order) {
    IndexSet group = structure.groups[g];
    std::sort(group.begin(), group.end());
    const std::size_t lead = group.front();
    const IndexSet lead_block{lead};
    const IndexSet atoms = market.pop().atoms_of_blocks(lead_block);
    pairs.push_back({market.costs()[lead], conditional_mean(market.pop(), atoms)});
    out.participating.push_back(lead);
    out.structure.groups.push_back(std::move(group));
  }
  // Costs strictly increase with block index, so this order is already by price.
  out.menu = Menu(std::move(pairs));
  return out;
}

Implementability is_implementable(const InformationStructure& structure, const PriceMarket& market) {
  const BertrandMenu bm = bertrand_menu(structure, market);
  Implementability out;
  out.demands = demand_split(bm.menu, market.dist()).demands;
  out.implementable = std::all_of(out.demands.begin(), out.demands.end(), [](double d) { return d > 0.0; });
  return out;
}

InformationStructure full_disclosure(std::size_t block_count) {
  InformationStructure s;
  for (std::size_t b = 0; b < block_count; ++b) s.groups.push_back({b});
  return s;
}

namespace {

Menu submenu(const Menu& menu, std::uint64_t mask) {
  std::vector<PriceQuality> pairs;
  for (std::size_t i = 0; i < menu.size(); ++i)
    if (mask & (std::uint64_t{1} << i)) pairs.push_back(menu[i]);
  return Menu(std::move(pairs));
}

}  // namespace

ConstraintSet constraint_set(const PriceMarket& market, std::size_t cap) {
  const std::size_t l = market.pop().block_count();
  if (l > cap) {
    throw DomainError(std::to_string(l) + " blocks exceed the enumeration cap of " + std::to_string(cap));
  }
  const InformationStructure io = full_disclosure(l);
  ConstraintSet cs;
  if (is_implementable(io, market).implementable) {
    const Menu co = bertrand_menu(io, market).menu;
    for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << l); ++mask) cs.menus.push_back(submenu(co, mask));
    return cs;
  }
  for (const auto& s : enumerate_structures(market.pop(), cap)) {
    if (!is_implementable(s, market).implementable) continue;
    Menu m = bertrand_menu(s, market).menu;
    if (std::find(cs.menus.begin(), cs.menus.end(), m) == cs.menus.end()) cs.menus.push_back(std::move(m));
  }
  return cs;
}

PriceSearchReport search_optimal_price_structure(const PriceMarket& market, const SearchOptions& options) {
  const std::vector<InformationStructure> structures = enumerate_structures(market.pop(), options.cap);
  PriceSearchReport rep;
  rep.table.resize(structures.size());
  parallel_for_index(structures.size(), options.jobs, [&](std::size_t i) {
    PriceStructureOutcome& row = rep.table[i];
    row.induced = bertrand_menu(structures[i], market);
    row.demands = demand_split(row.induced.menu, market.dist()).demands;
    row.implementable = std::all_of(row.demands.begin(), row.demands.end(), [](double d) { return d > 0.0; });
    if (row.implementable) {
      for (std::size_t j = 0; j < row.demands.size(); ++j) row.revenue += row.induced.menu[j].price * row.demands[j];
    } else {
      InformationStructure pruned;
      for (std::size_t j = 0; j < row.demands.size(); ++j)
        if (row.demands[j] > 0.0) pruned.groups.push_back(row.induced.structure.groups[j]);
      row.pruned_hint = pruned.groups.empty() ? "" : pruned.canonical().label();
    }
  });

  std::optional<std::size_t> winner;
  for (std::size_t i = 0; i < rep.table.size(); ++i) {
    const auto& row = rep.table[i];
    if (!row.implementable) continue;
    if (row.induced.menu.size() == 1) rep.best_1_separating_revenue = std::max(rep.best_1_separating_revenue, row.revenue);
    if (!winner) {
      winner = i;
      continue;
    }
    const auto& cur = rep.table[*winner];
    const double tol = 1e-12 * std::max(1.0, std::abs(cur.revenue));
    if (row.revenue > cur.revenue + tol ||
        (row.revenue >= cur.revenue - tol && row.induced.menu.size() < cur.induced.menu.size())) {
      winner = i;
    }
  }
  if (!winner) throw NotImplementable("no information structure is implementable");
  rep.winner = *winner;
  rep.revenue = rep.table[*winner].revenue;

  const auto& d = market.dist();
  rep.curvature = classify_Fm_convexity(d, d.lower(), d.upper());
  const double tol = 1e-12 * std::max(1.0, std::abs(rep.revenue));
  rep.matches_convex_prediction = is_convex(rep.curvature) && rep.best_1_separating_revenue >= rep.revenue - tol;
  const auto& win = rep.table[*winner].induced.structure;
  const std::size_t l = market.pop().block_count();
  rep.winner_is_top_block_only = win.group_count() == 1 && win.groups[0] == IndexSet{l - 1};
  rep.full_disclosure_is_winner = win == full_disclosure(l);
  return rep;
}

std::string to_string(LocalRecommendation r) {
  switch (r) {
    case LocalRecommendation::DropLowest: return "DropLowest";
    case LocalRecommendation::KeepLowest: return "KeepLowest";
    case LocalRecommendation::FullDisclosureOptimal: return "FullDisclosureOptimal";
    case LocalRecommendation::Indeterminate: return "Indeterminate";
  }
  return "?";
}

namespace {

double cutoff_between(const PriceQuality& lo, const PriceQuality& hi) {
  if (!(hi.quality != lo.quality)) throw DomainError("adjacent menu pairs have equal quality");
  return (hi.price - lo.price) / (hi.quality - lo.quality);
}

}  // namespace

LocalRuleVerdict local_drop_rule(const InformationStructure& structure, const PriceMarket& market) {
  if (structure.group_count() < 2) throw DomainError("the drop rule needs at least two groups");
  const BertrandMenu bm = bertrand_menu(structure, market);
  const Implementability imp = is_implementable(structure, market);
  if (!imp.implementable) throw DomainError(structure.canonical().label() + " is not implementable");
  const Menu& menu = bm.menu;
  LocalRuleVerdict v;
  v.interval_lo = menu[0].price / menu[0].quality;
  v.interval_hi = cutoff_between(menu[0], menu[1]);
  v.curvature = classify_cutoff_interval(market.dist(), v.interval_lo, v.interval_hi);
  if (is_convex(v.curvature)) {
    v.recommendation = LocalRecommendation::DropLowest;
  } else if (v.curvature == Curvature::Concave) {
    v.recommendation = LocalRecommendation::KeepLowest;
  }
  std::vector<PriceQuality> rest(menu.pairs().begin() + 1, menu.pairs().end());
  v.revenue_kept = menu_revenue(menu, market.dist());
  v.revenue_alternative = menu_revenue(Menu(std::move(rest)), market.dist());
  return v;
}

LocalRuleVerdict full_disclosure_rule(const PriceMarket& market) {
  const std::size_t l = market.pop().block_count();
  if (l < 2) throw DomainError("the full-disclosure rule needs at least two blocks");
  const InformationStructure io = full_disclosure(l);
  if (!is_implementable(io, market).implementable) throw DomainError("full disclosure is not implementable");
  const Menu co = bertrand_menu(io, market).menu;
  LocalRuleVerdict v;
  v.interval_lo = co[0].price / co[0].quality;
  v.interval_hi = cutoff_between(co[l - 2], co[l - 1]);
  v.curvature = classify_cutoff_interval(market.dist(), v.interval_lo, v.interval_hi);
  if (v.curvature == Curvature::Concave) v.recommendation = LocalRecommendation::FullDisclosureOptimal;
  v.revenue_kept = menu_revenue(co, market.dist());
  const std::uint64_t full = (std::uint64_t{1} << l) - 1;
  v.revenue_alternative = 0.0;
  for (std::uint64_t mask = 1; mask < full; ++mask) {
    v.revenue_alternative = std::max(v.revenue_alternative, menu_revenue(submenu(co, mask), market.dist()));
  }
  return v;
}

}  // namespace qsel
