#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qsel/dist.hpp"
#include "qsel/population.hpp"
#include "qsel/pricedisc.hpp"

namespace qsel {

/// Platform sets one price per group; each seller of quality x supplies the
/// quantity maximizing h p - k(x) h^(alpha+1) / (alpha+1).
class QuantityMarket {
 public:
  /// `cost_scale` holds k(x) per atom. Throws ValidationError.
  QuantityMarket(TypeDistribution dist, SellerPopulation pop, std::vector<double> cost_scale,
                 double alpha);

  const TypeDistribution& dist() const noexcept { return dist_; }
  const SellerPopulation& pop() const noexcept { return pop_; }
  const std::vector<double>& cost_scale() const noexcept { return k_; }
  double alpha() const noexcept { return alpha_; }
  /// k(x)^(-1/alpha) per atom: the quantity weight of each seller.
  const std::vector<double>& quantity_weights() const noexcept { return weights_; }

 private:
  TypeDistribution dist_;
  SellerPopulation pop_;
  std::vector<double> k_;
  double alpha_;
  std::vector<double> weights_;
};

/// g(x, p) = (p / k(x))^(1/alpha).
double optimal_quantity(std::size_t atom, double price, const QuantityMarket& market);

/// Quantity-weighted mean quality of a group of blocks. Independent of price.
double expected_quality(std::span<const std::size_t> group, const QuantityMarket& market);

/// K = sum over the group's atoms of k^(-1/alpha) * mass, so supply = K p^(1/alpha).
double supply_weight(std::span<const std::size_t> group, const QuantityMarket& market);

double supply(std::span<const std::size_t> group, double price, const QuantityMarket& market);

/// Groups of a structure sorted by expected quality (ascending). Price
/// vectors passed to psi and excess_supply follow this order.
struct OrderedGroups {
  InformationStructure structure;
  std::vector<double> qualities;
  std::vector<double> weights;
};

OrderedGroups order_groups(const InformationStructure& structure, const QuantityMarket& market);

/// Per-group demand 1 - F(m_n) for the top group and F(m_{i+1}) - F(m_i)
/// otherwise, with m_i = (p_i - p_{i-1}) / (q_i - q_{i-1}).
std::vector<double> group_demands(std::span<const double> prices, std::span<const double> qualities,
                                  const TypeDistribution& dist);

/// Potential whose gradient is excess supply. Throws DomainError outside
/// the open price domain (positive increasing prices, positive demands).
double psi(std::span<const double> prices, const InformationStructure& structure,
           const QuantityMarket& market);

/// Supply minus demand per group.
std::vector<double> excess_supply(std::span<const double> prices, const InformationStructure& structure,
                                  const QuantityMarket& market);

struct EquilibriumResult {
  /// Groups in expected-quality order; the vectors below follow it.
  InformationStructure structure;
  std::vector<double> prices;
  std::vector<double> expected_qualities;
  std::vector<double> demands;
  std::vector<double> supplies;
  double clearing_residual = 0.0;
  bool implementable = false;
  std::size_t iterations = 0;
  std::string diagnostic;

  /// sum p_i min(D_i, S_i); 0 when not implementable.
  double revenue() const;
};

struct SolverOptions {
  std::size_t max_iterations = 200;
  double gradient_tolerance = 1e-10;
  /// Starting point in expected-quality order. Must lie in the price domain.
  std::optional<std::vector<double>> initial_prices;
};

/// Unique equilibrium of a structure as the minimizer of psi (damped
/// Newton, tridiagonal Hessian, backtracking that keeps iterates feasible).
/// A single group is solved by bisection on its monotone excess supply.
/// Throws NonConvergence when the iteration budget runs out away from the
/// domain boundary.
EquilibriumResult solve_equilibrium(const InformationStructure& structure, const QuantityMarket& market,
                                    const SolverOptions& options = {});

/// Price-quality pairs of the structure's equilibrium. Throws NotImplementable.
Menu induced_menu(const InformationStructure& structure, const QuantityMarket& market);

struct SupplyConditionReport {
  std::size_t high_block = 0;  // B^H, 0-based
  std::vector<double> singleton_prices;
  double high_price = 0.0;
  double high_quality = 0.0;
  double monopoly = 0.0;
  double supply_at_monopoly = 0.0;
  double demand_at_monopoly = 0.0;
  bool holds = false;
  /// For Uniform[0,1] buyers and alpha = 1: sum over B^H of x k^-1 mass,
  /// and whether that closed form (>= 1) agrees with `holds`.
  std::optional<double> closed_form_sum;
  std::optional<bool> closed_form_agrees;
};

/// Supply at least demand at the monopoly price of the block whose singleton
/// structure has the highest equilibrium price.
SupplyConditionReport check_supply_condition(const QuantityMarket& market);

struct StructureOutcome {
  InformationStructure structure;
  EquilibriumResult equilibrium;
  bool implementable = false;
  double revenue = 0.0;
};

struct SearchOptions {
  std::size_t cap = kDefaultEnumerationCap;
  std::size_t jobs = 1;
};

struct QuantitySearchReport {
  std::vector<StructureOutcome> table;  // enumeration order
  std::size_t winner = 0;
  double revenue = 0.0;
  Curvature curvature = Curvature::Neither;
  SupplyConditionReport supply;
  bool single_group_guaranteed = false;
  bool winner_is_1_separating = false;
  bool winner_block_in_Io = false;
  /// Winner's pair is maximal among all 1-separating induced pairs.
  bool winner_menu_maximal = false;

  /// Induced menus of every implementable structure.
  ConstraintSet constraint_set() const;
};

/// Brute force over every information structure. Ties go to fewer groups.
/// Throws NotImplementable when no structure is implementable.
QuantitySearchReport search_optimal_structure(const QuantityMarket& market, const SearchOptions& options = {});

}  // namespace qsel
