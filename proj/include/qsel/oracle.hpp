#pragma once

// Brute-force cross-checks. Nothing here calls the analytic demand or
// equilibrium code; only distribution CDFs and raw market data are shared.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "qsel/dist.hpp"
#include "qsel/population.hpp"
#include "qsel/price_model.hpp"
#include "qsel/pricedisc.hpp"
#include "qsel/quantity_model.hpp"

namespace qsel {

struct OracleConfig {
  std::size_t samples = 1'000'000;
  std::uint64_t seed = 0x5eed;
  /// Lattice step as a fraction of the price range.
  double grid_resolution = 1e-4;
  /// Worker threads for sampling. Results do not depend on it.
  std::size_t jobs = 1;

  /// Throws ValidationError.
  void validate() const;
};

struct McDemand {
  std::vector<double> estimates;
  std::vector<double> std_errors;
};

/// Draws buyer types by inverse-CDF sampling; each buys the pair with the
/// highest nonnegative utility, ties going to the later pair.
McDemand mc_demand(const Menu& menu, const TypeDistribution& dist, const OracleConfig& cfg = {});

/// Clearing prices for at most two groups by lattice scan plus bisection,
/// in expected-quality order. Throws DomainError ("no interior equilibrium
/// on grid") when no sign change or no near-zero residual is found.
std::vector<double> grid_equilibrium(const InformationStructure& structure, const QuantityMarket& market,
                                     const OracleConfig& cfg = {});

/// True iff at every group's price no seller of its cheapest block profits
/// from undercutting by eps and no other block can sell above cost.
/// `prices` follows `structure.groups`.
bool bertrand_deviation_check(const InformationStructure& structure, const PriceMarket& market,
                              const std::vector<double>& prices, double eps = 1e-6);

/// Same, at each group's minimum block cost.
bool bertrand_deviation_check(const InformationStructure& structure, const PriceMarket& market, double eps = 1e-6);

}  // namespace qsel
