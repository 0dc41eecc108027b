#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qsel/dist.hpp"
#include "qsel/population.hpp"
#include "qsel/price_model.hpp"
#include "qsel/quantity_model.hpp"

namespace qsel::cli {

struct SpecOptions {
  std::size_t cap = kDefaultEnumerationCap;
  std::uint64_t seed = 0x5eed;
  std::size_t samples = 1'000'000;
  std::size_t jobs = 1;
  double grid_resolution = 1e-4;
};

/// A validated market file. Exactly one of `quantity` / `price` is set.
struct MarketSpec {
  std::string digest;  // FNV-1a 64 of the raw text, hex
  std::optional<TypeDistribution> dist;
  std::optional<SellerPopulation> pop;
  std::optional<QuantityMarket> quantity;
  std::optional<PriceMarket> price;
  SpecOptions options;
};

/// Throws ValidationError listing every schema problem by field path.
MarketSpec parse_spec_text(const std::string& text);
MarketSpec parse_spec_file(const std::string& path);

std::string fnv1a_hex(const std::string& bytes);

/// "p:q,p:q" -> Menu. Throws ValidationError.
Menu parse_menu(const std::string& text);

enum ExitCode : int { kOk = 0, kFailure = 1, kInvalid = 2, kNotImplementable = 3 };

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace qsel::cli
