#include "qsel/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>

#include "qsel/errors.hpp"
#include "qsel/parallel.hpp"

namespace qsel {

void OracleConfig::validate() const {
  std::vector<std::string> problems;
  if (samples < 10'000) problems.push_back("oracle.samples must be >= 10000");
  if (!(grid_resolution > 0.0) || !std::isfinite(grid_resolution)) {
    problems.push_back("oracle.grid_resolution must be > 0");
  }
  if (!problems.empty()) throw ValidationError(std::move(problems));
}

namespace {

constexpr std::size_t kChunk = 1 << 16;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double quantile(const TypeDistribution& dist, double u) {
  if (auto q = dist.closed_form_quantile(u)) return *q;
  double lo = dist.lower(), hi = dist.upper();
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (dist.cdf(mid) < u ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Index of the chosen pair, or -1 for the outside option.
long choose(const std::vector<PriceQuality>& pairs, double m) {
  long best = -1;
  double best_u = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double u = m * pairs[i].quality - pairs[i].price;
    if (u >= best_u) {
      best_u = u;
      best = static_cast<long>(i);
    }
  }
  return best;
}

// Exact demand by splitting [a,b] at every pairwise indifference point and
// asking a representative buyer in each piece.
std::vector<double> breakpoint_demand(const std::vector<PriceQuality>& pairs, const TypeDistribution& dist) {
  const double a = dist.lower(), b = dist.upper();
  std::vector<double> cuts{a, b};
  auto add = [&](double m) {
    if (m > a && m < b) cuts.push_back(m);
  };
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].quality > 0.0) add(pairs[i].price / pairs[i].quality);
    for (std::size_t j = i + 1; j < pairs.size(); ++j) {
      const double dq = pairs[j].quality - pairs[i].quality;
      if (dq != 0.0) add((pairs[j].price - pairs[i].price) / dq);
    }
  }
  std::sort(cuts.begin(), cuts.end());
  std::vector<double> demand(pairs.size(), 0.0);
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    if (!(cuts[k + 1] > cuts[k])) continue;
    const long who = choose(pairs, 0.5 * (cuts[k] + cuts[k + 1]));
    if (who >= 0) demand[static_cast<std::size_t>(who)] += dist.cdf(cuts[k + 1]) - dist.cdf(cuts[k]);
  }
  return demand;
}

struct GroupData {
  double quality = 0.0;
  double weight = 0.0;  // supply = weight * p^(1/alpha)
};

GroupData group_data(const IndexSet& blocks, const QuantityMarket& market) {
  const auto& pop = market.pop();
  const auto& w = market.quantity_weights();
  double num = 0.0, den = 0.0;
  for (std::size_t blk : blocks) {
    for (std::size_t atom : pop.blocks()[blk]) {
      const double wm = w[atom] * pop.atoms()[atom].mass;
      num += pop.atoms()[atom].quality * wm;
      den += wm;
    }
  }
  return {den > 0.0 ? num / den : 0.0, den};
}

// Smallest root of an increasing function on [lo, hi] located by a lattice
// scan and refined by bisection. Returns NaN when there is no sign change.
double lattice_root(const std::function<double(double)>& g, double lo, double hi, double step) {
  double prev_x = lo, prev_g = g(lo);
  if (prev_g >= 0.0) return std::numeric_limits<double>::quiet_NaN();
  for (double x = lo + step;; x += step) {
    x = std::min(x, hi);
    const double gx = g(x);
    if (gx >= 0.0) {
      double l = prev_x, h = x;
      for (int it = 0; it < 200 && h - l > 1e-16 * std::max(1.0, h); ++it) {
        const double mid = 0.5 * (l + h);
        (g(mid) < 0.0 ? l : h) = mid;
      }
      return 0.5 * (l + h);
    }
    if (x >= hi) break;
    prev_x = x;
    prev_g = gx;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

[[noreturn]] void no_grid_equilibrium() { throw DomainError("no interior equilibrium on grid"); }

}  // namespace

McDemand mc_demand(const Menu& menu, const TypeDistribution& dist, const OracleConfig& cfg) {
  cfg.validate();
  for (const auto& pq : menu.pairs()) {
    if (!(pq.price > 0.0 && pq.quality > 0.0)) throw DomainError("menu pairs must have positive price and quality");
  }
  const auto& pairs = menu.pairs();
  const std::size_t k = pairs.size();
  const std::size_t chunks = (cfg.samples + kChunk - 1) / kChunk;
  std::vector<std::vector<std::size_t>> counts(chunks, std::vector<std::size_t>(k, 0));

  parallel_for_index(chunks, cfg.jobs, [&](std::size_t c) {
    std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(c)));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const std::size_t n = std::min(kChunk, cfg.samples - c * kChunk);
    for (std::size_t s = 0; s < n; ++s) {
      const long who = choose(pairs, quantile(dist, unif(rng)));
      if (who >= 0) ++counts[c][static_cast<std::size_t>(who)];
    }
  });

  McDemand out;
  const double n = static_cast<double>(cfg.samples);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t total = 0;
    for (const auto& chunk : counts) total += chunk[i];
    const double p = static_cast<double>(total) / n;
    out.estimates.push_back(p);
    out.std_errors.push_back(std::sqrt(std::max(p * (1.0 - p), 0.0) / n));
  }
  return out;
}

std::vector<double> grid_equilibrium(const InformationStructure& structure, const QuantityMarket& market,
                                     const OracleConfig& cfg) {
  if (!(cfg.grid_resolution > 0.0)) throw ValidationError({"oracle.grid_resolution must be > 0"});
  structure.validate(market.pop().block_count());
  const std::size_t n = structure.group_count();
  if (n == 0 || n > 2) throw DomainError("grid equilibrium handles one or two groups");

  std::vector<GroupData> g;
  for (const auto& grp : structure.groups) g.push_back(group_data(grp, market));
  std::sort(g.begin(), g.end(), [](const GroupData& l, const GroupData& r) { return l.quality < r.quality; });
  for (const auto& gd : g) {
    if (!(gd.quality > 0.0 && gd.weight > 0.0)) no_grid_equilibrium();
  }

  const auto& dist = market.dist();
  const double inv_alpha = 1.0 / market.alpha();
  const double b = dist.upper();
  auto sup = [&](const GroupData& gd, double p) { return gd.weight * std::pow(p, inv_alpha); };

  if (n == 1) {
    const double hi = g[0].quality * b;
    auto excess = [&](double p) { return sup(g[0], p) - (1.0 - dist.cdf(p / g[0].quality)); };
    const double p = lattice_root(excess, 0.0, hi, cfg.grid_resolution * hi);
    if (!std::isfinite(p) || std::abs(excess(p)) > 1e-8) no_grid_equilibrium();
    return {p};
  }

  const double q1 = g[0].quality, q2 = g[1].quality;
  if (!(q2 > q1)) no_grid_equilibrium();
  auto demand1 = [&](double p1, double p2) {
    return dist.cdf((p2 - p1) / (q2 - q1)) - dist.cdf(p1 / q1);
  };
  // Low-group price clearing its market for a given high price.
  auto inner = [&](double p2) {
    const double hi = p2 * q1 / q2;
    double l = 0.0, h = hi;
    for (int it = 0; it < 200 && h - l > 1e-17; ++it) {
      const double mid = 0.5 * (l + h);
      (sup(g[0], mid) - demand1(mid, p2) < 0.0 ? l : h) = mid;
    }
    return 0.5 * (l + h);
  };
  auto excess2 = [&](double p2) {
    const double p1 = inner(p2);
    return sup(g[1], p2) - (1.0 - dist.cdf((p2 - p1) / (q2 - q1)));
  };
  const double hi = q2 * b;
  const double p2 = lattice_root(excess2, 0.0, hi, cfg.grid_resolution * hi);
  if (!std::isfinite(p2)) no_grid_equilibrium();
  const double p1 = inner(p2);
  const double r1 = sup(g[0], p1) - demand1(p1, p2);
  const double r2 = excess2(p2);
  if (!(p1 > 0.0) || demand1(p1, p2) <= 0.0 || std::max(std::abs(r1), std::abs(r2)) > 1e-8) no_grid_equilibrium();
  return {p1, p2};
}

bool bertrand_deviation_check(const InformationStructure& structure, const PriceMarket& market,
                              const std::vector<double>& prices, double eps) {
  structure.validate(market.pop().block_count());
  if (prices.size() != structure.group_count()) throw DomainError("one price per group required");
  const auto& pop = market.pop();
  const auto& costs = market.costs();

  std::vector<PriceQuality> pairs;
  for (std::size_t i = 0; i < structure.group_count(); ++i) {
    const auto& grp = structure.groups[i];
    const std::size_t lead = *std::min_element(grp.begin(), grp.end());
    double num = 0.0, den = 0.0;
    for (std::size_t atom : pop.blocks()[lead]) {
      num += pop.atoms()[atom].quality * pop.atoms()[atom].mass;
      den += pop.atoms()[atom].mass;
    }
    pairs.push_back({prices[i], num / den});
  }
  for (std::size_t i = 0; i < structure.group_count(); ++i) {
    const auto& grp = structure.groups[i];
    const double p = prices[i];
    const double c_lead = costs[*std::min_element(grp.begin(), grp.end())];
    // Selling below cost loses money; exit would be better.
    if (p < c_lead) return false;
    // Own demand falls in own price, so the deepest profitable undercut
    // (just above cost) is the one to test. The lead block is the cheapest
    // member, which covers undercuts by costlier blocks too.
    if (p - eps > c_lead) {
      auto dev = pairs;
      dev[i].price = c_lead + eps;
      if (breakpoint_demand(dev, market.dist())[i] > 0.0) return false;
    }
    // Raising the price leaves the raiser with no buyers since rivals in the
    // same block keep charging p.
  }
  return true;
}

bool bertrand_deviation_check(const InformationStructure& structure, const PriceMarket& market, double eps) {
  structure.validate(market.pop().block_count());
  std::vector<double> prices;
  for (const auto& grp : structure.groups) prices.push_back(market.costs()[*std::min_element(grp.begin(), grp.end())]);
  return bertrand_deviation_check(structure, market, prices, eps);
}

}  // namespace qsel
