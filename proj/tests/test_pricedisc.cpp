#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "qsel/errors.hpp"
#include "qsel/pricedisc.hpp"
#include "support.hpp"

using namespace qsel;
using qsel_test::brute_demand;
using qsel_test::brute_revenue;
using qsel_test::uniform;

namespace {

using Pairs = std::vector<std::pair<double, double>>;

Menu menu_of(const Pairs& pq) {
  std::vector<PriceQuality> v;
  for (auto [p, q] : pq) v.push_back({p, q});
  return Menu(v);
}

Pairs pairs_of(const Menu& m) {
  Pairs out;
  for (const auto& pq : m.pairs()) out.emplace_back(pq.price, pq.quality);
  return out;
}

TypeDistribution unif() { return TypeDistribution::uniform(0.0, 1.0); }
TypeDistribution concave() { return TypeDistribution::power(-3.0, 1.0, 2.0); }

// Closed form for the (8/3) m^-3 law on [1, 2].
double concave_cdf(double m) {
  if (m <= 1.0) return 0.0;
  if (m >= 2.0) return 1.0;
  return 4.0 / 3.0 * (1.0 - 1.0 / (m * m));
}

std::function<double(double)> cdf_of(const TypeDistribution& d) {
  return [d](double m) { return d.cdf(m); };
}

}  // namespace

TEST_CASE("demand split examples") {
  const auto d = unif();
  auto one = demand_split(menu_of({{0.25, 1.0}}), d);
  CHECK(one.cutoffs[0] == doctest::Approx(0.25));
  CHECK(one.demands[0] == doctest::Approx(0.75));

  auto two = demand_split(menu_of({{0.1, 0.25}, {0.5, 0.75}}), d);
  CHECK(two.cutoffs[0] == doctest::Approx(0.4));
  CHECK(two.cutoffs[1] == doctest::Approx(0.8));
  CHECK(two.demands[0] == doctest::Approx(0.4));
  CHECK(two.demands[1] == doctest::Approx(0.2));
  const auto ref = brute_demand({{0.1, 0.25}, {0.5, 0.75}}, cdf_of(d), 0.0, 1.0);
  CHECK(two.demands[0] == doctest::Approx(ref[0]).epsilon(1e-14));

  auto off = demand_split(menu_of({{0.2, 0.25}, {0.5, 0.75}}), d);
  CHECK(off.demands[0] == 0.0);
  // Pair 2 wins every type above 0.6, but types below 2/3 buy nothing.
  CHECK(off.demands[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(off.demands[1] == doctest::Approx(brute_demand({{0.2, 0.25}, {0.5, 0.75}}, cdf_of(d), 0.0, 1.0)[1]));
  CHECK(off.separating_count() == 1);

  CHECK_THROWS_AS(demand_split(menu_of({{0.0, 0.5}}), d), DomainError);
  CHECK_THROWS_AS(demand_split(menu_of({{0.1, -0.5}}), d), DomainError);
}

TEST_CASE("demand split agrees with per-type choice on arbitrary menus") {
  const std::vector<TypeDistribution> dists{unif(), concave(), TypeDistribution::beta(2.0, 5.0),
                                            TypeDistribution::power(-1.5, 1.0, 4.0)};
  for (const auto& d : dists) {
    for (int t = 0; t < 300; ++t) {
      Pairs pq;
      const int k = 1 + t % 5;
      for (int i = 0; i < k; ++i) pq.emplace_back(uniform(0.01, d.upper()), uniform(0.05, 1.0));
      const Menu m = menu_of(pq);
      const auto ds = demand_split(m, d);
      const auto ref = brute_demand(pairs_of(m), cdf_of(d), d.lower(), d.upper());
      double tot = 0.0;
      for (std::size_t i = 0; i < m.size(); ++i) {
        CHECK(ds.demands[i] == doctest::Approx(ref[i]).epsilon(1e-12));
        tot += ds.demands[i];
      }
      CHECK(ds.total() == doctest::Approx(tot));
      CHECK(ds.total() <= 1.0 + 1e-15);
      CHECK(ds.cutoffs.back() == d.upper());
    }
  }
}

TEST_CASE("revenue examples") {
  const auto d = unif();
  CHECK(menu_revenue(menu_of({{0.1, 0.25}, {0.5, 0.75}}), d) == doctest::Approx(0.14).epsilon(1e-14));
  CHECK(menu_revenue(menu_of({{0.5, 0.75}}), d) == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
  CHECK(menu_revenue(menu_of({{0.8, 0.75}, {0.6, 0.5}}), d) == 0.0);
}

TEST_CASE("revenue identity on random separating menus") {
  for (const auto& d : {unif(), TypeDistribution::uniform(0.5, 2.0), TypeDistribution::power(-1.5, 1.0, 4.0),
                        TypeDistribution::power(2.0, 0.0, 1.0)}) {
    for (int t = 0; t < 1000; ++t) {
      const Menu m = menu_of(qsel_test::random_cp_menu(1 + t % 6, d.lower(), d.upper()));
      CHECK(std::abs(menu_revenue(m, d) - revenue_identity(m, d)) < 1e-12);
    }
  }
}

TEST_CASE("raw cutoffs") {
  const auto c = raw_cutoffs(menu_of({{0.1, 0.25}, {0.5, 0.75}}));
  REQUIRE(c.size() == 2);
  CHECK(c[0] == doctest::Approx(0.4));
  CHECK(c[1] == doctest::Approx(0.8));
  CHECK_THROWS_AS(raw_cutoffs(menu_of({{0.1, 0.5}, {0.5, 0.5}})), DomainError);
}

TEST_CASE("monopoly price") {
  CHECK(monopoly_price(1.0, unif()) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(std::abs(monopoly_price(0.75, unif()) - 0.375) < 1e-9);
  CHECK_THROWS_AS(monopoly_price(0.0, unif()), DomainError);

  // Dense grid reference, step 1e-6.
  auto rev = [](double p) { return p * (1.0 - concave_cdf(p)); };
  double best_p = 1.0, best = rev(1.0);
  for (double p = 1.0; p <= 2.0; p += 1e-6) {
    if (rev(p) > best + 1e-15) {
      best = rev(p);
      best_p = p;
    }
  }
  const double pm = monopoly_price(1.0, concave());
  CHECK(std::abs(pm - best_p) < 1e-6);
  CHECK(rev(pm) >= best - 1e-12);

  // Non-convex case hits the grid path; compare with the reference helper.
  const auto b = TypeDistribution::beta(2.0, 30.0);
  const double pb = monopoly_price(0.6, b);
  const double ref = qsel_test::grid_argmax([&](double p) { return p * (1.0 - b.cdf(p / 0.6)); }, 0.0, 0.6, 1e-5);
  CHECK(std::abs(pb - ref) < 1e-6);
}

TEST_CASE("pruning to positive demand") {
  const auto d = unif();
  CHECK(prune_to_Cp(menu_of({{0.2, 0.25}, {0.5, 0.75}}), d) == menu_of({{0.5, 0.75}}));
  const Menu cp = menu_of({{0.1, 0.25}, {0.5, 0.75}});
  CHECK(prune_to_Cp(cp, d) == cp);
  CHECK(prune_to_Cp(menu_of({{0.3, 0.5}, {0.3, 0.5}}), d).size() == 1);
  CHECK(prune_to_Cp(menu_of({{5.0, 0.5}}), d).empty());
  for (int t = 0; t < 200; ++t) {
    Pairs pq;
    for (int i = 0; i < 4; ++i) pq.emplace_back(uniform(0.01, 0.9), uniform(0.05, 1.0));
    const Menu m = menu_of(pq);
    const Menu pr = prune_to_Cp(m, d);
    CHECK(std::abs(menu_revenue(m, d) - menu_revenue(pr, d)) < 1e-12);
    for (double x : demand_split(pr, d).demands) CHECK(x > 0.0);
  }
}

TEST_CASE("regularity") {
  const auto d = unif();
  ConstraintSet ok{{menu_of({{0.3, 0.75}}), menu_of({{1.0 / 14, 0.25}, {2.0 / 7, 0.75}})}};
  const auto r1 = check_regularity(ok, d);
  CHECK(r1.condition_i);
  CHECK(r1.condition_ii);
  CHECK(r1.regular());

  ConstraintSet high{{menu_of({{6.0 / 11, 0.75}})}};
  const auto r2 = check_regularity(high, d);
  CHECK_FALSE(r2.condition_ii);
  REQUIRE(r2.witness_ii.has_value());
  CHECK(*r2.witness_ii == menu_of({{6.0 / 11, 0.75}}));

  ConstraintSet single{{menu_of({{0.2, 0.6}})}};
  CHECK(check_regularity(single, d).regular());

  ConstraintSet no_single{{menu_of({{0.1, 0.25}, {0.5, 0.75}})}};
  const auto r3 = check_regularity(no_single, d);
  CHECK_FALSE(r3.condition_i);
  CHECK_FALSE(r3.reason_i.empty());
}

TEST_CASE("optimal menu") {
  const auto d = unif();
  ConstraintSet cs{{menu_of({{0.1, 0.25}}), menu_of({{0.5, 0.75}}), menu_of({{0.1, 0.25}, {0.5, 0.75}})}};
  const auto best = optimal_menu(cs, d);
  CHECK(best.menu == menu_of({{0.5, 0.75}}));
  CHECK(best.revenue == doctest::Approx(1.0 / 6.0));
  CHECK(menu_revenue(cs.menus[0], d) == doctest::Approx(0.06));

  ConstraintSet one{{menu_of({{0.3, 0.9}})}};
  CHECK(optimal_menu(one, d).index == 0);

  const auto c = concave();
  ConstraintSet ccs{{menu_of({{0.3, 0.25}}), menu_of({{1.05, 0.75}}), menu_of({{0.3, 0.25}, {1.05, 0.75}})}};
  const auto cbest = optimal_menu(ccs, c);
  CHECK(cbest.menu.size() == 2);
  CHECK(cbest.revenue == doctest::Approx(0.372222).epsilon(1e-6));
  // Closed-form F for the three submenus.
  const double full = 0.3 * (concave_cdf(1.5) - concave_cdf(1.2)) + 1.05 * (1.0 - concave_cdf(1.5));
  CHECK(std::abs(cbest.revenue - full) < 1e-12);
  CHECK(std::abs(menu_revenue(ccs.menus[1], c) - 1.05 * (1.0 - concave_cdf(1.4))) < 1e-12);
  CHECK(std::abs(menu_revenue(ccs.menus[0], c) - 0.3 * (1.0 - concave_cdf(1.2))) < 1e-12);
  CHECK(menu_revenue(ccs.menus[1], c) == doctest::Approx(0.364286).epsilon(1e-6));
  CHECK(menu_revenue(ccs.menus[0], c) == doctest::Approx(0.177778).epsilon(1e-6));

  // Ties go to the smaller menu.
  ConstraintSet tie{{menu_of({{0.5, 0.75}, {5.0, 0.8}}), menu_of({{0.5, 0.75}})}};
  CHECK(optimal_menu(tie, d).index == 1);
}

TEST_CASE("submenu comparison") {
  const auto d = unif();
  const Menu c = menu_of({{0.1, 0.25}, {0.5, 0.75}});
  const auto r = compare_submenu(c, menu_of({{0.5, 0.75}}), d);
  CHECK(r.verdict == SubmenuVerdict::SubBetterByConvexity);
  REQUIRE(r.intervals.size() == 1);
  CHECK(r.intervals[0].first == doctest::Approx(0.4));
  CHECK(r.intervals[0].second == doctest::Approx(0.8));
  CHECK(r.menu_revenue <= r.sub_revenue);

  const Menu c0 = menu_of({{0.3, 0.25}, {1.05, 0.75}});
  const auto r2 = compare_submenu(c0, menu_of({{1.05, 0.75}}), concave());
  CHECK(r2.verdict == SubmenuVerdict::MenuBetterByConcavity);
  REQUIRE(r2.intervals.size() == 1);
  CHECK(r2.intervals[0].first == doctest::Approx(1.2));
  CHECK(r2.intervals[0].second == doctest::Approx(1.5));
  CHECK(r2.menu_revenue == doctest::Approx(0.372222).epsilon(1e-6));
  CHECK(r2.sub_revenue == doctest::Approx(0.364286).epsilon(1e-6));

  const auto same = compare_submenu(c, c, d);
  CHECK(same.verdict == SubmenuVerdict::Indeterminate);
  CHECK(same.menu_revenue == same.sub_revenue);

  CHECK_THROWS_AS(compare_submenu(c, menu_of({{0.2, 0.5}}), d), DomainError);
  const auto missing = compare_submenu(c, menu_of({{0.1, 0.25}}), d);
  CHECK(missing.sub_missing_top_pair);
  CHECK(missing.verdict == SubmenuVerdict::Indeterminate);
}

TEST_CASE("counterexample search") {
  CHECK_THROWS_AS(find_nonconvex_counterexample(unif()), DomainError);
  for (const auto& d : {concave(), TypeDistribution::power(-4.0, 1.3, 3.5)}) {
    CAPTURE(d.describe());
    const auto ce = find_nonconvex_counterexample(d);
    REQUIRE(ce.has_value());
    REQUIRE(ce->menu.size() == 2);
    // Recheck with the per-type reference.
    const auto pq = pairs_of(ce->menu);
    const auto f = cdf_of(d);
    const double full = brute_revenue(pq, f, d.lower(), d.upper());
    const double lo = brute_revenue({pq[0]}, f, d.lower(), d.upper());
    const double hi = brute_revenue({pq[1]}, f, d.lower(), d.upper());
    for (double x : brute_demand(pq, f, d.lower(), d.upper())) CHECK(x > 0.0);
    CHECK(full > std::max(lo, hi) + 1e-9);
    CHECK(ce->margin() > 1e-9);
    CHECK(ce->revenue == doctest::Approx(full).epsilon(1e-12));
  }
}

TEST_CASE("counterexample exists on a coarse price-quality lattice too") {
  // Independent lattice search, step 0.05, for the concave law.
  const auto f = [](double m) { return concave_cdf(m); };
  double best_margin = -1.0;
  for (double q1 = 0.05; q1 < 1.0; q1 += 0.05)
    for (double q2 = q1 + 0.05; q2 <= 1.0 + 1e-12; q2 += 0.05)
      for (double p1 = 0.05; p1 < 2.0; p1 += 0.05)
        for (double p2 = p1 + 0.05; p2 < 2.0; p2 += 0.05) {
          const Pairs pq{{p1, q1}, {p2, q2}};
          const double full = brute_revenue(pq, f, 1.0, 2.0);
          const double one = std::max(brute_revenue({pq[0]}, f, 1.0, 2.0), brute_revenue({pq[1]}, f, 1.0, 2.0));
          best_margin = std::max(best_margin, full - one);
        }
  CHECK(best_margin > 1e-9);
}

TEST_CASE("maximality") {
  const std::vector<PriceQuality> set{{1.0 / 6, 0.25}, {0.3, 0.75}};
  CHECK(is_maximal({0.3, 0.75}, set));
  CHECK_FALSE(is_maximal({1.0 / 6, 0.25}, set));
  const std::vector<PriceQuality> set2{{0.5, 0.2}, {0.4, 0.9}};
  CHECK(is_maximal({0.5, 0.2}, set2));
  CHECK_THROWS_AS(is_maximal({0.9, 0.9}, set2), DomainError);
}

TEST_CASE("Jensen step under convex F(m)m") {
  for (const auto& d : {unif(), TypeDistribution::power(-1.5, 1.0, 4.0), TypeDistribution::power(1.0, 0.0, 2.0)}) {
    const double a = d.lower(), b = d.upper();
    for (int t = 0; t < 500; ++t) {
      // Increasing (z, d) with every increment ratio inside [a, b].
      const std::size_t k = 2 + t % 4;
      double z = 0.0, w = 0.0, rhs = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        const double dw = uniform(0.05, 1.0);
        const double dz = dw * uniform(a, b);
        rhs += dz * d.cdf(dz / dw);
        z += dz;
        w += dw;
      }
      CHECK(z * d.cdf(z / w) <= rhs + 1e-12);
    }
  }
}

TEST_CASE("convex law with a power-set constraint set picks one pair") {
  const auto d = unif();
  for (int t = 0; t < 100; ++t) {
    Pairs base;
    for (int i = 0; i < 4; ++i) base.emplace_back(uniform(0.05, 0.8), uniform(0.1, 1.0));
    ConstraintSet cs;
    for (unsigned mask = 1; mask < 16; ++mask) {
      Pairs sub;
      for (unsigned i = 0; i < 4; ++i)
        if (mask & (1u << i)) sub.push_back(base[i]);
      cs.menus.push_back(menu_of(sub));
    }
    const auto best = optimal_menu(cs, d);
    if (best.revenue > 0.0) CHECK(demand_split(best.menu, d).separating_count() == 1);
  }
}

TEST_CASE("tie rule never changes revenue") {
  const auto d = unif();
  // Pairs meeting exactly at a rational cutoff.
  const Menu m = menu_of({{0.25, 0.5}, {0.5, 1.0}});
  const double r = menu_revenue(m, d);
  const double ref = brute_revenue(pairs_of(m), cdf_of(d), 0.0, 1.0);
  CHECK(r == doctest::Approx(ref).epsilon(1e-14));
}
