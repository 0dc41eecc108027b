#pragma once

// Independent numeric references for tests. Deliberately naive: quadrature,
// dense grids and per-type utility maximization, so that agreement with the
// library's closed forms is meaningful.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <utility>
#include <vector>

namespace qsel_test {

inline double simpson(const std::function<double(double)>& f, double lo, double hi, int n = 20000) {
  if (n % 2) ++n;
  const double h = (hi - lo) / n;
  double s = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) s += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

// Demand by asking one representative buyer in every piece between
// indifference points. Ties go to the later pair.
inline std::vector<double> brute_demand(const std::vector<std::pair<double, double>>& pq,
                                        const std::function<double(double)>& cdf, double a, double b) {
  std::vector<double> cuts{a, b};
  for (std::size_t i = 0; i < pq.size(); ++i) {
    cuts.push_back(pq[i].first / pq[i].second);
    for (std::size_t j = 0; j < pq.size(); ++j) {
      if (pq[j].second != pq[i].second) cuts.push_back((pq[j].first - pq[i].first) / (pq[j].second - pq[i].second));
    }
  }
  std::vector<double> keep;
  for (double c : cuts)
    if (c >= a && c <= b) keep.push_back(c);
  std::sort(keep.begin(), keep.end());
  std::vector<double> d(pq.size(), 0.0);
  for (std::size_t k = 0; k + 1 < keep.size(); ++k) {
    if (keep[k + 1] <= keep[k]) continue;
    const double m = 0.5 * (keep[k] + keep[k + 1]);
    int best = -1;
    double bu = 0.0;
    for (std::size_t i = 0; i < pq.size(); ++i) {
      const double u = m * pq[i].second - pq[i].first;
      if (u >= bu) {
        bu = u;
        best = static_cast<int>(i);
      }
    }
    if (best >= 0) d[best] += cdf(keep[k + 1]) - cdf(keep[k]);
  }
  return d;
}

inline double brute_revenue(const std::vector<std::pair<double, double>>& pq, const std::function<double(double)>& cdf,
                            double a, double b) {
  const auto d = brute_demand(pq, cdf, a, b);
  double r = 0.0;
  for (std::size_t i = 0; i < pq.size(); ++i) r += pq[i].first * d[i];
  return r;
}

// Leftmost maximizer of g on [lo, hi] by a dense grid then local refinement.
inline double grid_argmax(const std::function<double(double)>& g, double lo, double hi, double step) {
  double best_x = lo, best = g(lo);
  for (double x = lo; x <= hi + 1e-15; x += step) {
    const double v = g(x);
    if (v > best + 1e-15) {
      best = v;
      best_x = x;
    }
  }
  double l = std::max(lo, best_x - step), h = std::min(hi, best_x + step);
  for (int it = 0; it < 200; ++it) {
    const double m1 = l + (h - l) / 3, m2 = h - (h - l) / 3;
    if (g(m1) < g(m2)) {
      l = m1;
    } else {
      h = m2;
    }
  }
  const double x = 0.5 * (l + h);
  return g(x) >= best ? x : best_x;
}

inline std::mt19937_64& rng() {
  static std::mt19937_64 r(20261018);
  return r;
}

inline double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng()); }

// A menu with k pairs whose cutoffs are increasing inside (a, b), so every
// pair has positive demand. Returned as (price, quality), ascending.
inline std::vector<std::pair<double, double>> random_cp_menu(std::size_t k, double a, double b) {
  std::vector<double> m(k), q(k);
  for (auto& x : m) x = uniform(a + 0.02 * (b - a), b - 0.02 * (b - a));
  for (auto& x : q) x = uniform(0.05, 1.0);
  std::sort(m.begin(), m.end());
  std::sort(q.begin(), q.end());
  std::vector<std::pair<double, double>> out;
  double p = 0.0, prev_q = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    p += m[i] * (q[i] - prev_q);
    prev_q = q[i];
    out.emplace_back(p, q[i]);
  }
  return out;
}

}  // namespace qsel_test
