#pragma once

// Independent reference computations used by the unit and acceptance tests.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "graphclip/graph.hpp"

namespace oracle {

// AUC by explicit enumeration of positive/negative pairs, ties worth 1/2.
inline double auc_pairs(const std::vector<double>& s, const std::vector<bool>& pos) {
  std::uint64_t wins2 = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!pos[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (pos[j]) continue;
      ++pairs;
      if (s[i] > s[j]) wins2 += 2;
      else if (s[i] == s[j]) wins2 += 1;
    }
  }
  return static_cast<double>(wins2) / (2.0 * static_cast<double>(pairs));
}

// Stationary distribution of a walk that restarts at `seed` with probability
// c and otherwise moves to a uniform neighbor (isolated nodes restart):
//   r = c·e_seed + (1−c)·Wᵀ r, solved by Gaussian elimination.
inline std::vector<double> rwr_stationary(const graphclip::TextAttributedGraph& g, graphclip::NodeId seed, double c) {
  const std::size_t n = g.num_nodes();
  std::vector<std::vector<double>> a(n, std::vector<double>(n + 1, 0.0));
  for (std::size_t v = 0; v < n; ++v) a[v][v] = 1.0;
  for (std::size_t u = 0; u < n; ++u) {
    const auto& nb = g.neighbors(static_cast<graphclip::NodeId>(u));
    if (nb.empty()) {
      a[seed][u] -= 1.0 - c;  // stuck walkers teleport with probability 1, c of it is on the rhs
      continue;
    }
    for (auto v : nb) a[v][u] -= (1.0 - c) / static_cast<double>(nb.size());
  }
  a[seed][n] = c;  // c · Σ r_u with Σ r_u = 1
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    std::swap(a[col], a[piv]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (std::size_t k = col; k <= n; ++k) a[r][k] -= f * a[col][k];
    }
  }
  std::vector<double> x(n);
  for (std::size_t v = 0; v < n; ++v) x[v] = a[v][n] / a[v][v];
  return x;
}

// Upper-tail p-value of Pearson's statistic with `df` degrees of freedom.
inline double chi_square_p(const std::vector<double>& observed, const std::vector<double>& expected_prob,
                           double total) {
  double stat = 0.0;
  std::size_t df = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double e = expected_prob[i] * total;
    if (e <= 0.0) continue;
    stat += (observed[i] - e) * (observed[i] - e) / e;
    ++df;
  }
  return boost::math::gamma_q(0.5 * static_cast<double>(df - 1), 0.5 * stat);
}

}  // namespace oracle
