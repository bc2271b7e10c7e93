#pragma once

// Reference values computed independently of the library's recursions.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>

#include "contregime/dgp.hpp"

namespace testsupport {

/// P(A = 1 | L = l) under a regime reading only the current covariate.
using BinaryRule = std::function<double(double l)>;

/// Forward recursion of P(L(t) = 1) on a binary chain. Under a regime that
/// reads only L(t), L is Markov, so the marginal is enough.
inline double chain_forward(const contregime::ChainParams& p, const BinaryRule& treat, int steps) {
  double q = p.baseline_prob;
  for (int k = 0; k < steps; ++k) {
    double next = 0.0;
    for (double l : {0.0, 1.0}) {
      const double pl = l == 1.0 ? q : 1.0 - q;
      const double pa = treat(l);
      for (double a : {0.0, 1.0}) {
        const double w = a == 1.0 ? pa : 1.0 - pa;
        double s = p.trans_intercept + p.trans_treatment * a + p.trans_covariate * l;
        s = std::clamp(s, p.clip_lo, p.clip_hi);
        next += pl * w * s;
      }
    }
    q = next;
  }
  return q;
}

/// Brute force over all 2^(2 steps) (L, A) paths after L(0); E L(tau).
inline double chain_brute_force(const contregime::ChainParams& p, const BinaryRule& treat, int steps) {
  double total = 0.0;
  const int bits = 2 * steps + 1;
  for (int mask = 0; mask < (1 << bits); ++mask) {
    double l = mask & 1;
    double w = l == 1.0 ? p.baseline_prob : 1.0 - p.baseline_prob;
    for (int k = 0; k < steps && w > 0.0; ++k) {
      const double a = (mask >> (2 * k + 1)) & 1;
      const double next = (mask >> (2 * k + 2)) & 1;
      const double pa = treat(l);
      w *= a == 1.0 ? pa : 1.0 - pa;
      const double s = std::clamp(p.trans_intercept + p.trans_treatment * a + p.trans_covariate * l, p.clip_lo,
                                  p.clip_hi);
      w *= next == 1.0 ? s : 1.0 - s;
      l = next;
    }
    total += w * l;
  }
  return total;
}

inline bool within(double estimate, double target, double se, double k = 3.0) {
  return std::abs(estimate - target) <= k * se;
}

}  // namespace testsupport
