#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "lhvi/error.hpp"

namespace lhvi {

/// Gauss-Hermite rule for the weight e^{-t^2}: sum_j w_j f(t_j) ~ int f(t) e^{-t^2} dt.
/// Exact for polynomials of degree <= 2n-1.
struct QuadratureRule {
  int order = 0;
  std::vector<double> nodes;
  std::vector<double> weights;

  /// Nodes/weights for E_{N(0,1)}[f(z)] = sum_j normalized_weights[j] f(std_nodes[j]),
  /// i.e. z = sqrt(2) t and w / sqrt(pi).
  std::vector<double> std_nodes;
  std::vector<double> normalized_weights;

  static QuadratureRule gauss_hermite(int n) {
    if (n < 1) throw Error(ErrorCode::InvalidArgument, "quadrature order must be >= 1");
    QuadratureRule r;
    r.order = n;
    r.nodes.assign(n, 0.0);
    r.weights.assign(n, 0.0);

    // Newton iteration on orthonormal Hermite polynomials, roots found from
    // the largest downwards using asymptotic initial guesses.
    const double pim4 = 1.0 / std::pow(std::numbers::pi, 0.25);
    const int m = (n + 1) / 2;
    double z = 0.0;
    for (int i = 0; i < m; ++i) {
      if (i == 0)
        z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
      else if (i == 1)
        z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
      else if (i == 2)
        z = 1.86 * z - 0.86 * r.nodes[0];
      else if (i == 3)
        z = 1.91 * z - 0.91 * r.nodes[1];
      else
        z = 2.0 * z - r.nodes[i - 2];

      double pp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p1 = pim4;
        double p2 = 0.0;
        for (int j = 1; j <= n; ++j) {
          const double p3 = p2;
          p2 = p1;
          p1 = z * std::sqrt(2.0 / j) * p2 - std::sqrt(static_cast<double>(j - 1) / j) * p3;
        }
        pp = std::sqrt(2.0 * n) * p2;
        const double z1 = z;
        z = z1 - p1 / pp;
        if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
      }
      r.nodes[i] = z;
      r.nodes[n - 1 - i] = -z;
      r.weights[i] = 2.0 / (pp * pp);
      r.weights[n - 1 - i] = r.weights[i];
    }
    if (n % 2 == 1) r.nodes[n / 2] = 0.0;

    const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
    for (int j = 0; j < n; ++j) {
      r.std_nodes.push_back(std::numbers::sqrt2 * r.nodes[j]);
      r.normalized_weights.push_back(r.weights[j] * inv_sqrt_pi);
    }
    return r;
  }
};

}  // namespace lhvi
