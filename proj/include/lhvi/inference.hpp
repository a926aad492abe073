#pragma once

// Queries against a fitted mixture: joint marginals, MAP by coordinate
// ascent, energies of assignments and accuracy metrics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "lhvi/error.hpp"
#include "lhvi/graph.hpp"
#include "lhvi/mixture.hpp"

namespace lhvi {

/// K-component product-form mixture over the query variables U.
struct MarginalQuery {
  std::vector<std::string> ids;
  std::vector<std::size_t> indices;  // into the fitted graph
  MixtureMeanField q;                // restricted to U (same weights)

  std::size_t K() const { return q.K(); }

  double log_density(std::span<const double> x) const {
    if (x.size() != indices.size()) throw Error(ErrorCode::InvalidArgument, "point size does not match the query");
    if (indices.empty()) return 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto& m = q.marginals[i];
      if (m.discrete ? !(x[i] >= 0 && x[i] == std::floor(x[i]) && x[i] < m.cardinality) : !std::isfinite(x[i]))
        throw Error(ErrorCode::DomainMismatch, "value outside the variable's domain");
    }
    const auto w = q.weights();
    std::vector<double> terms(K());
    for (std::size_t k = 0; k < K(); ++k) {
      terms[k] = std::log(w[k]);
      for (std::size_t i = 0; i < x.size(); ++i) terms[k] += q.marginals[i].log_density(k, x[i]);
    }
    return log_sum_exp(terms);
  }

  double density(std::span<const double> x) const { return std::exp(log_density(x)); }

  std::vector<double> sample(std::mt19937_64& rng) const {
    const auto w = q.weights();
    std::discrete_distribution<std::size_t> comp(w.begin(), w.end());
    const std::size_t k = comp(rng);
    std::vector<double> x(indices.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto& m = q.marginals[i];
      if (m.discrete) {
        const auto p = m.probabilities(k);
        x[i] = static_cast<double>(std::discrete_distribution<std::size_t>(p.begin(), p.end())(rng));
      } else {
        x[i] = m.mean(k) + m.stddev(k) * std::normal_distribution<double>(0.0, 1.0)(rng);
      }
    }
    return x;
  }
};

inline std::vector<std::size_t> resolve(const FactorGraph& graph, const std::vector<std::string>& ids) {
  std::vector<std::size_t> out;
  for (const auto& id : ids) out.push_back(graph.index_of(id));
  return out;
}

/// q is a ground mixture over `graph` (the conditioned graph it was fitted on).
inline MarginalQuery query_marginal(const MixtureMeanField& q, const FactorGraph& graph,
                                    const std::vector<std::string>& ids) {
  if (q.size() != graph.num_variables())
    throw Error(ErrorCode::InvalidArgument, "mixture does not match the graph");
  MarginalQuery mq;
  mq.ids = ids;
  mq.indices = resolve(graph, ids);
  mq.q.weight_logits = q.weight_logits;
  for (std::size_t i : mq.indices) mq.q.marginals.push_back(q.marginals[i]);
  return mq;
}

namespace detail {

// log q_i^k(x) and its derivative for a continuous marginal.
inline double gauss_logpdf(const Marginal& m, std::size_t k, double x, double* dx) {
  const double sd = m.stddev(k);
  const double z = (x - m.mean(k)) / sd;
  if (dx) *dx = -z / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

}  // namespace detail

struct MapResult {
  std::vector<double> values;  // one per query variable
  double log_q = -kInf;
  std::size_t sweeps = 0;
};

/// Coordinate ascent on log q(x_U), started from every component's modes.
/// Continuous coordinates use backtracking steps starting at half the
/// smallest component std; discrete coordinates take the exact argmax.
inline MapResult map_estimate(const MarginalQuery& mq, const std::vector<Domain>* domains = nullptr,
                              std::size_t max_sweeps = 200) {
  const auto& q = mq.q;
  const std::size_t n = q.size(), K = q.K();
  MapResult best;
  if (n == 0) {
    best.log_q = 0.0;
    return best;
  }
  const auto w = q.weights();
  std::vector<double> logw(K);
  for (std::size_t k = 0; k < K; ++k) logw[k] = std::log(w[k]);

  auto clip = [&](std::size_t i, double x) {
    if (!domains || (*domains)[i].is_discrete()) return x;
    return std::clamp(x, (*domains)[i].lower, (*domains)[i].upper);
  };

  for (std::size_t start = 0; start < K; ++start) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& m = q.marginals[i];
      if (m.discrete) {
        const auto c = m.component(start);
        x[i] = static_cast<double>(std::max_element(c.begin(), c.end()) - c.begin());
      } else {
        x[i] = clip(i, m.mean(start));
      }
    }
    // S[k] = log w_k + sum_i log q_i^k(x_i), kept up to date per coordinate.
    std::vector<double> S(logw);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t i = 0; i < n; ++i) S[k] += q.marginals[i].log_density(k, x[i]);

    std::vector<double> c(K), t(K), dk(K);
    std::size_t sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
      double moved = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto& m = q.marginals[i];
        for (std::size_t k = 0; k < K; ++k) c[k] = S[k] - m.log_density(k, x[i]);
        auto f = [&](double xi, double* g) {
          for (std::size_t k = 0; k < K; ++k)
            t[k] = c[k] + (m.discrete ? m.log_density(k, xi) : detail::gauss_logpdf(m, k, xi, g ? &dk[k] : nullptr));
          const double v = log_sum_exp(t);
          if (g) {
            *g = 0.0;
            for (std::size_t k = 0; k < K; ++k) *g += std::exp(t[k] - v) * dk[k];
          }
          return v;
        };
        const double old = x[i];
        if (m.discrete) {
          double bv = -kInf;
          for (int s = 0; s < m.cardinality; ++s) {
            const double v = f(s, nullptr);
            if (v > bv) {
              bv = v;
              x[i] = s;
            }
          }
        } else {
          double smin = kInf;
          for (std::size_t k = 0; k < K; ++k) smin = std::min(smin, m.stddev(k));
          double step = 0.5 * smin;
          double g = 0.0;
          double fx = f(x[i], &g);
          for (int it = 0; it < 100000 && step >= 1e-8 && g != 0.0; ++it) {
            const double cand = clip(i, x[i] + (g > 0 ? step : -step));
            double gc = 0.0;
            const double fc = f(cand, &gc);
            if (fc > fx && cand != x[i]) {
              x[i] = cand;
              fx = fc;
              g = gc;
            } else {
              step *= 0.5;
            }
          }
        }
        moved = std::max(moved, std::abs(x[i] - old));
        for (std::size_t k = 0; k < K; ++k) S[k] = c[k] + m.log_density(k, x[i]);
      }
      if (moved < 1e-8) {
        ++sweep;
        break;
      }
    }
    const double v = log_sum_exp(S);
    if (v > best.log_q) {
      best.log_q = v;
      best.values = x;
      best.sweeps = sweep;
    }
  }
  return best;
}

/// -sum_c log psi_c(x_c) - log_constant; +inf when some potential vanishes.
inline double energy_of_assignment(const FactorGraph& graph, std::span<const double> x) {
  if (x.size() != graph.num_variables())
    throw Error(ErrorCode::DomainMismatch, "assignment does not cover every variable");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!graph.variable(i).domain.contains(x[i]))
      throw Error(ErrorCode::DomainMismatch, "value for '" + graph.variable(i).id + "' is outside its domain");
  const double s = graph.log_score(x) + graph.log_constant();
  return s == -kInf ? kInf : -s;
}

/// Reference univariate marginal: a probability table, a Gaussian mixture, or
/// a density tabulated on a grid (linear interpolation, zero outside).
struct ExactMarginal {
  enum class Kind { Discrete, GaussianMixture, Grid };
  Kind kind = Kind::Discrete;
  std::vector<double> probabilities;
  std::vector<double> weights, means, variances;
  std::vector<double> grid, values;

  static ExactMarginal discrete(std::vector<double> p) {
    ExactMarginal e;
    e.kind = Kind::Discrete;
    e.probabilities = std::move(p);
    return e;
  }
  static ExactMarginal gaussian(double mean, double variance) { return mixture({1.0}, {mean}, {variance}); }
  static ExactMarginal mixture(std::vector<double> w, std::vector<double> mu, std::vector<double> var) {
    ExactMarginal e;
    e.kind = Kind::GaussianMixture;
    e.weights = std::move(w);
    e.means = std::move(mu);
    e.variances = std::move(var);
    return e;
  }
  static ExactMarginal tabulated(std::vector<double> x, std::vector<double> p) {
    if (x.size() != p.size() || x.size() < 2) throw Error(ErrorCode::InvalidArgument, "bad tabulated density");
    ExactMarginal e;
    e.kind = Kind::Grid;
    e.grid = std::move(x);
    e.values = std::move(p);
    return e;
  }

  bool is_discrete() const { return kind == Kind::Discrete; }

  double density(double x) const {
    if (kind == Kind::GaussianMixture) {
      double s = 0.0;
      for (std::size_t j = 0; j < weights.size(); ++j) {
        const double z = (x - means[j]) * (x - means[j]) / variances[j];
        s += weights[j] * std::exp(-0.5 * z) / std::sqrt(2.0 * std::numbers::pi * variances[j]);
      }
      return s;
    }
    if (kind == Kind::Grid) {
      if (x < grid.front() || x > grid.back()) return 0.0;
      auto it = std::upper_bound(grid.begin(), grid.end(), x);
      if (it == grid.end()) return values.back();
      const std::size_t j = static_cast<std::size_t>(it - grid.begin());
      const double a = (x - grid[j - 1]) / (grid[j] - grid[j - 1]);
      return (1 - a) * values[j - 1] + a * values[j];
    }
    throw Error(ErrorCode::SupportMismatch, "density of a discrete marginal");
  }

  /// Interval holding all but ~1e-6 of the mass.
  std::pair<double, double> support() const {
    if (kind == Kind::GaussianMixture) {
      double lo = kInf, hi = -kInf;
      for (std::size_t j = 0; j < means.size(); ++j) {
        lo = std::min(lo, means[j] - 8.0 * std::sqrt(variances[j]));
        hi = std::max(hi, means[j] + 8.0 * std::sqrt(variances[j]));
      }
      return {lo, hi};
    }
    if (kind == Kind::Grid) {
      std::vector<double> cdf(grid.size(), 0.0);
      for (std::size_t j = 1; j < grid.size(); ++j)
        cdf[j] = cdf[j - 1] + 0.5 * (values[j] + values[j - 1]) * (grid[j] - grid[j - 1]);
      const double total = cdf.back();
      std::size_t a = 0, b = grid.size() - 1;
      while (a + 1 < grid.size() && cdf[a + 1] < 5e-7 * total) ++a;
      while (b > 0 && total - cdf[b - 1] < 5e-7 * total) --b;
      if (b <= a) return {grid.front(), grid.back()};
      return {grid[a], grid[b]};
    }
    throw Error(ErrorCode::SupportMismatch, "support of a discrete marginal");
  }
};

/// KL(p || q) for one variable: exact sum for discrete variables, trapezoid
/// rule with `points` nodes over p's effective support otherwise; q floored
/// at `floor`.
inline double univariate_kl(const ExactMarginal& p, const MixtureMeanField& q, std::size_t i,
                            std::size_t points = 4096, double floor = 1e-300) {
  const auto& m = q.marginals.at(i);
  if (p.is_discrete() != m.discrete) throw Error(ErrorCode::SupportMismatch, "discrete/continuous mismatch");
  const auto w = q.weights();
  if (m.discrete) {
    if (p.probabilities.size() != static_cast<std::size_t>(m.cardinality))
      throw Error(ErrorCode::SupportMismatch, "cardinality mismatch");
    double kl = 0.0;
    for (int s = 0; s < m.cardinality; ++s) {
      const double ps = p.probabilities[s];
      if (ps <= 0.0) continue;
      double qs = 0.0;
      for (std::size_t k = 0; k < q.K(); ++k) qs += w[k] * std::exp(m.log_density(k, s));
      kl += ps * (std::log(ps) - std::log(std::max(qs, floor)));
    }
    return std::max(kl, 0.0);
  }
  const auto [lo, hi] = p.support();
  const double h = (hi - lo) / static_cast<double>(points - 1);
  std::vector<double> pv(points), qv(points);
  double zp = 0.0;
  for (std::size_t j = 0; j < points; ++j) {
    const double x = lo + h * static_cast<double>(j);
    pv[j] = p.density(x);
    double qs = 0.0;
    for (std::size_t k = 0; k < q.K(); ++k) qs += w[k] * std::exp(m.log_density(k, x));
    qv[j] = std::max(qs, floor);
    zp += (j == 0 || j + 1 == points ? 0.5 : 1.0) * h * pv[j];
  }
  double kl = 0.0;
  for (std::size_t j = 0; j < points; ++j) {
    if (pv[j] <= 0.0) continue;
    const double pn = pv[j] / zp;
    kl += (j == 0 || j + 1 == points ? 0.5 : 1.0) * h * pn * (std::log(pn) - std::log(qv[j]));
  }
  return std::max(kl, 0.0);
}

inline double avg_univariate_kl(const std::vector<ExactMarginal>& exact, const MixtureMeanField& q,
                                const std::vector<std::size_t>& variables, std::size_t points = 4096,
                                double floor = 1e-300) {
  if (variables.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t j = 0; j < variables.size(); ++j) s += univariate_kl(exact.at(j), q, variables[j], points, floor);
  return s / static_cast<double>(variables.size());
}

/// Mean absolute error over continuous entries, 0/1 mismatch over discrete
/// entries (flagged by `discrete`, empty = all continuous).
inline double avg_l1_error(std::span<const double> reference, std::span<const double> estimate,
                           const std::vector<bool>& discrete = {}) {
  if (reference.size() != estimate.size()) throw Error(ErrorCode::InvalidArgument, "vectors differ in length");
  if (reference.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (!discrete.empty() && discrete[i])
      s += reference[i] == estimate[i] ? 0.0 : 1.0;
    else
      s += std::abs(reference[i] - estimate[i]);
  }
  return s / static_cast<double>(reference.size());
}

/// Component-weighted means of each ground marginal (continuous: mixture
/// mean; discrete: expected state).
inline std::vector<double> marginal_means(const MixtureMeanField& q) {
  const auto w = q.weights();
  std::vector<double> out(q.size(), 0.0);
  for (std::size_t i = 0; i < q.size(); ++i) {
    const auto& m = q.marginals[i];
    for (std::size_t k = 0; k < q.K(); ++k) {
      if (m.discrete) {
        const auto p = m.probabilities(k);
        for (std::size_t s = 0; s < p.size(); ++s) out[i] += w[k] * p[s] * static_cast<double>(s);
      } else {
        out[i] += w[k] * m.mean(k);
      }
    }
  }
  return out;
}

}  // namespace lhvi
