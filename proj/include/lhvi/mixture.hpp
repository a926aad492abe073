#pragma once

// Mixture of fully factorized distributions: q(x) = sum_k w_k prod_i q_i^k(x_i).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "lhvi/error.hpp"
#include "lhvi/graph.hpp"
#include "lhvi/lifting.hpp"

namespace lhvi {

inline constexpr double kMinLogStd = -9.210340371976184;  // log(1e-4)
inline constexpr double kMaxLogStd = 9.210340371976184;   // log(1e4)

inline double log_sum_exp(std::span<const double> v) {
  double m = -kInf;
  for (double x : v) m = std::max(m, x);
  if (m == -kInf) return -kInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline std::vector<double> softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) p[i] = std::exp(logits[i] - lse);
  return p;
}

/// Per-variable, per-component parameters. Continuous variables use (mean,
/// log-std) pairs, discrete variables use `cardinality` logits.
struct Marginal {
  bool discrete = false;
  int cardinality = 0;
  bool clamped = false;
  std::vector<double> params;  // K * width(), component-major

  std::size_t width() const { return discrete ? static_cast<std::size_t>(cardinality) : 2; }

  std::span<double> component(std::size_t k) { return {params.data() + k * width(), width()}; }
  std::span<const double> component(std::size_t k) const { return {params.data() + k * width(), width()}; }

  double mean(std::size_t k) const { return params[2 * k]; }
  double log_std(std::size_t k) const { return params[2 * k + 1]; }
  double stddev(std::size_t k) const { return std::exp(std::clamp(log_std(k), kMinLogStd, kMaxLogStd)); }
  /// d sigma / d rho is sigma inside the clamp range and 0 outside.
  bool log_std_active(std::size_t k) const { return log_std(k) > kMinLogStd && log_std(k) < kMaxLogStd; }

  std::vector<double> probabilities(std::size_t k) const { return softmax(component(k)); }

  double log_density(std::size_t k, double x) const {
    if (discrete) {
      const auto c = component(k);
      const auto s = static_cast<std::size_t>(x);
      return c[s] - log_sum_exp(c);
    }
    const double sd = stddev(k);
    const double z = (x - mean(k)) / sd;
    return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
  }
};

class MixtureMeanField {
 public:
  MixtureMeanField() = default;

  /// Zero-initialized parameters for the given domains.
  MixtureMeanField(std::size_t K, const std::vector<Domain>& domains) : weight_logits(K, 0.0) {
    if (K < 1) throw Error(ErrorCode::InvalidArgument, "mixture needs K >= 1");
    for (const auto& d : domains) {
      Marginal m;
      m.discrete = d.is_discrete();
      m.cardinality = d.cardinality;
      m.params.assign(K * m.width(), 0.0);
      marginals.push_back(std::move(m));
    }
  }

  std::vector<double> weight_logits;
  std::vector<Marginal> marginals;

  std::size_t K() const { return weight_logits.size(); }
  std::size_t size() const { return marginals.size(); }
  std::vector<double> weights() const { return softmax(weight_logits); }

  /// Clamps variable i to the same Gaussian in every component.
  void clamp_gaussian(std::size_t i, double mean, double variance) {
    auto& m = marginals.at(i);
    if (m.discrete) throw Error(ErrorCode::DomainMismatch, "cannot clamp a discrete marginal to a Gaussian");
    const double rho = std::clamp(0.5 * std::log(std::max(variance, 0.0)), kMinLogStd, kMaxLogStd);
    for (std::size_t k = 0; k < K(); ++k) {
      m.params[2 * k] = mean;
      m.params[2 * k + 1] = rho;
    }
    m.clamped = true;
  }

  /// Clamps discrete variable i to a point mass (up to the logit range).
  void clamp_state(std::size_t i, std::size_t state) {
    auto& m = marginals.at(i);
    if (!m.discrete) throw Error(ErrorCode::DomainMismatch, "cannot clamp a continuous marginal to a state");
    for (std::size_t k = 0; k < K(); ++k)
      for (std::size_t s = 0; s < m.width(); ++s) m.params[k * m.width() + s] = s == state ? 0.0 : -700.0;
    m.clamped = true;
  }

  std::size_t num_free_parameters() const {
    std::size_t n = K();
    for (const auto& m : marginals)
      if (!m.clamped) n += m.params.size();
    return n;
  }

  /// Offset of variable i's block in the packed vector, or npos if clamped.
  std::vector<std::size_t> offsets() const {
    std::vector<std::size_t> off(marginals.size(), npos);
    std::size_t n = K();
    for (std::size_t i = 0; i < marginals.size(); ++i) {
      if (marginals[i].clamped) continue;
      off[i] = n;
      n += marginals[i].params.size();
    }
    return off;
  }

  std::vector<double> pack() const {
    std::vector<double> out(weight_logits);
    for (const auto& m : marginals)
      if (!m.clamped) out.insert(out.end(), m.params.begin(), m.params.end());
    return out;
  }

  void unpack(std::span<const double> packed) {
    if (packed.size() != num_free_parameters())
      throw Error(ErrorCode::InvalidArgument, "packed parameter size mismatch");
    std::size_t n = 0;
    for (auto& w : weight_logits) w = packed[n++];
    for (auto& m : marginals) {
      if (m.clamped) continue;
      for (auto& p : m.params) p = packed[n++];
    }
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

/// Random initialization: means uniform over the domain when bounded (else
/// [-1, 1]), log-std 0, categorical logits N(0, 0.1^2), uniform weights.
inline MixtureMeanField initialize_mixture(std::size_t K, const std::vector<Domain>& domains, std::uint64_t seed) {
  MixtureMeanField q(K, domains);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (std::size_t i = 0; i < domains.size(); ++i) {
    auto& m = q.marginals[i];
    for (std::size_t k = 0; k < K; ++k) {
      if (m.discrete) {
        for (auto& l : m.component(k)) l = noise(rng);
      } else {
        const auto& d = domains[i];
        const double lo = d.bounded() ? d.lower : -1.0;
        const double hi = d.bounded() ? d.upper : 1.0;
        m.params[2 * k] = std::uniform_real_distribution<double>(lo, hi)(rng);
        m.params[2 * k + 1] = 0.0;
      }
    }
  }
  return q;
}

inline std::vector<Domain> super_domains(const CompressedGraph& cg) {
  std::vector<Domain> d;
  for (const auto& sv : cg.super_variables) d.push_back(sv.domain);
  return d;
}

inline std::vector<Domain> graph_domains(const FactorGraph& g) {
  std::vector<Domain> d;
  for (const auto& v : g.variables()) d.push_back(v.domain);
  return d;
}

/// Copies super-variable parameters to every member (tied parameters).
inline MixtureMeanField expand(const MixtureMeanField& lifted, const CompressedGraph& cg) {
  MixtureMeanField q;
  q.weight_logits = lifted.weight_logits;
  q.marginals.resize(cg.ground_variables);
  for (std::size_t i = 0; i < cg.ground_variables; ++i) q.marginals[i] = lifted.marginals.at(cg.variable_to_super[i]);
  return q;
}

/// Mixture density (continuous) or mass (discrete) of variable i at x.
inline double marginal_density(const MixtureMeanField& q, std::size_t i, double x) {
  const auto& m = q.marginals.at(i);
  if (m.discrete ? !(x >= 0 && x == std::floor(x) && x < m.cardinality) : !std::isfinite(x))
    throw Error(ErrorCode::DomainMismatch, "value outside the variable's domain");
  const auto w = q.weights();
  double p = 0.0;
  for (std::size_t k = 0; k < q.K(); ++k) p += w[k] * std::exp(m.log_density(k, x));
  return p;
}

}  // namespace lhvi
