#pragma once

// Hybrid factor graphs, evidence, and conditioning by evidence absorption.

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lhvi/error.hpp"
#include "lhvi/potentials.hpp"

namespace lhvi {

struct Domain {
  enum class Kind { Discrete, Continuous };

  Kind kind = Kind::Continuous;
  int cardinality = 0;
  double lower = -kInf;
  double upper = kInf;

  static Domain discrete(int k) { return {Kind::Discrete, k, 0.0, 0.0}; }
  static Domain continuous(double lo = -kInf, double hi = kInf) { return {Kind::Continuous, 0, lo, hi}; }

  bool is_discrete() const { return kind == Kind::Discrete; }
  bool bounded() const { return std::isfinite(lower) && std::isfinite(upper); }

  bool contains(double v) const {
    if (is_discrete()) return v >= 0.0 && v == std::floor(v) && v < cardinality;
    return !std::isnan(v) && std::isfinite(v) && v >= lower && v <= upper;
  }

  bool accepts(const Slot& s) const {
    return is_discrete() ? (s.discrete && s.cardinality == cardinality) : !s.discrete;
  }

  bool operator==(const Domain&) const = default;
};

struct VariableDecl {
  std::string id;
  Domain domain;
  std::optional<std::string> label;
};

struct FactorDecl {
  std::string id;
  std::vector<std::string> scope;
  Potential potential;
};

/// Observed values keyed by variable id. Discrete values are state indices.
struct Evidence {
  std::map<std::string, double> entries;

  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }
  bool contains(const std::string& id) const { return entries.count(id) != 0; }
};

/// (factor index, position in that factor's scope)
struct Incidence {
  std::size_t factor;
  std::size_t position;
  bool operator==(const Incidence&) const = default;
};

/// Immutable after construction. Variables and factors are addressed by their
/// index in declaration order; ids are kept for I/O.
class FactorGraph {
 public:
  FactorGraph() = default;

  std::size_t num_variables() const { return variables_.size(); }
  std::size_t num_factors() const { return factors_.size(); }

  const std::vector<VariableDecl>& variables() const { return variables_; }
  const VariableDecl& variable(std::size_t i) const { return variables_[i]; }
  const FactorDecl& factor(std::size_t c) const { return factors_[c]; }
  const std::vector<FactorDecl>& factors() const { return factors_; }

  /// Variable indices of factor c's scope, in scope order.
  const std::vector<std::size_t>& scope(std::size_t c) const { return scopes_[c]; }
  const std::vector<Incidence>& adjacency(std::size_t i) const { return adjacency_[i]; }
  std::size_t degree(std::size_t i) const { return adjacency_[i].size(); }

  std::optional<std::size_t> find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t index_of(const std::string& id) const {
    auto idx = find(id);
    if (!idx) throw Error(ErrorCode::UnknownVariable, "unknown variable '" + id + "'");
    return *idx;
  }

  /// Sum of log psi for factors eliminated by conditioning on evidence.
  double log_constant() const { return log_constant_; }

  /// Free-form metadata carried through serialization (e.g. generator family).
  const std::map<std::string, std::string>& meta() const { return meta_; }

  /// Sum of log psi_c(x_c) over all factors at a full assignment (indexed by
  /// variable). Does not include log_constant().
  double log_score(std::span<const double> x) const {
    double total = 0.0;
    std::vector<double> xc;
    for (std::size_t c = 0; c < factors_.size(); ++c) {
      xc.clear();
      for (std::size_t v : scopes_[c]) xc.push_back(x[v]);
      total += factors_[c].potential.log_value(xc);
    }
    return total;
  }

  friend FactorGraph build_graph(std::vector<VariableDecl> variables, std::vector<FactorDecl> factors,
                                 double log_constant, std::map<std::string, std::string> meta);

 private:
  std::vector<VariableDecl> variables_;
  std::vector<FactorDecl> factors_;
  std::vector<std::vector<std::size_t>> scopes_;
  std::vector<std::vector<Incidence>> adjacency_;
  std::unordered_map<std::string, std::size_t> index_;
  double log_constant_ = 0.0;
  std::map<std::string, std::string> meta_;
};

inline FactorGraph build_graph(std::vector<VariableDecl> variables, std::vector<FactorDecl> factors,
                               double log_constant = 0.0,
                               std::map<std::string, std::string> meta = {}) {
  FactorGraph g;
  for (std::size_t i = 0; i < variables.size(); ++i) {
    const auto& v = variables[i];
    if (v.domain.is_discrete() && v.domain.cardinality < 2)
      throw Error(ErrorCode::InvalidArgument, "variable '" + v.id + "' needs cardinality >= 2");
    if (!v.domain.is_discrete() && !(v.domain.lower < v.domain.upper))
      throw Error(ErrorCode::InvalidArgument, "variable '" + v.id + "' has empty continuous domain");
    if (!g.index_.emplace(v.id, i).second)
      throw Error(ErrorCode::DuplicateId, "duplicate variable id '" + v.id + "'");
  }
  g.adjacency_.resize(variables.size());

  std::unordered_map<std::string, std::size_t> factor_ids;
  for (std::size_t c = 0; c < factors.size(); ++c) {
    const auto& f = factors[c];
    if (!factor_ids.emplace(f.id, c).second)
      throw Error(ErrorCode::DuplicateId, "duplicate factor id '" + f.id + "'");
    if (f.scope.empty()) throw Error(ErrorCode::ArityMismatch, "factor '" + f.id + "' has empty scope");
    const auto slots = f.potential.slots();
    if (slots.size() != f.scope.size())
      throw Error(ErrorCode::ArityMismatch, "factor '" + f.id + "' potential arity " +
                                                std::to_string(slots.size()) + " != scope size " +
                                                std::to_string(f.scope.size()));
    std::vector<std::size_t> sc;
    for (std::size_t p = 0; p < f.scope.size(); ++p) {
      auto it = g.index_.find(f.scope[p]);
      if (it == g.index_.end())
        throw Error(ErrorCode::UnknownVariable,
                    "factor '" + f.id + "' references undeclared variable '" + f.scope[p] + "'");
      for (std::size_t q : sc)
        if (q == it->second)
          throw Error(ErrorCode::DuplicateId, "factor '" + f.id + "' repeats variable '" + f.scope[p] + "'");
      if (!variables[it->second].domain.accepts(slots[p]))
        throw Error(ErrorCode::ArityMismatch,
                    "factor '" + f.id + "' slot " + std::to_string(p) + " domain kind mismatch");
      sc.push_back(it->second);
      g.adjacency_[it->second].push_back({c, p});
    }
    g.scopes_.push_back(std::move(sc));
  }
  g.variables_ = std::move(variables);
  g.factors_ = std::move(factors);
  g.log_constant_ = log_constant;
  g.meta_ = std::move(meta);
  return g;
}

inline void validate_evidence(const FactorGraph& graph, const Evidence& evidence) {
  for (const auto& [id, value] : evidence.entries) {
    const auto idx = graph.find(id);
    if (!idx) throw Error(ErrorCode::UnknownVariable, "evidence for unknown variable '" + id + "'");
    if (!graph.variable(*idx).domain.contains(value))
      throw Error(ErrorCode::InvalidEvidenceValue,
                  "evidence value " + std::to_string(value) + " invalid for '" + id + "'");
  }
}

/// Absorbs evidence: observed variables are removed, every factor touching them
/// is restricted at the observed values, and factors left with no free
/// variables are folded into the graph's log-constant.
inline FactorGraph condition(const FactorGraph& graph, const Evidence& evidence) {
  validate_evidence(graph, evidence);
  if (evidence.empty()) return graph;

  std::vector<VariableDecl> vars;
  for (const auto& v : graph.variables())
    if (!evidence.contains(v.id)) vars.push_back(v);

  std::vector<FactorDecl> factors;
  double constant = graph.log_constant();
  for (const auto& f : graph.factors()) {
    std::map<std::size_t, double> fixed;
    std::vector<std::string> scope;
    for (std::size_t p = 0; p < f.scope.size(); ++p) {
      auto it = evidence.entries.find(f.scope[p]);
      if (it != evidence.entries.end())
        fixed.emplace(p, it->second);
      else
        scope.push_back(f.scope[p]);
    }
    if (fixed.empty()) {
      factors.push_back(f);
    } else if (scope.empty()) {
      std::vector<double> x(f.scope.size());
      for (const auto& [p, v] : fixed) x[p] = v;
      constant += f.potential.log_value(x);
    } else {
      factors.push_back({f.id, std::move(scope), f.potential.restrict(fixed)});
    }
  }
  return build_graph(std::move(vars), std::move(factors), constant, graph.meta());
}

}  // namespace lhvi
