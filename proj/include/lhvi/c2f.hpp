#pragma once

// Coarse-to-fine lifted inference: continuous evidence starts as one cluster
// modelled by a clamped Gaussian marginal; clusters are split by 2-means
// between optimizer stages until their variance falls below epsilon, then the
// exact evidence is absorbed and the optimization finishes on the conditioned
// graph.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lhvi/error.hpp"
#include "lhvi/graph.hpp"
#include "lhvi/lifting.hpp"
#include "lhvi/mixture.hpp"
#include "lhvi/optimizer.hpp"
#include "lhvi/variational.hpp"

namespace lhvi {

struct C2FConfig {
  std::size_t K = 1;
  ObjectiveSpec spec;
  double epsilon = 0.0;  // <= 0 selects 0.05 * range^2
  std::size_t stage_iters = 50;
  std::size_t max_stages = 100;
  MinimizeConfig final;  // last stage; its adam settings are used throughout
  double quantum = 1e-12;
  std::uint64_t seed = 0;
};

struct C2FState {
  FactorGraph graph;  // discrete evidence absorbed, continuous evidence variables kept
  Evidence continuous_evidence;
  EvidenceClustering clustering;
  Coloring coloring;
  CompressedGraph cg;
  MixtureMeanField q;  // over cg's super variables
  AdamState adam;
  RunTrace trace;
  std::size_t next_iteration = 0;
  double clock_ms = 0.0;
  std::vector<std::size_t> cluster_counts;  // at the start of each stage
  std::vector<std::size_t> stage_starts;    // trace iteration where each stage begins
  std::size_t splits = 0;
  std::size_t stage = 0;
  bool structurally_converged = false;
  bool diverged = false;
  std::string pending_event;
};

namespace detail {

inline double default_epsilon(const FactorGraph& g, const Evidence& cont) {
  double range = 0.0;
  bool all_bounded = !cont.empty();
  double lo = kInf, hi = -kInf;
  for (const auto& [id, v] : cont.entries) {
    const auto& d = g.variable(g.index_of(id)).domain;
    if (d.bounded())
      range = std::max(range, d.upper - d.lower);
    else
      all_bounded = false;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!all_bounded) range = cont.empty() ? 0.0 : hi - lo;
  return 0.05 * range * range;
}

inline void clamp_evidence(MixtureMeanField& q, const CompressedGraph& cg, const FactorGraph& g,
                           const std::map<std::string, std::size_t>& cluster_of, const EvidenceClustering& ec) {
  for (std::size_t s = 0; s < cg.super_variables.size(); ++s) {
    const auto& id = g.variable(cg.super_variables[s].members.front()).id;
    auto it = cluster_of.find(id);
    if (it == cluster_of.end()) continue;
    const auto& c = ec.clusters[it->second];
    q.clamp_gaussian(s, c.mean, std::max(c.variance, 1e-8));
  }
}

inline std::map<std::string, std::size_t> cluster_index(const EvidenceClustering& ec) {
  std::map<std::string, std::size_t> m;
  for (std::size_t c = 0; c < ec.clusters.size(); ++c)
    for (const auto& id : ec.clusters[c].members) m[id] = c;
  return m;
}

// Maps parameters and Adam moments of an old compressed graph onto a new one;
// `parent[s]` is the old super variable each new super variable came from.
// `fresh` is the new mixture with clamps already applied.
inline void inherit(const MixtureMeanField& old_q, const AdamState& old_adam, const std::vector<std::size_t>& parent,
                    MixtureMeanField& fresh, AdamState& adam) {
  fresh.weight_logits = old_q.weight_logits;
  for (std::size_t s = 0; s < fresh.size(); ++s)
    if (!fresh.marginals[s].clamped) fresh.marginals[s].params = old_q.marginals[parent[s]].params;
  const auto old_off = old_q.offsets();
  const auto new_off = fresh.offsets();
  adam = AdamState(fresh.num_free_parameters(), old_adam.config);
  adam.t = old_adam.t;
  if (old_adam.m.empty()) return;
  for (std::size_t k = 0; k < fresh.K(); ++k) {
    adam.m[k] = old_adam.m[k];
    adam.v[k] = old_adam.v[k];
  }
  for (std::size_t s = 0; s < fresh.size(); ++s) {
    if (new_off[s] == MixtureMeanField::npos || old_off[parent[s]] == MixtureMeanField::npos) continue;
    for (std::size_t j = 0; j < fresh.marginals[s].params.size(); ++j) {
      adam.m[new_off[s] + j] = old_adam.m[old_off[parent[s]] + j];
      adam.v[new_off[s] + j] = old_adam.v[old_off[parent[s]] + j];
    }
  }
}

inline void append_trace(RunTrace& into, const RunTrace& from) {
  for (const auto& r : from.records) into.add(r);
}

}  // namespace detail

/// Absorbs discrete evidence, puts all continuous evidence in one cluster,
/// colors, and initializes the mixture.
inline C2FState c2f_init(const FactorGraph& graph, const Evidence& evidence, C2FConfig& config) {
  validate_evidence(graph, evidence);
  Evidence disc;
  C2FState st;
  for (const auto& [id, v] : evidence.entries) {
    if (graph.variable(graph.index_of(id)).domain.is_discrete())
      disc.entries[id] = v;
    else
      st.continuous_evidence.entries[id] = v;
  }
  st.graph = condition(graph, disc);
  if (config.epsilon <= 0.0) config.epsilon = detail::default_epsilon(st.graph, st.continuous_evidence);
  st.clustering = single_cluster(st.graph, st.continuous_evidence, config.epsilon);
  auto init = init_colors(st.graph, st.continuous_evidence, &st.clustering, config.quantum);
  std::tie(st.coloring, st.cg) = color_passing(st.graph, init);
  st.q = initialize_mixture(config.K, super_domains(st.cg), derive_seed(config.seed, 1));
  detail::clamp_evidence(st.q, st.cg, st.graph, detail::cluster_index(st.clustering), st.clustering);
  st.adam = AdamState(st.q.num_free_parameters(), config.final.adam);
  return st;
}

/// One stage: stage_iters Adam iterations on the current compressed graph,
/// then every cluster with variance above epsilon is split, the split
/// variables are recolored and color passing resumes. Children inherit their
/// parent's parameters and Adam moments.
inline void c2f_step(C2FState& st, const C2FConfig& config) {
  if (st.structurally_converged) return;
  st.cluster_counts.push_back(st.clustering.clusters.size());
  st.stage_starts.push_back(st.next_iteration);

  FreeEnergy fe(st.cg, config.spec, st.q);
  MinimizeConfig mc = config.final;
  mc.max_iters = config.stage_iters;
  mc.obj_tol = 0.0;
  mc.keep_best = false;
  mc.throw_on_divergence = false;
  auto res = minimize([&fe](std::span<const double> p, std::vector<double>& g) { return fe(p, g); }, st.q.pack(), mc,
                      &st.adam, st.next_iteration, st.clock_ms, std::exchange(st.pending_event, {}));
  detail::append_trace(st.trace, res.trace);
  st.next_iteration = st.trace.records.back().iteration + 1;
  st.clock_ms = st.trace.records.back().time_ms;
  if (res.diverged) {
    st.diverged = true;
    st.structurally_converged = true;
    return;
  }
  st.q.unpack(res.params);
  st.adam = res.state;
  ++st.stage;

  std::vector<std::pair<EvidenceCluster, EvidenceCluster>> children(st.clustering.clusters.size());
  std::vector<bool> split(st.clustering.clusters.size(), false);
  for (std::size_t c = 0; c < st.clustering.clusters.size(); ++c) {
    const auto& cl = st.clustering.clusters[c];
    if (cl.variance > config.epsilon && cl.distinct_values() >= 2) {
      children[c] = split_cluster(cl, derive_seed(config.seed, 1000 + st.stage * 131 + c));
      split[c] = true;
    }
  }
  if (std::find(split.begin(), split.end(), true) == split.end()) {
    st.structurally_converged = true;
    return;
  }

  // Recolor the second child of every split; colors are fresh per (old color, child).
  int next_color = 0;
  for (int col : st.coloring.variable_colors) next_color = std::max(next_color, col + 1);
  std::map<std::pair<int, std::size_t>, int> fresh;
  std::map<std::size_t, int> recolored;
  const std::size_t old_count = st.clustering.clusters.size();
  for (std::size_t c = 0; c < old_count; ++c) {
    if (!split[c]) continue;
    st.clustering.clusters[c] = std::move(children[c].first);
    const std::size_t nc = st.clustering.clusters.size();
    for (const auto& id : children[c].second.members) {
      const std::size_t v = st.graph.index_of(id);
      const int prev = st.coloring.variable_colors[v];
      auto [it, inserted] = fresh.emplace(std::make_pair(prev, nc), next_color);
      if (inserted) ++next_color;
      recolored[v] = it->second;
    }
    st.clustering.clusters.push_back(std::move(children[c].second));
  }

  const CompressedGraph old_cg = st.cg;
  std::tie(st.coloring, st.cg) = resume_color_passing(st.graph, st.coloring, recolored);
  std::vector<std::size_t> parent;
  for (const auto& sv : st.cg.super_variables) parent.push_back(old_cg.variable_to_super[sv.members.front()]);
  MixtureMeanField q(config.K, super_domains(st.cg));
  detail::clamp_evidence(q, st.cg, st.graph, detail::cluster_index(st.clustering), st.clustering);
  AdamState adam;
  detail::inherit(st.q, st.adam, parent, q, adam);
  st.q = std::move(q);
  st.adam = std::move(adam);
  st.splits += 1;
  st.pending_event = "split";
}

struct C2FResult {
  FactorGraph graph;  // fully conditioned
  CompressedGraph cg;
  MixtureMeanField lifted;
  MinimizeResult final;
  RunTrace trace;
  std::vector<std::size_t> cluster_counts;
  std::vector<std::size_t> stage_starts;
  std::size_t splits = 0;
  double epsilon = 0.0;
  bool diverged = false;
};

/// Absorbs the exact continuous evidence, recolors the conditioned graph, maps
/// parameters by each new super variable's first member and minimizes to
/// convergence.
inline C2FResult c2f_finish(C2FState& st, const C2FConfig& config) {
  C2FResult out;
  out.epsilon = config.epsilon;
  out.cluster_counts = st.cluster_counts;
  out.splits = st.splits;
  if (st.diverged) {
    out.trace = st.trace;
    out.diverged = true;
    out.graph = st.graph;
    out.cg = st.cg;
    out.lifted = st.q;
    out.stage_starts = st.stage_starts;
    return out;
  }
  out.graph = condition(st.graph, st.continuous_evidence);
  Coloring col;
  std::tie(col, out.cg) = color_passing(out.graph, init_colors(out.graph, {}, nullptr, config.quantum));
  std::vector<std::size_t> parent;
  for (const auto& sv : out.cg.super_variables)
    parent.push_back(st.cg.variable_to_super[st.graph.index_of(out.graph.variable(sv.members.front()).id)]);
  MixtureMeanField q(config.K, super_domains(out.cg));
  AdamState adam;
  detail::inherit(st.q, st.adam, parent, q, adam);

  st.stage_starts.push_back(st.next_iteration);
  st.cluster_counts.push_back(st.clustering.clusters.size());
  FreeEnergy fe(out.cg, config.spec, q);
  MinimizeConfig mc = config.final;
  mc.throw_on_divergence = false;
  out.final = minimize([&fe](std::span<const double> p, std::vector<double>& g) { return fe(p, g); }, q.pack(), mc,
                       &adam, st.next_iteration, st.clock_ms, "absorb");
  detail::append_trace(st.trace, out.final.trace);
  out.trace = st.trace;
  out.diverged = out.final.diverged;
  out.lifted = fe.unpacked(out.final.params);
  out.cluster_counts = st.cluster_counts;
  out.stage_starts = st.stage_starts;
  return out;
}

inline C2FResult run_c2f(const FactorGraph& graph, const Evidence& evidence, C2FConfig config) {
  auto st = c2f_init(graph, evidence, config);
  while (!st.structurally_converged && st.stage < config.max_stages) c2f_step(st, config);
  return c2f_finish(st, config);
}

}  // namespace lhvi
