#pragma once

// Symmetry detection by color passing, compressed graphs with member counts,
// and one-dimensional k-means clustering of continuous evidence.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lhvi/error.hpp"
#include "lhvi/graph.hpp"

namespace lhvi {

/// Node colors indexed by variable / factor index of the graph.
struct Coloring {
  std::vector<int> variable_colors;
  std::vector<int> factor_colors;
  int round = 0;
  /// (variable classes, factor classes) after initialization and each round.
  std::vector<std::pair<std::size_t, std::size_t>> history;

  std::size_t num_variable_colors() const { return count(variable_colors); }
  std::size_t num_factor_colors() const { return count(factor_colors); }

  /// Same partitions (color ids may differ).
  bool same_partition(const Coloring& other) const {
    return canonical(variable_colors) == canonical(other.variable_colors) &&
           canonical(factor_colors) == canonical(other.factor_colors);
  }

  static std::size_t count(const std::vector<int>& colors) {
    if (colors.empty()) return 0;
    std::vector<int> c = colors;
    std::sort(c.begin(), c.end());
    return static_cast<std::size_t>(std::unique(c.begin(), c.end()) - c.begin());
  }

  /// Relabels colors densely in first-seen order.
  static std::vector<int> canonical(const std::vector<int>& colors) {
    std::map<int, int> ids;
    std::vector<int> out;
    out.reserve(colors.size());
    for (int c : colors) out.push_back(ids.emplace(c, static_cast<int>(ids.size())).first->second);
    return out;
  }
};

struct EvidenceCluster {
  std::vector<std::string> members;
  std::vector<double> values;  // parallel to members
  double mean = 0.0;
  double variance = 0.0;  // population variance of values

  void recompute() {
    mean = 0.0;
    variance = 0.0;
    if (values.empty()) return;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    for (double v : values) variance += (v - mean) * (v - mean);
    variance /= static_cast<double>(values.size());
  }

  std::size_t distinct_values() const {
    std::vector<double> v = values;
    std::sort(v.begin(), v.end());
    return static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
  }
};

struct EvidenceClustering {
  std::vector<EvidenceCluster> clusters;
  double threshold = 1.0;  // split clusters whose variance exceeds this

  std::optional<std::size_t> cluster_of(const std::string& id) const {
    for (std::size_t c = 0; c < clusters.size(); ++c)
      for (const auto& m : clusters[c].members)
        if (m == id) return c;
    return std::nullopt;
  }
};

// ---------------------------------------------------------------------------
// Color passing

namespace detail {

template <typename Sig>
std::vector<int> dense_ids(const std::vector<Sig>& sigs) {
  std::map<Sig, int> ids;
  std::vector<int> out;
  out.reserve(sigs.size());
  for (const auto& s : sigs) out.push_back(ids.emplace(s, static_cast<int>(ids.size())).first->second);
  return out;
}

inline std::string domain_signature(const Domain& d) {
  if (d.is_discrete()) return "d" + std::to_string(d.cardinality);
  std::string s = "c";
  append_quantized(s, d.lower, 1e-12);
  append_quantized(s, d.upper, 1e-12);
  return s;
}

}  // namespace detail

/// Initial colors: variables by domain and evidence status (exact discrete
/// value, evidence cluster, or exact continuous value when no clustering is
/// given); factors by potential signature.
inline Coloring init_colors(const FactorGraph& graph, const Evidence& evidence,
                            const EvidenceClustering* clustering = nullptr, double quantum = 1e-12) {
  validate_evidence(graph, evidence);
  std::map<std::string, std::size_t> cluster_of;
  if (clustering) {
    for (std::size_t c = 0; c < clustering->clusters.size(); ++c)
      for (const auto& m : clustering->clusters[c].members) {
        const auto idx = graph.find(m);
        if (!idx || graph.variable(*idx).domain.is_discrete() || !evidence.contains(m) ||
            !cluster_of.emplace(m, c).second)
          throw Error(ErrorCode::ClusterCoverageError,
                      "clustering member '" + m + "' is not a distinct continuous evidence variable");
      }
    for (const auto& [id, v] : evidence.entries)
      if (!graph.variable(graph.index_of(id)).domain.is_discrete() && !cluster_of.count(id))
        throw Error(ErrorCode::ClusterCoverageError, "continuous evidence '" + id + "' is not clustered");
  }

  std::vector<std::string> vsig;
  vsig.reserve(graph.num_variables());
  for (const auto& v : graph.variables()) {
    std::string s = detail::domain_signature(v.domain);
    auto it = evidence.entries.find(v.id);
    if (it == evidence.entries.end()) {
      s += "|u";
    } else if (v.domain.is_discrete()) {
      s += "|o" + std::to_string(static_cast<long long>(it->second));
    } else if (clustering) {
      s += "|e" + std::to_string(cluster_of.at(v.id));
    } else {
      s += "|x";
      detail::append_quantized(s, it->second, quantum);
    }
    vsig.push_back(std::move(s));
  }
  std::vector<std::string> fsig;
  fsig.reserve(graph.num_factors());
  for (const auto& f : graph.factors()) fsig.push_back(f.potential.signature(quantum));

  Coloring c;
  c.variable_colors = detail::dense_ids(vsig);
  c.factor_colors = detail::dense_ids(fsig);
  c.history.emplace_back(c.num_variable_colors(), c.num_factor_colors());
  return c;
}

struct SuperVariable {
  std::vector<std::size_t> members;  // ground variable indices
  std::size_t count = 0;
  Domain domain;
  std::size_t ground_degree = 0;
};

struct SuperFactor {
  std::vector<std::size_t> members;  // ground factor indices
  std::size_t count = 0;
  std::string signature;
  std::vector<std::size_t> scope;  // super-variable index per position
  Potential potential;             // shared by all members
};

struct CompressedGraph {
  std::vector<SuperVariable> super_variables;
  std::vector<SuperFactor> super_factors;
  std::vector<std::size_t> variable_to_super;  // ground variable -> super variable
  Coloring provenance;
  double log_constant = 0.0;
  std::size_t ground_variables = 0;
  std::size_t ground_factors = 0;

  double compression_ratio() const {
    const double ground = static_cast<double>(ground_variables + ground_factors);
    const double lifted = static_cast<double>(super_variables.size() + super_factors.size());
    return lifted > 0 ? ground / lifted : 1.0;
  }
};

/// Builds the compressed graph induced by a stable coloring.
inline CompressedGraph compress(const FactorGraph& graph, const Coloring& coloring) {
  CompressedGraph cg;
  cg.provenance = coloring;
  cg.log_constant = graph.log_constant();
  cg.ground_variables = graph.num_variables();
  cg.ground_factors = graph.num_factors();

  const auto vcol = Coloring::canonical(coloring.variable_colors);
  const auto fcol = Coloring::canonical(coloring.factor_colors);
  cg.variable_to_super.resize(graph.num_variables());
  for (std::size_t i = 0; i < graph.num_variables(); ++i) {
    const auto s = static_cast<std::size_t>(vcol[i]);
    if (s == cg.super_variables.size())
      cg.super_variables.push_back({{}, 0, graph.variable(i).domain, graph.degree(i)});
    auto& sv = cg.super_variables[s];
    if (!(sv.domain == graph.variable(i).domain) || sv.ground_degree != graph.degree(i))
      throw Error(ErrorCode::InvalidArgument, "coloring is not stable: super variable mixes domains/degrees");
    sv.members.push_back(i);
    sv.count += 1;
    cg.variable_to_super[i] = s;
  }
  for (std::size_t c = 0; c < graph.num_factors(); ++c) {
    const auto s = static_cast<std::size_t>(fcol[c]);
    std::vector<std::size_t> scope;
    for (std::size_t v : graph.scope(c)) scope.push_back(cg.variable_to_super[v]);
    if (s == cg.super_factors.size())
      cg.super_factors.push_back({{}, 0, graph.factor(c).potential.signature(), scope, graph.factor(c).potential});
    auto& sf = cg.super_factors[s];
    if (sf.scope != scope)
      throw Error(ErrorCode::InvalidArgument, "coloring is not stable: super factor scopes disagree");
    sf.members.push_back(c);
    sf.count += 1;
  }
  return cg;
}

/// Every variable and factor in its own class.
inline CompressedGraph identity_compression(const FactorGraph& graph) {
  Coloring c;
  for (std::size_t i = 0; i < graph.num_variables(); ++i) c.variable_colors.push_back(static_cast<int>(i));
  for (std::size_t f = 0; f < graph.num_factors(); ++f) c.factor_colors.push_back(static_cast<int>(f));
  c.history.emplace_back(graph.num_variables(), graph.num_factors());
  return compress(graph, c);
}

/// Alternates factor updates (own color + ordered scope colors) and variable
/// updates (own color + sorted multiset of (factor color, position)) until no
/// class splits or max_rounds is reached.
inline std::pair<Coloring, CompressedGraph> color_passing(const FactorGraph& graph, const Coloring& init,
                                                          int max_rounds = 1000) {
  if (init.variable_colors.size() != graph.num_variables() || init.factor_colors.size() != graph.num_factors())
    throw Error(ErrorCode::InvalidArgument, "initial coloring does not cover the graph");

  Coloring c = init;
  c.variable_colors = Coloring::canonical(c.variable_colors);
  c.factor_colors = Coloring::canonical(c.factor_colors);
  if (c.history.empty()) c.history.emplace_back(c.num_variable_colors(), c.num_factor_colors());
  std::size_t nv = c.num_variable_colors();
  std::size_t nf = c.num_factor_colors();

  for (int r = 0; r < max_rounds; ++r) {
    std::vector<std::vector<int>> fsig(graph.num_factors());
    for (std::size_t f = 0; f < graph.num_factors(); ++f) {
      auto& s = fsig[f];
      s.push_back(c.factor_colors[f]);
      for (std::size_t v : graph.scope(f)) s.push_back(c.variable_colors[v]);
    }
    c.factor_colors = detail::dense_ids(fsig);

    std::vector<std::vector<int>> vsig(graph.num_variables());
    for (std::size_t i = 0; i < graph.num_variables(); ++i) {
      std::vector<std::pair<int, int>> inc;
      for (const auto& a : graph.adjacency(i))
        inc.emplace_back(c.factor_colors[a.factor], static_cast<int>(a.position));
      std::sort(inc.begin(), inc.end());
      auto& s = vsig[i];
      s.push_back(c.variable_colors[i]);
      for (const auto& [fc, p] : inc) {
        s.push_back(fc);
        s.push_back(p);
      }
    }
    c.variable_colors = detail::dense_ids(vsig);

    const std::size_t nv2 = c.num_variable_colors();
    const std::size_t nf2 = c.num_factor_colors();
    c.round += 1;
    c.history.emplace_back(nv2, nf2);
    if (nv2 == nv && nf2 == nf) break;
    nv = nv2;
    nf = nf2;
  }
  auto cg = compress(graph, c);
  return {c, std::move(cg)};
}

/// Continues color passing from a previous stable coloring after some
/// variables received new colors. New colors must only split existing
/// classes: a recolored variable either keeps its own previous color or takes
/// a color not used by any other previous class.
inline std::pair<Coloring, CompressedGraph> resume_color_passing(const FactorGraph& graph, const Coloring& previous,
                                                                 const std::map<std::size_t, int>& recolored,
                                                                 int max_rounds = 1000) {
  if (recolored.empty()) return {previous, compress(graph, previous)};
  std::map<int, int> fresh_parent;  // new color -> previous color of its members
  for (const auto& [v, col] : recolored) {
    if (v >= graph.num_variables()) throw Error(ErrorCode::UnknownVariable, "recolored variable out of range");
    const int prev = previous.variable_colors[v];
    if (col == prev) continue;
    const bool used = std::find(previous.variable_colors.begin(), previous.variable_colors.end(), col) !=
                      previous.variable_colors.end();
    if (used)
      throw Error(ErrorCode::NonRefinementError,
                  "color " + std::to_string(col) + " already belongs to another class");
    auto [it, inserted] = fresh_parent.emplace(col, prev);
    if (!inserted && it->second != prev)
      throw Error(ErrorCode::NonRefinementError,
                  "color " + std::to_string(col) + " would merge variables from different classes");
  }
  Coloring init = previous;
  for (const auto& [v, col] : recolored) init.variable_colors[v] = col;
  init.round = previous.round;
  init.history.emplace_back(Coloring::count(init.variable_colors), init.num_factor_colors());
  return color_passing(graph, init, max_rounds);
}

// ---------------------------------------------------------------------------
// k-means on scalars

struct KMeansCluster {
  std::vector<std::size_t> indices;  // into the input values
  double mean = 0.0;
  double variance = 0.0;
};

struct KMeansResult {
  std::vector<KMeansCluster> clusters;  // sorted by mean, empty clusters dropped
  std::vector<double> wcss_trace;       // within-cluster sum of squares per Lloyd iteration
  double wcss = 0.0;
};

namespace detail {

inline KMeansResult lloyd_1d(const std::vector<double>& values, std::vector<double> centers, int max_iter) {
  KMeansResult res;
  const std::size_t n = values.size();
  std::vector<std::size_t> assign(n, 0);
  for (int it = 0; it < max_iter; ++it) {
    std::sort(centers.begin(), centers.end());
    bool changed = it == 0;
    double wcss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < centers.size(); ++c) {
        const double d = (values[i] - centers[c]) * (values[i] - centers[c]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (assign[i] != best) changed = true;
      assign[i] = best;
      wcss += bd;
    }
    res.wcss_trace.push_back(wcss);
    std::vector<double> sum(centers.size(), 0.0);
    std::vector<std::size_t> cnt(centers.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[assign[i]] += values[i];
      cnt[assign[i]] += 1;
    }
    for (std::size_t c = 0; c < centers.size(); ++c)
      if (cnt[c] > 0) centers[c] = sum[c] / static_cast<double>(cnt[c]);
    if (!changed) break;
  }
  std::vector<KMeansCluster> clusters(centers.size());
  for (std::size_t i = 0; i < n; ++i) clusters[assign[i]].indices.push_back(i);
  for (auto& c : clusters) {
    if (c.indices.empty()) continue;
    for (std::size_t i : c.indices) c.mean += values[i];
    c.mean /= static_cast<double>(c.indices.size());
    for (std::size_t i : c.indices) c.variance += (values[i] - c.mean) * (values[i] - c.mean);
    res.wcss += c.variance;
    c.variance /= static_cast<double>(c.indices.size());
    res.clusters.push_back(std::move(c));
  }
  std::sort(res.clusters.begin(), res.clusters.end(),
            [](const KMeansCluster& a, const KMeansCluster& b) { return a.mean < b.mean; });
  return res;
}

}  // namespace detail

/// Lloyd's algorithm with seeded k-means++ initialization; the best of
/// `restarts` seeded runs (lowest WCSS) is returned.
inline KMeansResult kmeans_1d(const std::vector<double>& values, int k, std::uint64_t seed = 0, int restarts = 5,
                              int max_iter = 300) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "kmeans_1d needs values");
  std::mt19937_64 rng(seed);
  KMeansResult best;
  bool have = false;
  for (int r = 0; r < std::max(1, restarts); ++r) {
    std::vector<double> centers;
    std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
    centers.push_back(values[pick(rng)]);
    while (static_cast<int>(centers.size()) < k) {
      std::vector<double> d2(values.size());
      double total = 0.0;
      for (std::size_t i = 0; i < values.size(); ++i) {
        double m = std::numeric_limits<double>::infinity();
        for (double c : centers) m = std::min(m, (values[i] - c) * (values[i] - c));
        d2[i] = m;
        total += m;
      }
      if (total <= 0.0) break;  // fewer distinct values than k
      std::uniform_real_distribution<double> u(0.0, total);
      double t = u(rng);
      std::size_t chosen = values.size() - 1;
      for (std::size_t i = 0; i < values.size(); ++i) {
        t -= d2[i];
        if (t <= 0.0 && d2[i] > 0.0) {
          chosen = i;
          break;
        }
      }
      centers.push_back(values[chosen]);
    }
    auto res = detail::lloyd_1d(values, std::move(centers), max_iter);
    if (!have || res.wcss < best.wcss - 1e-12) {
      best = std::move(res);
      have = true;
    }
  }
  return best;
}

/// Splits an evidence cluster in two with 2-means.
inline std::pair<EvidenceCluster, EvidenceCluster> split_cluster(const EvidenceCluster& cluster,
                                                                 std::uint64_t seed = 0) {
  if (cluster.distinct_values() < 2)
    throw Error(ErrorCode::Unsplittable, "cluster has a single distinct value");
  auto res = kmeans_1d(cluster.values, 2, seed);
  if (res.clusters.size() != 2) throw Error(ErrorCode::Unsplittable, "2-means produced an empty child");
  std::pair<EvidenceCluster, EvidenceCluster> out;
  for (int side = 0; side < 2; ++side) {
    auto& child = side == 0 ? out.first : out.second;
    for (std::size_t i : res.clusters[side].indices) {
      child.members.push_back(cluster.members[i]);
      child.values.push_back(cluster.values[i]);
    }
    child.recompute();
  }
  return out;
}

/// All continuous evidence of the graph in a single cluster.
inline EvidenceClustering single_cluster(const FactorGraph& graph, const Evidence& evidence, double threshold) {
  EvidenceClustering ec;
  ec.threshold = threshold;
  EvidenceCluster c;
  for (const auto& [id, v] : evidence.entries) {
    if (graph.variable(graph.index_of(id)).domain.is_discrete()) continue;
    c.members.push_back(id);
    c.values.push_back(v);
  }
  if (!c.members.empty()) {
    c.recompute();
    ec.clusters.push_back(std::move(c));
  }
  return ec;
}

}  // namespace lhvi
