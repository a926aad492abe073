#pragma once

// One entry point for fitting a mixture in ground, lifted or coarse-to-fine
// mode.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lhvi/c2f.hpp"
#include "lhvi/graph.hpp"
#include "lhvi/lifting.hpp"
#include "lhvi/mixture.hpp"
#include "lhvi/optimizer.hpp"
#include "lhvi/variational.hpp"

namespace lhvi {

struct FitConfig {
  std::size_t K = 1;
  ObjectiveSpec spec;
  MinimizeConfig minimize;
  std::size_t n_starts = 1;
  std::uint64_t seed = 0;
  double epsilon = 0.0;  // coarse-to-fine only
  std::size_t stage_iters = 50;
  std::size_t max_stages = 100;
  double quantum = 1e-12;
};

struct FitResult {
  FactorGraph graph;  // the conditioned graph q lives on
  CompressedGraph cg;
  MixtureMeanField lifted;
  MixtureMeanField q;  // expanded to ground variables of `graph`
  RunTrace trace;
  double objective = 0.0;
  std::size_t iterations = 0;
  std::string stop_reason;
  bool diverged = false;
  double wall_ms = 0.0;
  std::size_t parameters = 0;
  std::vector<std::size_t> cluster_counts;
  std::vector<std::size_t> stage_starts;
  std::size_t splits = 0;
  double epsilon = 0.0;
  std::size_t best_start = 0;
};

/// Never throws on divergence: the result is flagged and carries the partial trace.
inline FitResult fit(const FactorGraph& graph, const Evidence& evidence, const FitConfig& config) {
  if (config.K < 1) throw Error(ErrorCode::InvalidArgument, "K must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  FitResult out;
  MinimizeConfig mc = config.minimize;
  mc.throw_on_divergence = false;
  mc.seed = derive_seed(config.seed, 2);

  if (config.spec.mode == LiftingMode::CoarseToFine) {
    C2FConfig cc;
    cc.K = config.K;
    cc.spec = config.spec;
    cc.epsilon = config.epsilon;
    cc.stage_iters = config.stage_iters;
    cc.max_stages = config.max_stages;
    cc.final = mc;
    cc.quantum = config.quantum;
    cc.seed = config.seed;
    auto r = run_c2f(graph, evidence, cc);
    out.graph = std::move(r.graph);
    out.cg = std::move(r.cg);
    out.lifted = std::move(r.lifted);
    out.trace = std::move(r.trace);
    out.objective = r.final.objective;
    out.iterations = out.trace.records.empty() ? 0 : out.trace.records.back().iteration;
    out.stop_reason = r.diverged ? "diverged" : r.final.stop_reason;
    out.diverged = r.diverged;
    out.cluster_counts = std::move(r.cluster_counts);
    out.stage_starts = std::move(r.stage_starts);
    out.splits = r.splits;
    out.epsilon = r.epsilon;
  } else {
    out.graph = condition(graph, evidence);
    if (config.spec.mode == LiftingMode::Ground)
      out.cg = identity_compression(out.graph);
    else
      out.cg = color_passing(out.graph, init_colors(out.graph, {}, nullptr, config.quantum)).second;
    const auto domains = super_domains(out.cg);
    FreeEnergy fe(out.cg, config.spec, MixtureMeanField(config.K, domains));
    auto ms = multi_start([&fe](std::span<const double> p, std::vector<double>& g) { return fe(p, g); },
                          [&](std::uint64_t s) { return initialize_mixture(config.K, domains, s).pack(); },
                          config.n_starts, [&] {
                            MinimizeConfig c = mc;
                            c.seed = derive_seed(config.seed, 1);
                            return c;
                          }());
    out.lifted = fe.unpacked(ms.best.params);
    out.trace = std::move(ms.best.trace);
    out.objective = ms.best.objective;
    out.iterations = ms.best.iterations;
    out.stop_reason = ms.best.stop_reason;
    out.diverged = ms.best.diverged;
    out.best_start = ms.best_index;
  }
  out.q = expand(out.lifted, out.cg);
  out.parameters = out.lifted.num_free_parameters();
  out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

inline std::string to_string(LiftingMode m) {
  switch (m) {
    case LiftingMode::Ground: return "ground";
    case LiftingMode::Lifted: return "lifted";
    case LiftingMode::CoarseToFine: return "c2f";
  }
  return "?";
}

inline std::string to_string(EntropyKind e) { return e == EntropyKind::Bethe ? "bethe" : "jensen"; }

}  // namespace lhvi
