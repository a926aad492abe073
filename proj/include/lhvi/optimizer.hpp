#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "lhvi/error.hpp"

namespace lhvi {

struct AdamConfig {
  double lr = 0.2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::size_t t = 0;
  std::vector<double> m;
  std::vector<double> v;
  AdamConfig config;

  explicit AdamState(std::size_t n = 0, AdamConfig cfg = {}) : m(n, 0.0), v(n, 0.0), config(cfg) {}
};

/// Bias-corrected Adam update in place.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (params.size() != grads.size()) throw Error(ErrorCode::InvalidArgument, "parameter/gradient size mismatch");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  for (double g : grads)
    if (!std::isfinite(g)) throw Error(ErrorCode::NonFiniteGradient, "gradient has a non-finite entry");
  const auto& c = state.config;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * grads[i];
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
}

struct TraceRecord {
  std::size_t iteration = 0;
  double time_ms = 0.0;
  double objective = 0.0;
  double grad_norm = 0.0;
  std::string event;
};

struct RunTrace {
  std::vector<TraceRecord> records;

  void add(TraceRecord r) {
    if (!records.empty() && r.iteration <= records.back().iteration)
      throw Error(ErrorCode::InvalidArgument, "trace iterations must be strictly increasing");
    records.push_back(std::move(r));
  }

  void write_csv(std::ostream& out) const {
    out << "iteration,time_ms,objective,grad_norm,event\n";
    out.precision(17);
    for (const auto& r : records)
      out << r.iteration << ',' << r.time_ms << ',' << r.objective << ',' << r.grad_norm << ',' << r.event << '\n';
  }

  std::string csv() const {
    std::ostringstream s;
    write_csv(s);
    return s.str();
  }
};

/// Value and gradient at the given parameters; grad is resized by the callee.
using ObjectiveFn = std::function<double(std::span<const double>, std::vector<double>&)>;

struct MinimizeConfig {
  std::size_t max_iters = 2000;
  double grad_tol = 1e-5;
  double obj_tol = 1e-8;
  std::size_t window = 10;
  std::uint64_t seed = 0;
  AdamConfig adam;
  bool keep_best = true;             // return best-seen rather than last parameters
  bool throw_on_divergence = true;
};

struct MinimizeResult {
  std::vector<double> params;
  double objective = 0.0;
  std::size_t iterations = 0;
  std::string stop_reason;
  bool diverged = false;
  RunTrace trace;
  AdamState state;
};

// Scaled so huge finite gradients do not overflow to inf.
inline double l2_norm(std::span<const double> v) {
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  if (scale == 0.0 || !std::isfinite(scale)) return scale;
  double s = 0.0;
  for (double x : v) s += (x / scale) * (x / scale);
  return scale * std::sqrt(s);
}

/// Adam minimization with gradient-norm, windowed relative-change and
/// iteration-budget stopping rules. `resume` continues an existing Adam state;
/// `first_iteration` / `clock_offset_ms` let callers splice several runs into
/// one trace.
inline MinimizeResult minimize(const ObjectiveFn& objective, std::vector<double> init, const MinimizeConfig& config,
                               const AdamState* resume = nullptr, std::size_t first_iteration = 0,
                               double clock_offset_ms = 0.0, std::string first_event = {}) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  auto elapsed = [&] {
    return clock_offset_ms + std::chrono::duration<double, std::milli>(clock::now() - start).count();
  };

  MinimizeResult res;
  res.state = resume ? *resume : AdamState(init.size(), config.adam);
  if (!resume) res.state.config = config.adam;

  std::vector<double> x = std::move(init);
  std::vector<double> g;
  double f = objective(x, g);
  auto diverge = [&](const std::string& why) {
    res.diverged = true;
    res.stop_reason = "diverged";
    if (res.params.empty()) res.params = x;
    if (config.throw_on_divergence) throw Error(ErrorCode::DivergenceDetected, why);
    return res;
  };
  res.trace.add({first_iteration, elapsed(), f, l2_norm(g), std::move(first_event)});
  if (!std::isfinite(f)) return diverge("objective is not finite at the initial point");

  res.params = x;
  res.objective = f;
  std::vector<double> history{f};
  std::size_t it = 0;
  res.stop_reason = "max_iters";
  while (it < config.max_iters) {
    if (l2_norm(g) < config.grad_tol) {
      res.stop_reason = "grad_tol";
      break;
    }
    try {
      adam_step(x, g, res.state);
    } catch (const Error&) {
      return diverge("non-finite gradient");
    }
    ++it;
    f = objective(x, g);
    res.trace.add({first_iteration + it, elapsed(), f, l2_norm(g), {}});
    if (!std::isfinite(f)) return diverge("objective became non-finite at iteration " + std::to_string(it));
    if (!config.keep_best || f < res.objective) {
      res.objective = f;
      res.params = x;
    }
    history.push_back(f);
    if (history.size() > config.window) {
      const double old = history[history.size() - 1 - config.window];
      if (std::abs(f - old) / std::max(1.0, std::abs(f)) < config.obj_tol) {
        res.stop_reason = "obj_tol";
        break;
      }
    }
  }
  res.iterations = it;
  return res;
}

/// SplitMix64 step, used to derive independent sub-seeds from one master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct MultiStartResult {
  MinimizeResult best;
  std::size_t best_index = 0;
  std::vector<double> final_objectives;
};

/// Best of n_starts minimizations; start i is initialized from
/// init(derive_seed(config.seed, i)).
inline MultiStartResult multi_start(const ObjectiveFn& objective,
                                    const std::function<std::vector<double>(std::uint64_t)>& init,
                                    std::size_t n_starts, const MinimizeConfig& config) {
  if (n_starts < 1) throw Error(ErrorCode::InvalidArgument, "n_starts must be >= 1");
  MultiStartResult out;
  for (std::size_t i = 0; i < n_starts; ++i) {
    auto r = minimize(objective, init(derive_seed(config.seed, i)), config);
    out.final_objectives.push_back(r.objective);
    if (i == 0 || r.objective < out.best.objective) {
      out.best = std::move(r);
      out.best_index = i;
    }
  }
  return out;
}

}  // namespace lhvi
