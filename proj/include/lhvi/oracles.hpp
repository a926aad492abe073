#pragma once

// Exact references for small models: closed-form Gaussian inference and
// brute-force enumeration/grid integration for hybrid models.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "lhvi/error.hpp"
#include "lhvi/graph.hpp"

namespace lhvi {

struct GaussianGroundTruth {
  std::vector<std::string> ids;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  double log_z = 0.0;

  double variance(std::size_t i) const { return covariance(i, i); }
};

/// Assembles sum_c log psi_c = -1/2 x'Jx + h'x + const and solves it exactly.
inline GaussianGroundTruth gaussian_exact(const FactorGraph& graph) {
  const std::size_t d = graph.num_variables();
  for (const auto& v : graph.variables())
    if (v.domain.is_discrete() || std::isfinite(v.domain.lower) || std::isfinite(v.domain.upper))
      throw Error(ErrorCode::NotGaussian, "variable '" + v.id + "' is not an unbounded continuous variable");

  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(d);
  double c0 = graph.log_constant();
  for (std::size_t f = 0; f < graph.num_factors(); ++f) {
    const auto& p = graph.factor(f).potential;
    const auto& sc = graph.scope(f);
    QuadraticPotential q;
    switch (p.kind()) {
      case PotentialKind::Quadratic:
        q = std::get<QuadraticPotential>(p.get());
        break;
      case PotentialKind::LinearGaussian:
        q = std::get<LinearGaussianPotential>(p.get()).as_quadratic();
        break;
      case PotentialKind::Table:
        if (p.arity() == 0) {
          c0 += p.log_value({});
          continue;
        }
        [[fallthrough]];
      default:
        throw Error(ErrorCode::NotGaussian, "factor '" + graph.factor(f).id + "' is not Gaussian");
    }
    for (std::size_t a = 0; a < sc.size(); ++a) {
      h(sc[a]) += q.b()[a];
      for (std::size_t b = 0; b < sc.size(); ++b) J(sc[a], sc[b]) += q.A()[a][b] + q.A()[b][a];
    }
    c0 += q.c();
  }
  Eigen::LLT<Eigen::MatrixXd> llt(J);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::NotPositiveDefinite, "precision matrix is not PD");
  const Eigen::MatrixXd L = llt.matrixL();
  double logdet = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    if (!(L(i, i) > 0.0)) throw Error(ErrorCode::NotPositiveDefinite, "precision matrix is not PD");
    logdet += 2.0 * std::log(L(i, i));
  }
  GaussianGroundTruth gt;
  for (const auto& v : graph.variables()) gt.ids.push_back(v.id);
  gt.mean = llt.solve(h);
  gt.covariance = llt.solve(Eigen::MatrixXd::Identity(d, d));
  gt.log_z = 0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) - logdet + h.dot(gt.mean)) + c0;
  return gt;
}

struct GridSpec {
  std::size_t points = 2001;  // per continuous dimension
  double bound = 30.0;        // unbounded dimensions use [-bound, bound]
  bool check_integrable = true;
  double integrable_tol = 1e-3;
  std::size_t max_configurations = std::size_t{1} << 20;
  std::size_t max_continuous = 4;
  std::size_t max_evaluations = std::size_t{1} << 32;
  int threads = 1;
};

struct ExactHybridResult {
  double log_z = 0.0;
  double log_z_outer = 0.0;  // on the doubled extent (integrability check)
  std::vector<bool> discrete;
  std::vector<std::vector<double>> probabilities;  // discrete variables
  std::vector<std::vector<double>> grid;           // continuous variables: grid locations
  std::vector<std::vector<double>> density;        // continuous variables: normalized density on grid
  std::vector<double> mean;
  std::vector<double> variance;
  std::vector<double> map;  // best grid point
  double map_log_score = -kInf;
};

namespace detail {

struct HybridAccumulator {
  double ref = -kInf;  // accumulators hold sum exp(log f - ref)
  double inner = 0.0;
  double outer = 0.0;
  std::vector<std::vector<double>> disc;  // [var][state]
  std::vector<std::vector<double>> cont;  // [dim][inner grid index]
  std::vector<double> best_x;
  double best = -kInf;

  void rescale(double new_ref) {
    const double s = ref == -kInf ? 0.0 : std::exp(ref - new_ref);
    inner *= s;
    outer *= s;
    for (auto& v : disc)
      for (auto& x : v) x *= s;
    for (auto& v : cont)
      for (auto& x : v) x *= s;
    ref = new_ref;
  }
};

}  // namespace detail

/// Enumerates discrete configurations and integrates the continuous slice of
/// each by the trapezoid rule on a tensor grid.
inline ExactHybridResult brute_force_hybrid(const FactorGraph& graph, const GridSpec& spec = {}) {
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  const std::size_t n = graph.num_variables();
  std::vector<std::size_t> dvars, cvars;
  std::vector<std::size_t> cdim(n, kNone);
  for (std::size_t i = 0; i < n; ++i) {
    if (graph.variable(i).domain.is_discrete()) {
      dvars.push_back(i);
    } else {
      cdim[i] = cvars.size();
      cvars.push_back(i);
    }
  }
  if (cvars.size() > spec.max_continuous)
    throw Error(ErrorCode::TooLarge, std::to_string(cvars.size()) + " continuous dimensions exceed the limit");
  double nconf_d = 1.0;
  for (std::size_t v : dvars) nconf_d *= graph.variable(v).domain.cardinality;
  if (nconf_d > static_cast<double>(spec.max_configurations))
    throw Error(ErrorCode::TooLarge, "too many discrete configurations");
  const auto nconf = static_cast<std::size_t>(nconf_d);
  if (spec.points < 2) throw Error(ErrorCode::InvalidArgument, "grid needs at least 2 points");

  // Per dimension: outer grid (doubled extent for unbounded dims, same spacing)
  // and trapezoid weights on the inner and outer extents.
  const std::size_t dc = cvars.size();
  std::vector<std::vector<double>> xs(dc), w_in(dc), w_out(dc);
  std::vector<std::size_t> inner_begin(dc), inner_len(dc, spec.points);
  bool any_unbounded = false;
  for (std::size_t d = 0; d < dc; ++d) {
    const auto& dom = graph.variable(cvars[d]).domain;
    const double lo = std::isfinite(dom.lower) ? dom.lower : -spec.bound;
    const double hi = std::isfinite(dom.upper) ? dom.upper : spec.bound;
    const double step = (hi - lo) / static_cast<double>(spec.points - 1);
    const bool ext_lo = spec.check_integrable && !std::isfinite(dom.lower);
    const bool ext_hi = spec.check_integrable && !std::isfinite(dom.upper);
    any_unbounded = any_unbounded || ext_lo || ext_hi;
    const std::size_t pad_lo = ext_lo ? (spec.points - 1) / 2 : 0;
    const std::size_t pad_hi = ext_hi ? (spec.points - 1) / 2 : 0;
    const std::size_t total = pad_lo + spec.points + pad_hi;
    inner_begin[d] = pad_lo;
    xs[d].resize(total);
    w_in[d].assign(total, 0.0);
    w_out[d].assign(total, step);
    w_out[d].front() = w_out[d].back() = 0.5 * step;
    for (std::size_t g = 0; g < total; ++g) {
      xs[d][g] = lo + (static_cast<double>(g) - static_cast<double>(pad_lo)) * step;
      if (g >= pad_lo && g < pad_lo + spec.points) w_in[d][g] = step;
    }
    w_in[d][pad_lo] = w_in[d][pad_lo + spec.points - 1] = 0.5 * step;
    xs[d][pad_lo] = lo;
    xs[d][pad_lo + spec.points - 1] = hi;
  }
  double evals = nconf_d;
  for (std::size_t d = 0; d < dc; ++d) evals *= static_cast<double>(xs[d].size());
  if (evals > static_cast<double>(spec.max_evaluations))
    throw Error(ErrorCode::TooLarge, "grid evaluation budget exceeded; use a coarser grid");

  // Factor classes: purely discrete, one continuous dimension, several.
  struct FactorPlan {
    std::size_t f;
    std::vector<std::size_t> dims;  // distinct continuous dims in scope
  };
  std::vector<FactorPlan> plans;
  for (std::size_t f = 0; f < graph.num_factors(); ++f) {
    FactorPlan p{f, {}};
    for (std::size_t v : graph.scope(f))
      if (cdim[v] != kNone) p.dims.push_back(cdim[v]);
    plans.push_back(std::move(p));
  }

  auto run_config = [&](std::size_t conf, detail::HybridAccumulator& acc) {
    std::vector<double> x(n, 0.0);
    std::size_t rem = conf;
    for (std::size_t j = dvars.size(); j-- > 0;) {
      const auto card = static_cast<std::size_t>(graph.variable(dvars[j]).domain.cardinality);
      x[dvars[j]] = static_cast<double>(rem % card);
      rem /= card;
    }
    double constant = 0.0;
    std::vector<std::vector<double>> unary(dc);
    for (std::size_t d = 0; d < dc; ++d) unary[d].assign(xs[d].size(), 0.0);
    std::vector<std::size_t> multi;
    std::vector<double> xc;
    for (std::size_t pi = 0; pi < plans.size(); ++pi) {
      const auto& p = plans[pi];
      const auto& sc = graph.scope(p.f);
      const auto& pot = graph.factor(p.f).potential;
      if (p.dims.empty()) {
        xc.clear();
        for (std::size_t v : sc) xc.push_back(x[v]);
        constant += pot.log_value(xc);
      } else if (p.dims.size() == 1) {
        const std::size_t d = p.dims[0];
        for (std::size_t g = 0; g < xs[d].size(); ++g) {
          xc.clear();
          for (std::size_t v : sc) xc.push_back(cdim[v] == d ? xs[d][g] : x[v]);
          unary[d][g] += pot.log_value(xc);
        }
      } else {
        multi.push_back(pi);
      }
    }
    if (constant == -kInf) return;

    std::vector<std::size_t> idx(dc, 0);
    std::size_t npts = 1;
    for (std::size_t d = 0; d < dc; ++d) npts *= xs[d].size();
    for (std::size_t pt = 0; pt < npts; ++pt) {
      double lv = constant;
      double wi = 1.0, wo = 1.0;
      for (std::size_t d = 0; d < dc; ++d) {
        x[cvars[d]] = xs[d][idx[d]];
        lv += unary[d][idx[d]];
        wi *= w_in[d][idx[d]];
        wo *= w_out[d][idx[d]];
      }
      for (std::size_t pi : multi) {
        if (lv == -kInf) break;
        xc.clear();
        for (std::size_t v : graph.scope(plans[pi].f)) xc.push_back(x[v]);
        lv += graph.factor(plans[pi].f).potential.log_value(xc);
      }
      if (std::isnan(lv)) throw Error(ErrorCode::NonFiniteIntegrand, "log density is NaN on the grid");
      if (lv > -kInf) {
        if (lv > acc.ref + 30.0 || acc.ref == -kInf) acc.rescale(lv);
        const double e = std::exp(lv - acc.ref);
        acc.outer += wo * e;
        if (wi > 0.0) {
          const double m = wi * e;
          acc.inner += m;
          for (std::size_t j = 0; j < dvars.size(); ++j) acc.disc[j][static_cast<std::size_t>(x[dvars[j]])] += m;
          for (std::size_t d = 0; d < dc; ++d) {
            // marginal density at grid point: integrate the other dims only
            const double wd = w_in[d][idx[d]];
            acc.cont[d][idx[d] - inner_begin[d]] += m / wd;
          }
        }
        if (lv > acc.best) {
          acc.best = lv;
          acc.best_x = x;
        }
      }
      for (std::size_t d = dc; d-- > 0;) {
        if (++idx[d] < xs[d].size()) break;
        idx[d] = 0;
      }
    }
  };

  auto fresh = [&] {
    detail::HybridAccumulator a;
    for (std::size_t v : dvars) a.disc.emplace_back(graph.variable(v).domain.cardinality, 0.0);
    for (std::size_t d = 0; d < dc; ++d) a.cont.emplace_back(inner_len[d], 0.0);
    return a;
  };

  // Threads own contiguous configuration blocks; blocks are merged in order.
  const int nthreads = std::max(1, std::min<int>(spec.threads, static_cast<int>(nconf)));
  std::vector<detail::HybridAccumulator> accs;
  for (int t = 0; t < nthreads; ++t) accs.push_back(fresh());
  std::vector<std::exception_ptr> errors(nthreads);
  auto work = [&](int t) {
    try {
      const std::size_t b = nconf * t / nthreads, e = nconf * (t + 1) / nthreads;
      for (std::size_t c = b; c < e; ++c) run_config(c, accs[t]);
    } catch (...) {
      errors[t] = std::current_exception();
    }
  };
  if (nthreads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  detail::HybridAccumulator total = fresh();
  for (auto& a : accs) {
    if (a.ref == -kInf) continue;
    const double r = std::max(total.ref, a.ref);
    total.rescale(r);
    a.rescale(r);
    total.inner += a.inner;
    total.outer += a.outer;
    for (std::size_t j = 0; j < total.disc.size(); ++j)
      for (std::size_t s = 0; s < total.disc[j].size(); ++s) total.disc[j][s] += a.disc[j][s];
    for (std::size_t d = 0; d < dc; ++d)
      for (std::size_t g = 0; g < inner_len[d]; ++g) total.cont[d][g] += a.cont[d][g];
    if (a.best > total.best) {
      total.best = a.best;
      total.best_x = a.best_x;
    }
  }
  if (!(total.inner > 0.0)) throw Error(ErrorCode::NonIntegrable, "model has zero mass on the grid");

  ExactHybridResult res;
  res.log_z = total.ref + std::log(total.inner) + graph.log_constant();
  res.log_z_outer = total.ref + std::log(total.outer) + graph.log_constant();
  if (spec.check_integrable && any_unbounded && std::abs(total.outer - total.inner) / total.inner >= spec.integrable_tol)
    throw Error(ErrorCode::NonIntegrable, "mass changed by more than the tolerance when the grid bound doubled");

  res.discrete.resize(n);
  res.probabilities.resize(n);
  res.grid.resize(n);
  res.density.resize(n);
  res.mean.assign(n, 0.0);
  res.variance.assign(n, 0.0);
  for (std::size_t j = 0; j < dvars.size(); ++j) {
    const std::size_t v = dvars[j];
    res.discrete[v] = true;
    for (double m : total.disc[j]) res.probabilities[v].push_back(m / total.inner);
    for (std::size_t s = 0; s < res.probabilities[v].size(); ++s) res.mean[v] += s * res.probabilities[v][s];
    for (std::size_t s = 0; s < res.probabilities[v].size(); ++s)
      res.variance[v] += res.probabilities[v][s] * (s - res.mean[v]) * (s - res.mean[v]);
  }
  for (std::size_t d = 0; d < dc; ++d) {
    const std::size_t v = cvars[d];
    auto& gx = res.grid[v];
    auto& pd = res.density[v];
    for (std::size_t g = 0; g < inner_len[d]; ++g) {
      gx.push_back(xs[d][inner_begin[d] + g]);
      pd.push_back(total.cont[d][g] / total.inner);
    }
    for (std::size_t g = 0; g < gx.size(); ++g) res.mean[v] += w_in[d][inner_begin[d] + g] * pd[g] * gx[g];
    for (std::size_t g = 0; g < gx.size(); ++g)
      res.variance[v] += w_in[d][inner_begin[d] + g] * pd[g] * (gx[g] - res.mean[v]) * (gx[g] - res.mean[v]);
  }
  res.map = total.best_x;
  res.map_log_score = total.best;
  return res;
}

}  // namespace lhvi
