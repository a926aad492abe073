#pragma once

// Free energies of a mixture of mean-field distributions over a (possibly
// compressed) factor graph, with Bethe or Jensen entropy, expectations by
// Gauss-Hermite quadrature, and exact gradients of the discretized objective.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <thread>
#include <vector>

#include "lhvi/error.hpp"
#include "lhvi/graph.hpp"
#include "lhvi/lifting.hpp"
#include "lhvi/mixture.hpp"
#include "lhvi/quadrature.hpp"

namespace lhvi {

enum class EntropyKind { Bethe, Jensen };
enum class LiftingMode { Ground, Lifted, CoarseToFine };

struct ObjectiveSpec {
  EntropyKind entropy = EntropyKind::Bethe;
  int quadrature_order = 8;
  LiftingMode mode = LiftingMode::Ground;
  double density_floor = 1e-300;
  std::size_t max_arity = 4;
  int threads = 1;
};

namespace detail {

// One additive piece of the objective:
//   coef-weighted  sum_k w_k E_{q^k}[ alpha * log q_S(x) - beta * log psi(x) ]
// over the scope S (super-variable indices, one per position).
struct Term {
  std::vector<std::size_t> scope;
  const Potential* potential = nullptr;
  double alpha = 0.0;
  double beta = 0.0;
};

struct DimNodes {
  bool discrete = false;
  std::size_t var = 0;
  std::vector<double> x;       // node location (continuous) or state
  std::vector<double> weight;  // quadrature weight or component probability
  std::vector<double> z;       // standardized node (continuous)
  // log q^j(x_node) and d/dx, laid out [node * K + j]
  std::vector<double> logq;
  std::vector<double> dlogq_dx;
};

class Evaluator {
 public:
  Evaluator(const CompressedGraph& cg, const ObjectiveSpec& spec)
      : cg_(cg), spec_(spec), rule_(QuadratureRule::gauss_hermite(spec.quadrature_order)) {
    if (!(spec.density_floor > 0.0)) throw Error(ErrorCode::InvalidArgument, "density floor must be positive");
    log_floor_ = std::log(spec.density_floor);
    for (const auto& sf : cg_.super_factors)
      if (sf.scope.size() > spec_.max_arity)
        throw Error(ErrorCode::InvalidArgument, "factor arity " + std::to_string(sf.scope.size()) +
                                                    " exceeds the quadrature limit " +
                                                    std::to_string(spec_.max_arity));
  }

  const QuadratureRule& rule() const { return rule_; }

  std::vector<Term> energy_terms() const {
    std::vector<Term> t;
    for (const auto& sf : cg_.super_factors)
      t.push_back({sf.scope, &sf.potential, 0.0, static_cast<double>(sf.count)});
    return t;
  }

  // Terms whose sum equals -H_B[q].
  std::vector<Term> neg_bethe_entropy_terms() const {
    std::vector<Term> t;
    for (const auto& sf : cg_.super_factors) t.push_back({sf.scope, nullptr, static_cast<double>(sf.count), 0.0});
    for (std::size_t v = 0; v < cg_.super_variables.size(); ++v) {
      const auto& sv = cg_.super_variables[v];
      const double a = static_cast<double>(sv.count) * (1.0 - static_cast<double>(sv.ground_degree));
      if (a != 0.0) t.push_back({{v}, nullptr, a, 0.0});
    }
    return t;
  }

  std::vector<Term> free_energy_terms() const {
    std::vector<Term> t;
    for (const auto& sf : cg_.super_factors) {
      const double c = static_cast<double>(sf.count);
      t.push_back({sf.scope, &sf.potential, spec_.entropy == EntropyKind::Bethe ? c : 0.0, c});
    }
    if (spec_.entropy == EntropyKind::Bethe) {
      for (std::size_t v = 0; v < cg_.super_variables.size(); ++v) {
        const auto& sv = cg_.super_variables[v];
        const double a = static_cast<double>(sv.count) * (1.0 - static_cast<double>(sv.ground_degree));
        if (a != 0.0) t.push_back({{v}, nullptr, a, 0.0});
      }
    }
    return t;
  }

  /// Sum of terms. grad (if non-empty) is in the packed layout of q and is
  /// accumulated into (not overwritten).
  double eval_terms(const MixtureMeanField& q, const std::vector<Term>& terms, std::span<double> grad) const {
    const std::size_t K = q.K();
    const auto w = q.weights();
    const auto off = q.offsets();
    const bool want_grad = !grad.empty();

    const int nthreads = std::max(1, std::min<int>(spec_.threads, static_cast<int>(terms.size())));
    std::vector<double> values(nthreads, 0.0);
    std::vector<std::vector<double>> gws(nthreads, std::vector<double>(want_grad ? K : 0, 0.0));
    std::vector<std::vector<double>> gps(nthreads);

    auto work = [&](int tid) {
      std::vector<double> local_grad;
      std::span<double> g;
      if (want_grad) {
        if (nthreads == 1) {
          g = grad;
        } else {
          local_grad.assign(grad.size(), 0.0);
          g = local_grad;
        }
      }
      const std::size_t begin = terms.size() * tid / nthreads;
      const std::size_t end = terms.size() * (tid + 1) / nthreads;
      for (std::size_t t = begin; t < end; ++t) values[tid] += eval_term(q, w, off, terms[t], gws[tid], g);
      if (want_grad && nthreads > 1) gps[tid] = std::move(local_grad);
    };
    if (nthreads == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < nthreads; ++t) pool.emplace_back(work, t);
      for (auto& th : pool) th.join();
    }

    double value = 0.0;
    std::vector<double> gw(K, 0.0);
    for (int t = 0; t < nthreads; ++t) {
      value += values[t];
      if (want_grad) {
        for (std::size_t k = 0; k < K; ++k) gw[k] += gws[t][k];
        if (nthreads > 1)
          for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += gps[t][i];
      }
    }
    if (want_grad) add_weight_chain(w, gw, grad);
    return value;
  }

  /// -H_J[q] with per-super-variable overlaps raised to the member count.
  double neg_jensen_entropy(const MixtureMeanField& q, std::span<double> grad) const {
    const std::size_t K = q.K();
    const auto w = q.weights();
    const auto off = q.offsets();
    const std::size_t nv = q.size();
    const bool want_grad = !grad.empty();

    // log O_kj
    std::vector<double> logO(K * K, 0.0);
    for (std::size_t v = 0; v < nv; ++v) {
      const double cnt = count_of(v);
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t j = 0; j < K; ++j) logO[k * K + j] += cnt * log_overlap(q.marginals[v], k, j, nullptr, nullptr);
    }
    std::vector<double> logS(K), tmp(K);
    double value = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t j = 0; j < K; ++j) tmp[j] = std::log(w[j]) + logO[k * K + j];
      logS[k] = log_sum_exp(tmp);
      value += w[k] * logS[k];
    }
    if (!want_grad) return value;

    std::vector<double> gw(K, 0.0);
    std::vector<double> coef(K * K);
    for (std::size_t k = 0; k < K; ++k) {
      gw[k] += logS[k];
      for (std::size_t j = 0; j < K; ++j) {
        const double ratio = std::exp(logO[k * K + j] - logS[k]);
        gw[j] += w[k] * ratio;
        coef[k * K + j] = w[k] * w[j] * ratio;
      }
    }
    std::vector<double> dk, dj;
    for (std::size_t v = 0; v < nv; ++v) {
      const auto& m = q.marginals[v];
      if (m.clamped) continue;
      const double cnt = count_of(v);
      const std::size_t width = m.width();
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t j = 0; j < K; ++j) {
          log_overlap(m, k, j, &dk, &dj);
          const double c = coef[k * K + j] * cnt;
          for (std::size_t p = 0; p < width; ++p) {
            grad[off[v] + k * width + p] += c * dk[p];
            grad[off[v] + j * width + p] += c * dj[p];
          }
        }
    }
    add_weight_chain(w, gw, grad);
    return value;
  }

  /// Full objective (free energy, including the conditioning constant).
  double objective(const MixtureMeanField& q, std::span<double> grad) const {
    double f = eval_terms(q, free_energy_terms(), grad) - cg_.log_constant;
    if (spec_.entropy == EntropyKind::Jensen) f += neg_jensen_entropy(q, grad);
    return f;
  }

 private:
  double count_of(std::size_t v) const { return static_cast<double>(cg_.super_variables[v].count); }

  static void add_weight_chain(const std::vector<double>& w, const std::vector<double>& gw, std::span<double> grad) {
    double avg = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) avg += w[k] * gw[k];
    for (std::size_t k = 0; k < w.size(); ++k) grad[k] += w[k] * (gw[k] - avg);
  }

  // log <q_v^k, q_v^j>, optionally with derivatives w.r.t. component k's and
  // component j's parameter blocks.
  double log_overlap(const Marginal& m, std::size_t k, std::size_t j, std::vector<double>* dk,
                     std::vector<double>* dj) const {
    if (m.discrete) {
      const auto pk = m.probabilities(k);
      const auto pj = m.probabilities(j);
      double ov = 0.0;
      for (std::size_t s = 0; s < pk.size(); ++s) ov += pk[s] * pj[s];
      const bool floored = ov < spec_.density_floor;
      if (dk) {
        dk->assign(pk.size(), 0.0);
        dj->assign(pk.size(), 0.0);
        if (!floored)
          for (std::size_t s = 0; s < pk.size(); ++s) {
            (*dk)[s] = pk[s] * (pj[s] - ov) / ov;
            (*dj)[s] = pj[s] * (pk[s] - ov) / ov;
          }
      }
      return std::log(floored ? spec_.density_floor : ov);
    }
    const double sk = m.stddev(k), sj = m.stddev(j);
    const double d = m.mean(k) - m.mean(j);
    const double s = sk * sk + sj * sj;
    if (dk) {
      const double ds = 0.5 * d * d / (s * s) - 0.5 / s;
      dk->assign(2, 0.0);
      dj->assign(2, 0.0);
      (*dk)[0] = -d / s;
      (*dj)[0] = d / s;
      (*dk)[1] = m.log_std_active(k) ? ds * 2.0 * sk * sk : 0.0;
      (*dj)[1] = m.log_std_active(j) ? ds * 2.0 * sj * sj : 0.0;
    }
    return -0.5 * d * d / s - 0.5 * std::log(2.0 * std::numbers::pi * s);
  }

  void build_nodes(const MixtureMeanField& q, std::size_t var, std::size_t k, DimNodes& dn) const {
    const auto& m = q.marginals[var];
    const std::size_t K = q.K();
    dn.discrete = m.discrete;
    dn.var = var;
    dn.x.clear();
    dn.weight.clear();
    dn.z.clear();
    if (m.discrete) {
      const auto p = m.probabilities(k);
      for (std::size_t s = 0; s < p.size(); ++s) {
        dn.x.push_back(static_cast<double>(s));
        dn.weight.push_back(p[s]);
      }
    } else {
      const double mu = m.mean(k), sd = m.stddev(k);
      for (int j = 0; j < rule_.order; ++j) {
        dn.z.push_back(rule_.std_nodes[j]);
        dn.x.push_back(mu + sd * rule_.std_nodes[j]);
        dn.weight.push_back(rule_.normalized_weights[j]);
      }
    }
    const std::size_t n = dn.x.size();
    dn.logq.assign(n * K, 0.0);
    dn.dlogq_dx.assign(n * K, 0.0);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t j = 0; j < K; ++j) {
        dn.logq[a * K + j] = m.log_density(j, dn.x[a]);
        if (!m.discrete) {
          const double sd = m.stddev(j);
          dn.dlogq_dx[a * K + j] = -(dn.x[a] - m.mean(j)) / (sd * sd);
        }
      }
  }

  double eval_term(const MixtureMeanField& q, const std::vector<double>& w, const std::vector<std::size_t>& off,
                   const Term& term, std::vector<double>& gw, std::span<double> grad) const {
    const std::size_t K = q.K();
    const std::size_t a = term.scope.size();
    const bool want_grad = !grad.empty();
    std::vector<DimNodes> dims(a);
    std::vector<std::size_t> idx(a);
    std::vector<double> x(a), xeval(a), dpsi(a), clipmask(a), lqj(K), tmp(K), r(K);
    std::vector<double> logw(K);
    for (std::size_t j = 0; j < K; ++j) logw[j] = std::log(w[j]);

    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      std::size_t npoints = 1;
      for (std::size_t p = 0; p < a; ++p) {
        build_nodes(q, term.scope[p], k, dims[p]);
        npoints *= dims[p].x.size();
      }
      std::fill(idx.begin(), idx.end(), 0);
      double acc = 0.0;
      for (std::size_t pt = 0; pt < npoints; ++pt) {
        double W = 1.0;
        for (std::size_t p = 0; p < a; ++p) {
          const auto& dn = dims[p];
          W *= dn.weight[idx[p]];
          x[p] = dn.x[idx[p]];
          xeval[p] = x[p];
          clipmask[p] = 1.0;
          if (!dn.discrete) {
            const auto& dom = cg_.super_variables[dn.var].domain;
            if (x[p] < dom.lower) xeval[p] = dom.lower, clipmask[p] = 0.0;
            if (x[p] > dom.upper) xeval[p] = dom.upper, clipmask[p] = 0.0;
          }
        }
        if (W > 0.0) {
          double lq = 0.0;
          bool floored = false;
          if (term.alpha != 0.0) {
            for (std::size_t j = 0; j < K; ++j) {
              double s = 0.0;
              for (std::size_t p = 0; p < a; ++p) s += dims[p].logq[idx[p] * K + j];
              lqj[j] = s;
              tmp[j] = logw[j] + s;
            }
            lq = log_sum_exp(tmp);
            if (!(lq >= log_floor_)) {
              lq = log_floor_;
              floored = true;
            } else {
              for (std::size_t j = 0; j < K; ++j) r[j] = std::exp(tmp[j] - lq);
            }
          }
          double lpsi = 0.0;
          if (term.beta != 0.0) {
            lpsi = want_grad ? term.potential->log_value(xeval, dpsi) : term.potential->log_value(xeval);
            if (std::isnan(lpsi) || lpsi == kInf)
              throw Error(ErrorCode::NonFiniteIntegrand, "log potential is not finite at a quadrature node");
          }
          const double h = term.alpha * lq - term.beta * lpsi;
          acc += W * h;

          if (want_grad) {
            gw[k] += W * h;
            const double base = w[k] * W;
            if (term.alpha != 0.0 && !floored) {
              for (std::size_t j = 0; j < K; ++j) gw[j] += base * term.alpha * std::exp(lqj[j] - lq);
              // integrand dependence on every component's parameters
              for (std::size_t p = 0; p < a; ++p) {
                const std::size_t v = dims[p].var;
                const auto& m = q.marginals[v];
                if (m.clamped) continue;
                const std::size_t width = m.width();
                for (std::size_t j = 0; j < K; ++j) {
                  const double c = base * term.alpha * r[j];
                  if (c == 0.0) continue;
                  double* g = grad.data() + off[v] + j * width;
                  if (m.discrete) {
                    const auto pj = m.probabilities(j);
                    const auto s = static_cast<std::size_t>(x[p]);
                    for (std::size_t t = 0; t < width; ++t) g[t] += c * ((t == s ? 1.0 : 0.0) - pj[t]);
                  } else {
                    const double sd = m.stddev(j);
                    const double zz = (x[p] - m.mean(j)) / sd;
                    g[0] += c * zz / sd;
                    if (m.log_std_active(j)) g[1] += c * (zz * zz - 1.0);
                  }
                }
              }
            }
            // reparameterized dependence on component k's parameters
            for (std::size_t p = 0; p < a; ++p) {
              const std::size_t v = dims[p].var;
              const auto& m = q.marginals[v];
              if (m.clamped) continue;
              double* g = grad.data() + off[v] + k * m.width();
              if (m.discrete) {
                const auto s = static_cast<std::size_t>(x[p]);
                const auto& pk = dims[p].weight;
                for (std::size_t t = 0; t < m.width(); ++t) g[t] += base * ((t == s ? 1.0 : 0.0) - pk[t]) * h;
              } else {
                double dh = 0.0;
                if (term.alpha != 0.0 && !floored) {
                  double s = 0.0;
                  for (std::size_t j = 0; j < K; ++j) s += r[j] * dims[p].dlogq_dx[idx[p] * K + j];
                  dh += term.alpha * s;
                }
                if (term.beta != 0.0) dh -= term.beta * dpsi[p] * clipmask[p];
                g[0] += base * dh;
                if (m.log_std_active(k)) g[1] += base * dh * m.stddev(k) * dims[p].z[idx[p]];
              }
            }
          }
        }
        for (std::size_t p = a; p-- > 0;) {
          if (++idx[p] < dims[p].x.size()) break;
          idx[p] = 0;
        }
      }
      total += w[k] * acc;
    }
    return total;
  }

  const CompressedGraph& cg_;
  ObjectiveSpec spec_;
  QuadratureRule rule_;
  double log_floor_ = 0.0;
};

}  // namespace detail

/// Objective functor over the packed free parameters of a mixture template
/// (clamped marginals keep the template's values).
class FreeEnergy {
 public:
  FreeEnergy(CompressedGraph cg, ObjectiveSpec spec, MixtureMeanField layout)
      : cg_(std::make_shared<CompressedGraph>(std::move(cg))),
        spec_(spec),
        eval_(std::make_shared<detail::Evaluator>(*cg_, spec_)),
        q_(std::move(layout)) {
    if (q_.size() != cg_->super_variables.size())
      throw Error(ErrorCode::InvalidArgument, "mixture does not match the compressed graph");
  }

  std::size_t dimension() const { return q_.num_free_parameters(); }
  const MixtureMeanField& layout() const { return q_; }
  const CompressedGraph& graph() const { return *cg_; }
  const ObjectiveSpec& spec() const { return spec_; }

  double value(const MixtureMeanField& q) const { return eval_->objective(q, {}); }

  /// grad is resized to dimension() and overwritten.
  double value_and_gradient(const MixtureMeanField& q, std::vector<double>& grad) const {
    grad.assign(q.num_free_parameters(), 0.0);
    return eval_->objective(q, grad);
  }

  double operator()(std::span<const double> packed, std::vector<double>& grad) {
    q_.unpack(packed);
    return value_and_gradient(q_, grad);
  }

  MixtureMeanField unpacked(std::span<const double> packed) const {
    MixtureMeanField q = q_;
    q.unpack(packed);
    return q;
  }

 private:
  std::shared_ptr<CompressedGraph> cg_;
  ObjectiveSpec spec_;
  std::shared_ptr<detail::Evaluator> eval_;
  MixtureMeanField q_;
};

// ---------------------------------------------------------------------------
// Operation-level API

/// Quadrature estimate of E_{q^k}[f(x_S)] for the variables in `scope`.
inline double clique_expectation(const MixtureMeanField& q, std::size_t k, const std::vector<std::size_t>& scope,
                                 const std::function<double(std::span<const double>)>& f,
                                 const QuadratureRule& rule) {
  const std::size_t a = scope.size();
  std::vector<std::vector<double>> xs(a), ws(a);
  for (std::size_t p = 0; p < a; ++p) {
    const auto& m = q.marginals.at(scope[p]);
    if (m.discrete) {
      const auto pr = m.probabilities(k);
      for (std::size_t s = 0; s < pr.size(); ++s) {
        xs[p].push_back(static_cast<double>(s));
        ws[p].push_back(pr[s]);
      }
    } else {
      for (int j = 0; j < rule.order; ++j) {
        xs[p].push_back(m.mean(k) + m.stddev(k) * rule.std_nodes[j]);
        ws[p].push_back(rule.normalized_weights[j]);
      }
    }
  }
  std::vector<std::size_t> idx(a, 0);
  std::vector<double> x(a);
  std::size_t n = 1;
  for (std::size_t p = 0; p < a; ++p) n *= xs[p].size();
  double total = 0.0;
  for (std::size_t pt = 0; pt < n; ++pt) {
    double W = 1.0;
    for (std::size_t p = 0; p < a; ++p) {
      W *= ws[p][idx[p]];
      x[p] = xs[p][idx[p]];
    }
    if (W > 0.0) {
      const double v = f(x);
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteIntegrand, "integrand is not finite at a node");
      total += W * v;
    }
    for (std::size_t p = a; p-- > 0;) {
      if (++idx[p] < xs[p].size()) break;
      idx[p] = 0;
    }
  }
  return total;
}

/// -sum_c E_q[log psi_c] - log_constant.
inline double energy(const MixtureMeanField& q, const FactorGraph& graph, const ObjectiveSpec& spec = {}) {
  const auto cg = identity_compression(graph);
  detail::Evaluator ev(cg, spec);
  return ev.eval_terms(q, ev.energy_terms(), {}) - cg.log_constant;
}

inline double bethe_entropy(const MixtureMeanField& q, const FactorGraph& graph, const ObjectiveSpec& spec = {}) {
  const auto cg = identity_compression(graph);
  detail::Evaluator ev(cg, spec);
  return -ev.eval_terms(q, ev.neg_bethe_entropy_terms(), {});
}

inline double jensen_entropy(const MixtureMeanField& q, const ObjectiveSpec& spec = {}) {
  // Jensen entropy needs only the variables; an edgeless graph suffices.
  std::vector<VariableDecl> vars;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const auto& m = q.marginals[i];
    vars.push_back({"v" + std::to_string(i), m.discrete ? Domain::discrete(m.cardinality) : Domain::continuous(),
                    std::nullopt});
  }
  const auto cg = identity_compression(build_graph(std::move(vars), {}));
  detail::Evaluator ev(cg, spec);
  return -ev.neg_jensen_entropy(q, {});
}

inline double lifted_free_energy(const MixtureMeanField& q, const CompressedGraph& cg, const ObjectiveSpec& spec) {
  detail::Evaluator ev(cg, spec);
  return ev.objective(q, {});
}

inline double free_energy(const MixtureMeanField& q, const FactorGraph& graph, const ObjectiveSpec& spec) {
  return lifted_free_energy(q, identity_compression(graph), spec);
}

/// Gradient of the objective w.r.t. the packed free parameters of q.
inline std::vector<double> gradient(const MixtureMeanField& q, const CompressedGraph& cg, const ObjectiveSpec& spec) {
  detail::Evaluator ev(cg, spec);
  std::vector<double> g(q.num_free_parameters(), 0.0);
  ev.objective(q, g);
  return g;
}

inline std::vector<double> gradient(const MixtureMeanField& q, const FactorGraph& graph, const ObjectiveSpec& spec) {
  return gradient(q, identity_compression(graph), spec);
}

}  // namespace lhvi
