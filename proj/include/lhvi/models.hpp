#pragma once

// Seeded generators for the experiment families: toy HMLN, paper popularity,
// relational Gaussian model (RGM) and relational Kalman filter (RKF).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lhvi/error.hpp"
#include "lhvi/graph.hpp"
#include "lhvi/optimizer.hpp"

namespace lhvi {

struct GeneratedModel {
  FactorGraph graph;
  Evidence evidence;
  bool ground_truth_capable = false;
};

namespace detail {

inline void require_positive(std::initializer_list<int> sizes) {
  for (int s : sizes)
    if (s < 1) throw Error(ErrorCode::InvalidArgument, "generator sizes must be >= 1");
}

inline void require_fraction(double f) {
  if (!(f >= 0.0 && f <= 1.0)) throw Error(ErrorCode::InvalidArgument, "evidence fraction must lie in [0, 1]");
}

inline std::string call(const std::string& pred, std::initializer_list<std::string> args) {
  std::string s = pred + "(";
  bool first = true;
  for (const auto& a : args) {
    if (!first) s += ",";
    s += a;
    first = false;
  }
  return s + ")";
}

// w * -(x - target)^2 as a one-slot formula potential.
inline Potential pull_to(double w, double target) {
  return HybridFormulaPotential(w, {Slot::continuous_slot()},
                                Formula::equal(Formula::atom(0), Formula::constant(target)));
}

}  // namespace detail

struct ToyHmlnOptions {
  double prior_weight = 0.05;          // w * [pos(x) = 0] on every position
  bool per_grounding_positions = true;  // draw p1, p2 per (A, B) pair; otherwise once
};

/// Groundings of
///   0.1 : in(A, Box) & in(B, Box) -> attractedTo(A, B)
///   0.2 : !attractedTo(A, B) * [pos(A) = p1] + attractedTo(A, B) * [pos(B) = p2]
/// plus a weak zero-centred prior on every position so the model normalizes.
inline GeneratedModel gen_toy_hmln(int nA, int nB, int nBox, std::uint64_t seed, ToyHmlnOptions opt = {}) {
  detail::require_positive({nA, nB, nBox});
  std::mt19937_64 rng(derive_seed(seed, 0));
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  using detail::call;

  std::vector<VariableDecl> vars;
  auto A = [](int i) { return "A" + std::to_string(i); };
  auto B = [](int j) { return "B" + std::to_string(j); };
  auto X = [](int k) { return "Box" + std::to_string(k); };
  for (int i = 0; i < nA; ++i)
    for (int k = 0; k < nBox; ++k) vars.push_back({call("in", {A(i), X(k)}), Domain::discrete(2), {}});
  for (int j = 0; j < nB; ++j)
    for (int k = 0; k < nBox; ++k) vars.push_back({call("in", {B(j), X(k)}), Domain::discrete(2), {}});
  for (int i = 0; i < nA; ++i)
    for (int j = 0; j < nB; ++j) vars.push_back({call("attractedTo", {A(i), B(j)}), Domain::discrete(2), {}});
  for (int i = 0; i < nA; ++i) vars.push_back({call("pos", {A(i)}), Domain::continuous(), {}});
  for (int j = 0; j < nB; ++j) vars.push_back({call("pos", {B(j)}), Domain::continuous(), {}});

  const Potential rule1 = HybridFormulaPotential(
      0.1, std::vector<Slot>(3, Slot::discrete_slot(2)),
      Formula::implies(Formula::conj({Formula::atom(0), Formula::atom(1)}), Formula::atom(2)));
  auto rule2 = [](double p1, double p2) {
    auto att = Formula::atom(0);
    return Potential(HybridFormulaPotential(
        0.2, {Slot::discrete_slot(2), Slot::continuous_slot(), Slot::continuous_slot()},
        Formula::sum({Formula::mul(Formula::negate(att), Formula::equal(Formula::atom(1), Formula::constant(p1))),
                      Formula::mul(att, Formula::equal(Formula::atom(2), Formula::constant(p2)))})));
  };

  std::vector<FactorDecl> fs;
  int id = 0;
  auto fid = [&id] { return "f" + std::to_string(id++); };
  for (int i = 0; i < nA; ++i)
    for (int j = 0; j < nB; ++j)
      for (int k = 0; k < nBox; ++k)
        fs.push_back({fid(), {call("in", {A(i), X(k)}), call("in", {B(j), X(k)}), call("attractedTo", {A(i), B(j)})},
                      rule1});
  const double shared_p1 = U(rng), shared_p2 = U(rng);
  for (int i = 0; i < nA; ++i)
    for (int j = 0; j < nB; ++j) {
      double p1 = shared_p1, p2 = shared_p2;
      if (opt.per_grounding_positions) {
        p1 = U(rng);
        p2 = U(rng);
      }
      fs.push_back({fid(), {call("attractedTo", {A(i), B(j)}), call("pos", {A(i)}), call("pos", {B(j)})}, rule2(p1, p2)});
    }
  if (opt.prior_weight > 0.0) {
    for (int i = 0; i < nA; ++i) fs.push_back({fid(), {call("pos", {A(i)})}, detail::pull_to(opt.prior_weight, 0.0)});
    for (int j = 0; j < nB; ++j) fs.push_back({fid(), {call("pos", {B(j)})}, detail::pull_to(opt.prior_weight, 0.0)});
  }

  const int ndisc = nA * nBox + nB * nBox + nA * nB;
  const int ncont = nA + nB;
  GeneratedModel m;
  m.graph = build_graph(std::move(vars), std::move(fs), 0.0,
                        {{"family", "toy-hmln"},
                         {"nA", std::to_string(nA)},
                         {"nB", std::to_string(nB)},
                         {"nBox", std::to_string(nBox)},
                         {"seed", std::to_string(seed)}});
  m.ground_truth_capable = ndisc <= 20 && ncont <= 4;
  return m;
}

/// Groundings of
///   0.3 : PaperPopularity(p) = 1.0
///   0.5 : SameSession(t1, t2) * [TopicPopularity(t1) = TopicPopularity(t2)]
///   0.5 : In(p, t) * [PaperPopularity(p) = TopicPopularity(t)]
/// over ordered topic pairs t1 != t2, with the random evidence recipe.
inline GeneratedModel gen_paper_popularity(int nPapers, int nTopics, std::uint64_t seed, double fraction = 0.7) {
  detail::require_positive({nPapers, nTopics});
  detail::require_fraction(fraction);
  using detail::call;
  auto P = [](int p) { return "p" + std::to_string(p); };
  auto T = [](int t) { return "t" + std::to_string(t); };

  std::vector<VariableDecl> vars;
  for (int p = 0; p < nPapers; ++p) vars.push_back({call("PaperPopularity", {P(p)}), Domain::continuous(0, 10), {}});
  for (int t = 0; t < nTopics; ++t) vars.push_back({call("TopicPopularity", {T(t)}), Domain::continuous(0, 10), {}});
  for (int p = 0; p < nPapers; ++p)
    for (int t = 0; t < nTopics; ++t) vars.push_back({call("In", {P(p), T(t)}), Domain::discrete(2), {}});
  for (int a = 0; a < nTopics; ++a)
    for (int b = 0; b < nTopics; ++b)
      if (a != b) vars.push_back({call("SameSession", {T(a), T(b)}), Domain::discrete(2), {}});

  const Potential gated = HybridFormulaPotential(
      0.5, {Slot::discrete_slot(2), Slot::continuous_slot(), Slot::continuous_slot()},
      Formula::mul(Formula::atom(0), Formula::equal(Formula::atom(1), Formula::atom(2))));
  std::vector<FactorDecl> fs;
  int id = 0;
  auto fid = [&id] { return "f" + std::to_string(id++); };
  for (int p = 0; p < nPapers; ++p) fs.push_back({fid(), {call("PaperPopularity", {P(p)})}, detail::pull_to(0.3, 1.0)});
  for (int a = 0; a < nTopics; ++a)
    for (int b = 0; b < nTopics; ++b)
      if (a != b)
        fs.push_back({fid(),
                      {call("SameSession", {T(a), T(b)}), call("TopicPopularity", {T(a)}),
                       call("TopicPopularity", {T(b)})},
                      gated});
  for (int p = 0; p < nPapers; ++p)
    for (int t = 0; t < nTopics; ++t)
      fs.push_back({fid(),
                    {call("In", {P(p), T(t)}), call("PaperPopularity", {P(p)}), call("TopicPopularity", {T(t)})},
                    gated});

  GeneratedModel m;
  m.graph = build_graph(std::move(vars), std::move(fs), 0.0,
                        {{"family", "paper-popularity"},
                         {"nPapers", std::to_string(nPapers)},
                         {"nTopics", std::to_string(nTopics)},
                         {"seed", std::to_string(seed)}});

  std::mt19937_64 rng(derive_seed(seed, 1));
  std::bernoulli_distribution pick(fraction), coin(0.5);
  std::uniform_real_distribution<double> pop(0.0, 10.0);
  for (int p = 0; p < nPapers; ++p)
    if (pick(rng)) m.evidence.entries[call("PaperPopularity", {P(p)})] = pop(rng);
  for (int t = 0; t < nTopics; ++t)
    if (pick(rng)) m.evidence.entries[call("TopicPopularity", {T(t)})] = pop(rng);
  for (int p = 0; p < nPapers; ++p)
    if (pick(rng))
      for (int t = 0; t < nTopics; ++t) m.evidence.entries[call("In", {P(p), T(t)})] = coin(rng) ? 1.0 : 0.0;
  for (int a = 0; a < nTopics; ++a)
    for (int b = 0; b < nTopics; ++b)
      if (a != b) m.evidence.entries[call("SameSession", {T(a), T(b)})] = coin(rng) ? 1.0 : 0.0;
  return m;
}

struct RgmOptions {
  double evidence_fraction = 0.0;
  double evidence_range = 30.0;  // evidence ~ U(-range, range)
  double var_lo = 1.0, var_hi = 5.0;
};

/// Recession -> Market(S) -> Loss(S, B) -> Revenue(B) with pairwise linear
/// Gaussian factors, one variance per relational edge type, and a Gaussian
/// prior on Recession.
inline GeneratedModel gen_rgm(int nMarkets, int nBanks, std::uint64_t seed, RgmOptions opt = {}) {
  detail::require_positive({nMarkets, nBanks});
  detail::require_fraction(opt.evidence_fraction);
  using detail::call;
  std::mt19937_64 rng(derive_seed(seed, 0));
  std::uniform_real_distribution<double> V(opt.var_lo, opt.var_hi);
  const double v_prior = V(rng), v_market = V(rng), v_loss = V(rng), v_revenue = V(rng);

  auto S = [](int s) { return "s" + std::to_string(s); };
  auto B = [](int b) { return "b" + std::to_string(b); };
  std::vector<VariableDecl> vars;
  vars.push_back({"Recession", Domain::continuous(), {}});
  for (int s = 0; s < nMarkets; ++s) vars.push_back({call("Market", {S(s)}), Domain::continuous(), {}});
  for (int s = 0; s < nMarkets; ++s)
    for (int b = 0; b < nBanks; ++b) vars.push_back({call("Loss", {S(s), B(b)}), Domain::continuous(), {}});
  for (int b = 0; b < nBanks; ++b) vars.push_back({call("Revenue", {B(b)}), Domain::continuous(), {}});

  std::vector<FactorDecl> fs;
  int id = 0;
  auto fid = [&id] { return "f" + std::to_string(id++); };
  fs.push_back({fid(), {"Recession"}, QuadraticPotential({{1.0 / v_prior}}, {0.0}, 0.0)});
  for (int s = 0; s < nMarkets; ++s)
    fs.push_back({fid(), {call("Market", {S(s)}), "Recession"}, LinearGaussianPotential(1.0, 0.0, v_market)});
  for (int s = 0; s < nMarkets; ++s)
    for (int b = 0; b < nBanks; ++b)
      fs.push_back({fid(), {call("Loss", {S(s), B(b)}), call("Market", {S(s)})}, LinearGaussianPotential(1.0, 0.0, v_loss)});
  for (int s = 0; s < nMarkets; ++s)
    for (int b = 0; b < nBanks; ++b)
      fs.push_back(
          {fid(), {call("Revenue", {B(b)}), call("Loss", {S(s), B(b)})}, LinearGaussianPotential(1.0, 0.0, v_revenue)});

  GeneratedModel m;
  m.graph = build_graph(std::move(vars), std::move(fs), 0.0,
                        {{"family", "rgm"},
                         {"nMarkets", std::to_string(nMarkets)},
                         {"nBanks", std::to_string(nBanks)},
                         {"seed", std::to_string(seed)}});
  m.ground_truth_capable = true;
  if (opt.evidence_fraction > 0.0) {
    std::mt19937_64 erng(derive_seed(seed, 1));
    std::vector<std::size_t> order(m.graph.num_variables());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), erng);
    const auto k = static_cast<std::size_t>(std::llround(opt.evidence_fraction * static_cast<double>(order.size())));
    std::uniform_real_distribution<double> val(-opt.evidence_range, opt.evidence_range);
    for (std::size_t j = 0; j < k; ++j) m.evidence.entries[m.graph.variable(order[j]).id] = val(erng);
  }
  return m;
}

enum class RkfStructure { Tree, Cycle };

struct RkfOptions {
  double observation_fraction = 0.8;  // share of (well, step) pairs with an observation
  double prior_variance = 100.0;
};

struct RkfParameters {
  double alpha = 0.0, beta = 0.0, gamma = 0.0;
};

/// Linear Gaussian state-space model over wells x steps written as pairwise
/// factors: transitions x(w,t+1) ~ A x(t), observations y(w,t) ~ x(w,t). The
/// tree variant uses A = alpha I; the cycle variant links every pair of wells
/// with A = alpha I + 0.01 (all entries). Observed y values come from a
/// simulated trajectory and are returned as evidence.
inline GeneratedModel gen_rkf(int nWells, int nSteps, RkfStructure structure, std::uint64_t seed, RkfOptions opt = {},
                              RkfParameters* params_out = nullptr) {
  detail::require_positive({nWells});
  if (nSteps < 2) throw Error(ErrorCode::InvalidArgument, "RKF needs at least 2 steps");
  detail::require_fraction(opt.observation_fraction);
  using detail::call;
  std::mt19937_64 rng(derive_seed(seed, 0));
  RkfParameters par;
  par.alpha = std::uniform_real_distribution<double>(0.5, 1.0)(rng);
  par.beta = std::uniform_real_distribution<double>(5.0, 10.0)(rng);
  par.gamma = std::uniform_real_distribution<double>(1.0, 5.0)(rng);
  if (params_out) *params_out = par;
  auto A = [&](int w, int v) {
    if (structure == RkfStructure::Tree) return w == v ? par.alpha : 0.0;
    return (w == v ? par.alpha : 0.0) + 0.01;
  };

  auto X = [](int w, int t) { return "x(w" + std::to_string(w) + ",t" + std::to_string(t) + ")"; };
  auto Y = [](int w, int t) { return "y(w" + std::to_string(w) + ",t" + std::to_string(t) + ")"; };

  // Simulated trajectory; log psi = -e^2 / var means noise variance var / 2.
  std::mt19937_64 srng(derive_seed(seed, 1));
  std::normal_distribution<double> N01(0.0, 1.0);
  std::vector<std::vector<double>> x(nSteps, std::vector<double>(nWells));
  for (int w = 0; w < nWells; ++w) x[0][w] = std::sqrt(opt.prior_variance / 2.0) * N01(srng);
  for (int t = 1; t < nSteps; ++t)
    for (int w = 0; w < nWells; ++w) {
      double mu = 0.0;
      for (int v = 0; v < nWells; ++v) mu += A(w, v) * x[t - 1][v];
      x[t][w] = mu + std::sqrt(par.beta / 2.0) * N01(srng);
    }

  std::vector<VariableDecl> vars;
  for (int t = 0; t < nSteps; ++t)
    for (int w = 0; w < nWells; ++w) vars.push_back({X(w, t), Domain::continuous(), {}});
  std::bernoulli_distribution observe(opt.observation_fraction);
  std::vector<std::pair<int, int>> observed;
  for (int t = 0; t < nSteps; ++t)
    for (int w = 0; w < nWells; ++w)
      if (observe(srng)) {
        observed.emplace_back(w, t);
        vars.push_back({Y(w, t), Domain::continuous(), {}});
      }

  std::vector<FactorDecl> fs;
  int id = 0;
  auto fid = [&id] { return "f" + std::to_string(id++); };
  for (int w = 0; w < nWells; ++w)
    fs.push_back({fid(), {X(w, 0)}, QuadraticPotential({{1.0 / opt.prior_variance}}, {0.0}, 0.0)});
  for (int t = 0; t + 1 < nSteps; ++t)
    for (int w = 0; w < nWells; ++w)
      for (int v = 0; v < nWells; ++v) {
        const double a = A(w, v);
        if (a == 0.0) continue;
        fs.push_back({fid(), {X(w, t + 1), X(v, t)}, LinearGaussianPotential(a, 0.0, par.beta)});
      }
  GeneratedModel m;
  for (const auto& [w, t] : observed) {
    fs.push_back({fid(), {Y(w, t), X(w, t)}, LinearGaussianPotential(1.0, 0.0, par.gamma)});
    m.evidence.entries[Y(w, t)] = x[t][w] + std::sqrt(par.gamma / 2.0) * N01(srng);
  }

  m.graph = build_graph(std::move(vars), std::move(fs), 0.0,
                        {{"family", "rkf"},
                         {"structure", structure == RkfStructure::Tree ? "tree" : "cycle"},
                         {"nWells", std::to_string(nWells)},
                         {"nSteps", std::to_string(nSteps)},
                         {"seed", std::to_string(seed)}});
  m.ground_truth_capable = true;
  return m;
}

}  // namespace lhvi
