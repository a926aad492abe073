#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "lhvi/lifting.hpp"
#include "lhvi/models.hpp"
#include "lhvi/oracles.hpp"
#include "lhvi/variational.hpp"

using namespace lhvi;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

FactorGraph single_gaussian() {
  return build_graph({{"x", Domain::continuous(), {}}}, {{"f", {"x"}, QuadraticPotential({{0.5}}, {0.0}, 0.0)}});
}

MixtureMeanField gaussian_q(std::vector<double> w_logits, std::vector<std::pair<double, double>> comps) {
  MixtureMeanField q(w_logits.size(), {Domain::continuous()});
  q.weight_logits = w_logits;
  for (std::size_t k = 0; k < comps.size(); ++k) {
    q.marginals[0].params[2 * k] = comps[k].first;
    q.marginals[0].params[2 * k + 1] = std::log(comps[k].second);
  }
  return q;
}

// Random model with up to 6 variables mixing binary, bounded and unbounded
// continuous variables and all potential kinds.
FactorGraph random_hybrid(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::uniform_int_distribution<int> nvar(2, 6);
  const int n = nvar(rng);
  std::vector<VariableDecl> vars;
  std::vector<bool> disc(n);
  for (int i = 0; i < n; ++i) {
    disc[i] = (rng() % 3 == 0);
    Domain d = disc[i] ? Domain::discrete(2) : (rng() % 4 == 0 ? Domain::continuous(-2, 3) : Domain::continuous());
    vars.push_back({"v" + std::to_string(i), d, {}});
  }
  std::vector<FactorDecl> fs;
  int id = 0;
  auto name = [](int i) { return "v" + std::to_string(i); };
  for (int i = 0; i < n; ++i) {
    if (disc[i])
      fs.push_back({"f" + std::to_string(id++), {name(i)}, TablePotential({2}, {u(rng), u(rng)})});
    else
      fs.push_back({"f" + std::to_string(id++), {name(i)}, QuadraticPotential({{0.3 + 0.5 * std::abs(u(rng))}}, {u(rng)}, 0)});
  }
  for (int i = 0; i + 1 < n; ++i) {
    const int j = i + 1;
    if (disc[i] && disc[j]) {
      fs.push_back({"f" + std::to_string(id++), {name(i), name(j)}, TablePotential({2, 2}, {u(rng), u(rng), u(rng), u(rng)})});
    } else if (!disc[i] && !disc[j]) {
      fs.push_back({"f" + std::to_string(id++), {name(i), name(j)}, LinearGaussianPotential(u(rng), u(rng), 2.0 + u(rng))});
    } else {
      const int d = disc[i] ? i : j, c = disc[i] ? j : i;
      fs.push_back({"f" + std::to_string(id++), {name(d), name(c)},
                    HybridFormulaPotential(0.4, {Slot::discrete_slot(2), Slot::continuous_slot()},
                                           Formula::mul(Formula::atom(0), Formula::equal(Formula::atom(1),
                                                                                         Formula::constant(u(rng)))))});
    }
  }
  return build_graph(std::move(vars), std::move(fs), u(rng));
}

void randomize(MixtureMeanField& q, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& l : q.weight_logits) l = u(rng);
  for (auto& m : q.marginals)
    for (std::size_t k = 0; k < q.K(); ++k) {
      if (m.discrete) {
        for (auto& l : m.component(k)) l = u(rng);
      } else {
        m.params[2 * k] = u(rng);
        m.params[2 * k + 1] = 0.5 * u(rng);
      }
    }
}

}  // namespace

TEST(Variational, SingleGaussianClosedForms) {
  auto g = single_gaussian();
  auto q = gaussian_q({0.0}, {{0.7, 1.3}});
  // E[x^2/2] is exact under Gauss-Hermite
  EXPECT_NEAR(energy(q, g), 0.5 * (0.49 + 1.69), 1e-12);
  EXPECT_NEAR(bethe_entropy(q, g), 0.5 * (kLog2Pi + 1.0) + std::log(1.3), 1e-12);
  EXPECT_NEAR(jensen_entropy(q), std::log(2.0 * std::sqrt(std::numbers::pi) * 1.3), 1e-12);
  // the optimum N(0,1) attains -log Z
  auto opt = gaussian_q({0.0}, {{0.0, 1.0}});
  EXPECT_NEAR(free_energy(opt, g, {}), -0.5 * kLog2Pi, 1e-12);
}

TEST(Variational, JensenBelowBetheEntropyForMixture) {
  // For a single variable the Bethe entropy is the exact mixture entropy.
  auto q = gaussian_q({0.3, -0.2}, {{-1.5, 0.8}, {2.0, 1.1}});
  auto g = build_graph({{"x", Domain::continuous(), {}}}, {});
  ObjectiveSpec spec;
  spec.quadrature_order = 40;
  const double hb = bethe_entropy(q, g, spec);
  // oracle: dense trapezoid integral of -q log q
  double h = 0.0;
  const double lo = -12, hi = 12;
  const int N = 200001;
  const double dx = (hi - lo) / (N - 1);
  for (int i = 0; i < N; ++i) {
    const double x = lo + i * dx;
    const double p = marginal_density(q, 0, x);
    if (p > 0) h -= (i == 0 || i == N - 1 ? 0.5 : 1.0) * dx * p * std::log(p);
  }
  EXPECT_NEAR(hb, h, 5e-5);  // quadrature error of log q under Gauss-Hermite
  EXPECT_LE(jensen_entropy(q), hb);
}

TEST(Variational, DiscreteEnergyIsExact) {
  auto g = build_graph({{"a", Domain::discrete(2), {}}, {"b", Domain::discrete(3), {}}},
                       {{"t", {"a", "b"}, TablePotential({2, 3}, {0.1, -0.4, 0.7, 1.2, 0.0, -2.0})}});
  MixtureMeanField q(1, graph_domains(g));
  q.marginals[0].params = {0.2, -0.3};
  q.marginals[1].params = {1.0, 0.0, -1.0};
  const auto pa = q.marginals[0].probabilities(0), pb = q.marginals[1].probabilities(0);
  const std::vector<double> t{0.1, -0.4, 0.7, 1.2, 0.0, -2.0};
  double e = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) e -= pa[i] * pb[j] * t[i * 3 + j];
  EXPECT_NEAR(energy(q, g), e, 1e-14);
}

TEST(Variational, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    auto g = random_hybrid(rng);
    const std::size_t K = 1 + rng() % 3;
    for (auto ent : {EntropyKind::Bethe, EntropyKind::Jensen}) {
      ObjectiveSpec spec;
      spec.entropy = ent;
      auto q = initialize_mixture(K, graph_domains(g), rng());
      randomize(q, rng);
      FreeEnergy fe(identity_compression(g), spec, q);
      auto x = q.pack();
      std::vector<double> grad;
      fe(x, grad);
      std::vector<double> dummy;
      for (std::size_t i = 0; i < x.size(); ++i) {
        auto xp = x, xm = x;
        xp[i] += 1e-5;
        xm[i] -= 1e-5;
        const double fd = (fe(xp, dummy) - fe(xm, dummy)) / 2e-5;
        EXPECT_NEAR(grad[i], fd, 1e-4 * std::max(1.0, std::abs(fd))) << "trial " << trial << " param " << i;
      }
    }
  }
}

TEST(Variational, LiftedEqualsGroundUnderExpansion) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto m = gen_rgm(4, 2, seed);
    auto [col, cg] = color_passing(m.graph, init_colors(m.graph, {}));
    ASSERT_LT(cg.super_variables.size(), m.graph.num_variables());
    for (auto ent : {EntropyKind::Bethe, EntropyKind::Jensen}) {
      ObjectiveSpec spec;
      spec.entropy = ent;
      auto q = initialize_mixture(2, super_domains(cg), seed + 7);
      std::mt19937_64 rng(seed);
      randomize(q, rng);
      const double lifted = lifted_free_energy(q, cg, spec);
      const double ground = free_energy(expand(q, cg), m.graph, spec);
      EXPECT_NEAR(lifted, ground, 1e-10 * std::max(1.0, std::abs(ground)));
    }
  }
}

TEST(Variational, ClampedParametersAreNotOptimized) {
  auto g = build_graph({{"x", Domain::continuous(), {}}, {"y", Domain::continuous(), {}}},
                       {{"f", {"x", "y"}, LinearGaussianPotential(1, 0, 1)}});
  MixtureMeanField q(1, graph_domains(g));
  q.clamp_gaussian(1, 3.0, 0.01);
  EXPECT_EQ(q.num_free_parameters(), 3u);
  EXPECT_EQ(gradient(q, g, {}).size(), 3u);
}

TEST(Variational, NonFiniteIntegrand) {
  auto g = build_graph({{"x", Domain::continuous(), {}}},
                       {{"f", {"x"}, HybridFormulaPotential(1.0, {Slot::continuous_slot()},
                                                            Formula::mul(Formula::atom(0), Formula::constant(NAN)))}});
  MixtureMeanField q(1, graph_domains(g));
  EXPECT_THROW(free_energy(q, g, {}), Error);
}

TEST(Variational, ThreadedEvaluationIsDeterministic) {
  auto m = gen_rgm(10, 3, 4);
  auto cg = identity_compression(m.graph);
  auto q = initialize_mixture(2, super_domains(cg), 1);
  ObjectiveSpec s1, s4;
  s4.threads = 4;
  auto g1 = gradient(q, cg, s1), g4 = gradient(q, cg, s4);
  EXPECT_NEAR(lifted_free_energy(q, cg, s1), lifted_free_energy(q, cg, s4), 1e-9);
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(g1[i], g4[i], 1e-9);
  EXPECT_EQ(lifted_free_energy(q, cg, s4), lifted_free_energy(q, cg, s4));
}

// -F_J(q) <= log Z on a small discrete model, checked by enumeration.
TEST(Variational, JensenFreeEnergyBoundsLogZ) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  std::vector<VariableDecl> vars;
  std::vector<FactorDecl> fs;
  for (int i = 0; i < 5; ++i) vars.push_back({"b" + std::to_string(i), Domain::discrete(2), {}});
  for (int i = 0; i < 5; ++i)
    for (int j = i + 1; j < 5; ++j)
      fs.push_back({"f" + std::to_string(i) + std::to_string(j), {"b" + std::to_string(i), "b" + std::to_string(j)},
                    TablePotential({2, 2}, {u(rng), u(rng), u(rng), u(rng)})});
  auto g = build_graph(std::move(vars), std::move(fs));
  const double logz = brute_force_hybrid(g).log_z;
  ObjectiveSpec spec;
  spec.entropy = EntropyKind::Jensen;
  for (int t = 0; t < 50; ++t) {
    auto q = initialize_mixture(1 + t % 4, graph_domains(g), t);
    randomize(q, rng);
    EXPECT_LE(-free_energy(q, g, spec), logz + 1e-10);
  }
}
