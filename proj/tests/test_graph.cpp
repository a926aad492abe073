#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "lhvi/graph.hpp"
#include "lhvi/json_io.hpp"

using namespace lhvi;

namespace {

FactorGraph pair_graph() {
  return build_graph({{"x1", Domain::continuous(), {}}, {"x2", Domain::continuous(), {}}},
                     {{"f", {"x1", "x2"}, LinearGaussianPotential(1, 0, 1)}});
}

// Random hybrid graph: discrete (binary) and continuous variables, tables,
// linear Gaussian and quadratic factors.
FactorGraph random_hybrid(std::mt19937_64& rng, int nd, int nc) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<VariableDecl> vars;
  for (int i = 0; i < nd; ++i) vars.push_back({"d" + std::to_string(i), Domain::discrete(2), {}});
  for (int i = 0; i < nc; ++i) vars.push_back({"c" + std::to_string(i), Domain::continuous(), {}});
  std::vector<FactorDecl> fs;
  int id = 0;
  for (int i = 0; i + 1 < nd; ++i)
    fs.push_back({"t" + std::to_string(id++), {"d" + std::to_string(i), "d" + std::to_string(i + 1)},
                  TablePotential({2, 2}, {u(rng), u(rng), u(rng), u(rng)})});
  for (int i = 0; i + 1 < nc; ++i)
    fs.push_back({"g" + std::to_string(id++), {"c" + std::to_string(i), "c" + std::to_string(i + 1)},
                  LinearGaussianPotential(u(rng), u(rng), 1.0 + std::abs(u(rng)))});
  for (int i = 0; i < nc; ++i)
    fs.push_back({"q" + std::to_string(id++), {"c" + std::to_string(i)}, QuadraticPotential({{1.0}}, {u(rng)}, 0)});
  return build_graph(std::move(vars), std::move(fs));
}

}  // namespace

TEST(Graph, MinimalGraph) {
  auto g = build_graph({{"x", Domain::continuous(), {}}}, {{"f", {"x"}, QuadraticPotential({{0.5}}, {0}, 0)}});
  EXPECT_EQ(g.num_variables(), 1u);
  EXPECT_EQ(g.degree(0), 1u);
  EXPECT_EQ(g.adjacency(0)[0], (Incidence{0, 0}));
}

TEST(Graph, Errors) {
  EXPECT_THROW(build_graph({{"x", Domain::continuous(), {}}}, {{"f", {"y"}, QuadraticPotential({{1}}, {0}, 0)}}),
               Error);
  try {
    build_graph({{"x", Domain::continuous(), {}}}, {{"f", {"y"}, QuadraticPotential({{1}}, {0}, 0)}});
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownVariable);
  }
  try {
    build_graph({{"x", Domain::continuous(), {}}}, {{"f", {"x"}, LinearGaussianPotential()}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ArityMismatch);
  }
  try {
    build_graph({{"x", Domain::continuous(), {}}, {"x", Domain::continuous(), {}}}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateId);
  }
  // table on a continuous variable
  try {
    build_graph({{"x", Domain::continuous(), {}}}, {{"f", {"x"}, TablePotential({2}, {0, 0})}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ArityMismatch);
  }
  EXPECT_THROW(build_graph({{"x", Domain::discrete(1), {}}}, {}), Error);
  EXPECT_THROW(build_graph({{"x", Domain::continuous(1, 1), {}}}, {}), Error);
}

TEST(Graph, AdjacencyConsistency) {
  std::mt19937_64 rng(3);
  auto g = random_hybrid(rng, 4, 5);
  for (std::size_t c = 0; c < g.num_factors(); ++c)
    for (std::size_t p = 0; p < g.scope(c).size(); ++p) {
      const auto& adj = g.adjacency(g.scope(c)[p]);
      EXPECT_NE(std::find(adj.begin(), adj.end(), Incidence{c, p}), adj.end());
    }
  std::size_t total = 0;
  for (std::size_t i = 0; i < g.num_variables(); ++i) total += g.degree(i);
  std::size_t scopes = 0;
  for (std::size_t c = 0; c < g.num_factors(); ++c) scopes += g.scope(c).size();
  EXPECT_EQ(total, scopes);
}

TEST(Graph, ConditionSubstitution) {
  auto g = condition(pair_graph(), Evidence{{{"x2", 0.0}}});
  ASSERT_EQ(g.num_variables(), 1u);
  ASSERT_EQ(g.num_factors(), 1u);
  for (double x : {-1.5, 0.0, 2.0}) {
    const double xs[] = {x};
    EXPECT_NEAR(g.factor(0).potential.log_value(xs), -x * x, 1e-14);
  }
}

TEST(Graph, ConditionEmptyEvidenceIsIdentity) {
  auto g = pair_graph();
  EXPECT_EQ(to_json(condition(g, {})), to_json(g));
}

TEST(Graph, ConditionAllObserved) {
  std::mt19937_64 rng(5);
  auto g = random_hybrid(rng, 3, 3);
  Evidence e;
  std::vector<double> x(g.num_variables());
  std::uniform_real_distribution<double> u(-2, 2);
  for (std::size_t i = 0; i < g.num_variables(); ++i) {
    x[i] = g.variable(i).domain.is_discrete() ? double(i % 2) : u(rng);
    e.entries[g.variable(i).id] = x[i];
  }
  auto c = condition(g, e);
  EXPECT_EQ(c.num_variables(), 0u);
  EXPECT_EQ(c.num_factors(), 0u);
  double direct = 0.0;  // oracle: evaluate every potential at the evidence point
  for (std::size_t f = 0; f < g.num_factors(); ++f) {
    std::vector<double> xc;
    for (std::size_t v : g.scope(f)) xc.push_back(x[v]);
    direct += g.factor(f).potential.log_value(xc);
  }
  EXPECT_NEAR(c.log_constant(), direct, 1e-12);
}

TEST(Graph, InvalidEvidence) {
  auto g = build_graph({{"d", Domain::discrete(2), {}}, {"p", Domain::continuous(0, 10), {}}}, {});
  try {
    condition(g, Evidence{{{"d", 2.0}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidEvidenceValue);
  }
  EXPECT_THROW(condition(g, Evidence{{{"p", 11.0}}}), Error);
  EXPECT_THROW(condition(g, Evidence{{{"zz", 1.0}}}), Error);
}

// Property: sequential conditioning on disjoint evidence equals joint conditioning.
TEST(Graph, SequentialConditioningProperty) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = random_hybrid(rng, 4, 5);
    Evidence e1, e2, both;
    std::bernoulli_distribution coin(0.3);
    for (std::size_t i = 0; i < g.num_variables(); ++i) {
      if (!coin(rng)) continue;
      const double v = g.variable(i).domain.is_discrete() ? double(rng() % 2) : u(rng);
      (i % 2 ? e1 : e2).entries[g.variable(i).id] = v;
      both.entries[g.variable(i).id] = v;
    }
    auto seq = condition(condition(g, e1), e2);
    auto joint = condition(g, both);
    ASSERT_EQ(seq.num_variables(), joint.num_variables());
    ASSERT_EQ(seq.num_factors(), joint.num_factors());
    for (int pt = 0; pt < 5; ++pt) {
      std::vector<double> x(seq.num_variables());
      for (std::size_t i = 0; i < x.size(); ++i)
        x[i] = seq.variable(i).domain.is_discrete() ? double(rng() % 2) : u(rng);
      EXPECT_NEAR(seq.log_score(x) + seq.log_constant(), joint.log_score(x) + joint.log_constant(), 1e-10);
    }
  }
}

TEST(Graph, JsonRoundTrip) {
  std::mt19937_64 rng(23);
  auto g = random_hybrid(rng, 3, 4);
  auto j = to_json(g);
  auto back = graph_from_json(json::parse(j.dump()));
  EXPECT_EQ(to_json(back), j);
  auto b = build_graph({{"p", Domain::continuous(0, 10), std::string("popularity")}}, {}, 1.5, {{"family", "x"}});
  auto jb = to_json(b);
  EXPECT_EQ(jb["variables"][0]["domain"]["lo"], 0.0);
  EXPECT_EQ(to_json(Domain::continuous()), json::parse(R"({"kind":"continuous","lo":"-inf","hi":"inf"})"));
  EXPECT_EQ(to_json(graph_from_json(jb)), jb);
}
