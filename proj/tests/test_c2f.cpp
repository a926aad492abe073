#include <cmath>

#include <gtest/gtest.h>

#include "lhvi/c2f.hpp"
#include "lhvi/fit.hpp"
#include "lhvi/inference.hpp"
#include "lhvi/models.hpp"

using namespace lhvi;

namespace {

C2FConfig quick(double eps) {
  C2FConfig c;
  c.epsilon = eps;
  c.stage_iters = 20;
  c.final.max_iters = 300;
  return c;
}

}  // namespace

TEST(C2F, NoSplitWhenClusterIsTight) {
  auto m = gen_rgm(10, 2, 1, {0.3});
  auto r = run_c2f(m.graph, m.evidence, quick(1e9));
  EXPECT_EQ(r.splits, 0u);
  EXPECT_EQ(r.cluster_counts.front(), 1u);
  for (const auto& rec : r.trace.records) EXPECT_NE(rec.event, "split");
}

TEST(C2F, DefaultEpsilonFromEvidenceRange) {
  auto g = build_graph({{"a", Domain::continuous(), {}}, {"b", Domain::continuous(), {}}}, {});
  Evidence e{{{"a", -1.0}, {"b", 3.0}}};
  EXPECT_DOUBLE_EQ(detail::default_epsilon(g, e), 0.05 * 16.0);
  auto gb = build_graph({{"a", Domain::continuous(0, 10), {}}}, {});
  EXPECT_DOUBLE_EQ(detail::default_epsilon(gb, Evidence{{{"a", 2.0}}}), 0.05 * 100.0);
}

TEST(C2F, ClusterCountsGrowWithSplits) {
  auto m = gen_rgm(20, 3, 2, {0.2});
  auto r = run_c2f(m.graph, m.evidence, quick(5.0));
  ASSERT_GE(r.splits, 1u);
  for (std::size_t i = 1; i < r.cluster_counts.size(); ++i) {
    EXPECT_GE(r.cluster_counts[i], r.cluster_counts[i - 1]);
    EXPECT_LE(r.cluster_counts[i], 2 * r.cluster_counts[i - 1]);
  }
  std::size_t events = 0;
  for (const auto& rec : r.trace.records) events += rec.event == "split";
  EXPECT_EQ(events, r.splits);
  EXPECT_EQ(r.trace.records.back().event.empty() || r.trace.records.back().event == "absorb", true);
  // each split event opens a stage
  for (std::size_t s = 1; s < r.stage_starts.size(); ++s) {
    const auto it = r.stage_starts[s];
    for (const auto& rec : r.trace.records)
      if (rec.iteration == it) EXPECT_FALSE(rec.event.empty());
  }
}

// With zero optimizer iterations per stage the parameters seen by a split are
// the initial ones; every new unclamped super variable must carry the block
// of the super variable its first member belonged to.
TEST(C2F, ChildrenInheritParentParameters) {
  auto m = gen_rgm(12, 2, 3, {0.3});
  auto cfg = quick(1.0);
  cfg.stage_iters = 0;
  cfg.K = 2;
  auto st = c2f_init(m.graph, m.evidence, cfg);
  const auto before = st.q;
  const auto before_cg = st.cg;
  c2f_step(st, cfg);
  ASSERT_EQ(st.splits, 1u);
  EXPECT_EQ(st.q.weight_logits, before.weight_logits);
  for (std::size_t s = 0; s < st.cg.super_variables.size(); ++s) {
    if (st.q.marginals[s].clamped) continue;
    const auto parent = before_cg.variable_to_super[st.cg.super_variables[s].members.front()];
    EXPECT_EQ(st.q.marginals[s].params, before.marginals[parent].params);
  }
  EXPECT_EQ(st.pending_event, "split");
}

TEST(C2F, InheritCopiesAdamMoments) {
  std::vector<Domain> d1{Domain::continuous(), Domain::continuous()};
  MixtureMeanField old_q(1, d1);
  old_q.marginals[0].params = {1.0, 0.1};
  old_q.marginals[1].params = {2.0, 0.2};
  AdamState old_adam(old_q.num_free_parameters());
  old_adam.t = 7;
  for (std::size_t i = 0; i < old_adam.m.size(); ++i) old_adam.m[i] = i + 1, old_adam.v[i] = 10.0 * (i + 1);
  // new graph: three super variables, the last two both children of old 1
  MixtureMeanField fresh(1, {Domain::continuous(), Domain::continuous(), Domain::continuous()});
  AdamState adam;
  detail::inherit(old_q, old_adam, {0, 1, 1}, fresh, adam);
  EXPECT_EQ(adam.t, 7u);
  EXPECT_EQ(fresh.marginals[2].params, old_q.marginals[1].params);
  EXPECT_EQ(adam.m, (std::vector<double>{1, 2, 3, 4, 5, 4, 5}));
  EXPECT_EQ(adam.v[6], 50.0);
}

TEST(C2F, FinalAnswerMatchesGroundFit) {
  auto m = gen_rgm(8, 2, 4, {0.25});
  auto cfg = quick(2.0);
  cfg.final.max_iters = 3000;
  auto r = run_c2f(m.graph, m.evidence, cfg);
  FitConfig fc;
  fc.minimize.max_iters = 3000;
  auto ground = fit(m.graph, m.evidence, fc);
  EXPECT_LT(avg_l1_error(marginal_means(expand(r.lifted, r.cg)), marginal_means(ground.q)), 1e-2);
}

TEST(C2F, DiscreteEvidenceIsAbsorbedUpFront) {
  auto m = gen_paper_popularity(6, 2, 5);
  C2FConfig cfg = quick(0.0);
  auto st = c2f_init(m.graph, m.evidence, cfg);
  for (const auto& v : st.graph.variables()) {
    if (!v.domain.is_discrete()) continue;
    EXPECT_FALSE(m.evidence.entries.count(v.id)) << v.id;
  }
  EXPECT_GT(cfg.epsilon, 0.0);
  EXPECT_DOUBLE_EQ(cfg.epsilon, 0.05 * 100.0);
}
