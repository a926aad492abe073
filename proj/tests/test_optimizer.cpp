#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "lhvi/optimizer.hpp"

using namespace lhvi;

TEST(Optimizer, ZeroGradientLeavesParams) {
  std::vector<double> p{1.5, -2.0};
  AdamState s(2);
  adam_step(p, std::vector<double>{0.0, 0.0}, s);
  EXPECT_EQ(p, (std::vector<double>{1.5, -2.0}));
  EXPECT_EQ(s.t, 1u);
}

TEST(Optimizer, FirstStepIsLearningRate) {
  std::vector<double> p{0.0};
  AdamState s(1);
  adam_step(p, std::vector<double>{1.0}, s);
  EXPECT_NEAR(p[0], -0.2 / (1.0 + 1e-8), 1e-15);
}

// Oracle: the scalar Adam recurrence written out directly.
TEST(Optimizer, ScalarQuadraticRecurrence) {
  AdamConfig cfg;
  cfg.lr = 0.05;
  std::vector<double> p{1.0};
  AdamState s(1, cfg);
  double th = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 1000; ++t) {
    adam_step(p, std::vector<double>{2.0 * p[0]}, s);
    const double g = 2.0 * th;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    th -= 0.05 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  EXPECT_NEAR(p[0], th, 1e-12);
  EXPECT_LT(std::abs(p[0]), 1e-3);
}

TEST(Optimizer, StepDisplacementBounded) {
  AdamConfig cfg;
  cfg.lr = 1e-3;
  std::vector<double> p(10, 0.0), g{1, -2, 3, -4, 5, 0.1, -0.2, 7, 8, -9};
  AdamState s(10, cfg);
  adam_step(p, g, s);
  double n = 0;
  for (double x : p) n += x * x;
  EXPECT_LE(std::sqrt(n), 1e-3 * std::sqrt(10.0) + 1e-15);
}

TEST(Optimizer, NonFiniteGradient) {
  std::vector<double> p{0.0};
  AdamState s(1);
  try {
    adam_step(p, std::vector<double>{NAN}, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteGradient);
  }
}

TEST(Optimizer, ConvergedPointReturnsImmediately) {
  auto f = [](std::span<const double> x, std::vector<double>& g) {
    g.assign(x.size(), 0.0);
    return 3.0;
  };
  auto r = minimize(f, {1.0, 2.0}, {});
  EXPECT_EQ(r.iterations, 0u);
  EXPECT_EQ(r.stop_reason, "grad_tol");
  EXPECT_EQ(r.trace.records.size(), 1u);
}

TEST(Optimizer, QuadraticBowl) {
  std::vector<double> c{1, -2, 3, 0.5, -0.5, 2, -3, 1.5, 0, 4};
  auto f = [&](std::span<const double> x, std::vector<double>& g) {
    g.resize(x.size());
    double v = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double s = 1.0 + i;
      v += 0.5 * s * (x[i] - c[i]) * (x[i] - c[i]);
      g[i] = s * (x[i] - c[i]);
    }
    return v;
  };
  MinimizeConfig cfg;
  cfg.max_iters = 5000;
  cfg.obj_tol = 0;
  auto r = minimize(f, std::vector<double>(10, 0.0), cfg);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(r.params[i], c[i], 1e-4);
  EXPECT_EQ(r.stop_reason, "grad_tol");
}

TEST(Optimizer, BestSeenNeverWorseThanStart) {
  // oscillating objective where Adam overshoots
  auto f = [](std::span<const double> x, std::vector<double>& g) {
    g = {std::cos(5 * x[0]) * 5 + 0.1 * x[0]};
    return std::sin(5 * x[0]) + 0.05 * x[0] * x[0];
  };
  std::vector<double> g0;
  const double f0 = f(std::vector<double>{0.3}, g0);
  MinimizeConfig cfg;
  cfg.max_iters = 50;
  auto r = minimize(f, {0.3}, cfg);
  EXPECT_LE(r.objective, f0);
}

TEST(Optimizer, DivergenceDetected) {
  auto f = [](std::span<const double> x, std::vector<double>& g) {
    g = {1.0};
    return x[0] < -0.5 ? NAN : x[0];
  };
  try {
    minimize(f, {0.0}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DivergenceDetected);
  }
  MinimizeConfig cfg;
  cfg.throw_on_divergence = false;
  auto r = minimize(f, {0.0}, cfg);
  EXPECT_TRUE(r.diverged);
  EXPECT_GE(r.trace.records.size(), 2u);
}

TEST(Optimizer, MultiStartFindsGlobalWell) {
  // deep well at x = 3, shallow at x = -3
  auto f = [](std::span<const double> x, std::vector<double>& g) {
    const double a = x[0] - 3, b = x[0] + 3;
    const double ea = std::exp(-a * a), eb = std::exp(-b * b);
    g = {2 * a * 2.0 * ea + 2 * b * 1.0 * eb + 0.002 * x[0]};
    return -2.0 * ea - 1.0 * eb + 0.001 * x[0] * x[0];
  };
  auto init = [](std::uint64_t s) { return std::vector<double>{-6.0 + 12.0 * (s % 1000) / 1000.0}; };
  MinimizeConfig cfg;
  cfg.seed = 42;
  cfg.adam.lr = 0.05;
  auto r1 = multi_start(f, init, 10, cfg);
  EXPECT_NEAR(r1.best.params[0], 3.0, 0.05);
  auto r2 = multi_start(f, init, 10, cfg);
  EXPECT_EQ(r1.best_index, r2.best_index);
  auto single = multi_start(f, init, 1, cfg);
  auto direct = minimize(f, init(derive_seed(42, 0)), cfg);
  EXPECT_EQ(single.best.params, direct.params);
}

TEST(Optimizer, TraceCsv) {
  RunTrace t;
  t.add({0, 0.0, 1.5, 2.0, ""});
  t.add({1, 0.5, 1.0, 1.0, "split"});
  EXPECT_THROW(t.add({1, 0.6, 1.0, 1.0, ""}), Error);
  std::istringstream in(t.csv());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "iteration,time_ms,objective,grad_norm,event");
  std::getline(in, line);
  std::getline(in, line);
  EXPECT_EQ(line, "1,0.5,1,1,split");
}
