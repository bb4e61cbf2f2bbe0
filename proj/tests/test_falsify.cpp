#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "stabcheck/bench.hpp"
#include "stabcheck/falsify.hpp"

using namespace stabcheck;

namespace {

CompiledDiagram builtin(const char* spec) { return CompiledDiagram(parse_model(bench::resolve(spec).source)); }

FalsifyOptions opts(SearchMethod m, std::uint64_t seed, SearchGoal g = SearchGoal::Violate) {
  FalsifyOptions o;
  o.method = m;
  o.seed = seed;
  o.goal = g;
  return o;
}

const SearchMethod kAll[] = {SearchMethod::UniformRandom, SearchMethod::SimulatedAnnealing, SearchMethod::CrossEntropy};

}  // namespace

TEST(Sampling, UniformBox) {
  Rng rng(1);
  const InitBox point{{{3, 3}}};
  for (int i = 0; i < 10; ++i) EXPECT_EQ(sample_uniform(point, rng), Vector{3});

  const InitBox box = InitBox::uniform(1, -10, 10);
  double sum = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) sum += sample_uniform(box, rng)[0];
  const double sigma = 20 / std::sqrt(12.0) / 100;
  EXPECT_LT(std::abs(sum / n), 3 * sigma);

  const InitBox two{{{-1, 0}, {5, 6}}};
  for (int i = 0; i < 1000; ++i) {
    const Vector x = sample_uniform(two, rng);
    ASSERT_GE(x[0], -1);
    ASSERT_LE(x[0], 0);
    ASSERT_GE(x[1], 5);
    ASSERT_LE(x[1], 6);
  }
}

TEST(Box, ParseAndValidate) {
  EXPECT_EQ(parse_box("-10,10", 2).bounds, (std::vector<std::pair<double, double>>{{-10, 10}, {-10, 10}}));
  EXPECT_EQ(parse_box("[-1 1; 0 2]", 2).bounds, (std::vector<std::pair<double, double>>{{-1, 1}, {0, 2}}));
  EXPECT_THROW((InitBox{{{1, 0}}}).validate(1), Error);
  EXPECT_THROW(InitBox::uniform(2, 0, 1).validate(1), Error);
}

TEST(Annealing, MetropolisRule) {
  EXPECT_TRUE(metropolis_accept(-1.0, 1e-300, 0.999));
  EXPECT_TRUE(metropolis_accept(-1e-9, 5.0, 0.999));
  EXPECT_FALSE(metropolis_accept(1.0, 1e-300, 0.0));
  EXPECT_FALSE(metropolis_accept(1e-3, 1e-9, 1e-300));
  // exp(-1) ≈ 0.3679
  EXPECT_TRUE(metropolis_accept(1.0, 1.0, 0.36));
  EXPECT_FALSE(metropolis_accept(1.0, 1.0, 0.37));
}

TEST(Annealing, LowerProposalAlwaysAccepted) {
  Rng rng(3);
  const InitBox box = InitBox::uniform(1, -10, 10);
  const Objective f = [](const Vector& x) { return x[0] * x[0]; };
  Candidate cur{{5.0}, 25.0};
  for (int i = 0; i < 500; ++i) {
    const auto m = sa_step(cur, 1e-12, box, rng, f);
    if (m.proposal.robustness < cur.robustness) {
      ASSERT_TRUE(m.accepted);
    } else if (m.proposal.robustness > cur.robustness) {
      ASSERT_FALSE(m.accepted);
    }
    ASSERT_GE(m.proposal.state[0], -10);
    ASSERT_LE(m.proposal.state[0], 10);
    cur = m.next;
  }
  EXPECT_THROW(sa_step(cur, 0.0, box, rng, f), Error);
}

TEST(Annealing, QuadraticCalibration) {
  const InitBox box = InitBox::uniform(1, -10, 10);
  const Objective f = [](const Vector& x) { return x[0] * x[0]; };
  int reached = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    Candidate cur{{9.0}, 81.0};
    const double t0 = 10.0;
    for (int k = 0; k < 200; ++k) {
      cur = sa_step(cur, t0 * std::pow(0.95, k), box, rng, f).next;
      if (std::abs(cur.state[0]) < 1) {
        ++reached;
        break;
      }
    }
  }
  EXPECT_GE(reached, 95);
}

TEST(CrossEntropy, EliteFit) {
  std::vector<Candidate> pop;
  for (int i = 0; i < 100; ++i) pop.push_back({{static_cast<double>(i)}, static_cast<double>(i)});
  EXPECT_EQ(elite_count(100, 0.1), 10u);
  const auto g = ce_iteration(pop, 0.1, InitBox::uniform(1, -100, 100));
  EXPECT_DOUBLE_EQ(g.mean[0], 4.5);  // mean of 0..9
  EXPECT_NEAR(g.stddev[0], std::sqrt(8.25), 1e-12);
}

TEST(CrossEntropy, StddevFloor) {
  std::vector<Candidate> pop(20, Candidate{{2.0, -1.0}, 0.0});
  const InitBox box{{{-10, 10}, {0, 1}}};
  const auto g = ce_iteration(pop, 0.1, box);
  EXPECT_EQ(g.mean, (Vector{2.0, -1.0}));
  EXPECT_DOUBLE_EQ(g.stddev[0], 20e-3);
  EXPECT_DOUBLE_EQ(g.stddev[1], 1e-3);
  EXPECT_THROW(ce_iteration(std::vector<Candidate>(9, pop[0]), 0.1, box), Error);
  EXPECT_THROW(ce_iteration(pop, 1.0, box), Error);
}

TEST(CrossEntropy, ShiftedQuadraticCalibration) {
  const InitBox box = InitBox::uniform(1, -10, 10);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    std::optional<GaussianSampler> g;
    for (int it = 0; it < 5; ++it) {
      std::vector<Candidate> pop;
      for (int i = 0; i < 100; ++i) {
        Vector x = g ? g->sample(box, rng) : sample_uniform(box, rng);
        const double r = (x[0] - 4) * (x[0] - 4);
        pop.push_back({std::move(x), r});
      }
      g = ce_iteration(pop, 0.1, box);
    }
    ASSERT_NEAR(g->mean[0], 4.0, 0.5) << "seed " << seed;
  }
}

TEST(Falsify, UnstableScalarFalsifiedOnFirstSample) {
  const auto cd = builtin("scalar_loop:unstable");
  const auto f = mtl::parse_formula("G (dV <= 0)");
  const InitBox box = InitBox::uniform(1, -10, 10);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto r = falsify(cd, f, box, opts(SearchMethod::UniformRandom, seed));
    ASSERT_EQ(r.verdict, FalsificationVerdict::Falsified);
    ASSERT_EQ(r.samples_used, 1u);
  }
}

TEST(Falsify, StableScalarHasNoInstabilityWitness) {
  const auto cd = builtin("scalar_loop:stable");
  const auto f = mtl::parse_formula("F (dV > 0)");
  const auto r = falsify(cd, f, InitBox::uniform(1, -10, 10), opts(SearchMethod::SimulatedAnnealing, 1, SearchGoal::Witness));
  EXPECT_EQ(r.verdict, FalsificationVerdict::NotFalsified);
  EXPECT_EQ(r.samples_used, 100u);
  EXPECT_EQ(r.searched_property, "!(F (dV > 0))");
}

// Under plain violation search F(dV > 0) is violated by every stable trace:
// its robustness is max dV < 0. The witness goal is what the tables use.
TEST(Falsify, ViolateGoalRefutesEventualIncreaseOnStableSystems) {
  const auto cd = builtin("scalar_loop:stable");
  const auto r = falsify(cd, mtl::parse_formula("F (dV > 0)"), InitBox::uniform(1, -10, 10),
                         opts(SearchMethod::UniformRandom, 1));
  EXPECT_EQ(r.verdict, FalsificationVerdict::Falsified);
}

TEST(Falsify, EquilibriumPointBox) {
  for (const char* spec : {"scalar_loop:stable", "matrix_loop:stable", "controlled:stable", "nonlinear:stable"}) {
    const auto cd = builtin(spec);
    const InitBox box = InitBox::point(Vector(cd.state_dim(), 0.0));
    for (SearchMethod m : kAll) {
      const auto r = falsify(cd, mtl::parse_formula("F (dV > 0)"), box, opts(m, 3, SearchGoal::Witness));
      EXPECT_EQ(r.verdict, FalsificationVerdict::NotFalsified) << spec;
      EXPECT_EQ(r.best_state, Vector(cd.state_dim(), 0.0));
      EXPECT_EQ(r.best_robustness, 0.0);
    }
  }
}

TEST(Falsify, ReportInvariants) {
  const auto f = mtl::parse_formula("G (dV <= 0)");
  for (const char* spec : {"scalar_loop:stable", "matrix_loop:unstable", "controlled:unstable_neg", "nonlinear:stable"}) {
    const auto cd = builtin(spec);
    const InitBox box = InitBox::uniform(cd.state_dim(), -10, 10);
    for (SearchMethod m : kAll)
      for (std::uint64_t seed : {0u, 1u}) {
        FalsifyOptions o = opts(m, seed);
        o.budget = 37;
        const auto r = falsify(cd, f, box, o);
        ASSERT_LE(r.samples_used, o.budget);
        ASSERT_EQ(r.log.size(), r.samples_used) << "every simulation is logged";
        // Replay every logged sample bit-exactly.
        for (const auto& s : r.log) {
          if (!s.error.empty()) continue;
          ASSERT_EQ(replay(cd, f, s.state, o.horizon), s.robustness);
        }
        if (r.verdict == FalsificationVerdict::Falsified) {
          ASSERT_LT(r.best_robustness, 0);
          ASSERT_TRUE(r.witness);
          ASSERT_EQ(oracle::truth(f, *r.witness), std::optional<bool>(false));
          ASSERT_EQ(replay(cd, f, r.best_state, o.horizon), r.best_robustness);
        } else {
          ASSERT_EQ(r.samples_used, o.budget);
        }
        // Same seed, same report.
        const auto again = falsify(cd, f, box, o);
        ASSERT_EQ(again.best_state, r.best_state);
        ASSERT_EQ(again.samples_used, r.samples_used);
      }
  }
}

TEST(Falsify, SimulationErrorsAreLoggedAndCounted) {
  // 1/x at x = 0 throws; the box makes x = 0 the only start.
  const CompiledDiagram cd(parse_model(
      "x = UnitDelay <- y\none = Constant(1)\ny = Divide <- one, x\nprobe y = y\n"));
  FalsifyOptions o = opts(SearchMethod::UniformRandom, 0);
  o.budget = 5;
  const auto r = falsify(cd, mtl::parse_formula("G (y < 10)"), InitBox::point(Vector{0.0}), o);
  EXPECT_EQ(r.samples_used, 5u);
  EXPECT_EQ(r.verdict, FalsificationVerdict::NotFalsified);
  for (const auto& s : r.log) EXPECT_NE(s.error.find("division by zero"), std::string::npos);
}

TEST(Falsify, RejectsBadArguments) {
  const auto cd = builtin("scalar_loop:stable");
  const auto f = mtl::parse_formula("G (dV <= 0)");
  FalsifyOptions o;
  o.budget = 0;
  EXPECT_THROW(falsify(cd, f, InitBox::uniform(1, -1, 1), o), Error);
  EXPECT_THROW(falsify(cd, f, InitBox::uniform(2, -1, 1), FalsifyOptions{}), Error);
  FalsifyOptions ce;
  ce.method = SearchMethod::CrossEntropy;
  ce.ce.population = 5;
  EXPECT_THROW(falsify(cd, f, InitBox::uniform(1, -1, 1), ce), Error);
}
