#include <gtest/gtest.h>

#include <random>
#include <set>

#include "oracles.hpp"
#include "stabcheck/bench.hpp"
#include "stabcheck/bmc.hpp"

using namespace stabcheck;

namespace {

CompiledDiagram builtin(const char* spec) { return CompiledDiagram(parse_model(bench::resolve(spec).source)); }

CompiledDiagram scalar(double a) {
  return CompiledDiagram(parse_model("x = UnitDelay <- g\ng = Gain(" + format_real(a) + ") <- x\nprobe x = x\n"));
}

const mtl::Formula& step_assertion() {
  static const mtl::Formula f = mtl::parse_formula(bench::kStepAssertion);
  return f;
}

const FixedPointFormat q44 = FixedPointFormat::make(8, 4);
const FixedPointFormat q88 = FixedPointFormat::make(16, 8);

std::set<QState> as_set(const ReachVerdict& v) { return {v.reachable.begin(), v.reachable.end()}; }

QState raw(const Vector& x, const FixedPointFormat& fmt) {
  QState s;
  for (double v : x) s.push_back(static_cast<std::int64_t>(std::ldexp(v, fmt.fraction_bits)));
  return s;
}

void expect_path_is_a_run(const CompiledDiagram& cd, const std::vector<Vector>& path, const FixedPointFormat& fmt) {
  const auto sem = Semantics::fixed(fmt);
  for (std::size_t i = 0; i + 1 < path.size(); ++i)
    ASSERT_EQ(raw(step(cd, path[i], sem).next_state, fmt), raw(path[i + 1], fmt)) << "hop " << i;
}

}  // namespace

TEST(Unroll, StableScalarHolds) {
  const auto v = unroll_check(builtin("scalar_loop:stable"), Vector{2.0}, 10, step_assertion(), Semantics::fixed(q88));
  EXPECT_EQ(v.outcome, BmcOutcome::AllHold);
  EXPECT_EQ(v.trace.size(), 10u);
  EXPECT_EQ(v.semantics, "fixed:Q8.8");
}

TEST(Unroll, UnstableScalarFailsEarly) {
  const auto v = unroll_check(builtin("scalar_loop:unstable_bmc"), Vector{2.0}, 10, step_assertion(), Semantics::fixed(q88));
  EXPECT_NE(v.outcome, BmcOutcome::AllHold);
  EXPECT_LT(v.step, 10u);
  EXPECT_EQ(v.trace.size(), v.step + 1);
}

TEST(Unroll, ControllerHoldsUnderRealSemantics) {
  for (std::size_t k : {10u, 20u, 40u, 80u}) {
    const auto v = unroll_check(builtin("controlled:stable"), Vector{1, 1}, k, step_assertion(), Semantics::real());
    EXPECT_EQ(v.outcome, BmcOutcome::AllHold) << k;
  }
}

TEST(Unroll, RejectsTemporalAssertionsAndZeroBound) {
  const auto cd = builtin("scalar_loop:stable");
  EXPECT_THROW(unroll_check(cd, Vector{1.0}, 5, mtl::parse_formula("F (dV > 0)"), Semantics::real()), Error);
  EXPECT_THROW(unroll_check(cd, Vector{1.0}, 0, step_assertion(), Semantics::real()), Error);
}

TEST(Unroll, MonotoneInTheBound) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3, 3);
  int violated = 0;
  for (const char* spec : {"scalar_loop:unstable", "matrix_loop:unstable", "controlled:unstable", "controlled:unstable_neg"}) {
    const auto cd = builtin(spec);
    for (int i = 0; i < 20; ++i) {
      Vector x0(cd.state_dim());
      for (double& x : x0) x = u(rng);
      for (const auto& sem : {Semantics::real(), Semantics::fixed(q88)}) {
        const auto base = unroll_check(cd, x0, 60, step_assertion(), sem);
        if (base.outcome == BmcOutcome::AllHold) continue;
        ++violated;
        for (std::size_t k = base.step + 1; k <= base.step + 20; ++k) {
          const auto v = unroll_check(cd, x0, k, step_assertion(), sem);
          ASSERT_EQ(v.outcome, base.outcome) << spec << " k=" << k;
          ASSERT_EQ(v.step, base.step);
        }
      }
    }
  }
  EXPECT_GT(violated, 100);
}

TEST(Reach, HalvingLoopAtQ22) {
  const auto fmt = FixedPointFormat::make(4, 2);
  const auto cd = scalar(0.5);
  const auto init = InitSet::from_point(Vector{1.0});
  const std::set<QState> expected{{4}, {2}, {1}, {0}};
  EXPECT_EQ(brute_force_reach(cd, init, fmt), expected);
  const auto v = reach_check(cd, init, fmt, mtl::parse_formula("x <= 1"));
  EXPECT_EQ(as_set(v), expected);
  EXPECT_EQ(v.reachable, (std::vector<QState>{{4}, {2}, {1}, {0}}));
  EXPECT_EQ(v.outcome, ReachOutcome::PropertyHolds);
  EXPECT_EQ(v.state_space, 16u);
}

TEST(Reach, EmptyInitAndFixpoint) {
  const auto fmt = FixedPointFormat::make(4, 2);
  EXPECT_TRUE(brute_force_reach(scalar(0.5), InitSet{}, fmt).empty());
  const auto v = reach_check(scalar(0.5), InitSet{}, fmt, mtl::parse_formula("x <= 1"));
  EXPECT_TRUE(v.reachable.empty());
  EXPECT_EQ(v.outcome, ReachOutcome::PropertyHolds);
  EXPECT_EQ(brute_force_reach(scalar(1.0), InitSet::from_point(Vector{-0.75}), fmt), (std::set<QState>{{-3}}));
}

TEST(Reach, BenchmarkVerdictsAtQ44) {
  const auto holds = [](const char* spec) {
    const auto cd = builtin(spec);
    return reach_check(cd, InitSet::from_point(cd.initial_state()), q44, step_assertion()).outcome;
  };
  EXPECT_EQ(holds("scalar_loop:stable"), ReachOutcome::PropertyHolds);
  EXPECT_EQ(holds("matrix_loop:stable"), ReachOutcome::PropertyHolds);
  EXPECT_EQ(holds("nonlinear:stable"), ReachOutcome::PropertyHolds);
  EXPECT_NE(holds("scalar_loop:unstable"), ReachOutcome::PropertyHolds);
  EXPECT_EQ(holds("matrix_loop:unstable"), ReachOutcome::OverflowReached);
  EXPECT_EQ(holds("controlled:unstable"), ReachOutcome::OverflowReached);
}

TEST(Reach, CeilingIsAResourceError) {
  const auto cd = builtin("controlled:stable");
  try {
    reach_check(cd, InitSet::from_point(cd.initial_state()), q88, step_assertion());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Resource);
  }
  ReachOptions wide;
  wide.ceiling = std::uint64_t{1} << 32;
  EXPECT_NO_THROW(reach_check(builtin("scalar_loop:stable"), InitSet::from_point(Vector{2.0}), q88, step_assertion(), wide));
}

TEST(Reach, MatchesBruteForceOnRandomDiagrams) {
  std::mt19937_64 rng(99);
  const auto prop = mtl::parse_formula("v <= 1");
  for (int i = 0; i < 200; ++i) {
    const CompiledDiagram cd(parse_model(oracle::random_diagram(rng)));
    const int total = cd.state_dim() == 1 ? 4 + static_cast<int>(rng() % 9) : 4 + static_cast<int>(rng() % 5);
    const auto fmt = FixedPointFormat::make(total, total / 2);
    const InitSet init = rng() % 2 ? InitSet::from_box(InitBox::uniform(cd.state_dim(), -1, 1))
                                   : InitSet::from_point(cd.initial_state());
    const auto v = reach_check(cd, init, fmt, prop);
    ASSERT_EQ(as_set(v), brute_force_reach(cd, init, fmt)) << i;
    ASSERT_EQ(v.reachable.size(), as_set(v).size());
  }
}

TEST(Reach, MatchesBruteForceOnBenchmarks) {
  for (const auto& b : bench::registry())
    for (const auto& var : b.variants) {
      const CompiledDiagram cd(parse_model(var.source));
      const int max_bits = cd.state_dim() == 1 ? 16 : 8;
      for (int bits = 4; bits <= max_bits; bits += 2) {
        const auto fmt = FixedPointFormat::make(bits, bits / 2);
        const auto init = InitSet::from_box(InitBox::uniform(cd.state_dim(), -1, 1));
        ASSERT_EQ(as_set(reach_check(cd, init, fmt, step_assertion())), brute_force_reach(cd, init, fmt))
            << b.name << ":" << var.name << " bits " << bits;
      }
    }
}

TEST(Reach, CounterexamplesAreShortestRuns) {
  std::mt19937_64 rng(17);
  const auto prop = mtl::parse_formula("v <= 0.5");
  int checked = 0;
  for (int i = 0; i < 200; ++i) {
    const CompiledDiagram cd(parse_model(oracle::random_diagram(rng)));
    const auto fmt = FixedPointFormat::make(8, 4);
    const InitSet init = InitSet::from_box(InitBox::uniform(cd.state_dim(), -0.5, 0.5));
    const auto v = reach_check(cd, init, fmt, prop);
    std::vector<QState> starts(v.reachable.begin(), v.reachable.begin() + static_cast<std::ptrdiff_t>(v.init_states));
    const auto dist = oracle::layer_distances(cd, starts, fmt);
    for (const auto* path : {&v.path, &v.violation}) {
      if (path->empty()) continue;
      ++checked;
      expect_path_is_a_run(cd, *path, fmt);
      ASSERT_EQ(dist.at(raw(path->back(), fmt)), path->size() - 1);
    }
    if (v.outcome != ReachOutcome::PropertyHolds) {
      ASSERT_EQ(v.trace.size(), v.path.size());
    }
  }
  EXPECT_GT(checked, 50);
}

TEST(Reach, AgreesWithUnrolling) {
  // From a single start the reachable set is one trajectory, so both engines
  // see the same rows in the same order.
  for (const auto& b : bench::registry())
    for (const auto& var : b.variants) {
      const CompiledDiagram cd(parse_model(var.source));
      for (const auto& fmt : {q44, FixedPointFormat::make(6, 3)}) {
        const Vector x0 = cd.initial_state();
        const auto r = reach_check(cd, InitSet::from_point(x0), fmt, step_assertion());
        const auto u = unroll_check(cd, x0, r.reachable.size() + 1, step_assertion(), Semantics::fixed(fmt));
        const std::string where = b.name + ":" + var.name + " " + fmt.name();
        EXPECT_EQ(r.outcome == ReachOutcome::PropertyHolds, u.outcome == BmcOutcome::AllHold) << where;
        if (u.outcome == BmcOutcome::OverflowAtStep) {
          EXPECT_EQ(r.outcome, ReachOutcome::OverflowReached) << where;
          EXPECT_EQ(r.path.size(), u.step + 1) << where;
        }
        if (u.outcome == BmcOutcome::ViolatedAtStep) {
          EXPECT_EQ(r.violation.size(), u.step + 1) << where;
        }
      }
    }
}
