// Build a scalar loop, certify it, then look for a counterexample.
#include <iostream>

#include "stabcheck/stabcheck.hpp"

using namespace stabcheck;

int main() {
  const CompiledDiagram cd(parse_model(R"(
x     = UnitDelay(2) <- xn
xn    = Gain(0.9) <- x
V     = DotSquare <- x
Vnext = DotSquare <- xn
dV    = Sum(+,-) <- Vnext, V
probe dV = dV
)"));

  const auto sol = solve_discrete_lyapunov(Matrix::scalar(0.9));
  std::cout << "P = " << format_matrix(sol.P) << "\n";

  const Trace t = simulate(cd, cd.initial_state(), 5, Semantics::real());
  std::cout << trace_to_csv(t);

  const auto g = mtl::parse_formula("G (dV <= 0)");
  std::cout << "robustness " << mtl::robustness(g, t) << "\n";

  FalsifyOptions opt;
  opt.seed = 1;
  const auto rep = falsify(cd, g, InitBox::uniform(1, -10, 10), opt);
  std::cout << to_string(rep.verdict) << " after " << rep.samples_used << " samples\n";

  const auto v = reach_check(cd, InitSet::from_point(Vector{2.0}), FixedPointFormat::make(8, 4),
                             mtl::parse_formula("dV <= 0"));
  std::cout << "reach Q4.4: " << to_string(v.outcome) << ", " << v.reachable.size() << " states\n";
}
