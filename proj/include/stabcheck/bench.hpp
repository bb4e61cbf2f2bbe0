#pragma once

#include <algorithm>
#include <future>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stabcheck/bmc.hpp"
#include "stabcheck/diagram.hpp"
#include "stabcheck/error.hpp"
#include "stabcheck/falsify.hpp"
#include "stabcheck/lyapunov.hpp"
#include "stabcheck/mtl.hpp"
#include "stabcheck/sim.hpp"

namespace stabcheck::bench {

struct Variant {
  std::string name;
  std::string description;
  std::string source;  // .sdg text
  LyapunovSpec lyapunov;
  bool stable = true;
  std::optional<Matrix> closed_loop;  // linear systems only
};

struct Benchmark {
  std::string name;
  std::string description;
  std::vector<Variant> variants;

  const Variant& variant(std::string_view v) const {
    for (const auto& x : variants)
      if (x.name == v) return x;
    std::string known;
    for (const auto& x : variants) known += (known.empty() ? "" : ", ") + x.name;
    throw Error(ErrorKind::InvalidArgument, "benchmark '" + name + "' has no variant '" + std::string(v) + "' (" + known + ")");
  }
};

// Controller data shared by every controlled variant.
inline const Matrix& plant_A() {
  static const Matrix a{{1.5, 0.5}, {0.5, 1.0}};
  return a;
}
inline const Matrix& plant_B() {
  static const Matrix b{{2.0}, {0.0}};
  return b;
}
inline const Matrix& stable_K() {
  static const Matrix k{{1.15, 0.57}};
  return k;
}
/// Lyapunov matrix as displayed (two decimals) for the stable controller.
inline const Matrix& displayed_P() {
  static const Matrix p{{2.26, 1.50}, {1.50, 4.06}};
  return p;
}

namespace detail {

inline std::string probes(std::initializer_list<const char*> names) {
  std::string s;
  for (const char* n : names) s += std::string("probe ") + n + " = " + n + "\n";
  return s;
}

inline std::string scalar_loop_source(double a, double x0) {
  return "# x(k+1) = a x(k), V = x^2\n"
         "x     = UnitDelay(" + format_real(x0) + ") <- xn\n"
         "xn    = Gain(" + format_real(a) + ") <- x\n"
         "V     = DotSquare <- x\n"
         "Vnext = DotSquare <- xn\n"
         "dV    = Sum(+,-) <- Vnext, V\n" +
         probes({"x", "V", "Vnext", "dV"});
}

inline std::string matrix_loop_source(const Matrix& a, const Matrix& x0) {
  return "# x(k+1) = A x(k), V = x'x\n"
         "x     = UnitDelay(" + format_matrix(x0) + ") <- xn\n"
         "xn    = MatrixGain(" + format_matrix(a) + ") <- x\n"
         "V     = DotSquare <- x\n"
         "Vnext = DotSquare <- xn\n"
         "dV    = Sum(+,-) <- Vnext, V\n" +
         probes({"x", "V", "Vnext", "dV"});
}

inline std::string controlled_source(const Matrix& k, const Matrix& x0) {
  return "# x(k+1) = A x(k) - B K x(k), V = x'Px\n"
         "x     = UnitDelay(" + format_matrix(x0) + ") <- xn\n"
         "Ax    = MatrixGain(" + format_matrix(plant_A()) + ") <- x\n"
         "u     = MatrixGain(" + format_matrix(k) + ") <- x\n"
         "Bu    = MatrixGain(" + format_matrix(plant_B()) + ") <- u\n"
         "xn    = Sum(+,-) <- Ax, Bu\n"
         "Px    = MatrixGain(" + format_matrix(displayed_P()) + ") <- x\n"
         "V     = DotSquare <- x, Px\n"
         "Pxn   = MatrixGain(" + format_matrix(displayed_P()) + ") <- xn\n"
         "Vnext = DotSquare <- xn, Pxn\n"
         "dV    = Sum(+,-) <- Vnext, V\n" +
         probes({"x", "u", "V", "Vnext", "dV"});
}

inline std::string nonlinear_source() {
  return "# x1' = x2/(1+x2^2), x2' = x1/(1+x2^2), V = x1^2 + x2^2\n"
         "x1    = UnitDelay(1) <- x1n\n"
         "x2    = UnitDelay(1) <- x2n\n"
         "one   = Constant(1)\n"
         "x1sq  = DotSquare <- x1\n"
         "x2sq  = DotSquare <- x2\n"
         "den   = Sum(+,+) <- one, x2sq\n"
         "x1n   = Divide <- x2, den\n"
         "x2n   = Divide <- x1, den\n"
         "V     = Sum(+,+) <- x1sq, x2sq\n"
         "x1nsq = DotSquare <- x1n\n"
         "x2nsq = DotSquare <- x2n\n"
         "Vnext = Sum(+,+) <- x1nsq, x2nsq\n"
         "dV    = Sum(+,-) <- Vnext, V\n" +
         probes({"x1", "x2", "V", "Vnext", "dV"});
}

inline Variant scalar(std::string name, double a, std::string desc) {
  return Variant{std::move(name), std::move(desc), scalar_loop_source(a, 2.0), QuadraticForm{Matrix::scalar(1.0)},
                 std::abs(a) < 1.0, Matrix::scalar(a)};
}

inline Variant matrix(std::string name, double s, std::string desc) {
  const Matrix a = s * Matrix::identity(2);
  return Variant{std::move(name), std::move(desc), matrix_loop_source(a, Matrix::column(Vector{1.0, 1.0})),
                 QuadraticForm{Matrix::identity(2)}, std::abs(s) < 1.0, a};
}

inline Variant controlled(std::string name, const Matrix& k, bool stable, std::string desc) {
  return Variant{std::move(name), std::move(desc), controlled_source(k, Matrix::column(Vector{1.0, 1.0})),
                 QuadraticForm{displayed_P()}, stable, plant_A() - plant_B() * k};
}

}  // namespace detail

inline const std::vector<Benchmark>& registry() {
  static const std::vector<Benchmark> r = [] {
    std::vector<Benchmark> out;
    out.push_back({"scalar_loop", "first-order loop x(k+1) = a x(k) with V = x^2",
                   {detail::scalar("stable", 0.9, "a = 0.9"),
                    detail::scalar("unstable", 1.9, "a = 1.9 (reachability, falsification)"),
                    detail::scalar("unstable_bmc", 12.9, "a = 12.9 (bounded unrolling)")}});
    out.push_back({"matrix_loop", "diagonal loop x(k+1) = A x(k) with V = x'x",
                   {detail::matrix("stable", 0.5, "A = 0.5 I"),
                    detail::matrix("unstable", 1.5, "A = 1.5 I (reachability, falsification)"),
                    detail::matrix("unstable_bmc", 13.5, "A = 13.5 I (bounded unrolling)")}});
    out.push_back({"controlled", "state feedback u = -Kx on A = [1.5 .5; .5 1], B = [2; 0] with V = x'Px",
                   {detail::controlled("stable", stable_K(), true, "K = [1.15 0.57]"),
                    detail::controlled("unstable", Matrix{{10.1, 6.0}}, false, "K = [10.1 6] (reachability)"),
                    detail::controlled("unstable_bmc", Matrix{{11.0, 6.0}}, false, "K = [11 6] (bounded unrolling)"),
                    detail::controlled("unstable_neg", -1.0 * stable_K(), false, "K = -[1.15 0.57] (falsification)")}});
    out.push_back({"nonlinear", "x1' = x2/(1+x2^2), x2' = x1/(1+x2^2) with V = x1^2 + x2^2",
                   {Variant{"stable", "no parameters", detail::nonlinear_source(), MonitorSignals{"Vnext", "V"}, true,
                            std::nullopt}}});
    return out;
  }();
  return r;
}

inline const Benchmark& find_benchmark(std::string_view name) {
  for (const auto& b : registry())
    if (b.name == name) return b;
  throw Error(ErrorKind::InvalidArgument, "unknown benchmark '" + std::string(name) +
                                              "' (scalar_loop, matrix_loop, controlled, nonlinear)");
}

inline std::pair<BlockDiagram, LyapunovSpec> builtin(std::string_view name, std::string_view variant) {
  const Variant& v = find_benchmark(name).variant(variant);
  return {parse_model(v.source), v.lyapunov};
}

/// `name:variant` (variant defaults to stable).
inline const Variant& resolve(std::string_view spec) {
  const auto colon = spec.find(':');
  const std::string_view name = spec.substr(0, colon);
  const std::string_view variant = colon == std::string_view::npos ? "stable" : spec.substr(colon + 1);
  return find_benchmark(name).variant(variant);
}

// ---------------------------------------------------------------------------
// Expected tables

enum class TableId { I = 1, II = 2, III = 3 };

inline TableId parse_table(std::string_view s) {
  if (s == "1" || s == "I") return TableId::I;
  if (s == "2" || s == "II") return TableId::II;
  if (s == "3" || s == "III") return TableId::III;
  throw Error(ErrorKind::InvalidArgument, "unknown table '" + std::string(s) + "' (1, 2, 3)");
}

inline const char* to_string(TableId t) {
  switch (t) {
    case TableId::I: return "I";
    case TableId::II: return "II";
    case TableId::III: return "III";
  }
  return "?";
}

struct TableConfig {
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::size_t budget = 100;
  std::size_t horizon = 100;
  double box_half_width = 10.0;
  FixedPointFormat reach_format = FixedPointFormat::make(8, 4);
  FixedPointFormat bmc_format = FixedPointFormat::make(16, 8);
  std::vector<std::size_t> bounds{10, 20, 40, 80};
  std::uint64_t ceiling = std::uint64_t{1} << 24;
};

enum class CellStatus { Pass, Fail, NotApplicable };

inline const char* to_string(CellStatus s) {
  switch (s) {
    case CellStatus::Pass: return "pass";
    case CellStatus::Fail: return "fail";
    case CellStatus::NotApplicable: return "n/a";
  }
  return "?";
}

struct Cell {
  std::string system;
  std::string variant;
  std::string column;
  std::vector<std::string> expected;  // any of these outcomes passes
  std::string actual;
  CellStatus status = CellStatus::NotApplicable;
  std::string reason;
  nlohmann::json detail = nlohmann::json::object();
};

struct TableReport {
  TableId table = TableId::I;
  std::vector<Cell> cells;

  std::size_t count(CellStatus s) const {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [&](const Cell& c) { return c.status == s; }));
  }
  bool all_pass() const { return count(CellStatus::Fail) == 0; }
  const Cell* find(std::string_view system, std::string_view variant, std::string_view column) const {
    for (const auto& c : cells)
      if (c.system == system && c.variant == variant && c.column == column) return &c;
    return nullptr;
  }
};

/// The properties every table checks. Reachability and unrolling assert the
/// per-step decrease; falsification searches with G(dV <= 0) (unstable
/// variants) or looks for a witness of F(dV > 0) (stable variants).
inline constexpr const char* kStepAssertion = "Vnext <= V";
inline constexpr const char* kDecreaseProperty = "G (dV <= 0)";
inline constexpr const char* kIncreaseProperty = "F (dV > 0)";

namespace detail {

inline Vector initial_state(const Variant& v) { return CompiledDiagram(parse_model(v.source)).initial_state(); }

inline void judge(Cell& c) {
  if (c.expected.empty()) {
    c.status = CellStatus::NotApplicable;
    return;
  }
  c.status = std::find(c.expected.begin(), c.expected.end(), c.actual) != c.expected.end() ? CellStatus::Pass : CellStatus::Fail;
}

inline Cell run_reach_cell(Cell c, const Variant& v, const TableConfig& cfg) {
  try {
    const CompiledDiagram cd(parse_model(v.source));
    const auto r = reach_check(cd, InitSet::from_point(cd.initial_state()), cfg.reach_format, mtl::parse_formula(kStepAssertion),
                               ReachOptions{cfg.ceiling});
    c.actual = to_string(r.outcome);
    c.detail = {{"reachable_states", r.reachable.size()}, {"path_length", r.path.size()}, {"format", cfg.reach_format.name()}};
    if (!r.path.empty()) {
      // A reported path must replay through the simulator state by state.
      bool replays = true;
      const Semantics sem = Semantics::fixed(cfg.reach_format);
      for (std::size_t i = 0; i + 1 < r.path.size(); ++i) replays = replays && step(cd, r.path[i], sem).next_state == r.path[i + 1];
      c.detail["replays"] = replays;
      if (!replays) c.actual += " (path does not replay)";
    }
  } catch (const Error& e) {
    c.actual = std::string("error: ") + e.what();
  }
  judge(c);
  return c;
}

inline Cell run_bmc_cell(Cell c, const Variant& v, std::size_t k, const Semantics& sem) {
  try {
    const CompiledDiagram cd(parse_model(v.source));
    const auto r = unroll_check(cd, cd.initial_state(), k, mtl::parse_formula(kStepAssertion), sem);
    c.actual = to_string(r.outcome);
    c.detail = {{"step", r.step}, {"bound", k}, {"semantics", sem.name()}};
  } catch (const Error& e) {
    c.actual = std::string("error: ") + e.what();
  }
  judge(c);
  return c;
}

inline Cell run_falsify_cell(Cell c, const Variant& v, SearchMethod m, const TableConfig& cfg) {
  try {
    const CompiledDiagram cd(parse_model(v.source));
    const bool stable = v.stable;
    const mtl::Formula f = mtl::parse_formula(stable ? kIncreaseProperty : kDecreaseProperty);
    const InitBox box = InitBox::uniform(cd.state_dim(), -cfg.box_half_width, cfg.box_half_width);
    std::size_t falsified = 0;
    nlohmann::json seeds = nlohmann::json::array();
    for (std::uint64_t seed : cfg.seeds) {
      FalsifyOptions o;
      o.budget = cfg.budget;
      o.horizon = cfg.horizon;
      o.method = m;
      o.seed = seed;
      o.goal = stable ? SearchGoal::Witness : SearchGoal::Violate;
      const auto r = falsify(cd, f, box, o);
      if (r.verdict == FalsificationVerdict::Falsified) ++falsified;
      seeds.push_back({{"seed", seed}, {"verdict", to_string(r.verdict)}, {"samples_used", r.samples_used},
                       {"best_robustness", r.best_robustness}});
    }
    const std::size_t n = cfg.seeds.size();
    if (falsified == n) c.actual = "Falsified";
    else if (falsified == 0) c.actual = "NotFalsified";
    else c.actual = "mixed " + std::to_string(falsified) + "/" + std::to_string(n) + " Falsified";
    c.detail = {{"property", stable ? kIncreaseProperty : kDecreaseProperty},
                {"goal", stable ? "witness" : "violate"},
                {"seeds", seeds}};
  } catch (const Error& e) {
    c.actual = std::string("error: ") + e.what();
  }
  judge(c);
  return c;
}

struct Job {
  Cell cell;
  std::function<Cell(Cell)> run;  // empty for N/A cells
};

inline std::vector<Job> table_jobs(TableId t, const TableConfig& cfg) {
  std::vector<Job> jobs;
  auto add = [&](std::string sys, std::string var, std::string col, std::vector<std::string> exp, std::string reason,
                 std::function<Cell(Cell)> run) {
    Cell c{std::move(sys), std::move(var), std::move(col), std::move(exp), "", CellStatus::NotApplicable, std::move(reason), {}};
    jobs.push_back({std::move(c), std::move(run)});
  };
  auto na = [&](std::string sys, std::string var, std::string col, std::string reason) {
    add(std::move(sys), std::move(var), std::move(col), {}, std::move(reason), nullptr);
  };

  switch (t) {
    case TableId::I: {
      const std::string col = "reach " + cfg.reach_format.name();
      auto reach = [&](const char* sys, const char* var, std::vector<std::string> exp, std::string reason) {
        const Variant& v = find_benchmark(sys).variant(var);
        add(sys, var, col, std::move(exp), std::move(reason), [&v, &cfg](Cell c) { return run_reach_cell(std::move(c), v, cfg); });
      };
      reach("scalar_loop", "stable", {"PropertyHolds"}, "YES: T");
      reach("scalar_loop", "unstable", {"CounterexamplePath", "OverflowReached"}, "YES: F");
      reach("matrix_loop", "stable", {"PropertyHolds"}, "YES: T");
      reach("matrix_loop", "unstable", {"OverflowReached"}, "NO compile, mapped to overflow");
      reach("controlled", "stable", {"OverflowReached"}, "NO compile, mapped to overflow");
      reach("controlled", "unstable", {"OverflowReached"}, "NO compile, mapped to overflow");
      reach("nonlinear", "stable", {"PropertyHolds"}, "YES: T");
      na("nonlinear", "unstable", col, "no unstable nonlinear variant was verified");
      for (const char* sys : {"scalar_loop", "matrix_loop", "controlled", "nonlinear"})
        na(sys, "*", "BDD states", "BDD sizes measure another tool's internals");
      break;
    }
    case TableId::II: {
      const Semantics fx = Semantics::fixed(cfg.bmc_format);
      for (std::size_t k : cfg.bounds) {
        const std::string col = "k=" + std::to_string(k) + " " + cfg.bmc_format.name();
        auto bmc = [&](const char* sys, const char* var, std::vector<std::string> exp, std::string reason, Semantics sem,
                       std::string column) {
          const Variant& v = find_benchmark(sys).variant(var);
          add(sys, var, std::move(column), std::move(exp), std::move(reason),
              [&v, k, sem](Cell c) { return run_bmc_cell(std::move(c), v, k, sem); });
        };
        const std::vector<std::string> bad{"ViolatedAtStep", "OverflowAtStep"};
        bmc("scalar_loop", "stable", {"AllHold"}, "T", fx, col);
        bmc("scalar_loop", "unstable_bmc", bad, "F", fx, col);
        bmc("matrix_loop", "stable", {"AllHold"}, "T", fx, col);
        bmc("matrix_loop", "unstable_bmc", bad, "F", fx, col);
        bmc("nonlinear", "stable", {"AllHold"}, "T", fx, col);
        bmc("controlled", "stable", {"ViolatedAtStep"}, "F (precision artifact)", fx, col);
        bmc("controlled", "stable", {"AllHold"}, "T under exact arithmetic", Semantics::real(),
            "k=" + std::to_string(k) + " real");
        bmc("controlled", "unstable_bmc", bad, "F", fx, col);
      }
      break;
    }
    case TableId::III: {
      auto fal = [&](const char* sys, const char* var, SearchMethod m, std::vector<std::string> exp, std::string reason) {
        const Variant& v = find_benchmark(sys).variant(var);
        add(sys, var, to_string(m), std::move(exp), std::move(reason),
            [&v, m, &cfg](Cell c) { return run_falsify_cell(std::move(c), v, m, cfg); });
      };
      const std::pair<const char*, const char*> unstable[] = {
          {"scalar_loop", "unstable"}, {"matrix_loop", "unstable"}, {"controlled", "unstable_neg"}};
      for (const char* sys : {"scalar_loop", "matrix_loop", "controlled", "nonlinear"}) {
        fal(sys, "stable", SearchMethod::SimulatedAnnealing, {"NotFalsified"}, "T");
        fal(sys, "stable", SearchMethod::UniformRandom, {"NotFalsified"}, "T");
        na(sys, "stable", "ce", "no reference verdict for cross-entropy on stable systems");
      }
      for (const auto& [sys, var] : unstable)
        for (SearchMethod m : {SearchMethod::SimulatedAnnealing, SearchMethod::CrossEntropy, SearchMethod::UniformRandom})
          fal(sys, var, m, {"Falsified"}, "F");
      for (const char* m : {"sa", "ce", "ur"}) na("nonlinear", "unstable", m, "no unstable nonlinear variant was verified");
      break;
    }
  }
  return jobs;
}

}  // namespace detail

/// Runs every reproducible cell of a table (cells in parallel) and compares
/// against the embedded expectations. Cell failures are data, not errors.
inline TableReport run_table(TableId t, const TableConfig& cfg = {}) {
  auto jobs = detail::table_jobs(t, cfg);
  std::vector<std::future<Cell>> futs;
  for (auto& j : jobs) {
    if (j.run) futs.push_back(std::async(std::launch::async, j.run, j.cell));
    else futs.push_back(std::async(std::launch::deferred, [c = j.cell] { return c; }));
  }
  TableReport rep;
  rep.table = t;
  for (auto& f : futs) rep.cells.push_back(f.get());
  return rep;
}

inline nlohmann::json to_json(const TableReport& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const Cell& c : r.cells)
    cells.push_back({{"system", c.system}, {"variant", c.variant}, {"column", c.column}, {"expected", c.expected},
                     {"actual", c.actual}, {"status", to_string(c.status)}, {"reason", c.reason}, {"detail", c.detail}});
  return {{"table", to_string(r.table)},
          {"cells", cells},
          {"summary",
           {{"pass", r.count(CellStatus::Pass)}, {"fail", r.count(CellStatus::Fail)}, {"na", r.count(CellStatus::NotApplicable)}}}};
}

inline std::string to_markdown(const TableReport& r) {
  std::string s = "## Table " + std::string(to_string(r.table)) + "\n\n";
  s += "| system | variant | column | expected | actual | status | note |\n";
  s += "|---|---|---|---|---|---|---|\n";
  for (const Cell& c : r.cells) {
    std::string exp;
    for (const auto& e : c.expected) exp += (exp.empty() ? "" : " or ") + e;
    s += "| " + c.system + " | " + c.variant + " | " + c.column + " | " + (exp.empty() ? "--" : exp) + " | " +
         (c.actual.empty() ? "--" : c.actual) + " | " + to_string(c.status) + " | " + c.reason + " |\n";
  }
  s += "\npass " + std::to_string(r.count(CellStatus::Pass)) + ", fail " + std::to_string(r.count(CellStatus::Fail)) +
       ", n/a " + std::to_string(r.count(CellStatus::NotApplicable)) + "\n";
  return s;
}

}  // namespace stabcheck::bench
