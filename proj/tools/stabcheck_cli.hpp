#pragma once

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stabcheck/stabcheck.hpp"

namespace stabcheck::cli {

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

/// Which stage an error came from decides its exit code.
enum class Phase { Args, Model, Engine };

struct PhaseError {
  Phase phase;
  Error error;
};

struct Options {
  std::string model_path;
  std::string builtin;
  std::string property;
  std::string property_file;
  std::string init;
  std::string box;
  std::string format = "text";
  std::string output;
  std::string semantics;
  std::string engine;
  std::string method = "ur";
  std::string goal = "violate";
  int bits = 0;
  int frac = -1;
  std::size_t k = 10;
  std::size_t budget = 100;
  std::size_t horizon = 100;
  std::size_t steps = 20;
  std::optional<std::uint64_t> seed;
  std::uint64_t ceiling = std::uint64_t{1} << 24;
  // synth-lyap
  std::string a, b, gain, q;
  // bench
  std::string table;
  std::size_t seeds = 10;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "file not found: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// .mtl files: one formula, `#` comments, line breaks are whitespace.
inline std::string strip_property_file(const std::string& text) {
  std::string out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    out += line + " ";
  }
  return out;
}

template <class F>
auto in_phase(Phase p, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw PhaseError{p, e};
  }
}

struct Loaded {
  std::optional<CompiledDiagram> cd;
  std::optional<mtl::Formula> property;
  std::string property_text;
  const bench::Variant* variant = nullptr;
};

class Runner {
 public:
  Runner(const Options& o, std::string command) : o_(o) { rep_.command = std::move(command); }

  Report& report() { return rep_; }

  void load(const char* default_property) {
    const auto t0 = Clock::now();
    if (o_.model_path.empty() == o_.builtin.empty())
      throw PhaseError{Phase::Args, Error(ErrorKind::InvalidArgument, "give exactly one of --model or --builtin")};
    std::string source;
    if (!o_.builtin.empty()) {
      in_phase(Phase::Args, [&] { loaded_.variant = &bench::resolve(o_.builtin); });
      source = loaded_.variant->source;
      rep_.config["builtin"] = o_.builtin;
    } else {
      source = in_phase(Phase::Args, [&] { return read_file(o_.model_path); });
      rep_.config["model"] = o_.model_path;
    }
    BlockDiagram bd = in_phase(Phase::Model, [&] { return parse_model(source); });
    if (default_property) {
      if (!o_.property_file.empty()) {
        loaded_.property_text = in_phase(Phase::Args, [&] { return strip_property_file(read_file(o_.property_file)); });
      } else {
        loaded_.property_text = o_.property.empty() ? default_property : o_.property;
      }
      loaded_.property = in_phase(Phase::Model, [&] { return mtl::parse_formula(loaded_.property_text); });
      rep_.config["property"] = mtl::to_string(*loaded_.property);
    }
    rep_.timing.parse_ms = ms_since(t0);
    const auto t1 = Clock::now();
    loaded_.cd.emplace(in_phase(Phase::Model, [&] { return CompiledDiagram(std::move(bd)); }));
    rep_.timing.build_ms = ms_since(t1);
  }

  const CompiledDiagram& cd() const { return *loaded_.cd; }
  const mtl::Formula& property() const { return *loaded_.property; }

  Vector init_state() const {
    if (o_.init.empty()) return cd().initial_state();
    return in_phase(Phase::Args, [&] {
      const Matrix m = parse_matrix(o_.init);
      Vector x(m.values().begin(), m.values().end());
      if (x.size() != cd().state_dim())
        throw Error(ErrorKind::Dimension, "--init has " + std::to_string(x.size()) + " entries, model state has " +
                                              std::to_string(cd().state_dim()));
      return x;
    });
  }

  FixedPointFormat format(int default_bits) const {
    return in_phase(Phase::Args, [&] {
      const int bits = o_.bits > 0 ? o_.bits : default_bits;
      return o_.frac >= 0 ? FixedPointFormat::make(bits, o_.frac) : FixedPointFormat::for_width(bits);
    });
  }

  Semantics semantics(bool default_fixed, int default_bits) const {
    const std::string s = o_.semantics.empty() ? (default_fixed || o_.bits > 0 ? "fixed" : "real") : o_.semantics;
    if (s == "real") return Semantics::real();
    if (s == "fixed") return Semantics::fixed(format(default_bits));
    throw PhaseError{Phase::Args, Error(ErrorKind::InvalidArgument, "unknown semantics '" + s + "' (real, fixed)")};
  }

  template <class F>
  void check(F&& f) {
    const auto t0 = Clock::now();
    try {
      in_phase(Phase::Engine, f);
    } catch (const PhaseError& pe) {
      if (pe.error.kind() != ErrorKind::Resource) throw;
      rep_.verdict = "Inconclusive";
      rep_.diagnostics["reason"] = pe.error.message();
    }
    rep_.timing.check_ms = ms_since(t0);
  }

  void run_reach() {
    load(bench::kStepAssertion);
    const FixedPointFormat fmt = format(8);
    const InitSet init = o_.box.empty() ? InitSet::from_point(init_state())
                                        : InitSet::from_box(in_phase(Phase::Args, [&] { return parse_box(o_.box, cd().state_dim()); }));
    rep_.config["engine"] = "reach";
    rep_.config["format"] = fmt.name();
    rep_.config["ceiling"] = o_.ceiling;
    if (o_.box.empty()) rep_.config["init"] = init.points.front();
    else rep_.config["box"] = o_.box;
    check([&] {
      const auto v = reach_check(cd(), init, fmt, property(), ReachOptions{o_.ceiling});
      rep_.verdict = to_string(v.outcome);
      rep_.diagnostics = {{"states_explored", v.reachable.size()},
                          {"init_states", v.init_states},
                          {"state_space", v.state_space},
                          {"path_length", v.path.size()}};
      if (!v.path.empty()) rep_.witness = v.trace;
    });
  }

  void run_bmc() {
    load(bench::kStepAssertion);
    const Semantics sem = semantics(true, 16);
    const Vector x0 = init_state();
    rep_.config["engine"] = "bmc";
    rep_.config["k"] = o_.k;
    rep_.config["semantics"] = sem.name();
    rep_.config["init"] = x0;
    check([&] {
      const auto v = unroll_check(cd(), x0, o_.k, property(), sem);
      rep_.verdict = to_string(v.outcome);
      rep_.diagnostics = {{"steps_unrolled", v.trace.size()}, {"step", v.step}, {"bound", v.bound}};
      if (v.outcome != BmcOutcome::AllHold) rep_.witness = v.trace;
    });
  }

  void run_falsify() {
    if (!o_.seed) throw PhaseError{Phase::Args, Error(ErrorKind::InvalidArgument, "--seed is required for falsification")};
    load(bench::kDecreaseProperty);
    FalsifyOptions fo;
    fo.budget = o_.budget;
    fo.horizon = o_.horizon;
    fo.seed = *o_.seed;
    fo.method = in_phase(Phase::Args, [&] { return parse_method(o_.method); });
    fo.goal = in_phase(Phase::Args, [&] { return parse_goal(o_.goal); });
    fo.semantics = semantics(false, 16);
    const std::string box_text = o_.box.empty() ? "-10,10" : o_.box;
    const InitBox box = in_phase(Phase::Args, [&] { return parse_box(box_text, cd().state_dim()); });
    rep_.config["engine"] = "falsify";
    rep_.config["budget"] = fo.budget;
    rep_.config["horizon"] = fo.horizon;
    rep_.config["seed"] = fo.seed;
    rep_.config["method"] = to_string(fo.method);
    rep_.config["goal"] = to_string(fo.goal);
    rep_.config["semantics"] = fo.semantics.name();
    rep_.config["box"] = box_text;
    check([&] {
      const auto r = falsify(cd(), property(), box, fo);
      rep_.verdict = to_string(r.verdict);
      nlohmann::json log = nlohmann::json::array();
      for (const auto& s : r.log) {
        nlohmann::json e{{"state", s.state}};
        if (s.error.empty()) e["robustness"] = s.robustness;
        else e["error"] = s.error;
        log.push_back(e);
      }
      rep_.diagnostics = {{"samples_used", r.samples_used},
                          {"best_robustness", r.best_robustness},
                          {"best_state", r.best_state},
                          {"searched_property", r.searched_property},
                          {"log", log}};
      if (r.witness) rep_.witness = r.witness;
    });
  }

  void run_simulate() {
    load(nullptr);
    const Semantics sem = semantics(false, 16);
    const Vector x0 = init_state();
    rep_.config["steps"] = o_.steps;
    rep_.config["semantics"] = sem.name();
    rep_.config["init"] = x0;
    check([&] {
      rep_.witness = simulate(cd(), x0, o_.steps, sem);
      rep_.verdict = "Simulated";
      rep_.diagnostics = {{"rows", rep_.witness->size()}, {"overflow", rep_.witness->overflowed()}};
    });
  }

  void run_synth() {
    const auto t0 = Clock::now();
    Matrix a_cl;
    if (!o_.a.empty()) {
      if (!o_.model_path.empty() || !o_.builtin.empty())
        throw PhaseError{Phase::Args, Error(ErrorKind::InvalidArgument, "give either --A or a model, not both")};
      in_phase(Phase::Args, [&] {
        a_cl = parse_matrix(o_.a);
        if (!o_.b.empty() || !o_.gain.empty()) {
          if (o_.b.empty() || o_.gain.empty()) throw Error(ErrorKind::InvalidArgument, "--B and --K go together");
          const Matrix b = parse_matrix(o_.b), k = parse_matrix(o_.gain);
          if (b.rows() != a_cl.rows() || k.cols() != a_cl.cols() || b.cols() != k.rows())
            throw Error(ErrorKind::Dimension, "A, B, K shapes do not compose into A - B K");
          a_cl = a_cl - b * k;
        }
      });
      rep_.config["A"] = o_.a;
      if (!o_.b.empty()) rep_.config["B"] = o_.b;
      if (!o_.gain.empty()) rep_.config["K"] = o_.gain;
      rep_.timing.parse_ms = ms_since(t0);
    } else {
      load(nullptr);
      a_cl = in_phase(Phase::Model, [&] { return linearize(cd()); });
    }
    const Matrix q = o_.q.empty() ? Matrix::identity(a_cl.rows()) : in_phase(Phase::Args, [&] { return parse_matrix(o_.q); });
    if (!o_.q.empty()) rep_.config["Q"] = o_.q;
    check([&] {
      rep_.diagnostics["closed_loop"] = format_matrix(a_cl);
      nlohmann::json ev = nlohmann::json::array();
      for (const auto& z : eigenvalues(a_cl)) ev.push_back({z.real(), z.imag()});
      rep_.diagnostics["eigenvalues"] = ev;
      rep_.diagnostics["spectral_radius"] = spectral_radius(a_cl);
      try {
        const auto sol = solve_discrete_lyapunov(a_cl, q);
        const bool pd = is_positive_definite(sol.P);
        rep_.verdict = pd ? "CertificateFound" : "NoCertificate";
        rep_.diagnostics["P"] = format_matrix(sol.P);
        rep_.diagnostics["residual"] = sol.residual;
        rep_.diagnostics["positive_definite"] = pd;
        rep_.text = "P = " + format_matrix(sol.P) + "\n";
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Marginal) throw;
        rep_.verdict = "Marginal";
        rep_.diagnostics["reason"] = e.message();
      }
    });
  }

  /// Closed-loop matrix of a linear model, read off by stepping unit vectors.
  static Matrix linearize(const CompiledDiagram& cd) {
    const std::size_t n = cd.state_dim();
    const Semantics real = Semantics::real();
    Matrix a(n, n);
    for (std::size_t j = 0; j < n; ++j) {
      Vector e(n, 0.0);
      e[j] = 1.0;
      const Vector col = step(cd, e, real).next_state;
      for (std::size_t i = 0; i < n; ++i) a(i, j) = col[i];
    }
    // Spot-check linearity: f(0) = 0 and f(3·1) = 3·A·1.
    const Vector f0 = step(cd, Vector(n, 0.0), real).next_state;
    const Vector f3 = step(cd, Vector(n, 3.0), real).next_state;
    const Vector expect = a.apply(Vector(n, 3.0));
    for (std::size_t i = 0; i < n; ++i)
      if (std::abs(f0[i]) > 1e-12 || std::abs(f3[i] - expect[i]) > 1e-9 * (1.0 + std::abs(expect[i])))
        throw Error(ErrorKind::InvalidArgument, "model dynamics are not linear; pass --A (and --B/--K) instead");
    return a;
  }

  void run_bench_list(std::ostream& out) const {
    if (o_.format == "json") {
      nlohmann::json j = nlohmann::json::array();
      for (const auto& b : bench::registry()) {
        nlohmann::json vs = nlohmann::json::array();
        for (const auto& v : b.variants) vs.push_back({{"name", v.name}, {"description", v.description}, {"stable", v.stable}});
        j.push_back({{"name", b.name}, {"description", b.description}, {"variants", vs}});
      }
      out << j.dump(2) << "\n";
      return;
    }
    for (const auto& b : bench::registry()) {
      out << b.name << " - " << b.description << "\n";
      for (const auto& v : b.variants) out << "  " << b.name << ":" << v.name << "  " << v.description << "\n";
    }
  }

  void run_bench_table() {
    const bench::TableId t = in_phase(Phase::Args, [&] { return bench::parse_table(o_.table); });
    bench::TableConfig cfg;
    cfg.seeds.clear();
    for (std::size_t i = 0; i < o_.seeds; ++i) cfg.seeds.push_back(i);
    cfg.ceiling = o_.ceiling;
    rep_.config["table"] = bench::to_string(t);
    rep_.config["seeds"] = o_.seeds;
    rep_.config["ceiling"] = o_.ceiling;
    check([&] {
      const auto r = bench::run_table(t, cfg);
      rep_.verdict = r.all_pass() ? "TablePass" : "TableFail";
      rep_.diagnostics = bench::to_json(r);
      rep_.text = bench::to_markdown(r);
    });
  }

 private:
  const Options& o_;
  Report rep_;
  Loaded loaded_;
};

inline int exit_for(const PhaseError& pe) {
  if (pe.error.kind() == ErrorKind::Io) return exit_code::kUsage;
  switch (pe.phase) {
    case Phase::Args: return exit_code::kUsage;
    case Phase::Model: return exit_code::kModel;
    case Phase::Engine:
      return pe.error.kind() == ErrorKind::MissingSignal ? exit_code::kModel : exit_code::kEngine;
  }
  return exit_code::kEngine;
}

}  // namespace detail

/// Entry point shared by the binary and the tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  using detail::Options;
  Options o;
  CLI::App app{"Lyapunov-based stability checking for block-diagram models"};
  app.require_subcommand(1);

  auto add_model = [&](CLI::App* s) {
    s->add_option("--model", o.model_path, "model file (.sdg)");
    s->add_option("--builtin", o.builtin, "built-in benchmark name[:variant]");
  };
  auto add_output = [&](CLI::App* s) {
    s->add_option("--format", o.format, "json | csv | text")->check(CLI::IsMember({"json", "csv", "text"}));
    s->add_option("--output", o.output, "write the report here instead of stdout");
  };
  auto add_property = [&](CLI::App* s) {
    s->add_option("--property", o.property, "MTL formula text");
    s->add_option("--property-file", o.property_file, "file holding one MTL formula (.mtl)");
  };
  auto add_fixed = [&](CLI::App* s) {
    s->add_option("--bits", o.bits, "fixed-point total width");
    s->add_option("--frac", o.frac, "fraction bits (default: half the width)");
  };
  auto add_reach = [&](CLI::App* s) {
    s->add_option("--box", o.box, "initial box, 'lo,hi' or '[lo hi; lo hi]'");
    s->add_option("--ceiling", o.ceiling, "maximum quantized state-space size");
  };
  auto add_bmc = [&](CLI::App* s) { s->add_option("--k", o.k, "unroll bound"); };
  auto add_falsify = [&](CLI::App* s) {
    s->add_option("--budget", o.budget, "simulations");
    s->add_option("--horizon", o.horizon, "steps per simulation");
    s->add_option("--method", o.method, "ur | sa | ce");
    s->add_option("--seed", o.seed, "RNG seed");
    s->add_option("--goal", o.goal, "violate | witness");
  };
  auto add_common = [&](CLI::App* s) {
    add_model(s);
    add_output(s);
    s->add_option("--init", o.init, "initial state, e.g. '[1; 1]'");
    s->add_option("--semantics", o.semantics, "real | fixed");
  };

  CLI::App* check = app.add_subcommand("check", "check a model with a chosen engine");
  add_common(check);
  add_property(check);
  add_fixed(check);
  add_reach(check);
  add_bmc(check);
  add_falsify(check);
  check->add_option("--engine", o.engine, "reach | bmc | falsify")->required()->check(CLI::IsMember({"reach", "bmc", "falsify"}));

  CLI::App* fal = app.add_subcommand("falsify", "search initial states for a property violation");
  add_common(fal);
  add_property(fal);
  add_fixed(fal);
  add_falsify(fal);
  fal->add_option("--box", o.box, "initial box, 'lo,hi' or '[lo hi; lo hi]'");

  CLI::App* bmc = app.add_subcommand("bmc", "bounded unrolling from one initial state");
  add_common(bmc);
  add_property(bmc);
  add_fixed(bmc);
  add_bmc(bmc);

  CLI::App* reach = app.add_subcommand("reach", "exhaustive reachability over quantized states");
  add_common(reach);
  add_property(reach);
  add_fixed(reach);
  add_reach(reach);

  CLI::App* sim = app.add_subcommand("simulate", "simulate and print the probe trace");
  add_common(sim);
  add_fixed(sim);
  sim->add_option("--steps", o.steps, "transitions to run");

  CLI::App* synth = app.add_subcommand("synth-lyap", "solve the discrete Lyapunov equation");
  add_model(synth);
  add_output(synth);
  synth->add_option("--A", o.a, "state matrix");
  synth->add_option("--B", o.b, "input matrix");
  synth->add_option("--K", o.gain, "feedback gain (closed loop A - BK)");
  synth->add_option("--Q", o.q, "right-hand side (default identity)");

  CLI::App* bench_cmd = app.add_subcommand("bench", "built-in benchmarks");
  bench_cmd->require_subcommand(1);
  CLI::App* bench_list = bench_cmd->add_subcommand("list", "list benchmarks and variants");
  bench_list->add_option("--format", o.format, "json | text")->check(CLI::IsMember({"json", "text"}));
  CLI::App* bench_show = bench_cmd->add_subcommand("show", "print a benchmark's model source");
  std::string show_name;
  bench_show->add_option("name", show_name, "name[:variant]")->required();
  CLI::App* bench_run = bench_cmd->add_subcommand("run", "reproduce a verdict table");
  bench_run->add_option("--table", o.table, "1 | 2 | 3")->required();
  bench_run->add_option("--seeds", o.seeds, "falsification seeds per cell");
  bench_run->add_option("--ceiling", o.ceiling, "reachability state ceiling");
  add_output(bench_run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    // Subcommand-level --help lands here too.
    if (e.get_exit_code() == 0) {
      for (CLI::App* s : app.get_subcommands()) out << s->help();
      if (app.get_subcommands().empty()) out << app.help();
      return 0;
    }
    err << nlohmann::json{{"error", {{"kind", "usage"}, {"message", e.what()}}}}.dump() << "\n";
    return exit_code::kUsage;
  }

  std::string command;
  for (CLI::App* s : app.get_subcommands()) command = s->get_name();
  if (command == "bench") command += " " + bench_cmd->get_subcommands().front()->get_name();
  if (command == "check") command += " --engine " + o.engine;

  try {
    detail::Runner r(o, command);
    if (bench_list->parsed()) {
      r.run_bench_list(out);
      return 0;
    }
    if (bench_show->parsed()) {
      out << detail::in_phase(detail::Phase::Args, [&] { return bench::resolve(show_name).source; });
      return 0;
    }
    if (check->parsed()) {
      if (o.engine == "reach") r.run_reach();
      else if (o.engine == "bmc") r.run_bmc();
      else r.run_falsify();
    } else if (fal->parsed()) {
      r.run_falsify();
    } else if (bmc->parsed()) {
      r.run_bmc();
    } else if (reach->parsed()) {
      r.run_reach();
    } else if (sim->parsed()) {
      r.run_simulate();
    } else if (synth->parsed()) {
      r.run_synth();
    } else if (bench_run->parsed()) {
      r.run_bench_table();
    }

    const Report& rep = r.report();
    const std::string body = emit_report(rep, parse_report_format(o.format));
    if (!o.output.empty()) {
      std::ofstream f(o.output, std::ios::binary);
      if (!(f << body) || !f.flush()) {
        err << render_error(Error(ErrorKind::Io, "cannot write output file: " + o.output));
        return exit_code::kCantCreate;
      }
      out << "VERDICT: " << rep.verdict << "\n";
    } else {
      out << body;
    }
    return rep.exit_code();
  } catch (const detail::PhaseError& pe) {
    err << render_error(pe.error);
    return detail::exit_for(pe);
  } catch (const Error& e) {
    err << render_error(e);
    return exit_code::kEngine;
  }
}

}  // namespace stabcheck::cli
