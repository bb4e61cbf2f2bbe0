#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "stabcheck/diagram.hpp"
#include "stabcheck/error.hpp"
#include "stabcheck/fixed_point.hpp"

namespace stabcheck {

struct RealSemantics {
  friend bool operator==(const RealSemantics&, const RealSemantics&) = default;
};

/// Either exact real arithmetic or saturating fixed point.
class Semantics {
 public:
  Semantics() = default;
  static Semantics real() { return Semantics(); }
  static Semantics fixed(FixedPointFormat fmt) {
    fmt.validate();
    Semantics s;
    s.format_ = fmt;
    return s;
  }

  bool is_fixed() const noexcept { return format_.has_value(); }
  const FixedPointFormat& format() const {
    if (!format_) throw Error(ErrorKind::InvalidArgument, "real semantics has no fixed-point format");
    return *format_;
  }
  std::string name() const { return format_ ? "fixed:" + format_->name() : "real"; }

  friend bool operator==(const Semantics&, const Semantics&) = default;

 private:
  std::optional<FixedPointFormat> format_;
};

/// Probe values at one step: one vector per probe, in diagram probe order.
using ProbeRow = std::vector<Vector>;

struct StepResult {
  Vector next_state;
  ProbeRow probes;
  bool overflow = false;
};

/// Time-indexed probe valuations; row k holds the probes evaluated from
/// state x(k). Overflow flags are sticky.
struct Trace {
  std::vector<std::string> probe_names;
  std::vector<Vector> states;
  std::vector<ProbeRow> rows;
  std::vector<bool> overflow;

  std::size_t size() const noexcept { return rows.size(); }
  bool empty() const noexcept { return rows.empty(); }
  bool overflowed() const noexcept { return !overflow.empty() && overflow.back(); }

  std::optional<std::size_t> probe_index(std::string_view name) const {
    for (std::size_t i = 0; i < probe_names.size(); ++i)
      if (probe_names[i] == name) return i;
    return std::nullopt;
  }
  /// Scalar view of a probe; `component` selects a vector element.
  double value(std::size_t step, std::size_t probe, std::size_t component = 0) const {
    return rows.at(step).at(probe).at(component);
  }
};

namespace detail {

template <class Arith>
void eval_block(const CompiledDiagram& cd, std::size_t i, std::vector<Vector>& out, Arith& ar) {
  const Block& b = cd.diagram().blocks[i];
  if (b.kind == BlockKind::UnitDelay) return;  // seeded from state
  const auto& in = cd.inputs_of(i);
  const std::size_t n = cd.dims()[i];
  Vector& y = out[i];
  y.assign(n, 0.0);
  switch (b.kind) {
    case BlockKind::UnitDelay: return;
    case BlockKind::Gain: {
      const double k = ar.quantize(b.coefficient(0, 0));
      y[0] = ar.mul(k, out[in[0]][0]);
      return;
    }
    case BlockKind::MatrixGain: {
      const Vector& u = out[in[0]];
      for (std::size_t r = 0; r < n; ++r) {
        double acc = ar.mul(ar.quantize(b.coefficient(r, 0)), u[0]);
        for (std::size_t c = 1; c < u.size(); ++c) acc = ar.add(acc, ar.mul(ar.quantize(b.coefficient(r, c)), u[c]));
        y[r] = acc;
      }
      return;
    }
    case BlockKind::Sum: {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = b.signs[0] == '-' ? ar.neg(out[in[0]][j]) : out[in[0]][j];
        for (std::size_t p = 1; p < in.size(); ++p)
          acc = b.signs[p] == '-' ? ar.sub(acc, out[in[p]][j]) : ar.add(acc, out[in[p]][j]);
        y[j] = acc;
      }
      return;
    }
    case BlockKind::Product: {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = out[in[0]][j];
        for (std::size_t p = 1; p < in.size(); ++p) acc = ar.mul(acc, out[in[p]][j]);
        y[j] = acc;
      }
      return;
    }
    case BlockKind::Divide:
      for (std::size_t j = 0; j < n; ++j) {
        try {
          y[j] = ar.div(out[in[0]][j], out[in[1]][j]);
        } catch (const Error& e) {
          throw Error(e.kind(), "block '" + b.id + "': " + e.message());
        }
      }
      return;
    case BlockKind::Constant:
      for (std::size_t j = 0; j < n; ++j) y[j] = ar.quantize(b.coefficient(j, 0));
      return;
    case BlockKind::DotSquare: {
      const Vector& u = out[in[0]];
      const Vector& v = out[in.size() == 2 ? in[1] : in[0]];
      double acc = ar.mul(u[0], v[0]);
      for (std::size_t j = 1; j < u.size(); ++j) acc = ar.add(acc, ar.mul(u[j], v[j]));
      y[0] = acc;
      return;
    }
  }
}

template <class Arith>
StepResult step_with(const CompiledDiagram& cd, std::span<const double> state, Arith& ar) {
  if (state.size() != cd.state_dim())
    throw Error(ErrorKind::Dimension, "state has " + std::to_string(state.size()) + " entries, diagram expects " +
                                          std::to_string(cd.state_dim()));
  ar.clear_overflow();
  std::vector<Vector> out(cd.diagram().blocks.size());
  const auto& delays = cd.delays();
  for (std::size_t k = 0; k < delays.size(); ++k) {
    const std::size_t i = delays[k];
    Vector& y = out[i];
    y.resize(cd.dims()[i]);
    for (std::size_t j = 0; j < y.size(); ++j) y[j] = ar.quantize(state[cd.state_offsets()[k] + j]);
  }
  for (std::size_t i : cd.eval_order()) eval_block(cd, i, out, ar);

  StepResult r;
  r.next_state.resize(cd.state_dim());
  for (std::size_t k = 0; k < delays.size(); ++k) {
    const Vector& src = out[cd.inputs_of(delays[k])[0]];
    std::copy(src.begin(), src.end(), r.next_state.begin() + static_cast<std::ptrdiff_t>(cd.state_offsets()[k]));
  }
  for (std::size_t p : cd.probe_blocks()) r.probes.push_back(out[p]);
  r.overflow = ar.overflow();
  return r;
}

}  // namespace detail

/// One synchronous step: every block evaluated in schedule order from the
/// current delay state. Throws Error(Numeric) on division by zero.
inline StepResult step(const CompiledDiagram& cd, std::span<const double> state, const Semantics& sem) {
  if (sem.is_fixed()) {
    FixedArith ar(sem.format());
    return detail::step_with(cd, state, ar);
  }
  RealArith ar;
  return detail::step_with(cd, state, ar);
}

/// Quantizes a state to the semantics' grid (identity under real semantics).
inline Vector quantize_state(std::span<const double> x, const Semantics& sem, bool* overflow = nullptr) {
  Vector q(x.begin(), x.end());
  if (!sem.is_fixed()) return q;
  FixedArith ar(sem.format());
  for (double& v : q) v = ar.quantize(v);
  if (overflow) *overflow = ar.overflow();
  return q;
}

/// Runs `steps` transitions and records n+1 probe rows. Under fixed point the
/// run stops after the first row whose step overflowed.
inline Trace simulate(const CompiledDiagram& cd, std::span<const double> init, std::size_t steps, const Semantics& sem) {
  if (steps < 1) throw Error(ErrorKind::InvalidArgument, "simulate needs at least one step");
  Trace t;
  t.probe_names = cd.probe_names();
  Vector x(init.begin(), init.end());
  bool sticky = false;
  for (std::size_t k = 0; k <= steps; ++k) {
    StepResult r;
    try {
      r = step(cd, x, sem);
    } catch (const Error& e) {
      throw Error(e.kind(), "step " + std::to_string(k) + ": " + e.message());
    }
    sticky = sticky || r.overflow;
    t.states.push_back(quantize_state(x, sem));
    t.rows.push_back(std::move(r.probes));
    t.overflow.push_back(sticky);
    if (sticky) break;
    x = std::move(r.next_state);
  }
  return t;
}

/// Column headers for CSV export: `step`, each probe (vectors expand to
/// `name[i]`), then `overflow`.
inline std::vector<std::string> trace_columns(const Trace& t) {
  std::vector<std::string> cols{"step"};
  for (std::size_t p = 0; p < t.probe_names.size(); ++p) {
    const std::size_t n = t.rows.empty() ? 1 : t.rows[0][p].size();
    for (std::size_t j = 0; j < n; ++j) cols.push_back(n == 1 ? t.probe_names[p] : t.probe_names[p] + "[" + std::to_string(j) + "]");
  }
  cols.push_back("overflow");
  return cols;
}

inline std::string trace_to_csv(const Trace& t) {
  std::string s;
  const auto cols = trace_columns(t);
  for (std::size_t i = 0; i < cols.size(); ++i) s += (i ? "," : "") + cols[i];
  s += '\n';
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    s += std::to_string(k);
    for (const Vector& v : t.rows[k])
      for (double x : v) s += "," + format_real(x);
    s += t.overflow[k] ? ",1\n" : ",0\n";
  }
  return s;
}

inline nlohmann::json trace_to_json(const Trace& t) {
  nlohmann::json steps = nlohmann::json::array();
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    nlohmann::json values = nlohmann::json::object();
    for (std::size_t p = 0; p < t.probe_names.size(); ++p) values[t.probe_names[p]] = t.rows[k][p];
    steps.push_back({{"k", k}, {"state", t.states[k]}, {"values", values}, {"overflow", static_cast<bool>(t.overflow[k])}});
  }
  return {{"probes", t.probe_names}, {"steps", steps}};
}

}  // namespace stabcheck
