#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "stabcheck/diagram.hpp"
#include "stabcheck/error.hpp"
#include "stabcheck/falsify.hpp"
#include "stabcheck/fixed_point.hpp"
#include "stabcheck/mtl.hpp"
#include "stabcheck/sim.hpp"

namespace stabcheck {

// ---------------------------------------------------------------------------
// Bounded unrolling

enum class BmcOutcome { AllHold, ViolatedAtStep, OverflowAtStep };

inline const char* to_string(BmcOutcome o) {
  switch (o) {
    case BmcOutcome::AllHold: return "AllHold";
    case BmcOutcome::ViolatedAtStep: return "ViolatedAtStep";
    case BmcOutcome::OverflowAtStep: return "OverflowAtStep";
  }
  return "?";
}

struct BmcVerdict {
  BmcOutcome outcome = BmcOutcome::AllHold;
  std::size_t step = 0;   // row index of the violation / overflow
  std::size_t bound = 0;
  std::string semantics;
  Trace trace;            // rows 0..step (all k rows when AllHold)
};

/// Unrolls `k` transitions from `init` and checks the state assertion on
/// each row 0..k−1. Overflow on a row is reported ahead of a violation on
/// the same row.
inline BmcVerdict unroll_check(const CompiledDiagram& cd, std::span<const double> init, std::size_t k,
                               const mtl::Formula& assertion, const Semantics& sem) {
  if (k < 1) throw Error(ErrorKind::InvalidArgument, "unroll bound must be at least 1");
  const mtl::Formula pred = mtl::state_predicate(assertion);
  BmcVerdict v;
  v.bound = k;
  v.semantics = sem.name();
  v.trace.probe_names = cd.probe_names();
  Vector x(init.begin(), init.end());
  bool init_overflow = false;
  x = quantize_state(x, sem, &init_overflow);
  for (std::size_t j = 0; j < k; ++j) {
    StepResult r;
    try {
      r = step(cd, x, sem);
    } catch (const Error& e) {
      throw Error(e.kind(), "step " + std::to_string(j) + ": " + e.message());
    }
    const bool overflow = r.overflow || (j == 0 && init_overflow);
    v.trace.states.push_back(x);
    v.trace.rows.push_back(r.probes);
    v.trace.overflow.push_back(overflow);
    if (overflow) {
      v.outcome = BmcOutcome::OverflowAtStep;
      v.step = j;
      return v;
    }
    if (!mtl::holds(pred, cd.probe_names(), r.probes)) {
      v.outcome = BmcOutcome::ViolatedAtStep;
      v.step = j;
      return v;
    }
    x = std::move(r.next_state);
  }
  v.step = k;
  return v;
}

// ---------------------------------------------------------------------------
// Explicit-state reachability over the quantized state space

/// Raw integer coordinates of a quantized state.
using QState = std::vector<std::int64_t>;

struct QStateHash {
  std::size_t operator()(const QState& s) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (std::int64_t v : s) {
      h ^= static_cast<std::uint64_t>(v);
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

/// Initial set: a box (every representable point inside it) and/or explicit
/// points (each rounded to the grid). An empty set is allowed.
struct InitSet {
  std::optional<InitBox> box;
  std::vector<Vector> points;

  static InitSet from_box(InitBox b) { return InitSet{std::move(b), {}}; }
  static InitSet from_points(std::vector<Vector> p) { return InitSet{std::nullopt, std::move(p)}; }
  static InitSet from_point(Vector p) { return from_points({std::move(p)}); }
};

enum class ReachOutcome { PropertyHolds, CounterexamplePath, OverflowReached };

inline const char* to_string(ReachOutcome o) {
  switch (o) {
    case ReachOutcome::PropertyHolds: return "PropertyHolds";
    case ReachOutcome::CounterexamplePath: return "CounterexamplePath";
    case ReachOutcome::OverflowReached: return "OverflowReached";
  }
  return "?";
}

struct ReachOptions {
  std::uint64_t ceiling = std::uint64_t{1} << 24;  // max quantized state-space size
};

struct ReachVerdict {
  ReachOutcome outcome = ReachOutcome::PropertyHolds;
  FixedPointFormat format;
  std::vector<Vector> path;         // initial state → offending state
  std::vector<Vector> violation;    // shortest violating path, when any exists
  std::vector<QState> reachable;    // BFS discovery order
  std::size_t init_states = 0;
  std::uint64_t state_space = 0;
  Trace trace;                      // probe rows along `path`
};

namespace detail {

inline std::uint64_t state_space_size(const FixedPointFormat& fmt, std::size_t dim, std::uint64_t cap) {
  std::uint64_t total = 1;
  const auto per = static_cast<std::uint64_t>(fmt.raw_count());
  for (std::size_t i = 0; i < dim; ++i) {
    if (total > cap / per) return std::numeric_limits<std::uint64_t>::max();
    total *= per;
  }
  return total;
}

inline Vector to_real(const QState& s, const FixedPointFormat& fmt) {
  Vector x(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) x[i] = fmt.to_real(s[i]);
  return x;
}

struct InitState {
  QState raw;
  bool overflow = false;
};

inline std::vector<InitState> enumerate_init(const InitSet& init, const FixedPointFormat& fmt, std::size_t dim) {
  std::vector<InitState> out;
  FixedArith ar(fmt);
  if (init.box) {
    init.box->validate(dim);
    // Grid points inside each interval, clipped to the representable range.
    std::vector<std::pair<std::int64_t, std::int64_t>> ranges;
    for (const auto& [lo, hi] : init.box->bounds) {
      const double slo = std::ceil(std::ldexp(lo, fmt.fraction_bits));
      const double shi = std::floor(std::ldexp(hi, fmt.fraction_bits));
      const auto rlo = static_cast<std::int64_t>(std::max(slo, static_cast<double>(fmt.raw_min())));
      const auto rhi = static_cast<std::int64_t>(std::min(shi, static_cast<double>(fmt.raw_max())));
      if (rlo > rhi) throw Error(ErrorKind::InvalidArgument, "initial box contains no representable state");
      ranges.emplace_back(rlo, rhi);
    }
    QState cur(dim);
    for (std::size_t i = 0; i < dim; ++i) cur[i] = ranges[i].first;
    while (true) {
      out.push_back({cur, false});
      std::size_t i = 0;
      for (; i < dim; ++i) {
        if (cur[i] < ranges[i].second) {
          ++cur[i];
          break;
        }
        cur[i] = ranges[i].first;
      }
      if (i == dim) break;
    }
  }
  for (const Vector& p : init.points) {
    if (p.size() != dim)
      throw Error(ErrorKind::Dimension, "initial state has " + std::to_string(p.size()) + " entries, diagram expects " +
                                            std::to_string(dim));
    ar.clear_overflow();
    QState s(dim);
    for (std::size_t i = 0; i < dim; ++i) s[i] = ar.to_raw(p[i]);
    out.push_back({std::move(s), ar.overflow()});
  }
  return out;
}

inline QState to_raw(const Vector& x, const FixedPointFormat& fmt) {
  FixedArith ar(fmt);
  QState s(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) s[i] = ar.to_raw(x[i]);
  return s;
}

}  // namespace detail

/// Breadth-first exploration of every quantized state reachable from the
/// initial set (saturated successors included). If any reachable step
/// overflows, the shortest path to it is reported (OverflowReached);
/// otherwise the shortest path to a state violating the predicate
/// (CounterexamplePath); otherwise PropertyHolds.
inline ReachVerdict reach_check(const CompiledDiagram& cd, const InitSet& init, FixedPointFormat fmt,
                                const mtl::Formula& property, const ReachOptions& opt = {}) {
  fmt.validate();
  const mtl::Formula pred = mtl::state_predicate(property);
  const std::size_t dim = cd.state_dim();
  ReachVerdict v;
  v.format = fmt;
  v.state_space = detail::state_space_size(fmt, dim, opt.ceiling);
  if (v.state_space > opt.ceiling)
    throw Error(ErrorKind::Resource, "quantized state space of " + fmt.name() + "^" + std::to_string(dim) +
                                         " exceeds the ceiling of " + std::to_string(opt.ceiling) + " states");

  const Semantics sem = Semantics::fixed(fmt);
  std::unordered_map<QState, std::size_t, QStateHash> index;
  std::vector<std::size_t> parent;
  std::deque<std::size_t> queue;
  std::optional<std::size_t> first_overflow, first_violation;
  std::vector<bool> init_overflow;

  for (auto& s : detail::enumerate_init(init, fmt, dim)) {
    if (index.emplace(s.raw, v.reachable.size()).second) {
      parent.push_back(v.reachable.size());
      init_overflow.push_back(s.overflow);
      queue.push_back(v.reachable.size());
      v.reachable.push_back(std::move(s.raw));
    }
  }
  v.init_states = v.reachable.size();

  while (!queue.empty()) {
    const std::size_t id = queue.front();
    queue.pop_front();
    const Vector x = detail::to_real(v.reachable[id], fmt);
    StepResult r;
    try {
      r = step(cd, x, sem);
    } catch (const Error& e) {
      throw Error(e.kind(), "state " + format_matrix(Matrix::column(x)) + ": " + e.message());
    }
    if (r.overflow || (id < init_overflow.size() && init_overflow[id])) {
      if (!first_overflow) first_overflow = id;
    } else if (!first_violation && !mtl::holds(pred, cd.probe_names(), r.probes)) {
      first_violation = id;
    }
    QState next = detail::to_raw(r.next_state, fmt);
    if (index.emplace(next, v.reachable.size()).second) {
      parent.push_back(id);
      queue.push_back(v.reachable.size());
      v.reachable.push_back(std::move(next));
    }
  }

  auto path_to = [&](std::size_t id) {
    std::vector<Vector> p;
    for (std::size_t cur = id;; cur = parent[cur]) {
      p.push_back(detail::to_real(v.reachable[cur], fmt));
      if (parent[cur] == cur) break;
    }
    std::reverse(p.begin(), p.end());
    return p;
  };

  if (first_violation) v.violation = path_to(*first_violation);
  if (first_overflow) {
    v.outcome = ReachOutcome::OverflowReached;
    v.path = path_to(*first_overflow);
  } else if (first_violation) {
    v.outcome = ReachOutcome::CounterexamplePath;
    v.path = v.violation;
  }

  v.trace.probe_names = cd.probe_names();
  for (std::size_t i = 0; i < v.path.size(); ++i) {
    const StepResult r = step(cd, v.path[i], sem);
    v.trace.states.push_back(v.path[i]);
    v.trace.rows.push_back(r.probes);
    const bool last = i + 1 == v.path.size();
    v.trace.overflow.push_back(r.overflow || (last && v.outcome == ReachOutcome::OverflowReached));
  }
  return v;
}

/// Naive fixpoint R ← R ∪ post(R) over the quantized space; a reference for
/// the BFS explorer on small formats (state space ≤ 2^16).
inline std::set<QState> brute_force_reach(const CompiledDiagram& cd, const InitSet& init, FixedPointFormat fmt) {
  fmt.validate();
  const std::size_t dim = cd.state_dim();
  if (detail::state_space_size(fmt, dim, std::uint64_t{1} << 16) > (std::uint64_t{1} << 16))
    throw Error(ErrorKind::InvalidArgument, "brute-force reachability is limited to 2^16 states");
  const Semantics sem = Semantics::fixed(fmt);
  std::set<QState> r;
  for (auto& s : detail::enumerate_init(init, fmt, dim)) r.insert(std::move(s.raw));
  while (true) {
    std::set<QState> next = r;
    for (const QState& s : r) next.insert(detail::to_raw(step(cd, detail::to_real(s, fmt), sem).next_state, fmt));
    if (next == r) return r;
    r = std::move(next);
  }
}

}  // namespace stabcheck
