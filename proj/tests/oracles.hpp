#pragma once

// Reference implementations written separately from the library code paths
// they check. Kept deliberately naive.

#include <cfenv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "stabcheck/stabcheck.hpp"

namespace oracle {

using stabcheck::Vector;

// ---------------------------------------------------------------------------
// Fixed point via long double and the FPU's ties-to-even nearbyint.

struct Fixed {
  int total, frac;

  long double scale() const { return std::ldexp(1.0L, frac); }
  long long lo() const { return -(1LL << (total - 1)); }
  long long hi() const { return (1LL << (total - 1)) - 1; }

  long long clamp(long double r, bool& ovf) const {
    if (r > static_cast<long double>(hi())) { ovf = true; return hi(); }
    if (r < static_cast<long double>(lo())) { ovf = true; return lo(); }
    return static_cast<long long>(r);
  }
  long long raw(double v, bool& ovf) const {
    std::fesetround(FE_TONEAREST);
    return clamp(std::nearbyintl(static_cast<long double>(v) * scale()), ovf);
  }
  double real(long long r) const { return static_cast<double>(static_cast<long double>(r) / scale()); }

  double mul(double a, double b, bool& ovf) const {
    const long double p = static_cast<long double>(raw(a, ovf)) * static_cast<long double>(raw(b, ovf));
    std::fesetround(FE_TONEAREST);
    return real(clamp(std::nearbyintl(p / scale()), ovf));
  }
  double add(double a, double b, bool& ovf) const {
    return real(clamp(static_cast<long double>(raw(a, ovf)) + static_cast<long double>(raw(b, ovf)), ovf));
  }
};

// ---------------------------------------------------------------------------
// Boolean MTL truth: direct quantifier semantics, no min/max.

inline double lookup(const stabcheck::Trace& t, std::size_t k, const stabcheck::mtl::SignalRef& s) {
  for (std::size_t p = 0; p < t.probe_names.size(); ++p)
    if (t.probe_names[p] == s.name) return t.rows[k][p][s.component.value_or(0)];
  throw std::runtime_error("oracle: no signal " + s.name);
}

inline double affine(const stabcheck::Trace& t, std::size_t k, const stabcheck::mtl::AffineExpr& e) {
  double v = e.constant;
  for (const auto& [c, s] : e.terms) v += c * lookup(t, k, s);
  return v;
}

/// nullopt when some window is empty after clipping.
inline std::optional<bool> truth(const stabcheck::mtl::Formula& f, const stabcheck::Trace& t, std::size_t k = 0) {
  using stabcheck::mtl::Op;
  using stabcheck::mtl::Relation;
  switch (f.op()) {
    case Op::Atom: {
      const auto& p = f.predicate();
      const double l = affine(t, k, p.lhs), r = affine(t, k, p.rhs);
      switch (p.rel) {
        case Relation::Le: return l <= r;
        case Relation::Lt: return l < r;
        case Relation::Ge: return l >= r;
        case Relation::Gt: return l > r;
      }
      return std::nullopt;
    }
    case Op::Not: {
      auto c = truth(f.child(), t, k);
      if (!c) return std::nullopt;
      return !*c;
    }
    case Op::And:
    case Op::Or: {
      auto a = truth(f.child(0), t, k), b = truth(f.child(1), t, k);
      if (!a || !b) return std::nullopt;
      return f.op() == Op::And ? (*a && *b) : (*a || *b);
    }
    case Op::Always:
    case Op::Eventually: {
      std::size_t lo = k, hi = t.size() - 1;
      if (f.window()) {
        lo = k + f.window()->lo;
        hi = std::min(hi, k + f.window()->hi);
      }
      if (lo > hi) return std::nullopt;
      bool all = true, any = false;
      for (std::size_t j = lo; j <= hi; ++j) {
        auto c = truth(f.child(), t, j);
        if (!c) return std::nullopt;
        if (*c) any = true;
        else all = false;
      }
      return f.op() == Op::Always ? all : any;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Random formulas and traces over signals a, b.

inline stabcheck::Trace random_trace(std::mt19937_64& rng, std::size_t len) {
  std::uniform_int_distribution<int> v(-8, 8);  // quarter steps keep ties possible
  stabcheck::Trace t;
  t.probe_names = {"a", "b"};
  for (std::size_t k = 0; k < len; ++k) {
    t.rows.push_back({Vector{v(rng) / 4.0}, Vector{v(rng) / 4.0}});
    t.states.push_back({});
    t.overflow.push_back(false);
  }
  return t;
}

inline std::string random_formula_text(std::mt19937_64& rng, int depth) {
  std::uniform_int_distribution<int> pick(0, depth <= 0 ? 0 : 6);
  std::uniform_int_distribution<int> c(-8, 8), w(0, 3);
  const char* sig[] = {"a", "b"};
  const char* rel[] = {"<=", "<", ">=", ">"};
  switch (pick(rng)) {
    case 0: {
      std::string s = sig[rng() % 2];
      if (rng() % 3 == 0) s += std::string(" + ") + sig[rng() % 2];
      return "(" + s + " " + rel[rng() % 4] + " " + stabcheck::format_real(c(rng) / 4.0) + ")";
    }
    case 1: return "!" + random_formula_text(rng, depth - 1);
    case 2: return "(" + random_formula_text(rng, depth - 1) + " & " + random_formula_text(rng, depth - 1) + ")";
    case 3: return "(" + random_formula_text(rng, depth - 1) + " | " + random_formula_text(rng, depth - 1) + ")";
    case 4: return "G " + random_formula_text(rng, depth - 1);
    case 5: return "F " + random_formula_text(rng, depth - 1);
    default: {
      const int a = w(rng), b = a + w(rng);
      return std::string(rng() % 2 ? "G" : "F") + "[" + std::to_string(a) + "," + std::to_string(b) + "] " +
             random_formula_text(rng, depth - 1);
    }
  }
}

// ---------------------------------------------------------------------------
// Shortest distances by naive layer iteration over std::map.

using QState = stabcheck::QState;

inline std::map<QState, std::size_t> layer_distances(const stabcheck::CompiledDiagram& cd, const std::vector<QState>& init,
                                                     const stabcheck::FixedPointFormat& fmt) {
  const auto sem = stabcheck::Semantics::fixed(fmt);
  std::map<QState, std::size_t> dist;
  std::set<QState> layer(init.begin(), init.end());
  for (const auto& s : layer) dist[s] = 0;
  for (std::size_t d = 1; !layer.empty(); ++d) {
    std::set<QState> next;
    for (const auto& s : layer) {
      Vector x(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) x[i] = std::ldexp(static_cast<double>(s[i]), -fmt.fraction_bits);
      const Vector y = stabcheck::step(cd, x, sem).next_state;
      QState q(y.size());
      for (std::size_t i = 0; i < y.size(); ++i) q[i] = static_cast<std::int64_t>(std::ldexp(y[i], fmt.fraction_bits));
      if (!dist.count(q)) {
        dist[q] = d;
        next.insert(q);
      }
    }
    layer = std::move(next);
  }
  return dist;
}

// ---------------------------------------------------------------------------
// Random small diagrams: one or two scalar delays feeding an acyclic network.

inline std::string random_diagram(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> coef(-6, 6), nblocks(1, 5);
  const int delays = 1 + static_cast<int>(rng() % 2);
  std::vector<std::string> names;
  std::string src;
  std::vector<std::string> delay_lines;
  for (int d = 0; d < delays; ++d) names.push_back("d" + std::to_string(d));
  const int n = nblocks(rng);
  for (int i = 0; i < n; ++i) {
    const std::string id = "b" + std::to_string(i);
    auto any = [&] { return names[rng() % names.size()]; };
    switch (rng() % 5) {
      case 0: src += id + " = Gain(" + stabcheck::format_real(coef(rng) / 4.0) + ") <- " + any() + "\n"; break;
      case 1: src += id + " = Sum(" + std::string(rng() % 2 ? "+-" : "++") + ") <- " + any() + ", " + any() + "\n"; break;
      case 2: src += id + " = Product <- " + any() + ", " + any() + "\n"; break;
      case 3: src += id + " = Constant(" + stabcheck::format_real(coef(rng) / 8.0) + ")\n"; break;
      default: src += id + " = DotSquare <- " + any() + "\n"; break;
    }
    names.push_back(id);
  }
  std::string head;
  for (int d = 0; d < delays; ++d)
    head += "d" + std::to_string(d) + " = UnitDelay(" + stabcheck::format_real(coef(rng) / 4.0) + ") <- " +
            names[rng() % names.size()] + "\n";
  return head + src + "probe v = " + names.back() + "\n";
}

}  // namespace oracle
