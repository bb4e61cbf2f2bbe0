#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stabcheck/error.hpp"
#include "stabcheck/matrix.hpp"
#include "stabcheck/sim.hpp"

namespace stabcheck::mtl {

struct SignalRef {
  std::string name;
  std::optional<std::size_t> component;
  friend bool operator==(const SignalRef&, const SignalRef&) = default;
};

/// Σ coeff·signal + constant.
struct AffineExpr {
  std::vector<std::pair<double, SignalRef>> terms;
  double constant = 0.0;
  friend bool operator==(const AffineExpr&, const AffineExpr&) = default;
};

enum class Relation { Le, Lt, Ge, Gt };

struct Predicate {
  AffineExpr lhs;
  Relation rel = Relation::Le;
  AffineExpr rhs;
  friend bool operator==(const Predicate&, const Predicate&) = default;
};

/// Inclusive step window [lo, hi] relative to the evaluation step.
struct Interval {
  std::size_t lo = 0;
  std::size_t hi = 0;
  friend bool operator==(const Interval&, const Interval&) = default;
};

enum class Op { Atom, Not, And, Or, Always, Eventually };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  Op op = Op::Atom;
  Predicate atom;
  std::optional<Interval> window;
  std::vector<NodePtr> children;
};

/// Immutable discrete-time temporal formula.
class Formula {
 public:
  Formula() = default;
  explicit Formula(NodePtr n) : node_(std::move(n)) {}

  static Formula atom(Predicate p) {
    auto n = std::make_shared<Node>();
    n->atom = std::move(p);
    return Formula(std::move(n));
  }
  static Formula negate(Formula f) { return unary(Op::Not, std::move(f), std::nullopt); }
  static Formula always(Formula f, std::optional<Interval> w = std::nullopt) { return unary(Op::Always, std::move(f), w); }
  static Formula eventually(Formula f, std::optional<Interval> w = std::nullopt) {
    return unary(Op::Eventually, std::move(f), w);
  }
  static Formula conj(Formula a, Formula b) { return binary(Op::And, std::move(a), std::move(b)); }
  static Formula disj(Formula a, Formula b) { return binary(Op::Or, std::move(a), std::move(b)); }

  bool valid() const noexcept { return node_ != nullptr; }
  Op op() const { return node_->op; }
  const Predicate& predicate() const { return node_->atom; }
  const std::optional<Interval>& window() const { return node_->window; }
  std::size_t arity() const { return node_->children.size(); }
  Formula child(std::size_t i = 0) const { return Formula(node_->children.at(i)); }

  bool is_temporal() const {
    if (op() == Op::Always || op() == Op::Eventually) return true;
    for (std::size_t i = 0; i < arity(); ++i)
      if (child(i).is_temporal()) return true;
    return false;
  }

 private:
  static Formula unary(Op op, Formula f, std::optional<Interval> w) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->window = w;
    n->children.push_back(std::move(f.node_));
    return Formula(std::move(n));
  }
  static Formula binary(Op op, Formula a, Formula b) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->children.push_back(std::move(a.node_));
    n->children.push_back(std::move(b.node_));
    return Formula(std::move(n));
  }

  NodePtr node_;
};

// ---------------------------------------------------------------------------
// Printing

inline std::string to_string(const SignalRef& s) {
  return s.component ? s.name + "[" + std::to_string(*s.component) + "]" : s.name;
}

inline std::string to_string(const AffineExpr& e) {
  std::string s;
  for (const auto& [c, sig] : e.terms) {
    const double mag = std::abs(c);
    if (s.empty()) s += c < 0 ? "-" : "";
    else s += c < 0 ? " - " : " + ";
    if (mag != 1.0) s += format_real(mag) + "*";
    s += to_string(sig);
  }
  if (e.constant != 0.0 || e.terms.empty()) {
    if (s.empty()) s += format_real(e.constant);
    else s += (e.constant < 0 ? " - " : " + ") + format_real(std::abs(e.constant));
  }
  return s;
}

inline const char* to_string(Relation r) {
  switch (r) {
    case Relation::Le: return "<=";
    case Relation::Lt: return "<";
    case Relation::Ge: return ">=";
    case Relation::Gt: return ">";
  }
  return "?";
}

inline std::string to_string(const Formula& f) {
  auto win = [&] {
    return f.window() ? "[" + std::to_string(f.window()->lo) + "," + std::to_string(f.window()->hi) + "]" : std::string();
  };
  switch (f.op()) {
    case Op::Atom: return to_string(f.predicate().lhs) + " " + to_string(f.predicate().rel) + " " + to_string(f.predicate().rhs);
    case Op::Not: return "!(" + to_string(f.child()) + ")";
    case Op::And: return "(" + to_string(f.child(0)) + " & " + to_string(f.child(1)) + ")";
    case Op::Or: return "(" + to_string(f.child(0)) + " | " + to_string(f.child(1)) + ")";
    case Op::Always: return "G" + win() + " (" + to_string(f.child()) + ")";
    case Op::Eventually: return "F" + win() + " (" + to_string(f.child()) + ")";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Formula parse() {
    Formula f = disjunction();
    skip_ws();
    if (pos_ != text_.size()) throw error("unexpected '" + std::string(1, text_[pos_]) + "'");
    return f;
  }

 private:
  Error error(const std::string& why) const {
    return Error(ErrorKind::Syntax, why, 1, static_cast<int>(pos_) + 1);
  }
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool accept(std::string_view tok) {
    skip_ws();
    if (text_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }
  bool accept_keyword(std::string_view kw) {
    skip_ws();
    if (text_.substr(pos_, kw.size()) != kw) return false;
    const std::size_t after = pos_ + kw.size();
    if (after < text_.size() && is_ident_char(text_[after])) return false;
    pos_ = after;
    return true;
  }
  void expect(std::string_view tok) {
    if (!accept(tok)) throw error("expected '" + std::string(tok) + "'");
  }
  static bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
  static bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }
  bool at_number() {
    skip_ws();
    return pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.');
  }

  double number() {
    skip_ws();
    const std::string rest(text_.substr(pos_));
    char* end = nullptr;
    const double v = std::strtod(rest.c_str(), &end);
    if (end == rest.c_str() || !std::isfinite(v)) throw error("expected a number");
    pos_ += static_cast<std::size_t>(end - rest.c_str());
    return v;
  }
  std::size_t integer() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (start == pos_) throw error("expected a step bound");
    return std::stoul(std::string(text_.substr(start, pos_ - start)));
  }
  SignalRef signal() {
    skip_ws();
    const std::size_t start = pos_;
    if (pos_ >= text_.size() || !is_ident_start(text_[pos_])) throw error("expected a signal name");
    while (pos_ < text_.size() && is_ident_char(text_[pos_])) ++pos_;
    SignalRef s{std::string(text_.substr(start, pos_ - start)), std::nullopt};
    if (s.name == "G" || s.name == "F" || s.name == "and" || s.name == "or" || s.name == "not")
      throw Error(ErrorKind::Syntax, "'" + s.name + "' is reserved and cannot name a signal", 1, static_cast<int>(start) + 1);
    if (accept("[")) {
      s.component = integer();
      expect("]");
    }
    return s;
  }

  std::optional<Interval> window() {
    if (!accept("[")) return std::nullopt;
    Interval w;
    w.lo = integer();
    expect(",");
    w.hi = integer();
    expect("]");
    if (w.lo > w.hi) throw error("interval bounds must satisfy lo <= hi");
    return w;
  }

  Formula disjunction() {
    Formula f = conjunction();
    for (;;) {
      if (accept("||") || accept("|") || accept_keyword("or")) f = Formula::disj(std::move(f), conjunction());
      else return f;
    }
  }
  Formula conjunction() {
    Formula f = unary();
    for (;;) {
      if (accept("&&") || accept("&") || accept_keyword("and")) f = Formula::conj(std::move(f), unary());
      else return f;
    }
  }
  Formula unary() {
    skip_ws();
    if (accept("!") || accept("~") || accept_keyword("not")) return Formula::negate(unary());
    if (accept_keyword("G")) {
      auto w = window();
      return Formula::always(unary(), w);
    }
    if (accept_keyword("F")) {
      auto w = window();
      return Formula::eventually(unary(), w);
    }
    // G[..]/F[..] directly followed by '['
    if (text_.substr(pos_, 2) == "G[") {
      ++pos_;
      auto w = window();
      return Formula::always(unary(), w);
    }
    if (text_.substr(pos_, 2) == "F[") {
      ++pos_;
      auto w = window();
      return Formula::eventually(unary(), w);
    }
    if (accept("(")) {
      Formula f = disjunction();
      expect(")");
      return f;
    }
    return Formula::atom(predicate());
  }

  Predicate predicate() {
    Predicate p;
    p.lhs = affine();
    skip_ws();
    if (accept("<=")) p.rel = Relation::Le;
    else if (accept(">=")) p.rel = Relation::Ge;
    else if (accept("<")) p.rel = Relation::Lt;
    else if (accept(">")) p.rel = Relation::Gt;
    else throw error("expected a comparison (<=, <, >=, >)");
    p.rhs = affine();
    return p;
  }

  AffineExpr affine() {
    AffineExpr e;
    double sign = 1.0;
    if (accept("-")) sign = -1.0;
    else accept("+");
    term(e, sign);
    for (;;) {
      if (accept("+")) term(e, 1.0);
      else if (accept("-")) term(e, -1.0);
      else return e;
    }
  }
  void term(AffineExpr& e, double sign) {
    if (at_number()) {
      const double c = number();
      if (accept("*")) {
        e.terms.emplace_back(sign * c, signal());
      } else {
        e.constant += sign * c;
      }
      return;
    }
    SignalRef s = signal();
    double c = 1.0;
    if (accept("*")) {
      if (!at_number()) throw error("only affine expressions are supported (coefficient * signal)");
      c = number();
    }
    e.terms.emplace_back(sign * c, std::move(s));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Grammar (lowest to highest precedence):
///   formula := conj ('|' conj)*          conj := unary ('&' unary)*
///   unary   := '!' unary | G[a,b] unary | F[a,b] unary | '(' formula ')' | atom
///   atom    := affine ('<='|'<'|'>='|'>') affine
///   affine  := ['-'] term (('+'|'-') term)*,  term := num | sig | num '*' sig | sig '*' num
/// Signal names may contain dots and an optional component index `x[1]`.
inline Formula parse_formula(std::string_view text) { return detail::Parser(text).parse(); }

// ---------------------------------------------------------------------------
// Evaluation

/// Binds signal references to probe columns of a trace (or a probe row).
class Binding {
 public:
  explicit Binding(const std::vector<std::string>& probe_names) : names_(&probe_names) {}

  std::pair<std::size_t, std::size_t> resolve(const SignalRef& s, const ProbeRow& row) const {
    for (std::size_t i = 0; i < names_->size(); ++i) {
      if ((*names_)[i] != s.name) continue;
      const std::size_t width = row.at(i).size();
      if (s.component) {
        if (*s.component >= width)
          throw Error(ErrorKind::MissingSignal, "signal '" + to_string(s) + "' indexes past width " + std::to_string(width));
        return {i, *s.component};
      }
      if (width != 1)
        throw Error(ErrorKind::MissingSignal, "signal '" + s.name + "' is a " + std::to_string(width) + "-vector; index it");
      return {i, 0};
    }
    throw Error(ErrorKind::MissingSignal, "trace has no signal '" + s.name + "'");
  }

  double eval(const AffineExpr& e, const ProbeRow& row) const {
    double v = e.constant;
    for (const auto& [c, s] : e.terms) {
      const auto [p, j] = resolve(s, row);
      v += c * row[p][j];
    }
    return v;
  }

 private:
  const std::vector<std::string>* names_;
};

/// Signed margin of a predicate: positive when it holds.
inline double margin(const Predicate& p, const Binding& b, const ProbeRow& row) {
  const double l = b.eval(p.lhs, row), r = b.eval(p.rhs, row);
  return (p.rel == Relation::Le || p.rel == Relation::Lt) ? r - l : l - r;
}

inline bool holds(const Predicate& p, const Binding& b, const ProbeRow& row) {
  const double l = b.eval(p.lhs, row), r = b.eval(p.rhs, row);
  switch (p.rel) {
    case Relation::Le: return l <= r;
    case Relation::Lt: return l < r;
    case Relation::Ge: return l >= r;
    case Relation::Gt: return l > r;
  }
  return false;
}

/// Boolean value of a non-temporal formula on one probe row.
inline bool holds(const Formula& f, const std::vector<std::string>& names, const ProbeRow& row) {
  const Binding b(names);
  switch (f.op()) {
    case Op::Atom: return holds(f.predicate(), b, row);
    case Op::Not: return !holds(f.child(), names, row);
    case Op::And: return holds(f.child(0), names, row) && holds(f.child(1), names, row);
    case Op::Or: return holds(f.child(0), names, row) || holds(f.child(1), names, row);
    default: throw Error(ErrorKind::InvalidArgument, "temporal operator in a state predicate: " + to_string(f));
  }
}

/// Reduces `G φ` (unbounded) or a bare φ to the state predicate φ.
inline Formula state_predicate(const Formula& f) {
  Formula p = (f.op() == Op::Always && !f.window()) ? f.child() : f;
  if (p.is_temporal())
    throw Error(ErrorKind::InvalidArgument, "expected a state predicate or G(predicate), got " + to_string(f));
  return p;
}

namespace detail {

using Signal = std::vector<std::optional<double>>;

inline Signal robustness_signal(const Formula& f, const Trace& t) {
  const std::size_t n = t.size();
  Signal out(n);
  switch (f.op()) {
    case Op::Atom: {
      const Binding b(t.probe_names);
      for (std::size_t k = 0; k < n; ++k) out[k] = margin(f.predicate(), b, t.rows[k]);
      return out;
    }
    case Op::Not: {
      const Signal c = robustness_signal(f.child(), t);
      for (std::size_t k = 0; k < n; ++k)
        if (c[k]) out[k] = -*c[k];
      return out;
    }
    case Op::And:
    case Op::Or: {
      const Signal a = robustness_signal(f.child(0), t), b = robustness_signal(f.child(1), t);
      for (std::size_t k = 0; k < n; ++k)
        if (a[k] && b[k]) out[k] = f.op() == Op::And ? std::min(*a[k], *b[k]) : std::max(*a[k], *b[k]);
      return out;
    }
    case Op::Always:
    case Op::Eventually: {
      const Signal c = robustness_signal(f.child(), t);
      const bool is_g = f.op() == Op::Always;
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t lo = k + (f.window() ? f.window()->lo : 0);
        const std::size_t hi = f.window() ? std::min(k + f.window()->hi, n - 1) : n - 1;
        if (lo > hi) continue;  // empty window after clipping
        std::optional<double> acc;
        bool defined = true;
        for (std::size_t j = lo; j <= hi; ++j) {
          if (!c[j]) {
            defined = false;
            break;
          }
          acc = acc ? (is_g ? std::min(*acc, *c[j]) : std::max(*acc, *c[j])) : *c[j];
        }
        if (defined) out[k] = acc;
      }
      return out;
    }
  }
  return out;
}

}  // namespace detail

/// Space robustness at step 0 over the finite trace: atoms give their signed
/// margin, ¬ negates, ∧/∨ take min/max, G/F take min/max over the (clipped)
/// window. A window that is empty after clipping is an error.
inline double robustness(const Formula& f, const Trace& t) {
  if (t.empty()) throw Error(ErrorKind::InvalidArgument, "robustness of an empty trace");
  const auto sig = detail::robustness_signal(f, t);
  if (!sig[0]) throw Error(ErrorKind::EmptyWindow, "a temporal window is empty on this " + std::to_string(t.size()) + "-step trace");
  return *sig[0];
}

enum class Satisfaction { True, False, Borderline };

inline const char* to_string(Satisfaction s) {
  switch (s) {
    case Satisfaction::True: return "True";
    case Satisfaction::False: return "False";
    case Satisfaction::Borderline: return "Borderline";
  }
  return "?";
}

inline Satisfaction classify(double rho) {
  if (rho > 0) return Satisfaction::True;
  if (rho < 0) return Satisfaction::False;
  return Satisfaction::Borderline;
}

inline Satisfaction satisfies(const Formula& f, const Trace& t) { return classify(robustness(f, t)); }

}  // namespace stabcheck::mtl
