#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stabcheck/error.hpp"
#include "stabcheck/matrix.hpp"

namespace stabcheck {

enum class BlockKind { Gain, MatrixGain, Sum, UnitDelay, Product, Divide, Constant, DotSquare };

inline const char* to_string(BlockKind k) {
  switch (k) {
    case BlockKind::Gain: return "Gain";
    case BlockKind::MatrixGain: return "MatrixGain";
    case BlockKind::Sum: return "Sum";
    case BlockKind::UnitDelay: return "UnitDelay";
    case BlockKind::Product: return "Product";
    case BlockKind::Divide: return "Divide";
    case BlockKind::Constant: return "Constant";
    case BlockKind::DotSquare: return "DotSquare";
  }
  return "?";
}

inline std::optional<BlockKind> parse_block_kind(std::string_view s) {
  static const std::pair<std::string_view, BlockKind> table[] = {
      {"Gain", BlockKind::Gain},         {"MatrixGain", BlockKind::MatrixGain},
      {"Sum", BlockKind::Sum},           {"UnitDelay", BlockKind::UnitDelay},
      {"Product", BlockKind::Product},   {"Divide", BlockKind::Divide},
      {"Constant", BlockKind::Constant}, {"DotSquare", BlockKind::DotSquare},
  };
  for (const auto& [name, kind] : table)
    if (name == s) return kind;
  return std::nullopt;
}

/// One block. `coefficient` holds the Gain scalar, MatrixGain matrix,
/// Constant value or UnitDelay initial state (empty when omitted); `signs`
/// holds one '+'/'-' per Sum input.
struct Block {
  std::string id;
  BlockKind kind = BlockKind::Gain;
  Matrix coefficient;
  std::string signs;
  std::vector<std::string> inputs;
  int line = 0;

  friend bool operator==(const Block& a, const Block& b) {
    return a.id == b.id && a.kind == b.kind && a.coefficient == b.coefficient &&
           a.signs == b.signs && a.inputs == b.inputs;
  }
};

struct Probe {
  std::string name;
  std::string block;
  friend bool operator==(const Probe&, const Probe&) = default;
};

/// Dataflow graph of blocks. Every block has a single output port `out` and
/// input ports `in0..inN-1`; `inputs[i]` names the block driving port `in i`,
/// so each sink port has exactly one incoming edge by construction.
struct BlockDiagram {
  std::vector<Block> blocks;
  std::vector<Probe> probes;

  std::optional<std::size_t> find(std::string_view id) const {
    for (std::size_t i = 0; i < blocks.size(); ++i)
      if (blocks[i].id == id) return i;
    return std::nullopt;
  }
  const Block& block(std::string_view id) const {
    if (auto i = find(id)) return blocks[*i];
    throw Error(ErrorKind::DanglingEdge, "no block named '" + std::string(id) + "'");
  }
};

/// Evaluation order over all blocks. Delay outputs are step-start sources and
/// come first; a delay's input is consumed only when the state advances.
struct ExecutionOrder {
  std::vector<std::string> order;
  std::vector<std::string> delays;
};

namespace detail {

inline std::size_t expected_arity_min(BlockKind k) {
  switch (k) {
    case BlockKind::Constant: return 0;
    case BlockKind::Product:
    case BlockKind::Divide: return 2;
    default: return 1;
  }
}
inline std::size_t expected_arity_max(BlockKind k) {
  switch (k) {
    case BlockKind::Constant: return 0;
    case BlockKind::Gain:
    case BlockKind::MatrixGain:
    case BlockKind::UnitDelay: return 1;
    case BlockKind::Divide:
    case BlockKind::DotSquare: return 2;
    default: return 64;
  }
}

class LineLexer {
 public:
  LineLexer(std::string_view text, int line) : text_(text), line_(line) {}

  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\r')) ++pos_;
  }
  bool at_end() {
    skip_ws();
    return pos_ >= text_.size();
  }
  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }
  bool accept(std::string_view tok) {
    skip_ws();
    if (text_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }
  void expect(std::string_view tok) {
    if (!accept(tok)) throw error("expected '" + std::string(tok) + "'");
  }
  std::string identifier() {
    skip_ws();
    const std::size_t start = pos_;
    if (pos_ < text_.size() && (std::isalpha(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        ++pos_;
    }
    if (start == pos_) throw error("expected an identifier");
    return std::string(text_.substr(start, pos_ - start));
  }
  /// Raw text of one parameter: a bracketed literal or a run up to ',' / ')'.
  std::pair<std::string, int> parameter() {
    skip_ws();
    const int col = column();
    const std::size_t start = pos_;
    if (pos_ < text_.size() && text_[pos_] == '[') {
      while (pos_ < text_.size() && text_[pos_] != ']') ++pos_;
      if (pos_ >= text_.size()) throw error("unterminated matrix literal");
      ++pos_;
    } else {
      while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != ')') ++pos_;
    }
    std::string raw(text_.substr(start, pos_ - start));
    while (!raw.empty() && (raw.back() == ' ' || raw.back() == '\t')) raw.pop_back();
    if (raw.empty()) throw Error(ErrorKind::Syntax, "empty parameter", line_, col);
    return {raw, col};
  }
  int column() const { return static_cast<int>(pos_) + 1; }
  int line() const { return line_; }
  Error error(const std::string& why) const { return Error(ErrorKind::Syntax, why, line_, column()); }

 private:
  std::string_view text_;
  int line_;
  std::size_t pos_ = 0;
};

inline Matrix parse_matrix_at(const std::string& raw, int line, int col) {
  try {
    return parse_matrix(raw);
  } catch (const Error& e) {
    throw Error(ErrorKind::Syntax, e.message(), line, col + e.column() - 1);
  }
}

}  // namespace detail

/// Topological order with UnitDelay outputs as step-start sources. Ties are
/// broken by declaration order so the result is deterministic.
inline ExecutionOrder schedule(const BlockDiagram& d) {
  const std::size_t n = d.blocks.size();
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index.emplace(d.blocks[i].id, i);

  std::vector<std::size_t> indegree(n, 0);
  std::vector<std::vector<std::size_t>> users(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Block& b = d.blocks[i];
    if (b.kind == BlockKind::UnitDelay) continue;
    for (const auto& src : b.inputs) {
      const auto it = index.find(src);
      if (it == index.end()) throw Error(ErrorKind::DanglingEdge, "block '" + b.id + "' reads unknown block '" + src + "'", b.line, 1);
      if (d.blocks[it->second].kind == BlockKind::UnitDelay) continue;
      users[it->second].push_back(i);
      ++indegree[i];
    }
  }

  ExecutionOrder out;
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i) {
    if (d.blocks[i].kind == BlockKind::UnitDelay) {
      out.order.push_back(d.blocks[i].id);
      out.delays.push_back(d.blocks[i].id);
    } else if (indegree[i] == 0) {
      ready.push(i);
    }
  }
  while (!ready.empty()) {
    const std::size_t i = ready.top();
    ready.pop();
    out.order.push_back(d.blocks[i].id);
    for (std::size_t u : users[i])
      if (--indegree[u] == 0) ready.push(u);
  }
  if (out.order.size() != n) {
    std::string stuck;
    for (std::size_t i = 0; i < n; ++i)
      if (d.blocks[i].kind != BlockKind::UnitDelay && indegree[i] > 0) stuck += (stuck.empty() ? "" : ", ") + d.blocks[i].id;
    throw Error(ErrorKind::AlgebraicLoop, "cycle without UnitDelay through: " + stuck);
  }
  return out;
}

/// Parses the line-oriented `.sdg` block-diagram language:
///
///     # comment
///     x  = UnitDelay([1; 1]) <- xn
///     Ax = MatrixGain([1.5 0.5; 0.5 1]) <- x
///     xn = Sum(+,-) <- Ax, BKx
///     probe V = v
///
/// Checks structure (unique ids, resolvable edges, arity, delay-free cycles)
/// but not dimensions; see validate_dimensions.
inline BlockDiagram parse_model(std::string_view text) {
  BlockDiagram d;
  std::vector<int> probe_lines;
  int line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    ++line_no;
    start = end + 1;

    detail::LineLexer lex(line, line_no);
    if (lex.at_end()) {
      if (end == text.size()) break;
      continue;
    }
    const int id_col = lex.column();
    std::string id = lex.identifier();
    if (id == "probe" && lex.peek() != '=') {
      Probe p;
      p.name = lex.identifier();
      lex.expect("=");
      p.block = lex.identifier();
      if (lex.accept(".")) {
        const std::string port = lex.identifier();
        if (port != "out") throw lex.error("blocks expose a single output port 'out', got '" + port + "'");
      }
      if (!lex.at_end()) throw lex.error("unexpected trailing text");
      for (const auto& q : d.probes)
        if (q.name == p.name) throw Error(ErrorKind::DuplicateBlock, "duplicate probe '" + p.name + "'", line_no, id_col);
      d.probes.push_back(std::move(p));
      probe_lines.push_back(line_no);
      if (end == text.size()) break;
      continue;
    }

    Block b;
    b.id = std::move(id);
    b.line = line_no;
    lex.expect("=");
    const int kind_col = lex.column() + 1;
    const std::string kind_name = lex.identifier();
    const auto kind = parse_block_kind(kind_name);
    if (!kind) throw Error(ErrorKind::UnknownBlockKind, "unknown block kind '" + kind_name + "'", line_no, kind_col);
    b.kind = *kind;

    std::vector<std::pair<std::string, int>> params;
    if (lex.accept("(")) {
      if (!lex.accept(")")) {
        for (;;) {
          params.push_back(lex.parameter());
          if (lex.accept(")")) break;
          lex.expect(",");
        }
      }
    }
    if (lex.accept("<-")) {
      for (;;) {
        b.inputs.push_back(lex.identifier());
        if (!lex.accept(",")) break;
      }
    }
    if (!lex.at_end()) throw lex.error("unexpected trailing text");

    switch (b.kind) {
      case BlockKind::Sum:
        for (const auto& [raw, col] : params) {
          for (char c : raw) {
            if (c == '+' || c == '-') b.signs.push_back(c);
            else if (c != ' ' && c != '|') throw Error(ErrorKind::Syntax, "Sum signs must be '+' or '-'", line_no, col);
          }
        }
        if (b.signs.empty()) b.signs.assign(b.inputs.size(), '+');
        if (b.signs.size() != b.inputs.size())
          throw Error(ErrorKind::Syntax, "Sum '" + b.id + "' has " + std::to_string(b.signs.size()) + " signs for " +
                                             std::to_string(b.inputs.size()) + " inputs", line_no, kind_col);
        break;
      case BlockKind::Gain:
      case BlockKind::MatrixGain:
      case BlockKind::Constant:
        if (params.size() != 1)
          throw Error(ErrorKind::Syntax, std::string(to_string(b.kind)) + " takes exactly one coefficient", line_no, kind_col);
        b.coefficient = detail::parse_matrix_at(params[0].first, line_no, params[0].second);
        if (b.kind == BlockKind::Gain && !b.coefficient.is_scalar())
          throw Error(ErrorKind::Syntax, "Gain coefficient must be scalar; use MatrixGain", line_no, params[0].second);
        if (b.kind == BlockKind::Constant && b.coefficient.cols() != 1)
          throw Error(ErrorKind::Syntax, "Constant value must be a scalar or column vector", line_no, params[0].second);
        break;
      case BlockKind::UnitDelay:
        if (params.size() > 1) throw Error(ErrorKind::Syntax, "UnitDelay takes at most one initial state", line_no, kind_col);
        if (params.size() == 1) {
          b.coefficient = detail::parse_matrix_at(params[0].first, line_no, params[0].second);
          if (b.coefficient.cols() != 1)
            throw Error(ErrorKind::Syntax, "UnitDelay initial state must be a scalar or column vector", line_no, params[0].second);
        }
        break;
      default:
        if (!params.empty()) throw Error(ErrorKind::Syntax, std::string(to_string(b.kind)) + " takes no parameters", line_no, kind_col);
    }
    const std::size_t lo = detail::expected_arity_min(b.kind), hi = detail::expected_arity_max(b.kind);
    if (b.inputs.size() < lo || b.inputs.size() > hi)
      throw Error(ErrorKind::Syntax, std::string(to_string(b.kind)) + " '" + b.id + "' has " + std::to_string(b.inputs.size()) + " inputs", line_no, kind_col);
    if (d.find(b.id))
      throw Error(ErrorKind::DuplicateBlock, "duplicate block id '" + b.id + "'", line_no, id_col);
    d.blocks.push_back(std::move(b));
    if (end == text.size()) break;
  }

  if (d.blocks.empty()) throw Error(ErrorKind::EmptyModel, "no blocks");
  for (const Block& b : d.blocks)
    for (const auto& src : b.inputs)
      if (!d.find(src)) throw Error(ErrorKind::DanglingEdge, "block '" + b.id + "' reads unknown block '" + src + "'", b.line, 1);
  for (std::size_t i = 0; i < d.probes.size(); ++i)
    if (!d.find(d.probes[i].block))
      throw Error(ErrorKind::DanglingEdge, "probe '" + d.probes[i].name + "' names unknown block '" + d.probes[i].block + "'", probe_lines[i], 1);
  schedule(d);
  return d;
}

/// Canonical `.sdg` text; parse_model(print_model(d)) reproduces d.
inline std::string print_model(const BlockDiagram& d) {
  std::string s;
  for (const Block& b : d.blocks) {
    s += b.id + " = " + to_string(b.kind);
    switch (b.kind) {
      case BlockKind::Sum: {
        s += "(";
        for (std::size_t i = 0; i < b.signs.size(); ++i) s += (i ? "," : "") + std::string(1, b.signs[i]);
        s += ")";
        break;
      }
      case BlockKind::Gain:
      case BlockKind::MatrixGain:
      case BlockKind::Constant: s += "(" + format_matrix(b.coefficient) + ")"; break;
      case BlockKind::UnitDelay:
        if (!b.coefficient.empty()) s += "(" + format_matrix(b.coefficient) + ")";
        break;
      default: break;
    }
    if (!b.inputs.empty()) {
      s += " <- ";
      for (std::size_t i = 0; i < b.inputs.size(); ++i) s += (i ? ", " : "") + b.inputs[i];
    }
    s += '\n';
  }
  for (const Probe& p : d.probes) s += "probe " + p.name + " = " + p.block + '\n';
  return s;
}

/// Output dimension of every block, in declaration order. Constrained blocks
/// (Constant, MatrixGain, DotSquare, Gain, initialised UnitDelay) seed the
/// propagation; elementwise blocks and bare delays inherit from their inputs.
inline std::vector<std::size_t> infer_dimensions(const BlockDiagram& d) {
  const std::size_t n = d.blocks.size();
  std::vector<std::size_t> dim(n, 0);
  auto src = [&](const Block& b, std::size_t port) { return *d.find(b.inputs[port]); };

  for (std::size_t i = 0; i < n; ++i) {
    const Block& b = d.blocks[i];
    switch (b.kind) {
      case BlockKind::Gain:
      case BlockKind::DotSquare: dim[i] = 1; break;
      case BlockKind::MatrixGain: dim[i] = b.coefficient.rows(); break;
      case BlockKind::Constant: dim[i] = b.coefficient.rows(); break;
      case BlockKind::UnitDelay:
        if (!b.coefficient.empty()) dim[i] = b.coefficient.rows();
        break;
      default: break;
    }
  }
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (dim[i] != 0) continue;
      const Block& b = d.blocks[i];
      for (std::size_t p = 0; p < b.inputs.size(); ++p) {
        const std::size_t s = dim[src(b, p)];
        if (s != 0) {
          dim[i] = s;
          changed = true;
          break;
        }
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (dim[i] == 0)
      throw Error(ErrorKind::Dimension, "cannot infer the dimension of '" + d.blocks[i].id + ".out'");
  return dim;
}

/// Checks every edge against the port it drives. No implicit scalar-to-vector
/// broadcasting: a scalar Gain on a vector is rejected.
inline void validate_dimensions(const BlockDiagram& d) {
  const auto dim = infer_dimensions(d);
  auto mismatch = [&](const Block& b, std::size_t port, std::size_t want) {
    const std::size_t s = *d.find(b.inputs[port]);
    return Error(ErrorKind::Dimension,
                 "dimension mismatch: " + b.id + ".in" + std::to_string(port) + " expects " + std::to_string(want) +
                     " but " + d.blocks[s].id + ".out provides " + std::to_string(dim[s]),
                 b.line, 1);
  };
  // Scalar gains first: a vector through Gain would otherwise surface as a
  // generic mismatch further down the loop.
  for (const Block& b : d.blocks) {
    if (b.kind != BlockKind::Gain) continue;
    const std::size_t in = dim[*d.find(b.inputs[0])];
    if (in != 1)
      throw Error(ErrorKind::Dimension,
                  "dimension mismatch: scalar Gain " + b.id + ".in0 expects 1 but " + b.inputs[0] + ".out provides " +
                      std::to_string(in) + "; use MatrixGain for vector signals",
                  b.line, 1);
  }
  for (std::size_t i = 0; i < d.blocks.size(); ++i) {
    const Block& b = d.blocks[i];
    auto in_dim = [&](std::size_t p) { return dim[*d.find(b.inputs[p])]; };
    switch (b.kind) {
      case BlockKind::Gain: break;
      case BlockKind::MatrixGain:
        if (in_dim(0) != b.coefficient.cols()) throw mismatch(b, 0, b.coefficient.cols());
        break;
      case BlockKind::UnitDelay:
      case BlockKind::Sum:
      case BlockKind::Product:
      case BlockKind::Divide:
        for (std::size_t p = 0; p < b.inputs.size(); ++p)
          if (in_dim(p) != dim[i]) throw mismatch(b, p, dim[i]);
        break;
      case BlockKind::DotSquare:
        if (b.inputs.size() == 2 && in_dim(1) != in_dim(0)) throw mismatch(b, 1, in_dim(0));
        break;
      case BlockKind::Constant: break;
    }
  }
}

/// Validated diagram with cached layout: dimensions, evaluation order and the
/// flat state vector (delay states concatenated in declaration order).
class CompiledDiagram {
 public:
  explicit CompiledDiagram(BlockDiagram d) : diagram_(std::move(d)) {
    validate_dimensions(diagram_);
    dims_ = infer_dimensions(diagram_);
    order_ = schedule(diagram_);
    for (const auto& id : order_.order) eval_order_.push_back(*diagram_.find(id));
    for (std::size_t i = 0; i < diagram_.blocks.size(); ++i) {
      const Block& b = diagram_.blocks[i];
      input_index_.emplace_back();
      for (const auto& s : b.inputs) input_index_.back().push_back(*diagram_.find(s));
      if (b.kind == BlockKind::UnitDelay) {
        delays_.push_back(i);
        state_offset_.push_back(state_dim_);
        state_dim_ += dims_[i];
      }
    }
    for (const Probe& p : diagram_.probes) {
      probe_names_.push_back(p.name);
      probe_index_.push_back(*diagram_.find(p.block));
    }
  }

  const BlockDiagram& diagram() const noexcept { return diagram_; }
  const ExecutionOrder& order() const noexcept { return order_; }
  const std::vector<std::size_t>& eval_order() const noexcept { return eval_order_; }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  const std::vector<std::size_t>& inputs_of(std::size_t block) const { return input_index_[block]; }
  const std::vector<std::size_t>& delays() const noexcept { return delays_; }
  const std::vector<std::size_t>& state_offsets() const noexcept { return state_offset_; }
  std::size_t state_dim() const noexcept { return state_dim_; }
  const std::vector<std::string>& probe_names() const noexcept { return probe_names_; }
  const std::vector<std::size_t>& probe_blocks() const noexcept { return probe_index_; }

  /// Initial state from the UnitDelay parameters; omitted ones are zero.
  Vector initial_state() const {
    Vector x(state_dim_, 0.0);
    for (std::size_t k = 0; k < delays_.size(); ++k) {
      const Block& b = diagram_.blocks[delays_[k]];
      for (std::size_t j = 0; j < b.coefficient.rows(); ++j) x[state_offset_[k] + j] = b.coefficient(j, 0);
    }
    return x;
  }

  /// Names of the flat state coordinates, e.g. `x[0]`, `x[1]`, `x1`.
  std::vector<std::string> state_names() const {
    std::vector<std::string> names;
    for (std::size_t k = 0; k < delays_.size(); ++k) {
      const std::string& id = diagram_.blocks[delays_[k]].id;
      const std::size_t n = dims_[delays_[k]];
      for (std::size_t j = 0; j < n; ++j) names.push_back(n == 1 ? id : id + "[" + std::to_string(j) + "]");
    }
    return names;
  }

 private:
  BlockDiagram diagram_;
  std::vector<std::size_t> dims_;
  ExecutionOrder order_;
  std::vector<std::size_t> eval_order_;
  std::vector<std::vector<std::size_t>> input_index_;
  std::vector<std::size_t> delays_;
  std::vector<std::size_t> state_offset_;
  std::size_t state_dim_ = 0;
  std::vector<std::string> probe_names_;
  std::vector<std::size_t> probe_index_;
};

inline CompiledDiagram load_model(std::string_view text) { return CompiledDiagram(parse_model(text)); }

}  // namespace stabcheck
