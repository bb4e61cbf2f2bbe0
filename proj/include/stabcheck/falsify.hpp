#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "stabcheck/diagram.hpp"
#include "stabcheck/error.hpp"
#include "stabcheck/mtl.hpp"
#include "stabcheck/sim.hpp"

namespace stabcheck {

using Rng = std::mt19937_64;

/// Axis-aligned box of initial states, one closed interval per flat state
/// coordinate.
struct InitBox {
  std::vector<std::pair<double, double>> bounds;

  static InitBox uniform(std::size_t dim, double lo, double hi) {
    return InitBox{std::vector<std::pair<double, double>>(dim, {lo, hi})};
  }
  static InitBox point(std::span<const double> x) {
    InitBox b;
    for (double v : x) b.bounds.emplace_back(v, v);
    return b;
  }

  std::size_t dim() const noexcept { return bounds.size(); }
  double width(std::size_t i) const { return bounds.at(i).second - bounds.at(i).first; }

  void validate(std::size_t state_dim) const {
    if (bounds.size() != state_dim)
      throw Error(ErrorKind::Dimension, "box has " + std::to_string(bounds.size()) + " intervals, state has " +
                                            std::to_string(state_dim) + " coordinates");
    for (const auto& [lo, hi] : bounds)
      if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi))
        throw Error(ErrorKind::InvalidArgument, "box interval [" + format_real(lo) + ", " + format_real(hi) + "] is invalid");
  }

  Vector clip(Vector x) const {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], bounds[i].first, bounds[i].second);
    return x;
  }
};

/// Box text: `[lo hi; lo hi]` (rows per coordinate) or `lo,hi` for a single
/// interval that `broadcast_dim` copies.
inline InitBox parse_box(std::string_view text, std::size_t broadcast_dim) {
  const std::string s(text);
  if (s.find('[') == std::string::npos) {
    const auto comma = s.find(',');
    if (comma == std::string::npos) throw Error(ErrorKind::Syntax, "box must be 'lo,hi' or '[lo hi; ...]'");
    const Matrix lo = parse_matrix(s.substr(0, comma)), hi = parse_matrix(s.substr(comma + 1));
    return InitBox::uniform(broadcast_dim, lo(0, 0), hi(0, 0));
  }
  const Matrix m = parse_matrix(s);
  if (m.cols() != 2) throw Error(ErrorKind::Syntax, "box matrix needs two columns (lo hi)");
  InitBox b;
  for (std::size_t r = 0; r < m.rows(); ++r) b.bounds.emplace_back(m(r, 0), m(r, 1));
  if (b.dim() == 1 && broadcast_dim > 1) return InitBox::uniform(broadcast_dim, b.bounds[0].first, b.bounds[0].second);
  return b;
}

enum class SearchMethod { UniformRandom, SimulatedAnnealing, CrossEntropy };

inline const char* to_string(SearchMethod m) {
  switch (m) {
    case SearchMethod::UniformRandom: return "ur";
    case SearchMethod::SimulatedAnnealing: return "sa";
    case SearchMethod::CrossEntropy: return "ce";
  }
  return "?";
}

inline SearchMethod parse_method(std::string_view s) {
  if (s == "ur" || s == "UR") return SearchMethod::UniformRandom;
  if (s == "sa" || s == "SA") return SearchMethod::SimulatedAnnealing;
  if (s == "ce" || s == "CE") return SearchMethod::CrossEntropy;
  throw Error(ErrorKind::InvalidArgument, "unknown search method '" + std::string(s) + "' (ur, sa, ce)");
}

/// What the search looks for. Violate: a trace with robustness(φ) < 0.
/// Witness: a trace satisfying φ, i.e. robustness(¬φ) < 0 (instability
/// evidence when φ says the Lyapunov difference eventually turns positive).
enum class SearchGoal { Violate, Witness };

inline const char* to_string(SearchGoal g) { return g == SearchGoal::Violate ? "violate" : "witness"; }

inline SearchGoal parse_goal(std::string_view s) {
  if (s == "violate") return SearchGoal::Violate;
  if (s == "witness") return SearchGoal::Witness;
  throw Error(ErrorKind::InvalidArgument, "unknown search goal '" + std::string(s) + "' (violate, witness)");
}

struct AnnealingOptions {
  std::size_t warmup = 10;
  double cooling = 0.95;
  double step_fraction = 0.1;  // proposal stddev as a fraction of box width
};

struct CrossEntropyOptions {
  std::size_t population = 20;
  double elite_fraction = 0.1;
  double stddev_floor = 1e-3;  // fraction of box width
};

struct FalsifyOptions {
  std::size_t budget = 100;
  std::size_t horizon = 100;
  SearchMethod method = SearchMethod::UniformRandom;
  std::uint64_t seed = 0;
  SearchGoal goal = SearchGoal::Violate;
  Semantics semantics = Semantics::real();
  AnnealingOptions sa;
  CrossEntropyOptions ce;
};

struct Candidate {
  Vector state;
  double robustness = std::numeric_limits<double>::infinity();
};

struct SampleRecord {
  Vector state;
  double robustness = std::numeric_limits<double>::quiet_NaN();
  std::string error;  // non-empty when the simulation failed
};

enum class FalsificationVerdict { Falsified, NotFalsified };

inline const char* to_string(FalsificationVerdict v) {
  return v == FalsificationVerdict::Falsified ? "Falsified" : "NotFalsified";
}

struct FalsificationReport {
  FalsificationVerdict verdict = FalsificationVerdict::NotFalsified;
  Vector best_state;
  double best_robustness = std::numeric_limits<double>::infinity();
  std::size_t samples_used = 0;
  std::vector<SampleRecord> log;
  SearchMethod method = SearchMethod::UniformRandom;
  SearchGoal goal = SearchGoal::Violate;
  std::size_t horizon = 0;
  std::uint64_t seed = 0;
  std::string property;           // as given
  std::string searched_property;  // the formula whose robustness was minimized
  std::optional<Trace> witness;
};

// ---------------------------------------------------------------------------
// Search primitives

inline Vector sample_uniform(const InitBox& box, Rng& rng) {
  Vector x(box.dim());
  for (std::size_t i = 0; i < box.dim(); ++i) {
    const auto [lo, hi] = box.bounds[i];
    x[i] = lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
  }
  return x;
}

/// Metropolis rule on a robustness change `delta` = ρ(proposal) − ρ(current),
/// given a uniform draw u ∈ [0, 1).
inline bool metropolis_accept(double delta, double temperature, double u) {
  if (delta < 0) return true;
  if (!(temperature > 0)) return false;
  return u < std::exp(-delta / temperature);
}

struct AnnealingMove {
  Candidate next;
  Candidate proposal;
  bool accepted = false;
};

using Objective = std::function<double(const Vector&)>;

/// One annealing move: Gaussian proposal (stddev = step_fraction · width)
/// clipped to the box, accepted by the Metropolis rule.
inline AnnealingMove sa_step(const Candidate& current, double temperature, const InitBox& box, Rng& rng,
                             const Objective& objective, double step_fraction = 0.1) {
  if (!(temperature > 0)) throw Error(ErrorKind::InvalidArgument, "annealing temperature must be positive");
  Vector x = current.state;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double sd = step_fraction * box.width(i);
    if (sd > 0) x[i] += std::normal_distribution<double>(0.0, sd)(rng);
  }
  AnnealingMove m;
  m.proposal.state = box.clip(std::move(x));
  m.proposal.robustness = objective(m.proposal.state);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const double delta = m.proposal.robustness - current.robustness;
  m.accepted = !std::isnan(m.proposal.robustness) && metropolis_accept(delta, temperature, u);
  m.next = m.accepted ? m.proposal : current;
  return m;
}

/// Independent per-coordinate Gaussian sampling distribution.
struct GaussianSampler {
  Vector mean;
  Vector stddev;

  Vector sample(const InitBox& box, Rng& rng) const {
    Vector x(mean.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      x[i] = stddev[i] > 0 ? std::normal_distribution<double>(mean[i], stddev[i])(rng) : mean[i];
    return box.clip(std::move(x));
  }
};

inline std::size_t elite_count(std::size_t population, double elite_fraction) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(elite_fraction * static_cast<double>(population))));
}

/// Refits the sampler to the lowest-robustness fraction of the population.
/// Stddev is floored at `stddev_floor` × box width per coordinate.
inline GaussianSampler ce_iteration(std::span<const Candidate> population, double elite_fraction, const InitBox& box,
                                    double stddev_floor = 1e-3) {
  if (population.size() < 10) throw Error(ErrorKind::InvalidArgument, "cross-entropy population must hold at least 10 samples");
  if (!(elite_fraction > 0 && elite_fraction < 1)) throw Error(ErrorKind::InvalidArgument, "elite fraction must lie in (0, 1)");
  std::vector<std::size_t> idx(population.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto key = [&](std::size_t i) {
    const double r = population[i].robustness;
    return std::isnan(r) ? std::numeric_limits<double>::infinity() : r;
  };
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  const std::size_t n_elite = elite_count(population.size(), elite_fraction);

  const std::size_t dim = box.dim();
  GaussianSampler g{Vector(dim, 0.0), Vector(dim, 0.0)};
  for (std::size_t e = 0; e < n_elite; ++e)
    for (std::size_t i = 0; i < dim; ++i) g.mean[i] += population[idx[e]].state[i];
  for (double& m : g.mean) m /= static_cast<double>(n_elite);
  for (std::size_t e = 0; e < n_elite; ++e)
    for (std::size_t i = 0; i < dim; ++i) {
      const double d = population[idx[e]].state[i] - g.mean[i];
      g.stddev[i] += d * d;
    }
  for (std::size_t i = 0; i < dim; ++i) {
    g.stddev[i] = std::sqrt(g.stddev[i] / static_cast<double>(n_elite));
    g.stddev[i] = std::max(g.stddev[i], stddev_floor * box.width(i));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Falsification driver

namespace detail {

class Evaluator {
 public:
  Evaluator(const CompiledDiagram& cd, mtl::Formula f, const FalsifyOptions& o) : cd_(cd), f_(std::move(f)), opt_(o) {}

  SampleRecord evaluate(const Vector& x) const {
    SampleRecord r;
    r.state = x;
    try {
      r.robustness = mtl::robustness(f_, simulate(cd_, x, opt_.horizon, opt_.semantics));
    } catch (const Error& e) {
      r.error = e.what();
    }
    return r;
  }

 private:
  const CompiledDiagram& cd_;
  mtl::Formula f_;
  const FalsifyOptions& opt_;
};

class SearchState {
 public:
  SearchState(FalsificationReport& rep, std::size_t budget) : rep_(rep), budget_(budget) {}

  bool exhausted() const { return rep_.samples_used >= budget_ || done(); }
  bool done() const { return rep_.best_robustness < 0; }
  std::size_t remaining() const { return budget_ - rep_.samples_used; }

  /// Records one simulation and returns the value used for search decisions
  /// (NaN for failed samples).
  double record(SampleRecord r) {
    ++rep_.samples_used;
    const double rho = r.error.empty() ? r.robustness : std::numeric_limits<double>::quiet_NaN();
    if (r.error.empty() && (rep_.best_state.empty() || rho < rep_.best_robustness)) {
      rep_.best_robustness = rho;
      rep_.best_state = r.state;
    }
    rep_.log.push_back(std::move(r));
    return rho;
  }

 private:
  FalsificationReport& rep_;
  std::size_t budget_;
};

inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::uint64_t out[1];
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  out[0] = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
  return out[0];
}

}  // namespace detail

/// Searches the box for an initial state whose `horizon`-step trace drives
/// the searched property's robustness below zero; stops at the first such
/// sample or when `budget` simulations have been spent.
inline FalsificationReport falsify(const CompiledDiagram& cd, const mtl::Formula& property, const InitBox& box,
                                   const FalsifyOptions& opt) {
  if (opt.budget < 1) throw Error(ErrorKind::InvalidArgument, "budget must be at least 1");
  if (opt.horizon < 1) throw Error(ErrorKind::InvalidArgument, "horizon must be at least 1");
  box.validate(cd.state_dim());

  FalsificationReport rep;
  rep.method = opt.method;
  rep.goal = opt.goal;
  rep.horizon = opt.horizon;
  rep.seed = opt.seed;
  rep.property = mtl::to_string(property);
  const mtl::Formula searched = opt.goal == SearchGoal::Witness ? mtl::Formula::negate(property) : property;
  rep.searched_property = mtl::to_string(searched);

  const detail::Evaluator eval(cd, searched, opt);
  detail::SearchState st(rep, opt.budget);

  switch (opt.method) {
    case SearchMethod::UniformRandom: {
      for (std::uint64_t i = 0; !st.exhausted(); ++i) {
        Rng rng(detail::split_seed(opt.seed, i));
        st.record(eval.evaluate(sample_uniform(box, rng)));
      }
      break;
    }
    case SearchMethod::SimulatedAnnealing: {
      Rng rng(detail::split_seed(opt.seed, 0));
      Candidate current;
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (std::size_t i = 0; i < opt.sa.warmup && !st.exhausted(); ++i) {
        Vector x = sample_uniform(box, rng);
        const double rho = st.record(eval.evaluate(x));
        if (std::isnan(rho)) continue;
        lo = std::min(lo, rho);
        hi = std::max(hi, rho);
        if (rho < current.robustness || current.state.empty()) current = Candidate{std::move(x), rho};
      }
      if (current.state.empty()) current = Candidate{sample_uniform(box, rng), std::numeric_limits<double>::infinity()};
      const double spread = hi - lo;
      const double t0 = (std::isfinite(spread) && spread > 0) ? spread : 1.0;
      const Objective objective = [&](const Vector& x) { return st.record(eval.evaluate(x)); };
      for (std::size_t k = 0; !st.exhausted(); ++k) {
        const double temperature = std::max(t0 * std::pow(opt.sa.cooling, static_cast<double>(k)),
                                            std::numeric_limits<double>::min());
        current = sa_step(current, temperature, box, rng, objective, opt.sa.step_fraction).next;
      }
      break;
    }
    case SearchMethod::CrossEntropy: {
      if (opt.ce.population < 10) throw Error(ErrorKind::InvalidArgument, "cross-entropy population must be at least 10");
      Rng rng(detail::split_seed(opt.seed, 0));
      std::optional<GaussianSampler> dist;
      while (!st.exhausted()) {
        const std::size_t n = std::min(opt.ce.population, st.remaining());
        std::vector<Vector> xs;
        for (std::size_t i = 0; i < n; ++i) xs.push_back(dist ? dist->sample(box, rng) : sample_uniform(box, rng));
        std::vector<std::future<SampleRecord>> futs;
        for (const Vector& x : xs) futs.push_back(std::async(std::launch::async, [&eval, &x] { return eval.evaluate(x); }));
        std::vector<Candidate> pop;
        for (auto& f : futs) {
          SampleRecord r = f.get();
          Vector x = r.state;
          const double rho = st.record(std::move(r));
          pop.push_back(Candidate{std::move(x), rho});
        }
        if (st.exhausted() || pop.size() < 10) break;
        dist = ce_iteration(pop, opt.ce.elite_fraction, box, opt.ce.stddev_floor);
      }
      break;
    }
  }

  if (rep.best_robustness < 0) {
    rep.verdict = FalsificationVerdict::Falsified;
    rep.witness = simulate(cd, rep.best_state, opt.horizon, opt.semantics);
  }
  return rep;
}

/// Re-simulates one sample and returns the searched robustness.
inline double replay(const CompiledDiagram& cd, const mtl::Formula& searched, const Vector& x, std::size_t horizon,
                     const Semantics& sem = Semantics::real()) {
  return mtl::robustness(searched, simulate(cd, x, horizon, sem));
}

}  // namespace stabcheck
