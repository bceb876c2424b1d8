#include "sandlab/randomwalk.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "sandlab/errors.hpp"
#include "sandlab/io.hpp"
#include "sandlab/parallel.hpp"
#include "sandlab/rng.hpp"

namespace sandlab::randomwalk {

namespace {

constexpr std::uint64_t kTreeTag = 0x7472656557616c6bull;     // "treeWalk"
constexpr std::uint64_t kLatticeTag = 0x6c617457616c6b31ull;  // "latWalk1"
constexpr std::uint64_t kMassTag = 0x6d61737357616c6bull;     // "massWalk"

// Lazily materialized rooted tree: vertices get ids in visit order and trap
// marks are drawn once, on creation.
class LazyTreeArena {
 public:
  LazyTreeArena(int q, double trap_prob, Rng& rng) : q_(q), p_(trap_prob), rng_(&rng) {
    parent_.push_back(-1);
    depth_.push_back(0);
    trap_.push_back(0);  // root trapless
    child_base_.push_back(alloc_children());
  }

  int parent(int v) const { return parent_[v]; }
  int depth(int v) const { return depth_[v]; }
  bool trap(int v) const { return trap_[v] != 0; }
  std::size_t size() const { return parent_.size(); }

  int child(int v, int c) {
    const int pos = child_base_[v] + c;
    int slot = children_[pos];
    if (slot < 0) {
      slot = static_cast<int>(parent_.size());
      children_[pos] = slot;
      parent_.push_back(v);
      depth_.push_back(depth_[v] + 1);
      trap_.push_back(p_ > 0.0 && rng_->bernoulli(p_) ? 1 : 0);
      child_base_.push_back(alloc_children());  // resizes children_
    }
    return slot;
  }

 private:
  int alloc_children() {
    const int base = static_cast<int>(children_.size());
    children_.resize(children_.size() + q_, -1);
    return base;
  }

  int q_;
  double p_;
  Rng* rng_;
  std::vector<int> parent_, depth_, child_base_, children_;
  std::vector<std::uint8_t> trap_;
};

struct TreeWalkOutcome {
  std::int64_t survival_time = 0;
  bool killed = false;
};

// One annealed walk. When `trace` is non-null the full trajectory is kept.
TreeWalkOutcome annealed_walk(const TreeWalkParams& params, std::int64_t horizon, std::uint64_t seed,
                              TreeWalkTrace* trace) {
  Rng rng(seed);
  LazyTreeArena arena(params.q, params.trap_prob, rng);

  int v = 0;
  std::int64_t distinct = 1;
  if (trace) {
    trace->seed = seed;
    trace->nodes.push_back(0);
    trace->depths.push_back(0);
    trace->range.push_back(1);
  }

  TreeWalkOutcome out;
  for (std::int64_t n = 1; n <= horizon; ++n) {
    const std::size_t before = arena.size();
    int next;
    if (arena.depth(v) == 0) {
      next = arena.child(v, rng.uniform_int(params.q));
    } else {
      const int r = rng.uniform_int(params.q + 1);
      next = r == params.q ? arena.parent(v) : arena.child(v, r);
    }
    if (arena.size() > before) ++distinct;  // the step materialized a new vertex
    v = next;
    if (trace) {
      trace->nodes.push_back(v);
      trace->depths.push_back(arena.depth(v));
      trace->range.push_back(distinct);
    }
    if (arena.trap(v) && (params.kill_prob >= 1.0 || rng.bernoulli(params.kill_prob))) {
      out.survival_time = n;
      out.killed = true;
      if (trace) {
        trace->survival_time = n;
        trace->killed = true;
      }
      return out;
    }
  }
  out.survival_time = horizon;
  if (trace) trace->survival_time = horizon;
  return out;
}

std::array<int, topology::kMaxDim> load_point(std::span<const int> x0, int d) {
  std::array<int, topology::kMaxDim> x{};
  for (int k = 0; k < d; ++k) x[k] = x0[k];
  return x;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tree walks
// ---------------------------------------------------------------------------

TreeWalkTrace run_annealed_tree_walk(const TreeWalkParams& params, std::int64_t horizon,
                                     std::uint64_t seed) {
  if (params.q < 2) throw ValidationError("tree walk: q must be >= 2");
  if (horizon < 1) throw ValidationError("tree walk: horizon must be >= 1");
  if (params.trap_prob < 0.0 || params.trap_prob > 1.0)
    throw ValidationError("tree walk: trap_prob must lie in [0,1]");
  TreeWalkTrace trace;
  annealed_walk(params, horizon, seed, &trace);
  return trace;
}

TreeWalkTrace run_trapped_tree_walk(const topology::QaryTree& tree, const topology::TrapField& field,
                                    std::int64_t horizon, std::uint64_t seed) {
  if (horizon < 1) throw ValidationError("tree walk: horizon must be >= 1");
  if (static_cast<int>(field.omega.size()) != tree.size())
    throw ValidationError("tree walk: field does not match tree");
  if (field.omega[0]) throw ValidationError("tree walk: root must be trapless");

  Rng rng(seed);
  TreeWalkTrace trace;
  trace.seed = seed;
  std::vector<std::uint8_t> seen(tree.size(), 0);
  int v = 0;
  seen[0] = 1;
  std::int64_t distinct = 1;
  trace.nodes.push_back(0);
  trace.depths.push_back(0);
  trace.range.push_back(1);

  const int q = tree.q();
  for (std::int64_t n = 1; n <= horizon; ++n) {
    const auto kids = tree.children(v);
    int next;
    if (tree.depth(v) == 0) {
      if (static_cast<int>(kids.size()) < q) {  // depth cap 0 tree
        trace.hit_depth_cap = true;
        break;
      }
      next = kids[rng.uniform_int(q)];
    } else {
      if (static_cast<int>(kids.size()) < q) {
        // leaf at the materialized depth cap: the infinite tree continues
        // below, so the trace is censored here rather than reflected
        trace.hit_depth_cap = true;
        break;
      }
      const int r = rng.uniform_int(q + 1);
      next = r == q ? tree.parent(v) : kids[r];
    }
    v = next;
    if (!seen[v]) {
      seen[v] = 1;
      ++distinct;
    }
    trace.nodes.push_back(v);
    trace.depths.push_back(tree.depth(v));
    trace.range.push_back(distinct);
    if (field.omega[v] && (field.kill_prob >= 1.0 || rng.bernoulli(field.kill_prob))) {
      trace.survival_time = n;
      trace.killed = true;
      return trace;
    }
  }
  trace.survival_time = static_cast<std::int64_t>(trace.nodes.size()) - 1;
  return trace;
}

RangeDepth range_and_depth(const TreeWalkTrace& trace) {
  return {trace.range, trace.depths};
}

ChernoffRate chernoff_rate(int q, double p, double eps) {
  if (q < 2) throw ValidationError("chernoff_rate: q must be >= 2");
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("chernoff_rate: p must lie in (0,1)");
  if (!(eps > 0.0)) throw ValidationError("chernoff_rate: eps must be > 0");
  const double arg = 2.0 * q / (1.0 + eps) - q;
  if (!(arg > 1.0)) throw ValidationError("chernoff_rate: eps out of admissible range (t <= 0)");
  ChernoffRate out;
  out.t = 0.5 * std::log(arg);
  const double mgf = (q * std::exp(-out.t) + std::exp(out.t)) / (q + 1.0);
  out.c = -(eps * out.t + std::log(mgf));
  if (!(out.c > 0.0)) throw ValidationError("chernoff_rate: eps out of admissible range (c <= 0)");
  return out;
}

TailEstimate survival_tail(const TreeWalkParams& params, std::span<const std::int64_t> n_grid,
                           std::int64_t n_walks, std::int64_t horizon, std::uint64_t seed, double eps,
                           int width) {
  if (n_grid.empty()) throw ValidationError("survival_tail: empty grid");
  for (std::size_t i = 1; i < n_grid.size(); ++i)
    if (n_grid[i] <= n_grid[i - 1]) throw ValidationError("survival_tail: grid must increase");
  if (horizon < n_grid.back()) throw ValidationError("survival_tail: horizon below deepest grid point");
  if (!(params.trap_prob > 0.0 && params.trap_prob <= 1.0))
    throw ValidationError("survival_tail: trap_prob must lie in (0,1]");

  const int n_blocks = par::block_count(n_walks);
  struct Acc {
    std::vector<std::int64_t> hits;
    double sum_t = 0.0, sum_t2 = 0.0;
    double sum_shift = 0.0, sum_shift2 = 0.0;
    std::int64_t censored = 0;
  };
  std::vector<Acc> acc(n_blocks);
  for (auto& a : acc) a.hits.assign(n_grid.size(), 0);

  par::for_blocks(n_walks, width, [&](int block, std::int64_t lo, std::int64_t hi) {
    Acc& a = acc[block];
    for (std::int64_t w = lo; w < hi; ++w) {
      const std::uint64_t s = mix64(mix64(seed, kTreeTag), static_cast<std::uint64_t>(w));
      const auto r = annealed_walk(params, horizon, s, nullptr);
      const std::int64_t t = r.survival_time;
      for (std::size_t g = 0; g < n_grid.size(); ++g)
        if (t > n_grid[g]) ++a.hits[g];
      const double tc = static_cast<double>(t);
      a.sum_t += tc;
      a.sum_t2 += tc * tc;
      const double half = static_cast<double>(std::min<std::int64_t>(t, horizon / 2));
      const double shift = tc - half;
      a.sum_shift += shift;
      a.sum_shift2 += shift * shift;
      if (!r.killed) ++a.censored;
    }
  });

  TailEstimate te;
  te.eps = eps;
  // the deviation rate depends on (q, eps) only; p enters the bound through
  // the (1-p)^{eps n} term, which handles p = 1 directly
  te.rate = chernoff_rate(params.q, std::min(params.trap_prob, 0.5), eps);
  te.n_walks = n_walks;
  te.horizon = horizon;
  te.hits.assign(n_grid.size(), 0);
  double sum_t = 0.0, sum_t2 = 0.0, sum_sh = 0.0, sum_sh2 = 0.0;
  std::int64_t censored = 0;
  for (const auto& a : acc) {
    for (std::size_t g = 0; g < n_grid.size(); ++g) te.hits[g] += a.hits[g];
    sum_t += a.sum_t;
    sum_t2 += a.sum_t2;
    sum_sh += a.sum_shift;
    sum_sh2 += a.sum_shift2;
    censored += a.censored;
  }

  const double nw = static_cast<double>(n_walks);
  for (std::size_t g = 0; g < n_grid.size(); ++g) {
    const double p_hat = static_cast<double>(te.hits[g]) / nw;
    te.grid.push_back(static_cast<double>(n_grid[g]));
    te.survival.push_back(p_hat);
    te.se.push_back(stats::binomial_se(p_hat, n_walks));
    te.bound.push_back(std::pow(1.0 - params.trap_prob, eps * static_cast<double>(n_grid[g])) +
                       std::exp(-te.rate.c * static_cast<double>(n_grid[g])));
  }
  te.fit = stats::log_linear_fit(te.grid, te.survival);
  te.mean_T = sum_t / nw;
  te.mean_T_se = std::sqrt(std::max(sum_t2 / nw - te.mean_T * te.mean_T, 0.0) / nw);
  te.horizon_shift = sum_sh / nw;
  te.horizon_shift_se = std::sqrt(std::max(sum_sh2 / nw - te.horizon_shift * te.horizon_shift, 0.0) / nw);
  te.censored_fraction = static_cast<double>(censored) / nw;
  te.deepest_bucket_empty = te.hits.back() == 0;
  return te;
}

// ---------------------------------------------------------------------------
// Lattice walks
// ---------------------------------------------------------------------------

namespace {

struct KilledOutcome {
  std::int64_t survival_time = 0;
  bool killed = false;
};

KilledOutcome killed_walk(const LatticeField& field, std::span<const int> x0, std::int64_t horizon,
                          std::uint64_t seed, LatticeWalkTrace* trace) {
  const int d = field.dim;
  Rng rng(seed);
  auto x = load_point(x0, d);
  const std::span<const int> xs(x.data(), static_cast<std::size_t>(d));
  if (trace) {
    trace->dim = d;
    trace->seed = seed;
    trace->positions.insert(trace->positions.end(), xs.begin(), xs.end());
  }

  KilledOutcome out;
  for (std::int64_t j = 0; j < horizon; ++j) {
    if (field.dissipative(xs)) {
      const int r = rng.uniform_int(2 * d + 1);
      if (r == 2 * d) {
        out.survival_time = j + 1;
        out.killed = true;
        if (trace) {
          trace->killed = true;
          trace->survival_time = j + 1;
        }
        return out;
      }
      x[r / 2] += (r % 2) ? 1 : -1;
    } else {
      const int r = rng.uniform_int(2 * d);
      x[r / 2] += (r % 2) ? 1 : -1;
    }
    if (trace) trace->positions.insert(trace->positions.end(), xs.begin(), xs.end());
  }
  out.survival_time = horizon;
  if (trace) trace->survival_time = horizon;
  return out;
}

}  // namespace

LatticeWalkTrace run_killed_lattice_walk(const LatticeField& field, std::span<const int> x0,
                                         std::int64_t horizon, std::uint64_t seed) {
  if (horizon < 1) throw ValidationError("lattice walk: horizon must be >= 1");
  if (static_cast<int>(x0.size()) != field.dim) throw ValidationError("lattice walk: x0 dimension mismatch");
  LatticeWalkTrace trace;
  killed_walk(field, x0, horizon, seed, &trace);
  return trace;
}

MeanEstimate killed_walk_survival(const LatticeField& field, std::span<const int> x0,
                                  std::int64_t horizon, std::int64_t n_walks, std::uint64_t seed,
                                  int width) {
  const int n_blocks = par::block_count(n_walks);
  struct Acc {
    double sum = 0.0, sum2 = 0.0;
    std::int64_t censored = 0;
  };
  std::vector<Acc> acc(n_blocks);
  std::vector<int> x0v(x0.begin(), x0.end());
  par::for_blocks(n_walks, width, [&](int block, std::int64_t lo, std::int64_t hi) {
    Acc& a = acc[block];
    for (std::int64_t w = lo; w < hi; ++w) {
      const std::uint64_t s = mix64(mix64(seed, kLatticeTag), static_cast<std::uint64_t>(w));
      const auto r = killed_walk(field, x0v, horizon, s, nullptr);
      const double t = static_cast<double>(r.survival_time);
      a.sum += t;
      a.sum2 += t * t;
      if (!r.killed) ++a.censored;
    }
  });

  MeanEstimate out;
  out.n = n_walks;
  double sum = 0.0, sum2 = 0.0;
  std::int64_t censored = 0;
  for (const auto& a : acc) {
    sum += a.sum;
    sum2 += a.sum2;
    censored += a.censored;
  }
  const double nw = static_cast<double>(n_walks);
  out.mean = sum / nw;
  out.se = std::sqrt(std::max(sum2 / nw - out.mean * out.mean, 0.0) / nw);
  out.censored_fraction = static_cast<double>(censored) / nw;
  out.flagged = out.censored_fraction > 0.01;
  return out;
}

FunctionalEstimate local_time_functional(const LatticeField& field, std::span<const int> x0,
                                         std::int64_t k_max, std::int64_t n_walks, std::uint64_t seed,
                                         double tail_tol, int width) {
  if (k_max < 1) throw ValidationError("local_time_functional: k_max must be >= 1");
  const int d = field.dim;
  const double rho = 2.0 * d / (2.0 * d + 1.0);
  const int n_blocks = par::block_count(n_walks);

  struct Acc {
    std::vector<double> sum_k, sum2_k;
    double total = 0.0, total2 = 0.0;
  };
  std::vector<Acc> acc(n_blocks);
  for (auto& a : acc) {
    a.sum_k.assign(k_max, 0.0);
    a.sum2_k.assign(k_max, 0.0);
  }
  std::vector<int> x0v(x0.begin(), x0.end());

  par::for_blocks(n_walks, width, [&](int block, std::int64_t lo, std::int64_t hi) {
    Acc& a = acc[block];
    for (std::int64_t wlk = lo; wlk < hi; ++wlk) {
      const std::uint64_t s =
          mix64(mix64(seed, fnv1a64("randomwalk/functional")), static_cast<std::uint64_t>(wlk));
      Rng rng(s);
      auto x = load_point(x0v, d);
      const std::span<const int> xs(x.data(), static_cast<std::size_t>(d));
      double w = 1.0;
      double total = 0.0;
      for (std::int64_t k = 0; k < k_max; ++k) {
        a.sum_k[k] += w;
        a.sum2_k[k] += w * w;
        total += w;
        if (field.dissipative(xs)) w *= rho;  // l_{k+1}(D) gained this visit
        const int r = rng.uniform_int(2 * d);
        x[r / 2] += (r % 2) ? 1 : -1;
      }
      a.total += total;
      a.total2 += total * total;
    }
  });

  FunctionalEstimate out;
  out.k_max = k_max;
  out.mean_by_k.assign(k_max, 0.0);
  out.se_by_k.assign(k_max, 0.0);
  double total = 0.0, total2 = 0.0;
  const double nw = static_cast<double>(n_walks);
  for (const auto& a : acc) {
    for (std::int64_t k = 0; k < k_max; ++k) {
      out.mean_by_k[k] += a.sum_k[k];
      out.se_by_k[k] += a.sum2_k[k];
    }
    total += a.total;
    total2 += a.total2;
  }
  for (std::int64_t k = 0; k < k_max; ++k) {
    const double mean = out.mean_by_k[k] / nw;
    const double var = std::max(out.se_by_k[k] / nw - mean * mean, 0.0);
    out.mean_by_k[k] = mean;
    out.se_by_k[k] = std::sqrt(var / nw);
    out.value += mean;
  }
  out.se = std::sqrt(std::max(total2 / nw - (total / nw) * (total / nw), 0.0) / nw);
  const std::int64_t tail_window = std::min<std::int64_t>(10, k_max);
  double tail_mean = 0.0;
  for (std::int64_t k = k_max - tail_window; k < k_max; ++k) tail_mean += out.mean_by_k[k];
  out.converged = tail_mean / static_cast<double>(tail_window) < tail_tol;
  return out;
}

HittingEstimate hitting_time(const LatticeField& field, std::span<const int> x0, std::int64_t n_walks,
                             std::int64_t horizon, std::uint64_t seed, double analytic_bound,
                             int width) {
  const int d = field.dim;
  const int n_blocks = par::block_count(n_walks);
  struct Acc {
    double sum = 0.0, sum2 = 0.0;
    std::int64_t censored = 0;
  };
  std::vector<Acc> acc(n_blocks);
  std::vector<int> x0v(x0.begin(), x0.end());

  par::for_blocks(n_walks, width, [&](int block, std::int64_t lo, std::int64_t hi) {
    Acc& a = acc[block];
    for (std::int64_t wlk = lo; wlk < hi; ++wlk) {
      const std::uint64_t s =
          mix64(mix64(seed, fnv1a64("randomwalk/hitting")), static_cast<std::uint64_t>(wlk));
      Rng rng(s);
      auto x = load_point(x0v, d);
      const std::span<const int> xs(x.data(), static_cast<std::size_t>(d));
      std::int64_t tau = horizon;
      bool hit = false;
      for (std::int64_t k = 1; k <= horizon; ++k) {
        const int r = rng.uniform_int(2 * d);
        x[r / 2] += (r % 2) ? 1 : -1;
        if (field.dissipative(xs)) {
          tau = k;
          hit = true;
          break;
        }
      }
      a.sum += static_cast<double>(tau);
      a.sum2 += static_cast<double>(tau) * static_cast<double>(tau);
      if (!hit) ++a.censored;
    }
  });

  HittingEstimate out;
  out.analytic_bound = analytic_bound;
  double sum = 0.0, sum2 = 0.0;
  std::int64_t censored = 0;
  for (const auto& a : acc) {
    sum += a.sum;
    sum2 += a.sum2;
    censored += a.censored;
  }
  const double nw = static_cast<double>(n_walks);
  out.mean = sum / nw;
  out.se = std::sqrt(std::max(sum2 / nw - out.mean * out.mean, 0.0) / nw);
  out.censored_fraction = static_cast<double>(censored) / nw;
  out.flagged = out.censored_fraction > 0.01;
  return out;
}

// ---------------------------------------------------------------------------
// Local-time ledgers
// ---------------------------------------------------------------------------

LocalTimeLedger discrete_local_times(int d, std::span<const int> x0, std::int64_t k,
                                     std::uint64_t seed) {
  Rng rng(seed);
  LocalTimeLedger ledger;
  ledger.horizon = static_cast<double>(k);
  auto x = load_point(x0, d);
  for (std::int64_t j = 0; j < k; ++j) {
    ledger.l[PointKey{{x.begin(), x.begin() + d}}] += 1.0;
    const int r = rng.uniform_int(2 * d);
    x[r / 2] += (r % 2) ? 1 : -1;
  }
  return ledger;
}

LocalTimeLedger continuous_local_times(int d, std::span<const int> x0, double t, double jump_rate,
                                       std::uint64_t seed) {
  Rng rng(seed);
  LocalTimeLedger ledger;
  ledger.horizon = t;
  auto x = load_point(x0, d);
  double tau = 0.0;
  while (tau < t) {
    const double h = rng.exponential(jump_rate);
    const double stay = std::min(h, t - tau);
    ledger.l[PointKey{{x.begin(), x.begin() + d}}] += stay;
    tau += h;
    if (tau >= t) break;
    const int r = rng.uniform_int(2 * d);
    x[r / 2] += (r % 2) ? 1 : -1;
  }
  return ledger;
}

std::vector<double> sup_local_time_tail(int d, std::span<const std::int64_t> k_grid,
                                        std::int64_t n_walks, double delta, std::uint64_t seed) {
  if (k_grid.empty()) return {};
  const std::int64_t k_max = k_grid.back();
  std::vector<std::int64_t> exceed(k_grid.size(), 0);
  std::vector<int> origin(d, 0);

  for (std::int64_t wlk = 0; wlk < n_walks; ++wlk) {
    Rng rng(mix64(mix64(seed, fnv1a64("randomwalk/sup_lt")), static_cast<std::uint64_t>(wlk)));
    auto x = load_point(origin, d);
    std::unordered_map<PointKey, double, PointKeyHash> counts;
    double sup = 0.0;
    std::size_t g = 0;
    for (std::int64_t k = 0; k < k_max; ++k) {
      double& c = counts[PointKey{{x.begin(), x.begin() + d}}];
      c += 1.0;
      sup = std::max(sup, c);
      const int r = rng.uniform_int(2 * d);
      x[r / 2] += (r % 2) ? 1 : -1;
      while (g < k_grid.size() && k + 1 == k_grid[g]) {
        if (sup > std::pow(static_cast<double>(k_grid[g]), 0.5 + delta)) ++exceed[g];
        ++g;
      }
    }
  }
  std::vector<double> out;
  for (std::size_t g = 0; g < k_grid.size(); ++g)
    out.push_back(static_cast<double>(exceed[g]) / static_cast<double>(n_walks));
  return out;
}

// ---------------------------------------------------------------------------
// Continuous-time mass functional
// ---------------------------------------------------------------------------

namespace {

MassCurve mass_kernel(const LatticeField& field, std::span<const int> x0, double alpha, double beta,
                      double jump_rate, std::span<const double> eval_times, double exponent_scale,
                      std::span<const double> report_times, std::int64_t n_walks, std::uint64_t seed,
                      int width) {
  const int d = field.dim;
  const std::size_t g_count = eval_times.size();
  const int n_blocks = par::block_count(n_walks);
  struct Acc {
    std::vector<double> sum, sum2;
  };
  std::vector<Acc> acc(n_blocks);
  for (auto& a : acc) {
    a.sum.assign(g_count, 0.0);
    a.sum2.assign(g_count, 0.0);
  }
  std::vector<int> x0v(x0.begin(), x0.end());

  par::for_blocks(n_walks, width, [&](int block, std::int64_t lo, std::int64_t hi) {
    Acc& a = acc[block];
    for (std::int64_t wlk = lo; wlk < hi; ++wlk) {
      Rng rng(mix64(mix64(seed, kMassTag), static_cast<std::uint64_t>(wlk)));
      auto x = load_point(x0v, d);
      const std::span<const int> xs(x.data(), static_cast<std::size_t>(d));
      double tau = 0.0, integral = 0.0;
      std::size_t g = 0;
      while (g < g_count) {
        const double v = field.source(xs) ? -beta : (field.dissipative(xs) ? alpha : 0.0);
        const double h = rng.exponential(jump_rate);
        while (g < g_count && eval_times[g] <= tau + h) {
          const double ival = integral + v * (eval_times[g] - tau);
          const double w = std::exp(-exponent_scale * ival);
          a.sum[g] += w;
          a.sum2[g] += w * w;
          ++g;
        }
        integral += v * h;
        tau += h;
        const int r = rng.uniform_int(2 * d);
        x[r / 2] += (r % 2) ? 1 : -1;
      }
    }
  });

  MassCurve mc;
  mc.n_walks = n_walks;
  mc.t_grid.assign(report_times.begin(), report_times.end());
  mc.mass.assign(g_count, 0.0);
  mc.se.assign(g_count, 0.0);
  mc.var_flag.assign(g_count, false);
  const double nw = static_cast<double>(n_walks);
  for (std::size_t g = 0; g < g_count; ++g) {
    double s = 0.0, s2 = 0.0;
    for (const auto& a : acc) {
      s += a.sum[g];
      s2 += a.sum2[g];
    }
    mc.mass[g] = s / nw;
    mc.se[g] = std::sqrt(std::max(s2 / nw - mc.mass[g] * mc.mass[g], 0.0) / nw);
    mc.var_flag[g] = mc.mass[g] > 0.0 && mc.se[g] / mc.mass[g] > 0.5;
  }

  // trapezoid from 0 (where the mass is exactly 1) over the reported grid,
  // plus an exponential tail beyond it
  mc.integral_trapz = 0.5 * (1.0 + mc.mass.front()) * mc.t_grid.front();
  for (std::size_t g = 1; g < g_count; ++g)
    mc.integral_trapz +=
        0.5 * (mc.mass[g] + mc.mass[g - 1]) * (mc.t_grid[g] - mc.t_grid[g - 1]);
  const std::size_t win = std::min<std::size_t>(4, g_count);
  std::vector<double> xt(mc.t_grid.end() - win, mc.t_grid.end());
  std::vector<double> ym(mc.mass.end() - win, mc.mass.end());
  const auto fit = stats::log_linear_fit(xt, ym);
  mc.tail_rate = fit.ok ? fit.slope : 0.0;
  if (fit.ok && fit.slope < -1e-12) {
    mc.integral_total = mc.integral_trapz + mc.mass.back() / (-fit.slope);
  } else {
    mc.integral_total = mc.integral_trapz;
    mc.integral_flagged = true;
  }
  return mc;
}

}  // namespace

MassCurve feynman_kac_mass(const LatticeField& field, std::span<const int> x0, double alpha,
                           double beta, double gamma, std::span<const double> t_grid,
                           std::int64_t n_walks, std::uint64_t seed, int width) {
  if (t_grid.empty()) throw ValidationError("feynman_kac_mass: empty grid");
  for (std::size_t i = 1; i < t_grid.size(); ++i)
    if (t_grid[i] <= t_grid[i - 1]) throw ValidationError("feynman_kac_mass: grid must increase");
  if (!(gamma > 0.0)) throw ValidationError("feynman_kac_mass: gamma must be > 0");
  return mass_kernel(field, x0, alpha, beta, 2.0 * field.dim * gamma, t_grid, 1.0, t_grid, n_walks,
                     seed, width);
}

MassCurve feynman_kac_mass_rescaled(const LatticeField& field, std::span<const int> x0, double alpha,
                                    double beta, double gamma, std::span<const double> t_grid,
                                    std::int64_t n_walks, std::uint64_t seed, int width) {
  if (t_grid.empty()) throw ValidationError("feynman_kac_mass: empty grid");
  if (!(gamma > 0.0)) throw ValidationError("feynman_kac_mass: gamma must be > 0");
  std::vector<double> scaled(t_grid.begin(), t_grid.end());
  for (double& t : scaled) t *= gamma;
  return mass_kernel(field, x0, alpha, beta, 2.0 * field.dim, scaled, 1.0 / gamma, t_grid, n_walks,
                     seed, width);
}

// ---------------------------------------------------------------------------
// CSV / JSON emission
// ---------------------------------------------------------------------------

std::string tail_estimate_csv(const TailEstimate& te) {
  std::string out = "n_or_t,estimate,stderr,n_samples\n";
  for (std::size_t g = 0; g < te.grid.size(); ++g)
    out += io::csv_row({io::fmt(te.grid[g]), io::fmt(te.survival[g]), io::fmt(te.se[g]),
                        std::to_string(te.n_walks)});
  return out;
}

std::string mass_curve_csv(const MassCurve& mc) {
  std::string out = "n_or_t,estimate,stderr,n_samples\n";
  for (std::size_t g = 0; g < mc.t_grid.size(); ++g)
    out += io::csv_row({io::fmt(mc.t_grid[g]), io::fmt(mc.mass[g]), io::fmt(mc.se[g]),
                        std::to_string(mc.n_walks)});
  return out;
}

std::string fit_summary_json(const std::string& name, const stats::LinFit& fit) {
  std::string out = "{\"name\":\"" + name + "\",\"slope\":" + io::fmt(fit.slope) +
                    ",\"intercept\":" + io::fmt(fit.intercept) + ",\"slope_se\":" + io::fmt(fit.slope_se) +
                    ",\"points\":" + std::to_string(fit.n) +
                    ",\"significant\":" + (fit.slope_significant() ? "true" : "false") + "}";
  return out;
}

}  // namespace sandlab::randomwalk
