#include "sandlab/sandpile.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "sandlab/errors.hpp"

namespace sandlab::sandpile {

namespace {

constexpr double kRelTol = 1e-9;

template <class T>
bool unstable_at(const TopplingMatrix& m, const std::vector<T>& h, int x) {
  return static_cast<double>(h[x]) >= m.diag[x];
}

// number of legal topplings that brings h below the threshold
std::int64_t topple_count(std::int64_t h, std::int64_t diag) { return h / diag; }

std::int64_t topple_count(double h, double diag) {
  auto k = static_cast<std::int64_t>(std::floor(h / diag));
  if (k < 1) k = 1;
  while (h - static_cast<double>(k) * diag >= diag) ++k;
  while (k > 1 && h - static_cast<double>(k - 1) * diag < diag) --k;
  return k;
}

template <class T>
StabilizeResult<T> stabilize_impl(const TopplingMatrix& m, std::vector<T> h, std::int64_t budget) {
  if (budget < 1) throw ValidationError("stabilize: budget must be >= 1");
  const int n = m.size();
  if (static_cast<int>(h.size()) != n) throw ValidationError("stabilize: height size mismatch");

  StabilizeResult<T> out;
  out.odometer.counts.assign(n, 0);

  std::deque<int> fifo;
  std::vector<char> queued(n, 0);
  for (int x = 0; x < n; ++x) {
    if (unstable_at(m, h, x)) {
      fifo.push_back(x);
      queued[x] = 1;
    }
  }

  const auto edge = static_cast<T>(m.edge_weight);
  while (!fifo.empty()) {
    const int x = fifo.front();
    fifo.pop_front();
    queued[x] = 0;
    if (!unstable_at(m, h, x)) continue;

    const auto diag = static_cast<T>(m.diag[x]);
    std::int64_t k = topple_count(h[x], diag);
    bool exhausted = false;
    if (out.odometer.counts[x] + k > budget) {
      k = budget - out.odometer.counts[x];
      exhausted = true;
    }
    if (k > 0) {
      h[x] -= static_cast<T>(k) * diag;
      out.odometer.counts[x] += k;
      const auto gain = static_cast<T>(k) * edge;
      for (int y : m.neighbors(x)) {
        h[y] += gain;
        if (!queued[y] && unstable_at(m, h, y)) {
          fifo.push_back(y);
          queued[y] = 1;
        }
      }
    }
    if (exhausted) {
      out.status = StabilizeStatus::BudgetExceeded;
      out.heights = std::move(h);
      return out;
    }
    if (unstable_at(m, h, x)) {  // continuous-mode rounding guard
      fifo.push_back(x);
      queued[x] = 1;
    }
  }
  out.heights = std::move(h);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

TopplingMatrix assemble_toppling_matrix(const topology::BoxLattice& box,
                                        const topology::SiteClassMap& classes,
                                        const LatticeParams& params, PileMode mode) {
  if (!(params.gamma > 0.0)) throw ValidationError("assemble_toppling_matrix: gamma must be > 0");
  const double two_d_gamma = 2.0 * box.dim() * params.gamma;
  if (classes.any_dissipative() && !(params.alpha > 0.0))
    throw ValidationError("assemble_toppling_matrix: alpha must be > 0 with dissipative sites");
  if (classes.any_source() && !(params.beta > 0.0 && params.beta < two_d_gamma))
    throw ValidationError("assemble_toppling_matrix: beta must lie in (0, 2*d*gamma) with source sites");
  if (mode == PileMode::IntegerSandpile) {
    if (params.gamma != 1.0 || params.alpha != 1.0 || params.beta != 0.0 || classes.any_source())
      throw ValidationError(
          "assemble_toppling_matrix: integer mode requires gamma=1, alpha=1, beta=0 and no sources");
  }

  TopplingMatrix m;
  m.mode = mode;
  m.edge_weight = params.gamma;
  m.offsets.assign(box.size() + 1, 0);
  m.diag.resize(box.size());
  for (int i = 0; i < box.size(); ++i) {
    switch (classes.cls[i]) {
      case topology::SiteClass::Dissipative:
        m.diag[i] = two_d_gamma + params.alpha;
        break;
      case topology::SiteClass::Source:
        m.diag[i] = two_d_gamma - params.beta;
        break;
      default:
        m.diag[i] = two_d_gamma;
    }
    m.offsets[i + 1] = m.offsets[i] + box.degree(i);
  }
  m.adj.resize(m.offsets.back());
  for (int i = 0; i < box.size(); ++i) {
    auto nb = box.neighbors(i);
    std::copy(nb.begin(), nb.end(), m.adj.begin() + m.offsets[i]);
  }
  m.metric = [box](int a, int b) { return box.distance(a, b); };
  return m;
}

TopplingMatrix assemble_toppling_matrix(const topology::QaryTree& tree) {
  TopplingMatrix m;
  m.mode = PileMode::IntegerSandpile;
  m.edge_weight = 1.0;
  m.diag.assign(tree.size(), static_cast<double>(tree.q() + 1));
  m.offsets.assign(tree.size() + 1, 0);
  for (int i = 0; i < tree.size(); ++i) m.offsets[i + 1] = m.offsets[i] + tree.degree(i);
  m.adj.resize(m.offsets.back());
  for (int i = 0; i < tree.size(); ++i) {
    auto nb = tree.neighbors(i);
    std::copy(nb.begin(), nb.end(), m.adj.begin() + m.offsets[i]);
  }
  m.metric = [tree](int a, int b) { return tree.distance(a, b); };
  return m;
}

// ---------------------------------------------------------------------------
// Stabilization
// ---------------------------------------------------------------------------

StabilizeResult<std::int64_t> stabilize(const TopplingMatrix& m, std::vector<std::int64_t> h,
                                        std::int64_t budget) {
  return stabilize_impl(m, std::move(h), budget);
}

StabilizeResult<double> stabilize(const TopplingMatrix& m, std::vector<double> h, std::int64_t budget) {
  return stabilize_impl(m, std::move(h), budget);
}

StabilizeResult<std::int64_t> stabilize_randomized(const TopplingMatrix& m, std::vector<std::int64_t> h,
                                                   std::int64_t budget, Rng& rng) {
  if (budget < 1) throw ValidationError("stabilize: budget must be >= 1");
  const int n = m.size();
  StabilizeResult<std::int64_t> out;
  out.odometer.counts.assign(n, 0);

  std::vector<int> unstable;
  std::vector<char> listed(n, 0);
  for (int x = 0; x < n; ++x)
    if (unstable_at(m, h, x)) {
      unstable.push_back(x);
      listed[x] = 1;
    }

  while (!unstable.empty()) {
    const int pick = rng.uniform_int(static_cast<int>(unstable.size()));
    const int x = unstable[pick];
    if (!unstable_at(m, h, x)) {
      unstable[pick] = unstable.back();
      unstable.pop_back();
      listed[x] = 0;
      continue;
    }
    if (out.odometer.counts[x] + 1 > budget) {
      out.status = StabilizeStatus::BudgetExceeded;
      out.heights = std::move(h);
      return out;
    }
    h[x] -= m.diag_int(x);
    ++out.odometer.counts[x];
    for (int y : m.neighbors(x)) {
      h[y] += 1;
      if (!listed[y] && unstable_at(m, h, y)) {
        unstable.push_back(y);
        listed[y] = 1;
      }
    }
    // x stays listed; it is lazily dropped once it tests stable
  }
  out.heights = std::move(h);
  return out;
}

AvalancheRecord avalanche_from(const TopplingMatrix& m, const Odometer& od) {
  AvalancheRecord rec;
  rec.site = od.source_site;
  for (int y = 0; y < m.size(); ++y) {
    if (od.counts[y] > 0) {
      ++rec.size;
      if (od.source_site >= 0 && m.metric) rec.diameter = std::max(rec.diameter, m.metric(od.source_site, y));
    }
  }
  return rec;
}

namespace {
template <class T>
AddResult<T> add_impl(const TopplingMatrix& m, const std::vector<T>& h, int x, std::int64_t budget) {
  if (x < 0 || x >= m.size()) throw ValidationError("add_and_stabilize: site out of range");
  std::vector<T> work(h);
  work[x] += static_cast<T>(1);
  auto r = stabilize(m, std::move(work), budget);
  AddResult<T> out;
  out.status = r.status;
  out.heights = std::move(r.heights);
  out.odometer = std::move(r.odometer);
  out.odometer.source_site = x;
  out.record = avalanche_from(m, out.odometer);
  return out;
}
}  // namespace

AddResult<std::int64_t> add_and_stabilize(const TopplingMatrix& m, const std::vector<std::int64_t>& h,
                                          int x, std::int64_t budget) {
  return add_impl(m, h, x, budget);
}

AddResult<double> add_and_stabilize(const TopplingMatrix& m, const std::vector<double>& h, int x,
                                    std::int64_t budget) {
  return add_impl(m, h, x, budget);
}

template <class T>
bool is_stable(const TopplingMatrix& m, const std::vector<T>& h) {
  for (int x = 0; x < m.size(); ++x)
    if (unstable_at(m, h, x)) return false;
  return true;
}
template bool is_stable<std::int64_t>(const TopplingMatrix&, const std::vector<std::int64_t>&);
template bool is_stable<double>(const TopplingMatrix&, const std::vector<double>&);

bool check_conservation(const TopplingMatrix& m, const std::vector<std::int64_t>& before,
                        const std::vector<std::int64_t>& after, const Odometer& od) {
  for (int y = 0; y < m.size(); ++y) {
    std::int64_t rhs = before[y] - m.diag_int(y) * od.counts[y];
    if (od.source_site == y) rhs += 1;
    for (int z : m.neighbors(y)) rhs += od.counts[z];
    if (after[y] != rhs) return false;
  }
  return true;
}

bool check_conservation(const TopplingMatrix& m, const std::vector<double>& before,
                        const std::vector<double>& after, const Odometer& od) {
  double scale = 1.0;
  for (int y = 0; y < m.size(); ++y) scale = std::max(scale, std::abs(before[y]));
  for (int y = 0; y < m.size(); ++y) {
    double rhs = before[y] - m.diag[y] * static_cast<double>(od.counts[y]);
    if (od.source_site == y) rhs += 1.0;
    for (int z : m.neighbors(y)) rhs += m.edge_weight * static_cast<double>(od.counts[z]);
    const double cnt = static_cast<double>(od.counts[y]);
    const double local = std::max({scale, std::abs(rhs), m.diag[y] * std::abs(cnt)});
    if (std::abs(after[y] - rhs) > kRelTol * local) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Burning
// ---------------------------------------------------------------------------

namespace {
template <class T>
BurnResult burning_impl(const TopplingMatrix& m, const std::vector<T>& h, double eps) {
  const int n = m.size();
  BurnResult out;
  std::vector<double> threshold(n);
  std::vector<char> burnt(n, 0);
  for (int x = 0; x < n; ++x) threshold[x] = m.edge_weight * m.degree(x);

  // duplicates in the queue are harmless: burnt sites are skipped on pop
  std::deque<int> queue;
  for (int x = 0; x < n; ++x)
    if (static_cast<double>(h[x]) >= threshold[x] - eps) queue.push_back(x);
  while (!queue.empty()) {
    const int x = queue.front();
    queue.pop_front();
    if (burnt[x]) continue;
    if (static_cast<double>(h[x]) < threshold[x] - eps) continue;
    burnt[x] = 1;
    out.burn_order.push_back(x);
    for (int y : m.neighbors(x)) {
      if (burnt[y]) continue;
      threshold[y] -= m.edge_weight;
      if (static_cast<double>(h[y]) >= threshold[y] - eps) queue.push_back(y);
    }
  }
  out.recurrent = static_cast<int>(out.burn_order.size()) == n;
  return out;
}
}  // namespace

BurnResult burning_test(const TopplingMatrix& m, const std::vector<std::int64_t>& h) {
  return burning_impl(m, h, 0.0);
}

BurnResult burning_test(const TopplingMatrix& m, const std::vector<double>& h) {
  // non-strict burning threshold with a small absolute slack on real heights
  return burning_impl(m, h, 1e-12 * std::max(1.0, m.edge_weight));
}

std::vector<std::vector<std::int64_t>> enumerate_recurrent(const TopplingMatrix& m, std::int64_t cap) {
  if (m.mode != PileMode::IntegerSandpile)
    throw ValidationError("enumerate_recurrent: integer mode only");
  const int n = m.size();
  double log_total = 0.0;
  for (int x = 0; x < n; ++x) log_total += std::log(m.diag[x]);
  if (log_total > std::log(static_cast<double>(cap)))
    throw CapacityError("enumerate_recurrent: stable configuration count exceeds cap");

  std::vector<std::vector<std::int64_t>> recurrent;
  std::vector<std::int64_t> h(n, 0);
  for (;;) {
    if (burning_test(m, h).recurrent) recurrent.push_back(h);
    int k = n - 1;
    for (; k >= 0; --k) {
      if (++h[k] < m.diag_int(k)) break;
      h[k] = 0;
    }
    if (k < 0) break;
  }
  return recurrent;
}

// ---------------------------------------------------------------------------
// Stationary sampling
// ---------------------------------------------------------------------------

StationarySampler::StationarySampler(const TopplingMatrix& m, std::uint64_t seed, std::int64_t budget)
    : m_(&m),
      rng_(stream_rng(seed, fnv1a64("sandpile/stationary"), 0)),
      seed_(seed),
      budget_(budget) {
  if (m.mode != PileMode::IntegerSandpile)
    throw ValidationError("StationarySampler: integer mode only");
  heights_.resize(m.size());
  for (int x = 0; x < m.size(); ++x) heights_[x] = m.diag_int(x) - 1;
}

AvalancheRecord StationarySampler::step() {
  const int x = rng_.uniform_int(m_->size());
  auto r = add_and_stabilize(*m_, heights_, x, budget_);
  if (!r.stable())
    throw std::runtime_error("StationarySampler: chain addition did not stabilize within budget " +
                             std::to_string(budget_) + " at step " + std::to_string(steps_));
  heights_ = std::move(r.heights);
  ++steps_;
  return r.record;
}

void StationarySampler::run(int steps) {
  for (int i = 0; i < steps; ++i) step();
}

AddResult<std::int64_t> StationarySampler::probe(int x) const {
  auto r = add_and_stabilize(*m_, heights_, x, budget_);
  if (!r.stable())
    throw std::runtime_error("StationarySampler: probe addition did not stabilize within budget");
  return r;
}

AvalancheStats avalanche_statistics(StationarySampler& chain, int site, std::int64_t n_probes,
                                    int thinning, std::span<const int> size_grid,
                                    std::span<const int> diam_grid) {
  if (n_probes < 1) throw ValidationError("avalanche_statistics: n_probes must be >= 1");
  AvalancheStats out;
  out.probe_site = site;
  out.n_probes = n_probes;

  std::vector<double> sizes;
  sizes.reserve(n_probes);
  std::vector<std::int64_t> size_exceed(size_grid.size(), 0), diam_exceed(diam_grid.size(), 0);
  for (std::int64_t i = 0; i < n_probes; ++i) {
    chain.run(std::max(1, thinning));
    const auto r = chain.probe(site);
    sizes.push_back(static_cast<double>(r.record.size));
    for (std::size_t g = 0; g < size_grid.size(); ++g)
      if (r.record.size > size_grid[g]) ++size_exceed[g];
    for (std::size_t g = 0; g < diam_grid.size(); ++g)
      if (r.record.size > 0 && r.record.diameter > diam_grid[g]) ++diam_exceed[g];
  }

  const auto ms = stats::batch_means(sizes, 32);
  out.mean_size = ms.mean;
  out.mean_size_se = ms.se;

  auto fill = [&](std::span<const int> grid, const std::vector<std::int64_t>& exceed, TailCurve& tc) {
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const double p = static_cast<double>(exceed[g]) / static_cast<double>(n_probes);
      tc.grid.push_back(grid[g]);
      tc.prob.push_back(p);
      tc.se.push_back(stats::binomial_se(p, n_probes));
    }
    tc.fit = stats::log_linear_fit(tc.grid, tc.prob);
  };
  fill(size_grid, size_exceed, out.size_tail);
  fill(diam_grid, diam_exceed, out.diam_tail);
  return out;
}

std::vector<StationarySample> sample_stationary(const TopplingMatrix& m, int burn_in,
                                                std::int64_t n_samples, int thinning,
                                                std::uint64_t seed, std::int64_t budget) {
  StationarySampler chain(m, seed, budget);
  chain.run(burn_in);
  std::vector<StationarySample> stream;
  stream.reserve(n_samples);
  for (std::int64_t s = 0; s < n_samples; ++s) {
    AvalancheRecord last{};
    for (int i = 0; i < std::max(1, thinning); ++i) last = chain.step();
    stream.push_back({chain.heights(), last, chain.step_count()});
  }
  return stream;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

void write_heights_jsonl(std::ostream& os, std::uint64_t seed, std::uint64_t step,
                         const std::vector<std::int64_t>& heights) {
  os << "{\"seed\":" << seed << ",\"step\":" << step << ",\"heights\":[";
  for (std::size_t i = 0; i < heights.size(); ++i) {
    if (i) os << ',';
    os << heights[i];
  }
  os << "]}\n";
}

void write_avalanche_csv_row(std::ostream& os, std::uint64_t seed, std::uint64_t step,
                             const AvalancheRecord& rec) {
  os << seed << ',' << step << ',' << rec.site << ',' << rec.size << ',' << rec.diameter << '\n';
}

}  // namespace sandlab::sandpile
