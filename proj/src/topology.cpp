#include "sandlab/topology.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <unordered_set>

#include "sandlab/errors.hpp"
#include "sandlab/rng.hpp"

namespace sandlab::topology {

namespace {

// floored modulo, correct for negative coordinates
int fmod_int(int a, int m) {
  const int r = a % m;
  return r < 0 ? r + m : r;
}

}  // namespace

// ---------------------------------------------------------------------------
// BoxLattice
// ---------------------------------------------------------------------------

BoxLattice BoxLattice::cube(int d, int radius, std::int64_t site_budget) {
  if (d < 1 || d > kMaxDim) throw ValidationError("BoxLattice: dimension must be in [1," + std::to_string(kMaxDim) + "]");
  if (radius < 0) throw ValidationError("BoxLattice: radius must be >= 0");
  std::vector<int> lo(d, -radius), hi(d, radius);
  BoxLattice box = build(std::move(lo), std::move(hi), site_budget);
  box.radius_ = radius;
  return box;
}

BoxLattice BoxLattice::grid(const std::vector<int>& extents, std::int64_t site_budget) {
  const int d = static_cast<int>(extents.size());
  if (d < 1 || d > kMaxDim) throw ValidationError("BoxLattice: dimension must be in [1," + std::to_string(kMaxDim) + "]");
  std::vector<int> lo(d, 0), hi(d);
  for (int i = 0; i < d; ++i) {
    if (extents[i] < 1) throw ValidationError("BoxLattice: extents must be >= 1");
    hi[i] = extents[i] - 1;
  }
  BoxLattice box = build(std::move(lo), std::move(hi), site_budget);
  box.radius_ = *std::max_element(extents.begin(), extents.end()) - 1;
  return box;
}

BoxLattice BoxLattice::build(std::vector<int> lo, std::vector<int> hi, std::int64_t site_budget) {
  BoxLattice box;
  box.d_ = static_cast<int>(lo.size());
  box.lo_ = std::move(lo);
  box.hi_ = std::move(hi);

  std::int64_t count = 1;
  for (int i = 0; i < box.d_; ++i) {
    const std::int64_t len = box.hi_[i] - box.lo_[i] + 1;
    if (count > site_budget / len + 1) throw CapacityError("BoxLattice: site count exceeds budget");
    count *= len;
  }
  if (count > site_budget) throw CapacityError("BoxLattice: site count exceeds budget");
  box.n_sites_ = static_cast<int>(count);

  // lexicographic coordinates
  box.coords_.resize(static_cast<std::size_t>(count) * box.d_);
  std::vector<int> x(box.lo_);
  for (std::int64_t i = 0; i < count; ++i) {
    std::copy(x.begin(), x.end(), box.coords_.begin() + i * box.d_);
    for (int k = box.d_ - 1; k >= 0; --k) {
      if (++x[k] <= box.hi_[k]) break;
      x[k] = box.lo_[k];
    }
  }

  box.offsets_.assign(box.n_sites_ + 1, 0);
  std::vector<std::int64_t> strides(box.d_, 1);
  for (int k = box.d_ - 2; k >= 0; --k)
    strides[k] = strides[k + 1] * (box.hi_[k + 1] - box.lo_[k + 1] + 1);

  auto in_box = [&](std::span<const int> p) {
    for (int k = 0; k < box.d_; ++k)
      if (p[k] < box.lo_[k] || p[k] > box.hi_[k]) return false;
    return true;
  };
  auto flat = [&](std::span<const int> p) {
    std::int64_t idx = 0;
    for (int k = 0; k < box.d_; ++k) idx += (p[k] - box.lo_[k]) * strides[k];
    return static_cast<int>(idx);
  };

  std::vector<int> nb(box.d_);
  for (int i = 0; i < box.n_sites_; ++i) {
    auto c = box.coord(i);
    int deg = 0;
    for (int k = 0; k < box.d_; ++k) {
      std::copy(c.begin(), c.end(), nb.begin());
      nb[k] = c[k] - 1;
      if (in_box(nb)) ++deg;
      nb[k] = c[k] + 1;
      if (in_box(nb)) ++deg;
    }
    box.offsets_[i + 1] = box.offsets_[i] + deg;
  }
  box.adj_.resize(box.offsets_.back());
  for (int i = 0; i < box.n_sites_; ++i) {
    auto c = box.coord(i);
    int w = box.offsets_[i];
    for (int k = 0; k < box.d_; ++k) {
      std::copy(c.begin(), c.end(), nb.begin());
      nb[k] = c[k] - 1;
      if (in_box(nb)) box.adj_[w++] = flat(nb);
      nb[k] = c[k] + 1;
      if (in_box(nb)) box.adj_[w++] = flat(nb);
    }
  }
  return box;
}

int BoxLattice::index_of(std::span<const int> x) const {
  if (static_cast<int>(x.size()) != d_) return -1;
  std::int64_t idx = 0;
  std::int64_t stride = 1;
  for (int k = d_ - 1; k >= 0; --k) {
    if (x[k] < lo_[k] || x[k] > hi_[k]) return -1;
    idx += static_cast<std::int64_t>(x[k] - lo_[k]) * stride;
    stride *= hi_[k] - lo_[k] + 1;
  }
  return static_cast<int>(idx);
}

int BoxLattice::distance(int a, int b) const {
  auto ca = coord(a), cb = coord(b);
  int d = 0;
  for (int k = 0; k < d_; ++k) d += std::abs(ca[k] - cb[k]);
  return d;
}

// ---------------------------------------------------------------------------
// QaryTree
// ---------------------------------------------------------------------------

QaryTree QaryTree::complete(int q, int depth_cap, std::int64_t site_budget) {
  if (q < 2) throw ValidationError("QaryTree: branching number q must be >= 2");
  if (depth_cap < 0) throw ValidationError("QaryTree: depth must be >= 0");

  std::int64_t count = 1, level = 1;
  for (int g = 1; g <= depth_cap; ++g) {
    if (level > (site_budget - count) / q) throw CapacityError("QaryTree: site count exceeds budget");
    level *= q;
    count += level;
  }

  QaryTree t;
  t.q_ = q;
  t.depth_cap_ = depth_cap;
  t.complete_ = true;
  const int n = static_cast<int>(count);
  t.parent_.assign(n, -1);
  t.depth_.assign(n, 0);
  t.child_offsets_.assign(n + 1, 0);

  // breadth-first ids: children of node i start right after the previous
  // level's children
  int next = 1;
  std::vector<int> frontier{0};
  int depth = 0;
  while (!frontier.empty() && depth < depth_cap) {
    std::vector<int> next_frontier;
    next_frontier.reserve(frontier.size() * q);
    for (int v : frontier) {
      for (int c = 0; c < q; ++c) {
        t.parent_[next] = v;
        t.depth_[next] = depth + 1;
        next_frontier.push_back(next);
        ++next;
      }
    }
    frontier = std::move(next_frontier);
    ++depth;
  }

  std::vector<int> child_count(n, 0);
  for (int i = 1; i < n; ++i) ++child_count[t.parent_[i]];
  for (int i = 0; i < n; ++i) t.child_offsets_[i + 1] = t.child_offsets_[i] + child_count[i];
  t.child_.resize(t.child_offsets_.back());
  std::vector<int> w(t.child_offsets_.begin(), t.child_offsets_.end() - 1);
  for (int i = 1; i < n; ++i) t.child_[w[t.parent_[i]]++] = i;

  t.finalize_adjacency();
  return t;
}

void QaryTree::finalize_adjacency() {
  const int n = size();
  adj_offsets_.assign(n + 1, 0);
  for (int i = 0; i < n; ++i) adj_offsets_[i + 1] = adj_offsets_[i] + degree(i);
  adj_.resize(adj_offsets_.back());
  std::vector<int> w(adj_offsets_.begin(), adj_offsets_.end() - 1);
  for (int i = 0; i < n; ++i) {
    if (parent_[i] >= 0) adj_[w[i]++] = parent_[i];
    for (int c : children(i)) adj_[w[i]++] = c;
  }
}

int QaryTree::distance(int a, int b) const {
  int da = depth_[a], db = depth_[b];
  int dist = 0;
  while (da > db) {
    a = parent_[a];
    --da;
    ++dist;
  }
  while (db > da) {
    b = parent_[b];
    --db;
    ++dist;
  }
  while (a != b) {
    a = parent_[a];
    b = parent_[b];
    dist += 2;
  }
  return dist;
}

QaryTree prune_tree(const QaryTree& tree, const std::vector<std::uint8_t>& removed) {
  const int n = tree.size();
  std::vector<int> new_id(n, -1);
  std::vector<int> kept;
  kept.reserve(n);
  // BFS order is preserved, so a vertex survives iff it is not removed and
  // its parent survived
  for (int i = 0; i < n; ++i) {
    if (removed[i]) continue;
    const int p = tree.parent(i);
    if (p >= 0 && new_id[p] < 0) continue;
    new_id[i] = static_cast<int>(kept.size());
    kept.push_back(i);
  }

  QaryTree out;
  out.q_ = tree.q();
  out.depth_cap_ = tree.depth_cap();
  out.complete_ = kept.size() == static_cast<std::size_t>(n);
  const int m = static_cast<int>(kept.size());
  out.parent_.resize(m);
  out.depth_.resize(m);
  out.child_offsets_.assign(m + 1, 0);
  std::vector<int> child_count(m, 0);
  for (int j = 0; j < m; ++j) {
    const int old = kept[j];
    const int p = tree.parent(old);
    out.parent_[j] = p < 0 ? -1 : new_id[p];
    out.depth_[j] = tree.depth(old);
    if (out.parent_[j] >= 0) ++child_count[out.parent_[j]];
  }
  for (int j = 0; j < m; ++j) out.child_offsets_[j + 1] = out.child_offsets_[j] + child_count[j];
  out.child_.resize(out.child_offsets_.back());
  std::vector<int> w(out.child_offsets_.begin(), out.child_offsets_.end() - 1);
  for (int j = 1; j < m; ++j) out.child_[w[out.parent_[j]]++] = j;
  out.finalize_adjacency();
  return out;
}

// ---------------------------------------------------------------------------
// Trap fields
// ---------------------------------------------------------------------------

TrapField sample_trap_field(const QaryTree& tree, double p, double kill_prob, std::uint64_t seed) {
  return sample_trap_field(tree, std::vector<double>(tree.size(), p), kill_prob, seed);
}

TrapField sample_trap_field(const QaryTree& tree, const std::vector<double>& p_site, double kill_prob,
                            std::uint64_t seed) {
  if (static_cast<int>(p_site.size()) != tree.size())
    throw ValidationError("sample_trap_field: p_site size mismatch");
  if (!(kill_prob > 0.0 && kill_prob <= 1.0))
    throw ValidationError("sample_trap_field: kill_prob must lie in (0,1]");
  for (int i = 1; i < tree.size(); ++i)
    if (!(p_site[i] > 0.0 && p_site[i] <= 1.0))
      throw ValidationError("sample_trap_field: trap_prob must lie in (0,1] off the root");

  TrapField field;
  field.trap_prob = p_site;
  field.trap_prob[0] = 0.0;
  field.kill_prob = kill_prob;
  field.seed = seed;
  field.omega.assign(tree.size(), 0);
  Rng rng = stream_rng(seed, fnv1a64("topology/trap_field"), 0);
  for (int i = 1; i < tree.size(); ++i) field.omega[i] = rng.bernoulli(p_site[i]) ? 1 : 0;
  return field;
}

QaryTree prune_to_galton_watson(const QaryTree& tree, const TrapField& field) {
  if (static_cast<int>(field.omega.size()) != tree.size())
    throw ValidationError("prune_to_galton_watson: field size mismatch");
  if (field.kill_prob != 1.0)
    throw ValidationError("prune_to_galton_watson: requires perfect traps (kill_prob == 1)");
  return prune_tree(tree, field.omega);
}

// ---------------------------------------------------------------------------
// Class patterns
// ---------------------------------------------------------------------------

ClassPattern ClassPattern::empty_d() { return {}; }

ClassPattern ClassPattern::all_d() {
  ClassPattern p;
  p.kind = Kind::AllD;
  return p;
}

ClassPattern ClassPattern::axis_d(int axis) {
  ClassPattern p;
  p.kind = Kind::AxisD;
  p.axis = axis;
  return p;
}

ClassPattern ClassPattern::sublattice_d(std::vector<int> period) {
  for (int m : period)
    if (m < 1) throw ValidationError("ClassPattern: sublattice period entries must be >= 1");
  ClassPattern p;
  p.kind = Kind::SublatticeD;
  p.period = std::move(period);
  return p;
}

ClassPattern ClassPattern::lines_d(std::vector<long long> r, int axis) {
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (r[i] <= 0) throw ValidationError("ClassPattern: line offsets must be positive");
    if (i > 0 && r[i] <= r[i - 1]) throw ValidationError("ClassPattern: line offsets must increase");
  }
  ClassPattern p;
  p.kind = Kind::LinesD;
  p.lines = std::move(r);
  p.axis = axis;
  return p;
}

ClassPattern ClassPattern::explicit_d(std::vector<std::vector<int>> sites) {
  ClassPattern p;
  p.kind = Kind::ExplicitD;
  p.sites = std::move(sites);
  return p;
}

ClassPattern ClassPattern::finite_complement_d(std::vector<std::vector<int>> holes) {
  ClassPattern p;
  p.kind = Kind::FiniteComplementD;
  p.sites = std::move(holes);
  return p;
}

ClassPattern ClassPattern::finite_sources(std::vector<std::vector<int>> sources) {
  ClassPattern p;
  p.kind = Kind::FiniteSources;
  p.sites = std::move(sources);
  return p;
}

namespace {
bool in_site_list(const std::vector<std::vector<int>>& sites, std::span<const int> x) {
  for (const auto& s : sites) {
    if (s.size() != x.size()) continue;
    bool eq = true;
    for (std::size_t k = 0; k < s.size(); ++k)
      if (s[k] != x[k]) {
        eq = false;
        break;
      }
    if (eq) return true;
  }
  return false;
}
}  // namespace

bool ClassPattern::dissipative_at(std::span<const int> x) const {
  switch (kind) {
    case Kind::EmptyD:
      return false;
    case Kind::AllD:
      return true;
    case Kind::AxisD: {
      for (int k = 0; k < static_cast<int>(x.size()); ++k)
        if (k != axis && x[k] != 0) return false;
      return true;
    }
    case Kind::SublatticeD: {
      for (std::size_t k = 0; k < x.size(); ++k) {
        const int m = k < period.size() ? period[k] : 1;
        if (fmod_int(x[k], m) != 0) return false;
      }
      return true;
    }
    case Kind::LinesD: {
      if (axis >= static_cast<int>(x.size())) return false;
      const long long v = std::llabs(static_cast<long long>(x[axis]));
      if (v == 0) return true;
      return std::binary_search(lines.begin(), lines.end(), v);
    }
    case Kind::ExplicitD:
      return in_site_list(sites, x);
    case Kind::FiniteComplementD:
      return !in_site_list(sites, x);
    case Kind::FiniteSources:
      return !in_site_list(sites, x);
  }
  return false;
}

bool ClassPattern::source_at(std::span<const int> x) const {
  return kind == Kind::FiniteSources && in_site_list(sites, x);
}

std::string ClassPattern::name() const {
  switch (kind) {
    case Kind::EmptyD: return "empty-D";
    case Kind::AllD: return "all-D";
    case Kind::AxisD: return "axis-D(" + std::to_string(axis) + ")";
    case Kind::SublatticeD: {
      std::string s = "sublattice-D(";
      for (std::size_t k = 0; k < period.size(); ++k) s += (k ? "," : "") + std::to_string(period[k]);
      return s + ")";
    }
    case Kind::LinesD: return "lines-D[" + std::to_string(lines.size()) + "]";
    case Kind::ExplicitD: return "explicit-D[" + std::to_string(sites.size()) + "]";
    case Kind::FiniteComplementD: return "finite-complement-D[" + std::to_string(sites.size()) + "]";
    case Kind::FiniteSources: return "finite-S[" + std::to_string(sites.size()) + "]";
  }
  return "?";
}

SiteClassMap build_site_classes(const BoxLattice& box, const ClassPattern& pattern) {
  SiteClassMap map;
  map.cls.resize(box.size());
  for (int i = 0; i < box.size(); ++i) {
    const auto x = box.coord(i);
    if (pattern.source_at(x)) {
      map.cls[i] = SiteClass::Source;
      map.source_sites.push_back(i);
    } else if (pattern.dissipative_at(x)) {
      map.cls[i] = SiteClass::Dissipative;
      map.dissipative_sites.push_back(i);
    } else if (box.is_boundary(i)) {
      map.cls[i] = SiteClass::Boundary;
    } else {
      map.cls[i] = SiteClass::Ordinary;
    }
  }
  return map;
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

namespace {
template <class G>
void edge_list_impl(std::ostream& os, const G& g, int n) {
  for (int u = 0; u < n; ++u)
    for (int v : g.neighbors(u))
      if (u < v) os << u << ' ' << v << '\n';
}
}  // namespace

void write_edge_list(std::ostream& os, const BoxLattice& box) { edge_list_impl(os, box, box.size()); }
void write_edge_list(std::ostream& os, const QaryTree& tree) { edge_list_impl(os, tree, tree.size()); }

}  // namespace sandlab::topology
