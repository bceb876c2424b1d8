#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace sandlab::topology {

inline constexpr int kMaxDim = 8;
inline constexpr std::int64_t kDefaultSiteBudget = 8'000'000;

/// Finite axis-aligned grid in Z^d with nearest-neighbour adjacency.
///
/// Sites are ordered lexicographically over coordinates (first axis major),
/// which fixes the index space used for matrix assembly. The canonical
/// volume is the centred cube [-n,n]^d; arbitrary rectangular extents are
/// supported for small exact-enumeration volumes.
class BoxLattice {
 public:
  /// [-radius, radius]^d.
  static BoxLattice cube(int d, int radius, std::int64_t site_budget = kDefaultSiteBudget);

  /// General rectangle with the given side lengths, coordinates starting at 0.
  static BoxLattice grid(const std::vector<int>& extents, std::int64_t site_budget = kDefaultSiteBudget);

  int dim() const { return d_; }
  int size() const { return n_sites_; }
  int radius() const { return radius_; }
  std::int64_t edge_count() const { return static_cast<std::int64_t>(adj_.size()) / 2; }

  std::span<const int> neighbors(int i) const {
    return {adj_.data() + offsets_[i], adj_.data() + offsets_[i + 1]};
  }
  int degree(int i) const { return offsets_[i + 1] - offsets_[i]; }
  bool is_boundary(int i) const { return degree(i) < 2 * d_; }

  /// Coordinates of site i (d entries).
  std::span<const int> coord(int i) const { return {coords_.data() + static_cast<std::size_t>(i) * d_, static_cast<std::size_t>(d_)}; }

  /// Index of the site with the given coordinates, or -1 if outside the box.
  int index_of(std::span<const int> x) const;

  /// Graph distance; equals the L1 distance on a full rectangle.
  int distance(int a, int b) const;

  std::span<const int> lo() const { return lo_; }
  std::span<const int> hi() const { return hi_; }

 private:
  BoxLattice() = default;
  static BoxLattice build(std::vector<int> lo, std::vector<int> hi, std::int64_t site_budget);

  int d_ = 0;
  int n_sites_ = 0;
  int radius_ = 0;
  std::vector<int> lo_, hi_;
  std::vector<int> coords_;   // flattened, stride d_
  std::vector<int> offsets_;  // CSR
  std::vector<int> adj_;
};

/// Rooted tree with branching number q, materialized up to a depth cap.
///
/// A complete instance is the q-ary tree truncated at `depth_cap` (the root
/// has q children; every other non-leaf vertex has q children). Pruned
/// instances (Galton-Watson realizations) reuse the same type. Vertices are
/// indexed in breadth-first order with the root at 0.
class QaryTree {
 public:
  static QaryTree complete(int q, int depth_cap, std::int64_t site_budget = kDefaultSiteBudget);

  int q() const { return q_; }
  int depth_cap() const { return depth_cap_; }
  int size() const { return static_cast<int>(parent_.size()); }
  bool complete_tree() const { return complete_; }

  int parent(int i) const { return parent_[i]; }
  int depth(int i) const { return depth_[i]; }
  std::span<const int> children(int i) const {
    return {child_.data() + child_offsets_[i], child_.data() + child_offsets_[i + 1]};
  }
  int degree(int i) const { return (parent_[i] >= 0 ? 1 : 0) + static_cast<int>(children(i).size()); }
  std::span<const int> neighbors(int i) const {
    return {adj_.data() + adj_offsets_[i], adj_.data() + adj_offsets_[i + 1]};
  }

  /// Graph distance through the lowest common ancestor.
  int distance(int a, int b) const;

  friend QaryTree prune_tree(const QaryTree&, const std::vector<std::uint8_t>&);

 private:
  QaryTree() = default;
  void finalize_adjacency();

  int q_ = 0;
  int depth_cap_ = 0;
  bool complete_ = true;
  std::vector<int> parent_, depth_;
  std::vector<int> child_offsets_, child_;
  std::vector<int> adj_offsets_, adj_;
};

/// Bernoulli trap marks on a tree; the root is forced trapless.
struct TrapField {
  std::vector<std::uint8_t> omega;  // 1 = trap, indexed like the tree
  std::vector<double> trap_prob;
  double kill_prob = 1.0;  // probability a visit to a trap kills the walker
  std::uint64_t seed = 0;
};

/// Independent per-site Bernoulli(p) field. p must lie in (0,1] for non-root sites.
TrapField sample_trap_field(const QaryTree& tree, double p, double kill_prob, std::uint64_t seed);
TrapField sample_trap_field(const QaryTree& tree, const std::vector<double>& p_site, double kill_prob,
                            std::uint64_t seed);

/// Deletes every trap together with its descendants and the edge to its
/// parent. Requires perfect traps (kill_prob == 1). With constant p the
/// surviving tree is a Galton-Watson realization with Bin(q, 1-p) offspring,
/// truncated at the original depth cap.
QaryTree prune_to_galton_watson(const QaryTree& tree, const TrapField& field);

enum class SiteClass : std::uint8_t { Ordinary, Dissipative, Source, Boundary };

/// Site-class rule evaluable at any point of Z^d (no box cutoff), so lattice
/// walks can consult it far outside any finite volume.
struct ClassPattern {
  enum class Kind {
    EmptyD,             // no dissipative sites
    AllD,               // every site dissipative
    AxisD,              // the coordinate axis `axis`
    SublatticeD,        // x dissipative iff period[i] divides x[i] for all i
    LinesD,             // sites whose `axis` coordinate lies in {0, +-r_k}
    ExplicitD,          // a listed finite set
    FiniteComplementD,  // everything except a listed finite set
    FiniteSources       // S = listed finite set, D = complement of S
  };

  Kind kind = Kind::EmptyD;
  int axis = 0;
  std::vector<int> period;
  std::vector<long long> lines;               // the r_k values, increasing
  std::vector<std::vector<int>> sites;        // explicit site lists

  bool dissipative_at(std::span<const int> x) const;
  bool source_at(std::span<const int> x) const;

  static ClassPattern empty_d();
  static ClassPattern all_d();
  static ClassPattern axis_d(int axis);
  static ClassPattern sublattice_d(std::vector<int> period);
  static ClassPattern lines_d(std::vector<long long> r, int axis = 1);
  static ClassPattern explicit_d(std::vector<std::vector<int>> sites);
  static ClassPattern finite_complement_d(std::vector<std::vector<int>> holes);
  static ClassPattern finite_sources(std::vector<std::vector<int>> sources);

  std::string name() const;
};

/// Per-site classes on a finite box, with derived site lists D_n and S_n.
/// Sources and dissipative sites keep their pattern class on the boundary;
/// remaining sites with missing neighbours are classed Boundary.
struct SiteClassMap {
  std::vector<SiteClass> cls;
  std::vector<int> dissipative_sites;
  std::vector<int> source_sites;

  bool any_dissipative() const { return !dissipative_sites.empty(); }
  bool any_source() const { return !source_sites.empty(); }
};

SiteClassMap build_site_classes(const BoxLattice& box, const ClassPattern& pattern);

/// Edge list as text, one "u v" pair per line, 0-based, u < v.
void write_edge_list(std::ostream& os, const BoxLattice& box);
void write_edge_list(std::ostream& os, const QaryTree& tree);

}  // namespace sandlab::topology
