#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "sandlab/rng.hpp"
#include "sandlab/stats.hpp"
#include "sandlab/topology.hpp"

namespace sandlab::sandpile {

enum class PileMode { IntegerSandpile, ContinuousAvalanche };

/// Bulk parameters of the toppling matrix: gamma is the per-edge transfer,
/// alpha the extra loss at dissipative sites, beta the gain at source sites.
struct LatticeParams {
  double gamma = 1.0;
  double alpha = 1.0;
  double beta = 0.0;
};

/// Symmetric toppling matrix over a fixed site ordering. The diagonal holds
/// the per-site stability threshold; every edge carries -edge_weight. The
/// graph metric is kept alongside so avalanche records can report distances.
class TopplingMatrix {
 public:
  PileMode mode = PileMode::IntegerSandpile;
  double edge_weight = 1.0;
  std::vector<double> diag;
  std::vector<int> offsets;
  std::vector<int> adj;
  std::function<int(int, int)> metric;

  int size() const { return static_cast<int>(diag.size()); }
  std::span<const int> neighbors(int x) const {
    return {adj.data() + offsets[x], adj.data() + offsets[x + 1]};
  }
  int degree(int x) const { return offsets[x + 1] - offsets[x]; }
  std::int64_t diag_int(int x) const { return static_cast<std::int64_t>(diag[x]); }

  /// Row applied to the all-ones vector: diag(x) - edge_weight * degree(x).
  double row_excess(int x) const { return diag[x] - edge_weight * degree(x); }
};

/// Lattice assembly. Integer mode demands gamma == 1, alpha == 1, beta == 0
/// (sources require the continuous-height model). Thresholds: 2d*gamma on
/// ordinary and boundary sites, +alpha on dissipative sites, -beta on source
/// sites; beta must stay below 2d*gamma or the stable band is empty.
TopplingMatrix assemble_toppling_matrix(const topology::BoxLattice& box,
                                        const topology::SiteClassMap& classes,
                                        const LatticeParams& params,
                                        PileMode mode = PileMode::IntegerSandpile);

/// Tree assembly: threshold q+1 everywhere, unit edges, integer heights.
/// Vertices of non-maximal degree dissipate implicitly; no alpha applies.
TopplingMatrix assemble_toppling_matrix(const topology::QaryTree& tree);

/// Per-site toppling counts for one stabilization; source_site records the
/// addition site when the stabilization came from an addition, else -1.
struct Odometer {
  std::vector<std::int64_t> counts;
  int source_site = -1;
};

enum class StabilizeStatus { Stable, BudgetExceeded };

template <class T>
struct StabilizeResult {
  StabilizeStatus status = StabilizeStatus::Stable;
  std::vector<T> heights;
  Odometer odometer;

  bool stable() const { return status == StabilizeStatus::Stable; }
};

/// Runs legal topplings until stable or some site exceeds `budget` topplings
/// (BudgetExceeded is a meaningful outcome for source models, not a fault).
/// FIFO scheduling; the Abelian property makes the result order-independent.
StabilizeResult<std::int64_t> stabilize(const TopplingMatrix& m, std::vector<std::int64_t> h,
                                        std::int64_t budget);
StabilizeResult<double> stabilize(const TopplingMatrix& m, std::vector<double> h, std::int64_t budget);

/// One legal toppling at a time at a uniformly random unstable site.
/// Validation path for the order-independence property.
StabilizeResult<std::int64_t> stabilize_randomized(const TopplingMatrix& m, std::vector<std::int64_t> h,
                                                   std::int64_t budget, Rng& rng);

struct AvalancheRecord {
  int site = -1;          // addition site
  std::int64_t size = 0;  // |{y : N(y) > 0}|
  int diameter = 0;       // max graph distance from the addition site over toppled y
};

AvalancheRecord avalanche_from(const TopplingMatrix& m, const Odometer& od);

template <class T>
struct AddResult {
  StabilizeStatus status = StabilizeStatus::Stable;
  std::vector<T> heights;
  Odometer odometer;
  AvalancheRecord record;

  bool stable() const { return status == StabilizeStatus::Stable; }
};

AddResult<std::int64_t> add_and_stabilize(const TopplingMatrix& m, const std::vector<std::int64_t>& h,
                                          int x, std::int64_t budget);
AddResult<double> add_and_stabilize(const TopplingMatrix& m, const std::vector<double>& h, int x,
                                    std::int64_t budget);

template <class T>
bool is_stable(const TopplingMatrix& m, const std::vector<T>& h);

/// Exact in integer mode; 1e-9 relative tolerance in continuous mode.
bool check_conservation(const TopplingMatrix& m, const std::vector<std::int64_t>& before,
                        const std::vector<std::int64_t>& after, const Odometer& od);
bool check_conservation(const TopplingMatrix& m, const std::vector<double>& before,
                        const std::vector<double>& after, const Odometer& od);

/// Burning test: repeatedly burn any unburnt site whose height weakly exceeds
/// the weight of edges to still-unburnt neighbours; recurrent iff all burn.
struct BurnResult {
  bool recurrent = false;
  std::vector<int> burn_order;
};

BurnResult burning_test(const TopplingMatrix& m, const std::vector<std::int64_t>& h);
BurnResult burning_test(const TopplingMatrix& m, const std::vector<double>& h);

/// Exhaustive recurrent set of an integer-mode volume; requires the stable
/// configuration count to stay under `cap`.
std::vector<std::vector<std::int64_t>> enumerate_recurrent(const TopplingMatrix& m,
                                                           std::int64_t cap = 10'000'000);

/// Markov chain on stable configurations: add one grain at a uniformly random
/// site and stabilize. Started from the maximal stable configuration, which
/// is recurrent, so the chain lives on the recurrent set from step one.
/// Avalanche statistics at a fixed probe site are measured on copies so they
/// sample the stationary measure without biasing the drive.
class StationarySampler {
 public:
  StationarySampler(const TopplingMatrix& m, std::uint64_t seed, std::int64_t budget = 1'000'000);

  AvalancheRecord step();
  void run(int steps);

  /// Addition at x applied to a copy of the current state.
  AddResult<std::int64_t> probe(int x) const;

  const std::vector<std::int64_t>& heights() const { return heights_; }
  std::uint64_t step_count() const { return steps_; }
  std::uint64_t seed() const { return seed_; }

 private:
  const TopplingMatrix* m_;
  std::vector<std::int64_t> heights_;
  Rng rng_;
  std::uint64_t seed_;
  std::int64_t budget_;
  std::uint64_t steps_ = 0;
};

struct TailCurve {
  std::vector<double> grid;
  std::vector<double> prob;
  std::vector<double> se;
  stats::LinFit fit;  // on log prob over the strictly positive part
};

struct AvalancheStats {
  int probe_site = -1;
  std::int64_t n_probes = 0;
  double mean_size = 0.0;
  double mean_size_se = 0.0;
  TailCurve size_tail;
  TailCurve diam_tail;
};

/// Empirical tail statistics of probe avalanches at `site` under the
/// stationary chain; `thinning` chain steps separate consecutive probes.
AvalancheStats avalanche_statistics(StationarySampler& chain, int site, std::int64_t n_probes,
                                    int thinning, std::span<const int> size_grid,
                                    std::span<const int> diam_grid);

/// Burned-in, thinned stream of stable configurations with the avalanche
/// record of the chain addition that produced each of them.
struct StationarySample {
  std::vector<std::int64_t> heights;
  AvalancheRecord record;
  std::uint64_t step = 0;
};

std::vector<StationarySample> sample_stationary(const TopplingMatrix& m, int burn_in,
                                                std::int64_t n_samples, int thinning,
                                                std::uint64_t seed,
                                                std::int64_t budget = 1'000'000);

/// JSON-lines record {"seed":...,"step":...,"heights":[...]}.
void write_heights_jsonl(std::ostream& os, std::uint64_t seed, std::uint64_t step,
                         const std::vector<std::int64_t>& heights);

inline const char* avalanche_csv_header() { return "seed,step,site,size,diameter\n"; }
void write_avalanche_csv_row(std::ostream& os, std::uint64_t seed, std::uint64_t step,
                             const AvalancheRecord& rec);

}  // namespace sandlab::sandpile
