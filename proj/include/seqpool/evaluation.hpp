#pragma once

// Retrieval evaluation: full-sequence descriptor extraction, CMC ranking,
// multi-trial aggregation with Student-t confidence intervals, paired
// architecture comparison, and convergence tracking during training.
//
// Protocol: camera A provides the probe descriptor and camera B the gallery
// descriptor of each test identity, ranked by ascending Euclidean distance
// with ties broken by ascending gallery index.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "seqpool/dataio.hpp"
#include "seqpool/model.hpp"
#include "seqpool/tensor.hpp"
#include "seqpool/trainer.hpp"

namespace seqpool::evaluation {

/// values[k-1] = fraction of probes whose true match ranks within the top k;
/// non-decreasing, ends at 1.
struct CmcCurve {
  std::vector<double> values;

  std::size_t gallery_size() const { return values.size(); }
};

struct DescriptorPair {
  Tensor probe;    // {n_test, d2}, row i = camera-A descriptor of test id i
  Tensor gallery;  // {n_test, d2}, row i = camera-B descriptor of test id i
};

/// Pools every test identity's full tracks through the model. Deterministic;
/// never touches dropout. Row order follows test_ids.
DescriptorPair extract_descriptors(const dataio::Dataset& ds,
                                   std::span<const std::size_t> test_ids, const model::Model& m);

/// CMC with an explicit probe->gallery ground-truth bijection.
CmcCurve cmc(const Tensor& probes, const Tensor& gallery, std::span<const std::size_t> match);

/// CMC with the identity mapping (row i matches row i).
CmcCurve cmc(const Tensor& probes, const Tensor& gallery);

/// Two-sided 97.5% Student-t quantile with the given degrees of freedom
/// (the multiplier of a 95% confidence interval).
double t_quantile_975(std::size_t dof);

struct TrialAggregate {
  std::vector<CmcCurve> trials;
  std::vector<double> mean;     // per rank
  std::vector<double> ci_half;  // per rank: t * sd / sqrt(n), stored unclipped
};

/// Requires >= 2 curves of equal length.
TrialAggregate aggregate_trials(std::span<const CmcCurve> curves);

struct DiffDistribution {
  std::vector<double> mean_diff;  // per rank, mean over paired trials of (a - b)
  std::vector<double> ci_half;
};

/// Paired per-trial comparison; trials must line up one-to-one.
DiffDistribution compare_architectures(std::span<const CmcCurve> a, std::span<const CmcCurve> b);

struct ConvergencePoint {
  double progress = 0.0;       // fraction of the iteration budget, in (0, 1]
  std::vector<double> values;  // CMC at the requested ranks
};

struct ConvergenceHistory {
  std::vector<std::size_t> ranks;  // 1-based ranks of interest
  std::vector<ConvergencePoint> points;
};

struct ConvergenceRun {
  ConvergenceHistory history;
  trainer::TrainResult train;
};

/// Trains on the identities in train_ids and evaluates the test split every
/// `cadence` iterations through the trainer's hook; the cadence must divide
/// the iteration budget. Evaluation reads parameter snapshots only — the
/// training trajectory is bit-identical to an unobserved run.
ConvergenceRun track_convergence(const dataio::Dataset& ds, const trainer::TrainConfig& cfg,
                                 std::span<const std::size_t> train_ids,
                                 std::span<const std::size_t> test_ids, std::size_t cadence,
                                 std::span<const std::size_t> ranks);

/// Sub-dataset holding only the chosen identities (copies, original order).
dataio::Dataset subset(const dataio::Dataset& ds, std::span<const std::size_t> ids);

// CSV emission, 6 significant digits. A null ci_half writes an empty column
// (single-trial runs have no interval).
void write_cmc_csv(std::ostream& os, std::span<const double> mean,
                   const std::vector<double>* ci_half);
void write_cmc_csv(std::ostream& os, const TrialAggregate& agg);
void write_diff_csv(std::ostream& os, const DiffDistribution& diff);
void write_history_csv(std::ostream& os, const ConvergenceHistory& history);

}  // namespace seqpool::evaluation
