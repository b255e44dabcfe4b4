#include "seqpool/evaluation.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "seqpool/errors.hpp"
#include "seqpool/kernels.hpp"

namespace seqpool::evaluation {

namespace {

void put_csv_value(std::ostream& os, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  os << buf;
}

}  // namespace

DescriptorPair extract_descriptors(const dataio::Dataset& ds,
                                   std::span<const std::size_t> test_ids, const model::Model& m) {
  if (test_ids.empty()) throw DomainError("descriptor extraction needs at least one identity");
  m.validate();
  const std::size_t d2 = m.d2();
  DescriptorPair out{Tensor({test_ids.size(), d2}), Tensor({test_ids.size(), d2})};
  for (std::size_t row = 0; row < test_ids.size(); ++row) {
    const std::size_t idx = test_ids[row];
    if (idx >= ds.size()) throw DomainError("test identity index out of range");
    const Tensor probe = model::track_descriptor(m, ds.ids[idx].cam_a);
    const Tensor gallery = model::track_descriptor(m, ds.ids[idx].cam_b);
    for (std::size_t j = 0; j < d2; ++j) {
      out.probe[row * d2 + j] = probe[j];
      out.gallery[row * d2 + j] = gallery[j];
    }
  }
  return out;
}

CmcCurve cmc(const Tensor& probes, const Tensor& gallery, std::span<const std::size_t> match) {
  require_rank(probes, 2, "probe matrix");
  require_rank(gallery, 2, "gallery matrix");
  if (probes.dim(1) != gallery.dim(1))
    throw DimensionError("probe and gallery descriptor dimensions differ");
  const std::size_t n = probes.dim(0);
  if (n == 0) throw DomainError("cmc needs at least one probe");
  if (gallery.dim(0) != n || match.size() != n)
    throw DimensionError("cmc needs one gallery item and one match per probe");
  std::vector<bool> seen(n, false);
  for (const std::size_t j : match) {
    if (j >= n || seen[j]) throw DomainError("ground-truth mapping is not a bijection");
    seen[j] = true;
  }

  const std::size_t d = probes.dim(1);
  const kernels::KernelTable& K = kernels::active();
  std::vector<std::size_t> rank_hits(n, 0);
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j)
      dist[j] = K.squared_distance(probes.data() + i * d, gallery.data() + j * d, d);
    // Rank under ascending distance, ties broken by ascending gallery index:
    // every strictly closer item outranks the match, and so does every tied
    // item with a smaller index.
    const double d_true = dist[match[i]];
    std::size_t rank = 1;
    for (std::size_t j = 0; j < n; ++j) {
      if (dist[j] < d_true) ++rank;
      if (dist[j] == d_true && j < match[i]) ++rank;
    }
    rank_hits[rank - 1]++;
  }

  CmcCurve curve;
  curve.values.resize(n);
  std::size_t cum = 0;
  for (std::size_t k = 0; k < n; ++k) {
    cum += rank_hits[k];
    curve.values[k] = static_cast<double>(cum) / static_cast<double>(n);
  }
  return curve;
}

CmcCurve cmc(const Tensor& probes, const Tensor& gallery) {
  std::vector<std::size_t> match(probes.dim(0));
  for (std::size_t i = 0; i < match.size(); ++i) match[i] = i;
  return cmc(probes, gallery, match);
}

double t_quantile_975(std::size_t dof) {
  if (dof == 0) throw DomainError("t quantile needs at least one degree of freedom");
  const boost::math::students_t dist(static_cast<double>(dof));
  return boost::math::quantile(dist, 0.975);
}

TrialAggregate aggregate_trials(std::span<const CmcCurve> curves) {
  if (curves.size() < 2)
    throw DomainError("confidence intervals need at least two trials");
  const std::size_t ranks = curves.front().values.size();
  for (const CmcCurve& c : curves)
    if (c.values.size() != ranks) throw DimensionError("trial curves have mixed lengths");

  TrialAggregate agg;
  agg.trials.assign(curves.begin(), curves.end());
  agg.mean.resize(ranks);
  agg.ci_half.resize(ranks);
  const double n = static_cast<double>(curves.size());
  const double t = t_quantile_975(curves.size() - 1);
  for (std::size_t k = 0; k < ranks; ++k) {
    double sum = 0.0;
    for (const CmcCurve& c : curves) sum += c.values[k];
    const double mean = sum / n;
    double ss = 0.0;
    for (const CmcCurve& c : curves) ss += (c.values[k] - mean) * (c.values[k] - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    agg.mean[k] = mean;
    agg.ci_half[k] = t * sd / std::sqrt(n);
  }
  return agg;
}

DiffDistribution compare_architectures(std::span<const CmcCurve> a, std::span<const CmcCurve> b) {
  if (a.size() != b.size())
    throw DomainError("paired comparison needs the same trial count on both sides");
  if (a.size() < 2) throw DomainError("paired comparison needs at least two trials");
  const std::size_t ranks = a.front().values.size();
  std::vector<CmcCurve> diffs(a.size());
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (a[t].values.size() != ranks || b[t].values.size() != ranks)
      throw DimensionError("trial curves have mixed lengths");
    diffs[t].values.resize(ranks);
    for (std::size_t k = 0; k < ranks; ++k)
      diffs[t].values[k] = a[t].values[k] - b[t].values[k];
  }
  const TrialAggregate agg = aggregate_trials(diffs);
  return DiffDistribution{agg.mean, agg.ci_half};
}

dataio::Dataset subset(const dataio::Dataset& ds, std::span<const std::size_t> ids) {
  dataio::Dataset out;
  out.kind = ds.kind;
  out.ids.reserve(ids.size());
  for (const std::size_t i : ids) {
    if (i >= ds.size()) throw DomainError("subset identity index out of range");
    out.ids.push_back(ds.ids[i]);
  }
  return out;
}

ConvergenceRun track_convergence(const dataio::Dataset& ds, const trainer::TrainConfig& cfg,
                                 std::span<const std::size_t> train_ids,
                                 std::span<const std::size_t> test_ids, std::size_t cadence,
                                 std::span<const std::size_t> ranks) {
  if (cadence == 0) throw ConfigError("evaluation cadence must be positive");
  if (ranks.empty()) throw ConfigError("convergence tracking needs at least one rank");
  const dataio::Dataset train_ds = subset(ds, train_ids);
  const dataio::Dataset test_ds = subset(ds, test_ids);
  cfg.validate(train_ds);

  // The budget must be known up front so the cadence precondition is checked
  // before any work happens; the sampler's epoch length is deterministic.
  const std::size_t per_epoch =
      trainer::PairSampler(train_ds, cfg, RngStream(cfg.seed)).iterations_per_epoch();
  const std::size_t budget =
      cfg.iteration_budget != 0 ? cfg.iteration_budget : cfg.resolved_epochs() * per_epoch;
  if (budget % cadence != 0)
    throw ConfigError("evaluation cadence must divide the iteration budget");
  for (const std::size_t r : ranks)
    if (r == 0 || r > test_ids.size())
      throw ConfigError("convergence rank exceeds the gallery size");

  ConvergenceRun run;
  run.history.ranks.assign(ranks.begin(), ranks.end());
  std::vector<std::size_t> test_local(test_ds.size());
  for (std::size_t i = 0; i < test_local.size(); ++i) test_local[i] = i;

  run.train = trainer::train(
      train_ds, cfg,
      [&](std::size_t iter, std::size_t total, const trainer::Snapshot& snap) {
        model::Model m;
        m.arch = cfg.arch;
        m.stage = snap.stage;
        if (snap.enc != nullptr) {
          m.has_encoder = true;
          m.enc = *snap.enc;
        }
        const DescriptorPair desc = extract_descriptors(test_ds, test_local, m);
        const CmcCurve curve = cmc(desc.probe, desc.gallery);
        ConvergencePoint point;
        point.progress = static_cast<double>(iter) / static_cast<double>(total);
        point.values.reserve(ranks.size());
        for (const std::size_t r : ranks) point.values.push_back(curve.values[r - 1]);
        run.history.points.push_back(std::move(point));
      },
      cadence);
  return run;
}

void write_cmc_csv(std::ostream& os, std::span<const double> mean,
                   const std::vector<double>* ci_half) {
  os << "rank,mean,ci_half\n";
  for (std::size_t k = 0; k < mean.size(); ++k) {
    os << (k + 1) << ',';
    put_csv_value(os, mean[k]);
    os << ',';
    if (ci_half != nullptr) put_csv_value(os, (*ci_half)[k]);
    os << '\n';
  }
}

void write_cmc_csv(std::ostream& os, const TrialAggregate& agg) {
  write_cmc_csv(os, agg.mean, &agg.ci_half);
}

void write_diff_csv(std::ostream& os, const DiffDistribution& diff) {
  os << "rank,mean_diff,ci_half\n";
  for (std::size_t k = 0; k < diff.mean_diff.size(); ++k) {
    os << (k + 1) << ',';
    put_csv_value(os, diff.mean_diff[k]);
    os << ',';
    put_csv_value(os, diff.ci_half[k]);
    os << '\n';
  }
}

void write_history_csv(std::ostream& os, const ConvergenceHistory& history) {
  os << "progress,rank,value\n";
  for (const ConvergencePoint& p : history.points)
    for (std::size_t i = 0; i < history.ranks.size(); ++i) {
      put_csv_value(os, p.progress);
      os << ',' << history.ranks[i] << ',';
      put_csv_value(os, p.values[i]);
      os << '\n';
    }
}

}  // namespace seqpool::evaluation
