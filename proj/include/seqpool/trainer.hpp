#pragma once

// Siamese training of encoder + sequence stage in one of two modes:
//
//   seq: every iteration holds B pairs of L-frame subsequences, alternating
//        positive / negative across iterations; an epoch is 2N/B iterations.
//   frm: every iteration holds B*L single-frame pairs, half positive and
//        half negative; an epoch is ceil(2N/(B*L)) iterations.
//
// Both modes touch 2*B*L images per iteration. The loss per pair is the
// contrastive term (positive: d^2, negative: max(0, margin-d)^2) plus an
// identification softmax cross-entropy for each member; a batch's loss is
// the mean over its pairs. Optimization is plain SGD.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "seqpool/dataio.hpp"
#include "seqpool/encoder.hpp"
#include "seqpool/graph.hpp"
#include "seqpool/rng.hpp"
#include "seqpool/seqstage.hpp"

namespace seqpool::trainer {

enum class Mode { seq, frm };

std::string_view mode_name(Mode m);
Mode mode_from_name(std::string_view name);  // throws ConfigError

struct TrainConfig {
  Mode mode = Mode::seq;
  seqstage::Arch arch = seqstage::Arch::rnn;
  std::size_t batch = 1;        // B
  std::size_t sublen = 16;      // L
  std::size_t feature_dim = 128;  // d2, the stage output width
  double margin = 2.0;
  double learning_rate = -1.0;  // < 0 picks the mode default (seq 1e-3, frm 16e-3)
  std::size_t epochs = 0;       // 0 picks the mode default (seq 1000, frm 16000)
  std::size_t iteration_budget = 0;  // when nonzero, overrides epochs with an exact count
  double dropout_p = 0.6;
  double id_loss_weight = 1.0;
  std::uint64_t seed = 42;

  // Image-mode pipeline. Augmentation crops to (crop_height, crop_width)
  // (0 means the full frame) and mirrors with mirror_prob; in seq mode one
  // draw covers all frames of a subsequence member.
  encoder::EncoderConfig encoder_config;
  bool augment_frames = false;
  std::size_t crop_height = 0;
  std::size_t crop_width = 0;
  double mirror_prob = 0.5;

  double resolved_lr() const;
  std::size_t resolved_epochs() const;

  /// Throws ConfigError on invalid combinations, including frm with the
  /// recurrent architecture.
  void validate(const dataio::Dataset& ds) const;
};

/// One pair member: a camera subsequence [start, start+len) of a dataset
/// identity (len == 1 in frm mode).
struct SubseqRef {
  std::size_t id_index = 0;  // index into Dataset::ids
  int cam = 0;               // 0 = camera A, 1 = camera B
  std::size_t start = 0;
  std::size_t len = 0;
};

struct PairSample {
  SubseqRef a;  // always camera A
  SubseqRef b;  // always camera B
  bool positive = false;
};

/// Frames touched by one batch (2*B*L when every track is long enough).
std::size_t images_in(const std::vector<PairSample>& batch);

struct EpochLedger {
  std::size_t iterations_per_epoch = 0;
  std::size_t images_per_iteration = 0;  // nominal 2*B*L
  std::vector<std::size_t> positive_ids_this_epoch;  // id_index trace, in draw order
};

/// Deterministic pair source. Positive identities are drawn without
/// replacement per epoch (frm refills the queue within an epoch when its
/// final batches need padding); negatives pick two distinct identities
/// uniformly. Datasets with a single identity fall back to positive-only
/// sampling since no negative pair exists.
class PairSampler {
 public:
  PairSampler(const dataio::Dataset& ds, const TrainConfig& cfg, RngStream rng);

  std::size_t iterations_per_epoch() const { return iterations_per_epoch_; }
  std::size_t images_per_iteration() const { return images_per_iteration_; }

  /// The next iteration's batch; rolls the epoch over automatically.
  std::vector<PairSample> next();

  /// Positive-identity trace of the running epoch (cleared at rollover).
  const EpochLedger& ledger() const { return ledger_; }

 private:
  void begin_epoch();
  std::size_t draw_start(std::size_t id_index, int cam, std::size_t& len_out);
  std::size_t pop_positive();
  std::pair<std::size_t, std::size_t> draw_negative_ids();

  const dataio::Dataset* ds_;
  TrainConfig cfg_;
  RngStream rng_;
  std::vector<std::size_t> queue_;  // shuffled positive identities, back = next
  std::size_t iterations_per_epoch_ = 0;
  std::size_t images_per_iteration_ = 0;
  std::size_t iter_in_epoch_ = 0;
  EpochLedger ledger_;
};

/// positive: d^2; negative: max(0, margin - d)^2, d = ||v_a - v_b||.
Node contrastive_loss(Graph& g, Node v_a, Node v_b, bool positive, double margin);

/// Softmax cross-entropy over the training identities through a dedicated
/// affine head (training-only).
Node identification_loss(Graph& g, Node descriptor, std::size_t label, Node cls_w, Node cls_b);

enum class LrRule { sqrt_rule, linear };

/// base * sqrt(k) or base * k for a batch grown by factor k >= 1.
double scale_learning_rate(double base, double k, LrRule rule);

/// Read-only view of the trainable state handed to evaluation hooks.
struct Snapshot {
  seqstage::SeqStageParams stage;
  const encoder::EncoderParams* enc = nullptr;  // null for feature datasets
};

using EvalHook = std::function<void(std::size_t iteration, std::size_t total_iterations,
                                    const Snapshot& snapshot)>;

struct TrainResult {
  seqstage::SeqStageParams stage;
  seqstage::SeqStageParams stage_init;  // parameters as drawn, before any update
  encoder::EncoderParams enc;           // meaningful only when has_encoder
  bool has_encoder = false;
  Tensor classifier_w;
  Tensor classifier_b;
  EpochLedger ledger;
  std::vector<double> loss_history;  // total loss per iteration
  std::size_t iterations_run = 0;
  std::string log;  // full text log; the CLI writes it to disk
};

/// Runs the configured training. Deterministic given cfg.seed. Aborts with
/// DivergenceError when the loss stops being finite. When hook_every is
/// nonzero the hook fires every hook_every iterations and once more at the
/// end; hooks see read-back parameter copies and must not mutate state.
TrainResult train(const dataio::Dataset& ds, const TrainConfig& cfg, const EvalHook& hook = {},
                  std::size_t hook_every = 0);

}  // namespace seqpool::trainer
