#include "seqpool/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <utility>

#include "seqpool/errors.hpp"
#include "seqpool/kernels.hpp"
#include "seqpool/ops.hpp"

namespace seqpool::trainer {

namespace {

// Stream salts for the independent per-purpose generators.
constexpr std::uint64_t kInitSalt = 1;
constexpr std::uint64_t kSamplerSalt = 2;
constexpr std::uint64_t kDropoutSalt = 3;
constexpr std::uint64_t kAugmentSalt = 4;

constexpr double kSeqDefaultLr = 1e-3;
constexpr double kFrmDefaultLr = 16e-3;
constexpr std::size_t kSeqDefaultEpochs = 1000;
constexpr std::size_t kFrmDefaultEpochs = 16000;

void shuffle_indices(std::vector<std::size_t>& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng.uniform_index(i)]);
}

}  // namespace

std::string_view mode_name(Mode m) { return m == Mode::seq ? "seq" : "frm"; }

Mode mode_from_name(std::string_view name) {
  if (name == "seq") return Mode::seq;
  if (name == "frm") return Mode::frm;
  throw ConfigError("unknown training mode '" + std::string(name) + "' (expected seq or frm)");
}

double TrainConfig::resolved_lr() const {
  if (learning_rate >= 0.0) return learning_rate;
  return mode == Mode::seq ? kSeqDefaultLr : kFrmDefaultLr;
}

std::size_t TrainConfig::resolved_epochs() const {
  if (epochs != 0) return epochs;
  return mode == Mode::seq ? kSeqDefaultEpochs : kFrmDefaultEpochs;
}

void TrainConfig::validate(const dataio::Dataset& ds) const {
  if (mode == Mode::frm && arch == seqstage::Arch::rnn)
    throw ConfigError(
        "frame mode cannot train the recurrent architecture: its batches hold "
        "length-1 sequences, so the previous-step input of the recurrence is "
        "always the zero vector and the recurrent weights receive no gradient; "
        "use the feed-forward architecture");
  if (batch == 0) throw ConfigError("batch size must be positive");
  if (sublen == 0) throw ConfigError("subsequence length must be positive");
  if (feature_dim == 0) throw ConfigError("feature dimension must be positive");
  if (!(margin > 0.0)) throw ConfigError("contrastive margin must be positive");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0))
    throw ConfigError("dropout probability must lie in [0, 1)");
  if (!(id_loss_weight >= 0.0)) throw ConfigError("identification loss weight must be >= 0");
  if (!(mirror_prob >= 0.0 && mirror_prob <= 1.0))
    throw ConfigError("mirror probability must lie in [0, 1]");
  if (ds.size() == 0) throw ConfigError("cannot train on an empty dataset");
  if (mode == Mode::seq && ds.size() % batch != 0)
    throw ConfigError("seq mode needs the identity count to be a multiple of the batch size");
  if (mode == Mode::frm && (batch * sublen) % 2 != 0)
    throw ConfigError("frm mode needs an even batch*length so pairs split half and half");

  if (ds.kind == dataio::DataKind::images) {
    encoder_config.validate();
    const std::size_t h = ds.frame_height();
    const std::size_t w = ds.frame_width();
    const std::size_t in_h = augment_frames && crop_height != 0 ? crop_height : h;
    const std::size_t in_w = augment_frames && crop_width != 0 ? crop_width : w;
    if (in_h > h || in_w > w) throw ConfigError("crop size exceeds the frame size");
    if (encoder_config.height != in_h || encoder_config.width != in_w)
      throw ConfigError("encoder input size does not match the (cropped) frame size");
  }
}

std::size_t images_in(const std::vector<PairSample>& batch) {
  std::size_t n = 0;
  for (const PairSample& p : batch) n += p.a.len + p.b.len;
  return n;
}

PairSampler::PairSampler(const dataio::Dataset& ds, const TrainConfig& cfg, RngStream rng)
    : ds_(&ds), cfg_(cfg), rng_(rng) {
  const std::size_t n = ds.size();
  if (n == 0) throw ConfigError("cannot sample pairs from an empty dataset");
  if (cfg.mode == Mode::seq) {
    iterations_per_epoch_ = 2 * n / cfg.batch;
  } else {
    const std::size_t bl = cfg.batch * cfg.sublen;
    iterations_per_epoch_ = (2 * n + bl - 1) / bl;
  }
  images_per_iteration_ = 2 * cfg.batch * cfg.sublen;
  ledger_.iterations_per_epoch = iterations_per_epoch_;
  ledger_.images_per_iteration = images_per_iteration_;
  begin_epoch();
}

void PairSampler::begin_epoch() {
  queue_.clear();
  ledger_.positive_ids_this_epoch.clear();
  iter_in_epoch_ = 0;
  queue_.resize(ds_->size());
  for (std::size_t i = 0; i < queue_.size(); ++i) queue_[i] = i;
  shuffle_indices(queue_, rng_);
}

std::size_t PairSampler::pop_positive() {
  if (queue_.empty()) {
    // frm epochs can need more positive slots than identities; pad from a
    // fresh pass over the shuffled identity list.
    queue_.resize(ds_->size());
    for (std::size_t i = 0; i < queue_.size(); ++i) queue_[i] = i;
    shuffle_indices(queue_, rng_);
  }
  std::size_t id = queue_.back();
  queue_.pop_back();
  ledger_.positive_ids_this_epoch.push_back(id);
  return id;
}

std::pair<std::size_t, std::size_t> PairSampler::draw_negative_ids() {
  const std::size_t n = ds_->size();
  std::size_t first = rng_.uniform_index(n);
  std::size_t r = rng_.uniform_index(n - 1);
  std::size_t second = r + (r >= first ? 1 : 0);
  return {first, second};
}

std::size_t PairSampler::draw_start(std::size_t id_index, int cam, std::size_t& len_out) {
  const dataio::Track& track =
      cam == 0 ? ds_->ids[id_index].cam_a : ds_->ids[id_index].cam_b;
  const std::size_t wanted = cfg_.mode == Mode::seq ? cfg_.sublen : 1;
  if (track.size() <= wanted) {
    len_out = track.size();
    return 0;
  }
  len_out = wanted;
  return rng_.uniform_index(track.size() - wanted + 1);
}

std::vector<PairSample> PairSampler::next() {
  if (iter_in_epoch_ == iterations_per_epoch_) begin_epoch();

  const bool can_negate = ds_->size() >= 2;
  std::vector<PairSample> batch;
  auto make_pair = [&](std::size_t id_a, std::size_t id_b, bool positive) {
    PairSample p;
    p.positive = positive;
    p.a.id_index = id_a;
    p.a.cam = 0;
    p.a.start = draw_start(id_a, 0, p.a.len);
    p.b.id_index = id_b;
    p.b.cam = 1;
    p.b.start = draw_start(id_b, 1, p.b.len);
    return p;
  };

  if (cfg_.mode == Mode::seq) {
    const bool positive = !can_negate || iter_in_epoch_ % 2 == 0;
    batch.reserve(cfg_.batch);
    for (std::size_t i = 0; i < cfg_.batch; ++i) {
      if (positive) {
        std::size_t id = pop_positive();
        batch.push_back(make_pair(id, id, true));
      } else {
        auto [a, b] = draw_negative_ids();
        batch.push_back(make_pair(a, b, false));
      }
    }
  } else {
    const std::size_t pairs = cfg_.batch * cfg_.sublen;
    const std::size_t positives = can_negate ? pairs / 2 : pairs;
    batch.reserve(pairs);
    for (std::size_t i = 0; i < positives; ++i) {
      std::size_t id = pop_positive();
      batch.push_back(make_pair(id, id, true));
    }
    for (std::size_t i = positives; i < pairs; ++i) {
      auto [a, b] = draw_negative_ids();
      batch.push_back(make_pair(a, b, false));
    }
  }
  ++iter_in_epoch_;
  return batch;
}

Node contrastive_loss(Graph& g, Node v_a, Node v_b, bool positive, double margin) {
  Node d = ops::euclidean_distance(g, v_a, v_b);
  if (positive) return ops::square(g, d);
  return ops::hinge_squared(g, d, margin);
}

Node identification_loss(Graph& g, Node descriptor, std::size_t label, Node cls_w, Node cls_b) {
  if (label >= cls_w.shape()[0])
    throw DomainError("identification label is not a training identity");
  Node logits = ops::affine(g, cls_w, descriptor, cls_b);
  return ops::softmax_xent(g, logits, label);
}

double scale_learning_rate(double base, double k, LrRule rule) {
  if (!(base > 0.0)) throw DomainError("base learning rate must be positive");
  if (!(k >= 1.0)) throw DomainError("batch growth factor must be >= 1");
  return rule == LrRule::sqrt_rule ? base * std::sqrt(k) : base * k;
}

namespace {

/// Graph nodes for one pair member ending in its pooled descriptor. Image
/// members take one augmentation draw reused across all their frames.
Node member_descriptor(Graph& g, const dataio::Dataset& ds, const TrainConfig& cfg,
                       const seqstage::SeqStageVars& stage, const encoder::EncoderVars& enc,
                       const SubseqRef& ref, RngStream& dropout_rng, RngStream& augment_rng) {
  const dataio::Track& track =
      ref.cam == 0 ? ds.ids[ref.id_index].cam_a : ds.ids[ref.id_index].cam_b;
  const bool images = ds.kind == dataio::DataKind::images;

  encoder::AugmentDraw draw;
  std::size_t crop_h = 0;
  std::size_t crop_w = 0;
  if (images && cfg.augment_frames) {
    crop_h = cfg.crop_height != 0 ? cfg.crop_height : ds.frame_height();
    crop_w = cfg.crop_width != 0 ? cfg.crop_width : ds.frame_width();
    draw = encoder::sample_augment(augment_rng, ds.frame_height(), ds.frame_width(), crop_h,
                                   crop_w, cfg.mirror_prob);
  }

  std::vector<Node> frames;
  frames.reserve(ref.len);
  for (std::size_t t = 0; t < ref.len; ++t) {
    const Tensor& raw = track.items[ref.start + t];
    if (images) {
      Tensor planes =
          cfg.augment_frames ? encoder::apply_augment(raw, draw, crop_h, crop_w) : raw;
      Node in = g.constant(std::move(planes));
      frames.push_back(encoder::encode_frame(g, cfg.encoder_config, enc, in, dropout_rng, true));
    } else {
      frames.push_back(g.constant(raw));
    }
  }

  seqstage::DropoutSpec drop{cfg.dropout_p, true};
  std::vector<Node> outs = seqstage::stage_forward(g, cfg.arch, stage, frames, drop, dropout_rng);
  return seqstage::pool_mean(g, outs);
}

void append_log(std::string& log, const char* fmt, ...)
    __attribute__((format(printf, 2, 3)));

void append_log(std::string& log, const char* fmt, ...) {
  char buf[512];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, args);
  va_end(args);
  log += buf;
  log += '\n';
}

}  // namespace

TrainResult train(const dataio::Dataset& ds, const TrainConfig& cfg, const EvalHook& hook,
                  std::size_t hook_every) {
  ds.validate();
  cfg.validate(ds);

  const bool images = ds.kind == dataio::DataKind::images;
  const std::size_t n_ids = ds.size();
  const std::size_t d1 = images ? cfg.encoder_config.feature_dim : ds.feature_dim();
  const std::size_t d2 = cfg.feature_dim;
  const double lr = cfg.resolved_lr();

  RngStream root(cfg.seed);
  RngStream init_rng = root.derive(kInitSalt);
  RngStream sampler_rng = root.derive(kSamplerSalt);
  RngStream dropout_rng = root.derive(kDropoutSalt);
  RngStream augment_rng = root.derive(kAugmentSalt);

  seqstage::SeqStageParams stage0 = seqstage::SeqStageParams::init(d1, d2, init_rng);
  encoder::EncoderParams enc0;
  if (images) enc0 = encoder::EncoderParams::init(cfg.encoder_config, init_rng);

  Graph g;
  seqstage::SeqStageVars stage = seqstage::SeqStageVars::bind(g, stage0);
  encoder::EncoderVars enc;
  if (images) enc = encoder::EncoderVars::bind(g, enc0);
  // Zero-initialized head makes the first identification loss exactly ln(N).
  Node cls_w = g.parameter(Tensor::zeros({n_ids, d2}));
  Node cls_b = g.parameter(Tensor::zeros({n_ids}));

  std::vector<Node> trainables{stage.w_i, stage.b_i, stage.w_s, stage.b_s, cls_w, cls_b};
  if (images) {
    for (Node k : enc.kernels) trainables.push_back(k);
    for (Node b : enc.kernel_biases) trainables.push_back(b);
    trainables.push_back(enc.w_out);
    trainables.push_back(enc.b_out);
  }

  PairSampler sampler(ds, cfg, sampler_rng);
  const std::size_t total_iters = cfg.iteration_budget != 0
                                      ? cfg.iteration_budget
                                      : cfg.resolved_epochs() * sampler.iterations_per_epoch();

  TrainResult result;
  result.stage_init = stage0;
  result.ledger.iterations_per_epoch = sampler.iterations_per_epoch();
  result.ledger.images_per_iteration = sampler.images_per_iteration();
  result.loss_history.reserve(total_iters);

  append_log(result.log, "# training log");
  append_log(result.log,
             "# mode=%s arch=%s batch=%zu sublen=%zu d1=%zu d2=%zu margin=%g lr=%g "
             "dropout=%g id_loss_weight=%g seed=%llu iterations=%zu iterations_per_epoch=%zu "
             "images_per_iteration=%zu",
             std::string(mode_name(cfg.mode)).c_str(),
             std::string(seqstage::arch_name(cfg.arch)).c_str(), cfg.batch, cfg.sublen, d1, d2,
             cfg.margin, lr, cfg.dropout_p, cfg.id_loss_weight,
             static_cast<unsigned long long>(cfg.seed), total_iters,
             sampler.iterations_per_epoch(), sampler.images_per_iteration());
  append_log(result.log,
             "# contrastive: positive pairs d^2, negative pairs max(0, margin - d)^2");

  const std::size_t mark = g.checkpoint();
  const kernels::KernelTable& K = kernels::active();

  for (std::size_t iter = 1; iter <= total_iters; ++iter) {
    std::vector<PairSample> batch = sampler.next();

    double contrast_sum = 0.0;
    double ident_sum = 0.0;
    std::vector<Node> pair_losses;
    pair_losses.reserve(batch.size());
    for (const PairSample& pr : batch) {
      Node va = member_descriptor(g, ds, cfg, stage, enc, pr.a, dropout_rng, augment_rng);
      Node vb = member_descriptor(g, ds, cfg, stage, enc, pr.b, dropout_rng, augment_rng);
      Node con = contrastive_loss(g, va, vb, pr.positive, cfg.margin);
      contrast_sum += con.value().data()[0];
      Node total = con;
      if (cfg.id_loss_weight > 0.0) {
        Node ia = identification_loss(g, va, pr.a.id_index, cls_w, cls_b);
        Node ib = identification_loss(g, vb, pr.b.id_index, cls_w, cls_b);
        ident_sum += cfg.id_loss_weight * (ia.value().data()[0] + ib.value().data()[0]);
        Node id_both = ops::add(g, ia, ib);
        total = ops::add(g, con, ops::scale(g, id_both, cfg.id_loss_weight));
      }
      pair_losses.push_back(total);
    }
    Node loss = ops::mean_over_time(g, pair_losses);

    const double loss_value = loss.value().data()[0];
    if (!std::isfinite(loss_value))
      throw DivergenceError("loss diverged at iteration " + std::to_string(iter));

    g.backward(loss);
    for (Node p : trainables)
      K.axpy(-lr, p.grad().data(), p.size(), p.value().data());
    g.zero_grads();
    g.truncate(mark);

    result.loss_history.push_back(loss_value);
    // Deliberately no timing in the log: the log must be byte-identical
    // across reruns; wall-clock lives in the run manifest.
    const std::size_t epoch = (iter - 1) / sampler.iterations_per_epoch() + 1;
    append_log(result.log,
               "iter=%zu epoch=%zu mode=%s contrastive=%.6g identification=%.6g total=%.6g",
               iter, epoch, std::string(mode_name(cfg.mode)).c_str(),
               contrast_sum / static_cast<double>(batch.size()),
               ident_sum / static_cast<double>(batch.size()), loss_value);

    if (hook && hook_every != 0 && (iter % hook_every == 0 || iter == total_iters)) {
      Snapshot snap;
      snap.stage = stage.read_back();
      encoder::EncoderParams enc_now;
      if (images) {
        enc_now = enc.read_back(cfg.encoder_config);
        snap.enc = &enc_now;
      }
      hook(iter, total_iters, snap);
    }
  }

  result.stage = stage.read_back();
  result.has_encoder = images;
  if (images) result.enc = enc.read_back(cfg.encoder_config);
  result.classifier_w = cls_w.value();
  result.classifier_b = cls_b.value();
  result.ledger.positive_ids_this_epoch = sampler.ledger().positive_ids_this_epoch;
  result.iterations_run = total_iters;
  return result;
}

}  // namespace seqpool::trainer
