#include "seqpool/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "seqpool/errors.hpp"
#include "seqpool/ops.hpp"
#include "testutil.hpp"

using namespace seqpool;
using namespace seqpool::trainer;

namespace {

dataio::Dataset feature_dataset(std::size_t ids, std::size_t frames, std::size_t dim,
                                std::uint64_t seed = 3) {
  dataio::SyntheticSpec spec;
  spec.ids = ids;
  spec.frames_min = frames;
  spec.frames_max = frames;
  spec.feature_dim = dim;
  spec.noise = 0.2;
  spec.camera_shift = 0.3;
  spec.seed = seed;
  return dataio::generate_synthetic(spec);
}

TrainConfig tiny_seq_config() {
  TrainConfig cfg;
  cfg.mode = Mode::seq;
  cfg.arch = seqstage::Arch::rnn;
  cfg.sublen = 4;
  cfg.feature_dim = 3;
  cfg.epochs = 1;
  cfg.dropout_p = 0.0;
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST_CASE("mode names round-trip and defaults follow the mode") {
  CHECK(mode_from_name(mode_name(Mode::seq)) == Mode::seq);
  CHECK(mode_from_name(mode_name(Mode::frm)) == Mode::frm);
  CHECK_THROWS_AS(mode_from_name("batch"), ConfigError);

  TrainConfig cfg;
  CHECK(cfg.resolved_lr() == 1e-3);
  CHECK(cfg.resolved_epochs() == 1000);
  cfg.mode = Mode::frm;
  CHECK(cfg.resolved_lr() == 16e-3);
  CHECK(cfg.resolved_epochs() == 16000);
  cfg.learning_rate = 0.5;
  cfg.epochs = 7;
  CHECK(cfg.resolved_lr() == 0.5);
  CHECK(cfg.resolved_epochs() == 7);
}

TEST_CASE("config validation guards invalid combinations") {
  const dataio::Dataset ds = feature_dataset(4, 6, 3);

  TrainConfig cfg = tiny_seq_config();
  cfg.validate(ds);

  SUBCASE("frame mode with the recurrent architecture is rejected with the rationale") {
    cfg.mode = Mode::frm;
    cfg.arch = seqstage::Arch::rnn;
    try {
      cfg.validate(ds);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("length-1") != std::string::npos);
      CHECK(msg.find("no gradient") != std::string::npos);
    }
  }
  SUBCASE("margin must be positive") {
    cfg.margin = 0.0;
    CHECK_THROWS_AS(cfg.validate(ds), ConfigError);
  }
  SUBCASE("dropout must stay below 1") {
    cfg.dropout_p = 1.0;
    CHECK_THROWS_AS(cfg.validate(ds), ConfigError);
  }
  SUBCASE("seq needs N divisible by B") {
    cfg.batch = 3;  // N = 4
    CHECK_THROWS_AS(cfg.validate(ds), ConfigError);
  }
  SUBCASE("frm needs an even number of pairs") {
    cfg.mode = Mode::frm;
    cfg.arch = seqstage::Arch::fnn;
    cfg.batch = 1;
    cfg.sublen = 3;
    CHECK_THROWS_AS(cfg.validate(ds), ConfigError);
  }
}

TEST_CASE("learning-rate scaling follows the two growth rules") {
  CHECK(scale_learning_rate(1e-3, 16.0, LrRule::linear) == 16e-3);
  CHECK(scale_learning_rate(1e-3, 16.0, LrRule::sqrt_rule) == 4e-3);
  CHECK(scale_learning_rate(1e-3, 1.0, LrRule::linear) == 1e-3);
  CHECK(scale_learning_rate(1e-3, 1.0, LrRule::sqrt_rule) == 1e-3);
  CHECK_THROWS_AS(scale_learning_rate(1e-3, 0.5, LrRule::linear), DomainError);
  CHECK_THROWS_AS(scale_learning_rate(0.0, 2.0, LrRule::linear), DomainError);
}

TEST_CASE("contrastive loss matches the pinned formula values") {
  Graph g;
  Tensor zero({2});
  Tensor three({2});
  three[0] = 3.0;
  Tensor one({2});
  one[0] = 1.0;

  Node a = g.constant(zero);
  CHECK(contrastive_loss(g, a, g.constant(zero), true, 2.0).value()[0] == 0.0);
  CHECK(contrastive_loss(g, a, g.constant(three), false, 2.0).value()[0] == 0.0);
  CHECK(contrastive_loss(g, a, g.constant(one), false, 2.0).value()[0] == 1.0);
  // positive pair at distance 3 -> d^2 = 9
  CHECK(contrastive_loss(g, a, g.constant(three), true, 2.0).value()[0] == 9.0);
}

TEST_CASE("negative pairs beyond the margin receive zero gradient") {
  Graph g;
  Tensor va({2});
  Tensor vb({2});
  vb[0] = 3.0;  // d = 3 >= margin 2
  Node na = g.parameter(va);
  Node nb = g.parameter(vb);
  Node loss = contrastive_loss(g, na, nb, false, 2.0);
  g.backward(loss);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(na.grad()[i] == 0.0);
    CHECK(nb.grad()[i] == 0.0);
  }
}

TEST_CASE("identification loss is ln N under a zero classifier") {
  Graph g;
  RngStream rng(2);
  Node desc = g.constant(random_uniform({5}, rng, -1.0, 1.0));
  Node cls_w = g.parameter(Tensor({4, 5}));
  Node cls_b = g.parameter(Tensor({4}));
  Node loss = identification_loss(g, desc, 2, cls_w, cls_b);
  CHECK(testutil::close_rel(loss.value()[0], std::log(4.0), 1e-12));

  Node other = identification_loss(g, desc, 0, cls_w, cls_b);
  Node total = ops::add(g, loss, other);  // pair members sum additively
  CHECK(total.value()[0] == loss.value()[0] + other.value()[0]);

  CHECK_THROWS_AS(identification_loss(g, desc, 4, cls_w, cls_b), DomainError);
}

TEST_CASE("combined pair loss gradients match finite differences") {
  const std::size_t d1 = 3, d2 = 4, T = 2;
  RngStream rng(6);
  std::vector<Tensor> frames_a, frames_b;
  for (std::size_t t = 0; t < T; ++t) {
    frames_a.push_back(random_uniform({d1}, rng, -1.0, 1.0));
    frames_b.push_back(random_uniform({d1}, rng, -1.0, 1.0));
  }
  const std::vector<Tensor> inits = {
      random_uniform({d2, d1}, rng, -0.5, 0.5),  // W_i
      random_uniform({d2}, rng, -0.5, 0.5),      // b_i
      random_uniform({d2, d2}, rng, -0.5, 0.5),  // W_s
      random_uniform({d2}, rng, -0.5, 0.5),      // b_s
      random_uniform({3, d2}, rng, -0.5, 0.5),   // classifier weights
      random_uniform({3}, rng, -0.5, 0.5),       // classifier bias
  };

  for (const seqstage::Arch arch : {seqstage::Arch::rnn, seqstage::Arch::fnn}) {
    testutil::check_gradients(inits, [&](Graph& g, std::span<const Node> leaves) {
      seqstage::SeqStageVars v{leaves[0], leaves[1], leaves[2], leaves[3]};
      seqstage::DropoutSpec drop{0.0, false};
      RngStream drng(0);
      auto pool = [&](const std::vector<Tensor>& frames) {
        std::vector<Node> nodes;
        for (const Tensor& f : frames) nodes.push_back(g.constant(f));
        std::vector<Node> outs = seqstage::stage_forward(g, arch, v, nodes, drop, drng);
        return seqstage::pool_mean(g, outs);
      };
      Node va = pool(frames_a);
      Node vb = pool(frames_b);
      Node con = contrastive_loss(g, va, vb, true, 2.0);
      Node ia = identification_loss(g, va, 0, leaves[4], leaves[5]);
      Node ib = identification_loss(g, vb, 0, leaves[4], leaves[5]);
      return ops::add(g, con, ops::add(g, ia, ib));
    });
  }
}

TEST_CASE("seq sampler alternates and covers every identity once per epoch") {
  const dataio::Dataset ds = feature_dataset(2, 6, 3);
  TrainConfig cfg = tiny_seq_config();
  PairSampler sampler(ds, cfg, RngStream(5));
  CHECK(sampler.iterations_per_epoch() == 4);  // 2N/B with N=2

  std::vector<std::size_t> positives;
  for (std::size_t iter = 0; iter < 4; ++iter) {
    const std::vector<PairSample> batch = sampler.next();
    REQUIRE(batch.size() == 1);
    const PairSample& p = batch[0];
    CHECK(p.positive == (iter % 2 == 0));  // pos, neg, pos, neg
    CHECK(p.a.cam == 0);
    CHECK(p.b.cam == 1);
    if (p.positive) {
      CHECK(p.a.id_index == p.b.id_index);
      positives.push_back(p.a.id_index);
    } else {
      CHECK(p.a.id_index != p.b.id_index);
    }
  }
  std::sort(positives.begin(), positives.end());
  CHECK(positives == std::vector<std::size_t>{0, 1});
}

TEST_CASE("seq sampler positive coverage holds across epochs") {
  const dataio::Dataset ds = feature_dataset(6, 8, 3);
  TrainConfig cfg = tiny_seq_config();
  PairSampler sampler(ds, cfg, RngStream(7));
  REQUIRE(sampler.iterations_per_epoch() == 12);
  for (int epoch = 0; epoch < 3; ++epoch) {
    for (std::size_t iter = 0; iter < 12; ++iter) sampler.next();
    std::vector<std::size_t> ids = sampler.ledger().positive_ids_this_epoch;
    std::sort(ids.begin(), ids.end());
    CHECK(ids == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
  }
}

TEST_CASE("seq sampler uses whole sequences shorter than L") {
  const dataio::Dataset ds = feature_dataset(2, 3, 2);  // tracks of 3 < L = 16
  TrainConfig cfg = tiny_seq_config();
  cfg.sublen = 16;
  PairSampler sampler(ds, cfg, RngStream(1));
  const std::vector<PairSample> batch = sampler.next();
  CHECK(batch[0].a.len == 3);
  CHECK(batch[0].a.start == 0);
  CHECK(batch[0].b.len == 3);
}

TEST_CASE("seq sampler subsequence windows stay in range") {
  const dataio::Dataset ds = feature_dataset(4, 24, 2);
  TrainConfig cfg = tiny_seq_config();
  cfg.sublen = 16;
  PairSampler sampler(ds, cfg, RngStream(2));
  for (int i = 0; i < 200; ++i) {
    for (const PairSample& p : sampler.next()) {
      for (const SubseqRef* r : {&p.a, &p.b}) {
        CHECK(r->len == 16);
        CHECK(r->start + r->len <= 24);
      }
    }
  }
}

TEST_CASE("frm sampler splits batches half and half with full positive passes") {
  const dataio::Dataset ds = feature_dataset(100, 1, 2);
  TrainConfig cfg;
  cfg.mode = Mode::frm;
  cfg.arch = seqstage::Arch::fnn;
  cfg.batch = 1;
  cfg.sublen = 16;
  PairSampler sampler(ds, cfg, RngStream(9));
  CHECK(sampler.iterations_per_epoch() == 13);  // ceil(200 / 16)
  CHECK(sampler.images_per_iteration() == 32);

  std::vector<std::size_t> trace;
  for (std::size_t iter = 0; iter < 13; ++iter) {
    const std::vector<PairSample> batch = sampler.next();
    REQUIRE(batch.size() == 16);
    CHECK(images_in(batch) == 32);
    std::size_t pos = 0;
    for (const PairSample& p : batch) {
      CHECK(p.a.len == 1);
      CHECK(p.b.len == 1);
      if (p.positive) {
        ++pos;
        CHECK(p.a.id_index == p.b.id_index);
      } else {
        CHECK(p.a.id_index != p.b.id_index);
      }
    }
    CHECK(pos == 8);
    trace = sampler.ledger().positive_ids_this_epoch;
  }
  // 13 iterations x 8 positive slots = 104: one full pass over the 100
  // identities plus 4 padding draws from the next pass.
  REQUIRE(trace.size() == 104);
  std::vector<std::size_t> first_pass(trace.begin(), trace.begin() + 100);
  std::sort(first_pass.begin(), first_pass.end());
  for (std::size_t i = 0; i < 100; ++i) CHECK(first_pass[i] == i);
}

TEST_CASE("seq and frm ledgers agree on images per iteration") {
  const dataio::Dataset ds = feature_dataset(8, 20, 2);
  TrainConfig seq_cfg = tiny_seq_config();
  seq_cfg.sublen = 16;
  TrainConfig frm_cfg = seq_cfg;
  frm_cfg.mode = Mode::frm;
  frm_cfg.arch = seqstage::Arch::fnn;

  PairSampler seq_sampler(ds, seq_cfg, RngStream(3));
  PairSampler frm_sampler(ds, frm_cfg, RngStream(3));
  CHECK(seq_sampler.images_per_iteration() == 32);
  CHECK(frm_sampler.images_per_iteration() == 32);
  CHECK(images_in(seq_sampler.next()) == 32);
  CHECK(images_in(frm_sampler.next()) == 32);
  // FRM epochs are L times shorter, up to the ceiling.
  CHECK(seq_sampler.iterations_per_epoch() == 16);
  CHECK(frm_sampler.iterations_per_epoch() == 1);
}

TEST_CASE("training is deterministic and zero learning rate freezes the init") {
  const dataio::Dataset ds = feature_dataset(4, 6, 3);
  TrainConfig cfg = tiny_seq_config();
  cfg.dropout_p = 0.6;
  cfg.epochs = 2;

  SUBCASE("fixed seed reproduces the checkpoint bit-for-bit") {
    const TrainResult a = train(ds, cfg);
    const TrainResult b = train(ds, cfg);
    CHECK(seqstage::bit_equal(a.stage, b.stage));
    CHECK(bit_equal(a.classifier_w, b.classifier_w));
    CHECK(bit_equal(a.classifier_b, b.classifier_b));
    CHECK(a.loss_history == b.loss_history);

    TrainConfig other = cfg;
    other.seed = 99;
    const TrainResult c = train(ds, other);
    CHECK(!seqstage::bit_equal(a.stage, c.stage));
  }
  SUBCASE("zero learning rate leaves parameters at their initial draw") {
    cfg.learning_rate = 0.0;
    const TrainResult r = train(ds, cfg);
    CHECK(seqstage::bit_equal(r.stage, r.stage_init));
    CHECK(bit_equal(r.classifier_w, Tensor({4, 3})));
    for (double v : r.loss_history) CHECK(v >= 0.0);
  }
  SUBCASE("positive learning rate moves parameters") {
    const TrainResult r = train(ds, cfg);
    CHECK(!seqstage::bit_equal(r.stage, r.stage_init));
  }
}

TEST_CASE("a single positive pair trained in frm mode descends") {
  const dataio::Dataset ds = feature_dataset(1, 1, 4, 21);
  TrainConfig cfg;
  cfg.mode = Mode::frm;
  cfg.arch = seqstage::Arch::fnn;
  cfg.batch = 1;
  cfg.sublen = 2;
  cfg.feature_dim = 3;
  cfg.dropout_p = 0.0;
  cfg.id_loss_weight = 0.0;  // isolate the contrastive term
  cfg.iteration_budget = 200;
  const TrainResult r = train(ds, cfg);
  REQUIRE(r.loss_history.size() == 200);
  CHECK(r.loss_history.front() > r.loss_history.back());
  CHECK(r.loss_history.back() >= 0.0);
}

TEST_CASE("exploding learning rates abort with a divergence error") {
  const dataio::Dataset ds = feature_dataset(2, 4, 3);
  TrainConfig cfg = tiny_seq_config();
  cfg.learning_rate = 1e12;
  cfg.iteration_budget = 50;
  CHECK_THROWS_AS(train(ds, cfg), DivergenceError);
}

TEST_CASE("the training log carries the formula header and one line per iteration") {
  const dataio::Dataset ds = feature_dataset(2, 4, 3);
  TrainConfig cfg = tiny_seq_config();
  cfg.iteration_budget = 5;
  const TrainResult r = train(ds, cfg);
  CHECK(r.iterations_run == 5);
  CHECK(r.log.find("max(0, margin - d)^2") != std::string::npos);
  CHECK(r.log.find("iter=1 ") != std::string::npos);
  CHECK(r.log.find("iter=5 ") != std::string::npos);
  CHECK(r.log.find("mode=seq") != std::string::npos);
}

TEST_CASE("evaluation hooks fire on schedule with read-back snapshots") {
  const dataio::Dataset ds = feature_dataset(2, 4, 3);
  TrainConfig cfg = tiny_seq_config();
  cfg.iteration_budget = 8;
  std::vector<std::size_t> fired;
  const TrainResult r = train(
      ds, cfg,
      [&](std::size_t iter, std::size_t total, const Snapshot& snap) {
        fired.push_back(iter);
        CHECK(total == 8);
        CHECK(snap.stage.d2() == 3);
        CHECK(snap.enc == nullptr);
      },
      4);
  CHECK(fired == std::vector<std::size_t>{4, 8});
  CHECK(seqstage::bit_equal(r.stage, r.stage));
}

TEST_CASE("image datasets train through the encoder") {
  dataio::SyntheticSpec spec;
  spec.ids = 2;
  spec.frames_min = 3;
  spec.frames_max = 3;
  spec.height = 6;
  spec.width = 5;
  spec.kind = dataio::DataKind::images;
  spec.seed = 4;
  const dataio::Dataset ds = dataio::generate_synthetic(spec);

  TrainConfig cfg;
  cfg.mode = Mode::seq;
  cfg.arch = seqstage::Arch::rnn;
  cfg.sublen = 2;
  cfg.feature_dim = 3;
  cfg.dropout_p = 0.0;
  cfg.iteration_budget = 4;
  cfg.encoder_config.height = 6;
  cfg.encoder_config.width = 5;
  cfg.encoder_config.kernel = 3;
  cfg.encoder_config.conv_channels = {2};
  cfg.encoder_config.feature_dim = 4;

  SUBCASE("plain frames") {
    const TrainResult r = train(ds, cfg);
    CHECK(r.has_encoder);
    CHECK(r.enc.kernels.size() == 1);
    for (double v : r.loss_history) CHECK(std::isfinite(v));
    const TrainResult again = train(ds, cfg);
    CHECK(seqstage::bit_equal(r.stage, again.stage));
    CHECK(bit_equal(r.enc.w_out, again.enc.w_out));
  }
  SUBCASE("augmented crops feed a matching encoder") {
    cfg.augment_frames = true;
    cfg.crop_height = 5;
    cfg.crop_width = 4;
    cfg.encoder_config.height = 5;
    cfg.encoder_config.width = 4;
    const TrainResult r = train(ds, cfg);
    CHECK(r.has_encoder);
    for (double v : r.loss_history) CHECK(std::isfinite(v));
  }
  SUBCASE("mismatched encoder geometry is rejected") {
    cfg.encoder_config.height = 7;
    CHECK_THROWS_AS(train(ds, cfg), ConfigError);
  }
}
