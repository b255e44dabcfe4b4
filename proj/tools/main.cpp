// seqpool: command-line surface binding synthesis, optical flow, training,
// transplant, and evaluation into reproducible experiment runs.
//
// Every command writes a manifest.json describing the resolved invocation,
// input hashes, and output hashes; re-running the manifest's argv (with a
// fresh output location) reproduces the data outputs byte-for-byte.
// Timestamps and wall-clock appear only in manifests.
//
// Exit codes: 0 = all declared outputs written and validated; 2 = usage or
// configuration error; 1 = any other failure.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "seqpool/dataio.hpp"
#include "seqpool/errors.hpp"
#include "seqpool/evaluation.hpp"
#include "seqpool/kernels.hpp"
#include "seqpool/manifest.hpp"
#include "seqpool/model.hpp"
#include "seqpool/seqstage.hpp"
#include "seqpool/trainer.hpp"

namespace fs = std::filesystem;
using namespace seqpool;

namespace {

// ---- small utilities

/// Shortest decimal that parses back to exactly the same double.
std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.15g", v);
  if (std::strtod(buf, nullptr) != v) std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_size(std::size_t v) { return std::to_string(v); }

struct WallTimer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

/// Refuses to write into an existing non-empty directory unless forced.
void prepare_out_dir(const std::string& out, bool force) {
  if (fs::exists(out)) {
    if (!fs::is_directory(out)) throw ConfigError("output path exists and is not a directory: " + out);
    if (!fs::is_empty(out) && !force)
      throw ConfigError("output directory is not empty: " + out + " (pass --force to overwrite)");
  } else {
    fs::create_directories(out);
  }
}

void prepare_out_file(const std::string& out, bool force) {
  if (fs::exists(out) && !force)
    throw ConfigError("output file exists: " + out + " (pass --force to overwrite)");
  const fs::path parent = fs::path(out).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << text;
  if (!os) throw IoError("short write on " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path);
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

/// Writes a text artifact, re-reads it, and records it in the manifest.
void emit_text(manifest::RunManifest& m, const std::string& dir, const std::string& name,
               const std::string& text, const std::string& kind) {
  const std::string path = (fs::path(dir) / name).string();
  write_text(path, text);
  if (read_text(path) != text) throw IoError("verification re-read mismatch on " + path);
  m.outputs.push_back({name, manifest::hex64(manifest::fnv1a64(text)), kind});
}

/// Records every regular file under root (except manifests) as an output.
void record_tree_outputs(manifest::RunManifest& m, const std::string& root) {
  std::vector<std::string> rels;
  for (const fs::directory_entry& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "manifest.json") continue;
    rels.push_back(fs::relative(e.path(), root).generic_string());
  }
  std::sort(rels.begin(), rels.end());
  for (const std::string& rel : rels)
    m.outputs.push_back({rel, manifest::hash_file((fs::path(root) / rel).string()), "data"});
}

manifest::RunManifest start_manifest(const std::string& command, std::uint64_t seed) {
  manifest::RunManifest m;
  m.command = command;
  m.seed = seed;
  m.kernel = kernels::active().name;
  m.started_at_utc = manifest::iso8601_utc_now();
  return m;
}

void finish_manifest(manifest::RunManifest& m, const std::string& dir, const WallTimer& timer) {
  m.wall_clock_seconds = timer.seconds();
  manifest::save_manifest((fs::path(dir) / "manifest.json").string(), m);
}

/// Runs fn(0..n-1) on `jobs` workers; any worker exception is rethrown after
/// the pool drains. Results must be written to pre-sized per-index slots so
/// the outcome is identical for every job count.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::min(std::max<std::size_t>(jobs, 1), n == 0 ? std::size_t{1} : n);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(jobs);
  for (std::size_t j = 0; j < jobs; ++j) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;
  return ids;
}

/// Applies `key=value` lines of an INI file to a subcommand's options.
/// Options already given on the command line keep their values: flags
/// override config-file keys.
void apply_config_file(CLI::App* cmd, const std::string& path) {
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_file(path);
  } catch (const CLI::Error& e) {
    throw ConfigError("cannot read config file " + path + ": " + e.what());
  }
  for (const CLI::ConfigItem& item : items) {
    if (item.name == "--" || item.name == "++") continue;
    CLI::Option* op = cmd->get_option_no_throw("--" + item.name);
    if (op == nullptr) throw ConfigError("unknown key in config file " + path + ": " + item.name);
    if (!op->empty()) continue;  // set on the command line; flag wins
    try {
      for (const std::string& input : item.inputs) op->add_result(input);
      op->run_callback();
    } catch (const CLI::Error& e) {
      throw ConfigError("bad value for config key " + item.name + ": " + e.what());
    }
  }
}

// ---- synth

struct SynthArgs {
  std::string out;
  std::string kind = "features";
  dataio::SyntheticSpec spec;
  std::size_t frames = 0;  // when set, overrides frames_min/frames_max
  bool force = false;
};

int run_synth(SynthArgs& a, bool frames_given) {
  WallTimer timer;
  if (frames_given) a.spec.frames_min = a.spec.frames_max = a.frames;
  a.spec.kind = dataio::kind_from_name(a.kind);
  a.spec.validate();
  prepare_out_dir(a.out, a.force);

  manifest::RunManifest m = start_manifest("synth", a.spec.seed);
  m.argv = {"synth",        "--out",          a.out,
            "--kind",       std::string(dataio::kind_name(a.spec.kind)),
            "--ids",        fmt_size(a.spec.ids),
            "--frames-min", fmt_size(a.spec.frames_min),
            "--frames-max", fmt_size(a.spec.frames_max)};
  if (a.spec.kind == dataio::DataKind::features) {
    m.argv.insert(m.argv.end(), {"--dim", fmt_size(a.spec.feature_dim)});
  } else {
    m.argv.insert(m.argv.end(), {"--height", fmt_size(a.spec.height), "--width", fmt_size(a.spec.width)});
  }
  m.argv.insert(m.argv.end(), {"--signal", fmt_double(a.spec.signal),
                               "--noise", fmt_double(a.spec.noise),
                               "--camera-shift", fmt_double(a.spec.camera_shift),
                               "--seed", std::to_string(a.spec.seed)});
  m.config = {{"kind", std::string(dataio::kind_name(a.spec.kind))},
              {"ids", fmt_size(a.spec.ids)},
              {"frames_min", fmt_size(a.spec.frames_min)},
              {"frames_max", fmt_size(a.spec.frames_max)},
              {"feature_dim", fmt_size(a.spec.feature_dim)},
              {"height", fmt_size(a.spec.height)},
              {"width", fmt_size(a.spec.width)},
              {"signal", fmt_double(a.spec.signal)},
              {"noise", fmt_double(a.spec.noise)},
              {"camera_shift", fmt_double(a.spec.camera_shift)},
              {"seed", std::to_string(a.spec.seed)}};

  const dataio::Dataset ds = dataio::generate_synthetic(a.spec);
  dataio::save_dataset(a.out, ds);

  const dataio::Dataset back = dataio::load_dataset(a.out, a.spec.kind);
  if (back.size() != a.spec.ids) throw IoError("verification reload found a different identity count");
  record_tree_outputs(m, a.out);
  finish_manifest(m, a.out, timer);
  std::cout << "wrote " << ds.size() << " identities x 2 tracks to " << a.out << "\n";
  return 0;
}

// ---- flow

struct FlowArgs {
  std::string data;
  std::string out;
  std::size_t window = 9;
  double clamp = 1.0;
  bool force = false;
};

int run_flow(FlowArgs& a) {
  WallTimer timer;
  if (fs::exists(a.data) && fs::exists(a.out) && fs::equivalent(a.data, a.out))
    throw ConfigError("flow cannot rewrite the dataset in place; pick a fresh --out");
  dataio::Dataset ds = dataio::load_dataset(a.data, dataio::DataKind::images);
  if (ds.size() == 0) throw ConfigError("no image dataset at " + a.data);
  prepare_out_dir(a.out, a.force);

  manifest::RunManifest m = start_manifest("flow", 0);
  m.argv = {"flow", "--data", a.data, "--out", a.out,
            "--window", fmt_size(a.window), "--clamp", fmt_double(a.clamp)};
  m.config = {{"window", fmt_size(a.window)}, {"clamp", fmt_double(a.clamp)}};
  m.inputs.push_back({a.data, manifest::hash_tree(a.data), "tree"});

  dataio::fill_flow(ds, a.window, a.clamp);
  dataio::save_dataset(a.out, ds);

  const dataio::Dataset back = dataio::load_dataset(a.out, dataio::DataKind::images);
  if (back.size() != ds.size()) throw IoError("verification reload found a different identity count");
  record_tree_outputs(m, a.out);
  finish_manifest(m, a.out, timer);
  std::cout << "filled flow channels for " << ds.size() << " identities into " << a.out << "\n";
  return 0;
}

// ---- train

struct TrainArgs {
  std::string data;
  std::string out;
  std::string kind = "features";
  std::string mode = "seq";
  std::string arch = "rnn";
  trainer::TrainConfig cfg;
  std::uint64_t split_seed = 42;
  std::uint32_t trial = 0;
  bool all_ids = false;
  std::size_t eval_cadence = 0;
  std::vector<std::size_t> eval_ranks = {1};
  bool force = false;
};

void echo_train_config(manifest::RunManifest& m, const TrainArgs& a, std::size_t train_count) {
  const trainer::TrainConfig& c = a.cfg;
  m.argv = {"train", "--data", a.data, "--out", a.out, "--kind", a.kind,
            "--mode", std::string(trainer::mode_name(c.mode)),
            "--arch", std::string(seqstage::arch_name(c.arch)),
            "--batch", fmt_size(c.batch),
            "--sublen", fmt_size(c.sublen),
            "--dim", fmt_size(c.feature_dim),
            "--margin", fmt_double(c.margin),
            "--lr", fmt_double(c.resolved_lr()),
            "--epochs", fmt_size(c.resolved_epochs()),
            "--iterations", fmt_size(c.iteration_budget),
            "--dropout", fmt_double(c.dropout_p),
            "--id-weight", fmt_double(c.id_loss_weight),
            "--seed", std::to_string(c.seed),
            "--split-seed", std::to_string(a.split_seed),
            "--trial", std::to_string(a.trial)};
  if (a.all_ids) m.argv.push_back("--all-ids");
  if (a.kind == "images") {
    m.argv.insert(m.argv.end(), {"--enc-dim", fmt_size(c.encoder_config.feature_dim),
                                 "--enc-kernel", fmt_size(c.encoder_config.kernel)});
    m.argv.push_back("--enc-channels");
    for (std::size_t ch : c.encoder_config.conv_channels) m.argv.push_back(fmt_size(ch));
    if (c.augment_frames) {
      m.argv.insert(m.argv.end(), {"--augment",
                                   "--crop-height", fmt_size(c.crop_height),
                                   "--crop-width", fmt_size(c.crop_width),
                                   "--mirror-prob", fmt_double(c.mirror_prob)});
    }
  }
  if (a.eval_cadence > 0) {
    m.argv.insert(m.argv.end(), {"--eval-cadence", fmt_size(a.eval_cadence)});
    m.argv.push_back("--eval-ranks");
    for (std::size_t r : a.eval_ranks) m.argv.push_back(fmt_size(r));
  }

  m.config = {{"mode", std::string(trainer::mode_name(c.mode))},
              {"arch", std::string(seqstage::arch_name(c.arch))},
              {"batch", fmt_size(c.batch)},
              {"sublen", fmt_size(c.sublen)},
              {"feature_dim", fmt_size(c.feature_dim)},
              {"margin", fmt_double(c.margin)},
              {"learning_rate", fmt_double(c.resolved_lr())},
              {"epochs", fmt_size(c.resolved_epochs())},
              {"iteration_budget", fmt_size(c.iteration_budget)},
              {"dropout", fmt_double(c.dropout_p)},
              {"id_loss_weight", fmt_double(c.id_loss_weight)},
              {"seed", std::to_string(c.seed)},
              {"split_seed", std::to_string(a.split_seed)},
              {"trial", std::to_string(a.trial)},
              {"all_ids", a.all_ids ? "true" : "false"},
              {"train_identities", fmt_size(train_count)}};
}

int run_train(TrainArgs& a, const std::string& config_file) {
  WallTimer timer;
  a.cfg.mode = trainer::mode_from_name(a.mode);
  a.cfg.arch = seqstage::arch_from_name(a.arch);
  const dataio::DataKind kind = dataio::kind_from_name(a.kind);

  const dataio::Dataset full = dataio::load_dataset(a.data, kind);
  if (full.size() == 0) throw ConfigError("no dataset at " + a.data);
  if (kind == dataio::DataKind::images) {
    a.cfg.encoder_config.height = a.cfg.augment_frames ? a.cfg.crop_height : full.frame_height();
    a.cfg.encoder_config.width = a.cfg.augment_frames ? a.cfg.crop_width : full.frame_width();
  }

  dataio::DatasetSplit split;
  std::vector<std::size_t> train_ids;
  std::vector<std::size_t> test_ids;
  if (a.all_ids) {
    train_ids = all_indices(full.size());
  } else {
    split = dataio::make_split(full, a.trial, a.split_seed);
    train_ids = split.train;
    test_ids = split.test;
  }
  const dataio::Dataset train_ds = evaluation::subset(full, train_ids);
  a.cfg.validate(train_ds);
  if (a.eval_cadence > 0 && a.all_ids)
    throw ConfigError("--eval-cadence needs a held-out test split; drop --all-ids");

  prepare_out_dir(a.out, a.force);
  manifest::RunManifest m = start_manifest("train", a.cfg.seed);
  echo_train_config(m, a, train_ids.size());
  m.inputs.push_back({a.data, manifest::hash_tree(a.data), "tree"});
  if (!config_file.empty())
    m.inputs.push_back({config_file, manifest::hash_file(config_file), "data"});

  model::Model trained;
  trained.arch = a.cfg.arch;
  std::string history_csv;
  std::string log;
  if (a.eval_cadence > 0) {
    const evaluation::ConvergenceRun run =
        evaluation::track_convergence(full, a.cfg, train_ids, test_ids, a.eval_cadence, a.eval_ranks);
    trained.stage = run.train.stage;
    trained.has_encoder = run.train.has_encoder;
    trained.enc = run.train.enc;
    log = run.train.log;
    std::ostringstream os;
    evaluation::write_history_csv(os, run.history);
    history_csv = os.str();
  } else {
    const trainer::TrainResult result = trainer::train(train_ds, a.cfg);
    trained.stage = result.stage;
    trained.has_encoder = result.has_encoder;
    trained.enc = result.enc;
    log = result.log;
  }
  const std::string ckpt_path = (fs::path(a.out) / "checkpoint.sqmd").string();
  model::save_model(ckpt_path, trained);
  const model::Model back = model::load_model(ckpt_path);
  back.validate();
  if (back.arch != trained.arch || !model::bit_equal(back, trained))
    throw IoError("verification reload of the checkpoint does not match the trained model");
  m.outputs.push_back({"checkpoint.sqmd", manifest::hash_file(ckpt_path), "data"});

  emit_text(m, a.out, "train.log", log, "log");
  if (!history_csv.empty()) emit_text(m, a.out, "history.csv", history_csv, "data");

  finish_manifest(m, a.out, timer);
  std::cout << "trained " << trainer::mode_name(a.cfg.mode) << "/" << seqstage::arch_name(a.cfg.arch)
            << " on " << train_ids.size() << " identities; checkpoint at " << ckpt_path << "\n";
  return 0;
}

// ---- transplant

struct TransplantArgs {
  std::string in;
  std::string out;
  bool force = false;
};

int run_transplant(TransplantArgs& a) {
  WallTimer timer;
  const model::Model original = model::load_model(a.in);
  const model::Model flipped = model::transplant(original);
  prepare_out_file(a.out, a.force);

  manifest::RunManifest m = start_manifest("transplant", 0);
  m.argv = {"transplant", "--in", a.in, "--out", a.out};
  m.config = {{"from_arch", std::string(seqstage::arch_name(original.arch))},
              {"to_arch", std::string(seqstage::arch_name(flipped.arch))}};
  m.inputs.push_back({a.in, manifest::hash_file(a.in), "data"});

  model::save_model(a.out, flipped);
  const model::Model back = model::load_model(a.out);
  if (back.arch == original.arch || !seqstage::bit_equal(back.stage, original.stage))
    throw IoError("verification reload of the transplanted checkpoint failed");
  m.outputs.push_back({fs::path(a.out).filename().string(), manifest::hash_file(a.out), "data"});

  m.wall_clock_seconds = timer.seconds();
  manifest::save_manifest(a.out + ".manifest.json", m);
  std::cout << "transplanted " << seqstage::arch_name(original.arch) << " -> "
            << seqstage::arch_name(flipped.arch) << " at " << a.out << "\n";
  return 0;
}

// ---- eval / compare

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string kind = "features";
  std::string out;
  std::size_t trials = 1;
  std::uint64_t split_seed = 42;
  std::size_t jobs = 1;
  std::string train_manifest;
  bool force = false;
};

evaluation::CmcCurve eval_one_trial(const dataio::Dataset& full, const model::Model& m,
                                    std::uint32_t trial, std::uint64_t split_seed) {
  const dataio::DatasetSplit split = dataio::make_split(full, trial, split_seed);
  const dataio::Dataset test_ds = evaluation::subset(full, split.test);
  const evaluation::DescriptorPair desc =
      evaluation::extract_descriptors(test_ds, all_indices(test_ds.size()), m);
  return evaluation::cmc(desc.probe, desc.gallery);
}

void warn_on_split_leakage(const std::string& train_manifest_path, std::uint64_t split_seed) {
  const manifest::RunManifest train_m = manifest::load_manifest(train_manifest_path);
  const auto seed_it = train_m.config.find("split_seed");
  if (seed_it != train_m.config.end() && seed_it->second != std::to_string(split_seed)) {
    std::cerr << "seqpool: warning: possible train/test leakage: training used split seed "
              << seed_it->second << " but this evaluation uses " << split_seed
              << "; test identities may overlap the training half\n";
  }
  const auto all_it = train_m.config.find("all_ids");
  if (all_it != train_m.config.end() && all_it->second == "true") {
    std::cerr << "seqpool: warning: possible train/test leakage: the checkpoint was trained on "
                 "all identities, including every evaluation test identity\n";
  }
}

int run_eval(EvalArgs& a) {
  WallTimer timer;
  if (a.trials == 0) throw ConfigError("--trials must be at least 1");
  const dataio::DataKind kind = dataio::kind_from_name(a.kind);
  const model::Model m = model::load_model(a.checkpoint);
  const dataio::Dataset full = dataio::load_dataset(a.data, kind);
  if (full.size() == 0) throw ConfigError("no dataset at " + a.data);
  if (!a.train_manifest.empty()) warn_on_split_leakage(a.train_manifest, a.split_seed);
  prepare_out_dir(a.out, a.force);

  manifest::RunManifest mf = start_manifest("eval", a.split_seed);
  mf.argv = {"eval", "--checkpoint", a.checkpoint, "--data", a.data, "--kind", a.kind,
             "--out", a.out, "--trials", fmt_size(a.trials),
             "--split-seed", std::to_string(a.split_seed), "--jobs", fmt_size(a.jobs)};
  if (!a.train_manifest.empty()) mf.argv.insert(mf.argv.end(), {"--train-manifest", a.train_manifest});
  mf.config = {{"trials", fmt_size(a.trials)},
               {"split_seed", std::to_string(a.split_seed)},
               {"arch", std::string(seqstage::arch_name(m.arch))}};
  mf.inputs.push_back({a.checkpoint, manifest::hash_file(a.checkpoint), "data"});
  mf.inputs.push_back({a.data, manifest::hash_tree(a.data), "tree"});

  std::vector<evaluation::CmcCurve> curves(a.trials);
  parallel_for(a.trials, a.jobs, [&](std::size_t t) {
    curves[t] = eval_one_trial(full, m, static_cast<std::uint32_t>(t), a.split_seed);
  });

  std::ostringstream os;
  if (a.trials == 1) {
    evaluation::write_cmc_csv(os, curves[0].values, nullptr);
  } else {
    evaluation::write_cmc_csv(os, evaluation::aggregate_trials(curves));
  }
  emit_text(mf, a.out, "cmc.csv", os.str(), "data");
  finish_manifest(mf, a.out, timer);
  std::cout << "evaluated " << a.trials << " trial(s); CMC at " << (fs::path(a.out) / "cmc.csv").string()
            << "\n";
  return 0;
}

struct CompareArgs {
  std::string a;
  std::string b;
  std::string data;
  std::string kind = "features";
  std::string out;
  std::size_t trials = 10;
  std::uint64_t split_seed = 42;
  std::size_t jobs = 1;
  bool force = false;
};

int run_compare(CompareArgs& a) {
  WallTimer timer;
  if (a.trials < 2) throw ConfigError("--trials must be at least 2 for a paired comparison");
  const dataio::DataKind kind = dataio::kind_from_name(a.kind);
  const model::Model model_a = model::load_model(a.a);
  const model::Model model_b = model::load_model(a.b);
  const dataio::Dataset full = dataio::load_dataset(a.data, kind);
  if (full.size() == 0) throw ConfigError("no dataset at " + a.data);
  prepare_out_dir(a.out, a.force);

  manifest::RunManifest mf = start_manifest("compare", a.split_seed);
  mf.argv = {"compare", "--a", a.a, "--b", a.b, "--data", a.data, "--kind", a.kind,
             "--out", a.out, "--trials", fmt_size(a.trials),
             "--split-seed", std::to_string(a.split_seed), "--jobs", fmt_size(a.jobs)};
  mf.config = {{"trials", fmt_size(a.trials)},
               {"split_seed", std::to_string(a.split_seed)},
               {"arch_a", std::string(seqstage::arch_name(model_a.arch))},
               {"arch_b", std::string(seqstage::arch_name(model_b.arch))}};
  mf.inputs.push_back({a.a, manifest::hash_file(a.a), "data"});
  mf.inputs.push_back({a.b, manifest::hash_file(a.b), "data"});
  mf.inputs.push_back({a.data, manifest::hash_tree(a.data), "tree"});

  std::vector<evaluation::CmcCurve> curves_a(a.trials);
  std::vector<evaluation::CmcCurve> curves_b(a.trials);
  parallel_for(a.trials, a.jobs, [&](std::size_t t) {
    // Both checkpoints see the identical split for a paired comparison.
    curves_a[t] = eval_one_trial(full, model_a, static_cast<std::uint32_t>(t), a.split_seed);
    curves_b[t] = eval_one_trial(full, model_b, static_cast<std::uint32_t>(t), a.split_seed);
  });

  std::ostringstream diff_os, a_os, b_os;
  evaluation::write_diff_csv(diff_os, evaluation::compare_architectures(curves_a, curves_b));
  evaluation::write_cmc_csv(a_os, evaluation::aggregate_trials(curves_a));
  evaluation::write_cmc_csv(b_os, evaluation::aggregate_trials(curves_b));
  emit_text(mf, a.out, "diff.csv", diff_os.str(), "data");
  emit_text(mf, a.out, "cmc_a.csv", a_os.str(), "data");
  emit_text(mf, a.out, "cmc_b.csv", b_os.str(), "data");
  finish_manifest(mf, a.out, timer);
  std::cout << "compared " << a.trials << " paired trial(s); diff at "
            << (fs::path(a.out) / "diff.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seqpool: sequence-pooling re-identification experiments"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic two-camera dataset tree");
  synth_cmd->add_option("--out", synth.out, "Output dataset directory")->required();
  synth_cmd->add_option("--kind", synth.kind, "Dataset kind: features|images")
      ->check(CLI::IsMember({"features", "images"}))
      ->capture_default_str();
  synth_cmd->add_option("--ids", synth.spec.ids, "Number of identities")->capture_default_str();
  CLI::Option* frames_opt =
      synth_cmd->add_option("--frames", synth.frames, "Frames per track (sets both bounds)");
  synth_cmd->add_option("--frames-min", synth.spec.frames_min, "Minimum frames per track")
      ->capture_default_str();
  synth_cmd->add_option("--frames-max", synth.spec.frames_max, "Maximum frames per track")
      ->capture_default_str();
  synth_cmd->add_option("--dim", synth.spec.feature_dim, "Feature dimension (features kind)")
      ->capture_default_str();
  synth_cmd->add_option("--height", synth.spec.height, "Frame height (images kind)")
      ->capture_default_str();
  synth_cmd->add_option("--width", synth.spec.width, "Frame width (images kind)")
      ->capture_default_str();
  synth_cmd->add_option("--signal", synth.spec.signal, "Identity signature magnitude")
      ->capture_default_str();
  synth_cmd->add_option("--noise", synth.spec.noise, "Per-frame noise magnitude")
      ->capture_default_str();
  synth_cmd->add_option("--camera-shift", synth.spec.camera_shift, "Camera-B bias magnitude")
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth.spec.seed, "Generator seed")
      ->envname("SEQPOOL_SEED")
      ->capture_default_str();
  synth_cmd->add_flag("--force", synth.force, "Overwrite a non-empty output directory");

  FlowArgs flow;
  CLI::App* flow_cmd = app.add_subcommand("flow", "Fill optical-flow channels of an image dataset");
  flow_cmd->add_option("--data", flow.data, "Input image dataset directory")->required();
  flow_cmd->add_option("--out", flow.out, "Output dataset directory")->required();
  flow_cmd->add_option("--window", flow.window, "Odd Lucas-Kanade window side")->capture_default_str();
  flow_cmd->add_option("--clamp", flow.clamp, "Flow clamp magnitude before [-1,1] scaling")
      ->capture_default_str();
  flow_cmd->add_flag("--force", flow.force, "Overwrite a non-empty output directory");

  TrainArgs train;
  std::string train_config_file;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a sequence-pooling model");
  train_cmd->add_option("--config", train_config_file,
                        "INI config file (one key=value per hyperparameter flag); "
                        "command-line flags override its keys");
  train_cmd->add_option("--data", train.data, "Dataset directory")->required();
  train_cmd->add_option("--out", train.out, "Output run directory")->required();
  train_cmd->add_option("--kind", train.kind, "Dataset kind: features|images")
      ->check(CLI::IsMember({"features", "images"}))
      ->capture_default_str();
  train_cmd->add_option("--mode", train.mode, "Training mode: seq|frm")
      ->check(CLI::IsMember({"seq", "frm"}))
      ->capture_default_str();
  train_cmd->add_option("--arch", train.arch, "Sequence stage architecture: rnn|fnn")
      ->check(CLI::IsMember({"rnn", "fnn"}))
      ->capture_default_str();
  train_cmd->add_option("--batch", train.cfg.batch, "Pairs per iteration (seq mode)")
      ->capture_default_str();
  train_cmd->add_option("--sublen", train.cfg.sublen, "Subsequence length L")->capture_default_str();
  train_cmd->add_option("--dim", train.cfg.feature_dim, "Descriptor dimension")->capture_default_str();
  train_cmd->add_option("--margin", train.cfg.margin, "Contrastive margin")->capture_default_str();
  train_cmd->add_option("--lr", train.cfg.learning_rate,
                        "Learning rate (default: 1e-3 seq, 1.6e-2 frm)");
  train_cmd->add_option("--epochs", train.cfg.epochs,
                        "Epochs (default: 1000 seq, 16000 frm); 0 keeps the default");
  train_cmd->add_option("--iterations", train.cfg.iteration_budget,
                        "Hard iteration budget; 0 defers to --epochs")
      ->capture_default_str();
  train_cmd->add_option("--dropout", train.cfg.dropout_p, "Dropout probability")
      ->capture_default_str();
  train_cmd->add_option("--id-weight", train.cfg.id_loss_weight, "Identification loss weight")
      ->capture_default_str();
  train_cmd->add_option("--seed", train.cfg.seed, "Training seed")
      ->envname("SEQPOOL_SEED")
      ->capture_default_str();
  train_cmd->add_option("--split-seed", train.split_seed, "Train/test split seed")
      ->capture_default_str();
  train_cmd->add_option("--trial", train.trial, "Split trial index")->capture_default_str();
  train_cmd->add_flag("--all-ids", train.all_ids, "Train on every identity (no held-out split)");
  train_cmd->add_flag("--augment", train.cfg.augment_frames,
                      "Random crop + mirror augmentation (images kind)");
  train_cmd->add_option("--crop-height", train.cfg.crop_height, "Augmented crop height");
  train_cmd->add_option("--crop-width", train.cfg.crop_width, "Augmented crop width");
  train_cmd->add_option("--mirror-prob", train.cfg.mirror_prob, "Mirror probability")
      ->capture_default_str();
  train_cmd->add_option("--enc-dim", train.cfg.encoder_config.feature_dim,
                        "Encoder output dimension (images kind)")
      ->capture_default_str();
  train_cmd->add_option("--enc-kernel", train.cfg.encoder_config.kernel, "Encoder conv kernel side")
      ->capture_default_str();
  train_cmd->add_option("--enc-channels", train.cfg.encoder_config.conv_channels,
                        "Encoder conv channels per block");
  train_cmd->add_option("--eval-cadence", train.eval_cadence,
                        "Evaluate the test split every N iterations into history.csv");
  train_cmd->add_option("--eval-ranks", train.eval_ranks, "Ranks tracked by --eval-cadence")
      ->capture_default_str();
  train_cmd->add_flag("--force", train.force, "Overwrite a non-empty output directory");

  TransplantArgs transplant;
  CLI::App* transplant_cmd =
      app.add_subcommand("transplant", "Flip a checkpoint's architecture tag, values untouched");
  transplant_cmd->add_option("--in", transplant.in, "Input checkpoint")->required();
  transplant_cmd->add_option("--out", transplant.out, "Output checkpoint")->required();
  transplant_cmd->add_flag("--force", transplant.force, "Overwrite an existing output file");

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint's CMC over trial splits");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Model checkpoint")->required();
  eval_cmd->add_option("--data", eval.data, "Dataset directory")->required();
  eval_cmd->add_option("--kind", eval.kind, "Dataset kind: features|images")
      ->check(CLI::IsMember({"features", "images"}))
      ->capture_default_str();
  eval_cmd->add_option("--out", eval.out, "Output directory")->required();
  eval_cmd->add_option("--trials", eval.trials, "Number of split trials")->capture_default_str();
  eval_cmd->add_option("--split-seed", eval.split_seed, "Split seed")
      ->envname("SEQPOOL_SEED")
      ->capture_default_str();
  eval_cmd->add_option("--jobs", eval.jobs, "Parallel trial workers")->capture_default_str();
  eval_cmd->add_option("--train-manifest", eval.train_manifest,
                       "Training manifest to check for split leakage");
  eval_cmd->add_flag("--force", eval.force, "Overwrite a non-empty output directory");

  CompareArgs compare;
  CLI::App* compare_cmd =
      app.add_subcommand("compare", "Paired CMC comparison of two checkpoints on identical splits");
  compare_cmd->add_option("--a", compare.a, "First checkpoint")->required();
  compare_cmd->add_option("--b", compare.b, "Second checkpoint")->required();
  compare_cmd->add_option("--data", compare.data, "Dataset directory")->required();
  compare_cmd->add_option("--kind", compare.kind, "Dataset kind: features|images")
      ->check(CLI::IsMember({"features", "images"}))
      ->capture_default_str();
  compare_cmd->add_option("--out", compare.out, "Output directory")->required();
  compare_cmd->add_option("--trials", compare.trials, "Number of paired trials")
      ->capture_default_str();
  compare_cmd->add_option("--split-seed", compare.split_seed, "Split seed")
      ->envname("SEQPOOL_SEED")
      ->capture_default_str();
  compare_cmd->add_option("--jobs", compare.jobs, "Parallel trial workers")->capture_default_str();
  compare_cmd->add_flag("--force", compare.force, "Overwrite a non-empty output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed()) return run_synth(synth, frames_opt->count() > 0);
    if (flow_cmd->parsed()) return run_flow(flow);
    if (train_cmd->parsed()) {
      if (!train_config_file.empty()) apply_config_file(train_cmd, train_config_file);
      return run_train(train, train_config_file);
    }
    if (transplant_cmd->parsed()) return run_transplant(transplant);
    if (eval_cmd->parsed()) return run_eval(eval);
    if (compare_cmd->parsed()) return run_compare(compare);
  } catch (const ConfigError& e) {
    std::cerr << "seqpool: usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "seqpool: error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "seqpool: error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
