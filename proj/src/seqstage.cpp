#include "seqpool/seqstage.hpp"

#include <cmath>
#include <fstream>
#include <string>
#include <utility>

#include "seqpool/bytes.hpp"
#include "seqpool/errors.hpp"
#include "seqpool/kernels.hpp"
#include "seqpool/ops.hpp"

namespace seqpool::seqstage {

namespace O = seqpool::ops;

namespace {

const kernels::KernelTable& K() { return kernels::active(); }

void require_frames(const SeqStageParams& p, std::span<const Tensor> frames) {
  if (frames.empty()) throw DomainError("sequence stage needs at least one frame");
  for (const Tensor& f : frames)
    if (f.rank() != 1 || f.dim(0) != p.d1())
      throw DimensionError("frame feature dimension " +
                           (f.rank() == 1 ? std::to_string(f.dim(0)) : "rank!=1") +
                           " does not match stage input dimension " + std::to_string(p.d1()));
}

void require_frame_nodes(const SeqStageVars& v, std::span<const Node> frames) {
  if (frames.empty()) throw DomainError("sequence stage needs at least one frame");
  const std::size_t d1 = v.w_i.shape()[1];
  for (const Node& f : frames)
    if (f.shape().size() != 1 || f.shape()[0] != d1)
      throw DimensionError("frame node does not match stage input dimension " +
                           std::to_string(d1));
}

// h(t) = W_i drop(f(t)) + b_i, the shared input-map half of every variant.
Node input_map(Graph& g, const SeqStageVars& v, Node frame, const DropoutSpec& drop,
               RngStream& rng) {
  return O::affine(g, v.w_i, O::dropout_mask(g, frame, drop.p, rng, drop.training), v.b_i);
}

// W_s drop(tanh(prev)) + b_s, the recurrent half.
Node recurrent_map(Graph& g, const SeqStageVars& v, Node tanh_prev, const DropoutSpec& drop,
                   RngStream& rng) {
  return O::affine(g, v.w_s, O::dropout_mask(g, tanh_prev, drop.p, rng, drop.training), v.b_s);
}

// Value-level h(t) for one frame.
Tensor input_map_values(const SeqStageParams& p, const Tensor& frame) {
  Tensor h({p.d2()});
  K().matvec(p.w_i.data(), frame.data(), p.d2(), p.d1(), h.data());
  K().add(h.data(), p.b_i.data(), p.d2(), h.data());
  return h;
}

Tensor tanh_values(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
  return y;
}

// out = h + W_s r + b_s
Tensor combine_values(const SeqStageParams& p, const Tensor& h, const Tensor& r) {
  Tensor rec({p.d2()});
  K().matvec(p.w_s.data(), r.data(), p.d2(), p.d2(), rec.data());
  K().add(rec.data(), p.b_s.data(), p.d2(), rec.data());
  K().add(h.data(), rec.data(), p.d2(), rec.data());
  return rec;
}

}  // namespace

void SeqStageParams::validate() const {
  if (w_i.rank() != 2 || w_s.rank() != 2 || b_i.rank() != 1 || b_s.rank() != 1)
    throw DimensionError("sequence stage blocks have wrong ranks");
  const std::size_t d_out = w_i.dim(0);
  if (w_s.dim(0) != d_out || w_s.dim(1) != d_out || b_i.dim(0) != d_out || b_s.dim(0) != d_out)
    throw DimensionError("sequence stage blocks disagree on output dimension");
}

SeqStageParams SeqStageParams::init(std::size_t d1, std::size_t d2, RngStream& rng) {
  if (d1 == 0 || d2 == 0) throw DimensionError("stage dimensions must be positive");
  const double bound_in = 1.0 / std::sqrt(static_cast<double>(d1));
  const double bound_rec = 1.0 / std::sqrt(static_cast<double>(d2));
  SeqStageParams p;
  p.w_i = random_uniform({d2, d1}, rng, -bound_in, bound_in);
  p.b_i = random_uniform({d2}, rng, -bound_in, bound_in);
  p.w_s = random_uniform({d2, d2}, rng, -bound_rec, bound_rec);
  p.b_s = random_uniform({d2}, rng, -bound_rec, bound_rec);
  return p;
}

bool bit_equal(const SeqStageParams& a, const SeqStageParams& b) {
  return seqpool::bit_equal(a.w_i, b.w_i) && seqpool::bit_equal(a.b_i, b.b_i) &&
         seqpool::bit_equal(a.w_s, b.w_s) && seqpool::bit_equal(a.b_s, b.b_s);
}

SeqStageVars SeqStageVars::bind(Graph& g, const SeqStageParams& p) {
  p.validate();
  return SeqStageVars{g.parameter(p.w_i), g.parameter(p.b_i), g.parameter(p.w_s),
                      g.parameter(p.b_s)};
}

SeqStageParams SeqStageVars::read_back() const {
  return SeqStageParams{w_i.value(), b_i.value(), w_s.value(), b_s.value()};
}

std::string_view arch_name(Arch a) { return a == Arch::rnn ? "rnn" : "fnn"; }

Arch arch_from_name(std::string_view name) {
  if (name == "rnn") return Arch::rnn;
  if (name == "fnn") return Arch::fnn;
  throw ConfigError("unknown architecture \"" + std::string(name) + "\" (expected rnn or fnn)");
}

std::vector<Node> rnn_forward(Graph& g, const SeqStageVars& v, std::span<const Node> frames,
                              const DropoutSpec& drop, RngStream& rng) {
  require_frame_nodes(v, frames);
  const std::size_t d2 = v.w_i.shape()[0];
  std::vector<Node> out;
  out.reserve(frames.size());
  Node tanh_prev = g.constant(Tensor({d2}));  // tanh of the zero initial state
  for (const Node& f : frames) {
    Node h = input_map(g, v, f, drop, rng);
    Node o = O::add(g, h, recurrent_map(g, v, tanh_prev, drop, rng));
    out.push_back(o);
    tanh_prev = O::tanh_elem(g, o);
  }
  return out;
}

std::vector<Node> fnn_forward(Graph& g, const SeqStageVars& v, std::span<const Node> frames,
                              const DropoutSpec& drop, RngStream& rng) {
  require_frame_nodes(v, frames);
  std::vector<Node> out;
  out.reserve(frames.size());
  for (const Node& f : frames) {
    Node h = input_map(g, v, f, drop, rng);
    out.push_back(O::add(g, h, recurrent_map(g, v, O::tanh_elem(g, h), drop, rng)));
  }
  return out;
}

std::vector<Node> truncated_rnn_forward(Graph& g, const SeqStageVars& v,
                                        std::span<const Node> frames, const DropoutSpec& drop,
                                        RngStream& rng) {
  require_frame_nodes(v, frames);
  const std::size_t d2 = v.w_i.shape()[0];
  std::vector<Node> out;
  out.reserve(frames.size());
  Node tanh_prev = g.constant(Tensor({d2}));
  for (const Node& f : frames) {
    Node h = input_map(g, v, f, drop, rng);
    out.push_back(O::add(g, h, recurrent_map(g, v, tanh_prev, drop, rng)));
    tanh_prev = O::tanh_elem(g, h);  // one-step dependency: next step sees tanh(h(t)) only
  }
  return out;
}

std::vector<Node> stage_forward(Graph& g, Arch arch, const SeqStageVars& v,
                                std::span<const Node> frames, const DropoutSpec& drop,
                                RngStream& rng) {
  return arch == Arch::rnn ? rnn_forward(g, v, frames, drop, rng)
                           : fnn_forward(g, v, frames, drop, rng);
}

Node pool_mean(Graph& g, std::span<const Node> outputs) {
  return O::mean_over_time(g, outputs);
}

std::vector<Tensor> rnn_values(const SeqStageParams& p, std::span<const Tensor> frames) {
  p.validate();
  require_frames(p, frames);
  std::vector<Tensor> out;
  out.reserve(frames.size());
  Tensor tanh_prev({p.d2()});
  for (const Tensor& f : frames) {
    out.push_back(combine_values(p, input_map_values(p, f), tanh_prev));
    tanh_prev = tanh_values(out.back());
  }
  return out;
}

std::vector<Tensor> fnn_values(const SeqStageParams& p, std::span<const Tensor> frames) {
  p.validate();
  require_frames(p, frames);
  std::vector<Tensor> out;
  out.reserve(frames.size());
  for (const Tensor& f : frames) {
    const Tensor h = input_map_values(p, f);
    out.push_back(combine_values(p, h, tanh_values(h)));
  }
  return out;
}

std::vector<Tensor> truncated_rnn_values(const SeqStageParams& p, std::span<const Tensor> frames) {
  p.validate();
  require_frames(p, frames);
  std::vector<Tensor> out;
  out.reserve(frames.size());
  Tensor tanh_prev({p.d2()});
  for (const Tensor& f : frames) {
    const Tensor h = input_map_values(p, f);
    out.push_back(combine_values(p, h, tanh_prev));
    tanh_prev = tanh_values(h);
  }
  return out;
}

Tensor pool_values(std::span<const Tensor> outputs) {
  if (outputs.empty()) throw DomainError("pool of an empty output sequence");
  Tensor sum(outputs.front().shape());
  for (const Tensor& o : outputs) {
    require_same_shape(sum, o, "pool");
    K().axpy(1.0, o.data(), sum.size(), sum.data());
  }
  K().scale(sum.data(), 1.0 / static_cast<double>(outputs.size()), sum.size(), sum.data());
  return sum;
}

Tensor descriptor(Arch arch, const SeqStageParams& p, std::span<const Tensor> frames) {
  const std::vector<Tensor> out =
      arch == Arch::rnn ? rnn_values(p, frames) : fnn_values(p, frames);
  return pool_values(out);
}

SeqStageParams transplant(const SeqStageParams& p) {
  p.validate();
  return p;
}

ApproxError approx_error(const SeqStageParams& p, std::span<const Tensor> frames) {
  const std::vector<Tensor> rnn = rnn_values(p, frames);
  const std::vector<Tensor> fnn = fnn_values(p, frames);
  ApproxError e;
  e.per_step.reserve(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t)
    e.per_step.push_back(
        std::sqrt(K().squared_distance(rnn[t].data(), fnn[t].data(), rnn[t].size())));
  const Tensor pr = pool_values(rnn);
  const Tensor pf = pool_values(fnn);
  e.pooled = std::sqrt(K().squared_distance(pr.data(), pf.data(), pr.size()));
  return e;
}

void write_params(std::ostream& os, const SeqStageParams& p) {
  p.validate();
  bytes::put_magic(os, "SQSP");
  bytes::put_u32(os, kParamsVersion);
  bytes::put_u32(os, static_cast<std::uint32_t>(p.d1()));
  bytes::put_u32(os, static_cast<std::uint32_t>(p.d2()));
  for (const Tensor* t : {&p.w_i, &p.b_i, &p.w_s, &p.b_s})
    for (std::size_t i = 0; i < t->size(); ++i) bytes::put_f64(os, (*t)[i]);
  if (!os) throw IoError("failed to write sequence-stage parameters");
}

SeqStageParams read_params(std::istream& is) {
  bytes::expect_magic(is, "SQSP", "sequence-stage parameters");
  bytes::expect_version(is, kParamsVersion, "sequence-stage parameter");
  const std::uint32_t d1 = bytes::get_u32(is);
  const std::uint32_t d2 = bytes::get_u32(is);
  if (d1 == 0 || d2 == 0) throw FormatError("sequence-stage parameter file has zero dimensions");
  SeqStageParams p;
  p.w_i = Tensor({d2, d1});
  p.b_i = Tensor({d2});
  p.w_s = Tensor({d2, d2});
  p.b_s = Tensor({d2});
  for (Tensor* t : {&p.w_i, &p.b_i, &p.w_s, &p.b_s})
    for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = bytes::get_f64(is);
  if (!is) throw FormatError("sequence-stage parameter file truncated");
  return p;
}

void save_params(const std::string& path, const SeqStageParams& p) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_params(os, p);
  if (!os.flush()) throw IoError("failed to flush " + path);
}

SeqStageParams load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  SeqStageParams p = read_params(is);
  is.peek();
  if (!is.eof()) throw FormatError(path + " has trailing bytes after the parameter payload");
  return p;
}

}  // namespace seqpool::seqstage
