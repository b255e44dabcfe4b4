#pragma once

// The sequence-processing stage in both architectures plus temporal pooling.
//
//   recurrent (rnn):   o(t) = W_i f(t) + b_i + W_s tanh(o(t-1)) + b_s, o(0) = 0
//   feed-forward (fnn):o(t) = h(t) + W_s tanh(h(t)) + b_s,  h(t) = W_i f(t) + b_i
//   truncated rnn:     o(1) = h(1) + b_s;  o(t) = h(t) + W_s tanh(h(t-1)) + b_s
//
// The truncated form keeps exactly one step of recurrence and exists to make
// the approximation between the two architectures measurable: the pooled
// feed-forward and truncated outputs differ by exactly (1/T) W_s tanh(h(T)).
// All three variants share one parameter record, so moving weights between
// architectures is the identity on values.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seqpool/graph.hpp"
#include "seqpool/rng.hpp"
#include "seqpool/tensor.hpp"

namespace seqpool::seqstage {

/// Shared parameter record: input map W_i (d2 x d1) with bias b_i, recurrent
/// map W_s (d2 x d2) with bias b_s.
struct SeqStageParams {
  Tensor w_i;
  Tensor b_i;
  Tensor w_s;
  Tensor b_s;

  std::size_t d1() const { return w_i.dim(1); }
  std::size_t d2() const { return w_i.dim(0); }

  /// Throws DimensionError unless the four blocks are mutually consistent.
  void validate() const;

  /// Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per block,
  /// drawn in the order W_i, b_i, W_s, b_s.
  static SeqStageParams init(std::size_t d1, std::size_t d2, RngStream& rng);
};

bool bit_equal(const SeqStageParams& a, const SeqStageParams& b);

/// The four blocks bound to a graph as trainable leaves.
struct SeqStageVars {
  Node w_i;
  Node b_i;
  Node w_s;
  Node b_s;

  static SeqStageVars bind(Graph& g, const SeqStageParams& p);
  SeqStageParams read_back() const;
};

enum class Arch { rnn, fnn };

std::string_view arch_name(Arch a);
Arch arch_from_name(std::string_view name);  // throws ConfigError

struct DropoutSpec {
  double p = 0.0;
  bool training = false;
};

// Graph-level forwards. Frames are rank-1 nodes of dimension d1; outputs are
// rank-1 nodes of dimension d2, one per frame. When dropout is active every
// step draws one mask for the frame (before the W_i input) and one for the
// recurrent/tanh vector (before the W_s input), in that order, so all three
// variants consume the stream identically.
std::vector<Node> rnn_forward(Graph& g, const SeqStageVars& v, std::span<const Node> frames,
                              const DropoutSpec& drop, RngStream& rng);
std::vector<Node> fnn_forward(Graph& g, const SeqStageVars& v, std::span<const Node> frames,
                              const DropoutSpec& drop, RngStream& rng);
std::vector<Node> truncated_rnn_forward(Graph& g, const SeqStageVars& v,
                                        std::span<const Node> frames, const DropoutSpec& drop,
                                        RngStream& rng);
std::vector<Node> stage_forward(Graph& g, Arch arch, const SeqStageVars& v,
                                std::span<const Node> frames, const DropoutSpec& drop,
                                RngStream& rng);

/// Mean over time of the stage outputs (the pooled sequence descriptor).
Node pool_mean(Graph& g, std::span<const Node> outputs);

// Value-level inference (dropout always disabled, no graph built).
std::vector<Tensor> rnn_values(const SeqStageParams& p, std::span<const Tensor> frames);
std::vector<Tensor> fnn_values(const SeqStageParams& p, std::span<const Tensor> frames);
std::vector<Tensor> truncated_rnn_values(const SeqStageParams& p, std::span<const Tensor> frames);
Tensor pool_values(std::span<const Tensor> outputs);

/// pool of the chosen architecture's outputs: the matching descriptor.
Tensor descriptor(Arch arch, const SeqStageParams& p, std::span<const Tensor> frames);

/// Weight move between architectures: identity on the values.
SeqStageParams transplant(const SeqStageParams& p);

/// Per-step and pooled L2 gaps between the recurrent and feed-forward outputs
/// on one sequence, measured at inference.
struct ApproxError {
  std::vector<double> per_step;
  double pooled = 0.0;
};
ApproxError approx_error(const SeqStageParams& p, std::span<const Tensor> frames);

// Checkpoint format "SQSP": magic, version (u32), d1, d2 (u32 each), then
// W_i, b_i, W_s, b_s as little-endian 64-bit floats row-major. Round-trips
// bit-exactly.
inline constexpr std::uint32_t kParamsVersion = 1;
void write_params(std::ostream& os, const SeqStageParams& p);
SeqStageParams read_params(std::istream& is);
void save_params(const std::string& path, const SeqStageParams& p);
SeqStageParams load_params(const std::string& path);

}  // namespace seqpool::seqstage
