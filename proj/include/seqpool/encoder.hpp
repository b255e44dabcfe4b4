#pragma once

// Frame feature extraction: maps one raw frame to a feature vector of
// dimension d1, or passes precomputed features straight through so synthetic
// experiments can skip images entirely.
//
// A raw frame is a {5, h, w} planar tensor: R, G, B in [0,1] and
// horizontal/vertical flow in [-1,1]. The desk-scale stack is a configurable
// run of convolution+tanh+max-pool blocks followed by one affine layer.

#include <cstddef>
#include <vector>

#include "seqpool/graph.hpp"
#include "seqpool/rng.hpp"
#include "seqpool/tensor.hpp"

namespace seqpool::encoder {

inline constexpr std::size_t kFrameChannels = 5;
inline constexpr std::size_t kFlowXPlane = 3;
inline constexpr std::size_t kFlowYPlane = 4;

/// Throws FormatError unless planes is {5, h, w} with colors in [0,1] and
/// flow in [-1,1].
void validate_raw_frame(const Tensor& planes);

struct EncoderConfig {
  std::size_t height = 48;
  std::size_t width = 64;
  std::size_t kernel = 3;
  std::vector<std::size_t> conv_channels = {8, 16};  // one conv+tanh+pool block each
  std::size_t feature_dim = 128;                     // d1

  /// Throws ConfigError when the stack does not fit the input size.
  void validate() const;
  /// Flattened size entering the final affine layer.
  std::size_t flattened() const;
};

struct EncoderParams {
  EncoderConfig config;
  std::vector<Tensor> kernels;         // {c_out, c_in, k, k}
  std::vector<Tensor> kernel_biases;   // {c_out}
  Tensor w_out;                        // {d1, flattened}
  Tensor b_out;                        // {d1}

  /// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer, drawn
  /// kernel-then-bias per block, then the affine pair.
  static EncoderParams init(const EncoderConfig& config, RngStream& rng);
};

struct EncoderVars {
  std::vector<Node> kernels;
  std::vector<Node> kernel_biases;
  Node w_out;
  Node b_out;

  static EncoderVars bind(Graph& g, const EncoderParams& p);
  EncoderParams read_back(const EncoderConfig& config) const;
};

/// Differentiable encoding of one raw frame (given as a graph node). The
/// stack itself is deterministic; rng/training are part of the contract for
/// stochastic layers but the desk-scale stack draws nothing.
Node encode_frame(Graph& g, const EncoderConfig& config, const EncoderVars& v, Node frame,
                  RngStream& rng, bool training);

/// Inference-mode encoding of a frame tensor.
Tensor encode_frame_values(const EncoderParams& p, const Tensor& planes);

/// Identity wrapping of a precomputed feature; validates the dimension.
Tensor encode_passthrough(const Tensor& feature, std::size_t d1);

/// One sampled crop+mirror decision, reusable across the frames of a
/// subsequence. Draw order: row offset, column offset, mirror coin.
struct AugmentDraw {
  std::size_t off_y = 0;
  std::size_t off_x = 0;
  bool mirror = false;
};

AugmentDraw sample_augment(RngStream& rng, std::size_t frame_h, std::size_t frame_w,
                           std::size_t crop_h, std::size_t crop_w, double mirror_prob);

/// Crops to {5, crop_h, crop_w} at the drawn offset, then mirrors
/// horizontally when drawn; mirroring negates the flow-x plane.
Tensor apply_augment(const Tensor& planes, const AugmentDraw& draw, std::size_t crop_h,
                     std::size_t crop_w);

/// sample_augment + apply_augment in one step.
Tensor augment(const Tensor& planes, RngStream& rng, std::size_t crop_h, std::size_t crop_w,
               double mirror_prob);

}  // namespace seqpool::encoder
