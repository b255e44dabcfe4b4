#include "seqpool/encoder.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "seqpool/errors.hpp"
#include "seqpool/ops.hpp"

namespace seqpool::encoder {

namespace O = seqpool::ops;

void validate_raw_frame(const Tensor& planes) {
  if (planes.rank() != 3)
    throw FormatError("raw frame must be a {channels, height, width} tensor");
  if (planes.dim(0) != kFrameChannels)
    throw FormatError("raw frame has " + std::to_string(planes.dim(0)) +
                      " channels, expected 5 (R, G, B, flow-x, flow-y)");
  const std::size_t hw = planes.dim(1) * planes.dim(2);
  for (std::size_t i = 0; i < 3 * hw; ++i)
    if (planes[i] < 0.0 || planes[i] > 1.0)
      throw FormatError("raw frame color value outside [0, 1]");
  for (std::size_t i = 3 * hw; i < 5 * hw; ++i)
    if (planes[i] < -1.0 || planes[i] > 1.0)
      throw FormatError("raw frame flow value outside [-1, 1]");
}

void EncoderConfig::validate() const {
  if (feature_dim == 0) throw ConfigError("encoder feature dimension must be positive");
  if (kernel < 1) throw ConfigError("encoder kernel size must be positive");
  std::size_t h = height, w = width;
  for (std::size_t block = 0; block < conv_channels.size(); ++block) {
    if (conv_channels[block] == 0) throw ConfigError("encoder block has zero channels");
    if (h < kernel || w < kernel)
      throw ConfigError("encoder input " + std::to_string(height) + "x" + std::to_string(width) +
                        " is too small for block " + std::to_string(block));
    h = (h - kernel + 1) / 2;
    w = (w - kernel + 1) / 2;
    if (h == 0 || w == 0)
      throw ConfigError("encoder spatial size vanishes at block " + std::to_string(block));
  }
}

std::size_t EncoderConfig::flattened() const {
  std::size_t h = height, w = width, c = kFrameChannels;
  for (const std::size_t out : conv_channels) {
    h = (h - kernel + 1) / 2;
    w = (w - kernel + 1) / 2;
    c = out;
  }
  return c * h * w;
}

EncoderParams EncoderParams::init(const EncoderConfig& config, RngStream& rng) {
  config.validate();
  EncoderParams p;
  p.config = config;
  std::size_t c_in = kFrameChannels;
  for (const std::size_t c_out : config.conv_channels) {
    const double bound =
        1.0 / std::sqrt(static_cast<double>(c_in * config.kernel * config.kernel));
    p.kernels.push_back(
        random_uniform({c_out, c_in, config.kernel, config.kernel}, rng, -bound, bound));
    p.kernel_biases.push_back(random_uniform({c_out}, rng, -bound, bound));
    c_in = c_out;
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.flattened()));
  p.w_out = random_uniform({config.feature_dim, config.flattened()}, rng, -bound, bound);
  p.b_out = random_uniform({config.feature_dim}, rng, -bound, bound);
  return p;
}

EncoderVars EncoderVars::bind(Graph& g, const EncoderParams& p) {
  EncoderVars v;
  for (const Tensor& k : p.kernels) v.kernels.push_back(g.parameter(k));
  for (const Tensor& b : p.kernel_biases) v.kernel_biases.push_back(g.parameter(b));
  v.w_out = g.parameter(p.w_out);
  v.b_out = g.parameter(p.b_out);
  return v;
}

EncoderParams EncoderVars::read_back(const EncoderConfig& config) const {
  EncoderParams p;
  p.config = config;
  for (const Node& k : kernels) p.kernels.push_back(k.value());
  for (const Node& b : kernel_biases) p.kernel_biases.push_back(b.value());
  p.w_out = w_out.value();
  p.b_out = b_out.value();
  return p;
}

Node encode_frame(Graph& g, const EncoderConfig& config, const EncoderVars& v, Node frame,
                  RngStream& rng, bool training) {
  (void)rng;
  (void)training;
  if (frame.shape().size() != 3 || frame.shape()[0] != kFrameChannels)
    throw FormatError("encoder input must be a 5-channel frame");
  if (frame.shape()[1] != config.height || frame.shape()[2] != config.width)
    throw DimensionError("frame size does not match the encoder configuration");
  Node x = frame;
  for (std::size_t block = 0; block < v.kernels.size(); ++block) {
    x = O::conv2d(g, x, v.kernels[block], v.kernel_biases[block]);
    x = O::maxpool2(g, O::tanh_elem(g, x));
  }
  return O::affine(g, v.w_out, O::flatten(g, x), v.b_out);
}

Tensor encode_frame_values(const EncoderParams& p, const Tensor& planes) {
  Graph g;
  EncoderVars v;
  for (const Tensor& k : p.kernels) v.kernels.push_back(g.constant(k));
  for (const Tensor& b : p.kernel_biases) v.kernel_biases.push_back(g.constant(b));
  v.w_out = g.constant(p.w_out);
  v.b_out = g.constant(p.b_out);
  RngStream unused(0);
  return encode_frame(g, p.config, v, g.constant(planes), unused, false).value();
}

Tensor encode_passthrough(const Tensor& feature, std::size_t d1) {
  if (feature.rank() != 1 || feature.dim(0) != d1)
    throw DimensionError("passthrough feature has dimension " +
                         (feature.rank() == 1 ? std::to_string(feature.dim(0)) : "rank!=1") +
                         ", expected " + std::to_string(d1));
  return feature;
}

AugmentDraw sample_augment(RngStream& rng, std::size_t frame_h, std::size_t frame_w,
                           std::size_t crop_h, std::size_t crop_w, double mirror_prob) {
  if (crop_h == 0 || crop_w == 0 || crop_h > frame_h || crop_w > frame_w)
    throw DomainError("crop " + std::to_string(crop_h) + "x" + std::to_string(crop_w) +
                      " does not fit a " + std::to_string(frame_h) + "x" +
                      std::to_string(frame_w) + " frame");
  AugmentDraw d;
  d.off_y = rng.uniform_index(frame_h - crop_h + 1);
  d.off_x = rng.uniform_index(frame_w - crop_w + 1);
  d.mirror = rng.bernoulli(mirror_prob);
  return d;
}

Tensor apply_augment(const Tensor& planes, const AugmentDraw& draw, std::size_t crop_h,
                     std::size_t crop_w) {
  if (planes.rank() != 3) throw FormatError("augment input must be a frame tensor");
  const std::size_t c = planes.dim(0), h = planes.dim(1), w = planes.dim(2);
  if (draw.off_y + crop_h > h || draw.off_x + crop_w > w)
    throw DomainError("augment draw does not fit the frame");
  Tensor out({c, crop_h, crop_w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    // Horizontal mirroring reverses columns and flips the sign of the
    // horizontal flow plane: mirrored motion runs the other way.
    const bool negate = draw.mirror && ch == kFlowXPlane;
    for (std::size_t y = 0; y < crop_h; ++y)
      for (std::size_t x = 0; x < crop_w; ++x) {
        const std::size_t src_x = draw.off_x + (draw.mirror ? crop_w - 1 - x : x);
        const double v = planes[(ch * h + draw.off_y + y) * w + src_x];
        out[(ch * crop_h + y) * crop_w + x] = negate ? -v : v;
      }
  }
  return out;
}

Tensor augment(const Tensor& planes, RngStream& rng, std::size_t crop_h, std::size_t crop_w,
               double mirror_prob) {
  if (planes.rank() != 3) throw FormatError("augment input must be a frame tensor");
  const AugmentDraw draw =
      sample_augment(rng, planes.dim(1), planes.dim(2), crop_h, crop_w, mirror_prob);
  return apply_augment(planes, draw, crop_h, crop_w);
}

}  // namespace seqpool::encoder
