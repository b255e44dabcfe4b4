#pragma once

// The inference bundle: the sequence stage plus either a passthrough front
// (precomputed features) or the convolutional frame encoder, tagged with the
// architecture the stage runs as. Serialized as "SQMD": magic, version u32,
// arch u32 (0 = rnn, 1 = fnn), encoder kind u32 (0 = passthrough, 1 = conv),
// the embedded stage params blob, and for conv models the encoder geometry
// (u32s) followed by its tensors as little-endian f64. The classifier head
// used during training is deliberately not part of the bundle: it is
// training-only and meaningless at retrieval time.

#include <cstdint>
#include <iosfwd>
#include <string>

#include "seqpool/dataio.hpp"
#include "seqpool/encoder.hpp"
#include "seqpool/seqstage.hpp"
#include "seqpool/tensor.hpp"

namespace seqpool::model {

struct Model {
  seqstage::Arch arch = seqstage::Arch::rnn;
  seqstage::SeqStageParams stage;
  bool has_encoder = false;  // false: items are d1 feature vectors
  encoder::EncoderParams enc;

  std::size_t d1() const { return stage.d1(); }
  std::size_t d2() const { return stage.d2(); }

  /// Throws DimensionError unless the stage blocks agree and, for conv
  /// models, the encoder output width equals the stage input width.
  void validate() const;
};

inline constexpr std::uint32_t kModelVersion = 1;

void write_model(std::ostream& os, const Model& m);
Model read_model(std::istream& is);
void save_model(const std::string& path, const Model& m);
Model load_model(const std::string& path);

/// Architecture move: flips the tag, every parameter value untouched.
Model transplant(const Model& m);

bool bit_equal(const Model& a, const Model& b);

/// Frame feature of one raw item (conv encoding or validated passthrough).
Tensor encode_item(const Model& m, const Tensor& item);

/// Full-track retrieval descriptor: encode every item, run the stage in the
/// model's architecture, mean-pool. Inference only; dropout is never active.
Tensor track_descriptor(const Model& m, const dataio::Track& track);

}  // namespace seqpool::model
