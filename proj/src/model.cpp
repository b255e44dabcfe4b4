#include "seqpool/model.hpp"

#include <fstream>
#include <vector>

#include "seqpool/bytes.hpp"
#include "seqpool/errors.hpp"

namespace seqpool::model {

namespace {

constexpr std::uint32_t kArchRnn = 0;
constexpr std::uint32_t kArchFnn = 1;
constexpr std::uint32_t kEncPassthrough = 0;
constexpr std::uint32_t kEncConv = 1;

void put_tensor(std::ostream& os, const Tensor& t) {
  for (std::size_t i = 0; i < t.size(); ++i) bytes::put_f64(os, t[i]);
}

Tensor get_tensor(std::istream& is, std::vector<std::size_t> shape) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = bytes::get_f64(is);
  return t;
}

}  // namespace

void Model::validate() const {
  stage.validate();
  if (has_encoder) {
    enc.config.validate();
    if (enc.config.feature_dim != stage.d1())
      throw DimensionError("encoder emits dimension " + std::to_string(enc.config.feature_dim) +
                           " but the stage expects " + std::to_string(stage.d1()));
    if (enc.kernels.size() != enc.config.conv_channels.size() ||
        enc.kernel_biases.size() != enc.config.conv_channels.size())
      throw DimensionError("encoder block count does not match its configuration");
  }
}

void write_model(std::ostream& os, const Model& m) {
  m.validate();
  bytes::put_magic(os, "SQMD");
  bytes::put_u32(os, kModelVersion);
  bytes::put_u32(os, m.arch == seqstage::Arch::rnn ? kArchRnn : kArchFnn);
  bytes::put_u32(os, m.has_encoder ? kEncConv : kEncPassthrough);
  seqstage::write_params(os, m.stage);
  if (m.has_encoder) {
    const encoder::EncoderConfig& c = m.enc.config;
    bytes::put_u32(os, static_cast<std::uint32_t>(c.height));
    bytes::put_u32(os, static_cast<std::uint32_t>(c.width));
    bytes::put_u32(os, static_cast<std::uint32_t>(c.kernel));
    bytes::put_u32(os, static_cast<std::uint32_t>(c.feature_dim));
    bytes::put_u32(os, static_cast<std::uint32_t>(c.conv_channels.size()));
    for (const std::size_t ch : c.conv_channels)
      bytes::put_u32(os, static_cast<std::uint32_t>(ch));
    for (std::size_t b = 0; b < m.enc.kernels.size(); ++b) {
      put_tensor(os, m.enc.kernels[b]);
      put_tensor(os, m.enc.kernel_biases[b]);
    }
    put_tensor(os, m.enc.w_out);
    put_tensor(os, m.enc.b_out);
  }
  if (!os) throw IoError("failed to write model");
}

Model read_model(std::istream& is) {
  bytes::expect_magic(is, "SQMD", "model");
  bytes::expect_version(is, kModelVersion, "model");
  const std::uint32_t arch = bytes::get_u32(is);
  if (arch != kArchRnn && arch != kArchFnn)
    throw FormatError("model file has unknown architecture tag " + std::to_string(arch));
  const std::uint32_t enc_kind = bytes::get_u32(is);
  if (enc_kind != kEncPassthrough && enc_kind != kEncConv)
    throw FormatError("model file has unknown encoder kind " + std::to_string(enc_kind));

  Model m;
  m.arch = arch == kArchRnn ? seqstage::Arch::rnn : seqstage::Arch::fnn;
  m.stage = seqstage::read_params(is);
  m.has_encoder = enc_kind == kEncConv;
  if (m.has_encoder) {
    encoder::EncoderConfig c;
    c.height = bytes::get_u32(is);
    c.width = bytes::get_u32(is);
    c.kernel = bytes::get_u32(is);
    c.feature_dim = bytes::get_u32(is);
    const std::uint32_t blocks = bytes::get_u32(is);
    c.conv_channels.clear();
    for (std::uint32_t b = 0; b < blocks; ++b) c.conv_channels.push_back(bytes::get_u32(is));
    c.validate();
    m.enc.config = c;
    std::size_t c_in = encoder::kFrameChannels;
    for (const std::size_t c_out : c.conv_channels) {
      m.enc.kernels.push_back(get_tensor(is, {c_out, c_in, c.kernel, c.kernel}));
      m.enc.kernel_biases.push_back(get_tensor(is, {c_out}));
      c_in = c_out;
    }
    m.enc.w_out = get_tensor(is, {c.feature_dim, c.flattened()});
    m.enc.b_out = get_tensor(is, {c.feature_dim});
  }
  if (!is) throw FormatError("model file truncated");
  m.validate();
  return m;
}

void save_model(const std::string& path, const Model& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_model(os, m);
  if (!os.flush()) throw IoError("failed to flush " + path);
}

Model load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  Model m = read_model(is);
  is.peek();
  if (!is.eof()) throw FormatError(path + " has trailing bytes");
  return m;
}

Model transplant(const Model& m) {
  m.validate();
  Model out = m;
  out.arch = m.arch == seqstage::Arch::rnn ? seqstage::Arch::fnn : seqstage::Arch::rnn;
  return out;
}

bool bit_equal(const Model& a, const Model& b) {
  if (a.arch != b.arch || a.has_encoder != b.has_encoder) return false;
  if (!seqstage::bit_equal(a.stage, b.stage)) return false;
  if (!a.has_encoder) return true;
  if (a.enc.kernels.size() != b.enc.kernels.size()) return false;
  for (std::size_t i = 0; i < a.enc.kernels.size(); ++i) {
    if (!seqpool::bit_equal(a.enc.kernels[i], b.enc.kernels[i])) return false;
    if (!seqpool::bit_equal(a.enc.kernel_biases[i], b.enc.kernel_biases[i])) return false;
  }
  return seqpool::bit_equal(a.enc.w_out, b.enc.w_out) &&
         seqpool::bit_equal(a.enc.b_out, b.enc.b_out);
}

Tensor encode_item(const Model& m, const Tensor& item) {
  if (m.has_encoder) return encoder::encode_frame_values(m.enc, item);
  return encoder::encode_passthrough(item, m.d1());
}

Tensor track_descriptor(const Model& m, const dataio::Track& track) {
  if (track.items.empty()) throw DomainError("cannot describe an empty track");
  std::vector<Tensor> frames;
  frames.reserve(track.size());
  for (const Tensor& item : track.items) frames.push_back(encode_item(m, item));
  return seqstage::descriptor(m.arch, m.stage, frames);
}

}  // namespace seqpool::model
