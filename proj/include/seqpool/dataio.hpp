#pragma once

// Dataset model and ingestion. A dataset is a list of identities, each with
// exactly two camera tracks. Tracks hold either raw 5-channel frames
// (R, G, B, flow-x, flow-y; colors in [0,1], flow in [-1,1]) or precomputed
// feature vectors that bypass the image encoder.
//
// On-disk layout:
//   images:   root/id0007/camA/frame00012.bin   (one SQFR file per frame)
//   features: root/id0007/camA.sqft             (one SQFT file per track)
//
// All container formats are little-endian and round-trip bit-exactly.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "seqpool/rng.hpp"
#include "seqpool/tensor.hpp"

namespace seqpool::dataio {

enum class DataKind { features, images };

std::string_view kind_name(DataKind k);
DataKind kind_from_name(std::string_view name);  // throws ConfigError

/// One camera's ordered frame or feature list.
struct Track {
  std::vector<Tensor> items;

  std::size_t size() const { return items.size(); }
};

struct IdentityRecord {
  int id = 0;
  Track cam_a;
  Track cam_b;
};

struct Dataset {
  DataKind kind = DataKind::features;
  std::vector<IdentityRecord> ids;

  std::size_t size() const { return ids.size(); }

  /// Feature dimension (features) or channel/height/width (images) of the
  /// first item; validate() guarantees uniformity.
  std::size_t feature_dim() const;
  std::size_t frame_height() const;
  std::size_t frame_width() const;

  /// Throws unless every identity has two non-empty tracks of uniform shape.
  void validate() const;
};

// ---- frame file (SQFR): u32 version/height/width/channels, then
// little-endian f32 row-major channel-interleaved pixels. In memory frames
// are channel-planar {c, h, w} doubles; the codec transposes.
inline constexpr std::uint32_t kFrameVersion = 1;
void write_frame(std::ostream& os, const Tensor& planes);
Tensor read_frame(std::istream& is);

// ---- feature-track file (SQFT): u32 version, T, d1, then T*d1 f64.
inline constexpr std::uint32_t kFeatureVersion = 1;
void write_track_features(std::ostream& os, std::span<const Tensor> features);
std::vector<Tensor> read_track_features(std::istream& is);

// ---- descriptor matrix file (SQPD): u32 version, count, dim, then f64.
inline constexpr std::uint32_t kDescriptorVersion = 1;
void write_descriptor_matrix(std::ostream& os, const Tensor& matrix);
Tensor read_descriptor_matrix(std::istream& is);
void save_descriptor_matrix(const std::string& path, const Tensor& matrix);
Tensor load_descriptor_matrix(const std::string& path);

// ---- dataset tree
void save_dataset(const std::string& root, const Dataset& ds);
/// Loads a tree written by save_dataset. An empty or missing root yields an
/// empty dataset (with a warning on stderr) rather than an error.
Dataset load_dataset(const std::string& root, DataKind kind);

/// Train/test split of identity indices (into Dataset::ids), reproducible
/// from (seed, trial).
struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::uint32_t trial = 0;
  std::uint64_t seed = 0;
};

/// Half/half partition (train gets the extra identity when N is odd),
/// drawn from a stream derived as seed XOR trial.
DatasetSplit make_split(const Dataset& ds, std::uint32_t trial, std::uint64_t seed);

/// Synthetic desk-scale dataset: per identity a latent signature vector,
/// frames = signature + per-frame noise, camera B shifted by one fixed
/// global vector of the given magnitude.
struct SyntheticSpec {
  std::size_t ids = 20;
  std::size_t frames_min = 24;
  std::size_t frames_max = 24;
  std::size_t feature_dim = 32;  // features mode
  std::size_t height = 16;       // images mode
  std::size_t width = 12;
  DataKind kind = DataKind::features;
  double signal = 1.0;
  double noise = 0.1;
  double camera_shift = 0.0;
  std::uint64_t seed = 42;

  void validate() const;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

// ---- optical flow preprocessing
/// Dense Lucas-Kanade flow between two grayscale images {h, w}: per-pixel
/// least squares over an odd square window; windows whose normal matrix has
/// smallest eigenvalue below 1e-4 * window area yield zero flow. Returns
/// {2, h, w}: plane 0 = horizontal, plane 1 = vertical, in pixels.
Tensor lucas_kanade(const Tensor& a, const Tensor& b, std::size_t window);

/// Clamp to [-c, c] then divide by c, mapping into [-1, 1].
Tensor normalize_flow(const Tensor& flow, double clamp_magnitude);

/// Rec. 601 luma of a frame's color planes: 0.299 R + 0.587 G + 0.114 B.
Tensor luma(const Tensor& planes);

/// Fills the flow channels of every frame of an image dataset from each
/// consecutive luma pair (the last frame of a track keeps zero flow),
/// normalized with the given clamp.
void fill_flow(Dataset& ds, std::size_t window, double clamp_magnitude);

}  // namespace seqpool::dataio
