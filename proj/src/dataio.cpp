#include "seqpool/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>

#include "seqpool/bytes.hpp"
#include "seqpool/errors.hpp"

namespace fs = std::filesystem;

namespace seqpool::dataio {

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  return os;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return is;
}

void expect_eof(std::istream& is, const std::string& what) {
  is.peek();
  if (!is.eof()) throw FormatError(what + " has trailing bytes");
}

std::string id_dir_name(int id) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "id%04d", id);
  return buf;
}

std::string frame_file_name(std::size_t index) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "frame%05zu.bin", index);
  return buf;
}

/// Parses a decimal suffix like "id0042" -> 42; returns -1 when the name
/// does not match the prefix+digits shape.
int parse_numbered(const std::string& name, const std::string& prefix) {
  if (name.size() <= prefix.size() || name.compare(0, prefix.size(), prefix) != 0) return -1;
  int value = 0;
  for (std::size_t i = prefix.size(); i < name.size(); ++i) {
    const char c = name[i];
    if (c < '0' || c > '9') return -1;
    value = value * 10 + (c - '0');
  }
  return value;
}

Track load_image_track(const fs::path& dir) {
  std::vector<std::pair<int, fs::path>> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string stem = entry.path().stem().string();
    const int index = parse_numbered(stem, "frame");
    if (index >= 0 && entry.path().extension() == ".bin") files.emplace_back(index, entry.path());
  }
  std::sort(files.begin(), files.end());
  Track t;
  t.items.reserve(files.size());
  for (const auto& [index, path] : files) {
    std::ifstream is = open_in(path);
    t.items.push_back(read_frame(is));
    expect_eof(is, path.string());
  }
  return t;
}

Track load_feature_track(const fs::path& file) {
  std::ifstream is = open_in(file);
  Track t;
  t.items = read_track_features(is);
  expect_eof(is, file.string());
  return t;
}

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

/// Image payloads live on disk as 32-bit floats; generated values are
/// rounded through float up front so in-memory content equals a save/load
/// round trip bit-for-bit.
double as_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

std::string_view kind_name(DataKind k) {
  return k == DataKind::features ? "features" : "images";
}

DataKind kind_from_name(std::string_view name) {
  if (name == "features") return DataKind::features;
  if (name == "images") return DataKind::images;
  throw ConfigError("unknown dataset kind \"" + std::string(name) +
                    "\" (expected features or images)");
}

std::size_t Dataset::feature_dim() const {
  if (kind != DataKind::features || ids.empty()) throw DomainError("not a feature dataset");
  return ids.front().cam_a.items.front().dim(0);
}

std::size_t Dataset::frame_height() const {
  if (kind != DataKind::images || ids.empty()) throw DomainError("not an image dataset");
  return ids.front().cam_a.items.front().dim(1);
}

std::size_t Dataset::frame_width() const {
  if (kind != DataKind::images || ids.empty()) throw DomainError("not an image dataset");
  return ids.front().cam_a.items.front().dim(2);
}

void Dataset::validate() const {
  const Tensor* first = nullptr;
  for (const IdentityRecord& rec : ids) {
    for (const Track* track : {&rec.cam_a, &rec.cam_b}) {
      if (track->items.empty())
        throw FormatError("identity " + std::to_string(rec.id) + " has an empty camera track");
      for (const Tensor& item : track->items) {
        if (!first) first = &item;
        if (kind == DataKind::features && item.rank() != 1)
          throw FormatError("feature dataset contains a non-vector item");
        if (kind == DataKind::images) {
          if (item.rank() != 3 || item.dim(0) != 5)
            throw FormatError("image dataset contains a frame without 5 channel planes");
          const std::size_t hw = item.dim(1) * item.dim(2);
          for (std::size_t i = 0; i < 3 * hw; ++i)
            if (item[i] < 0.0 || item[i] > 1.0)
              throw FormatError("identity " + std::to_string(rec.id) +
                                " has a color value outside [0, 1]");
          for (std::size_t i = 3 * hw; i < 5 * hw; ++i)
            if (item[i] < -1.0 || item[i] > 1.0)
              throw FormatError("identity " + std::to_string(rec.id) +
                                " has a flow value outside [-1, 1]");
        }
        if (!item.same_shape(*first))
          throw FormatError("identity " + std::to_string(rec.id) +
                            " has items of mismatched dimensions");
      }
    }
  }
}

void write_frame(std::ostream& os, const Tensor& planes) {
  require_rank(planes, 3, "frame");
  const std::size_t c = planes.dim(0), h = planes.dim(1), w = planes.dim(2);
  bytes::put_magic(os, "SQFR");
  bytes::put_u32(os, kFrameVersion);
  bytes::put_u32(os, static_cast<std::uint32_t>(h));
  bytes::put_u32(os, static_cast<std::uint32_t>(w));
  bytes::put_u32(os, static_cast<std::uint32_t>(c));
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch)
        bytes::put_f32(os, static_cast<float>(planes[(ch * h + y) * w + x]));
  if (!os) throw IoError("failed to write frame");
}

Tensor read_frame(std::istream& is) {
  bytes::expect_magic(is, "SQFR", "frame");
  bytes::expect_version(is, kFrameVersion, "frame");
  const std::uint32_t h = bytes::get_u32(is);
  const std::uint32_t w = bytes::get_u32(is);
  const std::uint32_t c = bytes::get_u32(is);
  if (h == 0 || w == 0 || c == 0) throw FormatError("frame file has zero dimensions");
  Tensor planes({c, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch)
        planes[(ch * h + y) * w + x] = static_cast<double>(bytes::get_f32(is));
  if (!is) throw FormatError("frame file truncated");
  if (!planes.all_finite()) throw FormatError("frame file contains non-finite pixels");
  return planes;
}

void write_track_features(std::ostream& os, std::span<const Tensor> features) {
  if (features.empty()) throw DomainError("cannot write an empty feature track");
  const std::size_t d = features.front().dim(0);
  bytes::put_magic(os, "SQFT");
  bytes::put_u32(os, kFeatureVersion);
  bytes::put_u32(os, static_cast<std::uint32_t>(features.size()));
  bytes::put_u32(os, static_cast<std::uint32_t>(d));
  for (const Tensor& f : features) {
    require_rank(f, 1, "feature");
    if (f.dim(0) != d) throw DimensionError("feature track has mixed dimensions");
    for (std::size_t i = 0; i < d; ++i) bytes::put_f64(os, f[i]);
  }
  if (!os) throw IoError("failed to write feature track");
}

std::vector<Tensor> read_track_features(std::istream& is) {
  bytes::expect_magic(is, "SQFT", "feature track");
  bytes::expect_version(is, kFeatureVersion, "feature track");
  const std::uint32_t t = bytes::get_u32(is);
  const std::uint32_t d = bytes::get_u32(is);
  if (t == 0 || d == 0) throw FormatError("feature track file has zero dimensions");
  std::vector<Tensor> features;
  features.reserve(t);
  for (std::uint32_t i = 0; i < t; ++i) {
    Tensor f({d});
    for (std::uint32_t j = 0; j < d; ++j) f[j] = bytes::get_f64(is);
    features.push_back(std::move(f));
  }
  if (!is) throw FormatError("feature track file truncated");
  for (const Tensor& f : features)
    if (!f.all_finite()) throw FormatError("feature track contains non-finite values");
  return features;
}

void write_descriptor_matrix(std::ostream& os, const Tensor& matrix) {
  require_rank(matrix, 2, "descriptor matrix");
  if (matrix.dim(0) == 0 || matrix.dim(1) == 0)
    throw DomainError("descriptor matrix must be non-empty");
  bytes::put_magic(os, "SQPD");
  bytes::put_u32(os, kDescriptorVersion);
  bytes::put_u32(os, static_cast<std::uint32_t>(matrix.dim(0)));
  bytes::put_u32(os, static_cast<std::uint32_t>(matrix.dim(1)));
  for (std::size_t i = 0; i < matrix.size(); ++i) bytes::put_f64(os, matrix[i]);
  if (!os) throw IoError("failed to write descriptor matrix");
}

Tensor read_descriptor_matrix(std::istream& is) {
  bytes::expect_magic(is, "SQPD", "descriptor matrix");
  bytes::expect_version(is, kDescriptorVersion, "descriptor matrix");
  const std::uint32_t count = bytes::get_u32(is);
  const std::uint32_t dim = bytes::get_u32(is);
  if (count == 0 || dim == 0) throw FormatError("descriptor matrix file has zero dimensions");
  Tensor m({count, dim});
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = bytes::get_f64(is);
  if (!is) throw FormatError("descriptor matrix file truncated");
  return m;
}

void save_descriptor_matrix(const std::string& path, const Tensor& matrix) {
  std::ofstream os = open_out(path);
  write_descriptor_matrix(os, matrix);
  if (!os.flush()) throw IoError("failed to flush " + path);
}

Tensor load_descriptor_matrix(const std::string& path) {
  std::ifstream is = open_in(path);
  Tensor m = read_descriptor_matrix(is);
  expect_eof(is, path);
  return m;
}

void save_dataset(const std::string& root, const Dataset& ds) {
  ds.validate();
  fs::create_directories(root);
  for (const IdentityRecord& rec : ds.ids) {
    const fs::path id_dir = fs::path(root) / id_dir_name(rec.id);
    if (ds.kind == DataKind::images) {
      for (const auto& [cam, track] :
           {std::pair{"camA", &rec.cam_a}, std::pair{"camB", &rec.cam_b}}) {
        fs::create_directories(id_dir / cam);
        for (std::size_t i = 0; i < track->items.size(); ++i) {
          std::ofstream os = open_out(id_dir / cam / frame_file_name(i));
          write_frame(os, track->items[i]);
        }
      }
    } else {
      fs::create_directories(id_dir);
      for (const auto& [cam, track] :
           {std::pair{"camA.sqft", &rec.cam_a}, std::pair{"camB.sqft", &rec.cam_b}}) {
        std::ofstream os = open_out(id_dir / cam);
        write_track_features(os, track->items);
      }
    }
  }
}

Dataset load_dataset(const std::string& root, DataKind kind) {
  Dataset ds;
  ds.kind = kind;
  if (!fs::exists(root) || fs::is_empty(root)) {
    std::cerr << "warning: dataset root " << root << " is empty\n";
    return ds;
  }
  std::vector<std::pair<int, fs::path>> id_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const int id = parse_numbered(entry.path().filename().string(), "id");
    if (id >= 0) id_dirs.emplace_back(id, entry.path());
  }
  std::sort(id_dirs.begin(), id_dirs.end());
  if (id_dirs.empty()) {
    std::cerr << "warning: dataset root " << root << " holds no identity directories\n";
    return ds;
  }
  for (const auto& [id, dir] : id_dirs) {
    IdentityRecord rec;
    rec.id = id;
    if (kind == DataKind::images) {
      for (const auto& [cam, track] :
           {std::pair{"camA", &rec.cam_a}, std::pair{"camB", &rec.cam_b}}) {
        const fs::path cam_dir = dir / cam;
        if (!fs::is_directory(cam_dir))
          throw FormatError("identity " + std::to_string(id) + " is missing camera track " +
                            cam);
        *track = load_image_track(cam_dir);
      }
    } else {
      for (const auto& [cam, track] :
           {std::pair{"camA.sqft", &rec.cam_a}, std::pair{"camB.sqft", &rec.cam_b}}) {
        const fs::path file = dir / cam;
        if (!fs::is_regular_file(file))
          throw FormatError("identity " + std::to_string(id) + " is missing camera track " +
                            cam);
        *track = load_feature_track(file);
      }
    }
    ds.ids.push_back(std::move(rec));
  }
  ds.validate();
  return ds;
}

DatasetSplit make_split(const Dataset& ds, std::uint32_t trial, std::uint64_t seed) {
  const std::size_t n = ds.size();
  if (n < 2) throw DomainError("splitting needs at least 2 identities");
  RngStream rng = RngStream(seed).derive(trial);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_index(i + 1)]);
  DatasetSplit split;
  split.trial = trial;
  split.seed = seed;
  const std::size_t train_n = (n + 1) / 2;
  split.train.assign(order.begin(), order.begin() + train_n);
  split.test.assign(order.begin() + train_n, order.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

void SyntheticSpec::validate() const {
  if (ids == 0) throw ConfigError("synthetic spec needs at least one identity");
  if (frames_min == 0 || frames_min > frames_max)
    throw ConfigError("synthetic frame range is empty");
  if (noise < 0.0 || signal < 0.0 || camera_shift < 0.0)
    throw ConfigError("synthetic magnitudes must be non-negative");
  if (kind == DataKind::features ? feature_dim == 0 : (height == 0 || width == 0))
    throw ConfigError("synthetic dimensions must be positive");
}

namespace {

Dataset generate_feature_synthetic(const SyntheticSpec& spec, RngStream& rng) {
  const std::size_t d = spec.feature_dim;
  // One global camera-shift vector of L2 norm camera_shift.
  Tensor shift({d});
  double norm = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    shift[i] = rng.normal();
    norm += shift[i] * shift[i];
  }
  norm = std::sqrt(norm);
  const double shift_scale = norm > 0.0 ? spec.camera_shift / norm : 0.0;
  for (std::size_t i = 0; i < d; ++i) shift[i] *= shift_scale;

  Dataset ds;
  ds.kind = DataKind::features;
  for (std::size_t id = 0; id < spec.ids; ++id) {
    IdentityRecord rec;
    rec.id = static_cast<int>(id);
    Tensor signature({d});
    for (std::size_t i = 0; i < d; ++i) signature[i] = spec.signal * rng.normal();
    const std::size_t span = spec.frames_max - spec.frames_min + 1;
    const std::size_t len_a = spec.frames_min + rng.uniform_index(span);
    const std::size_t len_b = spec.frames_min + rng.uniform_index(span);
    for (const auto& [track, len, shifted] :
         {std::tuple{&rec.cam_a, len_a, false}, std::tuple{&rec.cam_b, len_b, true}}) {
      track->items.reserve(len);
      for (std::size_t t = 0; t < len; ++t) {
        Tensor f({d});
        for (std::size_t i = 0; i < d; ++i)
          f[i] = signature[i] + spec.noise * rng.normal() + (shifted ? shift[i] : 0.0);
        track->items.push_back(std::move(f));
      }
    }
    ds.ids.push_back(std::move(rec));
  }
  return ds;
}

Dataset generate_image_synthetic(const SyntheticSpec& spec, RngStream& rng) {
  const std::size_t h = spec.height, w = spec.width, hw = h * w;
  Dataset ds;
  ds.kind = DataKind::images;
  for (std::size_t id = 0; id < spec.ids; ++id) {
    IdentityRecord rec;
    rec.id = static_cast<int>(id);
    // Per-identity latent pattern for the three color planes.
    Tensor latent({3, h, w});
    for (std::size_t i = 0; i < latent.size(); ++i) latent[i] = spec.signal * rng.normal();
    const std::size_t span = spec.frames_max - spec.frames_min + 1;
    const std::size_t len_a = spec.frames_min + rng.uniform_index(span);
    const std::size_t len_b = spec.frames_min + rng.uniform_index(span);
    for (const auto& [track, len, shifted] :
         {std::tuple{&rec.cam_a, len_a, false}, std::tuple{&rec.cam_b, len_b, true}}) {
      track->items.reserve(len);
      for (std::size_t t = 0; t < len; ++t) {
        Tensor planes({5, h, w});
        const double cam_offset = shifted ? 0.25 * spec.camera_shift : 0.0;
        for (std::size_t ch = 0; ch < 3; ++ch)
          for (std::size_t i = 0; i < hw; ++i)
            planes[ch * hw + i] = as_f32(clamp01(0.5 + 0.25 * latent[ch * hw + i] +
                                                 0.25 * spec.noise * rng.normal() + cam_offset));
        // Flow planes start at rest; the flow pass fills them for real data.
        track->items.push_back(std::move(planes));
      }
    }
    ds.ids.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  RngStream rng(spec.seed);
  Dataset ds = spec.kind == DataKind::features ? generate_feature_synthetic(spec, rng)
                                               : generate_image_synthetic(spec, rng);
  ds.validate();
  return ds;
}

}  // namespace seqpool::dataio
