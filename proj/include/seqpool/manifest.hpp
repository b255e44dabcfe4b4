#pragma once

// Run manifests: every CLI command records its resolved invocation, config,
// inputs, and outputs with content hashes, so a finished run can be verified
// and reproduced bit-exactly from the manifest alone. Timestamps and
// wall-clock live here and only here; data files never carry them.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace seqpool::manifest {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// FNV-1a, 64-bit.
std::uint64_t fnv1a64(std::string_view bytes);

/// Lower-case, zero-padded 16-digit hex.
std::string hex64(std::uint64_t h);

/// FNV-1a over a file's bytes, as hex. Throws IoError when unreadable.
std::string hash_file(const std::string& path);

/// Combined hash of a directory tree: per-file hashes folded in ascending
/// relative-path order. Files named manifest.json are skipped so the hash
/// covers data content only (manifests hold timestamps by design).
std::string hash_tree(const std::string& root);

struct ArtifactRef {
  std::string path;  // relative to the manifest's directory when possible
  std::string hash;  // fnv1a64 hex of the file (or tree for directories)
  std::string kind;  // "data", "log", or "tree"
};

struct RunManifest {
  std::string command;             // subcommand name
  std::vector<std::string> argv;   // fully-resolved flags; the reproduction recipe
  std::uint64_t seed = 0;
  std::string version = std::string(kToolVersion);
  std::string kernel;              // active compute kernel name
  std::string started_at_utc;     // ISO 8601, e.g. 2024-05-01T12:00:00Z
  double wall_clock_seconds = 0.0;
  std::map<std::string, std::string> config;  // resolved key -> value snapshot
  std::vector<ArtifactRef> inputs;
  std::vector<ArtifactRef> outputs;
};

std::string to_json(const RunManifest& m);

/// Parses a manifest; throws FormatError on missing or mistyped fields.
RunManifest from_json(const std::string& text);

void save_manifest(const std::string& path, const RunManifest& m);
RunManifest load_manifest(const std::string& path);

std::string iso8601_utc_now();

}  // namespace seqpool::manifest
