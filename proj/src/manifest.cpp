#include "seqpool/manifest.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "seqpool/errors.hpp"

namespace seqpool::manifest {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kPrime = 0x100000001b3ull;

std::uint64_t fold(std::uint64_t h, const char* bytes, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(bytes[i]);
    h *= kPrime;
  }
  return h;
}

json refs_to_json(const std::vector<ArtifactRef>& refs) {
  json arr = json::array();
  for (const ArtifactRef& r : refs)
    arr.push_back(json{{"path", r.path}, {"hash", r.hash}, {"kind", r.kind}});
  return arr;
}

std::vector<ArtifactRef> refs_from_json(const json& arr, const char* field) {
  if (!arr.is_array()) throw FormatError(std::string("manifest field is not an array: ") + field);
  std::vector<ArtifactRef> refs;
  for (const json& item : arr) {
    ArtifactRef r;
    r.path = item.at("path").get<std::string>();
    r.hash = item.at("hash").get<std::string>();
    r.kind = item.at("kind").get<std::string>();
    refs.push_back(std::move(r));
  }
  return refs;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) { return fold(kOffset, bytes.data(), bytes.size()); }

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read file for hashing: " + path);
  std::uint64_t h = kOffset;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fold(h, buf, static_cast<std::size_t>(in.gcount()));
  return hex64(h);
}

std::string hash_tree(const std::string& root) {
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root);
  std::vector<std::string> rels;
  for (const fs::directory_entry& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    if (e.path().filename() == "manifest.json") continue;
    rels.push_back(fs::relative(e.path(), root).generic_string());
  }
  std::sort(rels.begin(), rels.end());
  std::uint64_t h = kOffset;
  for (const std::string& rel : rels) {
    h = fold(h, rel.data(), rel.size());
    h = fold(h, "\n", 1);
    const std::string fh = hash_file((fs::path(root) / rel).string());
    h = fold(h, fh.data(), fh.size());
    h = fold(h, "\n", 1);
  }
  return hex64(h);
}

std::string to_json(const RunManifest& m) {
  json j;
  j["command"] = m.command;
  j["argv"] = m.argv;
  j["seed"] = m.seed;
  j["version"] = m.version;
  j["kernel"] = m.kernel;
  j["started_at_utc"] = m.started_at_utc;
  j["wall_clock_seconds"] = m.wall_clock_seconds;
  j["config"] = m.config;
  j["inputs"] = refs_to_json(m.inputs);
  j["outputs"] = refs_to_json(m.outputs);
  return j.dump(2) + "\n";
}

RunManifest from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  try {
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.version = j.at("version").get<std::string>();
    m.kernel = j.at("kernel").get<std::string>();
    m.started_at_utc = j.at("started_at_utc").get<std::string>();
    m.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    m.config = j.at("config").get<std::map<std::string, std::string>>();
    m.inputs = refs_from_json(j.at("inputs"), "inputs");
    m.outputs = refs_from_json(j.at("outputs"), "outputs");
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest field missing or mistyped: ") + e.what());
  }
}

void save_manifest(const std::string& path, const RunManifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest: " + path);
  out << to_json(m);
  if (!out) throw IoError("short write on manifest: " + path);
}

RunManifest load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read manifest: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json(text);
}

std::string iso8601_utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

}  // namespace seqpool::manifest
