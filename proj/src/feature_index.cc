#include "dupscan/feature_index.h"

#include <bit>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <mutex>

#include "dupscan/errors.h"
#include "dupscan/parallel.h"
#include "json.hpp"

namespace dupscan {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kHeaderName = "header.json";
constexpr const char* kFormat = "dupscan-index";
constexpr int kVersion = 1;

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<uint32_t>(f)); }

class Reader {
 public:
  Reader(const std::vector<unsigned char>& bytes, const fs::path& path) : bytes_(bytes), path_(path) {}
  uint32_t u32() {
    need(4);
    const unsigned char* p = bytes_.data() + pos_;
    pos_ += 4;
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(size_t n) {
    if (pos_ + n > bytes_.size()) throw DataError("truncated index record: " + path_.string());
  }
  const std::vector<unsigned char>& bytes_;
  const fs::path& path_;
  size_t pos_ = 0;
};

json read_header(const fs::path& dir) {
  const fs::path path = dir / kHeaderName;
  std::ifstream in(path);
  if (!in) throw DataError("index header not found: " + path.string());
  json header;
  try {
    header = json::parse(in);
  } catch (const json::exception&) {
    throw DataError("corrupt index header: " + path.string());
  }
  if (!header.is_object() || header.value("format", "") != kFormat ||
      header.value("version", 0) != kVersion || !header.contains("fingerprint") ||
      !header["fingerprint"].is_string() || !header.contains("corpus_hash") ||
      !header["corpus_hash"].is_string() || !header.contains("entries") ||
      !header["entries"].is_array() || !header.contains("dim") || !header["dim"].is_number_integer()) {
    throw DataError("corrupt index header: " + path.string());
  }
  return header;
}

ImageFeatures read_record(const fs::path& path, int dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("index record missing: " + path.string());
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                         std::istreambuf_iterator<char>()};
  Reader r(bytes, path);
  const uint32_t n = r.u32();
  ImageFeatures f;
  f.keypoints.resize(n);
  for (Keypoint& kp : f.keypoints) {
    kp.x = r.f32();
    kp.y = r.f32();
    kp.scale = r.f32();
    kp.response = r.f32();
  }
  std::vector<float> desc(size_t(n) * dim);
  for (float& v : desc) v = r.f32();
  if (!r.done()) throw DataError("trailing bytes in index record: " + path.string());
  f.descriptors = DescriptorSet(dim, std::move(desc));
  return f;
}

}  // namespace

FeatureIndex::FeatureIndex(std::string fingerprint, std::string corpus_hash, int dim,
                           std::map<std::string, ImageFeatures> entries)
    : fingerprint_(std::move(fingerprint)),
      corpus_hash_(std::move(corpus_hash)),
      dim_(dim),
      entries_(std::move(entries)) {}

const ImageFeatures& FeatureIndex::at(const std::string& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) throw DataError("image not in feature index: " + id);
  return it->second;
}

void FeatureIndex::save(const fs::path& dir) const {
  fs::create_directories(dir);
  json entries = json::array();
  size_t i = 0;
  for (const auto& [id, f] : entries_) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.bin", i++);
    std::string out;
    put_u32(out, static_cast<uint32_t>(f.keypoints.size()));
    for (const Keypoint& kp : f.keypoints) {
      put_f32(out, kp.x);
      put_f32(out, kp.y);
      put_f32(out, kp.scale);
      put_f32(out, kp.response);
    }
    for (size_t r = 0; r < f.descriptors.size(); ++r) {
      for (float v : f.descriptors.row(r)) put_f32(out, v);
    }
    std::ofstream file(dir / name, std::ios::binary | std::ios::trunc);
    if (!file) throw DataError("cannot write index record: " + (dir / name).string());
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    entries.push_back({{"id", id}, {"file", name}, {"n", f.keypoints.size()}});
  }
  const json header{{"format", kFormat},           {"version", kVersion},
                    {"fingerprint", fingerprint_}, {"corpus_hash", corpus_hash_},
                    {"dim", dim_},                 {"count", entries_.size()},
                    {"entries", std::move(entries)}};
  // Header last: a directory without one is treated as missing.
  std::ofstream out(dir / kHeaderName, std::ios::trunc);
  if (!out) throw DataError("cannot write index header in " + dir.string());
  out << header.dump(1) << "\n";
}

std::string corpus_hash_hex(const Corpus& corpus) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(corpus_hash(corpus)));
  return buf;
}

FeatureIndex compute_index(const Corpus& corpus, const FeatureExtractor& extractor, int workers) {
  const auto& images = corpus.images();
  std::vector<ImageFeatures> features(images.size());
  parallel_for(images.size(), workers, [&](size_t i) { features[i] = extractor.extract(images[i].image); });
  std::map<std::string, ImageFeatures> entries;
  int dim = extractor.backend().kind == FeatureBackendKind::kBuiltinClassical ? kBuiltinDescriptorDim : 0;
  for (size_t i = 0; i < images.size(); ++i) {
    if (dim == 0 && features[i].descriptors.dim() > 0) dim = features[i].descriptors.dim();
    entries.emplace(images[i].id, std::move(features[i]));
  }
  for (auto& [id, f] : entries) {
    if (f.descriptors.dim() == 0) f.descriptors = DescriptorSet(dim);
  }
  return FeatureIndex(extractor.fingerprint(), corpus_hash_hex(corpus), dim, std::move(entries));
}

FeatureIndex build_index(const Corpus& corpus, const FeatureBackend& backend, const fs::path& index_dir,
                         int workers) {
  const FeatureExtractor extractor(backend);
  FeatureIndex index = compute_index(corpus, extractor, workers);
  index.save(index_dir);
  return index;
}

FeatureIndex load_index(const fs::path& index_dir, const FeatureBackend& backend, const Corpus& corpus) {
  const json header = read_header(index_dir);
  const std::string expected_fp = backend.fingerprint();
  if (header["fingerprint"] != expected_fp) {
    throw StaleIndexError("stale feature index " + index_dir.string() + ": built with '" +
                          header["fingerprint"].get<std::string>() + "', expected '" + expected_fp + "'");
  }
  const std::string expected_hash = corpus_hash_hex(corpus);
  if (header["corpus_hash"] != expected_hash) {
    throw StaleIndexError("stale feature index " + index_dir.string() + ": built for corpus " +
                          header["corpus_hash"].get<std::string>() + ", current corpus is " + expected_hash);
  }
  const int dim = header["dim"];
  std::map<std::string, ImageFeatures> entries;
  for (const json& e : header["entries"]) {
    if (!e.contains("id") || !e.contains("file") || !e["id"].is_string() || !e["file"].is_string()) {
      throw DataError("corrupt index header: " + (index_dir / kHeaderName).string());
    }
    ImageFeatures f = read_record(index_dir / e["file"].get<std::string>(), dim);
    if (e.contains("n") && e["n"] != f.keypoints.size()) {
      throw DataError("index record size mismatch: " + (index_dir / e["file"].get<std::string>()).string());
    }
    entries.emplace(e["id"].get<std::string>(), std::move(f));
  }
  for (const ImageRecord& rec : corpus.images()) {
    if (!entries.count(rec.id)) throw StaleIndexError("feature index lacks image " + rec.id);
  }
  return FeatureIndex(expected_fp, expected_hash, dim, std::move(entries));
}

IndexState probe_index(const fs::path& index_dir, const FeatureBackend& backend, const Corpus& corpus) {
  if (!fs::exists(index_dir / kHeaderName)) return IndexState::kMissing;
  const json header = read_header(index_dir);
  if (header["fingerprint"] != backend.fingerprint() || header["corpus_hash"] != corpus_hash_hex(corpus)) {
    return IndexState::kStale;
  }
  for (const json& e : header["entries"]) {
    if (!e.contains("file") || !e["file"].is_string()) {
      throw DataError("corrupt index header: " + (index_dir / kHeaderName).string());
    }
    if (!fs::exists(index_dir / e["file"].get<std::string>())) return IndexState::kStale;
  }
  return IndexState::kUpToDate;
}

}  // namespace dupscan
