#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "dupscan/corpus.h"
#include "dupscan/features.h"

namespace dupscan {

// Per-image features for a whole corpus, keyed by image id and tagged with
// the backend fingerprint and corpus hash they were computed for.
//
// On disk (a directory):
//   header.json   {"format": "dupscan-index", "version": 1,
//                  "fingerprint": ..., "corpus_hash": ..., "dim": D,
//                  "count": N, "entries": [{"id", "file", "n"}...]}
//   NNNNNN.bin    little-endian: u32 N, N x (f32 x, y, scale, response),
//                 N x D f32 descriptors
class FeatureIndex {
 public:
  FeatureIndex() = default;
  FeatureIndex(std::string fingerprint, std::string corpus_hash, int dim,
               std::map<std::string, ImageFeatures> entries);

  const std::string& fingerprint() const { return fingerprint_; }
  const std::string& corpus_hash() const { return corpus_hash_; }
  int dim() const { return dim_; }
  size_t size() const { return entries_.size(); }
  bool contains(const std::string& id) const { return entries_.count(id) > 0; }
  // Throws DataError for ids that were not indexed.
  const ImageFeatures& at(const std::string& id) const;
  const std::map<std::string, ImageFeatures>& entries() const { return entries_; }

  void save(const std::filesystem::path& dir) const;

 private:
  std::string fingerprint_;
  std::string corpus_hash_;
  int dim_ = 0;
  std::map<std::string, ImageFeatures> entries_;
};

std::string corpus_hash_hex(const Corpus& corpus);

// Extracts features for every image (parallel over `workers`).
FeatureIndex compute_index(const Corpus& corpus, const FeatureExtractor& extractor, int workers = 1);

// compute_index + save. Extraction runs in parallel, writes are serialized.
FeatureIndex build_index(const Corpus& corpus, const FeatureBackend& backend,
                         const std::filesystem::path& index_dir, int workers = 1);

// Reloads a saved index. Throws StaleIndexError when the fingerprint or
// corpus hash differ from the expected ones, DataError when files are
// missing or corrupt (the message names the offending file).
FeatureIndex load_index(const std::filesystem::path& index_dir, const FeatureBackend& backend,
                        const Corpus& corpus);

enum class IndexState { kMissing, kUpToDate, kStale };

// Reads only the header. Throws DataError when the header is corrupt.
IndexState probe_index(const std::filesystem::path& index_dir, const FeatureBackend& backend,
                       const Corpus& corpus);

}  // namespace dupscan
