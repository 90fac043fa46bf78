#include "dupscan/config.h"

#include <fstream>
#include <set>

#include "dupscan/errors.h"

namespace dupscan {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError("config section '" + where + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown config key '" + where + "." + key + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + where + "." + key + "' has the wrong type");
  }
}

json optional_path(const std::optional<std::filesystem::path>& p) {
  return p ? json(p->string()) : json(nullptr);
}

void read_path(const json& obj, std::optional<std::filesystem::path>& out) {
  if (!obj.contains("model_path")) return;
  if (obj["model_path"].is_null()) {
    out.reset();
  } else if (obj["model_path"].is_string()) {
    out = obj["model_path"].get<std::string>();
  } else {
    throw ConfigError("model_path must be a string or null");
  }
}

}  // namespace

void PipelineConfig::validate() const {
  features.validate();
  similarity.validate();
  coarse.validate();
  ransac.validate();
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("ratio must be in (0,1]");
  if (!(min_iou >= 0.0 && min_iou <= 1.0)) throw ConfigError("min_iou must be in [0,1]");
  if (k < 1) throw ConfigError("k must be >= 1");
  if (!(discovery_threshold >= 0.0 && discovery_threshold <= 1.0)) {
    throw ConfigError("discovery_threshold must be in [0,1]");
  }
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

json to_json(const PipelineConfig& c) {
  return {
      {"name", c.name},
      {"features",
       {{"backend", c.features.kind == FeatureBackendKind::kBuiltinClassical ? "builtin-classical" : "external-model"},
        {"model_path", optional_path(c.features.model_path)},
        {"max_keypoints", c.features.max_keypoints}}},
      {"matching",
       {{"ratio", c.ratio},
        {"min_matches", c.coarse.min_matches},
        {"min_match_ratio", c.coarse.min_match_ratio},
        {"min_mean_similarity", c.coarse.min_mean_similarity}}},
      {"alignment", {{"inlier_tol", c.ransac.inlier_tol}, {"max_iters", c.ransac.max_iters}, {"seed", c.ransac.seed}}},
      {"content",
       {{"backend", c.similarity.kind == SimilarityBackendKind::kBuiltinNcc ? "builtin-ncc" : "external-embedding"},
        {"model_path", optional_path(c.similarity.model_path)},
        {"patch_size", c.similarity.patch_size},
        {"min_iou", c.min_iou}}},
      {"retrieval", {{"k", c.k}, {"discovery_threshold", c.discovery_threshold}}},
      {"workers", c.workers},
  };
}

PipelineConfig config_from_json(const json& doc) {
  PipelineConfig c;
  reject_unknown(doc, {"name", "features", "matching", "alignment", "content", "retrieval", "workers"}, "config");
  read(doc, "name", c.name, "config");
  read(doc, "workers", c.workers, "config");
  if (doc.contains("features")) {
    const json& f = doc["features"];
    reject_unknown(f, {"backend", "model_path", "max_keypoints"}, "features");
    std::string backend = "builtin-classical";
    read(f, "backend", backend, "features");
    if (backend == "builtin-classical") {
      c.features.kind = FeatureBackendKind::kBuiltinClassical;
    } else if (backend == "external-model") {
      c.features.kind = FeatureBackendKind::kExternalModel;
    } else {
      throw ConfigError("unknown feature backend '" + backend + "'");
    }
    read_path(f, c.features.model_path);
    read(f, "max_keypoints", c.features.max_keypoints, "features");
  }
  if (doc.contains("matching")) {
    const json& m = doc["matching"];
    reject_unknown(m, {"ratio", "min_matches", "min_match_ratio", "min_mean_similarity"}, "matching");
    read(m, "ratio", c.ratio, "matching");
    read(m, "min_matches", c.coarse.min_matches, "matching");
    read(m, "min_match_ratio", c.coarse.min_match_ratio, "matching");
    read(m, "min_mean_similarity", c.coarse.min_mean_similarity, "matching");
  }
  if (doc.contains("alignment")) {
    const json& a = doc["alignment"];
    reject_unknown(a, {"inlier_tol", "max_iters", "seed"}, "alignment");
    read(a, "inlier_tol", c.ransac.inlier_tol, "alignment");
    read(a, "max_iters", c.ransac.max_iters, "alignment");
    read(a, "seed", c.ransac.seed, "alignment");
  }
  if (doc.contains("content")) {
    const json& ct = doc["content"];
    reject_unknown(ct, {"backend", "model_path", "patch_size", "min_iou"}, "content");
    std::string backend = "builtin-ncc";
    read(ct, "backend", backend, "content");
    if (backend == "builtin-ncc") {
      c.similarity.kind = SimilarityBackendKind::kBuiltinNcc;
    } else if (backend == "external-embedding") {
      c.similarity.kind = SimilarityBackendKind::kExternalEmbedding;
    } else {
      throw ConfigError("unknown similarity backend '" + backend + "'");
    }
    read_path(ct, c.similarity.model_path);
    read(ct, "patch_size", c.similarity.patch_size, "content");
    read(ct, "min_iou", c.min_iou, "content");
  }
  if (doc.contains("retrieval")) {
    const json& r = doc["retrieval"];
    reject_unknown(r, {"k", "discovery_threshold"}, "retrieval");
    read(r, "k", c.k, "retrieval");
    read(r, "discovery_threshold", c.discovery_threshold, "retrieval");
  }
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

}  // namespace dupscan
