#pragma once

// Minimal interpreter for serialized feed-forward inference graphs, the
// plug-in format for pretrained keypoint and patch-embedding networks.
//
// File layout (little-endian):
//   bytes 0-7   magic "DSGRAPH1"
//   u32         header length L
//   L bytes     UTF-8 JSON header
//   rest        float32 parameter blob
//
// Header: {"kind": "keypoints" | "embedding",
//          "trunk": [layer...],                shared prefix, may be empty
//          "heads": {"<name>": [layer...]},    keypoints: "heatmap" and
//                                              "descriptor"; embedding:
//                                              "embedding"
//          "params": {...}}                    decoding parameters
// Layers:
//   {"op":"conv2d","in":C,"out":K,"kernel":k,"stride":s,"pad":p,
//    "weights":offset,"bias":offset}   weights K x C x k x k, offsets in floats
//   {"op":"linear","in":N,"out":M,"weights":offset,"bias":offset}
//   {"op":"relu"} {"op":"sigmoid"} {"op":"maxpool2"} {"op":"global_avg_pool"}
//   {"op":"softmax"}                   over channels, per pixel
//   {"op":"l2norm"}                    over channels, per pixel
//   {"op":"depth_to_space","block":b,"drop_last":bool}
//     rearranges b*b (+1 dustbin when drop_last) channels into a b-times
//     larger single-channel map

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace dupscan {

struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;  // CHW

  Tensor() = default;
  Tensor(int c, int h, int w) : channels(c), height(h), width(w), data(size_t(c) * h * w, 0.0f) {}
  float& at(int c, int y, int x) { return data[(size_t(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return data[(size_t(c) * height + y) * width + x]; }
};

class GraphModel {
 public:
  // Throws ModelError on unreadable, truncated or inconsistent files.
  static GraphModel load(const std::filesystem::path& path);

  const std::string& kind() const { return kind_; }
  const nlohmann::json& params() const { return params_; }
  bool has_head(const std::string& name) const { return heads_.count(name) > 0; }
  // FNV-1a over the whole file, used in index fingerprints.
  uint64_t content_hash() const { return content_hash_; }

  // Runs the trunk once; heads are evaluated on the cached trunk output.
  Tensor run_trunk(const Tensor& input) const;
  Tensor run_head(const std::string& head, const Tensor& trunk_output) const;

 private:
  Tensor run_layers(const nlohmann::json& layers, Tensor x) const;

  std::string kind_;
  nlohmann::json trunk_;
  std::map<std::string, nlohmann::json> heads_;
  nlohmann::json params_;
  std::vector<float> blob_;
  uint64_t content_hash_ = 0;
};

// Serializes a graph file; used by tooling and tests to produce models.
void write_graph_model(const std::filesystem::path& path, const nlohmann::json& header,
                       const std::vector<float>& blob);

}  // namespace dupscan
