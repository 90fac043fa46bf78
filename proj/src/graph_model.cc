#include "dupscan/graph_model.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dupscan/errors.h"
#include "dupscan/kernels.h"
#include "dupscan/rng.h"

namespace dupscan {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'D', 'S', 'G', 'R', 'A', 'P', 'H', '1'};

uint32_t read_u32_le(const unsigned char* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

float read_f32_le(const unsigned char* p) {
  const uint32_t bits = read_u32_le(p);
  return std::bit_cast<float>(bits);
}

[[noreturn]] void bad_layer(const json& layer, const std::string& why) {
  throw ModelError("graph layer " + layer.dump() + ": " + why);
}

int get_int(const json& layer, const char* key, int fallback = -1) {
  if (!layer.contains(key)) {
    if (fallback >= 0) return fallback;
    bad_layer(layer, std::string("missing '") + key + "'");
  }
  if (!layer[key].is_number_integer()) bad_layer(layer, std::string("'") + key + "' not an integer");
  return layer[key].get<int>();
}

void check_layers(const json& layers, size_t blob_size) {
  if (!layers.is_array()) throw ModelError("graph layer list must be an array");
  for (const json& layer : layers) {
    if (!layer.is_object() || !layer.contains("op") || !layer["op"].is_string()) {
      throw ModelError("graph layer without an op: " + layer.dump());
    }
    const std::string op = layer["op"];
    auto check_span = [&](const char* key, size_t count) {
      const int offset = get_int(layer, key);
      if (offset < 0 || size_t(offset) + count > blob_size) bad_layer(layer, "parameters out of range");
    };
    if (op == "conv2d") {
      const int in = get_int(layer, "in"), out = get_int(layer, "out"), k = get_int(layer, "kernel");
      if (in <= 0 || out <= 0 || k <= 0 || get_int(layer, "stride", 1) <= 0 || get_int(layer, "pad", 0) < 0) {
        bad_layer(layer, "non-positive shape");
      }
      check_span("weights", size_t(in) * out * k * k);
      check_span("bias", size_t(out));
    } else if (op == "linear") {
      const int in = get_int(layer, "in"), out = get_int(layer, "out");
      if (in <= 0 || out <= 0) bad_layer(layer, "non-positive shape");
      check_span("weights", size_t(in) * out);
      check_span("bias", size_t(out));
    } else if (op == "depth_to_space") {
      if (get_int(layer, "block") <= 0) bad_layer(layer, "block must be positive");
    } else if (op != "relu" && op != "sigmoid" && op != "maxpool2" && op != "global_avg_pool" &&
               op != "softmax" && op != "l2norm") {
      bad_layer(layer, "unknown op");
    }
  }
}

Tensor conv2d(const Tensor& x, const json& layer, const std::vector<float>& blob) {
  const int in = layer["in"], out = layer["out"], k = layer["kernel"];
  const int stride = layer.value("stride", 1), pad = layer.value("pad", 0);
  if (x.channels != in) bad_layer(layer, "expects " + std::to_string(in) + " input channels, got " +
                                             std::to_string(x.channels));
  const int oh = (x.height + 2 * pad - k) / stride + 1;
  const int ow = (x.width + 2 * pad - k) / stride + 1;
  if (oh <= 0 || ow <= 0) bad_layer(layer, "input smaller than kernel");
  const size_t patch = size_t(in) * k * k;
  // im2col: one row per output pixel.
  std::vector<float> cols(size_t(oh) * ow * patch, 0.0f);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      float* dst = cols.data() + (size_t(oy) * ow + ox) * patch;
      for (int c = 0; c < in; ++c) {
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride + ky - pad;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride + kx - pad;
            if (iy >= 0 && iy < x.height && ix >= 0 && ix < x.width) {
              dst[(size_t(c) * k + ky) * k + kx] = x.at(c, iy, ix);
            }
          }
        }
      }
    }
  }
  Tensor y(out, oh, ow);
  const float* weights = blob.data() + layer["weights"].get<int>();
  const float* bias = blob.data() + layer["bias"].get<int>();
  kernels::gemm_nt(weights, size_t(out), cols.data(), size_t(oh) * ow, patch, y.data.data());
  const size_t plane = size_t(oh) * ow;
  for (int c = 0; c < out; ++c) {
    for (size_t i = 0; i < plane; ++i) y.data[c * plane + i] += bias[c];
  }
  return y;
}

Tensor linear(const Tensor& x, const json& layer, const std::vector<float>& blob) {
  const int in = layer["in"], out = layer["out"];
  if (static_cast<int>(x.data.size()) != in) bad_layer(layer, "input size mismatch");
  Tensor y(out, 1, 1);
  const float* weights = blob.data() + layer["weights"].get<int>();
  const float* bias = blob.data() + layer["bias"].get<int>();
  kernels::gemm_nt(weights, size_t(out), x.data.data(), 1, size_t(in), y.data.data());
  for (int i = 0; i < out; ++i) y.data[i] += bias[i];
  return y;
}

Tensor maxpool2(const Tensor& x) {
  Tensor y(x.channels, x.height / 2, x.width / 2);
  for (int c = 0; c < y.channels; ++c)
    for (int i = 0; i < y.height; ++i)
      for (int j = 0; j < y.width; ++j)
        y.at(c, i, j) = std::max({x.at(c, 2 * i, 2 * j), x.at(c, 2 * i, 2 * j + 1),
                                  x.at(c, 2 * i + 1, 2 * j), x.at(c, 2 * i + 1, 2 * j + 1)});
  return y;
}

Tensor global_avg_pool(const Tensor& x) {
  Tensor y(x.channels, 1, 1);
  const size_t plane = size_t(x.height) * x.width;
  for (int c = 0; c < x.channels; ++c) {
    double sum = 0.0;
    for (size_t i = 0; i < plane; ++i) sum += x.data[c * plane + i];
    y.data[c] = plane ? static_cast<float>(sum / plane) : 0.0f;
  }
  return y;
}

void softmax_channels(Tensor& x) {
  for (int i = 0; i < x.height; ++i) {
    for (int j = 0; j < x.width; ++j) {
      float peak = -INFINITY;
      for (int c = 0; c < x.channels; ++c) peak = std::max(peak, x.at(c, i, j));
      double sum = 0.0;
      for (int c = 0; c < x.channels; ++c) {
        x.at(c, i, j) = std::exp(x.at(c, i, j) - peak);
        sum += x.at(c, i, j);
      }
      for (int c = 0; c < x.channels; ++c) x.at(c, i, j) = static_cast<float>(x.at(c, i, j) / sum);
    }
  }
}

void l2norm_channels(Tensor& x) {
  for (int i = 0; i < x.height; ++i) {
    for (int j = 0; j < x.width; ++j) {
      double sum = 0.0;
      for (int c = 0; c < x.channels; ++c) sum += double(x.at(c, i, j)) * x.at(c, i, j);
      const double norm = std::sqrt(sum);
      if (norm <= 0.0) continue;
      for (int c = 0; c < x.channels; ++c) x.at(c, i, j) = static_cast<float>(x.at(c, i, j) / norm);
    }
  }
}

Tensor depth_to_space(const Tensor& x, const json& layer) {
  const int b = layer["block"];
  const bool drop_last = layer.value("drop_last", false);
  if (x.channels != b * b + (drop_last ? 1 : 0)) bad_layer(layer, "channel count does not match block");
  Tensor y(1, x.height * b, x.width * b);
  for (int i = 0; i < x.height; ++i)
    for (int j = 0; j < x.width; ++j)
      for (int c = 0; c < b * b; ++c) y.at(0, i * b + c / b, j * b + c % b) = x.at(c, i, j);
  return y;
}

}  // namespace

GraphModel GraphModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot read model file: " + path.string());
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                         std::istreambuf_iterator<char>()};
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw ModelError("not a graph model file: " + path.string());
  }
  const uint32_t header_len = read_u32_le(bytes.data() + 8);
  if (12 + size_t(header_len) > bytes.size()) throw ModelError("truncated model header: " + path.string());
  const size_t blob_bytes = bytes.size() - 12 - header_len;
  if (blob_bytes % 4 != 0) throw ModelError("truncated parameter blob: " + path.string());

  GraphModel model;
  json header;
  try {
    header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
  } catch (const json::exception& e) {
    throw ModelError("malformed model header in " + path.string() + ": " + e.what());
  }
  model.blob_.resize(blob_bytes / 4);
  for (size_t i = 0; i < model.blob_.size(); ++i) {
    model.blob_[i] = read_f32_le(bytes.data() + 12 + header_len + 4 * i);
  }
  if (!header.is_object() || !header.contains("kind") || !header["kind"].is_string() ||
      !header.contains("heads") || !header["heads"].is_object()) {
    throw ModelError("model header needs 'kind' and 'heads': " + path.string());
  }
  model.kind_ = header["kind"];
  model.trunk_ = header.value("trunk", json::array());
  model.params_ = header.value("params", json::object());
  check_layers(model.trunk_, model.blob_.size());
  for (const auto& [name, layers] : header["heads"].items()) {
    check_layers(layers, model.blob_.size());
    model.heads_[name] = layers;
  }
  model.content_hash_ = Fnv1a().update(bytes.data(), bytes.size()).digest();
  return model;
}

Tensor GraphModel::run_layers(const json& layers, Tensor x) const {
  for (const json& layer : layers) {
    const std::string& op = layer["op"].get_ref<const std::string&>();
    if (op == "conv2d") {
      x = conv2d(x, layer, blob_);
    } else if (op == "linear") {
      x = linear(x, layer, blob_);
    } else if (op == "relu") {
      for (float& v : x.data) v = std::max(v, 0.0f);
    } else if (op == "sigmoid") {
      for (float& v : x.data) v = 1.0f / (1.0f + std::exp(-v));
    } else if (op == "maxpool2") {
      x = maxpool2(x);
    } else if (op == "global_avg_pool") {
      x = global_avg_pool(x);
    } else if (op == "softmax") {
      softmax_channels(x);
    } else if (op == "l2norm") {
      l2norm_channels(x);
    } else if (op == "depth_to_space") {
      x = depth_to_space(x, layer);
    }
  }
  return x;
}

Tensor GraphModel::run_trunk(const Tensor& input) const { return run_layers(trunk_, input); }

Tensor GraphModel::run_head(const std::string& head, const Tensor& trunk_output) const {
  auto it = heads_.find(head);
  if (it == heads_.end()) throw ModelError("model has no head named '" + head + "'");
  return run_layers(it->second, trunk_output);
}

void write_graph_model(const std::filesystem::path& path, const json& header,
                       const std::vector<float>& blob) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError("cannot write model file: " + path.string());
  const std::string text = header.dump();
  out.write(kMagic, 8);
  const uint32_t len = static_cast<uint32_t>(text.size());
  const unsigned char len_bytes[4] = {static_cast<unsigned char>(len), static_cast<unsigned char>(len >> 8),
                                      static_cast<unsigned char>(len >> 16),
                                      static_cast<unsigned char>(len >> 24)};
  out.write(reinterpret_cast<const char*>(len_bytes), 4);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (float f : blob) {
    const uint32_t bits = std::bit_cast<uint32_t>(f);
    const unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                static_cast<unsigned char>(bits >> 16),
                                static_cast<unsigned char>(bits >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  }
}

}  // namespace dupscan
