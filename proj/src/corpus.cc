#include "dupscan/corpus.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dupscan/errors.h"
#include "dupscan/rng.h"
#include "json.hpp"

namespace dupscan {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<CharRegion> kNoRegions;

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("file not found: " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json_file(const json& doc, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << doc.dump(1) << "\n";
}

std::string require_string(const json& rec, const char* key, const std::string& where) {
  if (!rec.contains(key) || !rec[key].is_string()) {
    throw DataError(where + ": missing or non-string field '" + key + "'");
  }
  return rec[key].get<std::string>();
}

double require_number(const json& rec, const char* key, const std::string& where) {
  if (!rec.contains(key) || !rec[key].is_number()) {
    throw DataError(where + ": missing or non-numeric field '" + key + "'");
  }
  return rec[key].get<double>();
}

Rect parse_box(const json& entry, const std::string& where) {
  if (entry.contains("quad")) {
    const json& quad = entry["quad"];
    if (!quad.is_array() || quad.size() != 4) throw DataError(where + ": quad needs 4 points");
    double x0 = INFINITY, y0 = INFINITY, x1 = -INFINITY, y1 = -INFINITY;
    for (const json& pt : quad) {
      if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number() || !pt[1].is_number()) {
        throw DataError(where + ": quad point must be [x, y]");
      }
      x0 = std::min(x0, pt[0].get<double>());
      x1 = std::max(x1, pt[0].get<double>());
      y0 = std::min(y0, pt[1].get<double>());
      y1 = std::max(y1, pt[1].get<double>());
    }
    return {x0, y0, x1 - x0, y1 - y0};
  }
  return {require_number(entry, "x", where), require_number(entry, "y", where),
          require_number(entry, "w", where), require_number(entry, "h", where)};
}

}  // namespace

Corpus::Corpus(std::vector<ImageRecord> images,
               std::map<std::string, std::vector<CharRegion>> regions,
               std::optional<GroundTruth> ground_truth,
               std::map<std::string, PlantedTransform> planted)
    : images_(std::move(images)),
      regions_(std::move(regions)),
      ground_truth_(std::move(ground_truth)),
      planted_(std::move(planted)) {
  validate();
}

void Corpus::validate() {
  by_id_.clear();
  groups_.clear();
  for (size_t i = 0; i < images_.size(); ++i) {
    const ImageRecord& rec = images_[i];
    if (rec.id.empty()) throw DataError("image with empty id");
    if (!by_id_.emplace(rec.id, i).second) throw DataError("duplicate image id: " + rec.id);
    if (rec.width() < kMinImageSide || rec.height() < kMinImageSide) {
      throw DataError("image " + rec.id + " is smaller than " + std::to_string(kMinImageSide) +
                      " px per side");
    }
    groups_[rec.group].push_back(rec.id);
  }
  for (auto& [g, ids] : groups_) std::sort(ids.begin(), ids.end());

  for (auto& [id, list] : regions_) {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw DataError("annotations reference unknown image id: " + id);
    const ImageRecord& rec = images_[it->second];
    for (CharRegion& r : list) {
      if (r.image_id.empty()) r.image_id = id;
      if (r.image_id != id) throw DataError("region listed under " + id + " names " + r.image_id);
      const Rect& b = r.box;
      if (!(b.w > 0 && b.h > 0) || b.x < 0 || b.y < 0 || b.right() > rec.width() ||
          b.bottom() > rec.height()) {
        std::ostringstream msg;
        msg << "region (" << b.x << ", " << b.y << ", " << b.w << ", " << b.h
            << ") out of bounds for image " << id << " (" << rec.width() << "x" << rec.height()
            << ")";
        throw DataError(msg.str());
      }
    }
  }
  for (auto it = regions_.begin(); it != regions_.end();) {
    it = it->second.empty() ? regions_.erase(it) : std::next(it);
  }

  if (ground_truth_) {
    for (const auto& [query, dups] : *ground_truth_) {
      if (!contains(query)) throw DataError("ground truth references unknown image id: " + query);
      for (const std::string& d : dups) {
        if (!contains(d)) throw DataError("ground truth references unknown image id: " + d);
        if (image(d).group != image(query).group) {
          throw DataError("ground-truth pair " + query + " / " + d + " spans two groups");
        }
      }
    }
  }
  for (const auto& [id, p] : planted_) {
    if (!contains(id) || !contains(p.base_id)) {
      throw DataError("planted transform references unknown image id: " + id);
    }
  }
}

const ImageRecord& Corpus::image(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw DataError("unknown image id: " + id);
  return images_[it->second];
}

const std::vector<CharRegion>& Corpus::regions_of(const std::string& id) const {
  auto it = regions_.find(id);
  return it == regions_.end() ? kNoRegions : it->second;
}

Corpus Corpus::without_regions() const { return Corpus(images_, {}, ground_truth_, planted_); }

const std::string& group_of(const Corpus& corpus, const std::string& image_id) {
  return corpus.image(image_id).group;
}

Corpus load_corpus(const fs::path& manifest, const std::optional<fs::path>& annotations,
                   const std::optional<fs::path>& ground_truth,
                   const std::optional<fs::path>& planted) {
  std::ifstream in(manifest);
  if (!in) throw DataError("manifest not found: " + manifest.string());
  const fs::path base_dir = manifest.parent_path();

  std::vector<ImageRecord> images;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = manifest.string() + ":" + std::to_string(line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception&) {
      throw DataError(where + ": malformed record");
    }
    if (!rec.is_object()) throw DataError(where + ": malformed record");
    ImageRecord image;
    image.id = require_string(rec, "id", where);
    image.group = require_string(rec, "group", where);
    const fs::path rel = require_string(rec, "path", where);
    if (!seen.insert(image.id).second) throw DataError(where + ": duplicate id " + image.id);
    image.source_path = rel.is_absolute() ? rel : base_dir / rel;
    image.image = read_png(image.source_path);
    images.push_back(std::move(image));
  }

  std::map<std::string, std::vector<CharRegion>> regions;
  if (annotations) {
    const json doc = read_json_file(*annotations);
    if (!doc.is_object()) throw DataError(annotations->string() + ": expected an object");
    for (const auto& [id, list] : doc.items()) {
      const std::string where = annotations->string() + " [" + id + "]";
      if (!list.is_array()) throw DataError(where + ": expected an array of regions");
      std::vector<CharRegion>& out = regions[id];
      for (const json& entry : list) {
        CharRegion r{id, parse_box(entry, where), std::nullopt};
        if (entry.contains("label") && entry["label"].is_string()) {
          r.label = entry["label"].get<std::string>();
        }
        out.push_back(std::move(r));
      }
    }
  }

  std::optional<GroundTruth> truth;
  if (ground_truth) {
    const json doc = read_json_file(*ground_truth);
    if (!doc.is_object()) throw DataError(ground_truth->string() + ": expected an object");
    truth.emplace();
    for (const auto& [id, list] : doc.items()) {
      if (!list.is_array()) throw DataError(ground_truth->string() + ": expected id arrays");
      auto& dups = (*truth)[id];
      for (const json& d : list) {
        if (!d.is_string()) throw DataError(ground_truth->string() + ": ids must be strings");
        dups.insert(d.get<std::string>());
      }
    }
  }

  std::map<std::string, PlantedTransform> planted_map;
  if (planted) {
    const json doc = read_json_file(*planted);
    for (const auto& [id, entry] : doc.items()) {
      const json& m = entry.at("matrix");
      if (!m.is_array() || m.size() != 6) throw DataError(planted->string() + ": bad matrix");
      PlantedTransform t;
      t.base_id = entry.at("base").get<std::string>();
      for (int i = 0; i < 6; ++i) t.base_to_image.m[i] = m[i].get<double>();
      planted_map.emplace(id, std::move(t));
    }
  }

  return Corpus(std::move(images), std::move(regions), std::move(truth), std::move(planted_map));
}

Corpus load_corpus_dir(const fs::path& dir) {
  auto optional_file = [&](const char* name) -> std::optional<fs::path> {
    const fs::path p = dir / name;
    return fs::exists(p) ? std::optional<fs::path>(p) : std::nullopt;
  };
  return load_corpus(dir / "manifest.jsonl", optional_file("annotations.json"),
                     optional_file("ground_truth.json"), optional_file("planted.json"));
}

void write_corpus(const Corpus& corpus, const fs::path& dir) {
  fs::create_directories(dir / "images");
  std::ofstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw DataError("cannot write manifest in " + dir.string());
  for (const ImageRecord& rec : corpus.images()) {
    const std::string rel = "images/" + rec.id + ".png";
    write_png(rec.image, dir / rel);
    manifest << json{{"id", rec.id}, {"group", rec.group}, {"path", rel}}.dump() << "\n";
  }

  json annotations = json::object();
  for (const auto& [id, list] : corpus.regions()) {
    json arr = json::array();
    for (const CharRegion& r : list) {
      json e{{"x", r.box.x}, {"y", r.box.y}, {"w", r.box.w}, {"h", r.box.h}};
      if (r.label) e["label"] = *r.label;
      arr.push_back(std::move(e));
    }
    annotations[id] = std::move(arr);
  }
  write_json_file(annotations, dir / "annotations.json");

  if (corpus.ground_truth()) {
    json truth = json::object();
    for (const auto& [q, dups] : *corpus.ground_truth()) truth[q] = dups;
    write_json_file(truth, dir / "ground_truth.json");
  }
  if (!corpus.planted().empty()) {
    json planted = json::object();
    for (const auto& [id, t] : corpus.planted()) {
      planted[id] = {{"base", t.base_id}, {"matrix", t.base_to_image.m}};
    }
    write_json_file(planted, dir / "planted.json");
  }
}

uint64_t corpus_hash(const Corpus& corpus) {
  Fnv1a h;
  for (const ImageRecord& rec : corpus.images()) {
    h.update(rec.id).update(rec.group);
    h.update_u64(static_cast<uint64_t>(rec.width())).update_u64(static_cast<uint64_t>(rec.height()));
    for (float p : rec.image.pixels()) h.update(&p, sizeof p);
  }
  return h.digest();
}

}  // namespace dupscan
