#include "dupscan/corpus.h"

#include <gtest/gtest.h>

#include <set>

#include "dupscan/errors.h"
#include "dupscan/synthetic.h"
#include "test_support.h"

namespace dupscan {
namespace {

using testing::TempDir;
using testing::write_file;

void write_two_images(const TempDir& dir) {
  std::filesystem::create_directories(dir / "img");
  write_png(testing::blob_image(40, 36, 20, 18, 4), dir / "img/a.png");
  write_png(testing::blank_image(48, 32), dir / "img/b.png");
  write_file(dir / "manifest.jsonl",
             "{\"id\": \"a\", \"group\": \"g1\", \"path\": \"img/a.png\"}\n"
             "\n"
             "{\"id\": \"b\", \"group\": \"g1\", \"path\": \"img/b.png\"}\n");
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

TEST(LoadCorpus, TwoImagesNoAnnotations) {
  TempDir dir;
  write_two_images(dir);
  const Corpus c = load_corpus(dir / "manifest.jsonl");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_TRUE(c.regions().empty());
  EXPECT_EQ(c.image("a").width(), 40);
  EXPECT_EQ(c.image("b").height(), 32);
  EXPECT_FALSE(c.ground_truth().has_value());
  for (float v : c.image("b").image.pixels()) ASSERT_FLOAT_EQ(v, 1.0f);
}

TEST(LoadCorpus, MissingImageFileNamesPath) {
  TempDir dir;
  write_file(dir / "manifest.jsonl", "{\"id\": \"a\", \"group\": \"g\", \"path\": \"nope/missing.png\"}\n");
  const std::string msg = error_of([&] { load_corpus(dir / "manifest.jsonl"); });
  EXPECT_NE(msg.find("missing.png"), std::string::npos) << msg;
}

TEST(LoadCorpus, RegionOutOfBoundsNamesImage) {
  TempDir dir;
  write_two_images(dir);
  write_file(dir / "ann.json", R"({"b": [{"x": -1, "y": 2, "w": 5, "h": 5}]})");
  const std::string msg = error_of([&] { load_corpus(dir / "manifest.jsonl", dir / "ann.json"); });
  EXPECT_NE(msg.find("image b "), std::string::npos) << msg;
  EXPECT_NE(msg.find("out of bounds"), std::string::npos) << msg;
}

TEST(LoadCorpus, MalformedRecordReportsLine) {
  TempDir dir;
  write_two_images(dir);
  write_file(dir / "bad.jsonl",
             "{\"id\": \"a\", \"group\": \"g1\", \"path\": \"img/a.png\"}\n"
             "{\"id\": \"b\", \"group\": \n");
  const std::string msg = error_of([&] { load_corpus(dir / "bad.jsonl"); });
  EXPECT_NE(msg.find("bad.jsonl:2"), std::string::npos) << msg;
}

TEST(LoadCorpus, DuplicateIdRejected) {
  TempDir dir;
  write_two_images(dir);
  write_file(dir / "dup.jsonl",
             "{\"id\": \"a\", \"group\": \"g1\", \"path\": \"img/a.png\"}\n"
             "{\"id\": \"a\", \"group\": \"g1\", \"path\": \"img/b.png\"}\n");
  EXPECT_NE(error_of([&] { load_corpus(dir / "dup.jsonl"); }).find("duplicate"), std::string::npos);
}

TEST(LoadCorpus, QuadBecomesBoundingRect) {
  TempDir dir;
  write_two_images(dir);
  write_file(dir / "ann.json",
             R"({"a": [{"quad": [[2, 3], [10, 1], [12, 9], [4, 11]], "label": "x"}, {"x": 1, "y": 1, "w": 3, "h": 4}]})");
  const Corpus c = load_corpus(dir / "manifest.jsonl", dir / "ann.json");
  const auto& r = c.regions_of("a");
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].box, (Rect{2, 1, 10, 10}));
  EXPECT_EQ(r[0].label, std::optional<std::string>("x"));
  EXPECT_EQ(r[1].box, (Rect{1, 1, 3, 4}));
}

TEST(LoadCorpus, GroundTruthAcrossGroupsRejected) {
  TempDir dir;
  write_two_images(dir);
  write_file(dir / "m2.jsonl",
             "{\"id\": \"a\", \"group\": \"g1\", \"path\": \"img/a.png\"}\n"
             "{\"id\": \"b\", \"group\": \"g2\", \"path\": \"img/b.png\"}\n");
  write_file(dir / "gt.json", R"({"a": ["b"]})");
  EXPECT_THROW(load_corpus(dir / "m2.jsonl", std::nullopt, dir / "gt.json"), DataError);
}

TEST(Corpus, RejectsTinyImages) {
  std::vector<ImageRecord> imgs{{"x", "g", GrayImage(31, 40), {}}};
  EXPECT_THROW(Corpus(imgs, {}), DataError);
}

TEST(Corpus, GroupOf) {
  const Corpus c = generate_synthetic({.n_base = 3});
  EXPECT_EQ(group_of(c, "b0000"), "g00");
  EXPECT_EQ(group_of(c, "b0002_d0"), "g00");
  EXPECT_THROW(group_of(c, "nope"), DataError);
  ASSERT_EQ(c.groups().size(), 1u);
  EXPECT_EQ(c.groups().begin()->first, "g00");
}

TEST(Corpus, WriteLoadRoundTrip) {
  TempDir dir;
  const Corpus c = generate_synthetic({.seed = 5, .n_base = 4, .duplicates_per_base = 2, .fragment_fraction = 0.5,
                                       .n_groups = 2});
  write_corpus(c, dir.path());
  const Corpus back = load_corpus_dir(dir.path());
  EXPECT_TRUE(back == c);
  EXPECT_EQ(corpus_hash(back), corpus_hash(c));
  for (const ImageRecord& rec : back.images()) {
    EXPECT_EQ(rec.source_path.filename(), rec.id + ".png");
  }
}

TEST(Corpus, HashSeesPixels) {
  const Corpus c = generate_synthetic({.n_base = 2});
  std::vector<ImageRecord> imgs = c.images();
  imgs[1].image.at(3, 3) = 0.5f;
  const Corpus changed(imgs, c.regions(), c.ground_truth());
  EXPECT_NE(corpus_hash(changed), corpus_hash(c));
}

TEST(Corpus, WithoutRegionsKeepsEverythingElse) {
  const Corpus c = generate_synthetic({.n_base = 3});
  const Corpus s = c.without_regions();
  EXPECT_TRUE(s.regions().empty());
  EXPECT_EQ(s.images(), c.images());
  EXPECT_EQ(s.ground_truth(), c.ground_truth());
}

TEST(Synthetic, Deterministic) {
  const SynthConfig cfg{.seed = 11, .n_base = 5, .fragment_fraction = 0.4};
  EXPECT_TRUE(generate_synthetic(cfg) == generate_synthetic(cfg));
  SynthConfig other = cfg;
  other.seed = 12;
  EXPECT_FALSE(generate_synthetic(other) == generate_synthetic(cfg));
}

TEST(Synthetic, CountsWithoutFragments) {
  const Corpus c = generate_synthetic({.n_base = 10, .duplicates_per_base = 1, .fragment_fraction = 0});
  EXPECT_EQ(c.size(), 20u);
  ASSERT_TRUE(c.ground_truth());
  size_t pairs = 0;
  for (const auto& [q, dups] : *c.ground_truth()) pairs += dups.size();
  EXPECT_EQ(c.ground_truth()->size(), 10u);
  EXPECT_EQ(pairs, 10u);
}

TEST(Synthetic, CountsAllFragmented) {
  const Corpus c = generate_synthetic({.n_base = 4, .duplicates_per_base = 1, .fragment_fraction = 1});
  EXPECT_EQ(c.size(), 12u);
  for (const auto& [q, dups] : *c.ground_truth()) {
    EXPECT_EQ(dups.size(), 2u) << q;
    for (const std::string& d : dups) EXPECT_EQ(c.image(d).width(), 128);
  }
}

TEST(Synthetic, FragmentCountIsRounded) {
  const Corpus c = generate_synthetic({.n_base = 4, .duplicates_per_base = 2, .fragment_fraction = 0.5});
  int fragments = 0;
  for (const auto& [id, p] : c.planted()) fragments += id.find("_f") != std::string::npos;
  EXPECT_EQ(fragments, 8);          // 4 of 8 duplicates split in two
  EXPECT_EQ(c.size(), 4u + 4u + 8u);
}

TEST(Synthetic, PlantedTransformsLandInRegions) {
  const SynthConfig cfg{.seed = 3, .n_base = 12, .duplicates_per_base = 2, .fragment_fraction = 0.3};
  const Corpus c = generate_synthetic(cfg);
  const double margin = 4.0;
  int checked = 0;
  for (const auto& [id, planted] : c.planted()) {
    const ImageRecord& img = c.image(id);
    for (const CharRegion& r : c.regions_of(planted.base_id)) {
      const Point2 p = planted.base_to_image.apply(r.box.center());
      if (p.x < margin || p.y < margin || p.x > img.width() - margin || p.y > img.height() - margin) continue;
      bool inside = false;
      for (const CharRegion& t : c.regions_of(id)) inside = inside || t.box.contains(p);
      EXPECT_TRUE(inside) << id << " center " << p.x << "," << p.y;
      ++checked;
    }
  }
  EXPECT_GT(checked, 200);
}

TEST(Synthetic, GroupsPartitionImages) {
  const Corpus c = generate_synthetic({.n_base = 30, .fragment_fraction = 0.2, .n_groups = 4});
  size_t total = 0;
  std::set<std::string> seen;
  for (const auto& [g, ids] : c.groups()) {
    total += ids.size();
    for (const std::string& id : ids) EXPECT_TRUE(seen.insert(id).second) << id;
  }
  EXPECT_EQ(total, c.size());
  EXPECT_GT(c.groups().size(), 1u);
  for (const auto& [q, dups] : *c.ground_truth()) {
    for (const std::string& d : dups) EXPECT_EQ(group_of(c, q), group_of(c, d));
  }
}

TEST(Synthetic, RegionsInsideImages) {
  const Corpus c = generate_synthetic({.n_base = 10, .fragment_fraction = 0.5});
  for (const auto& [id, regions] : c.regions()) {
    const ImageRecord& img = c.image(id);
    for (const CharRegion& r : regions) {
      EXPECT_GE(r.box.x, 0);
      EXPECT_GE(r.box.y, 0);
      EXPECT_LE(r.box.right(), img.width());
      EXPECT_LE(r.box.bottom(), img.height());
      EXPECT_GT(r.box.w, 0);
    }
  }
}

TEST(Synthetic, InvalidConfig) {
  EXPECT_THROW(generate_synthetic({.n_base = 0}), ConfigError);
  EXPECT_THROW(generate_synthetic({.scale_min = 0.4}), ConfigError);
  EXPECT_THROW(generate_synthetic({.fragment_fraction = 1.5}), ConfigError);
}

TEST(Synthetic, JitterThickensOrThins) {
  GrayImage img(40, 40, 1.0f);
  Glyph g{{Stroke{{{10, 20}, {30, 20}}}}};
  render_glyph(img, g, 3.0);
  auto ink = [](const GrayImage& im) {
    double s = 0;
    for (float v : im.pixels()) s += 1.0 - v;
    return s;
  };
  GrayImage thick = img, thin = img;
  jitter_strokes(thick, 1);
  jitter_strokes(thin, -1);
  EXPECT_GT(ink(thick), ink(img) * 1.3);
  EXPECT_LT(ink(thin), ink(img) * 0.7);
}

}  // namespace
}  // namespace dupscan
