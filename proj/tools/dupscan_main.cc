// dupscan command-line front end.
//
//   dupscan gen      --out DIR [synthetic options]
//   dupscan index    --corpus DIR --index DIR
//   dupscan search   --corpus DIR --query ID [--index DIR] [--report out.html]
//   dupscan discover --corpus DIR --group G [--threshold T]
//   dupscan eval     --corpus DIR [--ks 1,5,10] [--scores-out FILE]
//
// JSON goes to stdout, diagnostics to stderr. Exit codes: 0 ok, 1 usage,
// 2 data/config error, 3 internal error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dupscan/config.h"
#include "dupscan/corpus.h"
#include "dupscan/errors.h"
#include "dupscan/evaluation.h"
#include "dupscan/feature_index.h"
#include "dupscan/report.h"
#include "dupscan/retrieval.h"
#include "dupscan/synthetic.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Options shared by every subcommand.
struct Common {
  std::optional<std::string> config;
  std::optional<int> workers;
  std::optional<uint64_t> seed;
  std::optional<std::string> dump_config;
};

// Pipeline overrides; unset flags keep the config-file value.
struct Overrides {
  std::optional<std::string> feature_backend, feature_model;
  std::optional<int> max_keypoints;
  std::optional<double> ratio;
  std::optional<int> min_matches;
  std::optional<double> min_match_ratio, min_mean_similarity;
  std::optional<double> inlier_tol;
  std::optional<int> max_iters;
  std::optional<std::string> similarity_backend, similarity_model;
  std::optional<int> patch_size;
  std::optional<double> min_iou;
  std::optional<int> k;
  std::optional<double> threshold;
};

struct CorpusArgs {
  std::optional<std::string> dir;
  std::optional<std::string> manifest, annotations, ground_truth;
  bool strip_regions = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "pipeline config file (JSON)");
  app->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--dump-config", c.dump_config, "write the effective config to this file ('-' for stderr)");
}

void add_corpus(CLI::App* app, CorpusArgs& c) {
  app->add_option("--corpus", c.dir, "corpus directory (as written by gen)");
  app->add_option("--manifest", c.manifest, "manifest JSONL");
  app->add_option("--annotations", c.annotations, "character annotations JSON");
  app->add_option("--ground-truth", c.ground_truth, "ground-truth JSON");
  app->add_flag("--strip-regions", c.strip_regions, "ignore character annotations");
}

void add_overrides(CLI::App* app, Overrides& o) {
  app->add_option("--feature-backend", o.feature_backend, "builtin-classical | external-model");
  app->add_option("--feature-model", o.feature_model, "keypoint model file");
  app->add_option("--max-keypoints", o.max_keypoints);
  app->add_option("--ratio", o.ratio, "ratio-test threshold");
  app->add_option("--min-matches", o.min_matches);
  app->add_option("--min-match-ratio", o.min_match_ratio);
  app->add_option("--min-mean-similarity", o.min_mean_similarity);
  app->add_option("--inlier-tol", o.inlier_tol);
  app->add_option("--max-iters", o.max_iters);
  app->add_option("--similarity-backend", o.similarity_backend, "builtin-ncc | external-embedding");
  app->add_option("--similarity-model", o.similarity_model, "embedding model file");
  app->add_option("--patch-size", o.patch_size);
  app->add_option("--min-iou", o.min_iou);
}

dupscan::PipelineConfig make_config(const Common& common, const Overrides& o) {
  dupscan::PipelineConfig cfg = common.config ? dupscan::load_config(*common.config) : dupscan::PipelineConfig{};
  if (o.feature_backend) {
    if (*o.feature_backend == "builtin-classical") {
      cfg.features.kind = dupscan::FeatureBackendKind::kBuiltinClassical;
    } else if (*o.feature_backend == "external-model") {
      cfg.features.kind = dupscan::FeatureBackendKind::kExternalModel;
    } else {
      throw UsageError("unknown feature backend: " + *o.feature_backend);
    }
  }
  if (o.feature_model) cfg.features.model_path = *o.feature_model;
  if (o.max_keypoints) cfg.features.max_keypoints = *o.max_keypoints;
  if (o.ratio) cfg.ratio = *o.ratio;
  if (o.min_matches) cfg.coarse.min_matches = *o.min_matches;
  if (o.min_match_ratio) cfg.coarse.min_match_ratio = *o.min_match_ratio;
  if (o.min_mean_similarity) cfg.coarse.min_mean_similarity = *o.min_mean_similarity;
  if (o.inlier_tol) cfg.ransac.inlier_tol = *o.inlier_tol;
  if (o.max_iters) cfg.ransac.max_iters = *o.max_iters;
  if (o.similarity_backend) {
    if (*o.similarity_backend == "builtin-ncc") {
      cfg.similarity.kind = dupscan::SimilarityBackendKind::kBuiltinNcc;
    } else if (*o.similarity_backend == "external-embedding") {
      cfg.similarity.kind = dupscan::SimilarityBackendKind::kExternalEmbedding;
    } else {
      throw UsageError("unknown similarity backend: " + *o.similarity_backend);
    }
  }
  if (o.similarity_model) cfg.similarity.model_path = *o.similarity_model;
  if (o.patch_size) cfg.similarity.patch_size = *o.patch_size;
  if (o.min_iou) cfg.min_iou = *o.min_iou;
  if (o.k) cfg.k = *o.k;
  if (o.threshold) cfg.discovery_threshold = *o.threshold;
  if (common.workers) cfg.workers = *common.workers;
  if (common.seed) cfg.ransac.seed = *common.seed;
  cfg.validate();
  if (common.dump_config) {
    const std::string text = dupscan::to_json(cfg).dump(2) + "\n";
    if (*common.dump_config == "-") {
      std::cerr << text;
    } else {
      std::ofstream out(*common.dump_config);
      if (!out) throw dupscan::DataError("cannot write " + *common.dump_config);
      out << text;
    }
  }
  return cfg;
}

dupscan::Corpus open_corpus(const CorpusArgs& c) {
  dupscan::Corpus corpus;
  if (c.dir) {
    if (c.manifest) throw UsageError("--corpus and --manifest are mutually exclusive");
    corpus = dupscan::load_corpus_dir(*c.dir);
  } else if (c.manifest) {
    auto opt = [](const std::optional<std::string>& s) {
      return s ? std::optional<fs::path>(*s) : std::optional<fs::path>();
    };
    corpus = dupscan::load_corpus(*c.manifest, opt(c.annotations), opt(c.ground_truth));
  } else {
    throw UsageError("one of --corpus or --manifest is required");
  }
  return c.strip_regions ? corpus.without_regions() : corpus;
}

// Loads the on-disk index when given (it must be current), otherwise
// extracts features in memory.
dupscan::FeatureIndex open_index(const std::optional<std::string>& dir, const dupscan::Corpus& corpus,
                                 const dupscan::PipelineConfig& cfg) {
  if (!dir) {
    return dupscan::compute_index(corpus, dupscan::FeatureExtractor(cfg.features), cfg.workers);
  }
  const auto state = dupscan::probe_index(*dir, cfg.features, corpus);
  if (state == dupscan::IndexState::kMissing) throw dupscan::DataError("no feature index in " + *dir);
  return dupscan::load_index(*dir, cfg.features, corpus);
}

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

int run_gen(const Common& common, dupscan::SynthConfig synth, const std::string& out_dir) {
  if (common.seed) synth.seed = *common.seed;
  if (common.config) dupscan::load_config(*common.config);
  const dupscan::Corpus corpus = dupscan::generate_synthetic(synth);
  dupscan::write_corpus(corpus, out_dir);
  size_t relations = 0;
  for (const auto& [base, dups] : *corpus.ground_truth()) relations += dups.size();
  print({{"out", out_dir},
         {"images", corpus.size()},
         {"groups", corpus.groups().size()},
         {"queries", corpus.ground_truth()->size()},
         {"duplicate_images", relations},
         {"planted", corpus.planted().size()}});
  return kOk;
}

int run_index(const Common& common, const Overrides& o, const CorpusArgs& ca, const std::string& dir, bool force) {
  const dupscan::PipelineConfig cfg = make_config(common, o);
  const dupscan::Corpus corpus = open_corpus(ca);
  const auto state = dupscan::probe_index(dir, cfg.features, corpus);
  std::string status;
  if (state == dupscan::IndexState::kUpToDate && !force) {
    status = "up_to_date";
    std::cerr << "index " << dir << " is up to date\n";
  } else {
    status = state == dupscan::IndexState::kMissing ? "built" : "rebuilt";
    dupscan::build_index(corpus, cfg.features, dir, cfg.workers);
    std::cerr << "indexed " << corpus.size() << " images into " << dir << "\n";
  }
  print({{"index", dir}, {"status", status}, {"entries", corpus.size()}, {"fingerprint", cfg.features.fingerprint()}});
  return kOk;
}

int run_search(const Common& common, const Overrides& o, const CorpusArgs& ca, const std::optional<std::string>& index_dir,
               const std::string& query, const std::optional<std::string>& report) {
  const dupscan::PipelineConfig cfg = make_config(common, o);
  const dupscan::Corpus corpus = open_corpus(ca);
  if (!corpus.contains(query)) throw dupscan::DataError("unknown query id: " + query);
  const dupscan::FeatureIndex index = open_index(index_dir, corpus, cfg);
  const dupscan::Pipeline pipeline(corpus, index, cfg);
  const dupscan::RankedList list = pipeline.search(query, cfg.k);
  if (report) {
    std::vector<dupscan::PairDetail> details;
    for (const dupscan::CandidateScore& s : list.entries) {
      details.push_back(pipeline.explain_pair(s.query_id, s.candidate_id));
    }
    std::ofstream out(*report);
    if (!out) throw dupscan::DataError("cannot write report " + *report);
    out << dupscan::render_search_report(list, details, corpus);
    std::cerr << "wrote " << *report << "\n";
  }
  print(dupscan::to_json(list));
  return kOk;
}

int run_discover(const Common& common, const Overrides& o, const CorpusArgs& ca,
                 const std::optional<std::string>& index_dir, const std::string& group) {
  const dupscan::PipelineConfig cfg = make_config(common, o);
  const dupscan::Corpus corpus = open_corpus(ca);
  if (!corpus.groups().count(group)) throw dupscan::DataError("unknown group: " + group);
  const dupscan::FeatureIndex index = open_index(index_dir, corpus, cfg);
  dupscan::StageCounters counters;
  const auto pairs = dupscan::Pipeline(corpus, index, cfg).discover(group, cfg.discovery_threshold, &counters);
  json out = json::array();
  for (const auto& s : pairs) out.push_back(dupscan::to_json(s));
  std::cerr << counters.pairs << " pairs evaluated, " << counters.rejected_coarse << " rejected by the coarse filter, "
            << counters.rejected_alignment << " by alignment; " << pairs.size() << " at or above "
            << cfg.discovery_threshold << "\n";
  print(out);
  return kOk;
}

std::vector<int> parse_ks(const std::string& text) {
  std::vector<int> ks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t used = 0;
      const int k = std::stoi(item, &used);
      if (used != item.size() || k < 1) throw std::invalid_argument(item);
      ks.push_back(k);
    } catch (const std::exception&) {
      throw UsageError("bad K list: " + text);
    }
  }
  if (ks.empty()) throw UsageError("empty K list");
  return ks;
}

int run_eval(const Common& common, const Overrides& o, const CorpusArgs& ca, const std::optional<std::string>& index_dir,
             const std::string& ks_text, const std::optional<std::string>& scores_out,
             const std::optional<std::string>& table_out, const std::string& timing) {
  const std::vector<int> ks = parse_ks(ks_text);
  if (timing != "warm" && timing != "cold") throw UsageError("--timing must be warm or cold");
  const dupscan::PipelineConfig cfg = make_config(common, o);
  const dupscan::Corpus corpus = open_corpus(ca);
  const std::vector<std::string> queries = dupscan::default_queries(corpus);
  std::vector<dupscan::RankedList> results;
  dupscan::EvalReport report;
  if (timing == "warm") {
    const dupscan::FeatureIndex index = open_index(index_dir, corpus, cfg);
    report = dupscan::benchmark(corpus, &index, queries, cfg, ks, dupscan::TimingMode::kWarm, &results);
  } else {
    report = dupscan::benchmark(corpus, nullptr, queries, cfg, ks, dupscan::TimingMode::kCold, &results);
  }
  if (scores_out) {
    json scores = json::array();
    for (const auto& r : results) scores.push_back({{"query", r.query_id}, {"results", dupscan::to_json(r)}});
    std::ofstream out(*scores_out);
    if (!out) throw dupscan::DataError("cannot write " + *scores_out);
    out << scores.dump(1) << "\n";
  }
  const std::string table = dupscan::format_report(report);
  if (table_out) {
    std::ofstream out(*table_out);
    if (!out) throw dupscan::DataError("cannot write " + *table_out);
    out << table;
  } else {
    std::cerr << table;
  }
  print(dupscan::to_json(report));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dupscan: coarse-to-fine duplicate discovery for manuscript images"};
  app.require_subcommand(1);

  Common common;
  Overrides over;
  CorpusArgs corpus_args;
  std::optional<std::string> index_dir;

  auto* gen = app.add_subcommand("gen", "generate a synthetic corpus");
  dupscan::SynthConfig synth;
  std::string gen_out;
  add_common(gen, common);
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--n-base", synth.n_base, "base images");
  gen->add_option("--dups", synth.duplicates_per_base, "duplicates per base");
  gen->add_option("--rotation-max", synth.rotation_max, "degrees");
  gen->add_option("--scale-min", synth.scale_min);
  gen->add_option("--scale-max", synth.scale_max);
  gen->add_option("--translation-max", synth.translation_max, "pixels at 256 px");
  gen->add_option("--noise", synth.noise_sigma, "Gaussian noise sigma");
  gen->add_option("--stroke-jitter", synth.stroke_jitter, "max dilation/erosion radius");
  gen->add_option("--fragment-fraction", synth.fragment_fraction);
  gen->add_option("--n-groups", synth.n_groups);
  gen->add_option("--image-size", synth.image_size);

  auto* index = app.add_subcommand("index", "build or refresh the feature index");
  bool force = false;
  std::string index_out;
  add_common(index, common);
  add_corpus(index, corpus_args);
  add_overrides(index, over);
  index->add_option("--index,--out", index_out, "index directory")->required();
  index->add_flag("--force", force, "rebuild even when up to date");

  auto* search = app.add_subcommand("search", "rank the candidates of one query");
  std::string query;
  std::optional<std::string> report;
  add_common(search, common);
  add_corpus(search, corpus_args);
  add_overrides(search, over);
  search->add_option("--index", index_dir, "feature index directory");
  search->add_option("--query", query, "query image id")->required();
  search->add_option("--k", over.k, "result depth");
  search->add_option("--report", report, "write an HTML match report");

  auto* discover = app.add_subcommand("discover", "find all duplicate pairs within a group");
  std::string group;
  add_common(discover, common);
  add_corpus(discover, corpus_args);
  add_overrides(discover, over);
  discover->add_option("--index", index_dir, "feature index directory");
  discover->add_option("--group", group, "group id")->required();
  discover->add_option("--threshold", over.threshold, "minimum final score");

  auto* eval = app.add_subcommand("eval", "benchmark retrieval against ground truth");
  std::string ks_text = "1,5,10,15,20,25";
  std::optional<std::string> scores_out, table_out;
  std::string timing = "warm";
  add_common(eval, common);
  add_corpus(eval, corpus_args);
  add_overrides(eval, over);
  eval->add_option("--index", index_dir, "feature index directory");
  eval->add_option("--ks", ks_text, "comma-separated K values");
  eval->add_option("--scores-out", scores_out, "write ranked lists (no timing) as JSON");
  eval->add_option("--table-out", table_out, "write the text table here instead of stderr");
  eval->add_option("--timing", timing, "warm (indexed features) or cold (extract per pair)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (gen->parsed()) return run_gen(common, synth, gen_out);
    if (index->parsed()) return run_index(common, over, corpus_args, index_out, force);
    if (search->parsed()) return run_search(common, over, corpus_args, index_dir, query, report);
    if (discover->parsed()) return run_discover(common, over, corpus_args, index_dir, group);
    if (eval->parsed()) return run_eval(common, over, corpus_args, index_dir, ks_text, scores_out, table_out, timing);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const dupscan::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kUsage;
}
