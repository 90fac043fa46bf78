// Acceptance runner: one PASS/FAIL line per criterion.
//
//   dupscan_acceptance [--only N] [--workers W]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>
#include <numeric>

#include "CLI11.hpp"
#include "dupscan/alignment.h"
#include "dupscan/content.h"
#include "dupscan/evaluation.h"
#include "dupscan/feature_index.h"
#include "dupscan/matching.h"
#include "dupscan/retrieval.h"
#include "dupscan/synthetic.h"
#include "oracles.h"
#include "test_support.h"

using namespace dupscan;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const SynthConfig kSeed42{.seed = 42, .n_base = 100, .duplicates_per_base = 1, .rotation_max = 15,
                          .scale_min = 0.85, .scale_max = 1.15, .noise_sigma = 0.02, .fragment_fraction = 0.2};

struct Run {
  EvalReport report;
  std::vector<RankedList> results;
};

Run evaluate(const Corpus& corpus, int workers) {
  PipelineConfig cfg;
  cfg.workers = workers;
  const FeatureIndex index = compute_index(corpus, FeatureExtractor(cfg.features), workers);
  Run run;
  run.report = benchmark(corpus, &index, default_queries(corpus), cfg, kDefaultEvalKs, TimingMode::kWarm,
                         &run.results);
  return run;
}

Outcome criterion_1(int workers) {
  const Corpus corpus = generate_synthetic(kSeed42);
  const Run run = evaluate(corpus, workers);
  const double r1 = run.report.recall_at.at(1), r5 = run.report.recall_at.at(5);
  int fragmented = 0, complete = 0;
  for (const RankedList& list : run.results) {
    std::set<std::string> top5;
    for (size_t i = 0; i < list.entries.size() && i < 5; ++i) top5.insert(list.entries[i].candidate_id);
    std::vector<std::string> frags;
    for (const std::string& d : corpus.ground_truth()->at(list.query_id)) {
      if (d.find("_f") != std::string::npos) frags.push_back(d);
    }
    if (frags.empty()) continue;
    ++fragmented;
    bool all = true;
    for (const std::string& f : frags) all = all && top5.count(f);
    complete += all;
  }
  return {r1 >= 0.90 && r5 >= 0.97 && complete == fragmented,
          fmt("%zu images, Recall@1 %.3f (>= 0.90), Recall@5 %.3f (>= 0.97), fragmented bases with both halves "
              "in Top-5: %d/%d, %.1f s",
              corpus.size(), r1, r5, complete, fragmented, run.report.wall_seconds)};
}

Outcome criterion_2(int workers) {
  const Corpus corpus = generate_synthetic(kSeed42);
  std::string detail;
  bool ok = true;
  for (const auto& [name, c] : {std::pair<std::string, Corpus>{"annotated", corpus}, {"stripped", corpus.without_regions()}}) {
    const Run run = evaluate(c, workers);
    std::string seq;
    double prev = -1;
    for (int k : run.report.ks) {
      const double r = run.report.recall_at.at(k);
      ok = ok && r >= prev;
      prev = r;
      seq += fmt("%s%.3f", seq.empty() ? "" : ",", r);
    }
    detail += (detail.empty() ? "" : "; ") + name + " recall over K=1..25: " + seq;
  }
  return {ok, detail};
}

Outcome criterion_3() {
  std::mt19937 gen(2024);
  std::uniform_real_distribution<double> unit(0, 1);
  const RansacParams params{.inlier_tol = 2.0};
  int recovered = 0, consistent = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    const double theta = (unit(gen) * 2 - 1) * 15 * M_PI / 180;
    const double scale = 0.85 + 0.3 * unit(gen);
    const Point2 shift{(unit(gen) * 2 - 1) * 8, (unit(gen) * 2 - 1) * 8};
    const Affine2D truth = Affine2D::similarity_about({128, 128}, theta, scale, shift);
    const int n = 40 + static_cast<int>(unit(gen) * 80);
    const int n_out = static_cast<int>(std::lround(0.3 * n));
    std::vector<Point2> src, dst;
    for (int i = 0; i < n; ++i) {
      // Keypoint coordinates are single precision.
      auto f32 = [](Point2 p) { return Point2{double(float(p.x)), double(float(p.y))}; };
      const Point2 s = f32({unit(gen) * 256, unit(gen) * 256});
      src.push_back(s);
      dst.push_back(i < n_out ? f32({unit(gen) * 256, unit(gen) * 256}) : f32(truth.apply(s)));
    }
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    std::vector<Point2> ps, pd;
    for (int i : perm) {
      ps.push_back(src[i]);
      pd.push_back(dst[i]);
    }
    RansacParams p = params;
    p.seed = static_cast<uint64_t>(t);
    const auto model = fit_affine(ps, pd, p);
    if (!model) continue;
    double worst = 0;
    for (int i = 0; i < 6; ++i) worst = std::max(worst, std::fabs(model->matrix.m[i] - truth.m[i]));
    recovered += worst <= 1e-2;
    bool ok = true;
    for (int i : model->inliers) {
      const Point2 q = model->matrix.apply(ps[i]);
      ok = ok && std::hypot(q.x - pd[i].x, q.y - pd[i].y) <= params.inlier_tol;
    }
    consistent += ok;
  }
  return {recovered >= 0.98 * trials && consistent == trials,
          fmt("parameters within 1e-2: %d/%d (>= 98%%), inlier reprojection <= tol: %d/%d", recovered, trials,
              consistent, trials)};
}

DescriptorSet random_descriptors(std::mt19937& gen, int n, int dim, const DescriptorSet* near, double noise) {
  std::normal_distribution<double> g;
  DescriptorSet d(dim);
  for (int i = 0; i < n; ++i) {
    std::vector<double> v(dim);
    const bool copy = near && i < static_cast<int>(near->size()) && (i % 3 != 2);
    for (int k = 0; k < dim; ++k) v[k] = (copy ? near->row(i)[k] : 0.0) + (copy ? noise : 1.0) * g(gen);
    double norm = 0;
    for (double x : v) norm += x * x;
    std::vector<float> f;
    for (double x : v) f.push_back(static_cast<float>(x / std::sqrt(norm)));
    d.push_back(f);
  }
  return d;
}

Outcome criterion_4() {
  std::mt19937 gen(77);
  std::uniform_int_distribution<int> count(1, 64);
  const std::vector<int> dims{8, 32, 128};
  const std::vector<double> ratios{0.6, 0.8, 0.85, 1.0};
  int equal = 0, total_matches = 0;
  const int trials = 500;
  for (int t = 0; t < trials; ++t) {
    const int dim = dims[t % dims.size()];
    const DescriptorSet a = random_descriptors(gen, count(gen), dim, nullptr, 0);
    const DescriptorSet b = random_descriptors(gen, count(gen), dim, t % 2 ? &a : nullptr, 0.05 + 0.01 * (t % 20));
    const double ratio = ratios[t % ratios.size()];
    const MatchSet m = match_descriptors(a, b, ratio);
    std::set<std::pair<int, int>> got;
    for (const Match& p : m.pairs) got.insert({p.index_a, p.index_b});
    total_matches += static_cast<int>(got.size());
    equal += got == testing::brute_force_matches(a, b, ratio);
  }
  return {equal == trials, fmt("exact agreement on %d/%d pairs (%d matches in total)", equal, trials, total_matches)};
}

Outcome criterion_5() {
  std::mt19937 gen(5);
  int agree = 0, bounded = 0, checks = 0;
  for (int f = 0; f < 50; ++f) {
    std::uniform_int_distribution<int> nq(1, 12), depth(1, 30);
    const int n = nq(gen), len = depth(gen);
    std::vector<int> ranks;
    std::vector<RankedList> lists;
    GroundTruth truth;
    for (int i = 0; i < n; ++i) {
      const std::string q = "q" + std::to_string(i);
      const int r = std::uniform_int_distribution<int>(0, len)(gen);  // 0 = duplicate missing
      ranks.push_back(r);
      RankedList l{q, {}, len};
      for (int pos = 1; pos <= len; ++pos) {
        CandidateScore c;
        c.query_id = q;
        c.candidate_id = pos == r ? "dup" : "other" + std::to_string(pos);
        c.final_score = 1.0 - 0.01 * pos;
        l.entries.push_back(c);
      }
      lists.push_back(l);
      truth[q] = {"dup"};
    }
    for (int k = 1; k <= 30; ++k) {
      ++checks;
      const auto rank = rank_at_k(lists, truth, k);
      const auto expect = testing::brute_rank(ranks, k);
      agree += recall_at_k(lists, truth, k) == testing::brute_recall(ranks, k) && rank.has_value() == expect.has_value() &&
               (!rank || std::fabs(*rank - *expect) < 1e-12);
      bounded += !rank || (*rank >= 1 && *rank <= k);
    }
  }
  auto worked = [](const std::vector<int>& r, int k) {
    std::vector<RankedList> lists;
    GroundTruth truth;
    for (size_t i = 0; i < r.size(); ++i) {
      const std::string q = "q" + std::to_string(i);
      RankedList l{q, {}, 20};
      for (int pos = 1; pos <= 20; ++pos) {
        CandidateScore c;
        c.candidate_id = pos == r[i] ? "dup" : "x" + std::to_string(pos);
        c.final_score = -pos;
        l.entries.push_back(c);
      }
      lists.push_back(l);
      truth[q] = {"dup"};
    }
    return rank_at_k(lists, truth, k);
  };
  const auto w1 = worked({1, 2, 3}, 5), w2 = worked({1, 4, 12}, 10);
  const bool examples = w1 && *w1 == 2.0 && w2 && *w2 == 2.5;
  return {agree == checks && bounded == checks && examples,
          fmt("oracle agreement %d/%d, bounds %d/%d, worked examples %s (%.3f, %.3f)", agree, checks, bounded, checks,
              examples ? "exact" : "wrong", w1.value_or(-1), w2.value_or(-1))};
}

Outcome criterion_6() {
  int arithmetic_ok = 0, arithmetic = 0;
  auto check = [&](double got, double want) {
    ++arithmetic;
    arithmetic_ok += std::fabs(got - want) <= 1e-9;
  };
  check(iou({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0);
  check(iou({0, 0, 10, 10}, {5, 0, 10, 10}), 1.0 / 3.0);
  check(iou({0, 0, 10, 10}, {20, 20, 5, 5}), 0.0);
  check(iou({0, 0, 10, 10}, {2, 2, 4, 4}), 0.16);
  auto with = [](std::vector<double> sims) {
    std::vector<CharacterMatch> ms;
    for (double s : sims) {
      CharacterMatch m;
      m.similarity = s;
      ms.push_back(m);
    }
    return ms;
  };
  check(content_score(with({0.9, 0.7}), 4).score, 0.4);
  check(content_score(with({1.0, 1.0, 1.0}), 3).score, 1.0);
  check(content_score({}, 5).score, 0.0);
  check(content_score({}, 0).score, 0.0);

  std::mt19937 gen(6);
  std::uniform_real_distribution<double> pos(0, 40), size(4, 14), jitter(-3, 3);
  std::uniform_int_distribution<int> count(0, 5);
  int same = 0;
  const int fixtures = 500;
  for (int f = 0; f < fixtures; ++f) {
    std::vector<CharRegion> src, tgt;
    const int ns = count(gen), nt = count(gen);
    for (int i = 0; i < ns; ++i) src.push_back({"s", {pos(gen), pos(gen), size(gen), size(gen)}, std::nullopt});
    for (int j = 0; j < nt; ++j) {
      if (j < ns && f % 2 == 0) {
        const Rect& r = src[j].box;  // perturbed counterpart, as after alignment
        tgt.push_back({"t", {r.x + jitter(gen), r.y + jitter(gen), r.w + jitter(gen) / 2, r.h + jitter(gen) / 2}, {}});
      } else {
        tgt.push_back({"t", {pos(gen), pos(gen), size(gen), size(gen)}, std::nullopt});
      }
    }
    const double min_iou = 0.1;
    std::vector<RegionPair> greedy = associate_regions(src, tgt, min_iou);
    std::sort(greedy.begin(), greedy.end(), [](const RegionPair& a, const RegionPair& b) { return a.src < b.src; });
    const std::vector<RegionPair> best = testing::optimal_assignment(src, tgt, min_iou);
    bool eq = greedy.size() == best.size();
    for (size_t i = 0; eq && i < best.size(); ++i) eq = greedy[i].src == best[i].src && greedy[i].tgt == best[i].tgt;
    same += eq;
  }
  return {arithmetic_ok == arithmetic && same == fixtures,
          fmt("arithmetic examples %d/%d, greedy association equal to exhaustive optimum on %d/%d fixtures",
              arithmetic_ok, arithmetic, same, fixtures)};
}

Outcome criterion_7() {
  const Corpus corpus = generate_synthetic({.seed = 7, .n_base = 10, .fragment_fraction = 0.2, .image_size = 512});
  PipelineConfig cfg;
  const FeatureIndex index = compute_index(corpus, FeatureExtractor(cfg.features));
  const auto queries = default_queries(corpus);
  cfg.workers = 1;
  benchmark(corpus, &index, {queries[0]}, cfg, {5});  // warm caches
  const EvalReport one = benchmark(corpus, &index, queries, cfg, {5});
  cfg.workers = 8;
  const EvalReport eight = benchmark(corpus, &index, queries, cfg, {5});
  const double speedup = eight.pairs_per_second / one.pairs_per_second;
  const unsigned cores = std::thread::hardware_concurrency();
  return {one.seconds_per_pair <= 0.1 && speedup >= 4.0,
          fmt("512 px, warm index, %ld pairs: %.4f s/pair at 1 worker (<= 0.1); speedup at 8 workers %.2fx (>= 4x) "
              "on %u hardware thread%s",
              one.n_pairs, one.seconds_per_pair, speedup, cores, cores == 1 ? "" : "s")};
}

Outcome criterion_8() {
  testing::TempDir dir("dupscan-accept");
  const std::string cli = DUPSCAN_CLI_PATH;
  const std::string corpus = (dir / "corpus").string();
  auto run = [&](const std::string& args) { return testing::run_command(cli + " " + args + " 2>/dev/null"); };
  if (run("gen --out " + corpus + " --seed 42 --n-base 100 --dups 1 --rotation-max 15 --scale-min 0.85 "
          "--scale-max 1.15 --noise 0.02 --fragment-fraction 0.2")
          .exit_code != 0) {
    return {false, "gen failed"};
  }
  const std::string s1 = (dir / "w1.json").string(), s8 = (dir / "w8.json").string();
  const auto r1 = run("eval --corpus " + corpus + " --workers 1 --scores-out " + s1);
  const auto r8 = run("eval --corpus " + corpus + " --workers 8 --scores-out " + s8);
  if (r1.exit_code != 0 || r8.exit_code != 0) return {false, "eval failed"};
  const std::string a = testing::read_file(s1), b = testing::read_file(s8);
  return {!a.empty() && a == b, fmt("score files %s (%zu bytes vs %zu bytes)", a == b ? "byte-identical" : "differ",
                                    a.size(), b.size())};
}

Outcome criterion_9(int workers) {
  const Corpus corpus = generate_synthetic(kSeed42).without_regions();
  const Run run = evaluate(corpus, workers);
  long fallback = 0, scored = 0;
  for (const RankedList& l : run.results) {
    for (const CandidateScore& s : l.entries) {
      if (s.stage != Stage::kScored) continue;
      ++scored;
      fallback += s.content && s.content->matched == 0 && s.content->total_src == 0;
    }
  }
  const double r5 = run.report.recall_at.at(5);
  return {r5 >= 0.80 && fallback == scored,
          fmt("annotations stripped: Recall@5 %.3f (>= 0.80), Recall@1 %.3f, keypoint-fallback scores %ld/%ld", r5,
              run.report.recall_at.at(1), fallback, scored)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dupscan acceptance runner"};
  std::optional<int> only;
  int workers = 4;
  app.add_option("--only", only, "run a single criterion (1-9)")->check(CLI::Range(1, 9));
  app.add_option("--workers", workers, "workers for the retrieval criteria")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::function<Outcome()>> criteria{
      [&] { return criterion_1(workers); }, [&] { return criterion_2(workers); }, criterion_3, criterion_4,
      criterion_5, criterion_6, criterion_7, criterion_8, [&] { return criterion_9(workers); }};
  bool all = true;
  for (size_t i = 0; i < criteria.size(); ++i) {
    if (only && *only != static_cast<int>(i) + 1) continue;
    Outcome o;
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << o.detail << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
