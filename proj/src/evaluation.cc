#include "dupscan/evaluation.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "dupscan/errors.h"

namespace dupscan {

using nlohmann::json;

namespace {

const std::set<std::string>& truth_of(const GroundTruth& truth, const std::string& query) {
  auto it = truth.find(query);
  if (it == truth.end() || it->second.empty()) throw DataError("no ground truth for query " + query);
  return it->second;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad(const std::string& s, size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

}  // namespace

std::optional<int> hit_rank(const RankedList& list, const std::set<std::string>& truth, int k) {
  const size_t depth = std::min<size_t>(list.entries.size(), static_cast<size_t>(std::max(k, 0)));
  for (size_t i = 0; i < depth; ++i) {
    if (truth.count(list.entries[i].candidate_id)) return static_cast<int>(i) + 1;
  }
  return std::nullopt;
}

int hits_at_k(const std::vector<RankedList>& results, const GroundTruth& truth, int k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  int hits = 0;
  for (const RankedList& r : results) {
    if (hit_rank(r, truth_of(truth, r.query_id), k)) ++hits;
  }
  return hits;
}

double recall_at_k(const std::vector<RankedList>& results, const GroundTruth& truth, int k) {
  if (results.empty()) throw std::invalid_argument("recall_at_k: no queries");
  return static_cast<double>(hits_at_k(results, truth, k)) / results.size();
}

std::optional<double> rank_at_k(const std::vector<RankedList>& results, const GroundTruth& truth, int k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  long sum = 0;
  int hits = 0;
  for (const RankedList& r : results) {
    if (auto rank = hit_rank(r, truth_of(truth, r.query_id), k)) {
      sum += *rank;
      ++hits;
    }
  }
  if (hits == 0) return std::nullopt;
  return static_cast<double>(sum) / hits;
}

std::string_view to_string(TimingMode mode) { return mode == TimingMode::kWarm ? "warm" : "cold"; }

std::vector<std::string> default_queries(const Corpus& corpus) {
  std::vector<std::string> out;
  if (corpus.ground_truth()) {
    for (const auto& [id, dups] : *corpus.ground_truth()) out.push_back(id);
  }
  return out;
}

EvalReport benchmark(const Corpus& corpus, const FeatureIndex* index, const std::vector<std::string>& queries,
                     const PipelineConfig& config, const std::vector<int>& ks, TimingMode mode,
                     std::vector<RankedList>* results_out) {
  if (queries.empty()) throw DataError("benchmark: empty query set");
  if (!corpus.ground_truth()) throw DataError("benchmark: corpus has no ground truth");
  if (ks.empty()) throw std::invalid_argument("benchmark: empty K list");
  for (int k : ks) {
    if (k < 1) throw ConfigError("K values must be >= 1");
  }
  if (mode == TimingMode::kWarm && !index) throw std::invalid_argument("warm benchmark needs a feature index");
  const GroundTruth& truth = *corpus.ground_truth();
  for (const std::string& q : queries) {
    truth_of(truth, q);
    if (!corpus.contains(q)) throw DataError("unknown query id: " + q);
  }

  std::vector<int> sorted_ks = ks;
  std::sort(sorted_ks.begin(), sorted_ks.end());
  sorted_ks.erase(std::unique(sorted_ks.begin(), sorted_ks.end()), sorted_ks.end());
  const int depth = sorted_ks.back();

  const Pipeline pipeline = mode == TimingMode::kWarm ? Pipeline(corpus, *index, config) : Pipeline(corpus, config);
  std::vector<RankedList> results;
  std::vector<double> latencies;
  const auto start = std::chrono::steady_clock::now();
  for (const std::string& q : queries) results.push_back(pipeline.search(q, depth, nullptr, &latencies));
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  EvalReport report;
  report.method = config.name;
  report.ks = sorted_ks;
  report.n_queries = static_cast<int>(queries.size());
  for (int k : sorted_ks) {
    const int hits = hits_at_k(results, truth, k);
    report.n_queries_hit_at[k] = hits;
    report.recall_at[k] = static_cast<double>(hits) / report.n_queries;
    if (auto r = rank_at_k(results, truth, k)) report.rank_at[k] = *r;
  }
  report.n_pairs = static_cast<long>(latencies.size());
  report.wall_seconds = wall;
  report.workers = config.workers;
  report.mode = mode;
  if (report.n_pairs > 0) {
    report.seconds_per_pair = wall / report.n_pairs;
    report.pairs_per_second = report.seconds_per_pair > 0.0 ? 1.0 / report.seconds_per_pair : 0.0;
    double sum = 0.0;
    for (double t : latencies) sum += t;
    report.pair_latency_mean = sum / report.n_pairs;
    double ss = 0.0;
    for (double t : latencies) ss += (t - report.pair_latency_mean) * (t - report.pair_latency_mean);
    report.pair_latency_stddev = report.n_pairs > 1 ? std::sqrt(ss / (report.n_pairs - 1)) : 0.0;
  }
  if (results_out) *results_out = std::move(results);
  return report;
}

json to_json(const EvalReport& report) {
  json recall = json::object(), rank = json::object(), hits = json::object();
  for (int k : report.ks) {
    const std::string key = std::to_string(k);
    recall[key] = report.recall_at.at(k);
    hits[key] = report.n_queries_hit_at.at(k);
    auto it = report.rank_at.find(k);
    rank[key] = it == report.rank_at.end() ? json(nullptr) : json(it->second);
  }
  return {{"method", report.method},
          {"n_queries", report.n_queries},
          {"ks", report.ks},
          {"recall_at", std::move(recall)},
          {"rank_at", std::move(rank)},
          {"n_queries_hit_at", std::move(hits)},
          {"timing",
           {{"mode", std::string(to_string(report.mode))},
            {"workers", report.workers},
            {"n_pairs", report.n_pairs},
            {"wall_seconds", report.wall_seconds},
            {"seconds_per_pair", report.seconds_per_pair},
            {"pairs_per_second", report.pairs_per_second},
            {"pair_latency_mean", report.pair_latency_mean},
            {"pair_latency_stddev", report.pair_latency_stddev}}}};
}

std::string format_report(const EvalReport& report) {
  std::ostringstream out;
  out << pad("K", 4) << pad("Recall@K", 10) << pad("Rank@K", 9) << pad("hits", 10) << "\n";
  for (int k : report.ks) {
    auto rank = report.rank_at.find(k);
    out << pad(std::to_string(k), 4) << pad(fixed(100.0 * report.recall_at.at(k), 1), 10)
        << pad(rank == report.rank_at.end() ? "-" : fixed(rank->second, 2), 9)
        << pad(std::to_string(report.n_queries_hit_at.at(k)) + "/" + std::to_string(report.n_queries), 10) << "\n";
  }
  out << "\n";

  const size_t name_w = std::max<size_t>(report.method.size(), 6) + 2;
  std::string header = std::string("Method") + std::string(name_w - 6, ' ');
  std::string recall_row = report.method + std::string(name_w - report.method.size(), ' ');
  for (int k : report.ks) header += pad("R@" + std::to_string(k), 8);
  for (int k : report.ks) header += pad("Rank@" + std::to_string(k), 9);
  for (int k : report.ks) recall_row += pad(fixed(100.0 * report.recall_at.at(k), 1), 8);
  for (int k : report.ks) {
    auto rank = report.rank_at.find(k);
    recall_row += pad(rank == report.rank_at.end() ? "-" : fixed(rank->second, 2), 9);
  }
  out << header << "\n" << recall_row << "\n\n";

  out << "timing (" << to_string(report.mode) << ", " << report.workers << " worker"
      << (report.workers == 1 ? "" : "s") << "): " << fixed(report.seconds_per_pair, 4) << " s/pair, "
      << fixed(report.pairs_per_second, 2) << " pairs/s over " << report.n_pairs << " pairs; latency "
      << fixed(report.pair_latency_mean, 4) << " +/- " << fixed(report.pair_latency_stddev, 4) << " s\n";
  return out.str();
}

}  // namespace dupscan
