#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dupscan/config.h"
#include "dupscan/corpus.h"
#include "dupscan/feature_index.h"
#include "dupscan/retrieval.h"
#include "json.hpp"

namespace dupscan {

inline const std::vector<int> kDefaultEvalKs = {1, 5, 10, 15, 20, 25};

// 1-based position of the best-ranked ground-truth duplicate within the
// first k entries, or nullopt when none appears there.
std::optional<int> hit_rank(const RankedList& list, const std::set<std::string>& truth, int k);

// Number of queries with a correct answer in their top k. Throws DataError
// when a query has no (or empty) ground truth.
int hits_at_k(const std::vector<RankedList>& results, const GroundTruth& truth, int k);

double recall_at_k(const std::vector<RankedList>& results, const GroundTruth& truth, int k);

// Mean hit rank over queries that hit within k; queries without a hit are
// left out of the average. nullopt when no query hits.
std::optional<double> rank_at_k(const std::vector<RankedList>& results, const GroundTruth& truth, int k);

enum class TimingMode { kWarm, kCold };

std::string_view to_string(TimingMode mode);

struct EvalReport {
  std::string method;
  std::vector<int> ks;
  std::map<int, double> recall_at;
  std::map<int, double> rank_at;  // only Ks with at least one hit
  std::map<int, int> n_queries_hit_at;
  int n_queries = 0;
  long n_pairs = 0;
  double wall_seconds = 0.0;
  // Aggregate: wall time of all searches / pairs scored.
  double seconds_per_pair = 0.0;
  double pairs_per_second = 0.0;
  // Spread of individual pair latencies.
  double pair_latency_mean = 0.0;
  double pair_latency_stddev = 0.0;
  int workers = 1;
  TimingMode mode = TimingMode::kWarm;
};

// Runs search for every query at depth max(ks) and aggregates the metrics.
// Warm mode takes features from `index` (required); cold mode extracts
// them inside every pair evaluation. Ranked lists go to `results` if given.
EvalReport benchmark(const Corpus& corpus, const FeatureIndex* index, const std::vector<std::string>& queries,
                     const PipelineConfig& config, const std::vector<int>& ks = kDefaultEvalKs,
                     TimingMode mode = TimingMode::kWarm, std::vector<RankedList>* results = nullptr);

// Queries of a corpus: every ground-truth key, sorted.
std::vector<std::string> default_queries(const Corpus& corpus);

nlohmann::json to_json(const EvalReport& report);

// Plain-text tables: per-K rows, then a method row of Recall@K and Rank@K
// values, then timing.
std::string format_report(const EvalReport& report);

}  // namespace dupscan
