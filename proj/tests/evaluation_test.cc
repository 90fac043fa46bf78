#include "dupscan/evaluation.h"

#include <gtest/gtest.h>

#include <random>

#include "dupscan/errors.h"
#include "dupscan/feature_index.h"
#include "dupscan/synthetic.h"

namespace dupscan {
namespace {

RankedList ranked(const std::string& q, const std::vector<std::string>& ids) {
  RankedList l{q, {}, static_cast<int>(ids.size())};
  double s = 1.0;
  for (const std::string& id : ids) {
    CandidateScore c;
    c.query_id = q;
    c.candidate_id = id;
    c.final_score = s;
    s -= 0.01;
    l.entries.push_back(c);
  }
  return l;
}

// Query i has its duplicate at the given 1-based rank (0 = absent).
std::pair<std::vector<RankedList>, GroundTruth> with_ranks(const std::vector<int>& ranks, int depth = 25) {
  std::vector<RankedList> lists;
  GroundTruth truth;
  for (size_t i = 0; i < ranks.size(); ++i) {
    const std::string q = "q" + std::to_string(i);
    std::vector<std::string> ids;
    for (int r = 1; r <= depth; ++r) ids.push_back(r == ranks[i] ? "dup" + std::to_string(i) : "x" + std::to_string(r));
    lists.push_back(ranked(q, ids));
    truth[q] = {"dup" + std::to_string(i)};
  }
  return {lists, truth};
}

TEST(Metrics, WorkedExamples) {
  {
    const auto [lists, truth] = with_ranks({1, 2, 3});
    EXPECT_DOUBLE_EQ(*rank_at_k(lists, truth, 5), 2.0);
    EXPECT_DOUBLE_EQ(recall_at_k(lists, truth, 5), 1.0);
    EXPECT_DOUBLE_EQ(recall_at_k(lists, truth, 2), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(*rank_at_k(lists, truth, 2), 1.5);
  }
  {
    const auto [lists, truth] = with_ranks({1, 4, 12});
    EXPECT_DOUBLE_EQ(*rank_at_k(lists, truth, 15), 17.0 / 3.0);
  }
}

TEST(Metrics, RankExcludesMisses) {
  const auto [lists, truth] = with_ranks({1, 4, 12});
  EXPECT_DOUBLE_EQ(*rank_at_k(lists, truth, 5), 2.5);
  EXPECT_DOUBLE_EQ(recall_at_k(lists, truth, 5), 2.0 / 3.0);
  EXPECT_EQ(hits_at_k(lists, truth, 5), 2);
  const auto [none, t2] = with_ranks({7, 0});
  EXPECT_FALSE(rank_at_k(none, t2, 5));
  EXPECT_EQ(recall_at_k(none, t2, 5), 0.0);
}

TEST(Metrics, HitRankUsesBestDuplicate) {
  const RankedList l = ranked("q", {"a", "d2", "b", "d1"});
  EXPECT_EQ(hit_rank(l, {"d1", "d2"}, 4), 2);
  EXPECT_EQ(hit_rank(l, {"d1"}, 3), std::nullopt);
  EXPECT_EQ(hit_rank(l, {"d1"}, 4), 4);
  EXPECT_EQ(hit_rank(l, {"a"}, 100), 1);
}

TEST(Metrics, AgreeWithDirectCount) {
  std::mt19937 gen(2);
  std::uniform_int_distribution<int> r(0, 25);
  std::vector<int> ranks(40);
  for (int& v : ranks) v = r(gen);
  const auto [lists, truth] = with_ranks(ranks);
  double prev_recall = 0;
  for (int k = 1; k <= 25; ++k) {
    int hits = 0;
    double sum = 0;
    for (int v : ranks) {
      if (v >= 1 && v <= k) {
        ++hits;
        sum += v;
      }
    }
    EXPECT_EQ(hits_at_k(lists, truth, k), hits);
    EXPECT_DOUBLE_EQ(recall_at_k(lists, truth, k), double(hits) / ranks.size());
    EXPECT_DOUBLE_EQ(recall_at_k(lists, truth, k) * ranks.size(), hits_at_k(lists, truth, k));
    if (hits) {
      EXPECT_DOUBLE_EQ(*rank_at_k(lists, truth, k), sum / hits);
      EXPECT_LE(*rank_at_k(lists, truth, k), k);
    }
    EXPECT_GE(recall_at_k(lists, truth, k), prev_recall);
    prev_recall = recall_at_k(lists, truth, k);
  }
}

TEST(Metrics, Errors) {
  const auto [lists, truth] = with_ranks({1, 2});
  GroundTruth partial = truth;
  partial.erase("q1");
  EXPECT_THROW(hits_at_k(lists, partial, 5), DataError);
  GroundTruth empty_set = truth;
  empty_set["q1"].clear();
  EXPECT_THROW(recall_at_k(lists, empty_set, 5), DataError);
  EXPECT_THROW(recall_at_k({}, truth, 5), std::invalid_argument);
}

class BenchmarkTest : public ::testing::Test {
 protected:
  Corpus corpus_ = generate_synthetic({.seed = 5, .n_base = 5, .fragment_fraction = 0.2});
  FeatureIndex index_ = compute_index(corpus_, FeatureExtractor({}));
};

TEST_F(BenchmarkTest, ReportIsConsistent) {
  std::vector<RankedList> results;
  const auto queries = default_queries(corpus_);
  ASSERT_EQ(queries.size(), 5u);
  const EvalReport r = benchmark(corpus_, &index_, queries, {}, {1, 5, 10}, TimingMode::kWarm, &results);
  ASSERT_EQ(results.size(), queries.size());
  EXPECT_EQ(r.n_queries, 5);
  EXPECT_EQ(r.n_pairs, 5L * (static_cast<long>(corpus_.size()) - 1));
  EXPECT_NEAR(r.pairs_per_second * r.seconds_per_pair, 1.0, 0.01);
  EXPECT_NEAR(r.seconds_per_pair, r.wall_seconds / r.n_pairs, 1e-12);
  EXPECT_GE(r.pair_latency_stddev, 0.0);
  for (int k : r.ks) {
    EXPECT_DOUBLE_EQ(r.recall_at.at(k), recall_at_k(results, *corpus_.ground_truth(), k));
    EXPECT_EQ(r.n_queries_hit_at.at(k), hits_at_k(results, *corpus_.ground_truth(), k));
  }
  EXPECT_LE(r.recall_at.at(1), r.recall_at.at(5));
  for (const RankedList& l : results) EXPECT_EQ(l.entries.size(), 10u);
  const std::string table = format_report(r);
  EXPECT_NE(table.find("Recall@K"), std::string::npos);
  EXPECT_NE(table.find("Rank@K"), std::string::npos);
  const nlohmann::json j = to_json(r);
  EXPECT_TRUE(j.contains("timing"));
}

TEST_F(BenchmarkTest, ColdMatchesWarm) {
  std::vector<RankedList> warm, cold;
  const auto q = default_queries(corpus_);
  benchmark(corpus_, &index_, {q[0], q[1]}, {}, {1, 5}, TimingMode::kWarm, &warm);
  const EvalReport r = benchmark(corpus_, nullptr, {q[0], q[1]}, {}, {1, 5}, TimingMode::kCold, &cold);
  EXPECT_EQ(r.mode, TimingMode::kCold);
  ASSERT_EQ(warm.size(), cold.size());
  for (size_t i = 0; i < warm.size(); ++i) EXPECT_EQ(to_json(warm[i]), to_json(cold[i]));
}

TEST_F(BenchmarkTest, InvalidInputs) {
  EXPECT_THROW(benchmark(corpus_, &index_, {}, {}), DataError);
  EXPECT_THROW(benchmark(corpus_, &index_, {"b0000"}, {}, {}), std::invalid_argument);
  EXPECT_THROW(benchmark(corpus_, &index_, {"b0000"}, {}, {0}), ConfigError);
  EXPECT_THROW(benchmark(corpus_, nullptr, {"b0000"}, {}, {1}, TimingMode::kWarm), std::invalid_argument);
  EXPECT_THROW(benchmark(corpus_, &index_, {"b0000_d0"}, {}, {1}), DataError);
}

}  // namespace
}  // namespace dupscan
