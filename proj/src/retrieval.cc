#include "dupscan/retrieval.h"

#include <algorithm>
#include <chrono>

#include "dupscan/errors.h"
#include "dupscan/parallel.h"
#include "dupscan/rng.h"

namespace dupscan {

using nlohmann::json;

namespace {

void bump(std::atomic<long> StageCounters::*field, StageCounters* counters) {
  if (counters) (counters->*field).fetch_add(1, std::memory_order_relaxed);
}

Rect image_rect(const ImageRecord& rec) {
  return {0.0, 0.0, static_cast<double>(rec.width()), static_cast<double>(rec.height())};
}

}  // namespace

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::kRejectedCoarse: return "rejected_coarse";
    case Stage::kRejectedAlignment: return "rejected_alignment";
    case Stage::kScored: return "scored";
  }
  return "unknown";
}

bool ranks_before(const CandidateScore& a, const CandidateScore& b) {
  if (a.final_score != b.final_score) return a.final_score > b.final_score;
  return a.candidate_id < b.candidate_id;
}

uint64_t pair_seed(uint64_t global_seed, const std::string& id_a, const std::string& id_b) {
  const bool ordered = id_a <= id_b;
  Fnv1a h;
  h.update_u64(global_seed).update(ordered ? id_a : id_b).update(ordered ? id_b : id_a);
  return mix64(h.digest());
}

Pipeline::Pipeline(const Corpus& corpus, const FeatureIndex& index, PipelineConfig config)
    : corpus_(corpus), index_(&index), config_(std::move(config)), similarity_(config_.similarity) {
  config_.validate();
}

Pipeline::Pipeline(const Corpus& corpus, PipelineConfig config)
    : corpus_(corpus), config_(std::move(config)), similarity_(config_.similarity) {
  config_.validate();
  extractor_.emplace(config_.features);
}

const ImageFeatures& Pipeline::features(const std::string& id, ImageFeatures& scratch) const {
  if (index_) return index_->at(id);
  scratch = extractor_->extract(corpus_.image(id).image);
  return scratch;
}

PairDetail Pipeline::explain_pair(const std::string& query_id, const std::string& candidate_id,
                                  StageCounters* counters) const {
  return run_pair(query_id, candidate_id, counters, true);
}

PairDetail Pipeline::run_pair(const std::string& query_id, const std::string& candidate_id, StageCounters* counters,
                              bool keep_keypoints) const {
  const ImageRecord& query = corpus_.image(query_id);
  const ImageRecord& candidate = corpus_.image(candidate_id);
  if (query.group != candidate.group) {
    throw DataError("cross-group comparison: " + query_id + " (" + query.group + ") vs " + candidate_id + " (" +
                    candidate.group + ")");
  }
  bump(&StageCounters::pairs, counters);

  PairDetail d;
  d.score.query_id = query_id;
  d.score.candidate_id = candidate_id;
  const bool swap = candidate_id < query_id;
  d.id_a = swap ? candidate_id : query_id;
  d.id_b = swap ? query_id : candidate_id;

  ImageFeatures scratch_a, scratch_b;
  const ImageFeatures& fa = features(d.id_a, scratch_a);
  const ImageFeatures& fb = features(d.id_b, scratch_b);
  if (keep_keypoints) {
    d.keypoints_a = fa.keypoints;
    d.keypoints_b = fb.keypoints;
  }

  d.matches = match_descriptors(fa.descriptors, fb.descriptors, config_.ratio);
  d.score.n_matches = static_cast<int>(d.matches.pairs.size());
  d.score.mean_kp_similarity = d.matches.mean_similarity();
  const CoarseDecision coarse = coarse_filter(d.matches, config_.coarse);
  if (!coarse.pass()) {
    d.score.stage = Stage::kRejectedCoarse;
    d.score.coarse_reason = coarse.reason;
    bump(&StageCounters::rejected_coarse, counters);
    return d;
  }

  bump(&StageCounters::alignment_attempts, counters);
  RansacParams ransac = config_.ransac;
  ransac.seed = pair_seed(config_.ransac.seed, d.id_a, d.id_b);
  d.model = try_estimate_affine(fa.keypoints, fb.keypoints, d.matches, ransac, d.id_a, d.id_b);
  if (!d.model) {
    d.score.stage = Stage::kRejectedAlignment;
    bump(&StageCounters::rejected_alignment, counters);
    return d;
  }
  d.score.affine_inliers = static_cast<int>(d.model->inliers.size());
  d.score.stage = Stage::kScored;

  const bool a_is_source = d.model->direction == Direction::kAtoB;
  d.source_id = a_is_source ? d.id_a : d.id_b;
  d.target_id = a_is_source ? d.id_b : d.id_a;
  const ImageRecord& source = corpus_.image(d.source_id);
  const ImageRecord& target = corpus_.image(d.target_id);
  const std::vector<CharRegion> src_regions = localize_characters(d.source_id, corpus_);
  const std::vector<CharRegion> tgt_regions = localize_characters(d.target_id, corpus_);

  if (src_regions.empty() || tgt_regions.empty()) {
    // Unannotated pair: fall back to the keypoint inlier ratio.
    const size_t smaller = std::min(fa.keypoints.size(), fb.keypoints.size());
    d.score.content = content_score({}, static_cast<int>(src_regions.size()));
    d.score.final_score =
        smaller > 0 ? std::clamp(static_cast<double>(d.score.affine_inliers) / smaller, 0.0, 1.0) : 0.0;
    return d;
  }

  bump(&StageCounters::content_evaluations, counters);
  const Rect bounds = image_rect(target);
  const Affine2D tgt_to_src = d.model->matrix.inverse();
  for (const CharRegion& r : src_regions) {
    CharRegion mapped = transform_region(*d.model, r, d.target_id);
    mapped.box = intersect(mapped.box, bounds);
    d.source_regions.push_back(std::move(mapped));
  }
  for (const RegionPair& p : associate_regions(d.source_regions, tgt_regions, config_.min_iou)) {
    CharacterMatch m;
    m.region_src = d.source_regions[p.src];
    m.region_tgt = tgt_regions[p.tgt];
    m.iou = p.iou;
    m.src_index = p.src;
    m.tgt_index = p.tgt;
    m.similarity = similarity_.aligned_similarity(source.image, tgt_to_src, target.image, m.region_tgt.box);
    d.characters.push_back(std::move(m));
  }
  d.score.content = content_score(d.characters, static_cast<int>(src_regions.size()));
  d.score.final_score = d.score.content->score;
  return d;
}

CandidateScore Pipeline::score_pair(const std::string& query_id, const std::string& candidate_id,
                                    StageCounters* counters) const {
  return run_pair(query_id, candidate_id, counters, false).score;
}

RankedList Pipeline::search(const std::string& query_id, int k, StageCounters* counters,
                            std::vector<double>* pair_seconds) const {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  const std::string& group = group_of(corpus_, query_id);
  std::vector<std::string> candidates;
  for (const std::string& id : corpus_.groups().at(group)) {
    if (id != query_id) candidates.push_back(id);
  }
  std::vector<CandidateScore> scores(candidates.size());
  std::vector<double> seconds(candidates.size(), 0.0);
  parallel_for(candidates.size(), config_.workers, [&](size_t i) {
    const auto start = std::chrono::steady_clock::now();
    scores[i] = score_pair(query_id, candidates[i], counters);
    seconds[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  });
  std::sort(scores.begin(), scores.end(), ranks_before);
  if (static_cast<int>(scores.size()) > k) scores.resize(k);
  if (pair_seconds) pair_seconds->insert(pair_seconds->end(), seconds.begin(), seconds.end());
  return {query_id, std::move(scores), k};
}

std::vector<CandidateScore> Pipeline::discover(const std::string& group_id, double threshold,
                                               StageCounters* counters) const {
  auto it = corpus_.groups().find(group_id);
  if (it == corpus_.groups().end()) throw DataError("unknown group: " + group_id);
  const std::vector<std::string>& ids = it->second;
  std::vector<std::pair<size_t, size_t>> pairs;
  for (size_t i = 0; i < ids.size(); ++i)
    for (size_t j = i + 1; j < ids.size(); ++j) pairs.emplace_back(i, j);
  std::vector<CandidateScore> scores(pairs.size());
  parallel_for(pairs.size(), config_.workers,
               [&](size_t p) { scores[p] = score_pair(ids[pairs[p].first], ids[pairs[p].second], counters); });
  std::vector<CandidateScore> out;
  for (CandidateScore& s : scores) {
    if (s.final_score >= threshold) out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(), [](const CandidateScore& a, const CandidateScore& b) {
    if (a.final_score != b.final_score) return a.final_score > b.final_score;
    if (a.query_id != b.query_id) return a.query_id < b.query_id;
    return a.candidate_id < b.candidate_id;
  });
  return out;
}

CandidateScore score_pair(const std::string& query_id, const std::string& candidate_id, const FeatureIndex& index,
                          const Corpus& corpus, const PipelineConfig& config) {
  return Pipeline(corpus, index, config).score_pair(query_id, candidate_id);
}

RankedList search(const std::string& query_id, int k, const FeatureIndex& index, const Corpus& corpus,
                  const PipelineConfig& config) {
  return Pipeline(corpus, index, config).search(query_id, k);
}

std::vector<CandidateScore> discover(const std::string& group_id, double threshold, const FeatureIndex& index,
                                     const Corpus& corpus, const PipelineConfig& config) {
  return Pipeline(corpus, index, config).discover(group_id, threshold);
}

json to_json(const CandidateScore& s) {
  json content = nullptr;
  if (s.content) {
    content = {{"matched", s.content->matched},
               {"coverage", s.content->coverage},
               {"mean_similarity", s.content->mean_similarity}};
  }
  return {{"query", s.query_id},
          {"candidate", s.candidate_id},
          {"stage", std::string(to_string(s.stage))},
          {"final_score", s.final_score},
          {"n_matches", s.n_matches},
          {"affine_inliers", s.affine_inliers},
          {"content", std::move(content)}};
}

json to_json(const RankedList& list) {
  json entries = json::array();
  for (const CandidateScore& s : list.entries) entries.push_back(to_json(s));
  return entries;
}

}  // namespace dupscan
