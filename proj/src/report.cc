#include "dupscan/report.h"

#include <cstdio>
#include <set>
#include <sstream>

namespace dupscan {

namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string data_uri(const GrayImage& image) {
  const std::vector<uint8_t> png = encode_png(image);
  return "data:image/png;base64," + base64_encode(png);
}

void rect(std::ostream& out, const Rect& r, double dx, const char* style) {
  out << "<rect x=\"" << num(r.x + dx) << "\" y=\"" << num(r.y) << "\" width=\"" << num(r.w) << "\" height=\""
      << num(r.h) << "\" " << style << "/>\n";
}

constexpr const char* kStyle = R"(<style>
body{font-family:sans-serif;margin:1.5em;color:#222}
table{border-collapse:collapse;margin:.5em 0}
td,th{border:1px solid #bbb;padding:2px 8px;text-align:right}
th{background:#eee}
svg{border:1px solid #ccc;background:#fff}
.k{color:#666;font-size:90%}
</style>
)";

void pair_section(std::ostream& out, const PairDetail& d, const Corpus& corpus) {
  const ImageRecord& a = corpus.image(d.id_a);
  const ImageRecord& b = corpus.image(d.id_b);
  const double gap = 16.0;
  const double off_b = a.width() + gap;
  const double width = off_b + b.width();
  const double height = std::max(a.height(), b.height());
  const CandidateScore& s = d.score;

  out << "<h2>" << escape(s.query_id) << " &rarr; " << escape(s.candidate_id) << "</h2>\n";
  out << "<p>stage <b>" << to_string(s.stage) << "</b>, final score <b>" << num(s.final_score, 4) << "</b>, "
      << s.n_matches << " keypoint matches (mean similarity " << num(s.mean_kp_similarity, 3) << "), "
      << s.affine_inliers << " affine inliers";
  if (d.model) out << ", direction " << escape(d.source_id) << " &rarr; " << escape(d.target_id);
  out << "</p>\n";

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width, 0) << "\" height=\"" << num(height, 0)
      << "\" viewBox=\"0 0 " << num(width, 0) << " " << num(height, 0) << "\">\n";
  out << "<image x=\"0\" y=\"0\" width=\"" << a.width() << "\" height=\"" << a.height() << "\" href=\""
      << data_uri(a.image) << "\"/>\n";
  out << "<image x=\"" << num(off_b, 0) << "\" y=\"0\" width=\"" << b.width() << "\" height=\"" << b.height()
      << "\" href=\"" << data_uri(b.image) << "\"/>\n";

  std::set<int> inliers;
  if (d.model) inliers.insert(d.model->inliers.begin(), d.model->inliers.end());
  const bool have_kp = !d.keypoints_a.empty() && !d.keypoints_b.empty();
  if (have_kp) {
    out << "<g stroke-width=\"0.8\">\n";
    for (size_t i = 0; i < d.matches.pairs.size(); ++i) {
      const Match& m = d.matches.pairs[i];
      const Keypoint& ka = d.keypoints_a[m.index_a];
      const Keypoint& kb = d.keypoints_b[m.index_b];
      const bool inlier = inliers.count(static_cast<int>(i)) > 0;
      out << "<line x1=\"" << num(ka.x) << "\" y1=\"" << num(ka.y) << "\" x2=\"" << num(kb.x + off_b)
          << "\" y2=\"" << num(kb.y) << "\" stroke=\"" << (inlier ? "#1a9850" : "#d73027")
          << "\" stroke-opacity=\"" << (inlier ? "0.8" : "0.35") << "\"/>\n";
    }
    out << "</g>\n";
  }

  if (d.model) {
    const bool target_is_b = d.target_id == d.id_b;
    const double off_src = target_is_b ? 0.0 : off_b;
    const double off_tgt = target_is_b ? off_b : 0.0;
    out << "<g fill=\"none\">\n";
    for (const CharRegion& r : corpus.regions_of(d.source_id)) {
      rect(out, r.box, off_src, "stroke=\"#4575b4\" stroke-width=\"1\"");
    }
    for (const CharRegion& r : corpus.regions_of(d.target_id)) {
      rect(out, r.box, off_tgt, "stroke=\"#4575b4\" stroke-width=\"1\"");
    }
    for (const CharRegion& r : d.source_regions) {
      rect(out, r.box, off_tgt, "stroke=\"#f46d43\" stroke-width=\"1.2\" stroke-dasharray=\"3 2\"");
    }
    out << "</g>\n<g font-size=\"9\" fill=\"#a50026\">\n";
    for (const CharacterMatch& c : d.characters) {
      out << "<text x=\"" << num(c.region_tgt.box.x + off_tgt + 1) << "\" y=\""
          << num(c.region_tgt.box.y + 9) << "\">" << num(c.similarity) << "</text>\n";
    }
    out << "</g>\n";
  }
  out << "</svg>\n";
  out << "<p class=\"k\">green: inlier correspondences, red: rejected matches; blue: annotated character "
         "boxes; orange dashed: source boxes mapped into the target frame.</p>\n";

  if (!d.characters.empty()) {
    out << "<table><tr><th>#</th><th>mapped source box</th><th>target box</th><th>IoU</th><th>similarity</th></tr>\n";
    for (size_t i = 0; i < d.characters.size(); ++i) {
      const CharacterMatch& c = d.characters[i];
      const Rect& rs = c.region_src.box;
      const Rect& rt = c.region_tgt.box;
      out << "<tr><td>" << i + 1 << "</td><td>" << num(rs.x, 1) << "," << num(rs.y, 1) << " " << num(rs.w, 1)
          << "x" << num(rs.h, 1) << "</td><td>" << num(rt.x, 1) << "," << num(rt.y, 1) << " " << num(rt.w, 1)
          << "x" << num(rt.h, 1) << "</td><td>" << num(c.iou, 3) << "</td><td>" << num(c.similarity, 3)
          << "</td></tr>\n";
    }
    out << "</table>\n";
  }
  if (s.content) {
    out << "<p>content: " << s.content->matched << "/" << s.content->total_src << " characters matched, coverage "
        << num(s.content->coverage, 3) << ", mean similarity " << num(s.content->mean_similarity, 3) << "</p>\n";
  }
}

}  // namespace

std::string base64_encode(std::span<const uint8_t> bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const uint32_t v = uint32_t(bytes[i]) << 16 | uint32_t(bytes[i + 1]) << 8 | bytes[i + 2];
    out += kAlphabet[v >> 18];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i < bytes.size()) {
    uint32_t v = uint32_t(bytes[i]) << 16;
    if (i + 1 < bytes.size()) v |= uint32_t(bytes[i + 1]) << 8;
    out += kAlphabet[v >> 18];
    out += kAlphabet[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string render_pair_report(const PairDetail& detail, const Corpus& corpus) {
  std::ostringstream out;
  out << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>dupscan: " << escape(detail.id_a) << " / "
      << escape(detail.id_b) << "</title>\n"
      << kStyle << "</head><body>\n";
  pair_section(out, detail, corpus);
  out << "</body></html>\n";
  return out.str();
}

std::string render_search_report(const RankedList& list, const std::vector<PairDetail>& details,
                                 const Corpus& corpus) {
  std::ostringstream out;
  out << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>dupscan: " << escape(list.query_id)
      << "</title>\n"
      << kStyle << "</head><body>\n<h1>Query " << escape(list.query_id) << "</h1>\n";
  out << "<table><tr><th>rank</th><th>candidate</th><th>stage</th><th>score</th><th>matches</th><th>inliers</th>"
         "</tr>\n";
  for (size_t i = 0; i < list.entries.size(); ++i) {
    const CandidateScore& s = list.entries[i];
    out << "<tr><td>" << i + 1 << "</td><td>" << escape(s.candidate_id) << "</td><td>" << to_string(s.stage)
        << "</td><td>" << num(s.final_score, 4) << "</td><td>" << s.n_matches << "</td><td>" << s.affine_inliers
        << "</td></tr>\n";
  }
  out << "</table>\n";
  for (const PairDetail& d : details) pair_section(out, d, corpus);
  out << "</body></html>\n";
  return out.str();
}

}  // namespace dupscan
