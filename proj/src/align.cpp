#include "toxkge/align.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <utility>

#include "toxkge/detail/text.hpp"
#include "toxkge/error.hpp"

namespace toxkge::align {

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double levenshtein_similarity(std::string_view a, std::string_view b) {
  auto longest = std::max(a.size(), b.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(edit_distance(a, b)) / static_cast<double>(longest);
}

std::string normalize_label(std::string_view label) {
  std::istringstream words(detail::lower(detail::trim(label)));
  std::string word, out;
  while (words >> word) {
    if (word == "sp." || word == "var.") continue;
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

std::vector<Mapping> lexical_match(const Vocabulary& src, const Vocabulary& tgt, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw DataError("match threshold must lie in (0,1]");
  auto normalized = [](const Vocabulary& v) {
    std::vector<std::pair<std::string, std::vector<std::string>>> out;
    out.reserve(v.size());
    for (const auto& [name, labels] : v) {
      std::vector<std::string> norm;
      for (const auto& l : labels) norm.push_back(normalize_label(l));
      out.emplace_back(name, std::move(norm));
    }
    return out;
  };
  auto s = normalized(src);
  auto t = normalized(tgt);

  std::vector<Mapping> out;
  for (const auto& [sname, slabels] : s) {
    for (const auto& [tname, tlabels] : t) {
      double best = 0.0;
      for (const auto& a : slabels)
        for (const auto& b : tlabels) best = std::max(best, levenshtein_similarity(a, b));
      if (best > threshold) out.push_back({sname, tname, best});
    }
  }
  return out;
}

std::vector<Mapping> filter_one_to_one(std::vector<Mapping> m) {
  std::sort(m.begin(), m.end(), [](const Mapping& a, const Mapping& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.source != b.source) return a.source < b.source;
    return a.target < b.target;
  });
  std::set<std::string> used_src, used_tgt;
  std::vector<Mapping> out;
  for (auto& mapping : m) {
    if (used_src.contains(mapping.source) || used_tgt.contains(mapping.target)) continue;
    used_src.insert(mapping.source);
    used_tgt.insert(mapping.target);
    out.push_back(std::move(mapping));
  }
  std::sort(out.begin(), out.end(),
            [](const Mapping& a, const Mapping& b) { return std::tie(a.source, a.target) < std::tie(b.source, b.target); });
  return out;
}

AlignmentScores evaluate_alignment(const std::vector<Mapping>& m, const std::vector<Mapping>& ref) {
  if (ref.empty()) throw DataError("reference mapping set is empty");
  std::set<std::pair<std::string, std::string>> ref_pairs;
  std::set<std::string> ref_src, ref_tgt;
  for (const auto& r : ref) {
    ref_pairs.emplace(r.source, r.target);
    ref_src.insert(r.source);
    ref_tgt.insert(r.target);
  }
  std::set<std::pair<std::string, std::string>> generated;
  for (const auto& x : m) generated.emplace(x.source, x.target);

  std::size_t approx = 0, approx_hits = 0, hits = 0;
  for (const auto& [s, t] : generated) {
    bool hit = ref_pairs.contains({s, t});
    hits += hit;
    if (ref_src.contains(s) || ref_tgt.contains(t)) {
      ++approx;
      approx_hits += hit;
    }
  }
  AlignmentScores out;
  out.num_mappings = generated.size();
  out.recall = static_cast<double>(hits) / static_cast<double>(ref_pairs.size());
  out.est_precision = approx == 0 ? 0.0 : static_cast<double>(approx_hits) / static_cast<double>(approx);
  return out;
}

std::vector<Mapping> load_mappings(const std::filesystem::path& path) {
  std::vector<Mapping> out;
  std::size_t line_no = 0;
  const std::string text = detail::read_file(path);
  for (auto line : detail::lines(text)) {
    ++line_no;
    if (line.empty()) continue;
    auto cols = detail::split(line, '\t');
    if (cols.size() != 2 && cols.size() != 3) throw ParseError("expected source<TAB>target[<TAB>confidence]", line_no);
    Mapping mapping{std::string(cols[0]), std::string(cols[1]), 1.0};
    if (cols.size() == 3) {
      auto c = detail::parse_double(cols[2]);
      if (!c || *c < 0.0 || *c > 1.0) throw ParseError("confidence must be a number in [0,1]", line_no);
      mapping.confidence = *c;
    }
    out.push_back(std::move(mapping));
  }
  return out;
}

void write_mappings(const std::vector<Mapping>& m, const std::filesystem::path& path) {
  std::string out;
  for (const auto& x : m) out += x.source + '\t' + x.target + '\t' + detail::format_double(x.confidence) + '\n';
  detail::write_file(path, out);
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  Vocabulary out;
  std::size_t line_no = 0;
  const std::string text = detail::read_file(path);
  for (auto line : detail::lines(text)) {
    ++line_no;
    if (line.empty()) continue;
    auto cols = detail::split(line, '\t');
    if (cols.size() != 2) throw ParseError("expected name<TAB>label", line_no);
    out[std::string(cols[0])].emplace_back(cols[1]);
  }
  return out;
}

}  // namespace toxkge::align
