#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace toxkge::align {

struct Mapping {
  std::string source;
  std::string target;
  double confidence{1.0};

  bool operator==(const Mapping&) const = default;
};

struct AlignmentScores {
  std::size_t num_mappings{0};  ///< #M
  double recall{0};             ///< R = |M ∩ ref| / |ref|
  double est_precision{0};      ///< P≈ = |M≈ ∩ ref| / |M≈|
};

/// name -> all labels known for that entity
using Vocabulary = std::map<std::string, std::vector<std::string>>;

std::size_t edit_distance(std::string_view a, std::string_view b);

/// 1 - edit_distance / max(|a|, |b|); 1 when both are empty.
double levenshtein_similarity(std::string_view a, std::string_view b);

/// Lowercases, trims, collapses whitespace and drops the "sp." / "var." tokens.
std::string normalize_label(std::string_view label);

/// Every (source, target) pair whose best label-pair similarity exceeds
/// `threshold`, with that similarity as confidence. Sorted by (source, target).
std::vector<Mapping> lexical_match(const Vocabulary& src, const Vocabulary& tgt, double threshold);

/// Greedy 1-to-1 reduction: highest confidence first, ties by (source, target).
std::vector<Mapping> filter_one_to_one(std::vector<Mapping> m);

AlignmentScores evaluate_alignment(const std::vector<Mapping>& m, const std::vector<Mapping>& ref);

/// `source<TAB>target[<TAB>confidence]` per line; confidence defaults to 1.
std::vector<Mapping> load_mappings(const std::filesystem::path& path);
void write_mappings(const std::vector<Mapping>& m, const std::filesystem::path& path);

/// `name<TAB>label` per line; repeated names accumulate labels.
Vocabulary load_vocabulary(const std::filesystem::path& path);

}  // namespace toxkge::align
