#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace toxkge::effects {

/// One effect experiment: chemical c, species s, concentration kappa and a
/// binary lethal label y.
struct EffectRecord {
  std::string chemical;
  std::string species;
  double concentration{0};
  std::string unit;
  std::string endpoint;
  std::string effect;
  int label{0};

  bool operator==(const EffectRecord&) const = default;
};

/// Header `chemical,species,concentration,unit,endpoint,effect`, extra columns
/// ignored. A `label` column, when present, overrides the endpoint rule.
std::vector<EffectRecord> parse_effects(std::string_view csv);
std::vector<EffectRecord> load_effects(const std::filesystem::path& path);
std::string format_effects(const std::vector<EffectRecord>& records);
void write_effects(const std::vector<EffectRecord>& records, const std::filesystem::path& path);

struct UnitEntry {
  double multiplier{1.0};
  double offset{0.0};
};

/// Unit symbol -> mg/L conversion. Lookup ignores ASCII case.
class UnitRegistry {
public:
  /// mg/L, ug/L (also µg/L, ppb), ppm, g/L and ng/L.
  static UnitRegistry builtin();
  /// Adds entries from a `unit,multiplier,offset` CSV (header optional).
  void load(const std::filesystem::path& path);
  void add(std::string_view unit, UnitEntry e);
  std::optional<UnitEntry> find(std::string_view unit) const;

private:
  std::map<std::string, UnitEntry> entries_;
};

inline constexpr std::string_view kTargetUnit = "mg/L";
inline constexpr std::string_view kLogUnit = "log10(mg/L)";

/// Converts to mg/L. Throws DataError naming the unit when it is unknown, or
/// when the converted value is not positive.
EffectRecord convert_units(EffectRecord rec, const UnitRegistry& units);

/// 1 for LCx, LDx and NR-LETH endpoints, and for ECx with a mortality effect.
int binarize_label(std::string_view endpoint, std::string_view effect);

/// Keeps records whose chemical and species are both in the given sets.
std::vector<EffectRecord> filter_mapped(const std::vector<EffectRecord>& records,
                                        const std::set<std::string>& chemicals, const std::set<std::string>& species);

/// One record per (chemical, species, label) group carrying the median
/// concentration (mean of the middle pair for even sizes). Groups appear in
/// first-seen order; endpoint, effect and unit come from the first record.
std::vector<EffectRecord> dedup_median(const std::vector<EffectRecord>& records);

/// Replaces the concentration with its base-10 logarithm.
EffectRecord log_normalize(EffectRecord rec);

/// convert_units, filter (when sets are given), dedup_median, log_normalize.
std::vector<EffectRecord> prepare(const std::vector<EffectRecord>& raw, const UnitRegistry& units,
                                  const std::set<std::string>* chemicals = nullptr,
                                  const std::set<std::string>* species = nullptr);

// --- Splits ----------------------------------------------------------------

/// (i) random over samples, (ii) disjoint chemicals, (iii) disjoint species,
/// (iv) disjoint chemicals and species.
enum class Strategy { Random, Chemical, Species, Both };

std::string_view to_string(Strategy s);  // "i".."iv"
Strategy parse_strategy(std::string_view s);

struct Proportions {
  double train{0.7};
  double validation{0.15};
  double test{0.15};
  void validate() const;
};

struct SplitResult {
  std::vector<EffectRecord> train;
  std::vector<EffectRecord> validation;
  std::vector<EffectRecord> test;
  Strategy strategy{Strategy::Random};
  std::size_t discarded{0};  ///< samples dropped by (iv) because c and s fell in different partitions
};

/// Group-based split. (i) groups by (chemical, species) pair, (ii) by
/// chemical, (iii) by species. Groups are shuffled, one is placed in each of
/// validation and test, and the rest go greedily to the partition furthest
/// below its target sample count. (iv) partitions chemicals and species
/// independently this way toward square-root targets and keeps the samples
/// whose chemical and species share a partition. Throws DataError when a
/// partition would be empty.
SplitResult split_strategy(const std::vector<EffectRecord>& records, Strategy strategy, const Proportions& p,
                           std::uint64_t seed);

/// Appends random duplicates of minority-class records until the classes
/// differ by at most one. Throws DataError when a class is absent.
std::vector<EffectRecord> oversample(std::vector<EffectRecord> train, std::uint64_t seed);

/// train.csv, validation.csv, test.csv and summary.json under `dir`.
void write_split(const SplitResult& s, const std::filesystem::path& dir);

}  // namespace toxkge::effects
