#include "toxkge/effects.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <regex>
#include <unordered_map>

#include <json.hpp>

#include "toxkge/detail/text.hpp"
#include "toxkge/error.hpp"

namespace toxkge::effects {

namespace {

constexpr std::array<std::string_view, 6> kColumns = {"chemical", "species", "concentration",
                                                      "unit",     "endpoint", "effect"};

}  // namespace

std::vector<EffectRecord> parse_effects(std::string_view csv) {
  auto ls = detail::lines(csv);
  std::vector<EffectRecord> out;
  if (ls.empty()) return out;

  auto header = detail::split_csv(ls[0]);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[detail::lower(detail::trim(header[i]))] = i;
  for (auto name : kColumns)
    if (!col.contains(std::string(name))) throw ParseError("missing column '" + std::string(name) + "'", 1);
  std::optional<std::size_t> label_col;
  if (auto it = col.find("label"); it != col.end()) label_col = it->second;

  for (std::size_t i = 1; i < ls.size(); ++i) {
    if (detail::trim(ls[i]).empty()) continue;
    auto f = detail::split_csv(ls[i]);
    auto get = [&](std::string_view name) -> std::string {
      auto idx = col.at(std::string(name));
      if (idx >= f.size()) throw ParseError("row has too few columns", i + 1);
      return std::string(detail::trim(f[idx]));
    };
    EffectRecord r;
    r.chemical = get("chemical");
    r.species = get("species");
    auto conc = detail::parse_double(get("concentration"));
    if (!conc || !std::isfinite(*conc)) throw ParseError("non-numeric concentration", i + 1);
    r.concentration = *conc;
    r.unit = get("unit");
    r.endpoint = get("endpoint");
    r.effect = get("effect");
    if (r.chemical.empty() || r.species.empty()) throw ParseError("empty chemical or species", i + 1);
    if (label_col) {
      auto l = detail::parse_int(*label_col < f.size() ? f[*label_col] : "");
      if (!l || (*l != 0 && *l != 1)) throw ParseError("label must be 0 or 1", i + 1);
      r.label = static_cast<int>(*l);
    } else {
      r.label = binarize_label(r.endpoint, r.effect);
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<EffectRecord> load_effects(const std::filesystem::path& path) {
  return parse_effects(detail::read_file(path));
}

std::string format_effects(const std::vector<EffectRecord>& records) {
  std::string out = "chemical,species,concentration,unit,endpoint,effect,label\n";
  for (const auto& r : records) {
    out += detail::csv_escape(r.chemical) + ',' + detail::csv_escape(r.species) + ',' +
           detail::format_double(r.concentration) + ',' + detail::csv_escape(r.unit) + ',' +
           detail::csv_escape(r.endpoint) + ',' + detail::csv_escape(r.effect) + ',' + std::to_string(r.label) + '\n';
  }
  return out;
}

void write_effects(const std::vector<EffectRecord>& records, const std::filesystem::path& path) {
  detail::write_file(path, format_effects(records));
}

UnitRegistry UnitRegistry::builtin() {
  UnitRegistry r;
  r.add("mg/L", {1.0, 0.0});
  r.add("ug/L", {1e-3, 0.0});
  r.add("µg/L", {1e-3, 0.0});
  r.add("ppb", {1e-3, 0.0});
  r.add("ppm", {1.0, 0.0});
  r.add("g/L", {1e3, 0.0});
  r.add("ng/L", {1e-6, 0.0});
  return r;
}

void UnitRegistry::load(const std::filesystem::path& path) {
  std::size_t line_no = 0;
  const std::string text = detail::read_file(path);
  for (auto line : detail::lines(text)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto f = detail::split_csv(line);
    if (f.size() != 3) throw ParseError("expected unit,multiplier,offset", line_no);
    auto mult = detail::parse_double(f[1]);
    auto off = detail::parse_double(f[2]);
    if (line_no == 1 && !mult && detail::lower(detail::trim(f[0])) == "unit") continue;
    if (!mult || !off) throw ParseError("non-numeric conversion factor", line_no);
    if (!(*mult > 0)) throw ParseError("conversion multiplier must be > 0", line_no);
    add(detail::trim(f[0]), {*mult, *off});
  }
}

void UnitRegistry::add(std::string_view unit, UnitEntry e) {
  if (!(e.multiplier > 0)) throw DataError("conversion multiplier must be > 0");
  entries_[detail::lower(detail::trim(unit))] = e;
}

std::optional<UnitEntry> UnitRegistry::find(std::string_view unit) const {
  auto it = entries_.find(detail::lower(detail::trim(unit)));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

EffectRecord convert_units(EffectRecord rec, const UnitRegistry& units) {
  auto e = units.find(rec.unit);
  if (!e) throw DataError("unknown concentration unit: '" + rec.unit + "'");
  rec.concentration = rec.concentration * e->multiplier + e->offset;
  if (!(rec.concentration > 0))
    throw DataError("concentration must be positive after conversion (" + rec.chemical + ", " + rec.species + ")");
  rec.unit = std::string(kTargetUnit);
  return rec;
}

int binarize_label(std::string_view endpoint, std::string_view effect) {
  static const std::regex lethal(R"(^(LC|LD)[0-9]*\*?$)");
  static const std::regex ec(R"(^EC[0-9]*\*?$)");
  std::string ep(detail::trim(endpoint));
  std::transform(ep.begin(), ep.end(), ep.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (ep == "NR-LETH" || std::regex_match(ep, lethal)) return 1;
  if (std::regex_match(ep, ec)) {
    auto eff = detail::lower(detail::trim(effect));
    if (eff == "mor" || eff.find("mortality") != std::string::npos) return 1;
  }
  return 0;
}

std::vector<EffectRecord> filter_mapped(const std::vector<EffectRecord>& records,
                                        const std::set<std::string>& chemicals, const std::set<std::string>& species) {
  std::vector<EffectRecord> out;
  for (const auto& r : records)
    if (chemicals.contains(r.chemical) && species.contains(r.species)) out.push_back(r);
  return out;
}

std::vector<EffectRecord> dedup_median(const std::vector<EffectRecord>& records) {
  std::map<std::tuple<std::string, std::string, int>, std::size_t> index;
  std::vector<EffectRecord> out;
  std::vector<std::vector<double>> values;
  for (const auto& r : records) {
    auto key = std::make_tuple(r.chemical, r.species, r.label);
    auto [it, inserted] = index.try_emplace(key, out.size());
    if (inserted) {
      out.push_back(r);
      values.emplace_back();
    }
    values[it->second].push_back(r.concentration);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& v = values[i];
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    out[i].concentration = n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
  }
  return out;
}

EffectRecord log_normalize(EffectRecord rec) {
  if (!(rec.concentration > 0)) throw DataError("cannot log-normalize a non-positive concentration");
  rec.concentration = std::log10(rec.concentration);
  rec.unit = std::string(kLogUnit);
  return rec;
}

std::vector<EffectRecord> prepare(const std::vector<EffectRecord>& raw, const UnitRegistry& units,
                                  const std::set<std::string>* chemicals, const std::set<std::string>* species) {
  std::vector<EffectRecord> converted;
  converted.reserve(raw.size());
  for (const auto& r : raw) converted.push_back(convert_units(r, units));
  if (chemicals && species) converted = filter_mapped(converted, *chemicals, *species);
  auto deduped = dedup_median(converted);
  for (auto& r : deduped) r = log_normalize(std::move(r));
  return deduped;
}

// --- Splits ------------------------------------------------------------------

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Random: return "i";
    case Strategy::Chemical: return "ii";
    case Strategy::Species: return "iii";
    case Strategy::Both: return "iv";
  }
  return "i";
}

Strategy parse_strategy(std::string_view s) {
  auto v = detail::lower(detail::trim(s));
  if (v == "i" || v == "1") return Strategy::Random;
  if (v == "ii" || v == "2") return Strategy::Chemical;
  if (v == "iii" || v == "3") return Strategy::Species;
  if (v == "iv" || v == "4") return Strategy::Both;
  throw ConfigError("unknown split strategy: " + std::string(s));
}

void Proportions::validate() const {
  if (train < 0 || validation < 0 || test < 0) throw ConfigError("split proportions must be non-negative");
  if (std::abs(train + validation + test - 1.0) > 1e-9) throw ConfigError("split proportions must sum to 1");
}

namespace {

// Assigns each group (given by its sample count, in shuffled order) to a
// partition 0/1/2. Validation and test receive one group first; the rest go to
// the partition with the largest remaining deficit.
std::vector<int> greedy_assign(const std::vector<std::size_t>& sizes, const std::array<double, 3>& target) {
  if (sizes.size() < 3) throw DataError("too few groups to populate train, validation and test partitions");
  const double total = static_cast<double>(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}));
  std::array<double, 3> filled{0, 0, 0};
  std::vector<int> out(sizes.size());
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    int part = 0;
    if (i == 0)
      part = 1;
    else if (i == 1)
      part = 2;
    else {
      double best = -std::numeric_limits<double>::infinity();
      for (int p = 0; p < 3; ++p) {
        double deficit = target[static_cast<std::size_t>(p)] * total - filled[static_cast<std::size_t>(p)];
        if (deficit > best) {
          best = deficit;
          part = p;
        }
      }
    }
    out[i] = part;
    filled[static_cast<std::size_t>(part)] += static_cast<double>(sizes[i]);
  }
  return out;
}

// Group key -> partition for a shuffled key order.
template <typename KeyFn>
std::map<std::string, int> partition_keys(const std::vector<EffectRecord>& records, KeyFn key,
                                          const std::array<double, 3>& target, std::mt19937_64& rng) {
  std::map<std::string, std::size_t> counts;
  for (const auto& r : records) ++counts[key(r)];
  std::vector<std::string> keys;
  for (const auto& [k, n] : counts) keys.push_back(k);
  std::shuffle(keys.begin(), keys.end(), rng);
  std::vector<std::size_t> sizes;
  for (const auto& k : keys) sizes.push_back(counts[k]);
  auto parts = greedy_assign(sizes, target);
  std::map<std::string, int> out;
  for (std::size_t i = 0; i < keys.size(); ++i) out[keys[i]] = parts[i];
  return out;
}

std::string pair_key(const EffectRecord& r) { return r.chemical + '\x1f' + r.species; }

}  // namespace

SplitResult split_strategy(const std::vector<EffectRecord>& records, Strategy strategy, const Proportions& p,
                           std::uint64_t seed) {
  p.validate();
  std::mt19937_64 rng(seed);
  const std::array<double, 3> target{p.train, p.validation, p.test};
  SplitResult out;
  out.strategy = strategy;
  auto place = [&](const EffectRecord& r, int part) {
    (part == 0 ? out.train : part == 1 ? out.validation : out.test).push_back(r);
  };

  if (strategy == Strategy::Both) {
    std::array<double, 3> root{};
    double norm = 0;
    for (std::size_t i = 0; i < 3; ++i) norm += root[i] = std::sqrt(target[i]);
    for (auto& r : root) r /= norm;
    auto chem = partition_keys(records, [](const EffectRecord& r) { return r.chemical; }, root, rng);
    auto spec = partition_keys(records, [](const EffectRecord& r) { return r.species; }, root, rng);
    for (const auto& r : records) {
      int a = chem.at(r.chemical), b = spec.at(r.species);
      if (a == b)
        place(r, a);
      else
        ++out.discarded;
    }
  } else {
    std::function<std::string(const EffectRecord&)> key = pair_key;
    if (strategy == Strategy::Chemical) key = [](const EffectRecord& r) { return r.chemical; };
    if (strategy == Strategy::Species) key = [](const EffectRecord& r) { return r.species; };
    auto parts = partition_keys(records, key, target, rng);
    for (const auto& r : records) place(r, parts.at(key(r)));
  }
  if (out.train.empty() || out.validation.empty() || out.test.empty())
    throw DataError("split left a partition empty; too few groups for strategy " + std::string(to_string(strategy)));
  return out;
}

std::vector<EffectRecord> oversample(std::vector<EffectRecord> train, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < train.size(); ++i) (train[i].label ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty()) throw DataError("oversampling needs both classes in the training partition");
  const auto& minority = pos.size() < neg.size() ? pos : neg;
  const std::size_t deficit = std::max(pos.size(), neg.size()) - minority.size();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, minority.size() - 1);
  const std::vector<std::size_t> source = minority;
  for (std::size_t i = 0; i < deficit; ++i) train.push_back(train[source[pick(rng)]]);
  return train;
}

void write_split(const SplitResult& s, const std::filesystem::path& dir) {
  write_effects(s.train, dir / "train.csv");
  write_effects(s.validation, dir / "validation.csv");
  write_effects(s.test, dir / "test.csv");
  auto distinct = [](const std::vector<EffectRecord>& rs, bool chemical) {
    std::set<std::string> names;
    for (const auto& r : rs) names.insert(chemical ? r.chemical : r.species);
    return names.size();
  };
  auto positives = [](const std::vector<EffectRecord>& rs) {
    return std::count_if(rs.begin(), rs.end(), [](const EffectRecord& r) { return r.label == 1; });
  };
  nlohmann::ordered_json j;
  j["strategy"] = std::string(to_string(s.strategy));
  j["discarded"] = s.discarded;
  for (auto [name, part] : {std::pair{"train", &s.train}, {"validation", &s.validation}, {"test", &s.test}}) {
    j[name] = {{"samples", part->size()},
               {"positives", positives(*part)},
               {"chemicals", distinct(*part, true)},
               {"species", distinct(*part, false)}};
  }
  detail::write_file(dir / "summary.json", j.dump(2) + "\n");
}

}  // namespace toxkge::effects
