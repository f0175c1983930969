#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "toxkge/detail/text.hpp"
#include "toxkge/effects.hpp"
#include "toxkge/error.hpp"

using namespace toxkge;
using namespace toxkge::effects;

namespace {

EffectRecord rec(std::string c, std::string s, double conc, int label = 1) {
  return {std::move(c), std::move(s), conc, std::string(kTargetUnit), "LC50", "MOR", label};
}

std::vector<EffectRecord> random_dataset(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> chems(3, 12), species(3, 12), size(30, 120);
  const int nc = chems(rng), ns = species(rng), n = size(rng);
  std::uniform_int_distribution<int> c(0, nc - 1), s(0, ns - 1);
  std::bernoulli_distribution lethal(0.6);
  std::vector<EffectRecord> out;
  for (int i = 0; i < n; ++i)
    out.push_back(rec("c" + std::to_string(c(rng)), "s" + std::to_string(s(rng)), 1.0 + i, lethal(rng) ? 1 : 0));
  return out;
}

template <class Key>
std::set<std::string> keys(const std::vector<EffectRecord>& v, Key key) {
  std::set<std::string> out;
  for (const auto& r : v) out.insert(key(r));
  return out;
}

bool disjoint(const std::set<std::string>& a, const std::set<std::string>& b) {
  return std::none_of(a.begin(), a.end(), [&](const auto& x) { return b.contains(x); });
}

}  // namespace

TEST_CASE("parse_effects") {
  auto r = parse_effects("chemical,species,concentration,unit,endpoint,effect,extra\n134623,1,110000,µg/L,LC50,MOR,z\n");
  REQUIRE(r.size() == 1);
  CHECK(r[0].chemical == "134623");
  CHECK(r[0].species == "1");
  CHECK(r[0].concentration == 110000.0);
  CHECK(r[0].unit == "µg/L");
  CHECK(r[0].endpoint == "LC50");
  CHECK(r[0].effect == "MOR");
  CHECK(r[0].label == 1);
  CHECK(parse_effects("").empty());
  CHECK_THROWS_AS(parse_effects("chemical,species,concentration,unit,endpoint\n"), ParseError);
  try {
    parse_effects("chemical,species,concentration,unit,endpoint,effect\na,b,1,mg/L,LC50,MOR\na,b,x,mg/L,LC50,MOR\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  // explicit label column wins over the endpoint rule
  auto l = parse_effects("chemical,species,concentration,unit,endpoint,effect,label\na,b,1,mg/L,LC50,MOR,0\n");
  CHECK(l[0].label == 0);
  auto round = parse_effects(format_effects(r));
  CHECK(round == r);
}

TEST_CASE("unit conversion") {
  auto u = UnitRegistry::builtin();
  EffectRecord r{"c", "s", 110000, "µg/L", "LC50", "MOR", 1};
  CHECK(convert_units(r, u).concentration == doctest::Approx(110.0).epsilon(1e-15));
  CHECK(convert_units(r, u).unit == kTargetUnit);
  r.unit = "ug/L";
  CHECK(convert_units(r, u).concentration == doctest::Approx(110.0).epsilon(1e-15));
  r.unit = "mg/l";
  r.concentration = 5;
  CHECK(convert_units(r, u).concentration == 5.0);
  r.unit = "furlongs";
  try {
    convert_units(r, u);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("furlongs") != std::string::npos);
  }

  auto path = std::filesystem::temp_directory_path() / "toxkge_units.csv";
  detail::write_file(path, "unit,multiplier,offset\nfurlongs,2,1\n");
  u.load(path);
  CHECK(convert_units(r, u).concentration == 11.0);
  std::filesystem::remove(path);
}

TEST_CASE("binarize_label") {
  CHECK(binarize_label("LC50", "MOR") == 1);
  CHECK(binarize_label("LD10", "GRO") == 1);
  CHECK(binarize_label("NR-LETH", "") == 1);
  CHECK(binarize_label("EC50", "MOR") == 1);
  CHECK(binarize_label("EC50", "GRO") == 0);
  CHECK(binarize_label("NOEL", "growth") == 0);
  CHECK(binarize_label("BCF", "ACC") == 0);
}

TEST_CASE("dedup_median") {
  auto one = dedup_median({rec("a", "b", 1), rec("a", "b", 2), rec("a", "b", 10)});
  REQUIRE(one.size() == 1);
  CHECK(one[0].concentration == 2.0);
  CHECK(dedup_median({rec("a", "b", 1), rec("a", "b", 3)})[0].concentration == 2.0);
  CHECK(dedup_median({rec("a", "b", 7)}) == std::vector<EffectRecord>{rec("a", "b", 7)});
  // the label separates groups
  CHECK(dedup_median({rec("a", "b", 1, 1), rec("a", "b", 3, 0)}).size() == 2);

  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    auto d = dedup_median(random_dataset(rng));
    CHECK(dedup_median(d) == d);
  }
}

TEST_CASE("log_normalize") {
  CHECK(log_normalize(rec("a", "b", 1)).concentration == 0.0);
  CHECK(log_normalize(rec("a", "b", 110)).concentration == doctest::Approx(2.0414).epsilon(1e-4));
  CHECK_THROWS_AS(log_normalize(rec("a", "b", 0)), DataError);
}

TEST_CASE("worked example flows through preparation") {
  auto raw = parse_effects("chemical,species,concentration,unit,endpoint,effect\n134623,1,110000,µg/L,LC50,MOR\n");
  auto out = prepare(raw, UnitRegistry::builtin());
  REQUIRE(out.size() == 1);
  CHECK(out[0].chemical == "134623");
  CHECK(out[0].species == "1");
  CHECK(out[0].label == 1);
  CHECK(std::abs(out[0].concentration - std::log10(110.0)) <= 1e-12);
  CHECK(std::round(out[0].concentration * 1e4) / 1e4 == 2.0414);
  CHECK(out[0].unit == kLogUnit);

  std::set<std::string> chems{"zzz"}, sp{"1"};
  CHECK(prepare(raw, UnitRegistry::builtin(), &chems, &sp).empty());
}

TEST_CASE("filter_mapped") {
  std::vector<EffectRecord> v{rec("a", "x", 1), rec("b", "x", 1), rec("a", "y", 1)};
  auto f = filter_mapped(v, {"a"}, {"x"});
  REQUIRE(f.size() == 1);
  CHECK(f[0] == rec("a", "x", 1));
}

TEST_CASE("split examples") {
  std::vector<EffectRecord> toy;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 5; ++i) toy.push_back(rec("c" + std::to_string(c), "s" + std::to_string(i), 1.0 + i));
  auto s = split_strategy(toy, Strategy::Chemical, {}, 3);
  std::map<std::string, int> where;
  int idx = 0;
  for (const auto* part : {&s.train, &s.validation, &s.test}) {
    for (const auto& r : *part) {
      auto [it, fresh] = where.emplace(r.chemical, idx);
      CHECK(it->second == idx);
    }
    ++idx;
  }
  CHECK(where.size() == 3);

  std::vector<EffectRecord> grid;
  for (int c = 0; c < 4; ++c)
    for (int sp = 0; sp < 4; ++sp) grid.push_back(rec("c" + std::to_string(c), "s" + std::to_string(sp), 1.0));
  auto iv = split_strategy(grid, Strategy::Both, {}, 5);
  auto chem = [](const EffectRecord& r) { return r.chemical; };
  auto spec = [](const EffectRecord& r) { return r.species; };
  CHECK(disjoint(keys(iv.train, chem), keys(iv.test, chem)));
  CHECK(disjoint(keys(iv.train, chem), keys(iv.validation, chem)));
  CHECK(disjoint(keys(iv.validation, chem), keys(iv.test, chem)));
  CHECK(disjoint(keys(iv.train, spec), keys(iv.test, spec)));
  CHECK(disjoint(keys(iv.train, spec), keys(iv.validation, spec)));
  CHECK(disjoint(keys(iv.validation, spec), keys(iv.test, spec)));
  CHECK(iv.train.size() + iv.validation.size() + iv.test.size() + iv.discarded == grid.size());

  CHECK_THROWS_AS(split_strategy({rec("a", "b", 1), rec("a", "c", 1)}, Strategy::Chemical, {}, 1), DataError);
  CHECK_THROWS_AS(split_strategy(toy, Strategy::Random, {0.5, 0.2, 0.2}, 1), ConfigError);
  CHECK(split_strategy(toy, Strategy::Species, {}, 9).train == split_strategy(toy, Strategy::Species, {}, 9).train);
}

TEST_CASE("split invariants hold on random datasets") {
  std::mt19937_64 rng(2);
  auto chem = [](const EffectRecord& r) { return r.chemical; };
  auto spec = [](const EffectRecord& r) { return r.species; };
  auto pair = [](const EffectRecord& r) { return r.chemical + "\x1f" + r.species; };
  int done = 0;
  while (done < 1000) {
    auto d = random_dataset(rng);
    for (Strategy st : {Strategy::Random, Strategy::Chemical, Strategy::Species, Strategy::Both}) {
      SplitResult s;
      try {
        s = split_strategy(d, st, {}, rng());
      } catch (const DataError&) {
        continue;  // too few groups for three partitions
      }
      CHECK(s.strategy == st);
      CHECK_FALSE(s.train.empty());
      CHECK_FALSE(s.validation.empty());
      CHECK_FALSE(s.test.empty());
      CHECK(s.train.size() + s.validation.size() + s.test.size() + s.discarded == d.size());
      if (st != Strategy::Both) CHECK(s.discarded == 0);
      auto check = [&](auto key) {
        CHECK(disjoint(keys(s.train, key), keys(s.validation, key)));
        CHECK(disjoint(keys(s.train, key), keys(s.test, key)));
        CHECK(disjoint(keys(s.validation, key), keys(s.test, key)));
      };
      check(pair);
      if (st == Strategy::Chemical || st == Strategy::Both) check(chem);
      if (st == Strategy::Species || st == Strategy::Both) check(spec);
    }
    ++done;
  }
}

TEST_CASE("oversample") {
  std::vector<EffectRecord> v;
  for (int i = 0; i < 84; ++i) v.push_back(rec("c" + std::to_string(i), "s", 1.0 + i, 1));
  for (int i = 0; i < 16; ++i) v.push_back(rec("n" + std::to_string(i), "s", 1.0 + i, 0));
  auto o = oversample(v, 1);
  CHECK(std::count_if(o.begin(), o.end(), [](const auto& r) { return r.label == 1; }) == 84);
  CHECK(std::count_if(o.begin(), o.end(), [](const auto& r) { return r.label == 0; }) == 84);
  // only multiplicities change
  std::set<std::string> original;
  for (const auto& r : v) original.insert(format_effects({r}));
  for (const auto& r : o) CHECK(original.contains(format_effects({r})));
  CHECK(std::equal(v.begin(), v.end(), o.begin()));

  std::vector<EffectRecord> balanced{rec("a", "s", 1, 1), rec("b", "s", 1, 0)};
  CHECK(oversample(balanced, 1) == balanced);
  CHECK_THROWS_AS(oversample({rec("a", "s", 1, 1)}, 1), DataError);

  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    auto d = random_dataset(rng);
    if (std::all_of(d.begin(), d.end(), [&](const auto& r) { return r.label == d[0].label; })) continue;
    auto b = oversample(d, rng());
    long pos = std::count_if(b.begin(), b.end(), [](const auto& r) { return r.label == 1; });
    CHECK(std::abs(pos - static_cast<long>(b.size() - pos)) <= 1);
  }
}

TEST_CASE("write_split") {
  std::vector<EffectRecord> toy;
  for (int c = 0; c < 6; ++c) toy.push_back(rec("c" + std::to_string(c), "s", 1.0 + c));
  auto s = split_strategy(toy, Strategy::Chemical, {}, 4);
  auto dir = std::filesystem::temp_directory_path() / "toxkge_split_test";
  std::filesystem::remove_all(dir);
  write_split(s, dir);
  for (const char* f : {"train.csv", "validation.csv", "test.csv", "summary.json"})
    CHECK(std::filesystem::exists(dir / f));
  CHECK(load_effects(dir / "train.csv") == s.train);
  std::filesystem::remove_all(dir);
}
