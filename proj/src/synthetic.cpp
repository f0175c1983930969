#include "toxkge/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "toxkge/error.hpp"

namespace toxkge::synth {

HierarchyKg hierarchy_kg(std::size_t entities, std::size_t held_out, std::uint64_t seed) {
  if (entities < 2) throw DataError("hierarchy needs at least two entities");
  if (held_out + 1 >= entities) throw DataError("cannot hold out that many edges");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> label(entities);
  std::iota(label.begin(), label.end(), std::size_t{0});
  std::shuffle(label.begin(), label.end(), rng);
  auto name = [&](std::size_t node) { return "n" + std::to_string(label[node]); };

  std::vector<std::size_t> edges(entities - 1);  // child node of each subClassOf edge
  std::iota(edges.begin(), edges.end(), std::size_t{1});
  std::shuffle(edges.begin(), edges.end(), rng);
  std::set<std::size_t> removed(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(held_out));

  HierarchyKg out;
  for (std::size_t child = 1; child < entities; ++child) {
    const std::size_t parent = (child - 1) / 3;
    out.graph.add(name(parent), "superClassOf", name(child));
    if (!removed.contains(child)) out.graph.add(name(child), "subClassOf", name(parent));
  }
  const auto sub = out.graph.relations().at("subClassOf");
  for (auto child : removed) {
    const std::size_t parent = (child - 1) / 3;
    out.held_out.push_back({out.graph.entities().at(name(child)), sub, out.graph.entities().at(name(parent)), false});
  }
  return out;
}

StructuredData structured_effects(const StructuredParams& p, std::uint64_t seed) {
  if (p.chemical_clusters < 1 || p.chemicals_per_cluster < 1 || p.species_clusters < 1 || p.species_per_cluster < 1 ||
      p.samples < 1 || !(p.kappa_max > p.kappa_min))
    throw ConfigError("invalid synthetic data parameters");
  std::mt19937_64 rng(seed);
  StructuredData out;

  auto build = [&](KnowledgeGraph& g, const std::string& prefix, int clusters, int per_cluster) {
    for (int c = 0; c < clusters; ++c) {
      const std::string cluster = prefix + "_group" + std::to_string(c);
      g.add(cluster, "subClassOf", prefix + "_root");
      for (int i = 0; i < per_cluster; ++i)
        g.add(prefix + std::to_string(c * per_cluster + i), "memberOf", cluster);
    }
    std::uniform_int_distribution<int> mate(0, per_cluster - 1);
    for (int c = 0; c < clusters; ++c) {
      for (int i = 0; i < per_cluster && per_cluster > 1; ++i) {
        for (int j = 0; j < p.similar_per_entity; ++j) {
          int other = mate(rng);
          if (other == i) continue;
          g.add(prefix + std::to_string(c * per_cluster + i), "similarTo", prefix + std::to_string(c * per_cluster + other));
        }
      }
    }
  };
  build(out.chemical_graph, "chem", p.chemical_clusters, p.chemicals_per_cluster);
  build(out.species_graph, "sp", p.species_clusters, p.species_per_cluster);

  // Per combination: always lethal, never lethal, or lethal above a threshold.
  const auto combos = static_cast<std::size_t>(p.chemical_clusters * p.species_clusters);
  std::vector<double> threshold(combos);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double inf = std::numeric_limits<double>::infinity();
  for (auto& t : threshold) {
    if (unit(rng) < p.threshold_share)
      t = p.kappa_min + (p.kappa_max - p.kappa_min) * (0.25 + 0.5 * unit(rng));
    else
      t = unit(rng) < 0.5 ? -inf : inf;
  }

  std::uniform_int_distribution<int> chem(0, p.chemical_clusters * p.chemicals_per_cluster - 1);
  std::uniform_int_distribution<int> spec(0, p.species_clusters * p.species_per_cluster - 1);
  std::uniform_real_distribution<double> kappa(p.kappa_min, p.kappa_max);
  for (int i = 0; i < p.samples; ++i) {
    int c = chem(rng), s = spec(rng);
    double k = kappa(rng);
    auto combo = static_cast<std::size_t>((c / p.chemicals_per_cluster) * p.species_clusters + s / p.species_per_cluster);
    effects::EffectRecord r;
    r.chemical = "chem" + std::to_string(c);
    r.species = "sp" + std::to_string(s);
    r.concentration = k;
    r.unit = std::string(effects::kLogUnit);
    r.label = k > threshold[combo] ? 1 : 0;
    r.endpoint = r.label ? "LC50" : "NOEC";
    r.effect = r.label ? "MOR" : "GRO";
    out.records.push_back(std::move(r));
  }
  return out;
}

TypoTaxonomy typo_taxonomy(std::size_t names, std::uint64_t seed) {
  static constexpr const char* kOnset[] = {"b", "c", "d", "f", "g", "l", "m", "n", "p", "r", "s", "t", "v", "ph", "tr"};
  static constexpr const char* kVowel[] = {"a", "e", "i", "o", "u", "ae", "io"};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> onset(0, std::size(kOnset) - 1), vowel(0, std::size(kVowel) - 1);
  std::uniform_int_distribution<int> syllables(3, 4);
  auto word = [&] {
    std::string w;
    for (int i = syllables(rng); i > 0; --i) w += std::string(kOnset[onset(rng)]) + kVowel[vowel(rng)];
    return w;
  };
  std::uniform_int_distribution<int> letter('a', 'z');

  TypoTaxonomy out;
  std::set<std::string> seen;
  while (out.reference.size() < names) {
    std::string genus = word(), species = word();
    genus[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(genus[0])));
    std::string label = genus + " " + species;
    if (!seen.insert(label).second) continue;
    std::string typo = label;
    std::uniform_int_distribution<std::size_t> pos(1, typo.size() - 1);
    std::size_t at = pos(rng);
    while (typo[at] == ' ') at = pos(rng);
    char replacement = typo[at];
    while (replacement == typo[at]) replacement = static_cast<char>(letter(rng));
    typo[at] = replacement;
    const std::string id = std::to_string(out.reference.size());
    out.source["src:" + id].push_back(label);
    out.target["tgt:" + id].push_back(typo);
    out.reference.push_back({"src:" + id, "tgt:" + id, 1.0});
  }
  return out;
}

}  // namespace toxkge::synth
