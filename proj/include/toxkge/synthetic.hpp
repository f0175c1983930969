#pragma once

// Generators for demo and test data with known structure.

#include <cstdint>
#include <vector>

#include "toxkge/align.hpp"
#include "toxkge/effects.hpp"
#include "toxkge/kg_store.hpp"

namespace toxkge::synth {

struct HierarchyKg {
  KnowledgeGraph graph;        ///< training triples
  std::vector<Triple> held_out;  ///< subClassOf triples removed from `graph`, in its id space
};

/// A ternary tree over `entities` nodes with `subClassOf` (child to parent)
/// and `superClassOf` (parent to child) edges. `held_out` subClassOf edges are
/// removed; their inverses stay, so every entity keeps at least one triple.
HierarchyKg hierarchy_kg(std::size_t entities, std::size_t held_out, std::uint64_t seed);

struct StructuredParams {
  int chemical_clusters{6};
  int chemicals_per_cluster{12};
  int species_clusters{6};
  int species_per_cluster{10};
  int samples{2000};
  double kappa_min{-3.0};
  double kappa_max{3.0};
  /// Share of (chemical cluster, species cluster) combinations whose label
  /// depends on a concentration threshold; the others are fixed per combination.
  double threshold_share{0.1};
  /// Similarity triples drawn per chemical and per species inside its cluster.
  int similar_per_entity{2};
};

struct StructuredData {
  KnowledgeGraph chemical_graph;
  KnowledgeGraph species_graph;
  std::vector<effects::EffectRecord> records;  ///< prepared: concentration is log10(mg/L)
};

/// Labels are a function of the latent chemical cluster, the latent species
/// cluster and, for a few combinations, the concentration. The graphs encode
/// cluster membership (and a shared root) through their triples.
StructuredData structured_effects(const StructuredParams& p, std::uint64_t seed);

struct TypoTaxonomy {
  align::Vocabulary source;
  align::Vocabulary target;
  std::vector<align::Mapping> reference;
};

/// `names` binomial-looking species names. Target labels carry one
/// substituted character each; the reference maps every name to itself.
TypoTaxonomy typo_taxonomy(std::size_t names, std::uint64_t seed);

}  // namespace toxkge::synth
