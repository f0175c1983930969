#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace toxkge {

using EntityId = std::int32_t;
using RelationId = std::int32_t;

/// Name <-> contiguous id bijection. Ids are assigned in first-seen order.
class Dictionary {
public:
  /// Returns the id of `name`, inserting it if new.
  std::int32_t intern(std::string_view name);
  std::optional<std::int32_t> find(std::string_view name) const;
  std::int32_t at(std::string_view name) const;  // throws DataError if absent
  const std::string& name(std::int32_t id) const { return names_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }

private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::int32_t> ids_;
};

/// A (subject, predicate, object) triple. When `literal` is set, `object`
/// indexes the graph's literal table instead of its entity dictionary.
struct Triple {
  EntityId subject{0};
  RelationId predicate{0};
  std::int32_t object{0};
  bool literal{false};

  bool operator==(const Triple&) const = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept {
    std::uint64_t h = static_cast<std::uint32_t>(t.subject);
    h = h * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint32_t>(t.predicate);
    h = h * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint32_t>(t.object);
    h = h * 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint64_t>(t.literal);
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

/// Integer-indexed, duplicate-free triple set with entity/relation dictionaries.
///
/// Built once through `add`, then treated as immutable; concurrent reads are safe.
class KnowledgeGraph {
public:
  /// Adds a triple by names. Objects starting with '"' are literals. Returns
  /// false if the triple was already present.
  bool add(std::string_view subject, std::string_view predicate, std::string_view object);

  const std::vector<Triple>& triples() const noexcept { return triples_; }
  const Dictionary& entities() const noexcept { return entities_; }
  const Dictionary& relations() const noexcept { return relations_; }
  const Dictionary& literals() const noexcept { return literals_; }

  std::size_t num_triples() const noexcept { return triples_.size(); }
  std::size_t num_entities() const noexcept { return entities_.size(); }
  std::size_t num_relations() const noexcept { return relations_.size(); }

  bool contains(const Triple& t) const { return index_.contains(t); }
  bool contains(EntityId s, RelationId p, EntityId o) const { return contains(Triple{s, p, o, false}); }
  bool has_literals() const;

  /// Name of a triple's object, literal or entity.
  const std::string& object_name(const Triple& t) const {
    return t.literal ? literals_.name(t.object) : entities_.name(t.object);
  }

private:
  Dictionary entities_;
  Dictionary relations_;
  Dictionary literals_;
  std::vector<Triple> triples_;
  std::unordered_set<Triple, TripleHash> index_;
};

struct GraphStats {
  std::size_t num_triples{0};
  std::size_t num_entities{0};
  std::size_t num_relations{0};
  double rd{0};  ///< triples per relation
  double ed{0};  ///< triple endpoints per entity
  double re{0};  ///< relation entropy (nats)
  double ee{0};  ///< entity entropy (nats)
  double ad{0};  ///< absolute density
};

/// Fixed-length structural fingerprint of a chemical.
class Fingerprint {
public:
  Fingerprint() = default;
  explicit Fingerprint(std::vector<bool> bits) : bits_(std::move(bits)) {}
  /// Parses a hexadecimal bit string; each hex digit contributes 4 bits, MSB first.
  static Fingerprint from_hex(std::string_view hex);
  static Fingerprint from_indices(std::size_t length, std::initializer_list<std::size_t> on);

  std::size_t size() const noexcept { return bits_.size(); }
  bool test(std::size_t i) const { return bits_.at(i); }
  std::size_t count() const;

  bool operator==(const Fingerprint&) const = default;

private:
  std::vector<bool> bits_;
};

/// Relation name used for fingerprint similarity triples.
inline constexpr std::string_view kSimilarityRelation = "similarTo";

KnowledgeGraph load_triples(const std::filesystem::path& path);
KnowledgeGraph parse_triples(std::string_view text);
void write_triples(const KnowledgeGraph& g, const std::filesystem::path& path);

/// Keeps only entity-object triples; dictionaries are rebuilt contiguous.
KnowledgeGraph drop_literals(const KnowledgeGraph& g);

/// All triples reachable by following subject->object edges from `seeds`.
KnowledgeGraph directed_crawl(const KnowledgeGraph& g, const std::vector<EntityId>& seeds);
KnowledgeGraph directed_crawl(const KnowledgeGraph& g, const std::vector<std::string>& seed_names);

/// Intersection over union of set bits; 1 when both fingerprints are empty.
double tanimoto(const Fingerprint& a, const Fingerprint& b);

struct NamedTriple {
  std::string subject;
  std::string predicate;
  std::string object;
  bool operator==(const NamedTriple&) const = default;
  auto operator<=>(const NamedTriple&) const = default;
};

/// One `similarTo` triple in each direction for every unordered pair whose
/// Tanimoto similarity reaches `threshold`. Output is sorted.
std::vector<NamedTriple> emit_similarity_triples(const std::map<std::string, Fingerprint>& fps, double threshold);

std::map<std::string, Fingerprint> load_fingerprints(const std::filesystem::path& path);

GraphStats compute_stats(const KnowledgeGraph& g);
/// Key-value report (`key<TAB>value` per line) of the stats.
std::string format_stats(const GraphStats& s);

}  // namespace toxkge
