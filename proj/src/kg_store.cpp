#include "toxkge/kg_store.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include "toxkge/detail/text.hpp"
#include "toxkge/error.hpp"

namespace toxkge {

std::int32_t Dictionary::intern(std::string_view name) {
  auto it = ids_.find(std::string(name));
  if (it != ids_.end()) return it->second;
  auto id = static_cast<std::int32_t>(names_.size());
  names_.emplace_back(name);
  ids_.emplace(names_.back(), id);
  return id;
}

std::optional<std::int32_t> Dictionary::find(std::string_view name) const {
  auto it = ids_.find(std::string(name));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::int32_t Dictionary::at(std::string_view name) const {
  auto id = find(name);
  if (!id) throw DataError("unknown name: " + std::string(name));
  return *id;
}

bool KnowledgeGraph::add(std::string_view subject, std::string_view predicate, std::string_view object) {
  Triple t;
  t.literal = !object.empty() && object.front() == '"';
  t.subject = entities_.intern(subject);
  t.predicate = relations_.intern(predicate);
  t.object = t.literal ? literals_.intern(object) : entities_.intern(object);
  if (!index_.insert(t).second) return false;
  triples_.push_back(t);
  return true;
}

bool KnowledgeGraph::has_literals() const {
  return std::any_of(triples_.begin(), triples_.end(), [](const Triple& t) { return t.literal; });
}

KnowledgeGraph parse_triples(std::string_view text) {
  KnowledgeGraph g;
  std::size_t line_no = 0;
  for (auto line : detail::lines(text)) {
    ++line_no;
    if (line.empty()) continue;
    auto cols = detail::split(line, '\t');
    if (cols.size() != 3)
      throw ParseError("expected 3 tab-separated columns, found " + std::to_string(cols.size()), line_no);
    if (cols[0].empty() || cols[1].empty() || cols[2].empty()) throw ParseError("empty triple field", line_no);
    g.add(cols[0], cols[1], cols[2]);
  }
  return g;
}

KnowledgeGraph load_triples(const std::filesystem::path& path) { return parse_triples(detail::read_file(path)); }

void write_triples(const KnowledgeGraph& g, const std::filesystem::path& path) {
  std::string out;
  for (const auto& t : g.triples()) {
    out += g.entities().name(t.subject);
    out += '\t';
    out += g.relations().name(t.predicate);
    out += '\t';
    out += g.object_name(t);
    out += '\n';
  }
  detail::write_file(path, out);
}

namespace {

// Rebuilds a graph from a subset of another graph's triples, in the given order.
KnowledgeGraph rebuild(const KnowledgeGraph& g, const std::vector<Triple>& keep) {
  KnowledgeGraph out;
  for (const auto& t : keep)
    out.add(g.entities().name(t.subject), g.relations().name(t.predicate), g.object_name(t));
  return out;
}

}  // namespace

KnowledgeGraph drop_literals(const KnowledgeGraph& g) {
  std::vector<Triple> keep;
  std::copy_if(g.triples().begin(), g.triples().end(), std::back_inserter(keep),
               [](const Triple& t) { return !t.literal; });
  return rebuild(g, keep);
}

KnowledgeGraph directed_crawl(const KnowledgeGraph& g, const std::vector<EntityId>& seeds) {
  const auto n = g.num_entities();
  std::vector<std::vector<std::size_t>> outgoing(n);
  for (std::size_t i = 0; i < g.triples().size(); ++i)
    outgoing[static_cast<std::size_t>(g.triples()[i].subject)].push_back(i);

  std::vector<bool> visited(n, false);
  std::deque<EntityId> frontier;
  for (auto s : seeds) {
    if (s < 0 || static_cast<std::size_t>(s) >= n) throw DataError("unknown seed entity id " + std::to_string(s));
    if (!visited[static_cast<std::size_t>(s)]) {
      visited[static_cast<std::size_t>(s)] = true;
      frontier.push_back(s);
    }
  }
  std::vector<bool> taken(g.triples().size(), false);
  while (!frontier.empty()) {
    auto e = frontier.front();
    frontier.pop_front();
    for (auto idx : outgoing[static_cast<std::size_t>(e)]) {
      taken[idx] = true;
      const auto& t = g.triples()[idx];
      if (t.literal) continue;
      auto o = static_cast<std::size_t>(t.object);
      if (!visited[o]) {
        visited[o] = true;
        frontier.push_back(t.object);
      }
    }
  }
  std::vector<Triple> keep;
  for (std::size_t i = 0; i < taken.size(); ++i)
    if (taken[i]) keep.push_back(g.triples()[i]);
  return rebuild(g, keep);
}

KnowledgeGraph directed_crawl(const KnowledgeGraph& g, const std::vector<std::string>& seed_names) {
  std::vector<EntityId> ids;
  ids.reserve(seed_names.size());
  for (const auto& name : seed_names) {
    auto id = g.entities().find(name);
    if (!id) throw DataError("unknown seed entity: " + name);
    ids.push_back(*id);
  }
  return directed_crawl(g, ids);
}

Fingerprint Fingerprint::from_hex(std::string_view hex) {
  std::vector<bool> bits;
  bits.reserve(hex.size() * 4);
  for (char c : hex) {
    int v;
    if (c >= '0' && c <= '9')
      v = c - '0';
    else if (c >= 'a' && c <= 'f')
      v = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F')
      v = c - 'A' + 10;
    else
      throw DataError(std::string("invalid hex digit '") + c + "' in fingerprint");
    for (int b = 3; b >= 0; --b) bits.push_back((v >> b) & 1);
  }
  return Fingerprint(std::move(bits));
}

Fingerprint Fingerprint::from_indices(std::size_t length, std::initializer_list<std::size_t> on) {
  std::vector<bool> bits(length, false);
  for (auto i : on) bits.at(i) = true;
  return Fingerprint(std::move(bits));
}

std::size_t Fingerprint::count() const { return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), true)); }

double tanimoto(const Fingerprint& a, const Fingerprint& b) {
  if (a.size() != b.size())
    throw DataError("fingerprint length mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    bool x = a.test(i), y = b.test(i);
    inter += x && y;
    uni += x || y;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<NamedTriple> emit_similarity_triples(const std::map<std::string, Fingerprint>& fps, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw DataError("similarity threshold must lie in [0,1]");
  std::vector<NamedTriple> out;
  std::string rel(kSimilarityRelation);
  for (auto a = fps.begin(); a != fps.end(); ++a) {
    for (auto b = std::next(a); b != fps.end(); ++b) {
      if (tanimoto(a->second, b->second) >= threshold) {
        out.push_back({a->first, rel, b->first});
        out.push_back({b->first, rel, a->first});
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::map<std::string, Fingerprint> load_fingerprints(const std::filesystem::path& path) {
  std::map<std::string, Fingerprint> out;
  std::size_t line_no = 0;
  std::optional<std::size_t> width;
  const std::string text = detail::read_file(path);
  for (auto line : detail::lines(text)) {
    ++line_no;
    if (line.empty()) continue;
    auto cols = detail::split(line, '\t');
    if (cols.size() != 2) throw ParseError("expected entity<TAB>hex-bitstring", line_no);
    Fingerprint fp;
    try {
      fp = Fingerprint::from_hex(detail::trim(cols[1]));
    } catch (const DataError& e) {
      throw ParseError(e.what(), line_no);
    }
    if (width && *width != fp.size()) throw ParseError("fingerprint length differs from earlier entries", line_no);
    width = fp.size();
    out[std::string(cols[0])] = std::move(fp);
  }
  return out;
}

GraphStats compute_stats(const KnowledgeGraph& g) {
  if (g.num_triples() == 0) throw DataError("statistics need at least one triple");
  if (g.num_entities() < 2) throw DataError("statistics need at least two entities");
  GraphStats s;
  s.num_triples = g.num_triples();
  s.num_entities = g.num_entities();
  s.num_relations = g.num_relations();
  const double T = static_cast<double>(s.num_triples);
  const double E = static_cast<double>(s.num_entities);
  s.rd = T / static_cast<double>(s.num_relations);
  s.ed = 2.0 * T / E;
  s.ad = T / (E * (E - 1.0));

  std::vector<std::size_t> rel_count(g.num_relations(), 0), ent_count(g.num_entities(), 0);
  for (const auto& t : g.triples()) {
    ++rel_count[static_cast<std::size_t>(t.predicate)];
    ++ent_count[static_cast<std::size_t>(t.subject)];
    if (!t.literal) ++ent_count[static_cast<std::size_t>(t.object)];
  }
  auto entropy = [T](const std::vector<std::size_t>& counts) {
    double h = 0.0;
    for (auto c : counts) {
      if (c == 0) continue;
      double p = static_cast<double>(c) / T;
      h -= p * std::log(p);
    }
    return h;
  };
  s.re = entropy(rel_count);
  s.ee = entropy(ent_count);
  return s;
}

std::string format_stats(const GraphStats& s) {
  std::ostringstream os;
  os.precision(17);
  os << "triples\t" << s.num_triples << '\n'
     << "entities\t" << s.num_entities << '\n'
     << "relations\t" << s.num_relations << '\n'
     << "rd\t" << s.rd << '\n'
     << "ed\t" << s.ed << '\n'
     << "re\t" << s.re << '\n'
     << "ee\t" << s.ee << '\n'
     << "ad\t" << s.ad << '\n';
  return os.str();
}

}  // namespace toxkge
