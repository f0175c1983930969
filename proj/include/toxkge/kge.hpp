#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "toxkge/kg_store.hpp"
#include "toxkge/matrix.hpp"

namespace toxkge::kge {

enum class ModelKind { DistMult, ComplEx, HolE, TransE, RotatE, pRotatE, HAKE, ConvKB, ConvE };

inline constexpr ModelKind kAllModels[] = {ModelKind::DistMult, ModelKind::ComplEx, ModelKind::HolE,
                                           ModelKind::TransE,   ModelKind::RotatE,  ModelKind::pRotatE,
                                           ModelKind::HAKE,     ModelKind::ConvKB,  ModelKind::ConvE};

/// How an entity row is laid out.
///  - Real: k reals.
///  - Complex: k complex numbers, interleaved (re0, im0, re1, im1, ...).
///  - Phase: k angles.
///  - ModulusPhase: k moduli followed by k angles.
enum class Representation { Real, Complex, Phase, ModulusPhase };

enum class ModelFamily { Decomposition, Geometric, Convolutional };

std::string_view to_string(ModelKind m);
std::string_view to_string(Representation r);
ModelKind parse_model_kind(std::string_view name);
Representation parse_representation(std::string_view name);

ModelFamily family(ModelKind m);
inline bool is_geometric(ModelKind m) { return family(m) == ModelFamily::Geometric; }
Representation representation(ModelKind m);

struct KgeConfig {
  ModelKind model{ModelKind::DistMult};
  int k{16};
  int norm_order{2};               ///< n in ||.||_n for geometric models
  double bias{0.0};                ///< plausibility = bias - distance, geometric models only
  double modulus_constraint{1.0};  ///< pRotatE modulus
  int conv_filters{8};
  int conv_filter_rows{3};         ///< ConvE; clipped to the image height
  int conv_filter_cols{3};         ///< ConvE; clipped to the image width
  int conve_reshape_rows{0};       ///< 0 = largest divisor of k not above sqrt(k)

  void validate() const;  // throws ConfigError
};

/// Geometry of the convolutional models, resolved from a config.
struct ConvGeometry {
  std::size_t filters{0};
  std::size_t filter_rows{0};
  std::size_t filter_cols{0};
  std::size_t image_rows{0};  ///< ConvKB: k; ConvE: 2 * reshape rows
  std::size_t image_cols{0};  ///< ConvKB: 3; ConvE: reshape cols
  std::size_t out_rows{0};
  std::size_t out_cols{0};
  std::size_t dense_out{0};  ///< ConvKB: 1; ConvE: k

  std::size_t hidden() const { return filters * out_rows * out_cols; }
  // Offsets into the flat parameter vector: [filters | filter bias | dense W | dense bias].
  std::size_t filter_offset() const { return 0; }
  std::size_t filter_bias_offset() const { return filters * filter_rows * filter_cols; }
  std::size_t dense_offset() const { return filter_bias_offset() + filters; }
  std::size_t dense_bias_offset() const { return dense_offset() + hidden() * dense_out; }
  std::size_t param_count() const { return dense_bias_offset() + dense_out; }
};

ConvGeometry conv_geometry(const KgeConfig& c);

std::size_t entity_width(const KgeConfig& c);
std::size_t relation_width(const KgeConfig& c);

/// Trainable state of one KGE model.
struct EmbeddingTable {
  ModelKind model{ModelKind::DistMult};
  int k{0};
  Matrix entities;
  Matrix relations;
  std::vector<double> conv;  ///< convolution and dense weights; empty for other families

  Representation representation() const { return kge::representation(model); }
  bool operator==(const EmbeddingTable&) const = default;
};

/// Uniform in [-6/sqrt(k), 6/sqrt(k)] per real coordinate, phases uniform in
/// [0, 2*pi). Deterministic in `seed`.
EmbeddingTable init_embeddings(const KgeConfig& c, std::size_t num_entities, std::size_t num_relations,
                               std::uint64_t seed);

// --- Raw scoring functions over row views -----------------------------------

using Row = std::span<const double>;

double score_distmult(Row s, Row p, Row o);
double score_complex(Row s, Row p, Row o);
double score_hole(Row s, Row p, Row o);
double score_transe(Row s, Row p, Row o, int norm_order);
/// `theta_p` holds relation phases only (unit modulus).
double score_rotate(Row s, Row theta_p, Row o, int norm_order);
double score_protate(Row theta_s, Row theta_p, Row theta_o, int norm_order, double modulus_constraint);
double score_hake(Row s, Row p, Row o, int norm_order);
double score_convkb(const ConvGeometry& g, Row s, Row p, Row o, Row conv);
double score_conve(const ConvGeometry& g, Row s, Row p, Row o, Row conv);

/// The parameters one triple touches.
struct TripleView {
  Row subject;
  Row predicate;
  Row object;
  Row conv;
};

/// Gradient sinks for the same parameters; may alias (e.g. self-loops).
struct TripleGrad {
  std::span<double> subject;
  std::span<double> predicate;
  std::span<double> object;
  std::span<double> conv;
};

double score(const KgeConfig& c, const TripleView& v);
double score(const KgeConfig& c, const EmbeddingTable& t, const Triple& triple);

/// Adds `weight * d score / d param` into `grad` and returns the score.
/// Kinks of |.|, ||.|| and ReLu use subgradient 0.
double accumulate_gradient(const KgeConfig& c, const TripleView& v, double weight, const TripleGrad& grad);

struct ScoreGradients {
  double score{0};
  std::vector<double> subject;
  std::vector<double> predicate;
  std::vector<double> object;
  std::vector<double> conv;
};

/// Exact partial derivatives of the raw score. When subject == object the
/// subject and object vectors each hold their own positional contribution.
ScoreGradients score_gradients(const KgeConfig& c, const EmbeddingTable& t, const Triple& triple);

/// Maps a raw score to "higher = more plausible": distances become bias - score.
inline double plausibility(const KgeConfig& c, double raw) { return is_geometric(c.model) ? c.bias - raw : raw; }
/// d plausibility / d score.
inline double plausibility_slope(const KgeConfig& c) { return is_geometric(c.model) ? -1.0 : 1.0; }

inline TripleView view(const EmbeddingTable& t, const Triple& triple) {
  return {t.entities.row(static_cast<std::size_t>(triple.subject)),
          t.relations.row(static_cast<std::size_t>(triple.predicate)),
          t.entities.row(static_cast<std::size_t>(triple.object)), t.conv};
}

// --- Checkpoints ------------------------------------------------------------

std::string serialize_checkpoint(const EmbeddingTable& t);
EmbeddingTable parse_checkpoint(std::string_view text);
void save_checkpoint(const EmbeddingTable& t, const std::filesystem::path& path);
EmbeddingTable load_checkpoint(const std::filesystem::path& path);

}  // namespace toxkge::kge
