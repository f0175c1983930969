#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "toxkge/kg_store.hpp"
#include "toxkge/kge.hpp"

namespace toxkge::train {

enum class LossKind { PointwiseHinge, PointwiseLogistic, PairwiseHinge, PairwiseLogistic };
enum class SamplingMode { LCWA, sLCWA };

/// Short names: L_H1, L_L1, L_H2, L_L2.
std::string_view to_string(LossKind k);
/// Accepts the short names and pointwise_hinge / pointwise_logistic /
/// pairwise_hinge / pairwise_logistic.
LossKind parse_loss_kind(std::string_view name);
std::string_view to_string(SamplingMode m);
SamplingMode parse_sampling_mode(std::string_view name);

struct LossConfig {
  LossKind kind{LossKind::PairwiseLogistic};
  double margin{1.0};  ///< hinge losses only
  int negatives{10};   ///< eta, corruptions per positive
  SamplingMode sampling{SamplingMode::sLCWA};

  void validate() const;  // throws ConfigError
};

// --- Losses ------------------------------------------------------------------
// Scores are plausibilities (higher = more plausible). When a gradient span is
// given it receives dL/dscore (overwritten, same length as the scores).

/// sum [margin - y*S]_+ with labels in {-1, +1}.
double loss_pointwise_hinge(std::span<const double> scores, std::span<const double> labels, double margin,
                            std::span<double> grad = {});
/// sum ln(1 + exp(-y*S)).
double loss_pointwise_logistic(std::span<const double> scores, std::span<const double> labels,
                               std::span<double> grad = {});
/// sum over all (pos, neg) pairs of [margin + S(neg) - S(pos)]_+.
double loss_pairwise_hinge(std::span<const double> pos, std::span<const double> neg, double margin,
                           std::span<double> grad_pos = {}, std::span<double> grad_neg = {});
/// sum over all (pos, neg) pairs of ln(1 + exp(S(neg) - S(pos))).
double loss_pairwise_logistic(std::span<const double> pos, std::span<const double> neg,
                              std::span<double> grad_pos = {}, std::span<double> grad_neg = {});

// --- Negative sampling -------------------------------------------------------

/// `eta` corruptions per positive, stored contiguously (positive i owns
/// [i*eta, (i+1)*eta)). No returned triple is in `g`. LCWA replaces the object;
/// sLCWA replaces subject or object with equal probability. Rejection sampling
/// with |E| retries falls back to enumerating the free candidates; throws
/// DataError when none exist.
std::vector<Triple> sample_negatives(const KnowledgeGraph& g, std::span<const Triple> positives, int eta,
                                     SamplingMode mode, std::mt19937_64& rng);

// --- Adam --------------------------------------------------------------------

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long long t{0};

  bool operator==(const AdamState&) const = default;
};

struct AdamParams {
  double lr{1e-3};
  double beta1{0.9};
  double beta2{0.999};
  double eps{1e-8};
};

/// One bias-corrected Adam update. Throws NumericalError on non-finite gradients.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamParams& p);

// --- Batch objective ---------------------------------------------------------

/// Parameters a KGE loss reads. `entities` may be a different matrix than the
/// table's (the fine-tuned classifier shares its embedding rows this way).
struct KgeParams {
  const Matrix* entities{nullptr};
  const Matrix* relations{nullptr};
  std::span<const double> conv;
};

struct KgeGrads {
  Matrix* entities{nullptr};
  Matrix* relations{nullptr};
  std::span<double> conv;
};

/// Loss of `positives` against their `negatives` (eta per positive, laid out as
/// by sample_negatives). Pairwise losses pair each positive with its own
/// negatives. Adds `weight * dL/dparam` into `grads` when given.
double kge_batch_loss(const kge::KgeConfig& model, const LossConfig& loss, const KgeParams& params,
                      std::span<const Triple> positives, std::span<const Triple> negatives, double weight = 1.0,
                      const KgeGrads* grads = nullptr);

// --- Training loop -----------------------------------------------------------

struct TrainOptions {
  int epochs{500};
  double lr{1e-3};
  int batch_size{1024};
  std::uint64_t seed{0};
};

struct TrainState {
  int epoch{0};
  std::vector<double> loss_history;
  AdamState entity_moments;
  AdamState relation_moments;
  AdamState conv_moments;
  std::uint64_t rng_seed{0};
};

struct TrainResult {
  kge::EmbeddingTable table;
  TrainState state;
};

/// Full-graph training for a fixed number of epochs. Deterministic in
/// `opts.seed`. Throws NumericalError naming the epoch when the loss diverges.
TrainResult train_kge(const KnowledgeGraph& g, const kge::KgeConfig& model, const LossConfig& loss,
                      const TrainOptions& opts);

/// Last recorded epoch loss over the first. Throws DataError on an empty history.
double relative_loss(const TrainState& s);

/// CSV `epoch,loss,relative_loss`.
std::string format_training_log(const TrainState& s);

/// Rank of each test triple's object among all entities (1 = best; ties
/// share the average rank). Candidate objects that form a triple of `filter`
/// other than the test triple itself are skipped when `filter` is given.
std::vector<double> object_ranks(const kge::KgeConfig& model, const kge::EmbeddingTable& t,
                                 std::span<const Triple> test, const KnowledgeGraph* filter = nullptr);

// --- Hyper-parameter search --------------------------------------------------

struct HpoSpec {
  std::vector<LossKind> losses{LossKind::PointwiseHinge, LossKind::PairwiseHinge, LossKind::PointwiseLogistic,
                               LossKind::PairwiseLogistic};
  double margin_min{1}, margin_max{10};
  double bias_min{0}, bias_max{20};
  int dim_min{100}, dim_max{400};
  int negatives_min{10}, negatives_max{100};
  int trials{20};
  SamplingMode sampling{SamplingMode::sLCWA};

  void validate() const;
};

struct HpoTrial {
  kge::KgeConfig model;
  LossConfig loss;
  std::optional<double> relative_loss;  ///< empty when the trial diverged
};

struct HpoResult {
  kge::KgeConfig best_model;
  LossConfig best_loss;
  double best_relative_loss{0};
  std::vector<HpoTrial> trials;
};

/// Samples `spec.trials` configs uniformly within the ranges (integers for
/// dimension and negatives), trains each with `opts` and returns the one with
/// the lowest relative loss. `base` supplies the fields that are not searched.
/// Throws NumericalError if every trial diverges.
HpoResult random_search(const KnowledgeGraph& g, const kge::KgeConfig& base, const HpoSpec& spec,
                        const TrainOptions& opts);

/// CSV `trial,model,loss,margin,bias,k,negatives,relative_loss`.
std::string format_hpo_log(const HpoResult& r);

}  // namespace toxkge::train
