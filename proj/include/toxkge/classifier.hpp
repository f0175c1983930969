#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "toxkge/kg_store.hpp"
#include "toxkge/kge.hpp"
#include "toxkge/matrix.hpp"
#include "toxkge/train.hpp"

namespace toxkge::clf {

enum class EmbeddingSource { OneHot, Pretrained, Finetune };

std::string_view to_string(EmbeddingSource s);  // one_hot, pretrained, finetune
EmbeddingSource parse_embedding_source(std::string_view s);

/// Units per hidden layer of the chemical, species and concentration branches
/// and of the trunk. Written as `(a,b)/(c)/()/(d)`; `-` also denotes an empty group.
struct LayerSpec {
  std::vector<int> chemical;
  std::vector<int> species;
  std::vector<int> kappa;
  std::vector<int> trunk{128};

  std::string to_string() const;
  static LayerSpec parse(std::string_view text);  // throws ConfigError
  bool operator==(const LayerSpec&) const = default;
};

struct MlpConfig {
  LayerSpec layers;
  double dropout{0.2};
  EmbeddingSource source{EmbeddingSource::OneHot};
  int k{16};  ///< embedding row width
  bool batch_norm{true};
  double bn_momentum{0.99};
  double bn_eps{1e-3};

  /// No branch layers and a single trunk layer.
  bool simple() const;
  void validate() const;
  /// Unit counts inside the searched ranges: 16..1024 for branches and trunk,
  /// 4..32 for the concentration branch.
  bool units_in_search_range() const;
};

struct Dense {
  Matrix w;  ///< in x out
  std::vector<double> b;
  bool operator==(const Dense&) const = default;
};

struct HiddenLayer {
  Dense dense;
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  bool operator==(const HiddenLayer&) const = default;
};

struct MlpWeights {
  Matrix chemical_embedding;  ///< W_c
  Matrix species_embedding;   ///< W_s
  bool embeddings_trainable{true};
  std::vector<HiddenLayer> chemical;
  std::vector<HiddenLayer> species;
  std::vector<HiddenLayer> kappa;
  std::vector<HiddenLayer> trunk;
  Dense output;  ///< trunk width x 1

  bool operator==(const MlpWeights&) const = default;

  /// Trainable parameter blocks in a fixed order (embeddings first when trainable).
  std::vector<std::span<double>> trainable();
  std::size_t trainable_count() const;
};

/// One classifier input x_{c,s,kappa}: row indices into W_c and W_s.
struct Sample {
  std::int32_t chemical{0};
  std::int32_t species{0};
  double kappa{0};
};

struct Dataset {
  std::vector<Sample> x;
  std::vector<double> y;  ///< 0 or 1
  std::size_t size() const { return x.size(); }
};

/// One-hot: W_c and W_s drawn from U(-0.05, 0.05) with the given row counts.
/// Pre-trained / fine-tuned: copies of the given entity matrices, whose width
/// must equal `cfg.k`; frozen for the pre-trained variant. Dense weights use
/// Glorot-uniform initialization, biases start at zero.
MlpWeights build_mlp(const MlpConfig& cfg, std::size_t num_chemicals, std::size_t num_species, std::uint64_t seed,
                     const Matrix* pretrained_chemical = nullptr, const Matrix* pretrained_species = nullptr);

/// Predicted probabilities. `train_mode` enables dropout (drawn from `rng`)
/// and batch statistics, and updates the running statistics.
std::vector<double> forward(MlpWeights& w, const MlpConfig& cfg, std::span<const Sample> batch, bool train_mode,
                            std::mt19937_64* rng = nullptr);
std::vector<double> predict_proba(const MlpWeights& w, const MlpConfig& cfg, std::span<const Sample> batch);

/// -(1/N) sum y ln p + (1-y) ln(1-p) with p clamped to [1e-7, 1-1e-7].
double bce_loss(std::span<const double> p, std::span<const double> y);

/// Mean BCE of a training-mode pass over `batch`; gradients are written into
/// `grad` (same shapes as `w`, trainable blocks only).
double loss_and_gradient(MlpWeights& w, const MlpConfig& cfg, std::span<const Sample> batch,
                         std::span<const double> labels, MlpWeights& grad, std::mt19937_64& rng);

/// A zeroed copy of `w` for use as a gradient buffer.
MlpWeights zeros_like(const MlpWeights& w);

struct ClassifierOptions {
  int epochs{200};
  double lr{1e-3};
  int batch_size{256};
  int patience{10};
  std::uint64_t seed{0};
};

struct History {
  std::vector<double> train_loss;       ///< mean BCE over the epoch's batches
  std::vector<double> validation_loss;  ///< evaluation-mode BCE after each epoch
  int best_epoch{0};                    ///< 0 = the initial weights
};

struct ClassifierResult {
  MlpWeights weights;
  History history;
};

/// Adam on BCE with early stopping on validation BCE; restores the best weights.
ClassifierResult train_classifier(MlpWeights init, const MlpConfig& cfg, const Dataset& train, const Dataset& val,
                                  const ClassifierOptions& opts);

struct FtConfig {
  double alpha_c{1.0};
  double alpha_s{1.0};
  double alpha_mlp{1.0};
  double lr_scale{0.01};
  void validate() const;
};

/// One knowledge graph taking part in fine-tuning.
struct KgeComponent {
  const KnowledgeGraph* graph{nullptr};
  kge::KgeConfig model;
  train::LossConfig loss;
  kge::EmbeddingTable table;
};

struct FineTuneResult {
  MlpWeights weights;
  kge::EmbeddingTable chemical_table;
  kge::EmbeddingTable species_table;
  History history;
};

/// Joint training of the classifier and both embedding tables on
/// alpha_c * L_KGE(C) + alpha_s * L_KGE(S) + alpha_mlp * BCE at lr * lr_scale.
/// The classifier's W_c / W_s are the tables' entity matrices, so `init` must
/// have been built from them. Each epoch draws |train| triples per graph;
/// early stopping watches validation BCE only.
FineTuneResult fine_tune(MlpWeights init, const MlpConfig& cfg, const FtConfig& ft, KgeComponent chemical,
                         KgeComponent species, const Dataset& train, const Dataset& val,
                         const ClassifierOptions& opts);

struct Prediction {
  std::vector<int> labels;
  std::vector<double> scores;
};

/// label = [score > threshold].
Prediction predict(const MlpWeights& w, const MlpConfig& cfg, std::span<const Sample> inputs, double threshold = 0.5);

std::string serialize_checkpoint(const MlpWeights& w, const MlpConfig& cfg);
MlpWeights parse_checkpoint(std::string_view text, MlpConfig* cfg_out = nullptr);
void save_checkpoint(const MlpWeights& w, const MlpConfig& cfg, const std::filesystem::path& path);
MlpWeights load_checkpoint(const std::filesystem::path& path, MlpConfig* cfg_out = nullptr);

/// Draws a layer spec within the searched ranges: 0..3 layers per branch and
/// in the trunk, 2^4..2^10 units, 2^2..2^5 for the concentration branch.
LayerSpec sample_layer_spec(std::mt19937_64& rng);

}  // namespace toxkge::clf
