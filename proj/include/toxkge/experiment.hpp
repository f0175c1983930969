#pragma once

// Experiment driver: prepares data, pre-trains embeddings, trains the
// one-hot / pre-trained / fine-tuned classifiers and scores them on test.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "toxkge/align.hpp"
#include "toxkge/classifier.hpp"
#include "toxkge/config.hpp"
#include "toxkge/effects.hpp"
#include "toxkge/eval.hpp"
#include "toxkge/kg_store.hpp"

namespace toxkge::experiment {

enum class Phase { Prepare, Pretrain, Train, Predict, Score };
std::string_view to_string(Phase p);

/// Hooks for logging and instrumentation.
class Observer {
public:
  virtual ~Observer() = default;
  virtual void on_phase(Phase /*phase*/, std::string_view /*detail*/) {}
  /// Called whenever test labels are unsealed.
  virtual void on_test_labels(Phase /*phase*/, std::string_view /*model*/) {}
};

/// Test labels that can only be read during the Score phase.
class SealedLabels {
public:
  explicit SealedLabels(std::vector<double> labels) : labels_(std::move(labels)) {}
  /// Throws Error outside the Score phase.
  const std::vector<double>& open(Phase current, std::string_view model, Observer* observer) const;
  std::size_t size() const noexcept { return labels_.size(); }

private:
  std::vector<double> labels_;
};

/// A pre-trained embedding table and the settings it was trained with.
struct Pretrained {
  kge::EmbeddingTable table;
  kge::KgeConfig model;
  train::LossConfig loss;
  train::TrainState state;
  std::optional<train::HpoResult> hpo;
};

/// Trains the KGE of one graph, after random search when `section.hpo` is set.
Pretrained pretrain(const KnowledgeGraph& g, const KgeSection& section, std::uint64_t seed);

/// Everything a repeat needs besides its split. Record names are graph entity
/// names; the pre-trained tables are required for the PT and FT sources.
struct Inputs {
  const KnowledgeGraph* chemical_graph{nullptr};
  const KnowledgeGraph* species_graph{nullptr};
  const Pretrained* chemical{nullptr};
  const Pretrained* species{nullptr};
};

struct RunSettings {
  clf::MlpConfig mlp;
  std::vector<ClassifierSetting> settings;
  std::vector<clf::EmbeddingSource> sources;
  clf::ClassifierOptions classifier;
  clf::FtConfig finetune;
  double threshold{0.5};
  bool tau_from_test{false};

  static RunSettings from(const RunConfig& c);
};

struct VariantResult {
  std::string model;  ///< e.g. "Simple PT DistMult-HAKE"
  std::string setting;
  clf::EmbeddingSource source{clf::EmbeddingSource::OneHot};
  eval::MetricsReport test;
  eval::MetricsReport validation;  ///< tau_max and yi_max chosen on validation itself
  clf::History history;
  std::optional<double> chemical_explained_variance;  ///< over the rows of chemicals in the data
  std::optional<double> species_explained_variance;
};

/// Trains and scores every (setting, source) pair on one split. The training
/// partition is oversampled. FT starts from the trained PT weights.
std::vector<VariantResult> run_repeat(const Inputs& in, const effects::SplitResult& split, const RunSettings& rs,
                                      std::uint64_t seed, Observer* observer = nullptr);

struct RunRow {
  std::size_t run{0};
  VariantResult result;
};

struct Report {
  std::vector<RunRow> rows;
  std::string strategy;
};

/// Renames records through a source -> target mapping; unmapped records are dropped.
std::vector<effects::EffectRecord> apply_mapping(const std::vector<effects::EffectRecord>& records,
                                                 const std::vector<align::Mapping>* chemicals,
                                                 const std::vector<align::Mapping>* species);

/// Full pipeline for a config. Writes under `out`: metrics.csv,
/// explained_variance.csv, splits/run_<r>/, kge/{chemical,species}.ckpt with
/// training logs. Repeat r uses seed `cfg.seed + r`.
Report run_experiment(const RunConfig& cfg, const std::filesystem::path& out, Observer* observer = nullptr);

/// Per-run rows followed by one aggregate row per model.
std::string format_metrics(const Report& r);

}  // namespace toxkge::experiment
