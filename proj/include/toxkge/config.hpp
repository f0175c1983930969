#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "toxkge/classifier.hpp"
#include "toxkge/effects.hpp"
#include "toxkge/kge.hpp"
#include "toxkge/train.hpp"

namespace toxkge {

/// Embedding model, loss and optimizer settings for one graph.
struct KgeSection {
  kge::KgeConfig model;
  train::LossConfig loss;
  train::TrainOptions train;
  bool hpo{false};  ///< run random search first and train the best configuration
  train::HpoSpec hpo_spec;
};

/// One classifier architecture evaluated for every embedding source.
struct ClassifierSetting {
  std::string name;
  clf::LayerSpec layers;
};

struct RunConfig {
  std::filesystem::path chemical_graph;
  std::filesystem::path species_graph;
  std::filesystem::path effects;
  std::filesystem::path chemical_mapping;  ///< optional; effects name -> graph entity
  std::filesystem::path species_mapping;   ///< optional
  std::filesystem::path units;             ///< optional extra unit registry

  effects::Strategy strategy{effects::Strategy::Random};
  effects::Proportions proportions;

  KgeSection chemical_kge;
  KgeSection species_kge;

  clf::MlpConfig mlp;  ///< dropout and batch norm settings; layers come from `settings`
  std::vector<ClassifierSetting> settings;
  std::vector<clf::EmbeddingSource> sources{clf::EmbeddingSource::OneHot, clf::EmbeddingSource::Pretrained,
                                            clf::EmbeddingSource::Finetune};
  clf::ClassifierOptions classifier;
  clf::FtConfig finetune;

  std::uint64_t seed{0};
  int repeats{10};
  double threshold{0.5};
  bool tau_from_test{false};  ///< pick tau_max on test instead of validation

  /// Checks value ranges, equal embedding widths for both graphs, and that
  /// every referenced file exists. Throws ConfigError.
  void validate() const;
};

/// Defaults: a simple (trunk 128) and a complex setting.
std::vector<ClassifierSetting> default_settings();

/// Relative paths resolve against `base_dir`. Unknown keys are rejected.
RunConfig parse_config(std::string_view yaml, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace toxkge
