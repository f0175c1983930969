#include "toxkge/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <initializer_list>
#include <set>

#include "toxkge/detail/text.hpp"
#include "toxkge/error.hpp"

namespace toxkge {

namespace {

void check_keys(const YAML::Node& node, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!node) return;
  if (!node.IsMap()) throw ConfigError(where + " must be a mapping");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& kv : node) {
    auto key = kv.first.as<std::string>();
    if (!ok.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read(const YAML::Node& node, const char* key, T& out, const std::string& where) {
  if (!node || !node[key]) return;
  try {
    out = node[key].as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("bad value for " + where + "." + key);
  }
}

void read_path(const YAML::Node& node, const char* key, std::filesystem::path& out, const std::filesystem::path& base) {
  std::string s;
  read(node, key, s, "data");
  if (s.empty()) return;
  std::filesystem::path p(s);
  out = p.is_absolute() ? p : base / p;
}

template <class T>
void read_range(const YAML::Node& node, const char* key, T& lo, T& hi, const std::string& where) {
  if (!node || !node[key]) return;
  const auto& r = node[key];
  if (!r.IsSequence() || r.size() != 2) throw ConfigError(where + "." + key + " must be [min, max]");
  try {
    lo = r[0].as<T>();
    hi = r[1].as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("bad value for " + where + "." + key);
  }
}

KgeSection read_kge(const YAML::Node& node, const std::string& where) {
  KgeSection s;
  check_keys(node, where,
             {"model", "k", "norm", "bias", "modulus", "conv_filters", "conv_filter_rows", "conv_filter_cols",
              "conve_reshape_rows", "loss", "margin", "negatives", "sampling", "epochs", "lr", "batch_size", "hpo"});
  if (!node) return s;
  try {
    if (node["model"]) s.model.model = kge::parse_model_kind(node["model"].as<std::string>());
    if (node["loss"]) s.loss.kind = train::parse_loss_kind(node["loss"].as<std::string>());
    if (node["sampling"]) s.loss.sampling = train::parse_sampling_mode(node["sampling"].as<std::string>());
  } catch (const YAML::Exception&) {
    throw ConfigError("bad value in " + where);
  }
  read(node, "k", s.model.k, where);
  read(node, "norm", s.model.norm_order, where);
  read(node, "bias", s.model.bias, where);
  read(node, "modulus", s.model.modulus_constraint, where);
  read(node, "conv_filters", s.model.conv_filters, where);
  read(node, "conv_filter_rows", s.model.conv_filter_rows, where);
  read(node, "conv_filter_cols", s.model.conv_filter_cols, where);
  read(node, "conve_reshape_rows", s.model.conve_reshape_rows, where);
  read(node, "margin", s.loss.margin, where);
  read(node, "negatives", s.loss.negatives, where);
  read(node, "epochs", s.train.epochs, where);
  read(node, "lr", s.train.lr, where);
  read(node, "batch_size", s.train.batch_size, where);
  s.hpo_spec.sampling = s.loss.sampling;

  if (const auto& h = node["hpo"]) {
    const std::string hw = where + ".hpo";
    if (h.IsScalar()) {
      read(node, "hpo", s.hpo, where);
    } else {
      check_keys(h, hw, {"enabled", "trials", "losses", "margin", "bias", "dim", "negatives"});
      s.hpo = true;
      read(h, "enabled", s.hpo, hw);
      read(h, "trials", s.hpo_spec.trials, hw);
      read_range(h, "margin", s.hpo_spec.margin_min, s.hpo_spec.margin_max, hw);
      read_range(h, "bias", s.hpo_spec.bias_min, s.hpo_spec.bias_max, hw);
      read_range(h, "dim", s.hpo_spec.dim_min, s.hpo_spec.dim_max, hw);
      read_range(h, "negatives", s.hpo_spec.negatives_min, s.hpo_spec.negatives_max, hw);
      if (const auto& l = h["losses"]) {
        if (!l.IsSequence()) throw ConfigError(hw + ".losses must be a list");
        s.hpo_spec.losses.clear();
        for (const auto& item : l) s.hpo_spec.losses.push_back(train::parse_loss_kind(item.as<std::string>()));
      }
    }
  }
  return s;
}

void require_file(const std::filesystem::path& p, const char* what) {
  if (!p.empty() && !std::filesystem::is_regular_file(p))
    throw ConfigError(std::string(what) + " not found: " + p.string());
}

}  // namespace

std::vector<ClassifierSetting> default_settings() {
  return {{"simple", clf::LayerSpec::parse("()/()/()/(128)")},
          {"complex", clf::LayerSpec::parse("(128)/(128)/(8)/(128)")}};
}

void RunConfig::validate() const {
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  if (!(threshold > 0 && threshold < 1)) throw ConfigError("threshold must lie in (0,1)");
  proportions.validate();
  for (const auto* s : {&chemical_kge, &species_kge}) {
    s->model.validate();
    s->loss.validate();
    if (s->train.epochs < 1 || !(s->train.lr > 0) || s->train.batch_size < 1)
      throw ConfigError("KGE epochs, learning rate and batch size must be positive");
    if (s->hpo) s->hpo_spec.validate();
  }
  if (!chemical_kge.hpo && !species_kge.hpo &&
      kge::entity_width(chemical_kge.model) != kge::entity_width(species_kge.model))
    throw ConfigError("chemical and species embeddings must have the same row width");
  if (settings.empty()) throw ConfigError("at least one classifier setting is required");
  if (sources.empty()) throw ConfigError("at least one embedding source is required");
  for (const auto& s : settings) {
    clf::MlpConfig m = mlp;
    m.layers = s.layers;
    m.validate();
    if (!m.units_in_search_range()) throw ConfigError("layer units of setting '" + s.name + "' outside the search range");
  }
  if (classifier.epochs < 1 || !(classifier.lr > 0) || classifier.batch_size < 1 || classifier.patience < 1)
    throw ConfigError("classifier epochs, learning rate, batch size and patience must be positive");
  finetune.validate();
  require_file(chemical_graph, "chemical graph");
  require_file(species_graph, "species graph");
  require_file(effects, "effects file");
  require_file(chemical_mapping, "chemical mapping");
  require_file(species_mapping, "species mapping");
  require_file(units, "unit registry");
}

RunConfig parse_config(std::string_view yaml, const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("invalid YAML: ") + e.what());
  }
  RunConfig c;
  if (!root || root.IsNull()) {
    c.settings = default_settings();
    return c;
  }
  check_keys(root, "config", {"seed", "repeats", "data", "split", "kge", "classifier", "finetune", "evaluation"});
  read(root, "seed", c.seed, "config");
  read(root, "repeats", c.repeats, "config");

  const auto data = root["data"];
  check_keys(data, "data",
             {"chemical_graph", "species_graph", "effects", "chemical_mapping", "species_mapping", "units"});
  read_path(data, "chemical_graph", c.chemical_graph, base_dir);
  read_path(data, "species_graph", c.species_graph, base_dir);
  read_path(data, "effects", c.effects, base_dir);
  read_path(data, "chemical_mapping", c.chemical_mapping, base_dir);
  read_path(data, "species_mapping", c.species_mapping, base_dir);
  read_path(data, "units", c.units, base_dir);

  const auto split = root["split"];
  check_keys(split, "split", {"strategy", "train", "validation", "test"});
  if (split && split["strategy"]) c.strategy = effects::parse_strategy(split["strategy"].as<std::string>());
  read(split, "train", c.proportions.train, "split");
  read(split, "validation", c.proportions.validation, "split");
  read(split, "test", c.proportions.test, "split");

  const auto kge = root["kge"];
  check_keys(kge, "kge", {"chemical", "species"});
  if (kge) {
    c.chemical_kge = read_kge(kge["chemical"], "kge.chemical");
    c.species_kge = read_kge(kge["species"], "kge.species");
  }

  const auto cl = root["classifier"];
  check_keys(cl, "classifier",
             {"dropout", "batch_norm", "bn_momentum", "bn_eps", "epochs", "lr", "batch_size", "patience", "sources",
              "settings"});
  read(cl, "dropout", c.mlp.dropout, "classifier");
  read(cl, "batch_norm", c.mlp.batch_norm, "classifier");
  read(cl, "bn_momentum", c.mlp.bn_momentum, "classifier");
  read(cl, "bn_eps", c.mlp.bn_eps, "classifier");
  read(cl, "epochs", c.classifier.epochs, "classifier");
  read(cl, "lr", c.classifier.lr, "classifier");
  read(cl, "batch_size", c.classifier.batch_size, "classifier");
  read(cl, "patience", c.classifier.patience, "classifier");
  if (cl && cl["sources"]) {
    if (!cl["sources"].IsSequence()) throw ConfigError("classifier.sources must be a list");
    c.sources.clear();
    for (const auto& s : cl["sources"]) c.sources.push_back(clf::parse_embedding_source(s.as<std::string>()));
  }
  if (cl && cl["settings"]) {
    if (!cl["settings"].IsMap()) throw ConfigError("classifier.settings must map names to layer specs");
    for (const auto& kv : cl["settings"])
      c.settings.push_back({kv.first.as<std::string>(), clf::LayerSpec::parse(kv.second.as<std::string>())});
  } else {
    c.settings = default_settings();
  }

  const auto ft = root["finetune"];
  check_keys(ft, "finetune", {"alpha_c", "alpha_s", "alpha_mlp", "lr_scale"});
  read(ft, "alpha_c", c.finetune.alpha_c, "finetune");
  read(ft, "alpha_s", c.finetune.alpha_s, "finetune");
  read(ft, "alpha_mlp", c.finetune.alpha_mlp, "finetune");
  read(ft, "lr_scale", c.finetune.lr_scale, "finetune");

  const auto ev = root["evaluation"];
  check_keys(ev, "evaluation", {"threshold", "tau_from_test"});
  read(ev, "threshold", c.threshold, "evaluation");
  read(ev, "tau_from_test", c.tau_from_test, "evaluation");
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw ConfigError("config not found: " + path.string());
  auto c = parse_config(detail::read_file(path), path.parent_path());
  c.validate();
  return c;
}

}  // namespace toxkge
