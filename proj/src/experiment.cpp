#include "toxkge/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include "toxkge/detail/text.hpp"
#include "toxkge/error.hpp"

namespace toxkge::experiment {

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string capitalized(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

/// Index spaces for classifier inputs: graph entity ids for PT/FT, a local
/// dictionary over the effects data for one-hot.
struct Encoder {
  Dictionary chemicals;
  Dictionary species;
  const KnowledgeGraph* chemical_graph{nullptr};
  const KnowledgeGraph* species_graph{nullptr};

  clf::Sample encode(const effects::EffectRecord& r, bool graph_ids) const {
    clf::Sample s;
    s.kappa = r.concentration;
    if (graph_ids) {
      s.chemical = chemical_graph->entities().at(r.chemical);
      s.species = species_graph->entities().at(r.species);
    } else {
      s.chemical = chemicals.at(r.chemical);
      s.species = species.at(r.species);
    }
    return s;
  }

  std::vector<clf::Sample> inputs(const std::vector<effects::EffectRecord>& rs, bool graph_ids) const {
    std::vector<clf::Sample> out;
    out.reserve(rs.size());
    for (const auto& r : rs) out.push_back(encode(r, graph_ids));
    return out;
  }

  clf::Dataset dataset(const std::vector<effects::EffectRecord>& rs, bool graph_ids) const {
    clf::Dataset d;
    d.x = inputs(rs, graph_ids);
    for (const auto& r : rs) d.y.push_back(r.label);
    return d;
  }
};

std::optional<double> explained_variance_of(const Matrix& table, const std::set<std::int32_t>& rows) {
  if (rows.size() < 2) return std::nullopt;
  Matrix m(rows.size(), table.cols());
  std::size_t i = 0;
  for (auto r : rows) {
    auto src = table.row(static_cast<std::size_t>(r));
    std::copy(src.begin(), src.end(), m.row(i++).begin());
  }
  try {
    return eval::explained_variance(m);
  } catch (const DataError&) {
    return std::nullopt;
  }
}

struct Trained {
  std::string model;
  std::string setting;
  clf::EmbeddingSource source;
  clf::MlpConfig cfg;
  clf::MlpWeights weights;
  clf::History history;
  bool graph_ids{false};
};

}  // namespace

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Prepare: return "prepare";
    case Phase::Pretrain: return "pretrain";
    case Phase::Train: return "train";
    case Phase::Predict: return "predict";
    case Phase::Score: return "score";
  }
  return "?";
}

const std::vector<double>& SealedLabels::open(Phase current, std::string_view model, Observer* observer) const {
  if (current != Phase::Score)
    throw Error("test labels requested during the " + std::string(to_string(current)) + " phase");
  if (observer) observer->on_test_labels(current, model);
  return labels_;
}

Pretrained pretrain(const KnowledgeGraph& g, const KgeSection& section, std::uint64_t seed) {
  Pretrained p;
  p.model = section.model;
  p.loss = section.loss;
  train::TrainOptions opts = section.train;
  opts.seed = seed;
  if (section.hpo) {
    p.hpo = train::random_search(g, section.model, section.hpo_spec, opts);
    p.model = p.hpo->best_model;
    p.loss = p.hpo->best_loss;
  }
  auto r = train::train_kge(g, p.model, p.loss, opts);
  p.table = std::move(r.table);
  p.state = std::move(r.state);
  return p;
}

RunSettings RunSettings::from(const RunConfig& c) {
  RunSettings s;
  s.mlp = c.mlp;
  s.settings = c.settings;
  s.sources = c.sources;
  s.classifier = c.classifier;
  s.finetune = c.finetune;
  s.threshold = c.threshold;
  s.tau_from_test = c.tau_from_test;
  return s;
}

std::vector<VariantResult> run_repeat(const Inputs& in, const effects::SplitResult& split, const RunSettings& rs,
                                      std::uint64_t seed, Observer* observer) {
  auto phase = [&](Phase p, std::string_view detail) {
    if (observer) observer->on_phase(p, detail);
  };
  const bool wants_graph = std::any_of(rs.sources.begin(), rs.sources.end(),
                                       [](auto s) { return s != clf::EmbeddingSource::OneHot; });
  if (wants_graph && (!in.chemical || !in.species || !in.chemical_graph || !in.species_graph))
    throw ConfigError("pre-trained and fine-tuned classifiers need both graphs and their embeddings");

  phase(Phase::Prepare, "encode");
  Encoder enc;
  enc.chemical_graph = in.chemical_graph;
  enc.species_graph = in.species_graph;
  std::vector<effects::EffectRecord> all = split.train;
  all.insert(all.end(), split.validation.begin(), split.validation.end());
  all.insert(all.end(), split.test.begin(), split.test.end());
  {
    std::set<std::string> cs, ss;
    for (const auto& r : all) cs.insert(r.chemical), ss.insert(r.species);
    for (const auto& c : cs) enc.chemicals.intern(c);
    for (const auto& s : ss) enc.species.intern(s);
  }
  const auto train_records = effects::oversample(split.train, mix(seed, 1));

  std::vector<double> test_truth;
  for (const auto& r : split.test) test_truth.push_back(r.label);
  const SealedLabels sealed(std::move(test_truth));

  phase(Phase::Train, "classifiers");
  std::vector<Trained> models;
  const bool want_pt = std::find(rs.sources.begin(), rs.sources.end(), clf::EmbeddingSource::Pretrained) !=
                       rs.sources.end();
  const bool want_ft = std::find(rs.sources.begin(), rs.sources.end(), clf::EmbeddingSource::Finetune) !=
                       rs.sources.end();
  const bool want_oh = std::find(rs.sources.begin(), rs.sources.end(), clf::EmbeddingSource::OneHot) !=
                       rs.sources.end();
  std::string kge_names;
  if (wants_graph)
    kge_names = std::string(kge::to_string(in.chemical->model.model)) + "-" +
                std::string(kge::to_string(in.species->model.model));

  std::uint64_t salt = 100;
  for (const auto& setting : rs.settings) {
    const std::string prefix = capitalized(setting.name);
    clf::ClassifierOptions opts = rs.classifier;
    if (want_oh) {
      clf::MlpConfig cfg = rs.mlp;
      cfg.layers = setting.layers;
      cfg.source = clf::EmbeddingSource::OneHot;
      auto train = enc.dataset(train_records, false), val = enc.dataset(split.validation, false);
      opts.seed = mix(seed, ++salt);
      auto init = clf::build_mlp(cfg, enc.chemicals.size(), enc.species.size(), mix(seed, ++salt));
      auto r = clf::train_classifier(std::move(init), cfg, train, val, opts);
      models.push_back({prefix + " one-hot", setting.name, cfg.source, cfg, std::move(r.weights), r.history, false});
    }
    if (want_pt || want_ft) {
      clf::MlpConfig cfg = rs.mlp;
      cfg.layers = setting.layers;
      cfg.source = clf::EmbeddingSource::Pretrained;
      cfg.k = static_cast<int>(in.chemical->table.entities.cols());
      auto train = enc.dataset(train_records, true), val = enc.dataset(split.validation, true);
      opts.seed = mix(seed, ++salt);
      auto init = clf::build_mlp(cfg, 0, 0, mix(seed, ++salt), &in.chemical->table.entities,
                                 &in.species->table.entities);
      auto pt = clf::train_classifier(std::move(init), cfg, train, val, opts);

      if (want_ft) {
        clf::MlpConfig ft_cfg = cfg;
        ft_cfg.source = clf::EmbeddingSource::Finetune;
        clf::MlpWeights init_ft = pt.weights;
        init_ft.embeddings_trainable = true;
        clf::KgeComponent chem{in.chemical_graph, in.chemical->model, in.chemical->loss, in.chemical->table};
        clf::KgeComponent spec{in.species_graph, in.species->model, in.species->loss, in.species->table};
        clf::ClassifierOptions ft_opts = rs.classifier;
        ft_opts.seed = mix(seed, ++salt);
        auto ft = clf::fine_tune(std::move(init_ft), ft_cfg, rs.finetune, std::move(chem), std::move(spec), train, val,
                                 ft_opts);
        if (want_pt)
          models.push_back({prefix + " PT " + kge_names, setting.name, cfg.source, cfg, std::move(pt.weights),
                            pt.history, true});
        models.push_back({prefix + " FT " + kge_names, setting.name, ft_cfg.source, ft_cfg, std::move(ft.weights),
                          ft.history, true});
      } else {
        models.push_back({prefix + " PT " + kge_names, setting.name, cfg.source, cfg, std::move(pt.weights),
                          pt.history, true});
      }
    }
  }

  phase(Phase::Predict, "validation and test");
  struct Scores {
    std::vector<double> validation, test;
  };
  std::vector<Scores> scores;
  for (const auto& m : models) {
    auto val_in = enc.inputs(split.validation, m.graph_ids);
    auto test_in = enc.inputs(split.test, m.graph_ids);
    scores.push_back({clf::predict_proba(m.weights, m.cfg, val_in), clf::predict_proba(m.weights, m.cfg, test_in)});
  }

  phase(Phase::Score, "metrics");
  std::vector<double> val_truth;
  for (const auto& r : split.validation) val_truth.push_back(r.label);
  std::set<std::int32_t> chem_rows, species_rows;
  if (wants_graph)
    for (const auto& r : all) {
      chem_rows.insert(in.chemical_graph->entities().at(r.chemical));
      species_rows.insert(in.species_graph->entities().at(r.species));
    }

  std::vector<VariantResult> out;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const auto& m = models[i];
    const auto& truth = sealed.open(Phase::Score, m.model, observer);
    VariantResult v;
    v.model = m.model;
    v.setting = m.setting;
    v.source = m.source;
    v.history = m.history;

    auto vr = eval::compute_metrics(eval::confusion(scores[i].validation, val_truth, rs.threshold));
    auto vmax = eval::youden_max(scores[i].validation, val_truth);
    v.validation = {vr.sensitivity, vr.specificity, vr.yi, vmax.yi_max, vmax.tau_max};

    auto tr = eval::compute_metrics(eval::confusion(scores[i].test, truth, rs.threshold));
    double tau = rs.tau_from_test ? eval::youden_max(scores[i].test, truth).tau_max : vmax.tau_max;
    auto at_tau = eval::compute_metrics(eval::confusion(scores[i].test, truth, tau));
    v.test = {tr.sensitivity, tr.specificity, tr.yi, at_tau.yi, tau};

    if (m.graph_ids) {
      v.chemical_explained_variance = explained_variance_of(m.weights.chemical_embedding, chem_rows);
      v.species_explained_variance = explained_variance_of(m.weights.species_embedding, species_rows);
    }
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<effects::EffectRecord> apply_mapping(const std::vector<effects::EffectRecord>& records,
                                                 const std::vector<align::Mapping>* chemicals,
                                                 const std::vector<align::Mapping>* species) {
  auto index = [](const std::vector<align::Mapping>* m) {
    std::map<std::string, std::string> out;
    if (m)
      for (const auto& x : *m) out.emplace(x.source, x.target);
    return out;
  };
  const auto cm = index(chemicals), sm = index(species);
  std::vector<effects::EffectRecord> out;
  for (auto r : records) {
    if (chemicals) {
      auto it = cm.find(r.chemical);
      if (it == cm.end()) continue;
      r.chemical = it->second;
    }
    if (species) {
      auto it = sm.find(r.species);
      if (it == sm.end()) continue;
      r.species = it->second;
    }
    out.push_back(std::move(r));
  }
  return out;
}

Report run_experiment(const RunConfig& cfg, const std::filesystem::path& out, Observer* observer) {
  cfg.validate();
  if (cfg.chemical_graph.empty() || cfg.species_graph.empty() || cfg.effects.empty())
    throw ConfigError("run-experiment needs data.chemical_graph, data.species_graph and data.effects");
  auto phase = [&](Phase p, std::string_view detail) {
    if (observer) observer->on_phase(p, detail);
  };

  phase(Phase::Prepare, "load data");
  const KnowledgeGraph kg_c = drop_literals(load_triples(cfg.chemical_graph));
  const KnowledgeGraph kg_s = drop_literals(load_triples(cfg.species_graph));
  auto raw = effects::load_effects(cfg.effects);
  std::optional<std::vector<align::Mapping>> map_c, map_s;
  if (!cfg.chemical_mapping.empty()) map_c = align::load_mappings(cfg.chemical_mapping);
  if (!cfg.species_mapping.empty()) map_s = align::load_mappings(cfg.species_mapping);
  raw = apply_mapping(raw, map_c ? &*map_c : nullptr, map_s ? &*map_s : nullptr);

  std::set<std::string> chem_names(kg_c.entities().names().begin(), kg_c.entities().names().end());
  std::set<std::string> species_names(kg_s.entities().names().begin(), kg_s.entities().names().end());
  std::vector<effects::EffectRecord> records;
  const bool prepared = !raw.empty() && std::all_of(raw.begin(), raw.end(), [](const auto& r) {
    return r.unit == effects::kLogUnit;
  });
  if (prepared) {
    records = effects::filter_mapped(raw, chem_names, species_names);
  } else {
    auto units = effects::UnitRegistry::builtin();
    if (!cfg.units.empty()) units.load(cfg.units);
    records = effects::prepare(raw, units, &chem_names, &species_names);
  }
  if (records.empty()) throw DataError("no effect records left after mapping to the graphs");

  std::filesystem::create_directories(out);
  const bool wants_graph = std::any_of(cfg.sources.begin(), cfg.sources.end(),
                                       [](auto s) { return s != clf::EmbeddingSource::OneHot; });
  std::optional<Pretrained> pre_c, pre_s;
  if (wants_graph) {
    phase(Phase::Pretrain, "chemical graph");
    pre_c = pretrain(kg_c, cfg.chemical_kge, mix(cfg.seed, 11));
    phase(Phase::Pretrain, "species graph");
    pre_s = pretrain(kg_s, cfg.species_kge, mix(cfg.seed, 12));
    if (pre_c->table.entities.cols() != pre_s->table.entities.cols())
      throw ConfigError("chemical and species embeddings ended up with different row widths");
    std::filesystem::create_directories(out / "kge");
    for (auto [name, p] : {std::pair{"chemical", &*pre_c}, {"species", &*pre_s}}) {
      kge::save_checkpoint(p->table, out / "kge" / (std::string(name) + ".ckpt"));
      detail::write_file(out / "kge" / (std::string(name) + "_log.csv"), train::format_training_log(p->state));
      if (p->hpo) detail::write_file(out / "kge" / (std::string(name) + "_hpo.csv"), train::format_hpo_log(*p->hpo));
    }
  }

  Inputs in{&kg_c, &kg_s, pre_c ? &*pre_c : nullptr, pre_s ? &*pre_s : nullptr};
  const auto settings = RunSettings::from(cfg);
  Report report;
  report.strategy = std::string(effects::to_string(cfg.strategy));
  std::string ev_csv = "model,run,chemical_explained_variance,species_explained_variance,yi,yi_max\n";
  for (int r = 0; r < cfg.repeats; ++r) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(r);
    phase(Phase::Prepare, "split " + std::to_string(r));
    auto split = effects::split_strategy(records, cfg.strategy, cfg.proportions, seed);
    effects::write_split(split, out / "splits" / ("run_" + std::to_string(r)));
    for (auto& v : run_repeat(in, split, settings, seed, observer)) {
      if (v.chemical_explained_variance && v.species_explained_variance)
        ev_csv += detail::csv_escape(v.model) + ',' + std::to_string(r) + ',' +
                  detail::format_double(*v.chemical_explained_variance) + ',' +
                  detail::format_double(*v.species_explained_variance) + ',' + detail::format_double(v.test.yi) +
                  ',' + detail::format_double(v.test.yi_max) + '\n';
      report.rows.push_back({static_cast<std::size_t>(r), std::move(v)});
    }
  }
  detail::write_file(out / "metrics.csv", format_metrics(report));
  if (wants_graph) detail::write_file(out / "explained_variance.csv", ev_csv);
  return report;
}

std::string format_metrics(const Report& r) {
  std::string out = eval::metrics_csv_header();
  std::vector<std::string> order;
  std::map<std::string, std::vector<eval::MetricsReport>> by_model;
  for (const auto& row : r.rows) {
    out += eval::metrics_csv_row(row.result.model, r.strategy, row.run, row.result.test);
    auto& runs = by_model[row.result.model];
    if (runs.empty()) order.push_back(row.result.model);
    runs.push_back(row.result.test);
  }
  for (const auto& m : order) out += eval::metrics_csv_aggregate(m, r.strategy, eval::aggregate_runs(by_model[m]));
  return out;
}

}  // namespace toxkge::experiment
