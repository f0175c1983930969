// Command-line driver.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "toxkge/align.hpp"
#include "toxkge/classifier.hpp"
#include "toxkge/config.hpp"
#include "toxkge/detail/text.hpp"
#include "toxkge/effects.hpp"
#include "toxkge/error.hpp"
#include "toxkge/eval.hpp"
#include "toxkge/experiment.hpp"
#include "toxkge/kg_store.hpp"
#include "toxkge/kge.hpp"
#include "toxkge/synthetic.hpp"
#include "toxkge/train.hpp"

namespace fs = std::filesystem;
using namespace toxkge;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct Shared {
  std::string config;
  std::uint64_t seed{0};
  bool seed_set{false};
  std::string out;
};

void add_shared(CLI::App* cmd, Shared& s, bool out_required = true) {
  cmd->add_option("--config", s.config, "YAML run configuration")->check(CLI::ExistingFile);
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&s](std::uint64_t v) { s.seed = v, s.seed_set = true; }, "random seed");
  auto* o = cmd->add_option("--out", s.out, "output file or directory");
  if (out_required) o->required();
}

RunConfig config_of(const Shared& s) {
  RunConfig c = s.config.empty() ? parse_config("", fs::current_path()) : load_config(s.config);
  if (s.seed_set) c.seed = s.seed;
  return c;
}

void emit(const Shared& s, const std::string& text) {
  if (s.out.empty() || s.out == "-") {
    std::cout << text;
  } else {
    if (auto parent = fs::path(s.out).parent_path(); !parent.empty()) fs::create_directories(parent);
    detail::write_file(s.out, text);
  }
}

std::string join_lines(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += n + '\n';
  return out;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::vector<std::string> out;
  const std::string text = detail::read_file(p);
  for (auto l : detail::lines(text))
    if (!detail::trim(l).empty()) out.emplace_back(detail::trim(l));
  return out;
}

KnowledgeGraph load_graph(const fs::path& p) {
  auto g = drop_literals(load_triples(p));
  if (g.triples().empty()) throw DataError("graph has no entity triples: " + p.string());
  return g;
}

// --- KGE -----------------------------------------------------------------------

struct KgeFlags {
  std::string graph{"chemical"};
  std::string input;
  std::string model, loss;
  int k{0}, negatives{0}, epochs{0}, trials{0};
  double lr{0};
};

void add_kge_flags(CLI::App* cmd, KgeFlags& f) {
  cmd->add_option("--graph", f.graph, "config section: chemical or species")
      ->check(CLI::IsMember({"chemical", "species"}));
  cmd->add_option("--input", f.input, "triple file (defaults to the config's graph path)");
  cmd->add_option("--model", f.model, "scoring function");
  cmd->add_option("--loss", f.loss, "L_H1, L_L1, L_H2 or L_L2");
  cmd->add_option("--dim", f.k, "embedding dimension");
  cmd->add_option("--negatives", f.negatives, "negatives per positive");
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--lr", f.lr, "learning rate");
}

std::pair<KgeSection, fs::path> kge_section(const RunConfig& c, const KgeFlags& f) {
  KgeSection s = f.graph == "species" ? c.species_kge : c.chemical_kge;
  fs::path input = f.input.empty() ? (f.graph == "species" ? c.species_graph : c.chemical_graph) : fs::path(f.input);
  if (input.empty()) throw ConfigError("no graph given: use --input or data." + f.graph + "_graph in the config");
  if (!f.model.empty()) s.model.model = kge::parse_model_kind(f.model);
  if (!f.loss.empty()) s.loss.kind = train::parse_loss_kind(f.loss);
  if (f.k > 0) s.model.k = f.k;
  if (f.negatives > 0) s.loss.negatives = f.negatives;
  if (f.epochs > 0) s.train.epochs = f.epochs;
  if (f.lr > 0) s.train.lr = f.lr;
  if (f.trials > 0) s.hpo_spec.trials = f.trials;
  s.model.validate();
  s.loss.validate();
  return {s, input};
}

void write_kge_outputs(const fs::path& dir, const experiment::Pretrained& p, const KnowledgeGraph& g) {
  fs::create_directories(dir);
  kge::save_checkpoint(p.table, dir / "model.ckpt");
  detail::write_file(dir / "entities.txt", join_lines(g.entities().names()));
  detail::write_file(dir / "training_log.csv", train::format_training_log(p.state));
  if (p.hpo) detail::write_file(dir / "hpo_log.csv", train::format_hpo_log(*p.hpo));
  std::string summary = "model\t" + std::string(kge::to_string(p.model.model)) + "\nk\t" +
                        std::to_string(p.model.k) + "\nloss\t" + std::string(train::to_string(p.loss.kind)) +
                        "\nmargin\t" + detail::format_double(p.loss.margin) + "\nnegatives\t" +
                        std::to_string(p.loss.negatives) + "\nbias\t" + detail::format_double(p.model.bias) +
                        "\nrelative_loss\t" + detail::format_double(train::relative_loss(p.state)) + '\n';
  detail::write_file(dir / "summary.tsv", summary);
}

// --- Classifier ---------------------------------------------------------------

/// Row names of a classifier's embedding tables, stored next to its checkpoint.
struct Index {
  Dictionary chemicals;
  Dictionary species;

  static Index from(const std::vector<std::string>& c, const std::vector<std::string>& s) {
    Index i;
    for (const auto& n : c) i.chemicals.intern(n);
    for (const auto& n : s) i.species.intern(n);
    return i;
  }
  static Index load(const fs::path& dir) { return from(read_lines(dir / "chemicals.txt"), read_lines(dir / "species.txt")); }
  void save(const fs::path& dir) const {
    detail::write_file(dir / "chemicals.txt", join_lines(chemicals.names()));
    detail::write_file(dir / "species.txt", join_lines(species.names()));
  }

  clf::Dataset dataset(const std::vector<effects::EffectRecord>& rs) const {
    clf::Dataset d;
    for (const auto& r : rs) {
      auto c = chemicals.find(r.chemical);
      auto s = species.find(r.species);
      if (!c) throw DataError("chemical not known to the model: " + r.chemical);
      if (!s) throw DataError("species not known to the model: " + r.species);
      d.x.push_back({*c, *s, r.concentration});
      d.y.push_back(r.label);
    }
    return d;
  }
};

std::string history_csv(const clf::History& h) {
  std::string out = "epoch,train_loss,validation_loss\n";
  for (std::size_t i = 0; i < h.train_loss.size(); ++i)
    out += std::to_string(i + 1) + ',' + detail::format_double(h.train_loss[i]) + ',' +
           detail::format_double(h.validation_loss[i]) + '\n';
  return out;
}

struct ClfFlags {
  std::string split;
  std::string source{"one_hot"};
  std::string layers;
  std::string chemical_kge, species_kge;
  std::string init;
};

struct SplitData {
  std::vector<effects::EffectRecord> train, validation;
};

SplitData load_split(const fs::path& dir) {
  return {effects::load_effects(dir / "train.csv"), effects::load_effects(dir / "validation.csv")};
}

clf::MlpConfig mlp_config(const RunConfig& c, const ClfFlags& f) {
  clf::MlpConfig m = c.mlp;
  m.layers = f.layers.empty() ? c.settings.front().layers : clf::LayerSpec::parse(f.layers);
  m.source = clf::parse_embedding_source(f.source);
  return m;
}

struct KgeInputs {
  KnowledgeGraph chemical_graph, species_graph;
  kge::EmbeddingTable chemical, species;
};

KgeInputs load_kge_inputs(const RunConfig& c, const ClfFlags& f) {
  if (c.chemical_graph.empty() || c.species_graph.empty())
    throw ConfigError("pre-trained embeddings need data.chemical_graph and data.species_graph in the config");
  if (f.chemical_kge.empty() || f.species_kge.empty())
    throw ConfigError("--chemical-kge and --species-kge checkpoints are required");
  KgeInputs in{load_graph(c.chemical_graph), load_graph(c.species_graph), kge::load_checkpoint(f.chemical_kge),
               kge::load_checkpoint(f.species_kge)};
  if (in.chemical.entities.rows() != in.chemical_graph.num_entities() ||
      in.species.entities.rows() != in.species_graph.num_entities())
    throw DataError("embedding checkpoint does not match its graph's entity count");
  return in;
}

int cmd_train_clf(const Shared& sh, const ClfFlags& f) {
  auto c = config_of(sh);
  auto m = mlp_config(c, f);
  if (m.source == clf::EmbeddingSource::Finetune) throw ConfigError("use the finetune command for fine-tuning");
  auto data = load_split(f.split);
  auto train_records = effects::oversample(data.train, c.seed);
  clf::ClassifierOptions opts = c.classifier;
  opts.seed = c.seed;

  Index index;
  clf::MlpWeights init;
  if (m.source == clf::EmbeddingSource::OneHot) {
    std::set<std::string> cs, ss;
    for (const auto* part : {&data.train, &data.validation})
      for (const auto& r : *part) cs.insert(r.chemical), ss.insert(r.species);
    index = Index::from({cs.begin(), cs.end()}, {ss.begin(), ss.end()});
    init = clf::build_mlp(m, cs.size(), ss.size(), c.seed + 1);
  } else {
    auto kin = load_kge_inputs(c, f);
    index = Index::from(kin.chemical_graph.entities().names(), kin.species_graph.entities().names());
    m.k = static_cast<int>(kin.chemical.entities.cols());
    init = clf::build_mlp(m, 0, 0, c.seed + 1, &kin.chemical.entities, &kin.species.entities);
  }
  auto r = clf::train_classifier(std::move(init), m, index.dataset(train_records), index.dataset(data.validation), opts);
  fs::create_directories(sh.out);
  clf::save_checkpoint(r.weights, m, fs::path(sh.out) / "classifier.ckpt");
  index.save(sh.out);
  detail::write_file(fs::path(sh.out) / "history.csv", history_csv(r.history));
  std::cout << "best epoch " << r.history.best_epoch << '\n';
  return kOk;
}

int cmd_finetune(const Shared& sh, const ClfFlags& f) {
  auto c = config_of(sh);
  if (f.init.empty()) throw ConfigError("--init must point to a pre-trained classifier directory");
  clf::MlpConfig m;
  auto init = clf::load_checkpoint(fs::path(f.init) / "classifier.ckpt", &m);
  if (m.source != clf::EmbeddingSource::Pretrained) throw ConfigError("fine-tuning starts from a pre-trained classifier");
  m.source = clf::EmbeddingSource::Finetune;
  init.embeddings_trainable = true;
  auto kin = load_kge_inputs(c, f);
  if (init.chemical_embedding.rows() != kin.chemical.entities.rows() ||
      init.species_embedding.rows() != kin.species.entities.rows())
    throw DataError("classifier and embedding checkpoints disagree on entity counts");
  // The classifier carries the trained embedding rows; the tables contribute relations.
  kin.chemical.entities = init.chemical_embedding;
  kin.species.entities = init.species_embedding;

  auto component = [](const KnowledgeGraph& g, const KgeSection& s, kge::EmbeddingTable t) {
    kge::KgeConfig model = s.model;
    model.model = t.model;
    model.k = t.k;
    return clf::KgeComponent{&g, model, s.loss, std::move(t)};
  };
  auto index = Index::load(f.init);
  auto data = load_split(f.split);
  clf::ClassifierOptions opts = c.classifier;
  opts.seed = c.seed;
  auto r = clf::fine_tune(std::move(init), m, c.finetune, component(kin.chemical_graph, c.chemical_kge, kin.chemical),
                          component(kin.species_graph, c.species_kge, kin.species),
                          index.dataset(effects::oversample(data.train, c.seed)), index.dataset(data.validation), opts);
  fs::create_directories(sh.out);
  clf::save_checkpoint(r.weights, m, fs::path(sh.out) / "classifier.ckpt");
  kge::save_checkpoint(r.chemical_table, fs::path(sh.out) / "chemical.ckpt");
  kge::save_checkpoint(r.species_table, fs::path(sh.out) / "species.ckpt");
  index.save(sh.out);
  detail::write_file(fs::path(sh.out) / "history.csv", history_csv(r.history));
  std::cout << "best epoch " << r.history.best_epoch << '\n';
  return kOk;
}

int cmd_evaluate(const Shared& sh, const std::string& model_dir, const std::string& test,
                 const std::string& validation, double threshold) {
  clf::MlpConfig m;
  auto w = clf::load_checkpoint(fs::path(model_dir) / "classifier.ckpt", &m);
  auto index = Index::load(model_dir);
  auto test_records = effects::load_effects(test);
  auto td = index.dataset(test_records);
  auto pred = clf::predict(w, m, td.x, threshold);

  double tau;
  if (!validation.empty()) {
    auto vd = index.dataset(effects::load_effects(validation));
    tau = eval::youden_max(clf::predict_proba(w, m, vd.x), vd.y).tau_max;
  } else {
    tau = eval::youden_max(pred.scores, td.y).tau_max;
  }
  auto rates = eval::compute_metrics(eval::confusion(pred.scores, td.y, threshold));
  auto at_tau = eval::compute_metrics(eval::confusion(pred.scores, td.y, tau));
  eval::MetricsReport report{rates.sensitivity, rates.specificity, rates.yi, at_tau.yi, tau};

  fs::create_directories(sh.out);
  std::string preds = "chemical,species,concentration,label,score,predicted\n";
  for (std::size_t i = 0; i < test_records.size(); ++i) {
    const auto& r = test_records[i];
    preds += detail::csv_escape(r.chemical) + ',' + detail::csv_escape(r.species) + ',' +
             detail::format_double(r.concentration) + ',' + std::to_string(r.label) + ',' +
             detail::format_double(pred.scores[i]) + ',' + std::to_string(pred.labels[i]) + '\n';
  }
  detail::write_file(fs::path(sh.out) / "predictions.csv", preds);
  detail::write_file(fs::path(sh.out) / "metrics.csv",
                     eval::metrics_csv_header() +
                         eval::metrics_csv_row(std::string(clf::to_string(m.source)), "-", 0, report));
  std::printf("sensitivity %.4f specificity %.4f yi %.4f yi_max %.4f tau_max %.4f\n", report.sensitivity,
              report.specificity, report.yi, report.yi_max, report.tau_max);
  return kOk;
}

// --- Synthetic data --------------------------------------------------------------

void write_named(const std::vector<NamedTriple>& ts, const fs::path& p) {
  std::string out;
  for (const auto& t : ts) out += t.subject + '\t' + t.predicate + '\t' + t.object + '\n';
  detail::write_file(p, out);
}

void write_vocabulary(const align::Vocabulary& v, const fs::path& p) {
  std::string out;
  for (const auto& [name, labels] : v)
    for (const auto& l : labels) out += name + '\t' + l + '\n';
  detail::write_file(p, out);
}

constexpr const char* kSynthConfig = R"yaml(# Demo configuration for the synthetic structured data set.
seed: 1
repeats: 3
data:
  chemical_graph: chemical_graph.tsv
  species_graph: species_graph.tsv
  effects: effects.csv
split:
  strategy: iv
  train: 0.7
  validation: 0.15
  test: 0.15
kge:
  chemical: {model: TransE, k: 16, bias: 5, loss: L_L2, negatives: 10, epochs: 200, lr: 0.01, batch_size: 64}
  species: {model: TransE, k: 16, bias: 5, loss: L_L2, negatives: 10, epochs: 200, lr: 0.01, batch_size: 64}
classifier:
  settings:
    simple: "()/()/()/(128)"
)yaml";

int cmd_synth(const Shared& sh, const std::string& kind) {
  fs::path dir = sh.out;
  fs::create_directories(dir);
  if (kind == "structured") {
    auto d = synth::structured_effects({}, sh.seed);
    write_triples(d.chemical_graph, dir / "chemical_graph.tsv");
    write_triples(d.species_graph, dir / "species_graph.tsv");
    effects::write_effects(d.records, dir / "effects.csv");
    detail::write_file(dir / "config.yaml", kSynthConfig);
  } else if (kind == "hierarchy") {
    auto h = synth::hierarchy_kg(200, 50, sh.seed);
    write_triples(h.graph, dir / "graph.tsv");
    std::vector<NamedTriple> held;
    for (const auto& t : h.held_out)
      held.push_back({h.graph.entities().name(t.subject), h.graph.relations().name(t.predicate),
                      h.graph.entities().name(t.object)});
    write_named(held, dir / "held_out.tsv");
  } else {
    auto t = synth::typo_taxonomy(50, sh.seed);
    write_vocabulary(t.source, dir / "source.tsv");
    write_vocabulary(t.target, dir / "target.tsv");
    align::write_mappings(t.reference, dir / "reference.tsv");
  }
  return kOk;
}

// --- Experiment ----------------------------------------------------------------

class ProgressLog : public experiment::Observer {
public:
  void on_phase(experiment::Phase p, std::string_view detail) override {
    std::cerr << "[" << experiment::to_string(p) << "] " << detail << '\n';
  }
};

int cmd_run_experiment(const Shared& sh) {
  auto c = config_of(sh);
  ProgressLog log;
  auto report = experiment::run_experiment(c, sh.out, &log);
  std::cout << experiment::format_metrics(report);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-graph-embedding toxicity prediction toolkit"};
  app.require_subcommand(1);
  Shared sh;
  int code = kOk;

  auto* stats = app.add_subcommand("stats", "density and entropy statistics of a triple file");
  std::string graph_path;
  stats->add_option("graph", graph_path, "triple file")->required()->check(CLI::ExistingFile);
  add_shared(stats, sh, false);
  stats->callback([&] { emit(sh, format_stats(compute_stats(load_graph(graph_path)))); });

  auto* crawl = app.add_subcommand("crawl", "triples reachable from seed entities");
  std::vector<std::string> seeds;
  std::string seed_file;
  crawl->add_option("graph", graph_path, "triple file")->required()->check(CLI::ExistingFile);
  crawl->add_option("--from", seeds, "seed entity names");
  crawl->add_option("--from-file", seed_file, "file with one seed entity per line")->check(CLI::ExistingFile);
  add_shared(crawl, sh);
  crawl->callback([&] {
    if (!seed_file.empty())
      for (auto& s : read_lines(seed_file)) seeds.push_back(std::move(s));
    if (seeds.empty()) throw CLI::ValidationError("crawl", "give --from or --from-file");
    write_triples(directed_crawl(load_triples(graph_path), seeds), sh.out);
  });

  auto* sim = app.add_subcommand("simtriples", "similarity triples from chemical fingerprints");
  std::string fp_path;
  double sim_threshold = 0.5;
  sim->add_option("fingerprints", fp_path, "name<TAB>hex fingerprint file")->required()->check(CLI::ExistingFile);
  sim->add_option("--threshold", sim_threshold, "minimum Tanimoto similarity");
  add_shared(sim, sh);
  sim->callback([&] { write_named(emit_similarity_triples(load_fingerprints(fp_path), sim_threshold), sh.out); });

  auto* al = app.add_subcommand("align", "lexical matching of two vocabularies");
  std::string src_path, tgt_path;
  double align_threshold = 0.8;
  bool one_to_one = true;
  al->add_option("source", src_path, "name<TAB>label file")->required()->check(CLI::ExistingFile);
  al->add_option("target", tgt_path, "name<TAB>label file")->required()->check(CLI::ExistingFile);
  al->add_option("--threshold", align_threshold, "minimum normalized Levenshtein similarity");
  al->add_flag("--one-to-one,!--many", one_to_one, "keep only mutually best matches");
  add_shared(al, sh);
  al->callback([&] {
    auto m = align::lexical_match(align::load_vocabulary(src_path), align::load_vocabulary(tgt_path), align_threshold);
    if (one_to_one) m = align::filter_one_to_one(std::move(m));
    align::write_mappings(m, sh.out);
  });

  auto* ae = app.add_subcommand("align-eval", "recall and estimated precision of mappings");
  std::string map_path, ref_path;
  ae->add_option("mappings", map_path, "source<TAB>target[<TAB>confidence] file")->required()->check(CLI::ExistingFile);
  ae->add_option("reference", ref_path, "reference mappings, same format")->required()->check(CLI::ExistingFile);
  add_shared(ae, sh, false);
  ae->callback([&] {
    auto s = align::evaluate_alignment(align::load_mappings(map_path), align::load_mappings(ref_path));
    emit(sh, "mappings\t" + std::to_string(s.num_mappings) + "\nrecall\t" + detail::format_double(s.recall) +
                 "\nest_precision\t" + detail::format_double(s.est_precision) + '\n');
  });

  auto* prep = app.add_subcommand("prep-effects", "unit conversion, filtering, deduplication and log scaling");
  std::string effects_path, units_path, chem_graph, species_graph, chem_map, species_map;
  prep->add_option("effects", effects_path, "raw effects CSV")->required()->check(CLI::ExistingFile);
  prep->add_option("--units", units_path, "extra unit registry CSV")->check(CLI::ExistingFile);
  prep->add_option("--chemical-graph", chem_graph, "keep chemicals present in this graph")->check(CLI::ExistingFile);
  prep->add_option("--species-graph", species_graph, "keep species present in this graph")->check(CLI::ExistingFile);
  prep->add_option("--chemical-mapping", chem_map, "rename chemicals through this mapping")->check(CLI::ExistingFile);
  prep->add_option("--species-mapping", species_map, "rename species through this mapping")->check(CLI::ExistingFile);
  add_shared(prep, sh);
  prep->callback([&] {
    auto units = effects::UnitRegistry::builtin();
    if (!units_path.empty()) units.load(units_path);
    std::optional<std::vector<align::Mapping>> mc, ms;
    if (!chem_map.empty()) mc = align::load_mappings(chem_map);
    if (!species_map.empty()) ms = align::load_mappings(species_map);
    auto raw = experiment::apply_mapping(effects::load_effects(effects_path), mc ? &*mc : nullptr,
                                         ms ? &*ms : nullptr);
    std::optional<std::set<std::string>> cs, ss;
    if (!chem_graph.empty()) {
      auto g = load_graph(chem_graph);
      cs.emplace(g.entities().names().begin(), g.entities().names().end());
    }
    if (!species_graph.empty()) {
      auto g = load_graph(species_graph);
      ss.emplace(g.entities().names().begin(), g.entities().names().end());
    }
    if (cs && !ss) ss.emplace();
    std::vector<effects::EffectRecord> out;
    if (cs || ss) {
      // A missing side keeps every name it sees.
      if (!cs) cs.emplace();
      if (cs->empty())
        for (const auto& r : raw) cs->insert(r.chemical);
      if (ss->empty())
        for (const auto& r : raw) ss->insert(r.species);
      out = effects::prepare(raw, units, &*cs, &*ss);
    } else {
      out = effects::prepare(raw, units);
    }
    effects::write_effects(out, sh.out);
  });

  auto* split = app.add_subcommand("split", "train/validation/test split with one of strategies i-iv");
  std::string split_input, strategy = "i";
  effects::Proportions props;
  split->add_option("effects", split_input, "prepared effects CSV")->required()->check(CLI::ExistingFile);
  split->add_option("--strategy", strategy, "i, ii, iii or iv");
  split->add_option("--train", props.train, "training share (0.7)");
  split->add_option("--validation", props.validation, "validation share (0.15)");
  split->add_option("--test", props.test, "test share (0.15)");
  add_shared(split, sh);
  split->callback([&] {
    auto s = effects::split_strategy(effects::load_effects(split_input), effects::parse_strategy(strategy), props,
                                     sh.seed);
    effects::write_split(s, sh.out);
  });

  KgeFlags kf;
  auto* tk = app.add_subcommand("train-kge", "train a knowledge graph embedding");
  add_kge_flags(tk, kf);
  add_shared(tk, sh);
  auto run_kge = [&](bool hpo) {
    auto c = config_of(sh);
    auto [section, input] = kge_section(c, kf);
    section.hpo = hpo;
    if (hpo) section.hpo_spec.validate();
    auto g = load_graph(input);
    auto p = experiment::pretrain(g, section, c.seed);
    write_kge_outputs(sh.out, p, g);
    std::printf("relative loss %.6f\n", train::relative_loss(p.state));
  };
  tk->callback([&] { run_kge(false); });

  auto* hk = app.add_subcommand("hpo-kge", "random search over KGE hyperparameters, then train the best");
  add_kge_flags(hk, kf);
  hk->add_option("--trials", kf.trials, "number of random-search trials");
  add_shared(hk, sh);
  hk->callback([&] { run_kge(true); });

  ClfFlags cf;
  auto* tc = app.add_subcommand("train-clf", "train a one-hot or pre-trained classifier on a split");
  tc->add_option("--split", cf.split, "directory with train.csv and validation.csv")->required()->check(CLI::ExistingDirectory);
  tc->add_option("--source", cf.source, "one_hot or pretrained");
  tc->add_option("--layers", cf.layers, "layer spec, e.g. ()/()/()/(128)");
  tc->add_option("--chemical-kge", cf.chemical_kge, "chemical embedding checkpoint")->check(CLI::ExistingFile);
  tc->add_option("--species-kge", cf.species_kge, "species embedding checkpoint")->check(CLI::ExistingFile);
  add_shared(tc, sh);
  tc->callback([&] { code = cmd_train_clf(sh, cf); });

  auto* ft = app.add_subcommand("finetune", "jointly fine-tune a pre-trained classifier and its embeddings");
  ft->add_option("--split", cf.split, "directory with train.csv and validation.csv")->required()->check(CLI::ExistingDirectory);
  ft->add_option("--init", cf.init, "directory of a pre-trained classifier")->required()->check(CLI::ExistingDirectory);
  ft->add_option("--chemical-kge", cf.chemical_kge, "chemical embedding checkpoint")->check(CLI::ExistingFile);
  ft->add_option("--species-kge", cf.species_kge, "species embedding checkpoint")->check(CLI::ExistingFile);
  add_shared(ft, sh);
  ft->callback([&] { code = cmd_finetune(sh, cf); });

  auto* ev = app.add_subcommand("evaluate", "score a trained classifier on a test file");
  std::string model_dir, test_path, val_path;
  double threshold = 0.5;
  ev->add_option("--model", model_dir, "classifier directory")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--test", test_path, "test CSV")->required()->check(CLI::ExistingFile);
  ev->add_option("--validation", val_path, "choose tau_max on this file instead of the test file")
      ->check(CLI::ExistingFile);
  ev->add_option("--threshold", threshold, "decision threshold");
  add_shared(ev, sh);
  ev->callback([&] { code = cmd_evaluate(sh, model_dir, test_path, val_path, threshold); });

  auto* rx = app.add_subcommand("run-experiment", "full pipeline with repeats and aggregated metrics");
  add_shared(rx, sh);
  rx->callback([&] {
    if (sh.config.empty()) throw CLI::RequiredError("--config");
    code = cmd_run_experiment(sh);
  });

  auto* sy = app.add_subcommand("synth", "write a synthetic data set");
  std::string kind = "structured";
  sy->add_option("--kind", kind, "structured, hierarchy or taxonomy")
      ->check(CLI::IsMember({"structured", "hierarchy", "taxonomy"}));
  add_shared(sy, sh);
  sy->callback([&] { code = cmd_synth(sh, kind); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kData;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kData;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return code;
}
