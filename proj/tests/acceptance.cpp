// Acceptance checks. One PASS/FAIL line per criterion; exit status is nonzero
// when a criterion that depends on this code base fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "support.hpp"
#include "toxkge/align.hpp"
#include "toxkge/classifier.hpp"
#include "toxkge/detail/text.hpp"
#include "toxkge/effects.hpp"
#include "toxkge/eval.hpp"
#include "toxkge/experiment.hpp"
#include "toxkge/kg_store.hpp"
#include "toxkge/kge.hpp"
#include "toxkge/synthetic.hpp"
#include "toxkge/train.hpp"

using namespace toxkge;
namespace fs = std::filesystem;
using V = std::vector<double>;

namespace {

struct Outcome {
  bool pass{false};
  std::string detail;
  /// The failure comes from the reference data, not from this code base.
  bool external{false};
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(V v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

// ---------------------------------------------------------------------------

Outcome gradients() {
  using train::LossKind;
  std::mt19937_64 rng(11);
  double worst = 0;
  std::size_t skipped = 0, checked = 0;
  for (kge::ModelKind m : kge::kAllModels)
    for (LossKind lk : {LossKind::PointwiseHinge, LossKind::PointwiseLogistic, LossKind::PairwiseHinge,
                        LossKind::PairwiseLogistic}) {
      int done = 0;
      while (done < 100) {
        kge::KgeConfig c;
        c.model = m;
        c.k = 1 + static_cast<int>(rng() % 8);
        c.norm_order = 1 + static_cast<int>(rng() % 2);
        c.conv_filters = 2;
        c.bias = 1.5;
        train::LossConfig l{lk, 1.0, 2, train::SamplingMode::sLCWA};
        auto t = testing::random_table(c, 5, 2, rng);
        std::vector<Triple> pos{{0, 0, 1}, {2, 1, 3}}, neg{{0, 0, 2}, {4, 0, 1}, {2, 1, 4}, {1, 1, 3}};
        auto r = testing::check_batch_gradient(c, l, t, pos, neg);
        if (r.skipped) {
          ++skipped;
          continue;
        }
        worst = std::max(worst, r.max_relative_error);
        ++checked;
        ++done;
      }
    }
  return {worst <= 1e-4, fmt("%zu draws, max relative error %.2e (bound 1e-4), %zu redrawn near kinks", checked,
                             worst, skipped)};
}

Outcome identities() {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1, 1), angle(-std::numbers::pi, std::numbers::pi);
  double complex_gap = 0, hole_gap = 0, rotate_gap = 0, protate_gap = 0;
  bool symmetric = true;
  for (int i = 0; i < 1000; ++i) {
    const int k = 1 + i % 8;
    V s(2 * k, 0.0), p(2 * k, 0.0), o(2 * k, 0.0), sr(k), pr(k), orr(k);
    for (int j = 0; j < k; ++j) sr[j] = s[2 * j] = u(rng), pr[j] = p[2 * j] = u(rng), orr[j] = o[2 * j] = u(rng);
    complex_gap = std::max(complex_gap, std::abs(kge::score_complex(s, p, o) - kge::score_distmult(sr, pr, orr)));
    symmetric = symmetric && kge::score_distmult(sr, pr, orr) == kge::score_distmult(orr, pr, sr);

    V zero(k, 0.0), diff(2 * k);
    for (int j = 0; j < 2 * k; ++j) s[j] = u(rng), o[j] = u(rng), diff[j] = s[j] - o[j];
    const int n = 1 + i % 2;
    rotate_gap = std::max(rotate_gap, std::abs(kge::score_rotate(s, zero, o, n) - testing::lp_norm(diff, n)));

    V ts(k), tp(k), to(k);
    for (int j = 0; j < k; ++j) ts[j] = angle(rng), tp[j] = angle(rng), to[j] = ts[j] + tp[j];
    protate_gap = std::max(protate_gap, std::abs(kge::score_protate(ts, tp, to, n, 1.0)));
  }
  for (int k = 1; k <= 64; ++k)
    for (int rep = 0; rep < 10; ++rep) {
      V s(k), p(k), o(k);
      for (int j = 0; j < k; ++j) s[j] = u(rng), p[j] = u(rng), o[j] = u(rng);
      auto c = testing::direct_correlation(s, o);
      double want = 0;
      for (int j = 0; j < k; ++j) want += p[j] * c[j];
      hole_gap = std::max(hole_gap, std::abs(kge::score_hole(s, p, o) - want));
    }
  const bool ok = complex_gap <= 1e-12 && symmetric && hole_gap <= 1e-8 && rotate_gap <= 1e-12 && protate_gap <= 1e-12;
  return {ok, fmt("ComplEx-DistMult %.1e, DistMult symmetry %s, HolE FFT-direct %.1e, RotatE %.1e, pRotatE %.1e", complex_gap,
                  symmetric ? "exact" : "broken", hole_gap, rotate_gap, protate_gap)};
}

Outcome training_sanity() {
  auto h = synth::hierarchy_kg(200, 50, 7);
  const double random_rank = (static_cast<double>(h.graph.num_entities()) + 1) / 2;
  bool ok = true;
  std::string detail;
  for (kge::ModelKind m : kge::kAllModels) {
    kge::KgeConfig c;
    c.model = m;
    c.k = 16;
    c.bias = 5;
    train::LossConfig l{train::LossKind::PairwiseLogistic, 1.0, 10, train::SamplingMode::sLCWA};
    auto r = train::train_kge(h.graph, c, l, {200, 0.01, 64, 7});
    const double rl = train::relative_loss(r.state);
    auto ranks = train::object_ranks(c, r.table, h.held_out);
    double mr = 0;
    for (double x : ranks) mr += x;
    mr /= static_cast<double>(ranks.size());
    const bool good = rl < 0.5 && mr * 3 <= random_rank;
    ok = ok && good;
    detail += fmt("%s%s RL %.3f MR %.1f", detail.empty() ? "" : "; ", std::string(kge::to_string(m)).c_str(), rl, mr);
  }
  return {ok, detail + fmt(" (random %.1f)", random_rank)};
}

struct ReportedRow {
  int strategy;
  const char* model;
  double sensitivity, specificity, yi;
};

constexpr ReportedRow kReported[] = {
#include "reported_results.inc"
};

Outcome metric_audit() {
  std::size_t match = 0, abs_match = 0;
  std::string off;
  for (const auto& r : kReported) {
    const double recomputed = r.sensitivity + r.specificity - 1;
    if (std::abs(recomputed - r.yi) <= 0.002)
      ++match;
    else
      off += fmt("%s[%d] %s %.3f vs %.3f", off.empty() ? "" : ", ", r.strategy, r.model, recomputed, r.yi);
    if (std::abs(std::abs(recomputed) - r.yi) <= 0.002) ++abs_match;
  }
  const std::size_t n = std::size(kReported);
  Outcome o;
  o.pass = match == n;
  o.detail = fmt("%zu/%zu rows within 0.002", match, n);
  if (!o.pass) {
    o.external = true;
    o.detail += "; mismatches " + off + fmt("; every mismatch has sens+spec-1 < 0 and the reported value is its magnitude "
                                            "(%zu/%zu rows match |sens+spec-1|)",
                                            abs_match, n);
  }
  return o;
}

Outcome split_invariants() {
  using effects::Strategy;
  std::mt19937_64 rng(15);
  auto rec = [](std::string c, std::string s, double x, int y) {
    return effects::EffectRecord{std::move(c), std::move(s), x, std::string(effects::kLogUnit), "LC50", "MOR", y};
  };
  auto keyset = [](const std::vector<effects::EffectRecord>& v, int which) {
    std::set<std::string> out;
    for (const auto& r : v) out.insert(which == 0 ? r.chemical : which == 1 ? r.species : r.chemical + "|" + r.species);
    return out;
  };
  auto disjoint = [](const std::set<std::string>& a, const std::set<std::string>& b) {
    return std::none_of(a.begin(), a.end(), [&](const auto& x) { return b.contains(x); });
  };
  std::size_t splits = 0, violations = 0, balanced = 0, oversampled = 0, infeasible = 0;
  for (int d = 0; d < 1000; ++d) {
    std::uniform_int_distribution<int> nc(3, 12), ns(3, 12), size(30, 120);
    const int c_count = nc(rng), s_count = ns(rng), n = size(rng);
    std::uniform_int_distribution<int> c(0, c_count - 1), s(0, s_count - 1);
    std::bernoulli_distribution lethal(0.6);
    std::vector<effects::EffectRecord> data;
    for (int i = 0; i < n; ++i)
      data.push_back(rec("c" + std::to_string(c(rng)), "s" + std::to_string(s(rng)), i, lethal(rng) ? 1 : 0));
    for (Strategy st : {Strategy::Random, Strategy::Chemical, Strategy::Species, Strategy::Both}) {
      effects::SplitResult r;
      try {
        r = effects::split_strategy(data, st, {}, rng());
      } catch (const DataError&) {
        ++infeasible;
        continue;
      }
      ++splits;
      std::vector<int> keys{2};
      if (st == Strategy::Chemical || st == Strategy::Both) keys.push_back(0);
      if (st == Strategy::Species || st == Strategy::Both) keys.push_back(1);
      bool ok = r.train.size() + r.validation.size() + r.test.size() + r.discarded == data.size();
      for (int k : keys)
        ok = ok && disjoint(keyset(r.train, k), keyset(r.validation, k)) &&
             disjoint(keyset(r.train, k), keyset(r.test, k)) && disjoint(keyset(r.validation, k), keyset(r.test, k));
      if (!ok) ++violations;

      const auto pos = std::count_if(r.train.begin(), r.train.end(), [](const auto& x) { return x.label == 1; });
      if (pos == 0 || pos == static_cast<long>(r.train.size())) continue;  // one class only: nothing to balance
      auto o = effects::oversample(r.train, rng());
      const auto opos = std::count_if(o.begin(), o.end(), [](const auto& x) { return x.label == 1; });
      ++oversampled;
      if (std::abs(2 * opos - static_cast<long>(o.size())) <= 1) ++balanced;
    }
  }
  return {violations == 0 && balanced == oversampled && splits > 3000,
          fmt("%zu splits, %zu disjointness violations, %zu/%zu oversampled sets balanced, %zu too small to split",
              splits, violations, balanced, oversampled, infeasible)};
}

Outcome worked_example() {
  auto raw = effects::parse_effects(
      "chemical,species,concentration,unit,endpoint,effect\n134623,1,110000,µg/L,LC50,MOR\n");
  auto out = effects::prepare(raw, effects::UnitRegistry::builtin());
  if (out.size() != 1) return {false, fmt("%zu records after preparation", out.size())};
  const auto& r = out[0];
  const bool ok = r.chemical == "134623" && r.species == "1" && r.label == 1 &&
                  std::round(r.concentration * 1e4) / 1e4 == 2.0414;
  return {ok, fmt("(c, s, kappa, y) = (%s, %s, %.4f, %d)", r.chemical.c_str(), r.species.c_str(), r.concentration,
                  r.label)};
}

// --- synthetic end to end --------------------------------------------------

struct SeedResult {
  double iv_onehot{0}, iv_pt{0}, iv_ft{0}, i_pt{0};
  V pt_val, ft_val;  ///< final validation YI, both strategies
};

KgeSection synthetic_kge() {
  KgeSection sec;
  sec.model.model = kge::ModelKind::TransE;
  sec.model.k = 16;
  sec.model.bias = 5;
  sec.loss.kind = train::LossKind::PairwiseLogistic;
  sec.loss.negatives = 10;
  sec.train = {200, 0.01, 64, 0};
  return sec;
}

std::vector<SeedResult>& synthetic_runs() {
  static std::vector<SeedResult> runs = [] {
    std::vector<SeedResult> out;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      auto d = synth::structured_effects({}, seed);
      auto sec = synthetic_kge();
      auto pc = experiment::pretrain(d.chemical_graph, sec, seed * 10 + 1);
      auto ps = experiment::pretrain(d.species_graph, sec, seed * 10 + 2);
      experiment::Inputs in{&d.chemical_graph, &d.species_graph, &pc, &ps};
      experiment::RunSettings rs;
      rs.settings = {{"simple", clf::LayerSpec::parse("()/()/()/(128)")}};
      rs.sources = {clf::EmbeddingSource::OneHot, clf::EmbeddingSource::Pretrained, clf::EmbeddingSource::Finetune};
      SeedResult sr;
      for (auto st : {effects::Strategy::Random, effects::Strategy::Both}) {
        auto split = effects::split_strategy(d.records, st, {}, seed);
        for (const auto& v : experiment::run_repeat(in, split, rs, seed)) {
          const bool iv = st == effects::Strategy::Both;
          if (v.source == clf::EmbeddingSource::OneHot && iv) sr.iv_onehot = v.test.yi;
          if (v.source == clf::EmbeddingSource::Pretrained) {
            (iv ? sr.iv_pt : sr.i_pt) = v.test.yi;
            sr.pt_val.push_back(v.validation.yi);
          }
          if (v.source == clf::EmbeddingSource::Finetune) {
            if (iv) sr.iv_ft = v.test.yi;
            sr.ft_val.push_back(v.validation.yi);
          }
        }
      }
      out.push_back(sr);
    }
    return out;
  }();
  return runs;
}

Outcome end_to_end() {
  V i_pt, iv_oh, iv_pt, iv_ft;
  for (const auto& r : synthetic_runs()) {
    i_pt.push_back(r.i_pt);
    iv_oh.push_back(r.iv_onehot);
    iv_pt.push_back(r.iv_pt);
    iv_ft.push_back(r.iv_ft);
  }
  const double a = median(i_pt), b = median(iv_oh), c = median(iv_pt), d = median(iv_ft);
  return {a >= 0.8 && b <= 0.2 && c >= 0.4 && d >= 0.4,
          fmt("median test YI over 10 seeds: (i) PT %.3f; (iv) one-hot %.3f, PT %.3f, FT %.3f", a, b, c, d)};
}

Outcome finetune_contract() {
  std::string detail;
  bool ok = true;
  for (int strategy = 0; strategy < 2; ++strategy) {
    V pt, ft;
    for (const auto& r : synthetic_runs()) pt.push_back(r.pt_val[strategy]), ft.push_back(r.ft_val[strategy]);
    const double mp = median(pt), mf = median(ft);
    ok = ok && mf >= mp - 0.02;
    detail += fmt("(%s) FT %.3f vs PT %.3f; ", strategy == 0 ? "i" : "iv", mf, mp);
  }

  // zero graph weights: the classifier loss follows plain training
  auto d = synth::structured_effects({}, 3);
  auto sec = synthetic_kge();
  sec.train.epochs = 20;
  auto pc = experiment::pretrain(d.chemical_graph, sec, 31);
  auto ps = experiment::pretrain(d.species_graph, sec, 32);
  auto split = effects::split_strategy(d.records, effects::Strategy::Random, {}, 3);
  auto encode = [&](const std::vector<effects::EffectRecord>& rs) {
    clf::Dataset out;
    for (const auto& r : rs) {
      out.x.push_back({d.chemical_graph.entities().at(r.chemical), d.species_graph.entities().at(r.species),
                       r.concentration});
      out.y.push_back(r.label);
    }
    return out;
  };
  auto train_set = encode(effects::oversample(split.train, 3)), val_set = encode(split.validation);
  clf::MlpConfig cfg;
  cfg.layers = clf::LayerSpec::parse("()/()/()/(128)");
  cfg.source = clf::EmbeddingSource::Finetune;
  cfg.k = 16;
  auto init = clf::build_mlp(cfg, 0, 0, 5, &pc.table.entities, &ps.table.entities);
  clf::ClassifierOptions opts;
  opts.epochs = 30;
  opts.seed = 9;
  clf::FtConfig zero{0.0, 0.0, 1.0, 0.01};
  auto ft = clf::fine_tune(init, cfg, zero, {&d.chemical_graph, pc.model, pc.loss, pc.table},
                           {&d.species_graph, ps.model, ps.loss, ps.table}, train_set, val_set, opts);
  clf::ClassifierOptions plain = opts;
  plain.lr *= zero.lr_scale;
  auto ref = clf::train_classifier(init, cfg, train_set, val_set, plain);
  double gap = ft.history.train_loss.size() == ref.history.train_loss.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; std::isfinite(gap) && i < ft.history.train_loss.size(); ++i)
    gap = std::max({gap, std::abs(ft.history.train_loss[i] - ref.history.train_loss[i]),
                    std::abs(ft.history.validation_loss[i] - ref.history.validation_loss[i])});
  ok = ok && gap <= 1e-10;
  return {ok, detail + fmt("zero graph weights: %zu epochs, max loss gap %.1e", ft.history.train_loss.size(), gap)};
}

Outcome alignment() {
  auto t = synth::typo_taxonomy(50, 21);
  auto m = align::filter_one_to_one(align::lexical_match(t.source, t.target, 0.8));
  const double recall = align::evaluate_alignment(m, t.reference).recall;
  auto worked = align::evaluate_alignment({{"a", "x", 1.0}, {"b", "y", 1.0}}, {{"a", "x", 1.0}});
  const bool ok = recall >= 0.9 && worked.est_precision == 1.0 && worked.recall == 1.0 && worked.num_mappings == 2;
  return {ok, fmt("typo taxonomy recall %.3f; worked example P~ %.3f R %.3f", recall, worked.est_precision,
                  worked.recall)};
}

Outcome statistics() {
  auto s = compute_stats(parse_triples("a\tp\tb\nb\tp\tc\nb\tq\td\n"));
  auto uniform = compute_stats(parse_triples("a\tp\tb\nc\tq\td\n"));
  std::mt19937_64 rng(22);
  std::normal_distribution<double> g(0, 1);
  Matrix iso(100000, 20);
  for (double& x : iso.values()) x = g(rng);
  const double ev = eval::explained_variance(iso);
  const bool ok = std::abs(s.rd - 1.5) <= 1e-12 && std::abs(s.ed - 1.5) <= 1e-12 && std::abs(s.ad - 0.25) <= 1e-12 &&
                  std::abs(uniform.re - std::log(2.0)) <= 1e-12 && std::abs(ev - 0.5) <= 0.02;
  return {ok, fmt("RD %.12g ED %.12g AD %.12g (3-triple graph); RE %.12g (two equally used relations); EV %.4f", s.rd,
                  s.ed, s.ad, uniform.re, ev)};
}

// --- determinism through the command line ------------------------------------

int cli(const std::string& args) {
  const std::string cmd = std::string(TOXKGE_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Every regular file under `dir`, keyed by relative path.
std::map<std::string, std::size_t> hashes(const fs::path& dir) {
  std::map<std::string, std::size_t> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file())
      out[fs::relative(e.path(), dir).string()] = std::hash<std::string>{}(detail::read_file(e.path()));
  return out;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "toxkge_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  const auto syn = root / "syn";
  if (cli("synth --kind structured --seed 4 --out " + syn.string()) != 0) return {false, "synth failed"};
  detail::write_file(syn / "small.yaml",
                     "seed: 2\nrepeats: 1\ndata: {chemical_graph: chemical_graph.tsv, species_graph: species_graph.tsv, "
                     "effects: effects.csv}\nsplit: {strategy: iv}\n"
                     "kge:\n  chemical: {model: TransE, k: 8, bias: 5, epochs: 10, lr: 0.01, batch_size: 64}\n"
                     "  species: {model: DistMult, k: 8, epochs: 10, lr: 0.01, batch_size: 64}\n"
                     "classifier: {epochs: 10, lr: 0.01, batch_size: 64, settings: {simple: \"()/()/()/(16)\"}}\n");
  const std::string cfg = " --config " + (syn / "small.yaml").string();

  // each command runs twice, into run_a and run_b
  auto commands = [&](const fs::path& out) {
    const std::string o = out.string();
    const std::string kges = " --chemical-kge " + o + "/kge_c/model.ckpt --species-kge " + o + "/kge_s/model.ckpt";
    return std::vector<std::pair<std::string, std::string>>{
        {"synth", "synth --kind structured --seed 4 --out " + o + "/synth"},
        {"split", "split " + (syn / "effects.csv").string() + " --strategy iv --seed 3 --out " + o + "/split"},
        {"train-kge", "train-kge" + cfg + " --graph chemical --seed 3 --out " + o + "/kge_c"},
        {"train-kge", "train-kge" + cfg + " --graph species --seed 3 --out " + o + "/kge_s"},
        {"hpo-kge", "hpo-kge --input " + (syn / "species_graph.tsv").string() +
                        " --model HolE --trials 3 --epochs 3 --seed 3 --out " + o + "/hpo"},
        {"train-clf", "train-clf" + cfg + " --split " + o + "/split --source pretrained" + kges + " --seed 3 --out " + o +
                          "/pt"},
        {"finetune", "finetune" + cfg + " --split " + o + "/split --init " + o + "/pt" + kges + " --seed 3 --out " + o +
                         "/ft"},
        {"evaluate", "evaluate --model " + o + "/ft --test " + o + "/split/test.csv --validation " + o +
                         "/split/validation.csv --out " + o + "/eval"},
        {"run-experiment", "run-experiment" + cfg + " --out " + o + "/exp"},
    };
  };
  std::set<std::string> names;
  for (const char* run : {"run_a", "run_b"})
    for (const auto& [name, args] : commands(root / run)) {
      names.insert(name);
      if (const int rc = cli(args); rc != 0) return {false, fmt("%s exited with %d", name.c_str(), rc)};
    }
  auto a = hashes(root / "run_a"), b = hashes(root / "run_b");
  std::size_t differ = 0;
  std::string which;
  for (const auto& [file, h] : a)
    if (!b.contains(file) || b[file] != h) ++differ, which += " " + file;
  const bool ok = differ == 0 && a.size() == b.size();
  fs::remove_all(root);
  return {ok, fmt("%zu commands, %zu output files hashed twice, %zu differ%s", names.size(), a.size(), differ,
                  which.c_str())};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
    double limit_seconds{0};  ///< 0 = no runtime bound
  };
  const std::vector<Criterion> all{
      {1, "gradient suite", gradients, 60},
      {2, "model identities", identities},
      {3, "training sanity", training_sanity, 300},
      {4, "metric arithmetic audit", metric_audit},
      {5, "split invariants", split_invariants},
      {6, "data pipeline", worked_example},
      {7, "end-to-end ordering", end_to_end, 600},
      {8, "fine-tuning contract", finetune_contract},
      {9, "alignment", alignment},
      {10, "statistics", statistics},
      {11, "determinism", determinism},
  };
  int failures = 0;
  for (const auto& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_seconds > 0 && secs > c.limit_seconds) {
      o.pass = false;
      o.external = false;
      o.detail += fmt("; over the %.0fs budget", c.limit_seconds);
    }
    std::printf("%s  %2d %-24s %s [%.1fs]%s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs,
                !o.pass && o.external ? " (reference data inconsistency; not counted in exit status)" : "");
    std::fflush(stdout);
    if (!o.pass && !o.external) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
