#include "toxkge/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "toxkge/detail/text.hpp"
#include "toxkge/error.hpp"

namespace toxkge::train {

namespace {

// ln(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

void check_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw DataError(std::string("size mismatch: ") + what);
}

}  // namespace

std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::PointwiseHinge: return "L_H1";
    case LossKind::PointwiseLogistic: return "L_L1";
    case LossKind::PairwiseHinge: return "L_H2";
    case LossKind::PairwiseLogistic: return "L_L2";
  }
  return "L_L2";
}

LossKind parse_loss_kind(std::string_view name) {
  auto n = detail::lower(name);
  if (n == "l_h1" || n == "pointwise_hinge") return LossKind::PointwiseHinge;
  if (n == "l_l1" || n == "pointwise_logistic") return LossKind::PointwiseLogistic;
  if (n == "l_h2" || n == "pairwise_hinge") return LossKind::PairwiseHinge;
  if (n == "l_l2" || n == "pairwise_logistic") return LossKind::PairwiseLogistic;
  throw ConfigError("unknown loss: " + std::string(name));
}

std::string_view to_string(SamplingMode m) { return m == SamplingMode::LCWA ? "LCWA" : "sLCWA"; }

SamplingMode parse_sampling_mode(std::string_view name) {
  auto n = detail::lower(name);
  if (n == "lcwa") return SamplingMode::LCWA;
  if (n == "slcwa") return SamplingMode::sLCWA;
  throw ConfigError("unknown sampling mode: " + std::string(name));
}

void LossConfig::validate() const {
  if (!(margin >= 0)) throw ConfigError("margin must be >= 0");
  if (negatives < 1) throw ConfigError("negatives per positive must be >= 1");
}

double loss_pointwise_hinge(std::span<const double> scores, std::span<const double> labels, double margin,
                            std::span<double> grad) {
  check_same_size(scores.size(), labels.size(), "scores and labels");
  double total = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    double r = margin - labels[i] * scores[i];
    total += std::max(0.0, r);
    if (!grad.empty()) grad[i] = r > 0 ? -labels[i] : 0.0;
  }
  return total;
}

double loss_pointwise_logistic(std::span<const double> scores, std::span<const double> labels,
                               std::span<double> grad) {
  check_same_size(scores.size(), labels.size(), "scores and labels");
  double total = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    double x = -labels[i] * scores[i];
    total += softplus(x);
    if (!grad.empty()) grad[i] = -labels[i] * sigmoid(x);
  }
  return total;
}

double loss_pairwise_hinge(std::span<const double> pos, std::span<const double> neg, double margin,
                           std::span<double> grad_pos, std::span<double> grad_neg) {
  if (!grad_pos.empty()) std::fill(grad_pos.begin(), grad_pos.end(), 0.0);
  if (!grad_neg.empty()) std::fill(grad_neg.begin(), grad_neg.end(), 0.0);
  double total = 0;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    for (std::size_t j = 0; j < neg.size(); ++j) {
      double r = margin + neg[j] - pos[i];
      if (r <= 0) continue;
      total += r;
      if (!grad_pos.empty()) grad_pos[i] -= 1.0;
      if (!grad_neg.empty()) grad_neg[j] += 1.0;
    }
  }
  return total;
}

double loss_pairwise_logistic(std::span<const double> pos, std::span<const double> neg,
                              std::span<double> grad_pos, std::span<double> grad_neg) {
  if (!grad_pos.empty()) std::fill(grad_pos.begin(), grad_pos.end(), 0.0);
  if (!grad_neg.empty()) std::fill(grad_neg.begin(), grad_neg.end(), 0.0);
  double total = 0;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    for (std::size_t j = 0; j < neg.size(); ++j) {
      double x = neg[j] - pos[i];
      total += softplus(x);
      double s = sigmoid(x);
      if (!grad_pos.empty()) grad_pos[i] -= s;
      if (!grad_neg.empty()) grad_neg[j] += s;
    }
  }
  return total;
}

std::vector<Triple> sample_negatives(const KnowledgeGraph& g, std::span<const Triple> positives, int eta,
                                     SamplingMode mode, std::mt19937_64& rng) {
  if (eta < 1) throw ConfigError("negatives per positive must be >= 1");
  const auto n = static_cast<EntityId>(g.num_entities());
  if (n == 0 && !positives.empty()) throw DataError("graph has no entities to sample from");
  std::uniform_int_distribution<EntityId> pick(0, std::max(0, n - 1));
  std::bernoulli_distribution coin(0.5);

  std::vector<Triple> out;
  out.reserve(positives.size() * static_cast<std::size_t>(eta));
  for (const auto& pos : positives) {
    if (pos.literal || !g.contains(pos)) throw DataError("positive triple is not part of the graph");
    for (int j = 0; j < eta; ++j) {
      bool corrupt_subject = mode == SamplingMode::sLCWA && coin(rng);
      std::optional<Triple> found;
      for (EntityId attempt = 0; attempt < n && !found; ++attempt) {
        Triple c = pos;
        (corrupt_subject ? c.subject : c.object) = pick(rng);
        if (!g.contains(c)) found = c;
      }
      if (!found) {
        std::vector<Triple> free;
        auto collect = [&](bool subject_side) {
          for (EntityId e = 0; e < n; ++e) {
            Triple c = pos;
            (subject_side ? c.subject : c.object) = e;
            if (!g.contains(c)) free.push_back(c);
          }
        };
        collect(corrupt_subject);
        if (free.empty() && mode == SamplingMode::sLCWA) collect(!corrupt_subject);
        if (free.empty()) throw DataError("no negative triple exists for a positive; entity pool exhausted");
        found = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
      }
      out.push_back(*found);
    }
  }
  return out;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& s, const AdamParams& p) {
  check_same_size(params.size(), grads.size(), "parameters and gradients");
  if (s.m.empty() && s.v.empty()) {
    s.m.assign(params.size(), 0.0);
    s.v.assign(params.size(), 0.0);
  }
  check_same_size(params.size(), s.m.size(), "parameters and Adam moments");
  for (double g : grads)
    if (!std::isfinite(g)) throw NumericalError("non-finite gradient");
  ++s.t;
  const double c1 = 1.0 - std::pow(p.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(p.beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = p.beta1 * s.m[i] + (1.0 - p.beta1) * grads[i];
    s.v[i] = p.beta2 * s.v[i] + (1.0 - p.beta2) * grads[i] * grads[i];
    params[i] -= p.lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + p.eps);
  }
}

double kge_batch_loss(const kge::KgeConfig& model, const LossConfig& loss, const KgeParams& params,
                      std::span<const Triple> positives, std::span<const Triple> negatives, double weight,
                      const KgeGrads* grads) {
  const std::size_t eta = static_cast<std::size_t>(loss.negatives);
  if (negatives.size() != positives.size() * eta) throw DataError("expected eta negatives per positive");

  auto view_of = [&](const Triple& t) {
    return kge::TripleView{params.entities->row(static_cast<std::size_t>(t.subject)),
                           params.relations->row(static_cast<std::size_t>(t.predicate)),
                           params.entities->row(static_cast<std::size_t>(t.object)), params.conv};
  };
  auto plaus = [&](const Triple& t) { return kge::plausibility(model, kge::score(model, view_of(t))); };

  std::vector<double> pos(positives.size()), neg(negatives.size());
  for (std::size_t i = 0; i < positives.size(); ++i) pos[i] = plaus(positives[i]);
  for (std::size_t i = 0; i < negatives.size(); ++i) neg[i] = plaus(negatives[i]);
  std::vector<double> gpos(pos.size()), gneg(neg.size());

  double total = 0;
  switch (loss.kind) {
    case LossKind::PointwiseHinge:
    case LossKind::PointwiseLogistic: {
      std::vector<double> s(pos), y(pos.size(), 1.0), g(pos.size() + neg.size());
      s.insert(s.end(), neg.begin(), neg.end());
      y.resize(s.size(), -1.0);
      total = loss.kind == LossKind::PointwiseHinge ? loss_pointwise_hinge(s, y, loss.margin, g)
                                                    : loss_pointwise_logistic(s, y, g);
      std::copy(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(pos.size()), gpos.begin());
      std::copy(g.begin() + static_cast<std::ptrdiff_t>(pos.size()), g.end(), gneg.begin());
      break;
    }
    case LossKind::PairwiseHinge:
    case LossKind::PairwiseLogistic:
      for (std::size_t i = 0; i < pos.size(); ++i) {
        std::span<const double> p1(&pos[i], 1), n1(neg.data() + i * eta, eta);
        std::span<double> gp1(&gpos[i], 1), gn1(gneg.data() + i * eta, eta);
        total += loss.kind == LossKind::PairwiseHinge ? loss_pairwise_hinge(p1, n1, loss.margin, gp1, gn1)
                                                      : loss_pairwise_logistic(p1, n1, gp1, gn1);
      }
      break;
  }

  if (grads) {
    const double slope = kge::plausibility_slope(model) * weight;
    auto push = [&](const Triple& t, double dl) {
      if (dl == 0.0) return;
      kge::TripleGrad g{grads->entities->row(static_cast<std::size_t>(t.subject)),
                        grads->relations->row(static_cast<std::size_t>(t.predicate)),
                        grads->entities->row(static_cast<std::size_t>(t.object)), grads->conv};
      kge::accumulate_gradient(model, view_of(t), slope * dl, g);
    };
    for (std::size_t i = 0; i < positives.size(); ++i) push(positives[i], gpos[i]);
    for (std::size_t i = 0; i < negatives.size(); ++i) push(negatives[i], gneg[i]);
  }
  return total;
}

TrainResult train_kge(const KnowledgeGraph& g, const kge::KgeConfig& model, const LossConfig& loss,
                      const TrainOptions& opts) {
  model.validate();
  loss.validate();
  if (opts.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (opts.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(opts.lr > 0)) throw ConfigError("learning rate must be > 0");
  if (g.has_literals()) throw DataError("graph still contains literal triples; drop them before training");
  if (g.num_triples() == 0) throw DataError("cannot train on an empty graph");

  std::mt19937_64 rng(opts.seed);
  TrainResult r;
  r.table = kge::init_embeddings(model, g.num_entities(), g.num_relations(), rng());
  r.state.rng_seed = opts.seed;

  Matrix ge(r.table.entities.rows(), r.table.entities.cols());
  Matrix gr(r.table.relations.rows(), r.table.relations.cols());
  std::vector<double> gc(r.table.conv.size());
  const AdamParams adam{opts.lr};

  std::vector<Triple> order = g.triples();
  const auto batch = static_cast<std::size_t>(opts.batch_size);
  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      std::span<const Triple> pos(order.data() + start, std::min(batch, order.size() - start));
      auto neg = sample_negatives(g, pos, loss.negatives, loss.sampling, rng);
      ge.fill(0.0);
      gr.fill(0.0);
      std::fill(gc.begin(), gc.end(), 0.0);
      KgeGrads grads{&ge, &gr, gc};
      epoch_loss += kge_batch_loss(model, loss, {&r.table.entities, &r.table.relations, r.table.conv}, pos, neg,
                                   1.0, &grads);
      if (!std::isfinite(epoch_loss))
        throw NumericalError("KGE training diverged at epoch " + std::to_string(epoch));
      try {
        adam_step(r.table.entities.values(), ge.values(), r.state.entity_moments, adam);
        adam_step(r.table.relations.values(), gr.values(), r.state.relation_moments, adam);
        if (!gc.empty()) adam_step(r.table.conv, gc, r.state.conv_moments, adam);
      } catch (const NumericalError&) {
        throw NumericalError("KGE training diverged at epoch " + std::to_string(epoch));
      }
    }
    r.state.epoch = epoch;
    r.state.loss_history.push_back(epoch_loss);
  }
  return r;
}

double relative_loss(const TrainState& s) {
  if (s.loss_history.empty()) throw DataError("relative loss needs at least one recorded epoch");
  return s.loss_history.back() / s.loss_history.front();
}

std::string format_training_log(const TrainState& s) {
  std::string out = "epoch,loss,relative_loss\n";
  for (std::size_t i = 0; i < s.loss_history.size(); ++i) {
    out += std::to_string(i + 1) + ',' + detail::format_double(s.loss_history[i]) + ',' +
           detail::format_double(s.loss_history[i] / s.loss_history.front()) + '\n';
  }
  return out;
}

std::vector<double> object_ranks(const kge::KgeConfig& model, const kge::EmbeddingTable& t,
                                 std::span<const Triple> test, const KnowledgeGraph* filter) {
  std::vector<double> ranks;
  ranks.reserve(test.size());
  const auto n = static_cast<EntityId>(t.entities.rows());
  for (const auto& triple : test) {
    const double truth = kge::plausibility(model, kge::score(model, t, triple));
    double better = 0, ties = 0;
    for (EntityId e = 0; e < n; ++e) {
      if (e == triple.object) continue;
      Triple c{triple.subject, triple.predicate, e, false};
      if (filter && filter->contains(c)) continue;
      double p = kge::plausibility(model, kge::score(model, t, c));
      if (p > truth)
        ++better;
      else if (p == truth)
        ++ties;
    }
    ranks.push_back(1.0 + better + ties / 2.0);
  }
  return ranks;
}

void HpoSpec::validate() const {
  if (trials < 1) throw ConfigError("HPO needs at least one trial");
  if (losses.empty()) throw ConfigError("HPO needs at least one loss kind");
  if (margin_min > margin_max || bias_min > bias_max || dim_min > dim_max || negatives_min > negatives_max)
    throw ConfigError("HPO range has min above max");
  if (margin_min < 0 || bias_min < 0 || dim_min < 1 || negatives_min < 1) throw ConfigError("HPO range out of domain");
}

HpoResult random_search(const KnowledgeGraph& g, const kge::KgeConfig& base, const HpoSpec& spec,
                        const TrainOptions& opts) {
  spec.validate();
  std::mt19937_64 rng(opts.seed);
  HpoResult result;
  for (int i = 0; i < spec.trials; ++i) {
    HpoTrial trial;
    trial.model = base;
    trial.loss.kind = spec.losses[std::uniform_int_distribution<std::size_t>(0, spec.losses.size() - 1)(rng)];
    trial.loss.margin = std::uniform_real_distribution<double>(spec.margin_min, spec.margin_max)(rng);
    trial.model.bias = std::uniform_real_distribution<double>(spec.bias_min, spec.bias_max)(rng);
    trial.model.k = std::uniform_int_distribution<int>(spec.dim_min, spec.dim_max)(rng);
    trial.loss.negatives = std::uniform_int_distribution<int>(spec.negatives_min, spec.negatives_max)(rng);
    trial.model.conve_reshape_rows = 0;
    trial.loss.sampling = spec.sampling;
    result.trials.push_back(trial);
  }
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < result.trials.size(); ++i) {
    auto& trial = result.trials[i];
    TrainOptions o = opts;
    o.seed = opts.seed + 1 + i;
    try {
      auto r = train_kge(g, trial.model, trial.loss, o);
      double rl = relative_loss(r.state);
      if (!std::isfinite(rl)) continue;
      trial.relative_loss = rl;
      if (!best || rl < *result.trials[*best].relative_loss) best = i;
    } catch (const NumericalError&) {
    }
  }
  if (!best) throw NumericalError("every HPO trial diverged");
  result.best_model = result.trials[*best].model;
  result.best_loss = result.trials[*best].loss;
  result.best_relative_loss = *result.trials[*best].relative_loss;
  return result;
}

std::string format_hpo_log(const HpoResult& r) {
  std::string out = "trial,model,loss,margin,bias,k,negatives,relative_loss\n";
  for (std::size_t i = 0; i < r.trials.size(); ++i) {
    const auto& t = r.trials[i];
    out += std::to_string(i + 1) + ',' + std::string(kge::to_string(t.model.model)) + ',' +
           std::string(to_string(t.loss.kind)) + ',' + detail::format_double(t.loss.margin) + ',' +
           detail::format_double(t.model.bias) + ',' + std::to_string(t.model.k) + ',' +
           std::to_string(t.loss.negatives) + ',' +
           (t.relative_loss ? detail::format_double(*t.relative_loss) : std::string("diverged")) + '\n';
  }
  return out;
}

}  // namespace toxkge::train
