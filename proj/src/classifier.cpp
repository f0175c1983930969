#include "toxkge/classifier.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

#include "toxkge/detail/text.hpp"
#include "toxkge/error.hpp"

namespace toxkge::clf {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

Eigen::Map<const RowMat> as_eigen(const Matrix& m) {
  return {m.values().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}
Eigen::Map<RowMat> as_eigen(Matrix& m) {
  return {m.values().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}
Eigen::Map<const RowVec> as_row(const std::vector<double>& v) { return {v.data(), static_cast<Eigen::Index>(v.size())}; }
Eigen::Map<RowVec> as_row(std::vector<double>& v) { return {v.data(), static_cast<Eigen::Index>(v.size())}; }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

constexpr double kClamp = 1e-7;

struct LayerCache {
  RowMat input;
  RowMat pre;   // before ReLu
  RowMat mask;  // dropout scale, empty when inactive
  RowMat xhat;  // normalized activations
  RowVec inv_std;
  RowVec batch_mean;
  RowVec batch_var;
};

struct ForwardCache {
  std::vector<LayerCache> chemical, species, kappa, trunk;
  RowMat trunk_out;
  Eigen::VectorXd logits;
};

RowMat run_stack(const std::vector<HiddenLayer>& layers, RowMat x, const MlpConfig& cfg, bool train_mode,
                 std::mt19937_64* rng, std::vector<LayerCache>* caches) {
  if (caches) caches->resize(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    RowMat pre = (x * as_eigen(layer.dense.w)).rowwise() + as_row(layer.dense.b);
    RowMat a = pre.cwiseMax(0.0);
    RowMat mask;
    if (train_mode && cfg.dropout > 0) {
      if (!rng) throw ConfigError("training-mode forward pass needs a random generator");
      std::uniform_real_distribution<double> u(0.0, 1.0);
      const double keep = 1.0 - cfg.dropout;
      mask.resize(a.rows(), a.cols());
      for (Eigen::Index i = 0; i < mask.rows(); ++i)
        for (Eigen::Index j = 0; j < mask.cols(); ++j) mask(i, j) = u(*rng) < keep ? 1.0 / keep : 0.0;
      a = a.cwiseProduct(mask);
    }
    RowMat y = a;
    RowMat xhat;
    RowVec inv_std, mean, var;
    if (cfg.batch_norm) {
      if (train_mode) {
        mean = a.colwise().mean();
        RowMat centered = a.rowwise() - mean;
        var = centered.cwiseAbs2().colwise().mean();
        inv_std = (var.array() + cfg.bn_eps).rsqrt().matrix();
        xhat = centered.array().rowwise() * inv_std.array();
      } else {
        inv_std = (as_row(layer.running_var).array() + cfg.bn_eps).rsqrt().matrix();
        xhat = (a.rowwise() - as_row(layer.running_mean)).array().rowwise() * inv_std.array();
      }
      y = (xhat.array().rowwise() * as_row(layer.gamma).array()).rowwise() + as_row(layer.beta).array();
    }
    if (caches) {
      auto& c = (*caches)[l];
      c.input = std::move(x);
      c.pre = std::move(pre);
      c.mask = std::move(mask);
      c.xhat = std::move(xhat);
      c.inv_std = std::move(inv_std);
      c.batch_mean = std::move(mean);
      c.batch_var = std::move(var);
    }
    x = std::move(y);
  }
  return x;
}

// Returns the logits of a batch.
Eigen::VectorXd forward_core(const MlpWeights& w, const MlpConfig& cfg, std::span<const Sample> batch, bool train_mode,
                             std::mt19937_64* rng, ForwardCache* cache) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  const auto kc = static_cast<Eigen::Index>(w.chemical_embedding.cols());
  const auto ks = static_cast<Eigen::Index>(w.species_embedding.cols());
  RowMat xc(n, kc), xs(n, ks), xk(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = batch[static_cast<std::size_t>(i)];
    if (s.chemical < 0 || static_cast<std::size_t>(s.chemical) >= w.chemical_embedding.rows() || s.species < 0 ||
        static_cast<std::size_t>(s.species) >= w.species_embedding.rows())
      throw DataError("classifier input index out of range");
    xc.row(i) = as_eigen(w.chemical_embedding).row(s.chemical);
    xs.row(i) = as_eigen(w.species_embedding).row(s.species);
    xk(i, 0) = s.kappa;
  }
  RowMat yc = run_stack(w.chemical, std::move(xc), cfg, train_mode, rng, cache ? &cache->chemical : nullptr);
  RowMat ys = run_stack(w.species, std::move(xs), cfg, train_mode, rng, cache ? &cache->species : nullptr);
  RowMat yk = run_stack(w.kappa, std::move(xk), cfg, train_mode, rng, cache ? &cache->kappa : nullptr);
  RowMat cat(n, yc.cols() + ys.cols() + yk.cols());
  cat << yc, ys, yk;
  RowMat t = run_stack(w.trunk, std::move(cat), cfg, train_mode, rng, cache ? &cache->trunk : nullptr);
  Eigen::VectorXd logits = (t * as_eigen(w.output.w)).col(0).array() + w.output.b[0];
  if (cache) {
    cache->trunk_out = std::move(t);
    cache->logits = logits;
  }
  return logits;
}

void update_running_stats(std::vector<HiddenLayer>& layers, const std::vector<LayerCache>& caches,
                          const MlpConfig& cfg) {
  if (!cfg.batch_norm) return;
  const double m = cfg.bn_momentum;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    as_row(layers[l].running_mean) = m * as_row(layers[l].running_mean) + (1.0 - m) * caches[l].batch_mean;
    as_row(layers[l].running_var) = m * as_row(layers[l].running_var) + (1.0 - m) * caches[l].batch_var;
  }
}

// Backpropagates dL/d(stack output) and returns dL/d(stack input).
RowMat backprop_stack(const std::vector<HiddenLayer>& layers, const std::vector<LayerCache>& caches,
                      std::vector<HiddenLayer>& grads, RowMat dy, const MlpConfig& cfg) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = layers[l];
    const auto& c = caches[l];
    auto& g = grads[l];
    RowMat da = dy;
    if (cfg.batch_norm) {
      as_row(g.gamma) += dy.cwiseProduct(c.xhat).colwise().sum();
      as_row(g.beta) += dy.colwise().sum();
      RowMat dxhat = dy.array().rowwise() * as_row(layer.gamma).array();
      const double b = static_cast<double>(dy.rows());
      RowVec sum_dxhat = dxhat.colwise().sum();
      RowVec sum_dxhat_xhat = dxhat.cwiseProduct(c.xhat).colwise().sum();
      RowMat inner = (b * dxhat).rowwise() - sum_dxhat;
      inner -= (c.xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
      da = (inner.array().rowwise() * (c.inv_std.array() / b)).matrix();
    }
    if (c.mask.size()) da = da.cwiseProduct(c.mask);
    RowMat dz = da.cwiseProduct((c.pre.array() > 0.0).cast<double>().matrix());
    as_eigen(g.dense.w) += c.input.transpose() * dz;
    as_row(g.dense.b) += dz.colwise().sum();
    dy = dz * as_eigen(layer.dense.w).transpose();
  }
  return dy;
}

void zero(std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); }

std::vector<HiddenLayer> make_stack(const std::vector<int>& units, std::size_t in, std::mt19937_64& rng) {
  std::vector<HiddenLayer> out;
  for (int u : units) {
    const auto width = static_cast<std::size_t>(u);
    HiddenLayer l;
    l.dense.w = Matrix(in, width);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + width));
    std::uniform_real_distribution<double> d(-limit, limit);
    for (double& v : l.dense.w.values()) v = d(rng);
    l.dense.b.assign(width, 0.0);
    l.gamma.assign(width, 1.0);
    l.beta.assign(width, 0.0);
    l.running_mean.assign(width, 0.0);
    l.running_var.assign(width, 1.0);
    out.push_back(std::move(l));
    in = width;
  }
  return out;
}

std::size_t stack_width(const std::vector<HiddenLayer>& s, std::size_t in) {
  return s.empty() ? in : s.back().dense.b.size();
}

}  // namespace

// --- Config ---------------------------------------------------------------------

std::string_view to_string(EmbeddingSource s) {
  switch (s) {
    case EmbeddingSource::OneHot: return "one_hot";
    case EmbeddingSource::Pretrained: return "pretrained";
    case EmbeddingSource::Finetune: return "finetune";
  }
  return "one_hot";
}

EmbeddingSource parse_embedding_source(std::string_view s) {
  auto v = detail::lower(detail::trim(s));
  if (v == "one_hot" || v == "onehot" || v == "one-hot") return EmbeddingSource::OneHot;
  if (v == "pretrained" || v == "pt") return EmbeddingSource::Pretrained;
  if (v == "finetune" || v == "ft") return EmbeddingSource::Finetune;
  throw ConfigError("unknown embedding source: " + std::string(s));
}

std::string LayerSpec::to_string() const {
  auto group = [](const std::vector<int>& v) {
    std::string s = "(";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s + ")";
  };
  return group(chemical) + "/" + group(species) + "/" + group(kappa) + "/" + group(trunk);
}

LayerSpec LayerSpec::parse(std::string_view text) {
  auto parts = detail::split(detail::trim(text), '/');
  if (parts.size() != 4) throw ConfigError("layer spec needs four groups: (chemical)/(species)/(kappa)/(trunk)");
  std::array<std::vector<int>, 4> groups;
  for (std::size_t i = 0; i < 4; ++i) {
    auto p = detail::trim(parts[i]);
    if (p == "-") continue;
    if (p.size() < 2 || p.front() != '(' || p.back() != ')') throw ConfigError("layer group must be parenthesized");
    p = detail::trim(p.substr(1, p.size() - 2));
    if (p.empty()) continue;
    for (auto tok : detail::split(p, ',')) {
      auto v = detail::parse_int(tok);
      if (!v || *v < 1) throw ConfigError("layer units must be positive integers");
      groups[i].push_back(static_cast<int>(*v));
    }
  }
  return {groups[0], groups[1], groups[2], groups[3]};
}

bool MlpConfig::simple() const {
  return layers.chemical.empty() && layers.species.empty() && layers.kappa.empty() && layers.trunk.size() == 1;
}

void MlpConfig::validate() const {
  if (k < 1) throw ConfigError("embedding width must be >= 1");
  if (!(dropout >= 0 && dropout < 1)) throw ConfigError("dropout must lie in [0,1)");
  if (!(bn_momentum >= 0 && bn_momentum < 1)) throw ConfigError("batch norm momentum must lie in [0,1)");
  if (!(bn_eps > 0)) throw ConfigError("batch norm epsilon must be > 0");
  for (const auto* g : {&layers.chemical, &layers.species, &layers.kappa, &layers.trunk})
    for (int u : *g)
      if (u < 1) throw ConfigError("layer units must be >= 1");
}

bool MlpConfig::units_in_search_range() const {
  auto within = [](const std::vector<int>& v, int lo, int hi) {
    return v.size() <= 3 && std::all_of(v.begin(), v.end(), [&](int u) { return u >= lo && u <= hi; });
  };
  return within(layers.chemical, 16, 1024) && within(layers.species, 16, 1024) && within(layers.kappa, 4, 32) &&
         within(layers.trunk, 16, 1024);
}

void FtConfig::validate() const {
  if (alpha_c < 0 || alpha_s < 0 || alpha_mlp < 0) throw ConfigError("loss weights must be >= 0");
  if (!(lr_scale > 0)) throw ConfigError("learning-rate scale must be > 0");
}

// --- Weights ----------------------------------------------------------------------

std::vector<std::span<double>> MlpWeights::trainable() {
  std::vector<std::span<double>> out;
  if (embeddings_trainable) {
    out.push_back(chemical_embedding.values());
    out.push_back(species_embedding.values());
  }
  for (auto* stack : {&chemical, &species, &kappa, &trunk}) {
    for (auto& l : *stack) {
      out.push_back(l.dense.w.values());
      out.push_back(l.dense.b);
      out.push_back(l.gamma);
      out.push_back(l.beta);
    }
  }
  out.push_back(output.w.values());
  out.push_back(output.b);
  return out;
}

std::size_t MlpWeights::trainable_count() const {
  std::size_t n = embeddings_trainable ? chemical_embedding.size() + species_embedding.size() : 0;
  for (const auto* stack : {&chemical, &species, &kappa, &trunk})
    for (const auto& l : *stack) n += l.dense.w.size() + l.dense.b.size() + l.gamma.size() + l.beta.size();
  return n + output.w.size() + output.b.size();
}

MlpWeights zeros_like(const MlpWeights& w) {
  MlpWeights g = w;
  g.chemical_embedding.fill(0.0);
  g.species_embedding.fill(0.0);
  for (auto* stack : {&g.chemical, &g.species, &g.kappa, &g.trunk}) {
    for (auto& l : *stack) {
      l.dense.w.fill(0.0);
      for (auto* v : {&l.dense.b, &l.gamma, &l.beta, &l.running_mean, &l.running_var}) zero(*v);
    }
  }
  g.output.w.fill(0.0);
  zero(g.output.b);
  return g;
}

MlpWeights build_mlp(const MlpConfig& cfg, std::size_t num_chemicals, std::size_t num_species, std::uint64_t seed,
                     const Matrix* pre_c, const Matrix* pre_s) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  MlpWeights w;
  const auto k = static_cast<std::size_t>(cfg.k);
  if (cfg.source == EmbeddingSource::OneHot) {
    if (pre_c || pre_s) throw ConfigError("one-hot classifier takes no pre-trained embeddings");
    if (num_chemicals < 1 || num_species < 1) throw DataError("classifier needs at least one chemical and species");
    std::uniform_real_distribution<double> d(-0.05, 0.05);
    w.chemical_embedding = Matrix(num_chemicals, k);
    w.species_embedding = Matrix(num_species, k);
    for (double& v : w.chemical_embedding.values()) v = d(rng);
    for (double& v : w.species_embedding.values()) v = d(rng);
    w.embeddings_trainable = true;
  } else {
    if (!pre_c || !pre_s) throw ConfigError("pre-trained and fine-tuned classifiers need both embedding tables");
    if (pre_c->cols() != k || pre_s->cols() != k)
      throw DataError("embedding width " + std::to_string(pre_c->cols()) + "/" + std::to_string(pre_s->cols()) +
                      " does not match classifier k=" + std::to_string(k));
    w.chemical_embedding = *pre_c;
    w.species_embedding = *pre_s;
    w.embeddings_trainable = cfg.source == EmbeddingSource::Finetune;
  }
  w.chemical = make_stack(cfg.layers.chemical, k, rng);
  w.species = make_stack(cfg.layers.species, k, rng);
  w.kappa = make_stack(cfg.layers.kappa, 1, rng);
  const std::size_t cat = stack_width(w.chemical, k) + stack_width(w.species, k) + stack_width(w.kappa, 1);
  w.trunk = make_stack(cfg.layers.trunk, cat, rng);
  const std::size_t top = stack_width(w.trunk, cat);
  w.output.w = Matrix(top, 1);
  const double limit = std::sqrt(6.0 / static_cast<double>(top + 1));
  std::uniform_real_distribution<double> d(-limit, limit);
  for (double& v : w.output.w.values()) v = d(rng);
  w.output.b.assign(1, 0.0);
  return w;
}

// --- Forward / backward ---------------------------------------------------------

std::vector<double> forward(MlpWeights& w, const MlpConfig& cfg, std::span<const Sample> batch, bool train_mode,
                            std::mt19937_64* rng) {
  if (!train_mode) return predict_proba(w, cfg, batch);
  ForwardCache cache;
  auto logits = forward_core(w, cfg, batch, true, rng, &cache);
  update_running_stats(w.chemical, cache.chemical, cfg);
  update_running_stats(w.species, cache.species, cfg);
  update_running_stats(w.kappa, cache.kappa, cfg);
  update_running_stats(w.trunk, cache.trunk, cfg);
  std::vector<double> out(static_cast<std::size_t>(logits.size()));
  for (Eigen::Index i = 0; i < logits.size(); ++i) out[static_cast<std::size_t>(i)] = sigmoid(logits(i));
  return out;
}

std::vector<double> predict_proba(const MlpWeights& w, const MlpConfig& cfg, std::span<const Sample> batch) {
  auto logits = forward_core(w, cfg, batch, false, nullptr, nullptr);
  std::vector<double> out(static_cast<std::size_t>(logits.size()));
  for (Eigen::Index i = 0; i < logits.size(); ++i) out[static_cast<std::size_t>(i)] = sigmoid(logits(i));
  return out;
}

double bce_loss(std::span<const double> p, std::span<const double> y) {
  if (p.size() != y.size()) throw DataError("prediction and label counts differ");
  if (p.empty()) return 0.0;
  double total = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double q = std::clamp(p[i], kClamp, 1.0 - kClamp);
    total += y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q);
  }
  return -total / static_cast<double>(p.size());
}

double loss_and_gradient(MlpWeights& w, const MlpConfig& cfg, std::span<const Sample> batch,
                         std::span<const double> labels, MlpWeights& grad, std::mt19937_64& rng) {
  if (batch.size() != labels.size()) throw DataError("sample and label counts differ");
  if (batch.empty()) throw DataError("empty training batch");
  for (auto s : grad.trainable()) std::fill(s.begin(), s.end(), 0.0);

  ForwardCache cache;
  auto logits = forward_core(w, cfg, batch, true, &rng, &cache);
  const auto n = static_cast<double>(batch.size());
  std::vector<double> p(batch.size());
  Eigen::VectorXd dlogit(logits.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = sigmoid(logits(static_cast<Eigen::Index>(i)));
    const bool clamped = p[i] < kClamp || p[i] > 1.0 - kClamp;
    dlogit(static_cast<Eigen::Index>(i)) = clamped ? 0.0 : (p[i] - labels[i]) / n;
  }
  const double loss = bce_loss(p, labels);

  as_eigen(grad.output.w) += cache.trunk_out.transpose() * dlogit;
  grad.output.b[0] += dlogit.sum();
  RowMat dt = dlogit * as_eigen(w.output.w).transpose();
  RowMat dcat = backprop_stack(w.trunk, cache.trunk, grad.trunk, std::move(dt), cfg);

  const auto wc = static_cast<Eigen::Index>(stack_width(w.chemical, w.chemical_embedding.cols()));
  const auto ws = static_cast<Eigen::Index>(stack_width(w.species, w.species_embedding.cols()));
  const auto wk = dcat.cols() - wc - ws;
  RowMat dxc = backprop_stack(w.chemical, cache.chemical, grad.chemical, dcat.leftCols(wc), cfg);
  RowMat dxs = backprop_stack(w.species, cache.species, grad.species, dcat.middleCols(wc, ws), cfg);
  backprop_stack(w.kappa, cache.kappa, grad.kappa, dcat.rightCols(wk), cfg);

  if (w.embeddings_trainable) {
    auto gc = as_eigen(grad.chemical_embedding);
    auto gs = as_eigen(grad.species_embedding);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      gc.row(batch[i].chemical) += dxc.row(static_cast<Eigen::Index>(i));
      gs.row(batch[i].species) += dxs.row(static_cast<Eigen::Index>(i));
    }
  }
  update_running_stats(w.chemical, cache.chemical, cfg);
  update_running_stats(w.species, cache.species, cfg);
  update_running_stats(w.kappa, cache.kappa, cfg);
  update_running_stats(w.trunk, cache.trunk, cfg);
  return loss;
}

// --- Training --------------------------------------------------------------------

namespace {

double validation_loss(const MlpWeights& w, const MlpConfig& cfg, const Dataset& val) {
  return bce_loss(predict_proba(w, cfg, val.x), val.y);
}

void check_dataset(const Dataset& d, const char* name) {
  if (d.x.size() != d.y.size()) throw DataError(std::string(name) + ": sample and label counts differ");
  if (d.x.empty()) throw DataError(std::string(name) + " set is empty");
}

// The parts shared by plain and joint training: shuffling, batching, early
// stopping. `step` runs one batch (indices into `train`) and returns its BCE.
template <typename Step, typename Snapshot>
History run_epochs(const Dataset& train, const ClassifierOptions& opts, std::mt19937_64& rng,
                   Step step, Snapshot snapshot, const std::function<double()>& val_loss) {
  if (opts.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (opts.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (opts.patience < 1) throw ConfigError("patience must be >= 1");
  History h;
  double best = val_loss();
  snapshot();
  int wait = 0;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto bs = static_cast<std::size_t>(opts.batch_size);
  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += bs, ++b) {
      std::span<const std::size_t> idx(order.data() + start, std::min(bs, order.size() - start));
      total += step(idx, b) * static_cast<double>(idx.size());
    }
    const double train_loss = total / static_cast<double>(train.size());
    if (!std::isfinite(train_loss)) throw NumericalError("classifier training diverged at epoch " + std::to_string(epoch));
    h.train_loss.push_back(train_loss);
    const double v = val_loss();
    h.validation_loss.push_back(v);
    if (v < best) {
      best = v;
      h.best_epoch = epoch;
      snapshot();
      wait = 0;
    } else if (++wait >= opts.patience) {
      break;
    }
  }
  return h;
}

std::vector<train::AdamState> adam_states(std::size_t n) { return std::vector<train::AdamState>(n); }

}  // namespace

ClassifierResult train_classifier(MlpWeights init, const MlpConfig& cfg, const Dataset& train, const Dataset& val,
                                  const ClassifierOptions& opts) {
  cfg.validate();
  check_dataset(train, "training");
  check_dataset(val, "validation");
  std::mt19937_64 rng(opts.seed);
  MlpWeights w = std::move(init);
  MlpWeights grad = zeros_like(w);
  auto params = w.trainable();
  auto grads = grad.trainable();
  auto moments = adam_states(params.size());
  const train::AdamParams adam{opts.lr};

  std::vector<Sample> xb;
  std::vector<double> yb;
  ClassifierResult r;
  auto step = [&](std::span<const std::size_t> idx, std::size_t) {
    xb.clear();
    yb.clear();
    for (auto i : idx) {
      xb.push_back(train.x[i]);
      yb.push_back(train.y[i]);
    }
    double loss = loss_and_gradient(w, cfg, xb, yb, grad, rng);
    for (std::size_t b = 0; b < params.size(); ++b) train::adam_step(params[b], grads[b], moments[b], adam);
    return loss;
  };
  r.history = run_epochs(
      train, opts, rng, step, [&] { r.weights = w; }, [&] { return validation_loss(w, cfg, val); });
  return r;
}

FineTuneResult fine_tune(MlpWeights init, const MlpConfig& cfg, const FtConfig& ft, KgeComponent chem,
                         KgeComponent spec, const Dataset& train, const Dataset& val, const ClassifierOptions& opts) {
  cfg.validate();
  ft.validate();
  check_dataset(train, "training");
  check_dataset(val, "validation");
  if (cfg.source != EmbeddingSource::Finetune) throw ConfigError("fine-tuning needs the finetune embedding source");
  if (!chem.graph || !spec.graph) throw ConfigError("fine-tuning needs both knowledge graphs");
  if (init.chemical_embedding.rows() != chem.table.entities.rows() ||
      init.chemical_embedding.cols() != chem.table.entities.cols() ||
      init.species_embedding.rows() != spec.table.entities.rows() ||
      init.species_embedding.cols() != spec.table.entities.cols())
    throw DataError("fine-tuning must start from classifier weights built on the pre-trained tables");
  for (const auto* c : {&chem, &spec}) {
    if (c->graph->num_triples() == 0) throw DataError("fine-tuning graph has no triples");
    if (c->graph->num_entities() != c->table.entities.rows() || c->graph->num_relations() != c->table.relations.rows())
      throw DataError("knowledge graph and embedding table sizes differ");
  }

  std::mt19937_64 rng(opts.seed);
  std::mt19937_64 kge_rng(opts.seed ^ 0x6a09e667f3bcc909ULL);
  MlpWeights w = std::move(init);
  w.embeddings_trainable = true;
  MlpWeights grad = zeros_like(w);
  auto params = w.trainable();
  auto grads = grad.trainable();

  Matrix rel_grad_c(chem.table.relations.rows(), chem.table.relations.cols());
  Matrix rel_grad_s(spec.table.relations.rows(), spec.table.relations.cols());
  std::vector<double> conv_grad_c(chem.table.conv.size()), conv_grad_s(spec.table.conv.size());
  params.push_back(chem.table.relations.values());
  grads.push_back(rel_grad_c.values());
  params.push_back(spec.table.relations.values());
  grads.push_back(rel_grad_s.values());
  if (!chem.table.conv.empty()) {
    params.push_back(chem.table.conv);
    grads.push_back(conv_grad_c);
  }
  if (!spec.table.conv.empty()) {
    params.push_back(spec.table.conv);
    grads.push_back(conv_grad_s);
  }
  auto moments = adam_states(params.size());
  const train::AdamParams adam{opts.lr * ft.lr_scale};
  const auto bs = static_cast<std::size_t>(opts.batch_size);

  std::vector<Triple> draw_c, draw_s;
  auto draw = [&](const KnowledgeGraph& g, std::vector<Triple>& out) {
    const auto& ts = g.triples();
    std::uniform_int_distribution<std::size_t> pick(0, ts.size() - 1);
    out.resize(train.size());
    for (auto& t : out) t = ts[pick(kge_rng)];
  };

  std::vector<Sample> xb;
  std::vector<double> yb;
  FineTuneResult r;
  auto kge_term = [&](KgeComponent& c, double alpha, Matrix& entities, Matrix& entity_grad, Matrix& rel_grad,
                      std::vector<double>& conv_grad, const std::vector<Triple>& drawn, std::size_t batch_index,
                      std::size_t batch_len) {
    if (alpha == 0.0) return;
    std::span<const Triple> pos(drawn.data() + batch_index * bs, batch_len);
    auto neg = train::sample_negatives(*c.graph, pos, c.loss.negatives, c.loss.sampling, kge_rng);
    train::KgeGrads g{&entity_grad, &rel_grad, conv_grad};
    train::kge_batch_loss(c.model, c.loss, {&entities, &c.table.relations, c.table.conv}, pos, neg, alpha, &g);
  };

  auto step = [&](std::span<const std::size_t> idx, std::size_t batch_index) {
    if (batch_index == 0) {
      if (ft.alpha_c != 0.0) draw(*chem.graph, draw_c);
      if (ft.alpha_s != 0.0) draw(*spec.graph, draw_s);
    }
    xb.clear();
    yb.clear();
    for (auto i : idx) {
      xb.push_back(train.x[i]);
      yb.push_back(train.y[i]);
    }
    double loss = loss_and_gradient(w, cfg, xb, yb, grad, rng);
    if (ft.alpha_mlp != 1.0)
      for (auto g : grad.trainable())
        for (double& v : g) v *= ft.alpha_mlp;
    rel_grad_c.fill(0.0);
    rel_grad_s.fill(0.0);
    std::fill(conv_grad_c.begin(), conv_grad_c.end(), 0.0);
    std::fill(conv_grad_s.begin(), conv_grad_s.end(), 0.0);
    kge_term(chem, ft.alpha_c, w.chemical_embedding, grad.chemical_embedding, rel_grad_c, conv_grad_c, draw_c,
             batch_index, idx.size());
    kge_term(spec, ft.alpha_s, w.species_embedding, grad.species_embedding, rel_grad_s, conv_grad_s, draw_s,
             batch_index, idx.size());
    for (std::size_t b = 0; b < params.size(); ++b) train::adam_step(params[b], grads[b], moments[b], adam);
    return loss;
  };
  auto snapshot = [&] {
    r.weights = w;
    r.chemical_table = chem.table;
    r.species_table = spec.table;
  };
  r.history = run_epochs(train, opts, rng, step, snapshot, [&] { return validation_loss(w, cfg, val); });
  r.chemical_table.entities = r.weights.chemical_embedding;
  r.species_table.entities = r.weights.species_embedding;
  return r;
}

Prediction predict(const MlpWeights& w, const MlpConfig& cfg, std::span<const Sample> inputs, double threshold) {
  Prediction p;
  p.scores = predict_proba(w, cfg, inputs);
  p.labels.reserve(p.scores.size());
  for (double s : p.scores) p.labels.push_back(s > threshold ? 1 : 0);
  return p;
}

// --- Checkpoints -------------------------------------------------------------------

namespace {

constexpr std::string_view kMagic = "clf-ckpt";
constexpr int kVersion = 1;

void put_block(std::string& out, const std::string& name, std::size_t rows, std::size_t cols,
               std::span<const double> values) {
  out += "block " + name + ' ' + std::to_string(rows) + ' ' + std::to_string(cols) + '\n';
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) out += ' ';
      out += detail::format_double(values[r * cols + c]);
    }
    out += '\n';
  }
}

void put_vector(std::string& out, const std::string& name, const std::vector<double>& v) {
  put_block(out, name, 1, v.size(), v);
}

template <typename W, typename Fn>
void for_each_stack(W& w, Fn fn) {
  fn("chemical", w.chemical);
  fn("species", w.species);
  fn("kappa", w.kappa);
  fn("trunk", w.trunk);
}

class BlockReader {
public:
  explicit BlockReader(std::string_view text) : lines_(detail::lines(text)) {}

  std::string_view line(std::size_t i) {
    if (i >= lines_.size()) throw ParseError("classifier checkpoint truncated", i + 1);
    return lines_[i];
  }

  // Reads the block named `name` into `values`; shape must match.
  void read(const std::string& name, std::size_t rows, std::size_t cols, std::span<double> values) {
    std::istringstream h{std::string(line(pos_))};
    std::string tag, got;
    std::size_t r = 0, c = 0;
    if (!(h >> tag >> got >> r >> c) || tag != "block") throw ParseError("expected a weight block header", pos_ + 1);
    if (got != name || r != rows || c != cols)
      throw ParseError("unexpected block '" + got + "', wanted '" + name + "'", pos_ + 1);
    ++pos_;
    for (std::size_t i = 0; i < rows; ++i, ++pos_) {
      auto toks = detail::split(detail::trim(line(pos_)), ' ');
      std::size_t j = 0;
      for (auto tok : toks) {
        if (tok.empty()) continue;
        auto v = detail::parse_double(tok);
        if (!v || j >= cols) throw ParseError("bad value in block '" + name + "'", pos_ + 1);
        values[i * cols + j++] = *v;
      }
      if (j != cols) throw ParseError("short row in block '" + name + "'", pos_ + 1);
    }
  }

  std::size_t pos_{0};
  std::vector<std::string_view> lines_;
};

}  // namespace

std::string serialize_checkpoint(const MlpWeights& w, const MlpConfig& cfg) {
  std::string out = std::string(kMagic) + ' ' + std::to_string(kVersion) + ' ' + std::string(to_string(cfg.source)) +
                    ' ' + std::to_string(cfg.k) + ' ' + cfg.layers.to_string() + '\n';
  out += "options dropout " + detail::format_double(cfg.dropout) + " batch_norm " + (cfg.batch_norm ? "1" : "0") +
         " momentum " + detail::format_double(cfg.bn_momentum) + " eps " + detail::format_double(cfg.bn_eps) +
         " chemicals " + std::to_string(w.chemical_embedding.rows()) + " species " +
         std::to_string(w.species_embedding.rows()) + " trainable " + (w.embeddings_trainable ? "1" : "0") + '\n';
  put_block(out, "W_c", w.chemical_embedding.rows(), w.chemical_embedding.cols(), w.chemical_embedding.values());
  put_block(out, "W_s", w.species_embedding.rows(), w.species_embedding.cols(), w.species_embedding.values());
  for_each_stack(w, [&](const std::string& name, const std::vector<HiddenLayer>& stack) {
    for (std::size_t l = 0; l < stack.size(); ++l) {
      auto p = name + '.' + std::to_string(l) + '.';
      const auto& layer = stack[l];
      put_block(out, p + "W", layer.dense.w.rows(), layer.dense.w.cols(), layer.dense.w.values());
      put_vector(out, p + "b", layer.dense.b);
      put_vector(out, p + "gamma", layer.gamma);
      put_vector(out, p + "beta", layer.beta);
      put_vector(out, p + "mean", layer.running_mean);
      put_vector(out, p + "var", layer.running_var);
    }
  });
  put_block(out, "output.W", w.output.w.rows(), w.output.w.cols(), w.output.w.values());
  put_vector(out, "output.b", w.output.b);
  return out;
}

MlpWeights parse_checkpoint(std::string_view text, MlpConfig* cfg_out) {
  BlockReader in(text);
  std::istringstream header{std::string(in.line(0))};
  std::string magic, source, spec;
  int version = 0, k = 0;
  if (!(header >> magic >> version >> source >> k >> spec) || magic != kMagic)
    throw ParseError("not a classifier checkpoint header", 1);
  if (version != kVersion) throw ParseError("unsupported classifier checkpoint version " + std::to_string(version), 1);

  MlpConfig cfg;
  std::size_t nc = 0, ns = 0;
  int trainable = 1, bn = 1;
  try {
    cfg.source = parse_embedding_source(source);
    cfg.layers = LayerSpec::parse(spec);
    cfg.k = k;
    std::istringstream opts{std::string(in.line(1))};
    std::string tag, key;
    opts >> tag;
    if (tag != "options") throw ParseError("expected options line", 2);
    std::map<std::string, std::string> kv;
    std::string value;
    while (opts >> key >> value) kv[key] = value;
    auto num = [&](const char* name) {
      auto it = kv.find(name);
      auto v = it == kv.end() ? std::nullopt : detail::parse_double(it->second);
      if (!v) throw ParseError(std::string("missing option ") + name, 2);
      return *v;
    };
    cfg.dropout = num("dropout");
    bn = static_cast<int>(num("batch_norm"));
    cfg.bn_momentum = num("momentum");
    cfg.bn_eps = num("eps");
    nc = static_cast<std::size_t>(num("chemicals"));
    ns = static_cast<std::size_t>(num("species"));
    trainable = static_cast<int>(num("trainable"));
    cfg.batch_norm = bn != 0;
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), 1);
  }
  if (nc < 1 || ns < 1) throw ParseError("checkpoint has no embedding rows", 2);

  // Build the shapes, then fill them from the blocks in serialization order.
  MlpConfig shape_cfg = cfg;
  shape_cfg.source = EmbeddingSource::OneHot;
  MlpWeights w = build_mlp(shape_cfg, nc, ns, 0);
  w.embeddings_trainable = trainable != 0;
  in.pos_ = 2;
  in.read("W_c", nc, w.chemical_embedding.cols(), w.chemical_embedding.values());
  in.read("W_s", ns, w.species_embedding.cols(), w.species_embedding.values());
  for_each_stack(w, [&](const std::string& name, std::vector<HiddenLayer>& stack) {
    for (std::size_t l = 0; l < stack.size(); ++l) {
      auto p = name + '.' + std::to_string(l) + '.';
      auto& layer = stack[l];
      in.read(p + "W", layer.dense.w.rows(), layer.dense.w.cols(), layer.dense.w.values());
      for (auto [suffix, vec] : {std::pair{"b", &layer.dense.b},
                                 {"gamma", &layer.gamma},
                                 {"beta", &layer.beta},
                                 {"mean", &layer.running_mean},
                                 {"var", &layer.running_var}})
        in.read(p + suffix, 1, vec->size(), *vec);
    }
  });
  in.read("output.W", w.output.w.rows(), 1, w.output.w.values());
  in.read("output.b", 1, 1, w.output.b);
  for (std::size_t i = in.pos_; i < in.lines_.size(); ++i)
    if (!detail::trim(in.lines_[i]).empty()) throw ParseError("trailing data in classifier checkpoint", i + 1);
  if (cfg_out) *cfg_out = cfg;
  return w;
}

void save_checkpoint(const MlpWeights& w, const MlpConfig& cfg, const std::filesystem::path& path) {
  detail::write_file(path, serialize_checkpoint(w, cfg));
}

MlpWeights load_checkpoint(const std::filesystem::path& path, MlpConfig* cfg_out) {
  return parse_checkpoint(detail::read_file(path), cfg_out);
}

LayerSpec sample_layer_spec(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> depth(0, 3), wide(4, 10), narrow(2, 5);
  auto layers = [&](std::uniform_int_distribution<int>& exp) {
    std::vector<int> v(static_cast<std::size_t>(depth(rng)));
    for (int& u : v) u = 1 << exp(rng);
    return v;
  };
  LayerSpec s;
  s.chemical = layers(wide);
  s.species = layers(wide);
  s.kappa = layers(narrow);
  s.trunk = layers(wide);
  return s;
}

}  // namespace toxkge::clf
