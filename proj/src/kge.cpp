#include "toxkge/kge.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "toxkge/detail/text.hpp"
#include "toxkge/error.hpp"
#include "toxkge/fft.hpp"

namespace toxkge::kge {

namespace {

struct ModelInfo {
  ModelKind kind;
  std::string_view name;
  ModelFamily family;
  Representation repr;
};

constexpr ModelInfo kModels[] = {
    {ModelKind::DistMult, "DistMult", ModelFamily::Decomposition, Representation::Real},
    {ModelKind::ComplEx, "ComplEx", ModelFamily::Decomposition, Representation::Complex},
    {ModelKind::HolE, "HolE", ModelFamily::Decomposition, Representation::Real},
    {ModelKind::TransE, "TransE", ModelFamily::Geometric, Representation::Real},
    {ModelKind::RotatE, "RotatE", ModelFamily::Geometric, Representation::Complex},
    {ModelKind::pRotatE, "pRotatE", ModelFamily::Geometric, Representation::Phase},
    {ModelKind::HAKE, "HAKE", ModelFamily::Geometric, Representation::ModulusPhase},
    {ModelKind::ConvKB, "ConvKB", ModelFamily::Convolutional, Representation::Real},
    {ModelKind::ConvE, "ConvE", ModelFamily::Convolutional, Representation::Real},
};

const ModelInfo& info(ModelKind m) {
  for (const auto& i : kModels)
    if (i.kind == m) return i;
  throw ConfigError("unknown model kind");
}

double sign(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

// ||x||_n. When `grad` is non-empty it receives d||x||/dx (0 at kinks).
double norm(std::span<const double> x, int order, std::span<double> grad = {}) {
  if (order == 1) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      s += std::abs(x[i]);
      if (!grad.empty()) grad[i] = sign(x[i]);
    }
    return s;
  }
  double sq = 0;
  for (double v : x) sq += v * v;
  double n = std::sqrt(sq);
  if (!grad.empty())
    for (std::size_t i = 0; i < x.size(); ++i) grad[i] = n > 0 ? x[i] / n : 0.0;
  return n;
}

void check_width(Row r, std::size_t want, const char* what) {
  if (r.size() != want) throw DataError(std::string("embedding width mismatch for ") + what);
}

}  // namespace

std::string_view to_string(ModelKind m) { return info(m).name; }

std::string_view to_string(Representation r) {
  switch (r) {
    case Representation::Real: return "real";
    case Representation::Complex: return "complex";
    case Representation::Phase: return "phase";
    case Representation::ModulusPhase: return "modulus-phase";
  }
  return "real";
}

ModelKind parse_model_kind(std::string_view name) {
  auto want = detail::lower(name);
  for (const auto& i : kModels)
    if (detail::lower(i.name) == want) return i.kind;
  throw ConfigError("unknown KGE model: " + std::string(name));
}

Representation parse_representation(std::string_view name) {
  for (auto r : {Representation::Real, Representation::Complex, Representation::Phase, Representation::ModulusPhase})
    if (to_string(r) == name) return r;
  throw ConfigError("unknown representation: " + std::string(name));
}

ModelFamily family(ModelKind m) { return info(m).family; }
Representation representation(ModelKind m) { return info(m).repr; }

void KgeConfig::validate() const {
  if (k < 1) throw ConfigError("embedding dimension k must be >= 1");
  if (norm_order != 1 && norm_order != 2) throw ConfigError("norm order must be 1 or 2");
  if (bias < 0) throw ConfigError("bias must be >= 0");
  if (!(modulus_constraint > 0)) throw ConfigError("modulus constraint must be > 0");
  if (family(model) == ModelFamily::Convolutional) {
    if (conv_filters < 1) throw ConfigError("convolutional models need at least one filter");
    if (model == ModelKind::ConvE) {
      if (conv_filter_rows < 1 || conv_filter_cols < 1) throw ConfigError("filter size must be positive");
      if (conve_reshape_rows < 0 || (conve_reshape_rows > 0 && k % conve_reshape_rows != 0))
        throw ConfigError("ConvE reshape rows " + std::to_string(conve_reshape_rows) + " do not factor k=" +
                          std::to_string(k));
    }
  }
}

ConvGeometry conv_geometry(const KgeConfig& c) {
  c.validate();
  ConvGeometry g;
  const auto k = static_cast<std::size_t>(c.k);
  g.filters = static_cast<std::size_t>(c.conv_filters);
  if (c.model == ModelKind::ConvKB) {
    g.filter_rows = 1;
    g.filter_cols = 3;
    g.image_rows = k;
    g.image_cols = 3;
    g.dense_out = 1;
  } else if (c.model == ModelKind::ConvE) {
    std::size_t rows = static_cast<std::size_t>(c.conve_reshape_rows);
    if (rows == 0) {
      rows = 1;
      for (std::size_t d = 1; d * d <= k; ++d)
        if (k % d == 0) rows = d;
    }
    g.image_rows = 2 * rows;
    g.image_cols = k / rows;
    g.filter_rows = std::min(static_cast<std::size_t>(c.conv_filter_rows), g.image_rows);
    g.filter_cols = std::min(static_cast<std::size_t>(c.conv_filter_cols), g.image_cols);
    g.dense_out = k;
  } else {
    return ConvGeometry{};
  }
  g.out_rows = g.image_rows - g.filter_rows + 1;
  g.out_cols = g.image_cols - g.filter_cols + 1;
  return g;
}

std::size_t entity_width(const KgeConfig& c) {
  const auto k = static_cast<std::size_t>(c.k);
  switch (representation(c.model)) {
    case Representation::Real:
    case Representation::Phase: return k;
    case Representation::Complex:
    case Representation::ModulusPhase: return 2 * k;
  }
  return k;
}

std::size_t relation_width(const KgeConfig& c) {
  if (c.model == ModelKind::RotatE) return static_cast<std::size_t>(c.k);
  return entity_width(c);
}

EmbeddingTable init_embeddings(const KgeConfig& c, std::size_t num_entities, std::size_t num_relations,
                               std::uint64_t seed) {
  c.validate();
  if (num_entities < 1 || num_relations < 1) throw DataError("embedding tables need at least one row");
  std::mt19937_64 rng(seed);
  const double range = 6.0 / std::sqrt(static_cast<double>(c.k));
  std::uniform_real_distribution<double> coord(-range, range);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const auto k = static_cast<std::size_t>(c.k);

  auto fill = [&](Matrix& m, bool phases_only) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      auto row = m.row(r);
      for (std::size_t j = 0; j < row.size(); ++j) {
        bool is_phase = phases_only || (representation(c.model) == Representation::ModulusPhase && j >= k);
        row[j] = is_phase ? phase(rng) : coord(rng);
      }
    }
  };

  EmbeddingTable t;
  t.model = c.model;
  t.k = c.k;
  t.entities = Matrix(num_entities, entity_width(c));
  t.relations = Matrix(num_relations, relation_width(c));
  fill(t.entities, representation(c.model) == Representation::Phase);
  fill(t.relations, representation(c.model) == Representation::Phase || c.model == ModelKind::RotatE);

  if (family(c.model) == ModelFamily::Convolutional) {
    auto g = conv_geometry(c);
    t.conv.assign(g.param_count(), 0.0);
    const double fan_filter = static_cast<double>(g.filter_rows * g.filter_cols);
    std::uniform_real_distribution<double> fdist(-std::sqrt(6.0 / (fan_filter + static_cast<double>(g.filters))),
                                                 std::sqrt(6.0 / (fan_filter + static_cast<double>(g.filters))));
    for (std::size_t i = g.filter_offset(); i < g.filter_bias_offset(); ++i) t.conv[i] = fdist(rng);
    const double glorot = std::sqrt(6.0 / static_cast<double>(g.hidden() + g.dense_out));
    std::uniform_real_distribution<double> wdist(-glorot, glorot);
    for (std::size_t i = g.dense_offset(); i < g.dense_bias_offset(); ++i) t.conv[i] = wdist(rng);
  }
  return t;
}

// --- Scores -------------------------------------------------------------------

double score_distmult(Row s, Row p, Row o) {
  double acc = 0;
  // s*o first so swapping subject and object is bit-exact
  for (std::size_t i = 0; i < s.size(); ++i) acc += s[i] * o[i] * p[i];
  return acc;
}

double score_complex(Row s, Row p, Row o) {
  // Re(<s, p, conj(o)>)
  double acc = 0;
  for (std::size_t i = 0; i + 1 < s.size(); i += 2) {
    double a = s[i], b = s[i + 1], c = p[i], d = p[i + 1], e = o[i], f = o[i + 1];
    acc += a * c * e + b * c * f + a * d * f - b * d * e;
  }
  return acc;
}

double score_hole(Row s, Row p, Row o) {
  auto corr = fft::circular_correlation(s, o);
  double acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += p[i] * corr[i];
  return acc;
}

double score_transe(Row s, Row p, Row o, int norm_order) {
  std::vector<double> x(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) x[i] = s[i] + p[i] - o[i];
  return norm(x, norm_order);
}

double score_rotate(Row s, Row theta_p, Row o, int norm_order) {
  const std::size_t k = theta_p.size();
  std::vector<double> x(2 * k);
  for (std::size_t i = 0; i < k; ++i) {
    double a = s[2 * i], b = s[2 * i + 1], cs = std::cos(theta_p[i]), sn = std::sin(theta_p[i]);
    x[i] = a * cs - b * sn - o[2 * i];
    x[k + i] = a * sn + b * cs - o[2 * i + 1];
  }
  return norm(x, norm_order);
}

double score_protate(Row theta_s, Row theta_p, Row theta_o, int norm_order, double modulus_constraint) {
  std::vector<double> x(theta_s.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin((theta_s[i] + theta_p[i] - theta_o[i]) / 2.0);
  return 2.0 * modulus_constraint * norm(x, norm_order);
}

double score_hake(Row s, Row p, Row o, int norm_order) {
  const std::size_t k = s.size() / 2;
  std::vector<double> mod(k), ph(k);
  for (std::size_t i = 0; i < k; ++i) {
    mod[i] = std::abs(s[i]) * std::abs(p[i]) - std::abs(o[i]);
    ph[i] = std::sin((s[k + i] + p[k + i] - o[k + i]) / 2.0);
  }
  return norm(mod, norm_order) + norm(ph, 1);
}

double score_convkb(const ConvGeometry& g, Row s, Row p, Row o, Row conv) {
  const std::size_t k = s.size();
  double out = conv[g.dense_bias_offset()];
  for (std::size_t f = 0; f < g.filters; ++f) {
    const double* w = conv.data() + g.filter_offset() + 3 * f;
    const double b = conv[g.filter_bias_offset() + f];
    for (std::size_t i = 0; i < k; ++i) {
      double h = std::max(0.0, w[0] * s[i] + w[1] * p[i] + w[2] * o[i] + b);
      out += h * conv[g.dense_offset() + f * k + i];
    }
  }
  return out;
}

namespace {

// ConvE image: s reshaped row-major on top of p reshaped row-major.
double conve_pixel(const ConvGeometry& g, Row s, Row p, std::size_t r, std::size_t c) {
  const std::size_t half = g.image_rows / 2;
  return r < half ? s[r * g.image_cols + c] : p[(r - half) * g.image_cols + c];
}

// Hidden activations after conv + ReLu, flattened as (filter, row, col).
std::vector<double> conve_hidden(const ConvGeometry& g, Row s, Row p, Row conv, std::vector<double>* pre = nullptr) {
  std::vector<double> h(g.hidden());
  if (pre) pre->resize(g.hidden());
  for (std::size_t f = 0; f < g.filters; ++f) {
    const double* w = conv.data() + g.filter_offset() + f * g.filter_rows * g.filter_cols;
    const double b = conv[g.filter_bias_offset() + f];
    for (std::size_t y = 0; y < g.out_rows; ++y) {
      for (std::size_t x = 0; x < g.out_cols; ++x) {
        double acc = b;
        for (std::size_t dy = 0; dy < g.filter_rows; ++dy)
          for (std::size_t dx = 0; dx < g.filter_cols; ++dx)
            acc += w[dy * g.filter_cols + dx] * conve_pixel(g, s, p, y + dy, x + dx);
        const std::size_t m = (f * g.out_rows + y) * g.out_cols + x;
        if (pre) (*pre)[m] = acc;
        h[m] = std::max(0.0, acc);
      }
    }
  }
  return h;
}

}  // namespace

double score_conve(const ConvGeometry& g, Row s, Row p, Row o, Row conv) {
  auto h = conve_hidden(g, s, p, conv);
  double out = 0;
  for (std::size_t j = 0; j < g.dense_out; ++j) {
    double z = conv[g.dense_bias_offset() + j];
    for (std::size_t m = 0; m < h.size(); ++m) z += h[m] * conv[g.dense_offset() + m * g.dense_out + j];
    out += z * o[j];
  }
  return out;
}

double score(const KgeConfig& c, const TripleView& v) {
  const auto ew = entity_width(c);
  check_width(v.subject, ew, "subject");
  check_width(v.object, ew, "object");
  check_width(v.predicate, relation_width(c), "predicate");
  switch (c.model) {
    case ModelKind::DistMult: return score_distmult(v.subject, v.predicate, v.object);
    case ModelKind::ComplEx: return score_complex(v.subject, v.predicate, v.object);
    case ModelKind::HolE: return score_hole(v.subject, v.predicate, v.object);
    case ModelKind::TransE: return score_transe(v.subject, v.predicate, v.object, c.norm_order);
    case ModelKind::RotatE: return score_rotate(v.subject, v.predicate, v.object, c.norm_order);
    case ModelKind::pRotatE:
      return score_protate(v.subject, v.predicate, v.object, c.norm_order, c.modulus_constraint);
    case ModelKind::HAKE: return score_hake(v.subject, v.predicate, v.object, c.norm_order);
    case ModelKind::ConvKB: {
      auto g = conv_geometry(c);
      check_width(v.conv, g.param_count(), "convolution parameters");
      return score_convkb(g, v.subject, v.predicate, v.object, v.conv);
    }
    case ModelKind::ConvE: {
      auto g = conv_geometry(c);
      check_width(v.conv, g.param_count(), "convolution parameters");
      return score_conve(g, v.subject, v.predicate, v.object, v.conv);
    }
  }
  return 0.0;
}

double score(const KgeConfig& c, const EmbeddingTable& t, const Triple& triple) { return score(c, view(t, triple)); }

// --- Gradients -----------------------------------------------------------------

namespace {

double grad_distmult(const TripleView& v, double w, const TripleGrad& g) {
  const auto s = v.subject, p = v.predicate, o = v.object;
  double acc = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    acc += s[i] * o[i] * p[i];
    g.subject[i] += w * p[i] * o[i];
    g.predicate[i] += w * s[i] * o[i];
    g.object[i] += w * s[i] * p[i];
  }
  return acc;
}

double grad_complex(const TripleView& v, double w, const TripleGrad& g) {
  const auto s = v.subject, p = v.predicate, o = v.object;
  double acc = 0;
  for (std::size_t i = 0; i + 1 < s.size(); i += 2) {
    double a = s[i], b = s[i + 1], c = p[i], d = p[i + 1], e = o[i], f = o[i + 1];
    acc += a * c * e + b * c * f + a * d * f - b * d * e;
    g.subject[i] += w * (c * e + d * f);
    g.subject[i + 1] += w * (c * f - d * e);
    g.predicate[i] += w * (a * e + b * f);
    g.predicate[i + 1] += w * (a * f - b * e);
    g.object[i] += w * (a * c - b * d);
    g.object[i + 1] += w * (b * c + a * d);
  }
  return acc;
}

double grad_hole(const TripleView& v, double w, const TripleGrad& g) {
  const auto s = v.subject, p = v.predicate, o = v.object;
  auto so = fft::circular_correlation(s, o);  // d/dp
  auto po = fft::circular_correlation(p, o);  // d/ds
  auto ps = fft::circular_convolution(p, s);  // d/do
  double acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i] * so[i];
    g.predicate[i] += w * so[i];
    g.subject[i] += w * po[i];
    g.object[i] += w * ps[i];
  }
  return acc;
}

double grad_transe(const TripleView& v, int order, double w, const TripleGrad& g) {
  const auto s = v.subject, p = v.predicate, o = v.object;
  std::vector<double> x(s.size()), dx(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) x[i] = s[i] + p[i] - o[i];
  double n = norm(x, order, dx);
  for (std::size_t i = 0; i < s.size(); ++i) {
    g.subject[i] += w * dx[i];
    g.predicate[i] += w * dx[i];
    g.object[i] -= w * dx[i];
  }
  return n;
}

double grad_rotate(const TripleView& v, int order, double w, const TripleGrad& g) {
  const auto s = v.subject, th = v.predicate, o = v.object;
  const std::size_t k = th.size();
  std::vector<double> x(2 * k), dx(2 * k), cs(k), sn(k);
  for (std::size_t i = 0; i < k; ++i) {
    cs[i] = std::cos(th[i]);
    sn[i] = std::sin(th[i]);
    double a = s[2 * i], b = s[2 * i + 1];
    x[i] = a * cs[i] - b * sn[i] - o[2 * i];
    x[k + i] = a * sn[i] + b * cs[i] - o[2 * i + 1];
  }
  double n = norm(x, order, dx);
  for (std::size_t i = 0; i < k; ++i) {
    double a = s[2 * i], b = s[2 * i + 1], gu = dx[i], gv = dx[k + i];
    g.subject[2 * i] += w * (gu * cs[i] + gv * sn[i]);
    g.subject[2 * i + 1] += w * (-gu * sn[i] + gv * cs[i]);
    g.object[2 * i] -= w * gu;
    g.object[2 * i + 1] -= w * gv;
    g.predicate[i] += w * (gu * (-a * sn[i] - b * cs[i]) + gv * (a * cs[i] - b * sn[i]));
  }
  return n;
}

// Shared by pRotatE and the phase half of HAKE: d||sin((ts + tp - to)/2)||_n.
double phase_term(Row ts, Row tp, Row to, int order, double scale, double w, std::span<double> gs,
                  std::span<double> gp, std::span<double> go) {
  const std::size_t k = ts.size();
  std::vector<double> x(k), dx(k), z(k);
  for (std::size_t i = 0; i < k; ++i) {
    z[i] = (ts[i] + tp[i] - to[i]) / 2.0;
    x[i] = std::sin(z[i]);
  }
  double n = norm(x, order, dx);
  for (std::size_t i = 0; i < k; ++i) {
    double dz = scale * dx[i] * std::cos(z[i]) / 2.0;
    gs[i] += w * dz;
    gp[i] += w * dz;
    go[i] -= w * dz;
  }
  return scale * n;
}

double grad_protate(const TripleView& v, int order, double mc, double w, const TripleGrad& g) {
  return phase_term(v.subject, v.predicate, v.object, order, 2.0 * mc, w, g.subject, g.predicate, g.object);
}

double grad_hake(const TripleView& v, int order, double w, const TripleGrad& g) {
  const auto s = v.subject, p = v.predicate, o = v.object;
  const std::size_t k = s.size() / 2;
  std::vector<double> r(k), dr(k);
  for (std::size_t i = 0; i < k; ++i) r[i] = std::abs(s[i]) * std::abs(p[i]) - std::abs(o[i]);
  double mod = norm(r, order, dr);
  for (std::size_t i = 0; i < k; ++i) {
    g.subject[i] += w * dr[i] * std::abs(p[i]) * sign(s[i]);
    g.predicate[i] += w * dr[i] * std::abs(s[i]) * sign(p[i]);
    g.object[i] -= w * dr[i] * sign(o[i]);
  }
  double ph = phase_term(s.subspan(k), p.subspan(k), o.subspan(k), 1, 1.0, w, g.subject.subspan(k),
                         g.predicate.subspan(k), g.object.subspan(k));
  return mod + ph;
}

double grad_convkb(const ConvGeometry& geo, const TripleView& v, double w, const TripleGrad& g) {
  const auto s = v.subject, p = v.predicate, o = v.object, conv = v.conv;
  const std::size_t k = s.size();
  double out = conv[geo.dense_bias_offset()];
  g.conv[geo.dense_bias_offset()] += w;
  for (std::size_t f = 0; f < geo.filters; ++f) {
    const std::size_t wo = geo.filter_offset() + 3 * f;
    const std::size_t bo = geo.filter_bias_offset() + f;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t di = geo.dense_offset() + f * k + i;
      double pre = conv[wo] * s[i] + conv[wo + 1] * p[i] + conv[wo + 2] * o[i] + conv[bo];
      double h = std::max(0.0, pre);
      out += h * conv[di];
      g.conv[di] += w * h;
      if (pre <= 0) continue;
      double dpre = w * conv[di];
      g.conv[wo] += dpre * s[i];
      g.conv[wo + 1] += dpre * p[i];
      g.conv[wo + 2] += dpre * o[i];
      g.conv[bo] += dpre;
      g.subject[i] += dpre * conv[wo];
      g.predicate[i] += dpre * conv[wo + 1];
      g.object[i] += dpre * conv[wo + 2];
    }
  }
  return out;
}

double grad_conve(const ConvGeometry& geo, const TripleView& v, double w, const TripleGrad& g) {
  const auto s = v.subject, p = v.predicate, o = v.object, conv = v.conv;
  std::vector<double> pre;
  auto h = conve_hidden(geo, s, p, conv, &pre);
  const std::size_t k = geo.dense_out;
  std::vector<double> z(k);
  double out = 0;
  for (std::size_t j = 0; j < k; ++j) {
    z[j] = conv[geo.dense_bias_offset() + j];
    for (std::size_t m = 0; m < h.size(); ++m) z[j] += h[m] * conv[geo.dense_offset() + m * k + j];
    out += z[j] * o[j];
    g.object[j] += w * z[j];
    g.conv[geo.dense_bias_offset() + j] += w * o[j];
  }
  std::vector<double> dh(h.size(), 0.0);
  for (std::size_t m = 0; m < h.size(); ++m) {
    const std::size_t row = geo.dense_offset() + m * k;
    for (std::size_t j = 0; j < k; ++j) {
      g.conv[row + j] += w * h[m] * o[j];
      dh[m] += conv[row + j] * o[j];
    }
  }
  const std::size_t half = geo.image_rows / 2;
  for (std::size_t f = 0; f < geo.filters; ++f) {
    const std::size_t wo = geo.filter_offset() + f * geo.filter_rows * geo.filter_cols;
    for (std::size_t y = 0; y < geo.out_rows; ++y) {
      for (std::size_t x = 0; x < geo.out_cols; ++x) {
        const std::size_t m = (f * geo.out_rows + y) * geo.out_cols + x;
        if (pre[m] <= 0) continue;
        const double d = w * dh[m];
        g.conv[geo.filter_bias_offset() + f] += d;
        for (std::size_t dy = 0; dy < geo.filter_rows; ++dy) {
          for (std::size_t dx = 0; dx < geo.filter_cols; ++dx) {
            const std::size_t r = y + dy, c = x + dx;
            g.conv[wo + dy * geo.filter_cols + dx] += d * conve_pixel(geo, s, p, r, c);
            const double dimg = d * conv[wo + dy * geo.filter_cols + dx];
            if (r < half)
              g.subject[r * geo.image_cols + c] += dimg;
            else
              g.predicate[(r - half) * geo.image_cols + c] += dimg;
          }
        }
      }
    }
  }
  return out;
}

}  // namespace

double accumulate_gradient(const KgeConfig& c, const TripleView& v, double weight, const TripleGrad& grad) {
  switch (c.model) {
    case ModelKind::DistMult: return grad_distmult(v, weight, grad);
    case ModelKind::ComplEx: return grad_complex(v, weight, grad);
    case ModelKind::HolE: return grad_hole(v, weight, grad);
    case ModelKind::TransE: return grad_transe(v, c.norm_order, weight, grad);
    case ModelKind::RotatE: return grad_rotate(v, c.norm_order, weight, grad);
    case ModelKind::pRotatE: return grad_protate(v, c.norm_order, c.modulus_constraint, weight, grad);
    case ModelKind::HAKE: return grad_hake(v, c.norm_order, weight, grad);
    case ModelKind::ConvKB: return grad_convkb(conv_geometry(c), v, weight, grad);
    case ModelKind::ConvE: return grad_conve(conv_geometry(c), v, weight, grad);
  }
  return 0.0;
}

ScoreGradients score_gradients(const KgeConfig& c, const EmbeddingTable& t, const Triple& triple) {
  auto v = view(t, triple);
  ScoreGradients out;
  out.subject.assign(v.subject.size(), 0.0);
  out.predicate.assign(v.predicate.size(), 0.0);
  out.object.assign(v.object.size(), 0.0);
  out.conv.assign(v.conv.size(), 0.0);
  out.score = accumulate_gradient(c, v, 1.0, {out.subject, out.predicate, out.object, out.conv});
  return out;
}

// --- Checkpoints ----------------------------------------------------------------

namespace {

constexpr std::string_view kMagic = "kge-ckpt";
constexpr int kVersion = 1;

void append_row(std::string& out, std::span<const double> row) {
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (j) out += ' ';
    out += detail::format_double(row[j]);
  }
  out += '\n';
}

std::vector<double> parse_row(std::string_view line, std::size_t want, std::size_t line_no) {
  std::vector<double> out;
  out.reserve(want);
  for (auto tok : detail::split(detail::trim(line), ' ')) {
    if (tok.empty()) continue;
    auto v = detail::parse_double(tok);
    if (!v || !std::isfinite(*v)) throw ParseError("invalid number in checkpoint", line_no);
    out.push_back(*v);
  }
  if (out.size() != want)
    throw ParseError("expected " + std::to_string(want) + " values, found " + std::to_string(out.size()), line_no);
  return out;
}

}  // namespace

std::string serialize_checkpoint(const EmbeddingTable& t) {
  std::string out;
  out += std::string(kMagic) + ' ' + std::to_string(kVersion) + ' ' + std::string(to_string(t.model)) + ' ' +
         std::to_string(t.k) + ' ' + std::to_string(t.entities.rows()) + ' ' + std::to_string(t.relations.rows()) +
         ' ' + std::string(to_string(t.representation())) + '\n';
  for (std::size_t r = 0; r < t.entities.rows(); ++r) append_row(out, t.entities.row(r));
  for (std::size_t r = 0; r < t.relations.rows(); ++r) append_row(out, t.relations.row(r));
  if (!t.conv.empty()) {
    out += "conv " + std::to_string(t.conv.size()) + '\n';
    append_row(out, t.conv);
  }
  return out;
}

EmbeddingTable parse_checkpoint(std::string_view text) {
  auto ls = detail::lines(text);
  if (ls.empty()) throw ParseError("empty checkpoint", 0);
  std::istringstream header{std::string(ls[0])};
  std::string magic, model, repr;
  int version = 0;
  long long k = 0, ne = 0, nr = 0;
  if (!(header >> magic >> version >> model >> k >> ne >> nr >> repr) || magic != kMagic)
    throw ParseError("not a KGE checkpoint header", 1);
  if (version != kVersion) throw ParseError("unsupported KGE checkpoint version " + std::to_string(version), 1);
  KgeConfig cfg;
  try {
    cfg.model = parse_model_kind(model);
    if (parse_representation(repr) != representation(cfg.model))
      throw ParseError("representation does not match model", 1);
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), 1);
  }
  if (k < 1 || ne < 1 || nr < 1) throw ParseError("invalid checkpoint dimensions", 1);
  cfg.k = static_cast<int>(k);

  EmbeddingTable t;
  t.model = cfg.model;
  t.k = cfg.k;
  t.entities = Matrix(static_cast<std::size_t>(ne), entity_width(cfg));
  t.relations = Matrix(static_cast<std::size_t>(nr), relation_width(cfg));
  std::size_t line = 1;
  auto read_matrix = [&](Matrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r, ++line) {
      if (line >= ls.size()) throw ParseError("checkpoint truncated", line + 1);
      auto vals = parse_row(ls[line], m.cols(), line + 1);
      std::copy(vals.begin(), vals.end(), m.row(r).begin());
    }
  };
  read_matrix(t.entities);
  read_matrix(t.relations);
  if (family(cfg.model) == ModelFamily::Convolutional) {
    if (line + 1 >= ls.size()) throw ParseError("checkpoint truncated: missing convolution block", line + 1);
    std::istringstream conv_header{std::string(ls[line])};
    std::string tag;
    long long count = 0;
    if (!(conv_header >> tag >> count) || tag != "conv" || count < 1)
      throw ParseError("expected 'conv <count>'", line + 1);
    t.conv = parse_row(ls[line + 1], static_cast<std::size_t>(count), line + 2);
    line += 2;
  }
  for (; line < ls.size(); ++line)
    if (!detail::trim(ls[line]).empty()) throw ParseError("trailing data in checkpoint", line + 1);
  return t;
}

void save_checkpoint(const EmbeddingTable& t, const std::filesystem::path& path) {
  detail::write_file(path, serialize_checkpoint(t));
}

EmbeddingTable load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(detail::read_file(path)); }

}  // namespace toxkge::kge
