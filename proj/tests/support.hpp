#pragma once

// Test oracles shared by the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "toxkge/kge.hpp"
#include "toxkge/train.hpp"

namespace testing {

using namespace toxkge;

/// O(k^2) circular correlation: c_i = sum_j a_j b_{(i+j) mod k}.
inline std::vector<double> direct_correlation(std::span<const double> a, std::span<const double> b) {
  const std::size_t k = a.size();
  std::vector<double> c(k, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) c[i] += a[j] * b[(i + j) % k];
  return c;
}

inline double lp_norm(const std::vector<double>& x, int n) {
  double acc = 0;
  for (double v : x) acc += n == 1 ? std::abs(v) : v * v;
  return n == 1 ? acc : std::sqrt(acc);
}

/// Distance of a parameter point from the nearest non-differentiable point of
/// the raw score: |.| arguments of L1 norms, the L2 norm itself, moduli inside
/// |.|, and ReLu pre-activations.
inline double kink_distance(const kge::KgeConfig& c, const kge::TripleView& v) {
  double d = std::numeric_limits<double>::infinity();
  auto norm_kinks = [&](const std::vector<double>& x, int n) {
    if (n == 1)
      for (double e : x) d = std::min(d, std::abs(e));
    else
      d = std::min(d, lp_norm(x, 2));
  };
  const std::size_t k = static_cast<std::size_t>(c.k);
  switch (c.model) {
    case kge::ModelKind::TransE: {
      std::vector<double> x(k);
      for (std::size_t i = 0; i < k; ++i) x[i] = v.subject[i] + v.predicate[i] - v.object[i];
      norm_kinks(x, c.norm_order);
      break;
    }
    case kge::ModelKind::RotatE: {
      std::vector<double> x;
      for (std::size_t i = 0; i < k; ++i) {
        std::complex<double> s(v.subject[2 * i], v.subject[2 * i + 1]), o(v.object[2 * i], v.object[2 * i + 1]);
        auto r = s * std::polar(1.0, v.predicate[i]) - o;
        x.push_back(r.real());
        x.push_back(r.imag());
      }
      norm_kinks(x, c.norm_order);
      break;
    }
    case kge::ModelKind::pRotatE: {
      std::vector<double> x(k);
      for (std::size_t i = 0; i < k; ++i) x[i] = std::sin((v.subject[i] + v.predicate[i] - v.object[i]) / 2);
      norm_kinks(x, c.norm_order);
      break;
    }
    case kge::ModelKind::HAKE: {
      std::vector<double> m(k), ph(k);
      for (std::size_t i = 0; i < k; ++i) {
        d = std::min({d, std::abs(v.subject[i]), std::abs(v.predicate[i]), std::abs(v.object[i])});
        m[i] = std::abs(v.subject[i]) * std::abs(v.predicate[i]) - std::abs(v.object[i]);
        ph[i] = std::sin((v.subject[k + i] + v.predicate[k + i] - v.object[k + i]) / 2);
      }
      norm_kinks(m, c.norm_order);
      norm_kinks(ph, 1);
      break;
    }
    case kge::ModelKind::ConvKB: {
      auto g = kge::conv_geometry(c);
      for (std::size_t f = 0; f < g.filters; ++f)
        for (std::size_t i = 0; i < k; ++i) {
          const double* w = v.conv.data() + 3 * f;
          d = std::min(d, std::abs(w[0] * v.subject[i] + w[1] * v.predicate[i] + w[2] * v.object[i] +
                                   v.conv[g.filter_bias_offset() + f]));
        }
      break;
    }
    case kge::ModelKind::ConvE: {
      auto g = kge::conv_geometry(c);
      const std::size_t half = g.image_rows / 2;
      auto pixel = [&](std::size_t r, std::size_t col) {
        return r < half ? v.subject[r * g.image_cols + col] : v.predicate[(r - half) * g.image_cols + col];
      };
      for (std::size_t f = 0; f < g.filters; ++f)
        for (std::size_t y = 0; y < g.out_rows; ++y)
          for (std::size_t x = 0; x < g.out_cols; ++x) {
            double acc = v.conv[g.filter_bias_offset() + f];
            for (std::size_t dy = 0; dy < g.filter_rows; ++dy)
              for (std::size_t dx = 0; dx < g.filter_cols; ++dx)
                acc += v.conv[f * g.filter_rows * g.filter_cols + dy * g.filter_cols + dx] * pixel(y + dy, x + dx);
            d = std::min(d, std::abs(acc));
          }
      break;
    }
    default: break;
  }
  return d;
}

/// Random parameters for one model: coordinates U(-1,1), phases U(0,2pi).
inline kge::EmbeddingTable random_table(const kge::KgeConfig& c, std::size_t entities, std::size_t relations,
                                        std::mt19937_64& rng) {
  auto t = kge::init_embeddings(c, entities, relations, rng());
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  const auto rep = kge::representation(c.model);
  const std::size_t k = static_cast<std::size_t>(c.k);
  for (auto* m : {&t.entities, &t.relations}) {
    for (std::size_t r = 0; r < m->rows(); ++r) {
      auto row = m->row(r);
      for (std::size_t j = 0; j < row.size(); ++j) {
        bool phase = rep == kge::Representation::Phase || (rep == kge::Representation::ModulusPhase && j >= k) ||
                     (c.model == kge::ModelKind::RotatE && m == &t.relations);
        if (!phase) row[j] = coord(rng);
      }
    }
  }
  for (double& w : t.conv) w = coord(rng);
  return t;
}

/// Relative error with a floor on the denominator.
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-3});
}

/// Central difference of f with respect to *x.
template <class F>
double central_difference(double* x, double h, F&& f) {
  const double saved = *x;
  *x = saved + h;
  const double up = f();
  *x = saved - h;
  const double down = f();
  *x = saved;
  return (up - down) / (2 * h);
}

/// Smallest distance from a hinge corner over the loss terms of one batch.
inline double hinge_kink_distance(const kge::KgeConfig& m, const train::LossConfig& l, const train::KgeParams& p,
                                  std::span<const Triple> pos, std::span<const Triple> neg) {
  auto plaus = [&](const Triple& t) {
    kge::TripleView v{p.entities->row(static_cast<std::size_t>(t.subject)),
                      p.relations->row(static_cast<std::size_t>(t.predicate)),
                      p.entities->row(static_cast<std::size_t>(t.object)), p.conv};
    return kge::plausibility(m, kge::score(m, v));
  };
  double d = std::numeric_limits<double>::infinity();
  const std::size_t eta = static_cast<std::size_t>(l.negatives);
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const double sp = plaus(pos[i]);
    for (std::size_t j = 0; j < eta; ++j) {
      const double sn = plaus(neg[i * eta + j]);
      if (l.kind == train::LossKind::PairwiseHinge) d = std::min(d, std::abs(l.margin + sn - sp));
      if (l.kind == train::LossKind::PointwiseHinge) d = std::min(d, std::abs(l.margin + sn));
    }
    if (l.kind == train::LossKind::PointwiseHinge) d = std::min(d, std::abs(l.margin - sp));
  }
  return d;
}

struct GradientCheck {
  double max_relative_error{0};
  bool skipped{false};  ///< the draw sat too close to a kink
};

/// Compares the analytic batch-loss gradient against central differences
/// over every parameter of `t`. Skips draws within `margin` of a kink.
inline GradientCheck check_batch_gradient(const kge::KgeConfig& m, const train::LossConfig& l,
                                          kge::EmbeddingTable& t, std::span<const Triple> pos,
                                          std::span<const Triple> neg, double margin = 1e-4, double h = 1e-5) {
  GradientCheck out;
  train::KgeParams p{&t.entities, &t.relations, t.conv};
  double kink = hinge_kink_distance(m, l, p, pos, neg);
  for (const auto* batch : {&pos, &neg})
    for (const Triple& tr : *batch) kink = std::min(kink, kink_distance(m, kge::view(t, tr)));
  if (kink < margin) {
    out.skipped = true;
    return out;
  }
  Matrix ge(t.entities.rows(), t.entities.cols()), gr(t.relations.rows(), t.relations.cols());
  std::vector<double> gc(t.conv.size(), 0.0);
  train::KgeGrads g{&ge, &gr, gc};
  train::kge_batch_loss(m, l, p, pos, neg, 1.0, &g);
  auto f = [&] { return train::kge_batch_loss(m, l, p, pos, neg); };
  auto block = [&](std::span<double> params, std::span<const double> grad) {
    for (std::size_t i = 0; i < params.size(); ++i)
      out.max_relative_error =
          std::max(out.max_relative_error, relative_error(grad[i], central_difference(&params[i], h, f)));
  };
  block(t.entities.values(), ge.values());
  block(t.relations.values(), gr.values());
  block(t.conv, gc);
  return out;
}

}  // namespace testing
