#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "support.hpp"
#include "toxkge/error.hpp"
#include "toxkge/kge.hpp"

using namespace toxkge;
using namespace toxkge::kge;
using V = std::vector<double>;

namespace {

constexpr double kPi = std::numbers::pi;

KgeConfig cfg(ModelKind m, int k, int n = 2) {
  KgeConfig c;
  c.model = m;
  c.k = k;
  c.norm_order = n;
  return c;
}

}  // namespace

TEST_CASE("DistMult") {
  V s{1, 2}, p{3, 4}, o{5, 6}, z{0, 0};
  CHECK(score_distmult(s, p, o) == 63.0);
  CHECK(score_distmult(z, p, o) == 0.0);
  CHECK(score_distmult(s, p, o) == score_distmult(o, p, s));

  EmbeddingTable t{ModelKind::DistMult, 2, Matrix(2, 2), Matrix(1, 2), {}};
  std::copy(s.begin(), s.end(), t.entities.row(0).begin());
  std::copy(o.begin(), o.end(), t.entities.row(1).begin());
  std::copy(p.begin(), p.end(), t.relations.row(0).begin());
  auto g = score_gradients(cfg(ModelKind::DistMult, 2), t, {0, 0, 1});
  CHECK(g.score == 63.0);
  CHECK(g.subject == V{15, 24});
  CHECK(g.object == V{3, 8});

  EmbeddingTable zero{ModelKind::DistMult, 2, Matrix(2, 2), Matrix(1, 2), {}};
  for (double x : score_gradients(cfg(ModelKind::DistMult, 2), zero, {0, 0, 1}).subject) CHECK(x == 0.0);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 500; ++i) {
    V a(5), b(5), c(5);
    for (int j = 0; j < 5; ++j) a[j] = u(rng), b[j] = u(rng), c[j] = u(rng);
    CHECK(score_distmult(a, b, c) == score_distmult(c, b, a));
  }
}

TEST_CASE("ComplEx") {
  CHECK(score_complex(V{1, 0, 2, 0}, V{3, 0, 4, 0}, V{5, 0, 6, 0}) == 63.0);
  CHECK(score_complex(V{0, 1}, V{0, 1}, V{0, 1}) == 0.0);
  CHECK(score_complex(V{0, 0}, V{0, 0}, V{0, 0}) == 0.0);
  // Re(s * p * conj(o)) through std::complex.
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 1000; ++i) {
    const int k = 1 + i % 8;
    V s(2 * k), p(2 * k), o(2 * k), sr(k), pr(k), orr(k);
    std::complex<double> want = 0;
    for (int j = 0; j < k; ++j) {
      sr[j] = s[2 * j] = u(rng);
      pr[j] = p[2 * j] = u(rng);
      orr[j] = o[2 * j] = u(rng);
    }
    CHECK(std::abs(score_complex(s, p, o) - score_distmult(sr, pr, orr)) <= 1e-12);
    for (int j = 0; j < k; ++j) s[2 * j + 1] = u(rng), p[2 * j + 1] = u(rng), o[2 * j + 1] = u(rng);
    for (int j = 0; j < k; ++j)
      want += std::complex<double>(s[2 * j], s[2 * j + 1]) * std::complex<double>(p[2 * j], p[2 * j + 1]) *
              std::conj(std::complex<double>(o[2 * j], o[2 * j + 1]));
    CHECK(score_complex(s, p, o) == doctest::Approx(want.real()).epsilon(1e-12));
  }
}

TEST_CASE("HolE matches direct circular correlation") {
  CHECK(score_hole(V{2}, V{2}, V{2}) == 8.0);
  CHECK(score_hole(V{0, 0, 0}, V{0, 0, 0}, V{0, 0, 0}) == 0.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k = 1; k <= 64; ++k)
    for (int rep = 0; rep < 5; ++rep) {
      V s(k), p(k), o(k);
      for (int j = 0; j < k; ++j) s[j] = u(rng), p[j] = u(rng), o[j] = u(rng);
      auto c = testing::direct_correlation(s, o);
      double want = 0;
      for (int j = 0; j < k; ++j) want += p[j] * c[j];
      CHECK(std::abs(score_hole(s, p, o) - want) <= 1e-8);
    }
}

TEST_CASE("TransE") {
  CHECK(score_transe(V{1, 2}, V{3, 4}, V{4, 6}, 2) == 0.0);
  CHECK(score_transe(V{0, 0}, V{3, 4}, V{0, 0}, 2) == 5.0);
  CHECK(score_transe(V{0, 0}, V{3, 4}, V{0, 0}, 1) == 7.0);
}

TEST_CASE("RotatE") {
  CHECK(score_rotate(V{1, 0}, V{kPi / 2}, V{0, 1}, 2) == doctest::Approx(0.0));
  CHECK(score_rotate(V{0, 0}, V{0}, V{0, 0}, 2) == 0.0);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 300; ++i) {
    const int k = 1 + i % 8, n = 1 + i % 2;
    V s(2 * k), o(2 * k), zero(k, 0.0), diff(2 * k);
    for (int j = 0; j < 2 * k; ++j) s[j] = u(rng), o[j] = u(rng), diff[j] = s[j] - o[j];
    CHECK(std::abs(score_rotate(s, zero, o, n) - testing::lp_norm(diff, n)) <= 1e-12);
  }
}

TEST_CASE("pRotatE") {
  CHECK(score_protate(V{0.3}, V{0.4}, V{0.7}, 2, 1.0) == doctest::Approx(0.0));
  CHECK(score_protate(V{0}, V{kPi}, V{0}, 2, 1.0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(score_protate(V{0}, V{kPi / 3}, V{0}, 2, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(score_protate(V{0}, V{kPi}, V{0}, 1, 0.5) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("HAKE") {
  // rows: moduli then phases
  CHECK(score_hake(V{2, 0.1}, V{3, 0.2}, V{6, 0.3}, 2) == doctest::Approx(0.0));
  CHECK(score_hake(V{2, 0}, V{3, 0}, V{5, 0}, 2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(score_hake(V{2, 0}, V{3, kPi}, V{6, 0}, 2) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ConvKB") {
  KgeConfig c = cfg(ModelKind::ConvKB, 2);
  c.conv_filters = 1;
  auto g = conv_geometry(c);
  CHECK(g.hidden() == 2);
  V conv(g.param_count(), 0.0);
  CHECK(score_convkb(g, V{1, 0}, V{1, 0}, V{1, 0}, conv) == 0.0);
  for (std::size_t i = 0; i < 3; ++i) conv[i] = 1;
  for (std::size_t i = 0; i < g.hidden(); ++i) conv[g.dense_offset() + i] = 1;
  CHECK(score_convkb(g, V{1, 0}, V{1, 0}, V{1, 0}, conv) == 3.0);
  // negative pre-activation is clipped
  CHECK(score_convkb(g, V{-1, 1}, V{-1, 0}, V{-1, 0}, conv) == 1.0);
}

TEST_CASE("ConvE") {
  KgeConfig c = cfg(ModelKind::ConvE, 4);
  c.conv_filters = 1;
  c.conv_filter_rows = 2;
  c.conv_filter_cols = 2;
  auto g = conv_geometry(c);
  REQUIRE(g.image_rows == 4);
  REQUIRE(g.image_cols == 2);
  REQUIRE(g.hidden() == 3);
  REQUIRE(g.dense_out == 4);

  V s{0.1, -0.2, 0.3, 0.4}, p{-0.5, 0.6, 0.7, -0.8}, o{1.0, -1.0, 0.5, 2.0};
  V zero(g.param_count(), 0.0);
  CHECK(score_conve(g, s, p, o, zero) == 0.0);

  V conv(g.param_count());
  for (std::size_t i = 0; i < conv.size(); ++i) conv[i] = 0.01 * static_cast<double>((i * 7) % 11) - 0.05;
  // Hand-rolled: stack s over p as a 4x2 image, slide the 2x2 filter, ReLu, project to k, dot with o.
  const double img[4][2] = {{s[0], s[1]}, {s[2], s[3]}, {p[0], p[1]}, {p[2], p[3]}};
  double want = 0;
  double out[4] = {conv[g.dense_bias_offset()], conv[g.dense_bias_offset() + 1], conv[g.dense_bias_offset() + 2],
                   conv[g.dense_bias_offset() + 3]};
  for (int y = 0; y < 3; ++y) {
    double h = conv[4];
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) h += conv[dy * 2 + dx] * img[y + dy][dx];
    h = std::max(0.0, h);
    for (int j = 0; j < 4; ++j) out[j] += h * conv[5 + y * 4 + j];
  }
  for (int j = 0; j < 4; ++j) want += out[j] * o[j];
  CHECK(std::abs(score_conve(g, s, p, o, conv) - want) <= 1e-10);

  V o2 = o;
  for (double& x : o2) x *= 2;
  CHECK(score_conve(g, s, p, o2, conv) == doctest::Approx(2 * score_conve(g, s, p, o, conv)).epsilon(1e-12));

  KgeConfig bad = c;
  bad.conve_reshape_rows = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("score rejects a representation mismatch") {
  EmbeddingTable t = init_embeddings(cfg(ModelKind::DistMult, 4), 2, 1, 1);
  CHECK_THROWS_AS(score(cfg(ModelKind::ComplEx, 4), t, {0, 0, 1}), DataError);
}

TEST_CASE("init_embeddings shapes, ranges and determinism") {
  for (ModelKind m : kAllModels) {
    KgeConfig c = cfg(m, 6);
    auto a = init_embeddings(c, 5, 3, 42);
    CHECK(a == init_embeddings(c, 5, 3, 42));
    CHECK_FALSE(a == init_embeddings(c, 5, 3, 43));
    CHECK(a.entities.rows() == 5);
    CHECK(a.relations.rows() == 3);
    CHECK(a.entities.cols() == entity_width(c));
    CHECK(a.relations.cols() == relation_width(c));
    CHECK(a.conv.size() == (family(m) == ModelFamily::Convolutional ? conv_geometry(c).param_count() : 0));
  }
  CHECK(entity_width(cfg(ModelKind::DistMult, 6)) == 6);
  CHECK(entity_width(cfg(ModelKind::ComplEx, 6)) == 12);
  CHECK(entity_width(cfg(ModelKind::HAKE, 6)) == 12);
  CHECK(relation_width(cfg(ModelKind::RotatE, 6)) == 6);

  auto t = init_embeddings(cfg(ModelKind::TransE, 16), 50, 4, 7);
  const double bound = 6.0 / std::sqrt(16.0);
  for (std::size_t r = 0; r < t.entities.rows(); ++r)
    for (double x : t.entities.row(r)) CHECK(std::abs(x) <= bound);
  auto ph = init_embeddings(cfg(ModelKind::pRotatE, 16), 50, 4, 7);
  for (std::size_t r = 0; r < ph.entities.rows(); ++r)
    for (double x : ph.entities.row(r)) CHECK((x >= 0 && x < 2 * kPi));
}

TEST_CASE("score gradients match central differences") {
  std::mt19937_64 rng(5);
  for (ModelKind m : kAllModels)
    for (int n : {1, 2}) {
      int checked = 0;
      while (checked < 100) {
        KgeConfig c = cfg(m, 1 + static_cast<int>(rng() % 8), n);
        c.conv_filters = 2;
        auto t = testing::random_table(c, 2, 1, rng);
        const Triple tr{0, 0, 1};
        if (testing::kink_distance(c, view(t, tr)) < 1e-4) continue;
        auto g = score_gradients(c, t, tr);
        auto f = [&] { return score(c, t, tr); };
        auto check_block = [&](std::span<double> params, const V& grad) {
          REQUIRE(params.size() == grad.size());
          for (std::size_t i = 0; i < params.size(); ++i) {
            double fd = testing::central_difference(&params[i], 1e-5, f);
            INFO(to_string(m), " n=", n, " k=", c.k, " i=", i);
            CHECK(testing::relative_error(grad[i], fd) <= 1e-4);
          }
        };
        check_block(t.entities.row(0), g.subject);
        check_block(t.relations.row(0), g.predicate);
        check_block(t.entities.row(1), g.object);
        check_block(t.conv, g.conv);
        ++checked;
      }
    }
}

TEST_CASE("self-loop gradients split by position") {
  std::mt19937_64 rng(6);
  KgeConfig c = cfg(ModelKind::TransE, 4);
  auto t = testing::random_table(c, 1, 1, rng);
  auto g = score_gradients(c, t, {0, 0, 0});
  // s and o coincide, so the two positional contributions cancel for TransE
  for (std::size_t i = 0; i < g.subject.size(); ++i) CHECK(g.subject[i] + g.object[i] == doctest::Approx(0.0));
}

TEST_CASE("geometric scores are non-negative and bias keeps the ranking") {
  std::mt19937_64 rng(7);
  for (ModelKind m : kAllModels) {
    if (!is_geometric(m)) continue;
    KgeConfig c = cfg(m, 5);
    auto t = testing::random_table(c, 6, 2, rng);
    std::vector<double> plain, biased;
    for (EntityId o = 0; o < 6; ++o) {
      double s = score(c, t, {0, 1, o});
      CHECK(s >= 0);
      plain.push_back(plausibility(c, s));
      KgeConfig b = c;
      b.bias = 7.5;
      biased.push_back(plausibility(b, s));
    }
    auto argmax = [](const V& v) { return std::max_element(v.begin(), v.end()) - v.begin(); };
    CHECK(argmax(plain) == argmax(biased));
  }
}

TEST_CASE("checkpoint round trip and errors") {
  for (ModelKind m : kAllModels) {
    KgeConfig c = cfg(m, 4);
    auto t = init_embeddings(c, 3, 2, 9);
    auto text = serialize_checkpoint(t);
    auto back = parse_checkpoint(text);
    CHECK(back == t);
    CHECK(score(c, back, {0, 1, 2}) == score(c, t, {0, 1, 2}));
  }
  auto text = serialize_checkpoint(init_embeddings(cfg(ModelKind::DistMult, 2), 2, 1, 1));
  auto bumped = text;
  bumped.replace(bumped.find(" 1 "), 3, " 9 ");
  CHECK_THROWS_AS(parse_checkpoint(bumped), ParseError);
  CHECK_THROWS_AS(parse_checkpoint(text.substr(0, text.size() / 2)), ParseError);
  CHECK_THROWS_AS(parse_checkpoint(""), ParseError);
}
