#include <gtest/gtest.h>

#include "fea/alignment.hpp"
#include "fea/grad_check.hpp"
#include "fea/rng.hpp"

namespace fea {
namespace {

using nn::Tape;
using nn::Var;
using TD = Tensor<double>;

TD random(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  TD t(std::move(s));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

CoordinateQuery box_query() {
  CoordinateQuery q;
  q.p = {0.1, 0.2, 0.6, 0.9};
  q.p_given = true;
  return q;
}

TEST(CoordToken, MaskedHalvesContributeNothing) {
  Rng rng(1);
  Tape<double> t;
  const TD wp = random(rng, {4, 5}), wt = random(rng, {2, 5});
  CoordinateQuery q = box_query();
  q.t = {0.3, 0.4};  // present but not given
  const TD got = nn::coord_token(q, t.constant(wp), t.constant(wt)).value();
  ASSERT_EQ(got.shape(), (Shape{1, 5}));
  for (size_t c = 0; c < 5; ++c) {
    double want = 0.0;
    for (size_t i = 0; i < 4; ++i) want += q.p[i] * wp.at(i, c);
    EXPECT_NEAR(got[c], want, 1e-12);
  }

  CoordinateQuery none;
  const TD zero = nn::coord_token(none, t.constant(wp), t.constant(wt)).value();
  for (double v : zero.values()) EXPECT_EQ(v, 0.0);

  CoordinateQuery span;
  span.t = {0.25, 0.75};
  span.t_given = true;
  const TD ts = nn::coord_token(span, t.constant(wp), t.constant(wt)).value();
  for (size_t c = 0; c < 5; ++c) EXPECT_NEAR(ts[c], 0.25 * wt.at(0, c) + 0.75 * wt.at(1, c), 1e-12);
}

TEST(CoordToken, RejectsBadCoordinates) {
  CoordinateQuery q = box_query();
  q.p[2] = 1.5;
  EXPECT_THROW(validate(q), Error);
  q = box_query();
  q.p = {0.5, 0.2, 0.4, 0.9};
  EXPECT_THROW(validate(q), Error);
  CoordinateQuery s;
  s.t = {0.6, 0.6};
  s.t_given = true;
  EXPECT_THROW(validate(s), Error);
  Tape<double> t;
  EXPECT_THROW(nn::coord_token(box_query(), t.constant(TD({3, 5})), t.constant(TD({2, 5}))), Error);
}

TEST(EmbedCoordinates, AddsScaledTokenToEveryRow) {
  Rng rng(2);
  Tape<double> t;
  const TD v = random(rng, {6, 4}), coord = random(rng, {1, 4});
  const TD out = nn::embed_coordinates(t.constant(v), t.constant(coord), t.constant(TD({1}, 0.3))).value();
  for (size_t r = 0; r < 6; ++r)
    for (size_t c = 0; c < 4; ++c) EXPECT_NEAR(out.at(r, c), v.at(r, c) + 0.3 * coord[c], 1e-12);
  const TD same = nn::embed_coordinates(t.constant(v), t.constant(coord), t.constant(TD({1}))).value();
  EXPECT_EQ(same, v);
  EXPECT_THROW(nn::embed_coordinates(t.constant(v), t.constant(TD({1, 3})), t.constant(TD({1}))), Error);
}

TEST(Projector, MatchesRowwiseMlp) {
  Rng rng(3);
  Tape<double> t;
  const TD x = random(rng, {5, 3}), w1 = random(rng, {3, 4}), b1 = random(rng, {4}), w2 = random(rng, {4, 4}),
           b2 = random(rng, {4});
  const TD got =
      nn::project_tokens(t.constant(x), nn::MlpVars<double>{t.constant(w1), t.constant(b1), t.constant(w2), t.constant(b2)})
          .value();
  ASSERT_EQ(got.shape(), (Shape{5, 4}));
  for (size_t r = 0; r < 5; ++r) {
    double h[4];
    for (size_t j = 0; j < 4; ++j) {
      double a = b1[j];
      for (size_t k = 0; k < 3; ++k) a += x.at(r, k) * w1.at(k, j);
      h[j] = nn::gelu_scalar(a);
    }
    for (size_t j = 0; j < 4; ++j) {
      double a = b2[j];
      for (size_t k = 0; k < 4; ++k) a += h[k] * w2.at(k, j);
      EXPECT_NEAR(got.at(r, j), a, 1e-12);
    }
  }
}

TEST(Alignment, RegistersExpectedParameters) {
  ParamStore<float> store;
  register_alignment(store, 8, 12, 5);
  EXPECT_EQ(store.value("projector.w1").shape(), (Shape{8, 12}));
  EXPECT_EQ(store.value("projector.w2").shape(), (Shape{12, 12}));
  EXPECT_EQ(store.value("coord.w_p").shape(), (Shape{4, 12}));
  EXPECT_EQ(store.value("coord.w_t").shape(), (Shape{2, 12}));
  EXPECT_FLOAT_EQ(store.value("coord.alpha")[0], static_cast<float>(kAlphaInit));
}

TEST(Alignment, GradientsThroughProjectorAndCoordinates) {
  Rng rng(4);
  std::vector<TD> in = {random(rng, {5, 4}), random(rng, {4, 6}), random(rng, {6}), random(rng, {6, 6}),
                        random(rng, {6}),    random(rng, {4, 6}), random(rng, {2, 6}), TD({1}, 0.4)};
  TD probe({5, 6});
  for (size_t i = 0; i < probe.size(); ++i) probe[i] = (i % 2 ? -1 : 1) * rng.uniform(0.5, 1.5);
  CoordinateQuery q = box_query();
  q.t = {0.2, 0.7};
  q.t_given = true;
  nn::GraphBuilder<double> f = [&](Tape<double>& tape, const std::vector<Var<double>>& x) {
    const Var<double> v = nn::project_tokens(x[0], nn::MlpVars<double>{x[1], x[2], x[3], x[4]});
    return nn::mul(nn::embed_coordinates(v, nn::coord_token(q, x[5], x[6]), x[7]), tape.constant(probe));
  };
  const auto r = nn::grad_check<double>("alignment", f, in);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

}  // namespace
}  // namespace fea
