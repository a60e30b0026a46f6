#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fea/grad_check.hpp"
#include "fea/grounding.hpp"
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

TEST(Iou, HandCases) {
  EXPECT_NEAR(s_iou({0, 0, 2, 2}, {1, 0, 3, 2}), 1.0 / 3.0, 1e-9);
  EXPECT_NEAR(t_iou({0, 2}, {1, 3}), 1.0 / 3.0, 1e-9);
  EXPECT_NEAR(s_iou({0, 0, 1, 1}, {0.5, 0.5, 1.5, 1.5}), 0.25 / 1.75, 1e-12);
  EXPECT_EQ(s_iou({0.1, 0.2, 0.4, 0.9}, {0.1, 0.2, 0.4, 0.9}), 1.0);
  EXPECT_EQ(t_iou({0.3, 0.5}, {0.3, 0.5}), 1.0);
  EXPECT_EQ(s_iou({0, 0, 1, 1}, {1, 0, 2, 1}), 0.0);  // touching
  EXPECT_EQ(s_iou({0, 0, 1, 1}, {3, 3, 4, 4}), 0.0);
  EXPECT_EQ(t_iou({0, 1}, {1, 2}), 0.0);
  EXPECT_NEAR(s_iou({0, 0, 1, 1}, {0.2, 0.2, 0.4, 0.4}), 0.04, 1e-12);
}

TEST(Iou, SymmetricAndBounded) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    auto box = [&] {
      double a = rng.uniform(), b = rng.uniform(), c = rng.uniform(), d = rng.uniform();
      return Box{std::min(a, b), std::min(c, d), std::max(a, b), std::max(c, d)};
    };
    const Box a = box(), b = box();
    const double v = s_iou(a, b);
    EXPECT_NEAR(v, s_iou(b, a), 1e-15);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Iou, RejectsInvalid) {
  EXPECT_THROW(s_iou({0.5, 0, 0.4, 1}, {0, 0, 1, 1}), Error);
  EXPECT_THROW(s_iou({0, 0, 1, NAN}, {0, 0, 1, 1}), Error);
  EXPECT_THROW(t_iou({0.6, 0.2}, {0, 1}), Error);
  EXPECT_THROW(t_iou({0, INFINITY}, {0, 1}), Error);
}

// Generalized IoU written out directly.
double giou(double ax1, double ay1, double ax2, double ay2, double bx1, double by1, double bx2, double by2) {
  const double iw = std::max(0.0, std::min(ax2, bx2) - std::max(ax1, bx1));
  const double ih = std::max(0.0, std::min(ay2, by2) - std::max(ay1, by1));
  const double inter = iw * ih;
  const double uni = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
  const double hull = (std::max(ax2, bx2) - std::min(ax1, bx1)) * (std::max(ay2, by2) - std::min(ay1, by1));
  return inter / uni - (hull - uni) / hull;
}

double giou_1d(double a0, double a1, double b0, double b1) {
  const double inter = std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
  const double uni = (a1 - a0) + (b1 - b0) - inter;
  const double hull = std::max(a1, b1) - std::min(a0, b0);
  return inter / uni - (hull - uni) / hull;
}

TEST(GroundingLoss, MatchesDirectFormula) {
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    Prediction p, g;
    for (auto* x : {&p, &g}) {
      for (int k : {0, 1, 4}) {
        const double a = rng.uniform(0.0, 0.9), b = rng.uniform(0.0, 0.9);
        (*x)[k] = std::min(a, b);
        (*x)[k == 4 ? 5 : k + 2] = std::max(a, b) + 0.05;
      }
    }
    double l1 = 0.0;
    for (int k = 0; k < 6; ++k) l1 += std::abs(p[k] - g[k]);
    const double want = l1 + (1.0 - giou(p[0], p[1], p[2], p[3], g[0], g[1], g[2], g[3])) +
                        (1.0 - giou_1d(p[4], p[5], g[4], g[5]));
    EXPECT_NEAR(grounding_loss(p, g), want, 1e-12);
    EXPECT_GE(grounding_loss(p, g), 0.0);
  }
}

TEST(GroundingLoss, ZeroAtTargetAndAboveTwoWhenDisjoint) {
  const Prediction g = {0.2, 0.2, 0.5, 0.6, 0.1, 0.4};
  EXPECT_NEAR(grounding_loss(g, g), 0.0, 1e-12);
  const Prediction far = {0.7, 0.7, 0.9, 0.9, 0.6, 0.9};
  EXPECT_GT(grounding_loss(far, g), 2.0);
}

TEST(GroundingLoss, TapeGradientMatchesDifferences) {
  const Prediction gt = {0.2, 0.25, 0.55, 0.6, 0.1, 0.45};
  // Away from the L1 kinks, overlapping and disjoint.
  for (const TD& start : {TD::matrix(1, 6, {0.3, 0.1, 0.7, 0.5, 0.2, 0.6}), TD::matrix(1, 6, {0.7, 0.72, 0.9, 0.95, 0.6, 0.8})}) {
    nn::GraphBuilder<double> f = [&](Tape<double>&, const std::vector<Var<double>>& x) {
      return nn::grounding_loss(x[0], gt);
    };
    const auto r = nn::grad_check<double>("loss", f, {start});
    EXPECT_TRUE(r.passed) << r.max_rel_error;
  }
}

TEST(OrderPairs, SwapsOnlyUnorderedPairs) {
  Tape<double> t;
  const Var<double> raw = t.variable(TD::matrix(1, 6, {0.8, 0.1, 0.2, 0.4, 0.9, 0.3}));
  const Var<double> out = nn::order_pairs(raw);
  const TD want = TD::matrix(1, 6, {0.2, 0.1, 0.8, 0.4, 0.3, 0.9});
  EXPECT_EQ(out.value(), want);
  t.backward(nn::sum(nn::mul(out, t.constant(TD::matrix(1, 6, {1, 2, 3, 4, 5, 6})))));
  EXPECT_EQ(t.grad(raw.id()), TD::matrix(1, 6, {3, 2, 1, 4, 6, 5}));
}

TEST(Head, OutputsOrderedUnitCoordinates) {
  Rng rng(3);
  ParamStore<double> store;
  register_head(store, 6, 11);
  EXPECT_EQ(store.value("head.pool").shape(), (Shape{1, 6}));
  for (int i = 0; i < 20; ++i) {
    Tape<double> t;
    Binding<double> bind(t, store);
    const TD pred = nn::ground(t.constant(random(rng, {9, 6}, -3, 3)), bind_head(bind)).value();
    ASSERT_EQ(pred.shape(), (Shape{1, 6}));
    for (double v : pred.values()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
    EXPECT_LE(pred[0], pred[2]);
    EXPECT_LE(pred[1], pred[3]);
    EXPECT_LE(pred[4], pred[5]);
  }
  Tape<double> t;
  Binding<double> bind(t, store);
  EXPECT_THROW(nn::ground(t.constant(TD({3, 5})), bind_head(bind)), Error);
}

TEST(Head, GradientsThroughPoolingAndLoss) {
  Rng rng(4);
  const Prediction gt = {0.2, 0.25, 0.55, 0.6, 0.1, 0.45};
  std::vector<TD> in = {random(rng, {5, 4}), random(rng, {1, 4}), random(rng, {4, 4}), random(rng, {4}),
                        random(rng, {4, 2}), random(rng, {2})};
  nn::GraphBuilder<double> f = [&](Tape<double>&, const std::vector<Var<double>>& x) {
    return nn::grounding_loss(nn::ground(x[0], nn::HeadVars<double>{x[1], x[2], x[3], x[4], x[5]}), gt);
  };
  const auto r = nn::grad_check<double>("head", f, in);
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(GroundingLoss, FallsAlongLineToTarget) {
  const Prediction gt = {0.2, 0.25, 0.55, 0.6, 0.1, 0.45};
  const Prediction wrong = {0.6, 0.7, 0.95, 0.9, 0.6, 0.95};
  double prev = INFINITY;
  for (int i = 0; i < 10; ++i) {
    const double a = i / 9.0;
    Prediction p;
    for (int k = 0; k < 6; ++k) p[k] = (1 - a) * wrong[k] + a * gt[k];
    const double l = grounding_loss(p, gt);
    EXPECT_LT(l, prev) << i;
    prev = l;
  }
  EXPECT_NEAR(prev, 0.0, 1e-12);
}

TEST(GroundingLoss, DisjointPredictionHasGradient) {
  Tape<double> t;
  const Var<double> p = t.variable(TD::matrix(1, 6, {0.7, 0.72, 0.9, 0.95, 0.6, 0.8}));
  t.backward(nn::grounding_loss(p, Prediction{0.1, 0.1, 0.3, 0.3, 0.1, 0.3}));
  double norm = 0.0;
  for (double g : t.grad(p.id()).values()) {
    EXPECT_TRUE(std::isfinite(g));
    norm += g * g;
  }
  EXPECT_GT(norm, 0.0);
}

TEST(Head, ZeroParametersGiveCentreAndSingleTokenPoolsToItself) {
  Tape<double> t;
  const nn::HeadVars<double> zero{t.constant(TD({1, 4})), t.constant(TD({4, 4})), t.constant(TD({4})),
                                  t.constant(TD({4, 2})), t.constant(TD({2}))};
  const TD pred = nn::ground(t.constant(TD::matrix(2, 4, {1, 2, 3, 4, -1, 0, 2, 5})), zero).value();
  for (double v : pred.values()) EXPECT_EQ(v, 0.5);

  const TD token = TD::matrix(1, 4, {0.3, -0.2, 0.8, 0.1});
  TD w({4, 4});
  for (size_t i = 0; i < 4; ++i) w.at(i, i) = 1.0;
  const TD wp = TD::matrix(4, 2, {1, 0, 0, 0, 0, 1, 0, 0});
  const nn::HeadVars<double> pass{t.constant(TD::matrix(1, 4, {0.4, 0.1, -0.3, 2.0})), t.constant(w),
                                  t.constant(TD({4})), t.constant(wp), t.constant(TD({2}))};
  const TD out = nn::ground(t.constant(token), pass).value();
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  const double want[4] = {0.3, -0.2, 0.8, 0.1};  // both pairs already ordered
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(out[k], sig(want[k]), 1e-12);
  EXPECT_NEAR(out[4], sig(0.3), 1e-12);
  EXPECT_NEAR(out[5], sig(0.8), 1e-12);
}

}  // namespace
}  // namespace fea
