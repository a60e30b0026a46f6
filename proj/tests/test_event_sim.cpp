#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "fea/error.hpp"
#include "fea/event_sim.hpp"
#include "support.hpp"

namespace fea {
namespace {

FrameSequence two_level(float a, float b, int64_t gap) {
  FrameSequence s;
  s.width = s.height = 1;
  s.frames = {Frame{0, {a}}, Frame{gap, {b}}};
  return s;
}

TEST(Simulator, ConstantFramesEmitNothing) {
  Rng rng(1);
  FrameSequence s = test::random_frames(rng, 5, 4, 1);
  for (int i = 1; i < 6; ++i) s.frames.push_back(Frame{s.frames[0].t + 100 * i, s.frames[0].pixels});
  EXPECT_TRUE(simulate_events(s, SimConfig{}).events.empty());
}

TEST(Simulator, RampCrossesAtFortyAndEightyPercent) {
  SimConfig cfg;
  const float hi = 0.5f;
  // Start at I = 0, so L starts at ln(eps); pick C so the gap spans 2.5 C.
  cfg.contrast_threshold = (std::log(static_cast<double>(hi) + cfg.eps) - std::log(cfg.eps)) / 2.5;
  const EventStream s = simulate_events(two_level(0.0f, hi, 1000), cfg);
  ASSERT_EQ(s.events.size(), 2u);
  EXPECT_EQ(s.events[0].p, 1);
  EXPECT_EQ(s.events[1].p, 1);
  EXPECT_NEAR(static_cast<double>(s.events[0].t), 400.0, 1.0);
  EXPECT_NEAR(static_cast<double>(s.events[1].t), 800.0, 1.0);

  const EventStream o = test::dense_oracle(two_level(0.0f, hi, 1000), cfg);
  ASSERT_EQ(o.events.size(), 2u);
  for (int i = 0; i < 2; ++i) EXPECT_LE(std::abs(o.events[i].t - s.events[i].t), 1);
}

TEST(Simulator, MatchesDenseOracleOnRandomSequences) {
  Rng rng(2024);
  SimConfig cfg;
  for (int trial = 0; trial < 50; ++trial) {
    const FrameSequence f = test::continuous_frames(rng, 4, 4, 10);
    const test::PixelEvents got = test::by_pixel(simulate_events(f, cfg));
    const test::PixelEvents want = test::by_pixel(test::dense_oracle(f, cfg));
    ASSERT_EQ(got.size(), want.size()) << "trial " << trial;
    for (const auto& [px, evs] : want) {
      const auto& g = got.at(px);
      ASSERT_EQ(g.size(), evs.size()) << "trial " << trial;
      for (size_t i = 0; i < evs.size(); ++i) {
        EXPECT_EQ(g[i].p, evs[i].p);
        EXPECT_LE(std::abs(g[i].t - evs[i].t), 1);
      }
    }
  }
}

TEST(Simulator, ParallelMatchesSerial) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const FrameSequence f = test::random_frames(rng, 17, 9, 6);
    EXPECT_EQ(simulate_events(f, SimConfig{}), simulate_events_serial(f, SimConfig{}));
  }
}

TEST(Simulator, TimeReversalNegatesPolarity) {
  // Two frames keep every pixel monotone, where reversal is an exact mirror.
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const FrameSequence f = test::random_frames(rng, 6, 5, 2);
    FrameSequence r = f;
    std::reverse(r.frames.begin(), r.frames.end());
    const int64_t end = f.frames.back().t + f.frames.front().t;
    for (Frame& fr : r.frames) fr.t = end - fr.t;
    const EventStream a = simulate_events(f, SimConfig{});
    const EventStream b = simulate_events(r, SimConfig{});
    ASSERT_EQ(a.events.size(), b.events.size());
    int on_a = 0, on_b = 0;
    for (const Event& e : a.events) on_a += e.p > 0;
    for (const Event& e : b.events) on_b += e.p < 0;
    EXPECT_EQ(on_a, on_b);
  }
}

TEST(Simulator, CountNonIncreasingInThreshold) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const FrameSequence f = test::random_frames(rng, 4, 4, 8);
    size_t prev = std::numeric_limits<size_t>::max();
    for (double c : {0.05, 0.1, 0.2, 0.35, 0.5, 1.0}) {
      SimConfig cfg;
      cfg.contrast_threshold = c;
      const size_t n = simulate_events(f, cfg).events.size();
      EXPECT_LE(n, prev) << "C=" << c;
      prev = n;
    }
  }
}

TEST(Simulator, EventsTrackTheLogSignal) {
  // After each event the reference moves by exactly C, and the signal at the
  // event time sits on the new reference (up to one microsecond of slope).
  Rng rng(8);
  SimConfig cfg;
  const FrameSequence f = test::random_frames(rng, 4, 4, 10);
  for (const auto& [px, evs] : test::by_pixel(simulate_events(f, cfg))) {
    const size_t idx = static_cast<size_t>(px.second) * 4 + px.first;
    auto level_at = [&](double t, double& slope) {
      for (size_t k = 0; k + 1 < f.frames.size(); ++k) {
        const double ta = f.frames[k].t, tb = f.frames[k + 1].t;
        if (t > tb) continue;
        const double la = std::log(f.frames[k].pixels[idx] + cfg.eps), lb = std::log(f.frames[k + 1].pixels[idx] + cfg.eps);
        slope = (lb - la) / (tb - ta);
        return la + (lb - la) * (t - ta) / (tb - ta);
      }
      return 0.0;
    };
    double ref = std::log(f.frames[0].pixels[idx] + cfg.eps);
    for (const Event& e : evs) {
      ref += e.p * cfg.contrast_threshold;
      double slope = 0.0;
      const double l = level_at(static_cast<double>(e.t), slope);
      EXPECT_NEAR(l, ref, std::abs(slope) * 1.0 + 1e-9);
    }
  }
}

TEST(Simulator, RefractoryPeriodIsRespected) {
  Rng rng(9);
  SimConfig cfg;
  cfg.refractory_us = 300;
  const FrameSequence f = test::random_frames(rng, 4, 4, 10);
  for (const auto& [px, evs] : test::by_pixel(simulate_events(f, cfg))) {
    for (size_t i = 1; i < evs.size(); ++i) EXPECT_GE(evs[i].t - evs[i - 1].t, 299);
  }
  EXPECT_LE(simulate_events(f, cfg).events.size(), simulate_events(f, SimConfig{}).events.size());
}

TEST(Simulator, RejectsBadInput) {
  Rng rng(10);
  EXPECT_THROW(simulate_events(test::random_frames(rng, 2, 2, 1), SimConfig{}), Error);
  SimConfig bad;
  bad.contrast_threshold = 0.0;
  EXPECT_THROW(simulate_events(test::random_frames(rng, 2, 2, 3), bad), Error);
  try {
    simulate_events(test::random_frames(rng, 2, 2, 1), SimConfig{});
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TooFewFrames);
  }
}

}  // namespace
}  // namespace fea
