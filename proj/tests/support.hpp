#pragma once

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>

#include "fea/event_sim.hpp"
#include "fea/io_formats.hpp"
#include "fea/rng.hpp"

namespace fea::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = "fea_" + tag;
    if (info != nullptr) name += std::string("_") + info->test_suite_name() + "_" + info->name();
    path_ = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

// Random frames with 8-bit levels and strictly increasing times.
inline FrameSequence random_frames(Rng& rng, int width, int height, int count, int64_t max_gap = 2000) {
  FrameSequence s;
  s.width = width;
  s.height = height;
  int64_t t = rng.integer(0, 50);
  for (int i = 0; i < count; ++i) {
    Frame f;
    f.t = t;
    for (int k = 0; k < width * height; ++k) f.pixels.push_back(pixel_from_byte(static_cast<uint8_t>(rng.integer(0, 255))));
    s.frames.push_back(std::move(f));
    t += rng.integer(1, max_gap);
  }
  return s;
}

// Intensities drawn from a continuum. With 8-bit levels a pixel that
// revisits a level lands exactly on a reference crossing, and the tie can
// go either way between two correct implementations.
inline FrameSequence continuous_frames(Rng& rng, int width, int height, int count, int64_t max_gap = 2000) {
  FrameSequence s = random_frames(rng, width, height, count, max_gap);
  for (Frame& f : s.frames)
    for (float& v : f.pixels) v = static_cast<float>(rng.uniform(0.0, 1.0));
  return s;
}

inline EventStream random_events(Rng& rng, int width, int height, int count, int64_t t_max) {
  EventStream s;
  s.width = width;
  s.height = height;
  for (int i = 0; i < count; ++i) {
    s.events.push_back(Event{rng.integer(0, t_max), static_cast<int32_t>(rng.integer(0, width - 1)),
                             static_cast<int32_t>(rng.integer(0, height - 1)),
                             static_cast<int8_t>(rng.uniform() < 0.5 ? -1 : 1)});
  }
  std::sort(s.events.begin(), s.events.end(), event_before);
  return s;
}

inline std::vector<SceneAnnotation> random_annotations(Rng& rng) {
  std::vector<SceneAnnotation> anns;
  const int n = static_cast<int>(rng.integer(0, 5));
  for (int k = 0; k < n; ++k) {
    SceneAnnotation a;
    a.query_id = static_cast<int>(rng.integer(0, 100000));
    const double x1 = rng.uniform(0.0, 0.5), y1 = rng.uniform(0.0, 0.5), t0 = rng.uniform(0.0, 0.5);
    a.bbox = {x1, y1, rng.uniform(0.5, 1.0), rng.uniform(0.5, 1.0)};
    a.interval = {t0, rng.uniform(0.5, 1.0)};
    anns.push_back(a);
  }
  return anns;
}

inline Checkpoint random_checkpoint(Rng& rng) {
  Checkpoint c;
  const int n = static_cast<int>(rng.integer(0, 6));
  for (int k = 0; k < n; ++k) {
    NamedTensor t;
    t.name = "group" + std::to_string(k) + ".w";
    size_t total = 1;
    for (int d = 0, r = static_cast<int>(rng.integer(0, 3)); d < r; ++d) {
      t.shape.push_back(static_cast<uint32_t>(rng.integer(1, 5)));
      total *= t.shape.back();
    }
    for (size_t j = 0; j < total; ++j) t.data.push_back(static_cast<float>(rng.uniform(-1e3, 1e3)));
    c.add(std::move(t));
  }
  return c;
}

using PixelEvents = std::map<std::pair<int, int>, std::vector<Event>>;

inline PixelEvents by_pixel(const EventStream& s) {
  PixelEvents out;
  for (const Event& e : s.events) out[{e.x, e.y}].push_back(e);
  return out;
}

// Steps every pixel through time at 1 us. A crossing found at step t lies
// in (t-1, t], so it is reported at t-1.
inline EventStream dense_oracle(const FrameSequence& frames, const SimConfig& cfg) {
  EventStream out;
  out.width = frames.width;
  out.height = frames.height;
  for (int y = 0; y < frames.height; ++y) {
    for (int x = 0; x < frames.width; ++x) {
      const size_t idx = static_cast<size_t>(y) * frames.width + x;
      auto level = [&](size_t k) { return std::log(static_cast<double>(frames.frames[k].pixels[idx]) + cfg.eps); };
      double ref = level(0);
      for (size_t k = 0; k + 1 < frames.frames.size(); ++k) {
        const int64_t ta = frames.frames[k].t, tb = frames.frames[k + 1].t;
        const double la = level(k), lb = level(k + 1);
        for (int64_t t = ta + 1; t <= tb; ++t) {
          const double l = la + (lb - la) * static_cast<double>(t - ta) / static_cast<double>(tb - ta);
          while (l >= ref + cfg.contrast_threshold) {
            out.events.push_back(Event{t - 1, x, y, 1});
            ref += cfg.contrast_threshold;
          }
          while (l <= ref - cfg.contrast_threshold) {
            out.events.push_back(Event{t - 1, x, y, -1});
            ref -= cfg.contrast_threshold;
          }
        }
      }
    }
  }
  return out;
}

}  // namespace fea::test
