#pragma once

// Synthetic moving-square scenes with exact grounding annotations.
//
// A bright square slides linearly over a dark background and is visible
// only during [t0, t1). The scene is rendered at 1 ms steps; events come
// from running the threshold simulator over every render step, while the
// frame camera keeps only every 250 ms step. The annotation box is the
// square's rendered box averaged over the visible render steps.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fea/event_sim.hpp"
#include "fea/io_formats.hpp"

namespace fea {

struct GenConfig {
  int width = 64;
  int height = 64;
  int64_t duration_us = 2'000'000;
  int64_t frame_interval_us = 250'000;  // 4 fps, 9 frames over 2 s
  int64_t render_step_us = 1'000;
  int size_min = 10;
  int size_max = 18;
  double speed_max = 24.0;  // px/s
  int64_t visible_min_us = 150'000;
  int64_t visible_max_us = 900'000;
  double foreground = 0.9;
  double background = 0.1;
  SimConfig sim;
};

void validate(const GenConfig& cfg);

// Motion parameters of one scene, enough to re-render it.
struct SquareTrack {
  int size = 0;
  double x0 = 0.0;  // top-left at t_start, pixels
  double y0 = 0.0;
  double vx = 0.0;  // px/s
  double vy = 0.0;
  int64_t t_start_us = 0;
  int64_t t_end_us = 0;  // exclusive
};

struct SyntheticScene {
  int id = 0;
  SquareTrack track;
  FrameSequence frames;  // camera frames (every frame_interval_us)
  EventStream events;
  SceneAnnotation annotation;
};

// Integer top-left corner of the square at time t, or false when hidden.
bool square_corner(const SquareTrack& track, int64_t t_us, int& x, int& y);

// Renders the scene at time t (quantized to 8-bit levels).
std::vector<float> render(const SquareTrack& track, const GenConfig& cfg, int64_t t_us);

SquareTrack sample_track(uint64_t seed, int scene_id, const GenConfig& cfg);
SyntheticScene make_scene(const SquareTrack& track, int scene_id, const GenConfig& cfg);

// Scene i draws from a stream derived from (seed, i): generation order and
// thread count do not affect the output.
std::vector<SyntheticScene> gen_dataset(int n, uint64_t seed, const GenConfig& cfg);

// Normalized per-scene descriptor [cx, cy, w, h, t0, t1, dx, dy] where
// (dx, dy) is the displacement over the whole clip in image widths/heights.
std::vector<double> scene_descriptor(const SyntheticScene& scene, const GenConfig& cfg);

// Directory layout: scene_NNNNN/{frames.frm, frame_*.pgm, events.evt,
// annotation.ann, track.cfg}.
void write_dataset(const std::vector<SyntheticScene>& scenes, const std::filesystem::path& dir);
std::vector<SyntheticScene> read_dataset(const std::filesystem::path& dir);

}  // namespace fea
