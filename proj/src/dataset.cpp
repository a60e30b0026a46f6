#include "fea/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>

#include "fea/error.hpp"
#include "fea/rng.hpp"

namespace fea {
namespace {

double parse_real(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  double v = 0.0;
  if (it == kv.end()) throw Error(ErrorKind::BadConfig, "track file lacks " + key);
  auto [ptr, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
  if (ec != std::errc() || ptr != it->second.data() + it->second.size()) {
    throw Error(ErrorKind::BadConfig, "bad value for " + key);
  }
  return v;
}

int64_t parse_int64(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  int64_t v = 0;
  if (it == kv.end()) throw Error(ErrorKind::BadConfig, "track file lacks " + key);
  auto [ptr, ec] = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
  if (ec != std::errc() || ptr != it->second.data() + it->second.size()) {
    throw Error(ErrorKind::BadConfig, "bad value for " + key);
  }
  return v;
}

}  // namespace

void validate(const GenConfig& cfg) {
  const bool ok = cfg.width > 0 && cfg.height > 0 && cfg.duration_us > 0 && cfg.frame_interval_us > 0 &&
                  cfg.render_step_us > 0 && cfg.duration_us % cfg.render_step_us == 0 &&
                  cfg.frame_interval_us % cfg.render_step_us == 0 && cfg.size_min > 0 &&
                  cfg.size_min <= cfg.size_max && cfg.size_max < std::min(cfg.width, cfg.height) &&
                  cfg.speed_max >= 0.0 && cfg.visible_min_us >= cfg.render_step_us &&
                  cfg.visible_min_us <= cfg.visible_max_us && cfg.visible_max_us <= cfg.duration_us &&
                  cfg.visible_min_us % cfg.render_step_us == 0 && cfg.visible_max_us % cfg.render_step_us == 0 &&
                  cfg.foreground >= 0.0 && cfg.foreground <= 1.0 && cfg.background >= 0.0 && cfg.background <= 1.0;
  if (!ok) throw Error(ErrorKind::BadConfig, "inconsistent dataset generator settings");
  validate(cfg.sim);
}

bool square_corner(const SquareTrack& track, int64_t t_us, int& x, int& y) {
  if (t_us < track.t_start_us || t_us >= track.t_end_us) return false;
  const double tau = static_cast<double>(t_us - track.t_start_us) * 1e-6;
  x = static_cast<int>(std::floor(track.x0 + track.vx * tau));
  y = static_cast<int>(std::floor(track.y0 + track.vy * tau));
  return true;
}

std::vector<float> render(const SquareTrack& track, const GenConfig& cfg, int64_t t_us) {
  const float bg = pixel_from_byte(byte_from_pixel(static_cast<float>(cfg.background)));
  const float fg = pixel_from_byte(byte_from_pixel(static_cast<float>(cfg.foreground)));
  std::vector<float> img(static_cast<size_t>(cfg.width) * cfg.height, bg);
  int cx = 0, cy = 0;
  if (square_corner(track, t_us, cx, cy)) {
    for (int y = std::max(cy, 0); y < std::min(cy + track.size, cfg.height); ++y)
      for (int x = std::max(cx, 0); x < std::min(cx + track.size, cfg.width); ++x)
        img[static_cast<size_t>(y) * cfg.width + x] = fg;
  }
  return img;
}

SquareTrack sample_track(uint64_t seed, int scene_id, const GenConfig& cfg) {
  validate(cfg);
  Rng rng(Rng::derive(seed, "scene/" + std::to_string(scene_id)));
  const int64_t step = cfg.render_step_us;
  SquareTrack tr;
  tr.size = static_cast<int>(rng.integer(cfg.size_min, cfg.size_max));
  const int64_t len = rng.integer(cfg.visible_min_us / step, cfg.visible_max_us / step) * step;
  tr.t_start_us = rng.integer(0, (cfg.duration_us - len) / step) * step;
  tr.t_end_us = tr.t_start_us + len;
  const double speed = rng.uniform(0.0, cfg.speed_max);
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  tr.vx = speed * std::cos(angle);
  tr.vy = speed * std::sin(angle);
  const double secs = static_cast<double>(len) * 1e-6;
  const double room_x = cfg.width - tr.size, room_y = cfg.height - tr.size;
  // Slow the square down if its path would not fit in the image.
  const double need = std::max(std::abs(tr.vx) * secs / room_x, std::abs(tr.vy) * secs / room_y);
  if (need > 1.0) {
    tr.vx /= need;
    tr.vy /= need;
  }
  const double dx = tr.vx * secs, dy = tr.vy * secs;
  tr.x0 = rng.uniform(std::max(0.0, -dx), room_x - std::max(0.0, dx));
  tr.y0 = rng.uniform(std::max(0.0, -dy), room_y - std::max(0.0, dy));
  return tr;
}

SyntheticScene make_scene(const SquareTrack& track, int scene_id, const GenConfig& cfg) {
  validate(cfg);
  SyntheticScene s;
  s.id = scene_id;
  s.track = track;

  s.frames.width = cfg.width;
  s.frames.height = cfg.height;
  for (int64_t t = 0; t <= cfg.duration_us; t += cfg.frame_interval_us) {
    s.frames.frames.push_back(Frame{t, render(track, cfg, t)});
  }

  FrameSequence dense;
  dense.width = cfg.width;
  dense.height = cfg.height;
  int64_t sum_x = 0, sum_y = 0, count = 0;
  for (int64_t t = 0; t <= cfg.duration_us; t += cfg.render_step_us) {
    dense.frames.push_back(Frame{t, render(track, cfg, t)});
    int x = 0, y = 0;
    if (square_corner(track, t, x, y)) {
      sum_x += x;
      sum_y += y;
      ++count;
    }
  }
  if (count == 0) throw Error(ErrorKind::BadConfig, "square never visible");
  s.events = simulate_events_serial(dense, cfg.sim);

  const double w = static_cast<double>(count) * cfg.width, h = static_cast<double>(count) * cfg.height;
  s.annotation.query_id = scene_id;
  s.annotation.bbox = {static_cast<double>(sum_x) / w, static_cast<double>(sum_y) / h,
                       static_cast<double>(sum_x + count * track.size) / w,
                       static_cast<double>(sum_y + count * track.size) / h};
  s.annotation.interval = {static_cast<double>(track.t_start_us) / static_cast<double>(cfg.duration_us),
                           static_cast<double>(track.t_end_us) / static_cast<double>(cfg.duration_us)};
  return s;
}

std::vector<SyntheticScene> gen_dataset(int n, uint64_t seed, const GenConfig& cfg) {
  validate(cfg);
  if (n < 0) throw Error(ErrorKind::BadConfig, "negative scene count");
  std::vector<SyntheticScene> out(static_cast<size_t>(n));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = make_scene(sample_track(seed, i, cfg), i, cfg);
  return out;
}

std::vector<double> scene_descriptor(const SyntheticScene& scene, const GenConfig& cfg) {
  const auto& b = scene.annotation.bbox;
  const auto& iv = scene.annotation.interval;
  const double secs = static_cast<double>(cfg.duration_us) * 1e-6;
  return {(b[0] + b[2]) / 2.0, (b[1] + b[3]) / 2.0, b[2] - b[0], b[3] - b[1], iv[0], iv[1],
          scene.track.vx * secs / cfg.width, scene.track.vy * secs / cfg.height};
}

void write_dataset(const std::vector<SyntheticScene>& scenes, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& s : scenes) {
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%05d", s.id);
    const auto sub = dir / name;
    std::filesystem::create_directories(sub);
    write_frames(s.frames, sub / "frames.frm");
    write_events(s.events, sub / "events.evt");
    write_annotations({s.annotation}, sub / "annotation.ann");
    const auto& t = s.track;
    write_text_file(sub / "track.cfg", "size = " + std::to_string(t.size) + "\nx0 = " + format_real(t.x0) +
                                           "\ny0 = " + format_real(t.y0) + "\nvx = " + format_real(t.vx) +
                                           "\nvy = " + format_real(t.vy) + "\nt_start_us = " +
                                           std::to_string(t.t_start_us) + "\nt_end_us = " +
                                           std::to_string(t.t_end_us) + "\n");
  }
}

std::vector<SyntheticScene> read_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorKind::Io, "no dataset directory at " + dir.string());
  std::vector<std::filesystem::path> subdirs;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_directory() && entry.path().filename().string().rfind("scene_", 0) == 0) {
      subdirs.push_back(entry.path());
    }
  }
  std::sort(subdirs.begin(), subdirs.end());
  std::vector<SyntheticScene> out;
  for (const auto& sub : subdirs) {
    SyntheticScene s;
    s.frames = read_frames(sub / "frames.frm");
    s.events = read_events(sub / "events.evt");
    const auto anns = read_annotations(sub / "annotation.ann");
    if (anns.size() != 1) throw Error(ErrorKind::MalformedHeader, sub.string() + ": expected one annotation");
    s.annotation = anns[0];
    s.id = s.annotation.query_id;
    const auto kv = read_config(sub / "track.cfg");
    s.track.size = static_cast<int>(parse_int64(kv, "size"));
    s.track.x0 = parse_real(kv, "x0");
    s.track.y0 = parse_real(kv, "y0");
    s.track.vx = parse_real(kv, "vx");
    s.track.vy = parse_real(kv, "vy");
    s.track.t_start_us = parse_int64(kv, "t_start_us");
    s.track.t_end_us = parse_int64(kv, "t_end_us");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace fea
