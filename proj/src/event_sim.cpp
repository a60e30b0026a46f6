#include "fea/event_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fea/error.hpp"

namespace fea {
namespace {

void check_inputs(const FrameSequence& frames, const SimConfig& cfg) {
  validate(cfg);
  if (frames.frames.size() < 2) throw Error(ErrorKind::TooFewFrames, "need at least 2 frames");
  validate(frames);
}

// Walks one pixel through every inter-frame gap, appending its events.
void simulate_pixel(const FrameSequence& frames, const SimConfig& cfg, int x, int y, std::vector<Event>& out) {
  const size_t idx = static_cast<size_t>(y) * frames.width + x;
  const double c = cfg.contrast_threshold;
  const double refractory = static_cast<double>(cfg.refractory_us);

  float prev_i = frames.frames[0].pixels[idx];
  double la = std::log(static_cast<double>(prev_i) + cfg.eps);
  double ref = la;
  double blocked_until = -std::numeric_limits<double>::infinity();

  for (size_t k = 0; k + 1 < frames.frames.size(); ++k) {
    const float next_i = frames.frames[k + 1].pixels[idx];
    const double lb = next_i == prev_i ? la : std::log(static_cast<double>(next_i) + cfg.eps);
    prev_i = next_i;

    const double ta = static_cast<double>(frames.frames[k].t);
    const double tb = static_cast<double>(frames.frames[k + 1].t);
    if (la == lb && std::abs(la - ref) < c) {
      la = lb;
      continue;
    }
    const double slope = (lb - la) / (tb - ta);
    auto level_at = [&](double t) { return la + (lb - la) * ((t - ta) / (tb - ta)); };

    double cursor = ta;
    while (true) {
      const double start = std::max(cursor, blocked_until);
      if (start > tb) break;
      const double l_start = start == ta ? la : level_at(start);
      double t_event;
      int8_t polarity;
      if (l_start >= ref + c) {
        t_event = start;
        polarity = 1;
      } else if (l_start <= ref - c) {
        t_event = start;
        polarity = -1;
      } else if (slope > 0.0) {
        t_event = ta + (ref + c - la) / slope;
        polarity = 1;
      } else if (slope < 0.0) {
        t_event = ta + (ref - c - la) / slope;
        polarity = -1;
      } else {
        break;
      }
      if (t_event > tb) break;
      t_event = std::max(t_event, start);
      out.push_back(Event{static_cast<int64_t>(std::floor(t_event)), x, y, polarity});
      ref += polarity * c;
      blocked_until = t_event + refractory;
      cursor = t_event;
    }
    la = lb;
  }
}

EventStream finish(const FrameSequence& frames, std::vector<Event> events) {
  std::sort(events.begin(), events.end(), event_before);
  EventStream s;
  s.width = frames.width;
  s.height = frames.height;
  s.events = std::move(events);
  return s;
}

}  // namespace

void validate(const SimConfig& cfg) {
  if (!(cfg.contrast_threshold > 0.0) || !(cfg.eps > 0.0) || cfg.refractory_us < 0) {
    throw Error(ErrorKind::BadConfig, "simulator needs C > 0, eps > 0, refractory >= 0");
  }
}

EventStream simulate_events_serial(const FrameSequence& frames, const SimConfig& cfg) {
  check_inputs(frames, cfg);
  std::vector<Event> events;
  for (int y = 0; y < frames.height; ++y) {
    for (int x = 0; x < frames.width; ++x) simulate_pixel(frames, cfg, x, y, events);
  }
  return finish(frames, std::move(events));
}

EventStream simulate_events(const FrameSequence& frames, const SimConfig& cfg) {
  check_inputs(frames, cfg);
  std::vector<std::vector<Event>> rows(static_cast<size_t>(frames.height));
#pragma omp parallel for schedule(dynamic)
  for (int y = 0; y < frames.height; ++y) {
    for (int x = 0; x < frames.width; ++x) simulate_pixel(frames, cfg, x, y, rows[static_cast<size_t>(y)]);
  }
  size_t total = 0;
  for (const auto& r : rows) total += r.size();
  std::vector<Event> events;
  events.reserve(total);
  for (auto& r : rows) events.insert(events.end(), r.begin(), r.end());
  return finish(frames, std::move(events));
}

}  // namespace fea
