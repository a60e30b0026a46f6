#pragma once

#include <cstdint>

#include "fea/io_formats.hpp"

namespace fea {

struct SimConfig {
  double contrast_threshold = 0.2;  // log-intensity units
  double eps = 1e-3;                // added before the log so black pixels stay finite
  int64_t refractory_us = 0;
};

void validate(const SimConfig& cfg);

// Ideal-sensor threshold model. Each pixel tracks a reference log level,
// initialised at the first frame; log intensity is linearly interpolated
// between frames and every crossing of ref +/- C emits one event at the
// (floored) crossing time and moves the reference by exactly C.
//
// simulate_events parallelises over pixel rows with OpenMP;
// simulate_events_serial is the single-threaded reference. Both produce the
// same canonical-order stream.
EventStream simulate_events(const FrameSequence& frames, const SimConfig& cfg);
EventStream simulate_events_serial(const FrameSequence& frames, const SimConfig& cfg);

}  // namespace fea
