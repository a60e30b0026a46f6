#pragma once

// Readers and writers for the on-disk formats:
//   EVT1  ASCII event streams
//   FRM1  frame manifest pointing at binary PGM (P5) images
//   ANN1  ASCII grounding annotations
//   LFEA  little-endian binary tensor checkpoints
//   flat `key = value` config files

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fea {

struct Event {
  int64_t t = 0;  // microseconds since stream start
  int32_t x = 0;
  int32_t y = 0;
  int8_t p = 1;  // +1 ON, -1 OFF

  friend bool operator==(const Event&, const Event&) = default;
};

// Canonical stream order: time, then (y, x, p) ascending.
inline bool event_before(const Event& a, const Event& b) {
  if (a.t != b.t) return a.t < b.t;
  if (a.y != b.y) return a.y < b.y;
  if (a.x != b.x) return a.x < b.x;
  return a.p < b.p;
}

struct EventStream {
  int width = 0;
  int height = 0;
  std::vector<Event> events;

  friend bool operator==(const EventStream&, const EventStream&) = default;
};

struct Frame {
  int64_t t = 0;
  std::vector<float> pixels;  // row-major, width*height, values in [0,1]

  friend bool operator==(const Frame&, const Frame&) = default;
};

struct FrameSequence {
  int width = 0;
  int height = 0;
  std::vector<Frame> frames;

  friend bool operator==(const FrameSequence&, const FrameSequence&) = default;
};

struct SceneAnnotation {
  int query_id = 0;
  std::array<double, 4> bbox{};      // x1 y1 x2 y2, normalized
  std::array<double, 2> interval{};  // t_start t_end, normalized

  friend bool operator==(const SceneAnnotation&, const SceneAnnotation&) = default;
};

struct NamedTensor {
  std::string name;
  std::vector<uint32_t> shape;
  std::vector<float> data;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct Checkpoint {
  uint32_t version = 1;
  std::vector<NamedTensor> tensors;  // insertion order is preserved on disk

  const NamedTensor* find(const std::string& name) const;
  void add(NamedTensor t);  // throws DuplicateName

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// 8-bit PGM sample -> intensity. Every writer and generator goes through this
// so that values survive a PGM round trip bit-exactly.
inline float pixel_from_byte(uint8_t v) { return static_cast<float>(v) / 255.0f; }
uint8_t byte_from_pixel(float v);

void validate(const EventStream& s);
void validate(const FrameSequence& s);
void validate(const SceneAnnotation& a);

EventStream parse_events(const std::string& text);
std::string format_events(const EventStream& s);
EventStream read_events(const std::filesystem::path& path);
void write_events(const EventStream& s, const std::filesystem::path& path);

// Frames are written as `frame_NNNN.pgm` next to the manifest.
FrameSequence read_frames(const std::filesystem::path& manifest);
void write_frames(const FrameSequence& s, const std::filesystem::path& manifest);

std::vector<uint8_t> encode_pgm(int width, int height, const std::vector<float>& pixels);
std::vector<float> decode_pgm(const std::vector<uint8_t>& bytes, int& width, int& height);

std::vector<SceneAnnotation> parse_annotations(const std::string& text);
std::string format_annotations(const std::vector<SceneAnnotation>& anns);
std::vector<SceneAnnotation> read_annotations(const std::filesystem::path& path);
void write_annotations(const std::vector<SceneAnnotation>& anns, const std::filesystem::path& path);

std::vector<uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<uint8_t>& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Flat `key = value` config. Blank lines and `#` comments are skipped;
// repeated keys are rejected.
std::map<std::string, std::string> parse_config(const std::string& text);
std::map<std::string, std::string> read_config(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
std::vector<uint8_t> read_binary_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
void write_binary_file(const std::filesystem::path& path, const std::vector<uint8_t>& bytes);

// Shortest decimal text that parses back to the same double.
std::string format_real(double v);

}  // namespace fea
