#include "fea/io_formats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "fea/error.hpp"

namespace fea {
namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (start < text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    start = end + 1;
  }
  return out;
}

template <class Int>
bool parse_int(std::string_view s, Int& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

void parse_dims_header(std::string_view line, std::string_view magic, int& w, int& h) {
  auto tok = split_ws(line);
  if (tok.size() != 3 || tok[0] != magic || !parse_int(tok[1], w) || !parse_int(tok[2], h) ||
      w <= 0 || h <= 0) {
    throw Error(ErrorKind::MalformedHeader,
                "expected `" + std::string(magic) + " <width> <height>`, got `" + std::string(line) +
                    "`");
  }
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

class ByteReader {
 public:
  explicit ByteReader(const std::vector<uint8_t>& bytes) : bytes_(bytes) {}

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string str(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorKind::TruncatedFile, "unexpected end of checkpoint");
  }

  const std::vector<uint8_t>& bytes_;
  size_t pos_ = 0;
};

}  // namespace

uint8_t byte_from_pixel(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<uint8_t>(std::lround(c * 255.0f));
}

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

// ---------------------------------------------------------------- validation

void validate(const EventStream& s) {
  if (s.width <= 0 || s.height <= 0) throw Error(ErrorKind::MalformedHeader, "non-positive stream size");
  for (size_t i = 0; i < s.events.size(); ++i) {
    const Event& e = s.events[i];
    if (e.x < 0 || e.x >= s.width || e.y < 0 || e.y >= s.height || e.t < 0) {
      throw Error(ErrorKind::OutOfBounds, "event " + std::to_string(i) + " at (" + std::to_string(e.x) +
                                              "," + std::to_string(e.y) + ") t=" + std::to_string(e.t));
    }
    if (e.p != 1 && e.p != -1) throw Error(ErrorKind::OutOfBounds, "polarity must be +1 or -1");
    if (i > 0 && event_before(e, s.events[i - 1])) {
      throw Error(ErrorKind::NonMonotonicTime, "event " + std::to_string(i) + " out of order");
    }
  }
}

void validate(const FrameSequence& s) {
  if (s.width <= 0 || s.height <= 0) throw Error(ErrorKind::MalformedHeader, "non-positive frame size");
  const size_t n = static_cast<size_t>(s.width) * static_cast<size_t>(s.height);
  for (size_t i = 0; i < s.frames.size(); ++i) {
    const Frame& f = s.frames[i];
    if (f.pixels.size() != n) throw Error(ErrorKind::DimensionMismatch, "frame " + std::to_string(i));
    if (f.t < 0) throw Error(ErrorKind::NonMonotonicTime, "negative frame time");
    if (i > 0 && f.t <= s.frames[i - 1].t) {
      throw Error(ErrorKind::NonMonotonicTime, "frame times must strictly increase");
    }
    for (float v : f.pixels) {
      if (!(v >= 0.0f && v <= 1.0f)) throw Error(ErrorKind::OutOfBounds, "intensity outside [0,1]");
    }
  }
}

void validate(const SceneAnnotation& a) {
  for (double v : a.bbox) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::InvalidBox, "bbox component outside [0,1]");
  }
  for (double v : a.interval) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::InvalidBox, "interval component outside [0,1]");
  }
  if (!(a.bbox[0] < a.bbox[2] && a.bbox[1] < a.bbox[3])) throw Error(ErrorKind::InvalidBox, "bbox not ordered");
  if (!(a.interval[0] < a.interval[1])) throw Error(ErrorKind::InvalidBox, "interval not ordered");
}

// -------------------------------------------------------------------- events

EventStream parse_events(const std::string& text) {
  auto lines = split_lines(text);
  if (lines.empty()) throw Error(ErrorKind::MalformedHeader, "empty event file");
  EventStream s;
  parse_dims_header(lines[0], "EVT1", s.width, s.height);
  for (size_t i = 1; i < lines.size(); ++i) {
    auto tok = split_ws(lines[i]);
    if (tok.empty()) continue;
    Event e;
    int p = 0;
    if (tok.size() != 4 || !parse_int(tok[0], e.t) || !parse_int(tok[1], e.x) || !parse_int(tok[2], e.y) ||
        !parse_int(tok[3], p)) {
      throw Error(ErrorKind::MalformedHeader, "bad event line " + std::to_string(i + 1));
    }
    if (p != 1 && p != -1) throw Error(ErrorKind::OutOfBounds, "bad polarity on line " + std::to_string(i + 1));
    e.p = static_cast<int8_t>(p);
    s.events.push_back(e);
  }
  validate(s);
  return s;
}

std::string format_events(const EventStream& s) {
  validate(s);
  std::string out = "EVT1 " + std::to_string(s.width) + " " + std::to_string(s.height) + "\n";
  out.reserve(out.size() + s.events.size() * 20);
  for (const Event& e : s.events) {
    out += std::to_string(e.t);
    out += ' ';
    out += std::to_string(e.x);
    out += ' ';
    out += std::to_string(e.y);
    out += e.p > 0 ? " 1\n" : " -1\n";
  }
  return out;
}

EventStream read_events(const std::filesystem::path& path) { return parse_events(read_text_file(path)); }

void write_events(const EventStream& s, const std::filesystem::path& path) {
  write_text_file(path, format_events(s));
}

// -------------------------------------------------------------------- frames

std::vector<uint8_t> encode_pgm(int width, int height, const std::vector<float>& pixels) {
  std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + pixels.size());
  for (float v : pixels) out.push_back(byte_from_pixel(v));
  return out;
}

std::vector<float> decode_pgm(const std::vector<uint8_t>& bytes, int& width, int& height) {
  size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) tok.push_back(static_cast<char>(bytes[pos++]));
    return tok;
  };
  int maxval = 0;
  if (next_token() != "P5" || !parse_int(next_token(), width) || !parse_int(next_token(), height) ||
      !parse_int(next_token(), maxval) || width <= 0 || height <= 0) {
    throw Error(ErrorKind::MalformedHeader, "not a binary PGM (P5)");
  }
  if (maxval != 255) throw Error(ErrorKind::MalformedHeader, "PGM maxval must be 255");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw Error(ErrorKind::MalformedHeader, "PGM header");
  ++pos;
  const size_t n = static_cast<size_t>(width) * static_cast<size_t>(height);
  if (bytes.size() - pos != n) throw Error(ErrorKind::DimensionMismatch, "PGM payload size");
  std::vector<float> pixels(n);
  for (size_t i = 0; i < n; ++i) pixels[i] = pixel_from_byte(bytes[pos + i]);
  return pixels;
}

FrameSequence read_frames(const std::filesystem::path& manifest) {
  const std::string text = read_text_file(manifest);
  auto lines = split_lines(text);
  if (lines.empty()) throw Error(ErrorKind::MalformedHeader, "empty frame manifest");
  FrameSequence s;
  parse_dims_header(lines[0], "FRM1", s.width, s.height);
  const auto dir = manifest.parent_path();
  for (size_t i = 1; i < lines.size(); ++i) {
    auto tok = split_ws(lines[i]);
    if (tok.empty()) continue;
    Frame f;
    if (tok.size() != 2 || !parse_int(tok[0], f.t)) {
      throw Error(ErrorKind::MalformedHeader, "bad manifest line " + std::to_string(i + 1));
    }
    if (!s.frames.empty() && f.t <= s.frames.back().t) {
      throw Error(ErrorKind::NonMonotonicTime, "frame times must strictly increase");
    }
    int w = 0, h = 0;
    f.pixels = decode_pgm(read_binary_file(dir / std::string(tok[1])), w, h);
    if (w != s.width || h != s.height) {
      throw Error(ErrorKind::DimensionMismatch, std::string(tok[1]) + " is " + std::to_string(w) + "x" +
                                                    std::to_string(h));
    }
    s.frames.push_back(std::move(f));
  }
  validate(s);
  return s;
}

void write_frames(const FrameSequence& s, const std::filesystem::path& manifest) {
  validate(s);
  const auto dir = manifest.parent_path();
  std::string text = "FRM1 " + std::to_string(s.width) + " " + std::to_string(s.height) + "\n";
  for (size_t i = 0; i < s.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04zu.pgm", i);
    write_binary_file(dir / name, encode_pgm(s.width, s.height, s.frames[i].pixels));
    text += std::to_string(s.frames[i].t) + " " + name + "\n";
  }
  write_text_file(manifest, text);
}

// --------------------------------------------------------------- annotations

std::vector<SceneAnnotation> parse_annotations(const std::string& text) {
  auto lines = split_lines(text);
  if (lines.empty() || split_ws(lines[0]).size() != 1 || split_ws(lines[0])[0] != "ANN1") {
    throw Error(ErrorKind::MalformedHeader, "expected `ANN1` header");
  }
  std::vector<SceneAnnotation> out;
  for (size_t i = 1; i < lines.size(); ++i) {
    auto tok = split_ws(lines[i]);
    if (tok.empty()) continue;
    SceneAnnotation a;
    bool ok = tok.size() == 7 && parse_int(tok[0], a.query_id);
    for (int k = 0; ok && k < 4; ++k) ok = parse_double(tok[1 + k], a.bbox[k]);
    for (int k = 0; ok && k < 2; ++k) ok = parse_double(tok[5 + k], a.interval[k]);
    if (!ok) throw Error(ErrorKind::MalformedHeader, "bad annotation line " + std::to_string(i + 1));
    validate(a);
    out.push_back(a);
  }
  return out;
}

std::string format_annotations(const std::vector<SceneAnnotation>& anns) {
  std::string out = "ANN1\n";
  for (const auto& a : anns) {
    validate(a);
    out += std::to_string(a.query_id);
    for (double v : a.bbox) out += " " + format_real(v);
    for (double v : a.interval) out += " " + format_real(v);
    out += "\n";
  }
  return out;
}

std::vector<SceneAnnotation> read_annotations(const std::filesystem::path& path) {
  return parse_annotations(read_text_file(path));
}

void write_annotations(const std::vector<SceneAnnotation>& anns, const std::filesystem::path& path) {
  write_text_file(path, format_annotations(anns));
}

// --------------------------------------------------------------- checkpoints

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void Checkpoint::add(NamedTensor t) {
  if (find(t.name) != nullptr) throw Error(ErrorKind::DuplicateName, t.name);
  size_t n = 1;
  for (uint32_t d : t.shape) n *= d;
  if (n != t.data.size()) throw Error(ErrorKind::ShapeMismatch, "tensor " + t.name);
  tensors.push_back(std::move(t));
}

std::vector<uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<uint8_t> out = {'L', 'F', 'E', 'A'};
  put_u32(out, ckpt.version);
  put_u32(out, static_cast<uint32_t>(ckpt.tensors.size()));
  std::set<std::string> seen;
  for (const auto& t : ckpt.tensors) {
    if (!seen.insert(t.name).second) throw Error(ErrorKind::DuplicateName, t.name);
    put_u32(out, static_cast<uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put_u32(out, static_cast<uint32_t>(t.shape.size()));
    for (uint32_t d : t.shape) put_u32(out, d);
    for (float v : t.data) {
      uint32_t bits = 0;
      std::memcpy(&bits, &v, sizeof(bits));
      put_u32(out, bits);
    }
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<uint8_t>& bytes) {
  ByteReader in(bytes);
  if (bytes.size() < 4) throw Error(ErrorKind::TruncatedFile, "missing magic");
  if (in.str(4) != "LFEA") throw Error(ErrorKind::BadMagic, "expected LFEA");
  Checkpoint ckpt;
  ckpt.version = in.u32();
  if (ckpt.version != 1) throw Error(ErrorKind::BadMagic, "unsupported version " + std::to_string(ckpt.version));
  const uint32_t count = in.u32();
  for (uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = in.str(in.u32());
    const uint32_t ndim = in.u32();
    size_t n = 1;
    for (uint32_t k = 0; k < ndim; ++k) {
      t.shape.push_back(in.u32());
      n *= t.shape.back();
    }
    if (n > bytes.size()) throw Error(ErrorKind::TruncatedFile, "tensor " + t.name + " larger than file");
    t.data.resize(n);
    for (size_t k = 0; k < n; ++k) {
      const uint32_t bits = in.u32();
      std::memcpy(&t.data[k], &bits, sizeof(bits));
    }
    ckpt.add(std::move(t));
  }
  if (!in.done()) throw Error(ErrorKind::TruncatedFile, "trailing bytes after last tensor");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_binary_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::MissingCheckpoint, path.string());
  return decode_checkpoint(read_binary_file(path));
}

// -------------------------------------------------------------------- config

std::map<std::string, std::string> parse_config(const std::string& text) {
  std::map<std::string, std::string> out;
  auto lines = split_lines(text);
  for (size_t i = 0; i < lines.size(); ++i) {
    std::string_view line = lines[i];
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::BadConfig, "line " + std::to_string(i + 1) + ": expected `key = value`");
    }
    auto key = split_ws(line.substr(0, eq));
    auto value = split_ws(line.substr(eq + 1));
    if (key.size() != 1 || value.size() != 1) {
      throw Error(ErrorKind::BadConfig, "line " + std::to_string(i + 1) + ": expected `key = value`");
    }
    if (!out.emplace(std::string(key[0]), std::string(value[0])).second) {
      throw Error(ErrorKind::BadConfig, "duplicate key `" + std::string(key[0]) + "`");
    }
  }
  return out;
}

std::map<std::string, std::string> read_config(const std::filesystem::path& path) {
  return parse_config(read_text_file(path));
}

// ------------------------------------------------------------------ file I/O

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<uint8_t> read_binary_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
}

void write_binary_file(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace fea
