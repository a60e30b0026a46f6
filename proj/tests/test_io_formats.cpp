#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "fea/error.hpp"
#include "fea/io_formats.hpp"
#include "support.hpp"

namespace fea {
namespace {

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Io;
}

TEST(Events, ParsesHeaderAndLines) {
  const EventStream s = parse_events("EVT1 4 3\n10 0 0 1\n10 3 2 -1\n25 1 1 1\n");
  EXPECT_EQ(s.width, 4);
  EXPECT_EQ(s.height, 3);
  ASSERT_EQ(s.events.size(), 3u);
  EXPECT_EQ(s.events[1], (Event{10, 3, 2, -1}));
}

TEST(Events, RejectsBadInput) {
  EXPECT_EQ(kind_of([] { parse_events("EVT2 4 4\n"); }), ErrorKind::MalformedHeader);
  EXPECT_EQ(kind_of([] { parse_events("EVT1 4 4\n1 2 3\n"); }), ErrorKind::MalformedHeader);
  EXPECT_EQ(kind_of([] { parse_events("EVT1 4 4\n1 4 0 1\n"); }), ErrorKind::OutOfBounds);
  EXPECT_EQ(kind_of([] { parse_events("EVT1 4 4\n1 0 0 0\n"); }), ErrorKind::OutOfBounds);
  EXPECT_EQ(kind_of([] { parse_events("EVT1 4 4\n5 0 0 1\n4 0 0 1\n"); }), ErrorKind::NonMonotonicTime);
}

TEST(Events, RoundTripsRandomStreams) {
  Rng rng(11);
  test::TempDir dir("evt");
  for (int i = 0; i < 100; ++i) {
    const int w = static_cast<int>(rng.integer(1, 64)), h = static_cast<int>(rng.integer(1, 64));
    const EventStream s = test::random_events(rng, w, h, static_cast<int>(rng.integer(0, 300)), 5'000'000);
    EXPECT_EQ(parse_events(format_events(s)), s);
    write_events(s, dir / "s.evt");
    EXPECT_EQ(read_events(dir / "s.evt"), s);
  }
}

TEST(Frames, RoundTripsRandomSequences) {
  Rng rng(12);
  test::TempDir dir("frm");
  for (int i = 0; i < 100; ++i) {
    const FrameSequence s = test::random_frames(rng, static_cast<int>(rng.integer(1, 24)),
                                                static_cast<int>(rng.integer(1, 24)),
                                                static_cast<int>(rng.integer(1, 6)));
    write_frames(s, dir / "frames.frm");
    EXPECT_EQ(read_frames(dir / "frames.frm"), s);
  }
}

TEST(Frames, PgmRejectsWrongPayload) {
  int w = 0, h = 0;
  std::vector<uint8_t> bytes = encode_pgm(2, 2, {0.f, 0.5f, 1.f, 0.25f});
  EXPECT_EQ(decode_pgm(bytes, w, h).size(), 4u);
  bytes.pop_back();
  EXPECT_EQ(kind_of([&] { decode_pgm(bytes, w, h); }), ErrorKind::DimensionMismatch);
  EXPECT_EQ(kind_of([&] { decode_pgm({'P', '2', '\n'}, w, h); }), ErrorKind::MalformedHeader);
}

TEST(Frames, ManifestRejectsDecreasingTimes) {
  test::TempDir dir("frm_bad");
  Rng rng(3);
  const FrameSequence s = test::random_frames(rng, 2, 2, 2);
  write_frames(s, dir / "frames.frm");
  write_text_file(dir / "frames.frm", "FRM1 2 2\n10 frame_0000.pgm\n5 frame_0001.pgm\n");
  EXPECT_EQ(kind_of([&] { read_frames(dir / "frames.frm"); }), ErrorKind::NonMonotonicTime);
}

TEST(Annotations, RoundTripsRandomRecords) {
  Rng rng(13);
  test::TempDir dir("ann");
  for (int i = 0; i < 100; ++i) {
    const std::vector<SceneAnnotation> anns = test::random_annotations(rng);
    EXPECT_EQ(parse_annotations(format_annotations(anns)), anns);
    write_annotations(anns, dir / "a.ann");
    EXPECT_EQ(read_annotations(dir / "a.ann"), anns);
  }
}

TEST(Annotations, RejectsUnorderedBox) {
  EXPECT_EQ(kind_of([] { parse_annotations("ANN1\n0 0.5 0 0.4 1 0 1\n"); }), ErrorKind::InvalidBox);
  EXPECT_EQ(kind_of([] { parse_annotations("ANN\n"); }), ErrorKind::MalformedHeader);
}

TEST(Checkpoint, RoundTripsRandomTensors) {
  Rng rng(14);
  test::TempDir dir("ckpt");
  for (int i = 0; i < 100; ++i) {
    const Checkpoint c = test::random_checkpoint(rng);
    EXPECT_EQ(decode_checkpoint(encode_checkpoint(c)), c);
    save_checkpoint(c, dir / "m.ckpt");
    EXPECT_EQ(load_checkpoint(dir / "m.ckpt"), c);
  }
}

TEST(Checkpoint, PreservesSpecialFloats) {
  Checkpoint c;
  c.add(NamedTensor{"x", {4}, {-0.0f, std::numeric_limits<float>::denorm_min(), 1e38f, -3.5f}});
  const Checkpoint back = decode_checkpoint(encode_checkpoint(c));
  EXPECT_TRUE(std::signbit(back.tensors[0].data[0]));
  EXPECT_EQ(back, c);
}

TEST(Checkpoint, RejectsCorruptBytes) {
  Checkpoint c;
  c.add(NamedTensor{"a.w", {2}, {1.f, 2.f}});
  std::vector<uint8_t> bytes = encode_checkpoint(c);
  std::vector<uint8_t> bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(kind_of([&] { decode_checkpoint(bad); }), ErrorKind::BadMagic);
  bad = bytes;
  bad.resize(bad.size() - 3);
  EXPECT_EQ(kind_of([&] { decode_checkpoint(bad); }), ErrorKind::TruncatedFile);
  EXPECT_EQ(kind_of([&] { c.add(NamedTensor{"a.w", {1}, {0.f}}); }), ErrorKind::DuplicateName);
  EXPECT_EQ(kind_of([] { load_checkpoint("/nonexistent/m.ckpt"); }), ErrorKind::MissingCheckpoint);
}

TEST(Config, ParsesAndRejectsDuplicates) {
  const auto kv = parse_config("# comment\n\nseed = 4\n data=out/x \n");
  EXPECT_EQ(kv.at("seed"), "4");
  EXPECT_EQ(kv.at("data"), "out/x");
  EXPECT_EQ(kind_of([] { parse_config("a = 1\na = 2\n"); }), ErrorKind::BadConfig);
  EXPECT_EQ(kind_of([] { parse_config("novalue\n"); }), ErrorKind::BadConfig);
}

TEST(FormatReal, RoundTripsDoubles) {
  Rng rng(15);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.uniform(-1.0, 1.0) * std::pow(10.0, rng.integer(-20, 20));
    EXPECT_EQ(std::stod(format_real(v)), v);
  }
}

}  // namespace
}  // namespace fea
