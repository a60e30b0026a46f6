#include "fea/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "fea/error.hpp"

namespace fea {

VoxelGrid voxelize(const EventStream& stream, int bins, int64_t t0, int64_t t1) {
  if (!(t0 < t1) || bins <= 0) throw Error(ErrorKind::BadWindow, "need t0 < t1 and bins > 0");
  VoxelGrid g;
  g.bins = bins;
  g.height = stream.height;
  g.width = stream.width;
  const size_t n = static_cast<size_t>(bins) * stream.height * stream.width;
  g.on.assign(n, 0);
  g.off.assign(n, 0);
  for (const Event& e : stream.events) {
    if (e.t < t0 || e.t >= t1) continue;
    // Integer form of floor(B (t - t0) / (t1 - t0)); exact for any window.
    const auto num = static_cast<__int128>(bins) * (e.t - t0);
    int b = static_cast<int>(num / (t1 - t0));
    b = std::clamp(b, 0, bins - 1);
    (e.p > 0 ? g.on : g.off)[g.index(b, e.y, e.x)] += 1;
  }
  return g;
}

Tensor<float> voxel_tensor(const VoxelGrid& grid) {
  const size_t plane = static_cast<size_t>(grid.height) * grid.width;
  Tensor<float> out({static_cast<size_t>(grid.bins), 2, static_cast<size_t>(grid.height),
                     static_cast<size_t>(grid.width)});
  for (int b = 0; b < grid.bins; ++b) {
    for (size_t i = 0; i < plane; ++i) {
      out[(static_cast<size_t>(b) * 2) * plane + i] = static_cast<float>(grid.on[b * plane + i]);
      out[(static_cast<size_t>(b) * 2 + 1) * plane + i] = static_cast<float>(grid.off[b * plane + i]);
    }
  }
  return out;
}

std::vector<double> time_features(double tau, int count) {
  std::vector<double> f;
  f.reserve(count);
  f.push_back(tau);
  for (int k = 1; static_cast<int>(f.size()) < count; ++k) {
    f.push_back(std::sin(k * std::numbers::pi * tau));
    if (static_cast<int>(f.size()) < count) f.push_back(std::cos(k * std::numbers::pi * tau));
  }
  return f;
}

template <class T>
Tensor<T> patchify(const float* image, int channels, int height, int width, int patch) {
  if (patch <= 0 || height % patch != 0 || width % patch != 0) {
    throw Error(ErrorKind::PatchSizeMismatch, "patch " + std::to_string(patch) + " does not divide " +
                                                  std::to_string(width) + "x" + std::to_string(height));
  }
  const int ph = height / patch, pw = width / patch;
  const size_t dim = static_cast<size_t>(channels) * patch * patch;
  Tensor<T> out({static_cast<size_t>(ph * pw), dim});
  for (int py = 0; py < ph; ++py) {
    for (int px = 0; px < pw; ++px) {
      T* row = out.data() + static_cast<size_t>(py * pw + px) * dim;
      size_t k = 0;
      for (int c = 0; c < channels; ++c)
        for (int dy = 0; dy < patch; ++dy)
          for (int dx = 0; dx < patch; ++dx) {
            const size_t src = (static_cast<size_t>(c) * height + py * patch + dy) * width + px * patch + dx;
            row[k++] = static_cast<T>(image[src]);
          }
    }
  }
  return out;
}

template <class T>
std::vector<Tensor<T>> frame_patches(const FrameSequence& frames, int patch) {
  if (frames.frames.empty()) throw Error(ErrorKind::TooFewFrames, "encoder needs at least one frame");
  std::vector<Tensor<T>> out;
  for (const Frame& f : frames.frames) {
    out.push_back(patchify<T>(f.pixels.data(), 1, frames.height, frames.width, patch));
  }
  return out;
}

template <class T>
std::vector<Tensor<T>> event_patches(const VoxelGrid& grid, int patch) {
  if (grid.bins <= 0) throw Error(ErrorKind::TooFewFrames, "encoder needs at least one bin");
  const Tensor<float> vox = voxel_tensor(grid);
  const size_t slice = 2 * static_cast<size_t>(grid.height) * grid.width;
  std::vector<Tensor<T>> out;
  for (int b = 0; b < grid.bins; ++b) {
    out.push_back(patchify<T>(vox.data() + b * slice, 2, grid.height, grid.width, patch));
  }
  return out;
}

std::vector<double> grid_position_table(int rows, int cols, int d) {
  if (rows <= 0 || cols <= 0 || d <= 0) throw Error(ErrorKind::ShapeMismatch, "empty position grid");
  constexpr double kAmplitude = 0.5;
  const int half = d / 2;
  std::vector<double> out(static_cast<size_t>(rows) * cols * d, 0.0);
  auto fill = [](double* dst, int n, double coord, int extent) {
    // Pairs (sin, cos) at frequencies k pi / extent; an odd tail gets the raw coordinate.
    for (int k = 0; 2 * k + 1 < n; ++k) {
      const double w = (k + 1) * std::numbers::pi / extent;
      dst[2 * k] = kAmplitude * std::sin(w * (coord + 0.5));
      dst[2 * k + 1] = kAmplitude * std::cos(w * (coord + 0.5));
    }
    if (n % 2 == 1) dst[n - 1] = kAmplitude * ((coord + 0.5) / extent - 0.5);
  };
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double* row = out.data() + (static_cast<size_t>(r) * cols + c) * d;
      fill(row, half, r, rows);
      fill(row + half, d - half, c, cols);
    }
  }
  return out;
}

template <class T>
void register_encoder(ParamStore<T>& store, const std::string& prefix, int patch_dim, int grid_rows, int grid_cols,
                      const EncoderConfig& cfg, uint64_t seed) {
  const size_t d = cfg.d, h = cfg.mlp_hidden;
  store.add(prefix + ".patch_embed", {static_cast<size_t>(patch_dim), d}, Init::Uniform, seed);
  store.add(prefix + ".position", {static_cast<size_t>(grid_rows * grid_cols), d}, Init::Zeros, seed);
  const auto table = grid_position_table(grid_rows, grid_cols, cfg.d);
  auto& pos = store.value(prefix + ".position");
  for (size_t i = 0; i < table.size(); ++i) pos[i] = static_cast<T>(table[i]);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string b = prefix + ".block" + std::to_string(l);
    store.add(b + ".ln1.gamma", {d}, Init::Ones, seed);
    store.add(b + ".ln1.beta", {d}, Init::Zeros, seed);
    store.add(b + ".attn.w_q", {d, d}, Init::Uniform, seed);
    store.add(b + ".attn.w_k", {d, d}, Init::Uniform, seed);
    store.add(b + ".attn.w_v", {d, d}, Init::Uniform, seed);
    store.add(b + ".ln2.gamma", {d}, Init::Ones, seed);
    store.add(b + ".ln2.beta", {d}, Init::Zeros, seed);
    store.add(b + ".mlp.w1", {d, h}, Init::Uniform, seed);
    store.add(b + ".mlp.b1", {h}, Init::Zeros, seed);
    store.add(b + ".mlp.w2", {h, d}, Init::Uniform, seed);
    store.add(b + ".mlp.b2", {d}, Init::Zeros, seed);
  }
  store.add(prefix + ".ln.gamma", {d}, Init::Ones, seed);
  store.add(prefix + ".ln.beta", {d}, Init::Zeros, seed);
  store.add(prefix + ".time_embed", {static_cast<size_t>(cfg.time_features), d}, Init::Uniform, seed);
}

template <class T>
nn::EncoderVars<T> bind_encoder(Binding<T>& bind, const std::string& prefix, int layers) {
  nn::EncoderVars<T> v;
  v.patch_embed = bind(prefix + ".patch_embed");
  v.position = bind(prefix + ".position");
  for (int l = 0; l < layers; ++l) {
    const std::string b = prefix + ".block" + std::to_string(l);
    v.blocks.push_back({bind(b + ".ln1.gamma"), bind(b + ".ln1.beta"), bind(b + ".attn.w_q"), bind(b + ".attn.w_k"),
                        bind(b + ".attn.w_v"), bind(b + ".ln2.gamma"), bind(b + ".ln2.beta"), bind(b + ".mlp.w1"),
                        bind(b + ".mlp.b1"), bind(b + ".mlp.w2"), bind(b + ".mlp.b2")});
  }
  v.ln_gamma = bind(prefix + ".ln.gamma");
  v.ln_beta = bind(prefix + ".ln.beta");
  v.time_embed = bind(prefix + ".time_embed");
  return v;
}

namespace nn {

template <class T>
Var<T> transformer_block(Var<T> x, const BlockVars<T>& p) {
  Var<T> h = layer_norm(x, p.ln1_gamma, p.ln1_beta);
  x = add(x, sdp_attention(linear(h, p.w_q), linear(h, p.w_k), linear(h, p.w_v)));
  h = layer_norm(x, p.ln2_gamma, p.ln2_beta);
  return add(x, mlp2(h, p.w1, p.b1, p.w2, p.b2));
}

template <class T>
Var<T> encode_step(Var<T> patches, const EncoderVars<T>& p) {
  if (patches.shape()[0] != p.position.shape()[0]) {
    throw Error(ErrorKind::PatchSizeMismatch, "patch count " + std::to_string(patches.shape()[0]) +
                                                  " does not match position table");
  }
  Var<T> x = add(linear(patches, p.patch_embed), p.position);
  for (const auto& b : p.blocks) x = transformer_block(x, b);
  return layer_norm(x, p.ln_gamma, p.ln_beta);
}

template <class T>
Var<T> encode_steps(Tape<T>& tape, const std::vector<Tensor<T>>& patches, const EncoderVars<T>& p) {
  if (patches.empty()) throw Error(ErrorKind::TooFewFrames, "encoder needs at least one step");
  std::vector<Var<T>> steps;
  steps.reserve(patches.size());
  for (const auto& x : patches) steps.push_back(encode_step(tape.constant(x), p));
  return stack(steps);
}

template <class T>
Var<T> encode_frames(Tape<T>& tape, const FrameSequence& frames, const EncoderVars<T>& p, int patch) {
  return encode_steps(tape, frame_patches<T>(frames, patch), p);
}

template <class T>
Var<T> encode_events(Tape<T>& tape, const VoxelGrid& grid, const EncoderVars<T>& p, int patch) {
  return encode_steps(tape, event_patches<T>(grid, patch), p);
}

namespace {

// Pools `count` rows of length d found at base + i*stride, weighting each by
// softmax(<row, mean row> / sqrt d). Writes the pooled row and the weights.
template <class T>
void pool_forward(const T* base, size_t count, size_t stride, size_t d, T* out, T* weights) {
  std::vector<T> mean(d, T(0));
  for (size_t i = 0; i < count; ++i)
    for (size_t j = 0; j < d; ++j) mean[j] += base[i * stride + j];
  for (auto& m : mean) m /= T(count);
  const T inv = T(1) / std::sqrt(T(d));
  T mx = -std::numeric_limits<T>::infinity();
  for (size_t i = 0; i < count; ++i) {
    T s = 0;
    for (size_t j = 0; j < d; ++j) s += base[i * stride + j] * mean[j];
    weights[i] = s * inv;
    mx = std::max(mx, weights[i]);
  }
  T total = 0;
  for (size_t i = 0; i < count; ++i) total += (weights[i] = std::exp(weights[i] - mx));
  for (size_t i = 0; i < count; ++i) weights[i] /= total;
  std::fill(out, out + d, T(0));
  for (size_t i = 0; i < count; ++i)
    for (size_t j = 0; j < d; ++j) out[j] += weights[i] * base[i * stride + j];
}

template <class T>
void pool_backward(const T* base, size_t count, size_t stride, size_t d, const T* weights, const T* g_out,
                   T* g_base) {
  std::vector<T> mean(d, T(0));
  for (size_t i = 0; i < count; ++i)
    for (size_t j = 0; j < d; ++j) mean[j] += base[i * stride + j];
  for (auto& m : mean) m /= T(count);
  const T inv = T(1) / std::sqrt(T(d));

  std::vector<T> dscore(count);
  T dot = 0;
  for (size_t i = 0; i < count; ++i) {
    T da = 0;
    for (size_t j = 0; j < d; ++j) da += base[i * stride + j] * g_out[j];
    dscore[i] = da;
    dot += weights[i] * da;
  }
  std::vector<T> dmean(d, T(0));
  for (size_t i = 0; i < count; ++i) {
    const T ds = weights[i] * (dscore[i] - dot) * inv;
    for (size_t j = 0; j < d; ++j) {
      g_base[i * stride + j] += weights[i] * g_out[j] + ds * mean[j];
      dmean[j] += ds * base[i * stride + j];
    }
  }
  for (size_t i = 0; i < count; ++i)
    for (size_t j = 0; j < d; ++j) g_base[i * stride + j] += dmean[j] / T(count);
}

}  // namespace

template <class T>
SpatioTemporal<T> st_map(Var<T> f) {
  if (f.value().rank() != 3) throw Error(ErrorKind::ShapeMismatch, "st_map expects [T, P, d]");
  const size_t steps = f.shape()[0], patches = f.shape()[1], d = f.shape()[2];
  const T* base = f.value().data();
  Tape<T>& tape = *f.tape();

  Tensor<T> spatial({patches, d});
  Tensor<T> w_spatial({patches, steps});
  for (size_t p = 0; p < patches; ++p) {
    pool_forward(base + p * d, steps, patches * d, d, spatial.data() + p * d, w_spatial.data() + p * steps);
  }
  Tensor<T> temporal({steps, d});
  Tensor<T> w_temporal({steps, patches});
  for (size_t t = 0; t < steps; ++t) {
    pool_forward(base + t * patches * d, patches, d, d, temporal.data() + t * d, w_temporal.data() + t * patches);
  }

  SpatioTemporal<T> out;
  out.spatial = tape.record(std::move(spatial), {f}, [f, steps, patches, d, w = std::move(w_spatial)](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    T* gf = t.grad(f.id()).data();
    for (size_t p = 0; p < patches; ++p) {
      pool_backward(f.value().data() + p * d, steps, patches * d, d, w.data() + p * steps, g.data() + p * d,
                    gf + p * d);
    }
  });
  out.temporal = tape.record(std::move(temporal), {f}, [f, steps, patches, d, w = std::move(w_temporal)](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    T* gf = t.grad(f.id()).data();
    for (size_t s = 0; s < steps; ++s) {
      pool_backward(f.value().data() + s * patches * d, patches, d, d, w.data() + s * patches, g.data() + s * d,
                    gf + s * patches * d);
    }
  });
  return out;
}

template <class T>
Var<T> add_time_embedding(Var<T> temporal, const std::vector<double>& times, Var<T> w) {
  const size_t steps = temporal.shape()[0];
  if (times.size() != steps) throw Error(ErrorKind::ShapeMismatch, "one timestamp per temporal token");
  const int nf = static_cast<int>(w.shape()[0]);
  Tensor<T> feats({steps, static_cast<size_t>(nf)});
  for (size_t t = 0; t < steps; ++t) {
    const auto f = time_features(times[t], nf);
    for (int k = 0; k < nf; ++k) feats[t * nf + k] = static_cast<T>(f[k]);
  }
  return add(temporal, linear(temporal.tape()->constant(std::move(feats)), w));
}

}  // namespace nn

#define FEA_INSTANTIATE(T)                                                                                   \
  template Tensor<T> patchify<T>(const float*, int, int, int, int);                                         \
  template std::vector<Tensor<T>> frame_patches<T>(const FrameSequence&, int);                               \
  template std::vector<Tensor<T>> event_patches<T>(const VoxelGrid&, int);                                   \
  template void register_encoder<T>(ParamStore<T>&, const std::string&, int, int, int, const EncoderConfig&, \
                                    uint64_t);                                                               \
  template nn::EncoderVars<T> bind_encoder<T>(Binding<T>&, const std::string&, int);                         \
  template nn::Var<T> nn::transformer_block<T>(nn::Var<T>, const nn::BlockVars<T>&);                         \
  template nn::Var<T> nn::encode_step<T>(nn::Var<T>, const nn::EncoderVars<T>&);                             \
  template nn::Var<T> nn::encode_steps<T>(nn::Tape<T>&, const std::vector<Tensor<T>>&,                       \
                                          const nn::EncoderVars<T>&);                                        \
  template nn::Var<T> nn::encode_frames<T>(nn::Tape<T>&, const FrameSequence&, const nn::EncoderVars<T>&,    \
                                           int);                                                             \
  template nn::Var<T> nn::encode_events<T>(nn::Tape<T>&, const VoxelGrid&, const nn::EncoderVars<T>&, int);  \
  template nn::SpatioTemporal<T> nn::st_map<T>(nn::Var<T>);                                                  \
  template nn::Var<T> nn::add_time_embedding<T>(nn::Var<T>, const std::vector<double>&, nn::Var<T>);

FEA_INSTANTIATE(float)
FEA_INSTANTIATE(double)

#undef FEA_INSTANTIATE

}  // namespace fea
