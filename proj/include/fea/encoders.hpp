#pragma once

// Frame and event encoders plus the spatiotemporal mapper.
//
// Both encoders share one structure: every time step (a frame, or one
// temporal bin of the event voxel grid) is cut into s x s patches, each
// patch is linearly embedded and offset by a learned per-patch position
// embedding, then passed through pre-norm transformer blocks and a final
// layer norm. Steps are encoded independently and stacked into [T, P, d].

#include <cstdint>
#include <string>
#include <vector>

#include "fea/autograd.hpp"
#include "fea/io_formats.hpp"
#include "fea/params.hpp"

namespace fea {

// ON/OFF event counts per (bin, y, x).
struct VoxelGrid {
  int bins = 0;
  int height = 0;
  int width = 0;
  std::vector<int32_t> on;
  std::vector<int32_t> off;

  size_t index(int b, int y, int x) const {
    return (static_cast<size_t>(b) * height + static_cast<size_t>(y)) * width + static_cast<size_t>(x);
  }
};

// Events with t in [t0, t1) land in bin floor(B (t - t0) / (t1 - t0)).
VoxelGrid voxelize(const EventStream& stream, int bins, int64_t t0, int64_t t1);

// Voxel grid as a [B, 2, H, W] float tensor (channel 0 = ON, 1 = OFF).
Tensor<float> voxel_tensor(const VoxelGrid& grid);

struct EncoderConfig {
  int patch = 8;
  int d = 64;
  int layers = 2;
  int mlp_hidden = 64;
  int time_features = 7;
};

// Sinusoidal features of a normalized time in [0, 1]:
// [tau, sin(k pi tau), cos(k pi tau) for k = 1..3].
std::vector<double> time_features(double tau, int count);

// Cuts a [C, H, W] image into [P, C*s*s] patch rows. Patches are ordered
// row-major over the patch grid; within a patch: channel, then row, then col.
template <class T>
Tensor<T> patchify(const float* image, int channels, int height, int width, int patch);

namespace nn {

template <class T>
struct BlockVars {
  Var<T> ln1_gamma, ln1_beta, w_q, w_k, w_v, ln2_gamma, ln2_beta, w1, b1, w2, b2;
};

template <class T>
struct EncoderVars {
  Var<T> patch_embed, position, ln_gamma, ln_beta, time_embed;
  std::vector<BlockVars<T>> blocks;
};

// x + attn(LN(x)); then x + MLP2(LN(x)).
template <class T>
Var<T> transformer_block(Var<T> x, const BlockVars<T>& p);

// One step: [P, patch_dim] -> [P, d].
template <class T>
Var<T> encode_step(Var<T> patches, const EncoderVars<T>& p);

// Stacks encoded steps into [T, P, d].
template <class T>
Var<T> encode_steps(Tape<T>& tape, const std::vector<Tensor<T>>& patches, const EncoderVars<T>& p);

template <class T>
Var<T> encode_frames(Tape<T>& tape, const FrameSequence& frames, const EncoderVars<T>& p, int patch);
template <class T>
Var<T> encode_events(Tape<T>& tape, const VoxelGrid& grid, const EncoderVars<T>& p, int patch);

// Inner-product pooling around the mean.
//   spatial[p]  = sum_t softmax_t(<f[t,p], mean_t f[.,p]> / sqrt d) f[t,p]
//   temporal[t] = sum_p softmax_p(<f[t,p], mean_p f[t,.]> / sqrt d) f[t,p]
template <class T>
struct SpatioTemporal {
  Var<T> spatial;   // [P, d]
  Var<T> temporal;  // [T, d]
};

template <class T>
SpatioTemporal<T> st_map(Var<T> features);

// temporal[t] += time_features(times[t]) * W, W = [time_features, d].
template <class T>
Var<T> add_time_embedding(Var<T> temporal, const std::vector<double>& times, Var<T> w);

}  // namespace nn

// 2-D sinusoidal table for a rows x cols patch grid, [rows*cols, d]. The
// first half of each row encodes the grid row, the second half the column.
std::vector<double> grid_position_table(int rows, int cols, int d);

// Registers one encoder's parameters under `prefix`. Position embeddings
// start from grid_position_table rather than noise.
template <class T>
void register_encoder(ParamStore<T>& store, const std::string& prefix, int patch_dim, int grid_rows, int grid_cols,
                      const EncoderConfig& cfg, uint64_t seed);

template <class T>
nn::EncoderVars<T> bind_encoder(Binding<T>& bind, const std::string& prefix, int layers);

// Patchified inputs for each modality, validated against the patch size.
template <class T>
std::vector<Tensor<T>> frame_patches(const FrameSequence& frames, int patch);
template <class T>
std::vector<Tensor<T>> event_patches(const VoxelGrid& grid, int patch);

}  // namespace fea
