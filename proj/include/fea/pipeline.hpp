#pragma once

// Model assembly, ablation switches and the four-stage training schedule.
//
//   frames -> frame_encoder -> st_map --+-- fusion_spatial  (frames primary) --+
//   events -> event_encoder -> st_map --+-- fusion_temporal (events primary) --+-- matching
//     -> projector -> + alpha * coord -> head -> (box, interval)

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fea/alignment.hpp"
#include "fea/dataset.hpp"
#include "fea/encoders.hpp"
#include "fea/fusion.hpp"
#include "fea/grounding.hpp"
#include "fea/params.hpp"

namespace fea {

enum class Stage { S1 = 1, S2 = 2, S3 = 3, S4 = 4 };
enum class VisionInput { Frame, Event, FrameEvent };

Stage parse_stage(const std::string& s);
std::string to_string(Stage s);
VisionInput parse_vision_input(const std::string& s);
std::string to_string(VisionInput v);

struct ModelConfig {
  EncoderConfig encoder{.patch = 8, .d = 32, .layers = 1, .mlp_hidden = 64, .time_features = 7};
  int d_tok = 32;
  int bins = 16;
  bool matching_post_norm = false;
  int width = 64;
  int height = 64;
  int64_t duration_us = 2'000'000;
  uint64_t seed = 1;
};

void validate(const ModelConfig& cfg);

struct AblationConfig {
  bool use_spatial_cattn = true;
  bool use_temporal_cattn = true;
  bool use_matching = true;
  VisionInput vision_input = VisionInput::FrameEvent;
  bool use_coord_embedding = true;
};

// Every parameter is registered whatever the ablation, so configurations
// that share a seed start from identical values.
struct Model {
  ModelConfig cfg;
  AblationConfig ablation;
  ParamStore<float> params;

  Model(const ModelConfig& cfg, const AblationConfig& ablation);

  Checkpoint to_checkpoint() const;
  static Model from_checkpoint(const Checkpoint& ckpt);
};

// One scene, ready for the network.
struct Sample {
  int id = 0;
  std::vector<Tensor<float>> frame_patches;
  std::vector<Tensor<float>> event_patches;
  std::vector<double> frame_times;  // normalized to [0, 1]
  std::vector<double> bin_times;    // bin centres, normalized
  Prediction target{};
  std::vector<double> descriptor;
};

Sample make_sample(const SyntheticScene& scene, const ModelConfig& cfg);
std::vector<Sample> make_samples(const std::vector<SyntheticScene>& scenes, const ModelConfig& cfg);

// Scene parity picks the given half: even ids give the box, odd ids give
// the interval. `flip` swaps the choice.
CoordinateQuery make_query(const Sample& s, bool flip = false);

// Encoder outputs after st_map and time embedding.
struct EncodedScene {
  Tensor<float> vs, vt, es, et;
};

EncodedScene encode_scene(const Model& model, const Sample& s);
std::vector<EncodedScene> encode_all(const Model& model, const std::vector<Sample>& samples);

// All intermediate token sets of one forward pass.
struct Tokens {
  nn::Var<float> vs, vt, es, et;
  nn::Var<float> f_s, f_t, f_st;
  nn::Var<float> v_st, coord, fused;
  nn::Var<float> pred;
};

// Builds the graph. Encoders are re-run on the tape when `cache` is null or
// their group is trainable; otherwise the cached values enter as constants.
Tokens forward(Binding<float>& bind, const Model& model, const Sample& s, const CoordinateQuery& q,
               const EncodedScene* cache, bool with_head);

// S1/S2: descriptor regression on mean-pooled projected tokens.
// S3/S4: grounding loss on the head output.
nn::Var<float> stage_objective(Stage stage, Binding<float>& bind, const Model& model, const Sample& s,
                               const EncodedScene* cache, bool flip_query);

struct StagePlan {
  Stage stage = Stage::S1;
  std::vector<std::string> trainable;
  int epochs = 1;
  double lr = 0.05;
  int batch = 16;
  int64_t max_steps = -1;   // stop early after this many updates when >= 0
  double clip_norm = 2.0;   // global gradient-norm cap; <= 0 disables
};

StagePlan default_plan(Stage stage);

struct StageLog {
  Stage stage = Stage::S1;
  std::vector<double> epoch_loss;  // mean sample loss per epoch
  std::vector<double> step_loss;   // mean batch loss per update
  std::vector<double> grad_norm;   // pre-clip gradient norm per update
};

using LogSink = std::function<void(const std::string&)>;

// Momentum SGD (0.9) over the plan's groups; every other group is left
// bit-identical. Gradients are merged in sample order, so the result does
// not depend on the thread count. `cache`, when given, must hold
// encode_all() of the current encoder weights; it is only read for
// encoders the plan keeps frozen.
StageLog run_stage(const StagePlan& plan, const std::vector<Sample>& data, Model& model,
                   const LogSink& log = nullptr, const std::vector<EncodedScene>* cache = nullptr);

// Runs the stages in order, sharing one encoder cache until a stage
// trains an encoder.
std::vector<StageLog> run_schedule(const std::vector<StagePlan>& stages, const std::vector<Sample>& data,
                                   Model& model, const LogSink& log = nullptr);

struct SceneResult {
  int id = 0;
  Prediction pred{};
  Prediction target{};
  double s_iou = 0.0;
  double t_iou = 0.0;
};

struct EvalReport {
  std::vector<SceneResult> scenes;
  double mean_s_iou = 0.0;
  double mean_t_iou = 0.0;
};

EvalReport evaluate(const Model& model, const std::vector<Sample>& data);
std::string format_report(const EvalReport& r, const std::string& title);

struct TrainSchedule {
  std::vector<StagePlan> stages;
};

struct AblationResult {
  AblationConfig ablation;
  std::vector<StageLog> logs;
  EvalReport report;
};

// Trains a fresh model with the given switches through the schedule and
// evaluates it on `test`. BadConfig for an empty schedule.
AblationResult run_ablation(const ModelConfig& mcfg, const AblationConfig& cfg, const TrainSchedule& schedule,
                            const std::vector<Sample>& train, const std::vector<Sample>& test,
                            const LogSink& log = nullptr);

}  // namespace fea
