#include "fea/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "fea/rng.hpp"

namespace fea {

using nn::Var;

namespace {

constexpr double kMomentum = 0.9;

const char* const kFrameEncoder = "frame_encoder";
const char* const kEventEncoder = "event_encoder";

int patch_count(const ModelConfig& cfg) {
  return (cfg.height / cfg.encoder.patch) * (cfg.width / cfg.encoder.patch);
}

Tensor<float> descriptor_target(const std::vector<double>& desc) {
  Tensor<float> t({1, desc.size()});
  for (size_t i = 0; i < desc.size(); ++i) t[i] = static_cast<float>(desc[i]);
  return t;
}

nn::SpatioTemporal<float> encode_modality(Binding<float>& bind, const Model& model, const std::string& prefix,
                                          const std::vector<Tensor<float>>& patches,
                                          const std::vector<double>& times) {
  auto enc = bind_encoder(bind, prefix, model.cfg.encoder.layers);
  auto st = nn::st_map(nn::encode_steps(bind.tape(), patches, enc));
  st.temporal = nn::add_time_embedding(st.temporal, times, enc.time_embed);
  return st;
}

}  // namespace

Stage parse_stage(const std::string& s) {
  if (s == "S1") return Stage::S1;
  if (s == "S2") return Stage::S2;
  if (s == "S3") return Stage::S3;
  if (s == "S4") return Stage::S4;
  throw Error(ErrorKind::BadConfig, "unknown stage '" + s + "'");
}

std::string to_string(Stage s) { return "S" + std::to_string(static_cast<int>(s)); }

VisionInput parse_vision_input(const std::string& s) {
  if (s == "frame") return VisionInput::Frame;
  if (s == "event") return VisionInput::Event;
  if (s == "frame+event") return VisionInput::FrameEvent;
  throw Error(ErrorKind::BadConfig, "vision_input must be frame, event or frame+event, got '" + s + "'");
}

std::string to_string(VisionInput v) {
  switch (v) {
    case VisionInput::Frame: return "frame";
    case VisionInput::Event: return "event";
    case VisionInput::FrameEvent: return "frame+event";
  }
  return "?";
}

void validate(const ModelConfig& cfg) {
  const auto& e = cfg.encoder;
  const bool ok = e.patch > 0 && e.d > 0 && e.layers >= 0 && e.mlp_hidden > 0 && e.time_features > 0 &&
                  e.time_features % 2 == 1 && cfg.d_tok >= 8 && cfg.bins > 0 && cfg.width > 0 && cfg.height > 0 &&
                  cfg.duration_us > 0;
  if (!ok) throw Error(ErrorKind::BadConfig, "invalid model configuration");
  if (cfg.width % e.patch != 0 || cfg.height % e.patch != 0) {
    throw Error(ErrorKind::PatchSizeMismatch, "patch size must divide the image size");
  }
}

Model::Model(const ModelConfig& c, const AblationConfig& a) : cfg(c), ablation(a) {
  validate(cfg);
  const int p = cfg.encoder.patch;
  const int rows = cfg.height / p, cols = cfg.width / p;
  register_encoder(params, kFrameEncoder, p * p, rows, cols, cfg.encoder, cfg.seed);
  register_encoder(params, kEventEncoder, 2 * p * p, rows, cols, cfg.encoder, cfg.seed);
  register_fusion(params, cfg.encoder.d, cfg.matching_post_norm, cfg.seed);
  register_alignment(params, cfg.encoder.d, cfg.d_tok, cfg.seed);
  register_head(params, cfg.d_tok, cfg.seed);
}

Checkpoint Model::to_checkpoint() const {
  Checkpoint ckpt;
  params.append_to(ckpt);
  const auto& e = cfg.encoder;
  NamedTensor meta{"meta.model", {12}, {}};
  meta.data = {static_cast<float>(e.patch),
               static_cast<float>(e.d),
               static_cast<float>(e.layers),
               static_cast<float>(e.mlp_hidden),
               static_cast<float>(e.time_features),
               static_cast<float>(cfg.d_tok),
               static_cast<float>(cfg.bins),
               cfg.matching_post_norm ? 1.0f : 0.0f,
               static_cast<float>(cfg.width),
               static_cast<float>(cfg.height),
               static_cast<float>(cfg.duration_us / 1000),
               static_cast<float>(cfg.seed % (1u << 24))};
  ckpt.add(std::move(meta));
  NamedTensor abl{"meta.ablation", {5}, {}};
  abl.data = {ablation.use_spatial_cattn ? 1.0f : 0.0f, ablation.use_temporal_cattn ? 1.0f : 0.0f,
              ablation.use_matching ? 1.0f : 0.0f, static_cast<float>(static_cast<int>(ablation.vision_input)),
              ablation.use_coord_embedding ? 1.0f : 0.0f};
  ckpt.add(std::move(abl));
  return ckpt;
}

Model Model::from_checkpoint(const Checkpoint& ckpt) {
  const NamedTensor* meta = ckpt.find("meta.model");
  const NamedTensor* abl = ckpt.find("meta.ablation");
  if (meta == nullptr || abl == nullptr || meta->data.size() != 12 || abl->data.size() != 5) {
    throw Error(ErrorKind::MissingCheckpoint, "checkpoint lacks model metadata");
  }
  const auto& m = meta->data;
  ModelConfig cfg;
  cfg.encoder.patch = static_cast<int>(m[0]);
  cfg.encoder.d = static_cast<int>(m[1]);
  cfg.encoder.layers = static_cast<int>(m[2]);
  cfg.encoder.mlp_hidden = static_cast<int>(m[3]);
  cfg.encoder.time_features = static_cast<int>(m[4]);
  cfg.d_tok = static_cast<int>(m[5]);
  cfg.bins = static_cast<int>(m[6]);
  cfg.matching_post_norm = m[7] != 0.0f;
  cfg.width = static_cast<int>(m[8]);
  cfg.height = static_cast<int>(m[9]);
  cfg.duration_us = static_cast<int64_t>(m[10]) * 1000;
  cfg.seed = static_cast<uint64_t>(m[11]);
  AblationConfig a;
  a.use_spatial_cattn = abl->data[0] != 0.0f;
  a.use_temporal_cattn = abl->data[1] != 0.0f;
  a.use_matching = abl->data[2] != 0.0f;
  const int v = static_cast<int>(abl->data[3]);
  if (v < 0 || v > 2) throw Error(ErrorKind::BadConfig, "bad vision input in checkpoint");
  a.vision_input = static_cast<VisionInput>(v);
  a.use_coord_embedding = abl->data[4] != 0.0f;
  Model model(cfg, a);
  model.params.load_from(ckpt);
  return model;
}

Sample make_sample(const SyntheticScene& scene, const ModelConfig& cfg) {
  if (scene.frames.width != cfg.width || scene.frames.height != cfg.height) {
    throw Error(ErrorKind::DimensionMismatch, "scene " + std::to_string(scene.id) + " is " +
                                                  std::to_string(scene.frames.width) + "x" +
                                                  std::to_string(scene.frames.height));
  }
  Sample s;
  s.id = scene.id;
  const int p = cfg.encoder.patch;
  s.frame_patches = frame_patches<float>(scene.frames, p);
  s.event_patches = event_patches<float>(voxelize(scene.events, cfg.bins, 0, cfg.duration_us), p);
  const double dur = static_cast<double>(cfg.duration_us);
  for (const Frame& f : scene.frames.frames) s.frame_times.push_back(static_cast<double>(f.t) / dur);
  for (int b = 0; b < cfg.bins; ++b) s.bin_times.push_back((b + 0.5) / cfg.bins);
  const auto& a = scene.annotation;
  s.target = {a.bbox[0], a.bbox[1], a.bbox[2], a.bbox[3], a.interval[0], a.interval[1]};

  GenConfig g;
  g.width = cfg.width;
  g.height = cfg.height;
  g.duration_us = cfg.duration_us;
  s.descriptor = scene_descriptor(scene, g);
  s.descriptor.resize(static_cast<size_t>(cfg.d_tok), 0.0);
  return s;
}

std::vector<Sample> make_samples(const std::vector<SyntheticScene>& scenes, const ModelConfig& cfg) {
  std::vector<Sample> out(scenes.size());
#pragma omp parallel for schedule(dynamic)
  for (size_t i = 0; i < scenes.size(); ++i) out[i] = make_sample(scenes[i], cfg);
  return out;
}

CoordinateQuery make_query(const Sample& s, bool flip) {
  CoordinateQuery q;
  const bool box_given = (s.id % 2 == 0) != flip;
  if (box_given) {
    q.p = {s.target[0], s.target[1], s.target[2], s.target[3]};
    q.p_given = true;
  } else {
    q.t = {s.target[4], s.target[5]};
    q.t_given = true;
  }
  return q;
}

EncodedScene encode_scene(const Model& model, const Sample& s) {
  nn::Tape<float> tape;
  Binding<float> bind(tape, model.params);
  EncodedScene out;
  auto fv = encode_modality(bind, model, kFrameEncoder, s.frame_patches, s.frame_times);
  auto fe = encode_modality(bind, model, kEventEncoder, s.event_patches, s.bin_times);
  out.vs = fv.spatial.value();
  out.vt = fv.temporal.value();
  out.es = fe.spatial.value();
  out.et = fe.temporal.value();
  return out;
}

std::vector<EncodedScene> encode_all(const Model& model, const std::vector<Sample>& samples) {
  std::vector<EncodedScene> out(samples.size());
#pragma omp parallel for schedule(dynamic)
  for (size_t i = 0; i < samples.size(); ++i) out[i] = encode_scene(model, samples[i]);
  return out;
}

Tokens forward(Binding<float>& bind, const Model& model, const Sample& s, const CoordinateQuery& q,
               const EncodedScene* cache, bool with_head) {
  nn::Tape<float>& tape = bind.tape();
  const AblationConfig& ab = model.ablation;
  const size_t d = static_cast<size_t>(model.cfg.encoder.d);
  const size_t patches = static_cast<size_t>(patch_count(model.cfg));
  Tokens tk;

  if (ab.vision_input == VisionInput::Event) {
    tk.vs = tape.constant(Tensor<float>({patches, d}));
    tk.vt = tape.constant(Tensor<float>({s.frame_times.size(), d}));
  } else if (cache != nullptr && !bind.trains(kFrameEncoder)) {
    tk.vs = tape.constant(cache->vs);
    tk.vt = tape.constant(cache->vt);
  } else {
    auto st = encode_modality(bind, model, kFrameEncoder, s.frame_patches, s.frame_times);
    tk.vs = st.spatial;
    tk.vt = st.temporal;
  }

  if (ab.vision_input == VisionInput::Frame) {
    tk.es = tape.constant(Tensor<float>({patches, d}));
    tk.et = tape.constant(Tensor<float>({s.bin_times.size(), d}));
  } else if (cache != nullptr && !bind.trains(kEventEncoder)) {
    tk.es = tape.constant(cache->es);
    tk.et = tape.constant(cache->et);
  } else {
    auto st = encode_modality(bind, model, kEventEncoder, s.event_patches, s.bin_times);
    tk.es = st.spatial;
    tk.et = st.temporal;
  }

  if (ab.vision_input == VisionInput::Event) {
    tk.f_s = tk.es;
  } else if (ab.use_spatial_cattn) {
    tk.f_s = nn::cross_attn_spatial(tk.vs, tk.es, bind_cross(bind, "fusion_spatial"));
  } else {
    tk.f_s = tk.vs;
  }

  if (ab.vision_input == VisionInput::Frame) {
    tk.f_t = tk.vt;
  } else if (ab.use_temporal_cattn) {
    tk.f_t = nn::cross_attn_temporal(tk.et, tk.vt, bind_cross(bind, "fusion_temporal"));
  } else {
    tk.f_t = tk.et;
  }

  if (ab.use_matching) {
    const auto attn = bind_attention(bind, "matching");
    if (model.cfg.matching_post_norm) {
      const Var<float> g = bind("matching.ln.gamma"), b = bind("matching.ln.beta");
      tk.f_st = nn::self_attn_match(tk.f_s, tk.f_t, attn, &g, &b);
    } else {
      tk.f_st = nn::self_attn_match(tk.f_s, tk.f_t, attn);
    }
  } else {
    tk.f_st = nn::concat_rows(tk.f_s, tk.f_t);
  }

  tk.v_st = nn::project_tokens(tk.f_st, bind_projector(bind));
  if (!with_head) return tk;

  tk.coord = nn::coord_token(q, bind("coord.w_p"), bind("coord.w_t"));
  const Var<float> alpha = ab.use_coord_embedding ? bind("coord.alpha") : tape.constant(Tensor<float>({1}));
  tk.fused = nn::embed_coordinates(tk.v_st, tk.coord, alpha);
  tk.pred = nn::ground(tk.fused, bind_head(bind));
  return tk;
}

Var<float> stage_objective(Stage stage, Binding<float>& bind, const Model& model, const Sample& s,
                           const EncodedScene* cache, bool flip_query) {
  if (stage == Stage::S1 || stage == Stage::S2) {
    const Tokens tk = forward(bind, model, s, CoordinateQuery{}, cache, false);
    return nn::mse(nn::mean_rows(tk.v_st), descriptor_target(s.descriptor));
  }
  const Tokens tk = forward(bind, model, s, make_query(s, flip_query), cache, true);
  return nn::grounding_loss(tk.pred, s.target);
}

StagePlan default_plan(Stage stage) {
  StagePlan p;
  p.stage = stage;
  switch (stage) {
    case Stage::S1:
      p.trainable = {"projector"};
      p.lr = 0.05;
      break;
    case Stage::S2:
      p.trainable = {"fusion_spatial", "fusion_temporal", "matching"};
      p.lr = 0.05;
      break;
    case Stage::S3:
      p.trainable = {"coord", "matching", "head"};
      p.lr = 0.05;
      break;
    case Stage::S4:
      p.trainable = {kEventEncoder, "fusion_spatial", "fusion_temporal", "matching", "projector", "coord", "head"};
      p.lr = 0.01;
      break;
  }
  return p;
}

StageLog run_stage(const StagePlan& plan, const std::vector<Sample>& data, Model& model, const LogSink& log,
                   const std::vector<EncodedScene>* cache) {
  const std::set<std::string> groups = model.params.groups();
  for (const auto& g : plan.trainable) {
    if (!groups.count(g)) throw Error(ErrorKind::UnknownGroup, "no parameter group named " + g);
  }
  if (plan.epochs < 0 || plan.batch <= 0 || !(plan.lr >= 0.0)) {
    throw Error(ErrorKind::BadConfig, "stage " + to_string(plan.stage) + " needs epochs >= 0, batch > 0, lr >= 0");
  }
  const std::set<std::string> trainable(plan.trainable.begin(), plan.trainable.end());
  StageLog out;
  out.stage = plan.stage;
  if (data.empty() || plan.epochs == 0) return out;

  std::vector<EncodedScene> own_cache;
  if (cache == nullptr && (!trainable.count(kFrameEncoder) || !trainable.count(kEventEncoder))) {
    own_cache = encode_all(model, data);
    cache = &own_cache;
  }
  if (cache != nullptr && cache->size() != data.size()) {
    throw Error(ErrorKind::ShapeMismatch, "encoder cache does not match the data");
  }

  std::vector<Tensor<float>> velocity(model.params.size());
  std::vector<size_t> order(data.size());
  int64_t steps = 0;
  const float lr = static_cast<float>(plan.lr);

  for (int epoch = 0; epoch < plan.epochs; ++epoch) {
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(Rng::derive(model.cfg.seed, to_string(plan.stage) + "/epoch" + std::to_string(epoch)));
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.integer(0, static_cast<int64_t>(i) - 1)]);

    double epoch_sum = 0.0;
    size_t epoch_count = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(plan.batch)) {
      if (plan.max_steps >= 0 && steps >= plan.max_steps) break;
      const size_t n = std::min(static_cast<size_t>(plan.batch), order.size() - start);
      std::vector<std::vector<Tensor<float>>> grads(n);
      std::vector<double> losses(n, 0.0);
#pragma omp parallel for schedule(dynamic)
      for (size_t k = 0; k < n; ++k) {
        const size_t idx = order[start + k];
        nn::Tape<float> tape;
        Binding<float> bind(tape, model.params, trainable);
        const Var<float> loss = stage_objective(plan.stage, bind, model, data[idx],
                                                cache ? &(*cache)[idx] : nullptr, epoch % 2 == 1);
        losses[k] = loss.value()[0];
        tape.backward(loss);
        bind.collect(grads[k]);
      }

      std::vector<Tensor<float>> total(model.params.size());
      double batch_loss = 0.0;
      for (size_t k = 0; k < n; ++k) {
        batch_loss += losses[k];
        for (size_t i = 0; i < total.size(); ++i) {
          const Tensor<float>& g = grads[k][i];
          if (g.size() == 0) continue;
          if (total[i].size() == 0) total[i] = Tensor<float>(g.shape());
          for (size_t j = 0; j < g.size(); ++j) total[i][j] += g[j];
        }
      }
      double sq = 0.0;
      for (const auto& g : total)
        for (float v : g.values()) sq += static_cast<double>(v) * v;
      const double norm = std::sqrt(sq) / static_cast<double>(n);
      double factor = 1.0 / static_cast<double>(n);
      if (plan.clip_norm > 0.0 && norm > plan.clip_norm) factor *= plan.clip_norm / norm;
      const float inv = static_cast<float>(factor);
      for (size_t i = 0; i < total.size(); ++i) {
        Param<float>& p = model.params.at(i);
        if (!trainable.count(p.group) || total[i].size() == 0) continue;
        if (velocity[i].size() == 0) velocity[i] = Tensor<float>(p.value.shape());
        for (size_t j = 0; j < p.value.size(); ++j) {
          velocity[i][j] = static_cast<float>(kMomentum) * velocity[i][j] + total[i][j] * inv;
          p.value[j] -= lr * velocity[i][j];
        }
      }
      out.step_loss.push_back(batch_loss / static_cast<double>(n));
      out.grad_norm.push_back(norm);
      epoch_sum += batch_loss;
      epoch_count += n;
      ++steps;
    }
    if (epoch_count == 0) break;
    out.epoch_loss.push_back(epoch_sum / static_cast<double>(epoch_count));
    if (log) {
      char line[128];
      std::snprintf(line, sizeof(line), "stage %s epoch %d/%d loss %.6f", to_string(plan.stage).c_str(), epoch + 1,
                    plan.epochs, out.epoch_loss.back());
      log(line);
    }
  }
  return out;
}

EvalReport evaluate(const Model& model, const std::vector<Sample>& data) {
  EvalReport r;
  r.scenes.resize(data.size());
#pragma omp parallel for schedule(dynamic)
  for (size_t i = 0; i < data.size(); ++i) {
    nn::Tape<float> tape;
    Binding<float> bind(tape, model.params);
    const Tokens tk = forward(bind, model, data[i], make_query(data[i]), nullptr, true);
    SceneResult& sr = r.scenes[i];
    sr.id = data[i].id;
    for (int k = 0; k < 6; ++k) sr.pred[k] = tk.pred.value()[k];
    sr.target = data[i].target;
    sr.s_iou = s_iou({sr.pred[0], sr.pred[1], sr.pred[2], sr.pred[3]},
                     {sr.target[0], sr.target[1], sr.target[2], sr.target[3]});
    sr.t_iou = t_iou({sr.pred[4], sr.pred[5]}, {sr.target[4], sr.target[5]});
  }
  for (const auto& sr : r.scenes) {
    r.mean_s_iou += sr.s_iou;
    r.mean_t_iou += sr.t_iou;
  }
  if (!r.scenes.empty()) {
    r.mean_s_iou /= static_cast<double>(r.scenes.size());
    r.mean_t_iou /= static_cast<double>(r.scenes.size());
  }
  return r;
}

std::string format_report(const EvalReport& r, const std::string& title) {
  std::string out = "# " + title + "\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "scenes %zu\nmean_s_iou %.6f\nmean_t_iou %.6f\n", r.scenes.size(), r.mean_s_iou,
                r.mean_t_iou);
  out += buf;
  out += "# scene s_iou t_iou pred_x1 pred_y1 pred_x2 pred_y2 pred_t0 pred_t1\n";
  for (const auto& s : r.scenes) {
    std::snprintf(buf, sizeof(buf), "%d %.6f %.6f %.6f %.6f %.6f %.6f %.6f %.6f\n", s.id, s.s_iou, s.t_iou, s.pred[0],
                  s.pred[1], s.pred[2], s.pred[3], s.pred[4], s.pred[5]);
    out += buf;
  }
  return out;
}

std::vector<StageLog> run_schedule(const std::vector<StagePlan>& stages, const std::vector<Sample>& data,
                                   Model& model, const LogSink& log) {
  std::vector<StageLog> logs;
  std::vector<EncodedScene> cache;
  std::set<std::string> touched;
  for (const auto& plan : stages) {
    const bool fresh = !touched.count(kFrameEncoder) && !touched.count(kEventEncoder);
    if (fresh && cache.empty() && !data.empty()) cache = encode_all(model, data);
    logs.push_back(run_stage(plan, data, model, log, fresh && !cache.empty() ? &cache : nullptr));
    touched.insert(plan.trainable.begin(), plan.trainable.end());
  }
  return logs;
}

AblationResult run_ablation(const ModelConfig& mcfg, const AblationConfig& cfg, const TrainSchedule& schedule,
                            const std::vector<Sample>& train, const std::vector<Sample>& test, const LogSink& log) {
  if (schedule.stages.empty()) throw Error(ErrorKind::BadConfig, "empty training schedule");
  AblationResult res;
  res.ablation = cfg;
  Model model(mcfg, cfg);
  res.logs = run_schedule(schedule.stages, train, model, log);
  res.report = evaluate(model, test);
  return res;
}

}  // namespace fea
