#include <gtest/gtest.h>
#include <omp.h>

#include <map>
#include <numeric>
#include <set>

#include "fea/pipeline.hpp"

namespace fea {
namespace {

GenConfig fixture_gen() {
  GenConfig c;
  c.width = 32;
  c.height = 32;
  c.duration_us = 400'000;
  c.frame_interval_us = 100'000;
  c.render_step_us = 2'000;
  c.size_min = 6;
  c.size_max = 10;
  c.speed_max = 30.0;
  c.visible_min_us = 60'000;
  c.visible_max_us = 240'000;
  return c;
}

ModelConfig fixture_model() {
  ModelConfig m;
  m.encoder = EncoderConfig{.patch = 8, .d = 8, .layers = 1, .mlp_hidden = 16, .time_features = 3};
  m.d_tok = 8;
  m.bins = 4;
  m.width = 32;
  m.height = 32;
  m.duration_us = 400'000;
  m.seed = 3;
  return m;
}

const std::vector<Sample>& fixture() {
  static const std::vector<Sample> s = make_samples(gen_dataset(32, 11, fixture_gen()), fixture_model());
  return s;
}

std::vector<Sample> first(size_t n) { return {fixture().begin(), fixture().begin() + n}; }

std::map<std::string, std::vector<float>> by_group(const Model& m) {
  std::map<std::string, std::vector<float>> out;
  for (size_t i = 0; i < m.params.size(); ++i) {
    const auto& p = m.params.at(i);
    auto& v = out[p.group];
    v.insert(v.end(), p.value.values().begin(), p.value.values().end());
  }
  return out;
}

std::set<std::string> changed_groups(const Model& a, const Model& b) {
  std::set<std::string> out;
  const auto ga = by_group(a), gb = by_group(b);
  for (const auto& [g, v] : ga)
    if (v != gb.at(g)) out.insert(g);
  return out;
}

double mean_loss(Stage stage, const Model& m, const std::vector<Sample>& data) {
  double acc = 0.0;
  for (const Sample& s : data) {
    nn::Tape<float> tape;
    Binding<float> bind(tape, m.params);
    acc += stage_objective(stage, bind, m, s, nullptr, false).value()[0];
  }
  return acc / static_cast<double>(data.size());
}

class FreezeContract : public ::testing::TestWithParam<Stage> {};

TEST_P(FreezeContract, OneStepTouchesExactlyTheDeclaredGroups) {
  const Model before(fixture_model(), AblationConfig{});
  Model after = before;
  StagePlan plan = default_plan(GetParam());
  plan.max_steps = 1;
  plan.batch = 4;
  const StageLog log = run_stage(plan, first(4), after);
  ASSERT_EQ(log.step_loss.size(), 1u);
  EXPECT_GT(log.step_loss[0], 0.0);
  const std::set<std::string> want(plan.trainable.begin(), plan.trainable.end());
  EXPECT_EQ(changed_groups(before, after), want);
  EXPECT_EQ(by_group(before).at("frame_encoder"), by_group(after).at("frame_encoder"));
}

INSTANTIATE_TEST_SUITE_P(Stages, FreezeContract, ::testing::Values(Stage::S1, Stage::S2, Stage::S3, Stage::S4),
                         [](const auto& info) { return to_string(info.param); });

TEST(RunStage, ZeroLearningRateChangesNothing) {
  const Model before(fixture_model(), AblationConfig{});
  Model after = before;
  StagePlan plan = default_plan(Stage::S4);
  plan.lr = 0.0;
  plan.max_steps = 3;
  plan.batch = 2;
  run_stage(plan, first(6), after);
  EXPECT_TRUE(changed_groups(before, after).empty());
}

TEST(RunStage, RejectsUnknownGroupAndBadPlan) {
  Model m(fixture_model(), AblationConfig{});
  StagePlan plan = default_plan(Stage::S1);
  plan.trainable.push_back("decoder");
  try {
    run_stage(plan, first(2), m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownGroup);
  }
  plan = default_plan(Stage::S1);
  plan.batch = 0;
  EXPECT_THROW(run_stage(plan, first(2), m), Error);
}

TEST(RunStage, DescriptorLossFallsOverHundredSteps) {
  Model m(fixture_model(), AblationConfig{});
  const auto data = first(16);
  const double start = mean_loss(Stage::S1, m, data);
  StagePlan plan = default_plan(Stage::S1);
  plan.batch = 4;
  plan.epochs = 25;  // 4 steps per epoch
  const StageLog log = run_stage(plan, data, m);
  ASSERT_EQ(log.step_loss.size(), 100u);
  EXPECT_LT(mean_loss(Stage::S1, m, data), start);
}

TEST(RunStage, GroundingLossFallsOverTwoHundredSteps) {
  Model m(fixture_model(), AblationConfig{});
  const double start = mean_loss(Stage::S3, m, fixture());
  StagePlan plan = default_plan(Stage::S3);
  plan.batch = 8;
  plan.epochs = 50;
  const StageLog log = run_stage(plan, fixture(), m);
  ASSERT_EQ(log.step_loss.size(), 200u);
  EXPECT_LT(mean_loss(Stage::S3, m, fixture()), start);
}

TEST(RunStage, ResultIndependentOfThreadCount) {
  auto train = [](int threads) {
    const int saved = omp_get_max_threads();
    omp_set_num_threads(threads);
    Model m(fixture_model(), AblationConfig{});
    StagePlan s3 = default_plan(Stage::S3), s4 = default_plan(Stage::S4);
    s3.batch = s4.batch = 5;
    s3.max_steps = s4.max_steps = 3;
    run_schedule({s3, s4}, first(10), m);
    omp_set_num_threads(saved);
    return m.to_checkpoint();
  };
  const Checkpoint a = train(1), b = train(3);
  ASSERT_EQ(a.tensors.size(), b.tensors.size());
  for (size_t i = 0; i < a.tensors.size(); ++i) EXPECT_EQ(a.tensors[i].data, b.tensors[i].data) << a.tensors[i].name;
}

TEST(Objectives, ExactTargetsGiveZeroLoss) {
  // Zeroing the projector output layer and setting its bias to the
  // descriptor makes every pooled token equal the descriptor.
  Model m(fixture_model(), AblationConfig{});
  const Sample& s = fixture()[0];
  for (float& v : m.params.value("projector.w2").values()) v = 0.0f;
  auto& b2 = m.params.value("projector.b2");
  for (size_t i = 0; i < b2.size(); ++i) b2[i] = static_cast<float>(s.descriptor[i]);
  nn::Tape<float> tape;
  Binding<float> bind(tape, m.params);
  const auto loss = stage_objective(Stage::S1, bind, m, s, nullptr, false);
  EXPECT_NEAR(loss.value()[0], 0.0, 1e-10);
}

TEST(Ablation, ConfigurationsShareInitialWeights) {
  AblationConfig frame_only;
  frame_only.vision_input = VisionInput::Frame;
  AblationConfig no_coord;
  no_coord.use_coord_embedding = false;
  const Model full(fixture_model(), AblationConfig{}), f(fixture_model(), frame_only), c(fixture_model(), no_coord);
  EXPECT_EQ(by_group(full), by_group(f));
  EXPECT_EQ(by_group(full), by_group(c));
}

TEST(Ablation, SwitchesRewireTheGraph) {
  const Sample& s = fixture()[1];
  auto run = [&](const AblationConfig& a) {
    const Model m(fixture_model(), a);
    nn::Tape<float> tape;
    Binding<float> bind(tape, m.params);
    const Tokens tk = forward(bind, m, s, make_query(s), nullptr, true);
    return std::map<std::string, Tensor<float>>{{"vs", tk.vs.value()},   {"vt", tk.vt.value()},
                                                 {"es", tk.es.value()},   {"et", tk.et.value()},
                                                 {"f_s", tk.f_s.value()}, {"f_t", tk.f_t.value()},
                                                 {"f_st", tk.f_st.value()}, {"v_st", tk.v_st.value()},
                                                 {"fused", tk.fused.value()}};
  };
  AblationConfig nomatch;
  nomatch.use_matching = false;
  auto t = run(nomatch);
  const size_t n = t["f_s"].rows();
  ASSERT_EQ(t["f_st"].rows(), n + t["f_t"].rows());
  for (size_t i = 0; i < t["f_s"].size(); ++i) EXPECT_EQ(t["f_st"][i], t["f_s"][i]);
  for (size_t i = 0; i < t["f_t"].size(); ++i) EXPECT_EQ(t["f_st"][t["f_s"].size() + i], t["f_t"][i]);

  AblationConfig frame_only;
  frame_only.vision_input = VisionInput::Frame;
  t = run(frame_only);
  for (float v : t["es"].values()) EXPECT_EQ(v, 0.0f);
  for (float v : t["et"].values()) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(t["f_t"], t["vt"]);

  AblationConfig event_only;
  event_only.vision_input = VisionInput::Event;
  t = run(event_only);
  for (float v : t["vs"].values()) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(t["f_s"], t["es"]);

  AblationConfig no_coord;
  no_coord.use_coord_embedding = false;
  t = run(no_coord);
  EXPECT_EQ(t["fused"], t["v_st"]);

  AblationConfig plain;
  plain.use_spatial_cattn = plain.use_temporal_cattn = false;
  t = run(plain);
  EXPECT_EQ(t["f_s"], t["vs"]);
  EXPECT_EQ(t["f_t"], t["et"]);
}

TEST(Schedule, StagedBeatsJointAtEqualStepBudget) {
  const auto& data = fixture();
  StagePlan s1 = default_plan(Stage::S1), s2 = default_plan(Stage::S2), s3 = default_plan(Stage::S3),
            s4 = default_plan(Stage::S4);
  // 200 updates of 8 scenes, shaped like the default schedule. Joint
  // training overtakes from roughly 300 updates on this fixture.
  for (StagePlan* p : {&s1, &s2, &s3, &s4}) p->batch = 8;
  s1.epochs = s2.epochs = s4.epochs = 1;
  s3.epochs = 47;
  Model staged(fixture_model(), AblationConfig{});
  run_schedule({s1, s2, s3, s4}, data, staged);

  StagePlan joint = default_plan(Stage::S4);
  joint.batch = 8;
  joint.epochs = s1.epochs + s2.epochs + s3.epochs + s4.epochs;
  Model single(fixture_model(), AblationConfig{});
  run_schedule({joint}, data, single);

  EXPECT_LT(mean_loss(Stage::S4, staged, data), mean_loss(Stage::S4, single, data));
}

TEST(Evaluate, ReportsPerSceneIous) {
  const Model m(fixture_model(), AblationConfig{});
  const auto data = first(5);
  const EvalReport r = evaluate(m, data);
  ASSERT_EQ(r.scenes.size(), 5u);
  double s = 0.0;
  for (const auto& row : r.scenes) {
    EXPECT_NEAR(row.s_iou, s_iou({row.pred[0], row.pred[1], row.pred[2], row.pred[3]},
                                 {row.target[0], row.target[1], row.target[2], row.target[3]}),
                1e-12);
    s += row.s_iou;
  }
  EXPECT_NEAR(r.mean_s_iou, s / 5.0, 1e-12);
  const std::string text = format_report(r, "fixture");
  EXPECT_NE(text.find("mean_s_iou"), std::string::npos);
}

TEST(Queries, ParityPicksTheGivenHalf) {
  const Sample& even = fixture()[0];
  const Sample& odd = fixture()[1];
  EXPECT_TRUE(make_query(even).p_given);
  EXPECT_FALSE(make_query(even).t_given);
  EXPECT_TRUE(make_query(odd).t_given);
  EXPECT_TRUE(make_query(odd, true).p_given);
}

}  // namespace
}  // namespace fea
