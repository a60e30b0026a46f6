// fea: command-line front end.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 numeric failure (a gradient check did not pass).

#include <omp.h>

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include "fea/dataset.hpp"
#include "fea/encoders.hpp"
#include "fea/error.hpp"
#include "fea/event_sim.hpp"
#include "fea/grad_suite.hpp"
#include "fea/io_formats.hpp"
#include "fea/pipeline.hpp"
#include "fea/run_config.hpp"

namespace {

using namespace fea;

constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kNumeric = 3;

void apply_thread_cap() {
  const char* env = std::getenv("FEA_THREADS");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n <= 0) throw Error(ErrorKind::BadConfig, std::string("FEA_THREADS must be a positive integer, got ") + env);
  omp_set_num_threads(static_cast<int>(n));
}

std::vector<Stage> parse_stage_list(const std::string& text) {
  std::vector<Stage> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_stage(item));
  if (out.empty()) throw Error(ErrorKind::BadConfig, "empty stage list");
  return out;
}

void write_row(std::string& out, int scene, const char* kind, std::span<const float> values) {
  out += std::to_string(scene);
  out += ' ';
  out += kind;
  char buf[32];
  for (float v : values) {
    std::snprintf(buf, sizeof(buf), " %.9g", static_cast<double>(v));
    out += buf;
  }
  out += '\n';
}

void write_rows(std::string& out, int scene, const char* kind, const Tensor<float>& t) {
  for (size_t r = 0; r < t.rows(); ++r) write_row(out, scene, kind, t.row(r));
}

int cmd_simulate(const std::string& frames, const std::string& out, double threshold, int64_t refractory) {
  SimConfig cfg;
  cfg.contrast_threshold = threshold;
  cfg.refractory_us = refractory;
  validate(cfg);
  const EventStream s = simulate_events(read_frames(frames), cfg);
  write_events(s, out);
  std::cout << s.events.size() << " events\n";
  return 0;
}

int cmd_voxelize(const std::string& events, int bins, const std::vector<int64_t>& window, const std::string& out) {
  const VoxelGrid g = voxelize(read_events(events), bins, window.at(0), window.at(1));
  const Tensor<float> t = voxel_tensor(g);
  Checkpoint ckpt;
  NamedTensor nt;
  nt.name = "voxels";
  for (size_t d : t.shape()) nt.shape.push_back(static_cast<uint32_t>(d));
  nt.data = t.values();
  ckpt.add(std::move(nt));
  save_checkpoint(ckpt, out);
  return 0;
}

int cmd_gen_dataset(int n, uint64_t seed, const std::string& out) {
  const auto scenes = gen_dataset(n, seed, GenConfig{});
  write_dataset(scenes, out);
  std::cout << scenes.size() << " scenes\n";
  return 0;
}

int cmd_train(const std::string& config, const std::string& stages, const std::string& out) {
  const TrainSetup setup = parse_train_config(RunConfig::read(config, train_config_keys()));
  std::vector<StagePlan> plans;
  for (Stage st : parse_stage_list(stages)) plans.push_back(setup.stages[static_cast<int>(st) - 1]);
  const auto samples = make_samples(read_dataset(setup.data), setup.model);
  Model model(setup.model, setup.ablation);
  run_schedule(plans, samples, model, [](const std::string& line) { std::cout << line << '\n' << std::flush; });
  save_checkpoint(model.to_checkpoint(), out);
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& report) {
  const Model model = Model::from_checkpoint(load_checkpoint(ckpt));
  const auto samples = make_samples(read_dataset(data), model.cfg);
  const EvalReport r = evaluate(model, samples);
  write_text_file(report, format_report(r, "eval " + ckpt + " on " + data));
  std::printf("mean_s_iou %.6f\nmean_t_iou %.6f\n", r.mean_s_iou, r.mean_t_iou);
  return 0;
}

int cmd_gradcheck(int bits, uint64_t seed, int shapes) {
  std::vector<nn::GradCheckReport> reports;
  double tol = 0.0;
  if (bits == 32) {
    reports = run_grad_suite<float>(seed, shapes);
    tol = nn::GradCheckDefaults<float>::tol;
  } else {
    reports = run_grad_suite<double>(seed, shapes);
    tol = nn::GradCheckDefaults<double>::tol;
  }
  bool all = true;
  std::printf("%-44s %12s  %s\n", "op shape", "max_rel_err", "result");
  for (const auto& r : reports) {
    std::printf("%-44s %12.3e  %s\n", r.name.c_str(), r.max_rel_error, r.passed ? "pass" : "FAIL");
    all = all && r.passed;
  }
  std::printf("%d-bit, tolerance %.0e: %s\n", bits, tol, all ? "all passed" : "FAILURES");
  return all ? 0 : kNumeric;
}

int cmd_export_tokens(const std::string& ckpt, const std::string& data, const std::string& out) {
  const Model model = Model::from_checkpoint(load_checkpoint(ckpt));
  const auto samples = make_samples(read_dataset(data), model.cfg);
  std::string text = "TOK1 " + std::to_string(model.cfg.encoder.d) + " " + std::to_string(model.cfg.d_tok) + "\n";
  for (const Sample& s : samples) {
    nn::Tape<float> tape;
    Binding<float> bind(tape, model.params);
    const Tokens tk = forward(bind, model, s, make_query(s), nullptr, true);
    write_rows(text, s.id, "vs", tk.vs.value());
    write_rows(text, s.id, "vt", tk.vt.value());
    write_rows(text, s.id, "es", tk.es.value());
    write_rows(text, s.id, "et", tk.et.value());
    write_rows(text, s.id, "fused", tk.fused.value());
    write_rows(text, s.id, "coord", tk.coord.value());
  }
  write_text_file(out, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frame-event fusion engine"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "Convert a frame sequence into an event stream");
  std::string sim_frames, sim_out;
  double sim_threshold = 0.2;
  int64_t sim_refractory = 0;
  sim->add_option("--frames", sim_frames, "FRM1 manifest")->required();
  sim->add_option("--out", sim_out, "EVT1 output")->required();
  sim->add_option("--threshold", sim_threshold, "contrast threshold C")->required();
  sim->add_option("--refractory", sim_refractory, "refractory period in microseconds");

  auto* vox = app.add_subcommand("voxelize", "Bin an event stream into a voxel grid tensor");
  std::string vox_events, vox_out;
  int vox_bins = 0;
  std::vector<int64_t> vox_window;
  vox->add_option("--events", vox_events, "EVT1 input")->required();
  vox->add_option("--bins", vox_bins, "temporal bins")->required();
  vox->add_option("--window", vox_window, "t0 t1 in microseconds")->required()->expected(2);
  vox->add_option("--out", vox_out, "tensor output (checkpoint format)")->required();

  auto* gen = app.add_subcommand("gen-dataset", "Generate synthetic moving-square scenes");
  int gen_n = 0;
  uint64_t gen_seed = 0;
  std::string gen_out;
  gen->add_option("--n", gen_n, "scene count")->required();
  gen->add_option("--seed", gen_seed, "generator seed")->required();
  gen->add_option("--out", gen_out, "output directory")->required();

  auto* train = app.add_subcommand("train", "Run training stages and write a checkpoint");
  std::string train_config, train_stages = "S1,S2,S3,S4", train_out;
  train->add_option("--config", train_config, "key = value config file")->required();
  train->add_option("--stages", train_stages, "comma-separated stages");
  train->add_option("--out", train_out, "checkpoint output")->required();

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  std::string ev_ckpt, ev_data, ev_report;
  ev->add_option("--ckpt", ev_ckpt, "checkpoint")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--report", ev_report, "report output")->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference checks of every differentiable op");
  int gc_bits = 64;
  uint64_t gc_seed = 1;
  int gc_shapes = 5;
  gc->add_option("--bits", gc_bits, "32 or 64")->check(CLI::IsMember({32, 64}));
  gc->add_option("--seed", gc_seed, "shape and value seed");
  gc->add_option("--shapes", gc_shapes, "random shapes per op")->check(CLI::PositiveNumber);

  auto* ex = app.add_subcommand("export-tokens", "Dump per-scene token sets as ASCII rows");
  std::string ex_ckpt, ex_data, ex_out;
  ex->add_option("--ckpt", ex_ckpt, "checkpoint")->required();
  ex->add_option("--data", ex_data, "dataset directory")->required();
  ex->add_option("--out", ex_out, "token dump output")->required();

  if (argc <= 1) {
    std::cerr << app.help();
    return kUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    return kUsage;
  }

  try {
    apply_thread_cap();
    if (*sim) return cmd_simulate(sim_frames, sim_out, sim_threshold, sim_refractory);
    if (*vox) return cmd_voxelize(vox_events, vox_bins, vox_window, vox_out);
    if (*gen) return cmd_gen_dataset(gen_n, gen_seed, gen_out);
    if (*train) return cmd_train(train_config, train_stages, train_out);
    if (*ev) return cmd_eval(ev_ckpt, ev_data, ev_report);
    if (*gc) return cmd_gradcheck(gc_bits, gc_seed, gc_shapes);
    if (*ex) return cmd_export_tokens(ex_ckpt, ex_data, ex_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    const bool usage = e.kind() == ErrorKind::BadConfig || e.kind() == ErrorKind::UnknownGroup;
    return usage ? kUsage : kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
