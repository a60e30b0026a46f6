#include "fea/run_config.hpp"

#include <charconv>

#include "fea/error.hpp"
#include "fea/io_formats.hpp"

namespace fea {
namespace {

template <class N>
N parse_number(const std::string& key, const std::string& text) {
  N v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorKind::BadConfig, "`" + key + "` expects a number, got `" + text + "`");
  }
  return v;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text, const std::set<std::string>& allowed) {
  RunConfig cfg;
  cfg.values_ = parse_config(text);
  for (const auto& [key, value] : cfg.values_) {
    if (!allowed.count(key)) throw Error(ErrorKind::BadConfig, "unknown config key `" + key + "`");
  }
  return cfg;
}

RunConfig RunConfig::read(const std::filesystem::path& path, const std::set<std::string>& allowed) {
  RunConfig cfg = parse(read_text_file(path), allowed);
  cfg.base_ = path.parent_path();
  return cfg;
}

void RunConfig::require(const std::string& key) const {
  if (!has(key)) throw Error(ErrorKind::BadConfig, "missing required config key `" + key + "`");
}

int64_t RunConfig::get_int(const std::string& key, int64_t fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_number<int64_t>(key, it->second);
}

double RunConfig::get_real(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_number<double>(key, it->second);
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw Error(ErrorKind::BadConfig, "`" + key + "` expects true/false, got `" + it->second + "`");
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::filesystem::path RunConfig::get_path(const std::string& key) const {
  require(key);
  std::filesystem::path p(values_.at(key));
  return p.is_relative() ? base_ / p : p;
}

const std::set<std::string>& train_config_keys() {
  static const std::set<std::string> keys = {
      "seed",        "d",          "d_tok",        "patch",       "bins",         "layers",
      "mlp_hidden",  "time_features", "matching_post_norm", "batch", "clip_norm",   "data",
      "lr_s1",       "lr_s2",      "lr_s3",        "lr_s4",       "epochs_s1",    "epochs_s2",
      "epochs_s3",   "epochs_s4",  "use_spatial_cattn", "use_temporal_cattn", "use_matching",
      "vision_input", "use_coord_embedding"};
  return keys;
}

TrainSetup parse_train_config(const RunConfig& cfg) {
  TrainSetup s;
  auto as_int = [&](const std::string& key, int64_t fallback) {
    const int64_t v = cfg.get_int(key, fallback);
    if (v < 0 || v > (1 << 20)) throw Error(ErrorKind::BadConfig, "`" + key + "` out of range");
    return static_cast<int>(v);
  };
  s.model.seed = static_cast<uint64_t>(cfg.get_int("seed", 1));
  s.model.encoder.d = as_int("d", 32);
  s.model.d_tok = as_int("d_tok", 32);
  s.model.encoder.patch = as_int("patch", 8);
  s.model.bins = as_int("bins", 16);
  s.model.encoder.layers = as_int("layers", 1);
  s.model.encoder.mlp_hidden = as_int("mlp_hidden", 64);
  s.model.encoder.time_features = as_int("time_features", 7);
  s.model.matching_post_norm = cfg.get_bool("matching_post_norm", false);
  validate(s.model);

  s.ablation.use_spatial_cattn = cfg.get_bool("use_spatial_cattn", true);
  s.ablation.use_temporal_cattn = cfg.get_bool("use_temporal_cattn", true);
  s.ablation.use_matching = cfg.get_bool("use_matching", true);
  s.ablation.vision_input = parse_vision_input(cfg.get_string("vision_input", "frame+event"));
  s.ablation.use_coord_embedding = cfg.get_bool("use_coord_embedding", true);

  const int batch = as_int("batch", 16);
  const double clip = cfg.get_real("clip_norm", 2.0);
  static const int kEpochs[4] = {1, 1, 150, 1};
  for (int i = 1; i <= 4; ++i) {
    StagePlan p = default_plan(static_cast<Stage>(i));
    const std::string n = std::to_string(i);
    p.lr = cfg.get_real("lr_s" + n, p.lr);
    p.epochs = as_int("epochs_s" + n, kEpochs[i - 1]);
    p.batch = batch;
    p.clip_norm = clip;
    if (!(p.lr >= 0.0) || p.batch <= 0) throw Error(ErrorKind::BadConfig, "stage S" + n + " needs lr >= 0, batch > 0");
    s.stages.push_back(p);
  }
  s.data = cfg.get_path("data");
  return s;
}

}  // namespace fea
