#pragma once

// Typed view over a `key = value` file for the `train` subcommand.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fea/pipeline.hpp"

namespace fea {

class RunConfig {
 public:
  // BadConfig for keys outside `allowed` or malformed lines.
  static RunConfig parse(const std::string& text, const std::set<std::string>& allowed);
  static RunConfig read(const std::filesystem::path& path, const std::set<std::string>& allowed);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void require(const std::string& key) const;

  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_real(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::filesystem::path get_path(const std::string& key) const;

 private:
  std::map<std::string, std::string> values_;
  std::filesystem::path base_;  // relative paths resolve against the config file
};

struct TrainSetup {
  ModelConfig model;
  AblationConfig ablation;
  std::vector<StagePlan> stages;  // S1..S4 in order
  std::filesystem::path data;
};

// Keys understood by the `train` subcommand.
const std::set<std::string>& train_config_keys();

// Defaults:
//   seed 1, d 32, d_tok 32, patch 8, bins 16, layers 1, mlp_hidden 64,
//   time_features 7, matching_post_norm false, batch 16, clip_norm 2,
//   lr_s1..lr_s3 0.05, lr_s4 0.01, epochs_s1 1, epochs_s2 1,
//   epochs_s3 150, epochs_s4 1, all ablation switches on,
//   vision_input frame+event. `data` is required.
TrainSetup parse_train_config(const RunConfig& cfg);

}  // namespace fea
