// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "radfield/fields.hpp"
#include "radfield/inverse.hpp"
#include "radfield/nn/network.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace radfield {

/// Invalid configuration; `key()` names the offending setting.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what) : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

enum class ConfigType { integer, unsigned_integer, real, string, boolean, int_list, named_values };

struct ConfigKey {
  std::string_view name;
  ConfigType type;
  std::string_view help;
};

/// Every recognized setting, shared by config files and command-line flags.
const std::vector<ConfigKey>& config_keys();

struct RunConfig {
  std::string scene;
  std::string output = "out";
  std::uint64_t seed = 1;
  int threads = 0;
  bool deterministic = false;

  int spp = 16;
  int max_depth = 15;
  int rr_depth = 5;

  nn::NetworkConfig network;
  TrainConfig train;
  std::string primal_checkpoint;
  std::string diff_checkpoint;

  std::string mode = "field-rhs";  // grad-image: field-lhs | field-rhs | fd | forward-dual
  std::string param;               // empty = all parameters
  double eps = 1e-3;
  int incident = 4;

  int iterations = 200;
  std::map<std::string, std::vector<double>> param_lr;
  std::map<std::string, std::vector<double>> target_params;
  std::string target_image;
  std::string gradient_mode = "rhs_eval";  // lhs_query | rhs_eval
  std::string gradient_source = "field";   // field | rb | prb
  std::string loss = "l2";
  int primal_spp = 16;
  int gradient_spp = 4;
  int finetune_diff_steps = 0;
  int finetune_primal_steps = 0;
  std::uint64_t primal_seed_stride = 1;
  double stop_sq_err = 0.0;

  std::vector<int> depths{2, 4, 8, 16};
  int runs = 8;
};

/// Overlays the keys of `j` onto `cfg`; unknown keys and wrong types throw.
void apply_json(RunConfig& cfg, const nlohmann::json& j);
RunConfig load_config_file(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const RunConfig& cfg);

/// Parses a command-line value for `key` into the JSON form apply_json takes.
nlohmann::json parse_flag_value(const ConfigKey& key, const std::string& text);

/// Range and consistency checks for `command`, before any compute starts.
void validate(const RunConfig& cfg, std::string_view command);

/// Expands per-entry values (scalar or one per channel) into a vector over
/// the scene's scalar parameters; `fill` covers entries not mentioned.
Eigen::VectorXd expand_named(const Scene& scene, const std::map<std::string, std::vector<double>>& values,
                             std::string_view key, double fill);

GradientMode parse_gradient_mode(const std::string& s);
GradientSource parse_gradient_source(const std::string& s);
LossKind parse_loss(const std::string& s);

}  // namespace radfield
