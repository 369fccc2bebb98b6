// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#include "radfield/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace radfield {

using nlohmann::json;

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys{
      {"scene", ConfigType::string, "scene file"},
      {"output", ConfigType::string, "output directory"},
      {"seed", ConfigType::unsigned_integer, "base random seed"},
      {"threads", ConfigType::integer, "worker threads (0 = all cores)"},
      {"deterministic", ConfigType::boolean, "force sequential, order-fixed reductions"},
      {"spp", ConfigType::integer, "samples per pixel"},
      {"max_depth", ConfigType::integer, "maximum path segments"},
      {"rr_depth", ConfigType::integer, "first vertex subject to Russian roulette"},
      {"hidden_width", ConfigType::integer, "MLP hidden width"},
      {"hidden_layers", ConfigType::integer, "MLP hidden layer count"},
      {"grid_resolutions", ConfigType::int_list, "feature grid resolutions"},
      {"feature_dim", ConfigType::integer, "features per grid vertex"},
      {"batch", ConfigType::integer, "surface samples per training step (N)"},
      {"incident", ConfigType::integer, "incident samples per record (M)"},
      {"lr", ConfigType::real, "network learning rate"},
      {"lr_half_life", ConfigType::integer, "steps per halving of the network learning rate (0 = constant)"},
      {"steps", ConfigType::integer, "training steps"},
      {"relative_loss", ConfigType::boolean, "normalize residuals by the left-hand side"},
      {"primal_checkpoint", ConfigType::string, "primal field checkpoint"},
      {"diff_checkpoint", ConfigType::string, "differential field checkpoint"},
      {"mode", ConfigType::string, "grad-image mode: field-lhs | field-rhs | fd | forward-dual"},
      {"param", ConfigType::string, "parameter name (empty = all)"},
      {"eps", ConfigType::real, "finite-difference step"},
      {"iterations", ConfigType::integer, "optimization iterations"},
      {"param_lr", ConfigType::named_values, "per-parameter learning rates"},
      {"target_params", ConfigType::named_values, "target parameter values"},
      {"target_image", ConfigType::string, "target image (PFM)"},
      {"gradient_mode", ConfigType::string, "lhs_query | rhs_eval"},
      {"gradient_source", ConfigType::string, "field | rb | prb"},
      {"loss", ConfigType::string, "l2 | l1"},
      {"primal_spp", ConfigType::integer, "primal samples per pixel during optimization"},
      {"gradient_spp", ConfigType::integer, "gradient samples per pixel during optimization"},
      {"finetune_diff_steps", ConfigType::integer, "differential fine-tuning steps per iteration"},
      {"finetune_primal_steps", ConfigType::integer, "primal fine-tuning steps per iteration"},
      {"primal_seed_stride", ConfigType::unsigned_integer, "primal seed increment per iteration"},
      {"stop_sq_err", ConfigType::real, "stop when every squared parameter error is below this"},
      {"depths", ConfigType::int_list, "baseline depth sweep"},
      {"runs", ConfigType::integer, "independent repetitions"},
  };
  return keys;
}

namespace {

const ConfigKey& find_key(std::string_view name) {
  for (const ConfigKey& k : config_keys()) {
    if (k.name == name) return k;
  }
  throw ConfigError(std::string(name), "unknown configuration key '" + std::string(name) + "'");
}

template <class T>
T get(const json& v, std::string_view key, std::string_view what) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string(key), "'" + std::string(key) + "' must be " + std::string(what));
  }
}

int get_int(const json& v, std::string_view key) {
  if (!v.is_number_integer()) throw ConfigError(std::string(key), "'" + std::string(key) + "' must be an integer");
  return v.get<int>();
}

double get_real(const json& v, std::string_view key) {
  if (!v.is_number()) throw ConfigError(std::string(key), "'" + std::string(key) + "' must be a number");
  return v.get<double>();
}

std::map<std::string, std::vector<double>> get_named(const json& v, std::string_view key) {
  if (!v.is_object()) throw ConfigError(std::string(key), "'" + std::string(key) + "' must be an object");
  std::map<std::string, std::vector<double>> out;
  for (const auto& [name, value] : v.items()) {
    std::vector<double> vals;
    if (value.is_number()) {
      vals.push_back(value.get<double>());
    } else if (value.is_array()) {
      for (const auto& x : value) vals.push_back(get_real(x, key));
    } else {
      throw ConfigError(std::string(key), "'" + std::string(key) + "." + name + "' must be a number or array");
    }
    out[name] = vals;
  }
  return out;
}

double to_double(const std::string& text, std::string_view key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string(key), "'" + std::string(key) + "': cannot parse '" + text + "' as a number");
  }
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, sep)) out.push_back(part);
  return out;
}

}  // namespace

json parse_flag_value(const ConfigKey& key, const std::string& text) {
  const std::string k(key.name);
  switch (key.type) {
    case ConfigType::integer: {
      int v = 0;
      const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
      if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
        throw ConfigError(k, "'" + k + "': cannot parse '" + text + "' as an integer");
      }
      return v;
    }
    case ConfigType::unsigned_integer: {
      std::uint64_t v = 0;
      const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
      if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
        throw ConfigError(k, "'" + k + "': cannot parse '" + text + "' as an unsigned integer");
      }
      return v;
    }
    case ConfigType::real:
      return to_double(text, key.name);
    case ConfigType::string:
      return text;
    case ConfigType::boolean:
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      throw ConfigError(k, "'" + k + "' must be true or false");
    case ConfigType::int_list: {
      json arr = json::array();
      for (const std::string& part : split(text, ',')) {
        arr.push_back(parse_flag_value({key.name, ConfigType::integer, key.help}, part));
      }
      return arr;
    }
    case ConfigType::named_values: {
      // name=v[:v:v],name=v
      json obj = json::object();
      for (const std::string& item : split(text, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError(k, "'" + k + "' entries must look like name=value");
        json vals = json::array();
        for (const std::string& v : split(item.substr(eq + 1), ':')) vals.push_back(to_double(v, key.name));
        obj[item.substr(0, eq)] = vals;
      }
      return obj;
    }
  }
  return {};
}

void apply_json(RunConfig& c, const json& j) {
  if (!j.is_object()) throw ConfigError("", "configuration must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    find_key(key);
    if (key == "scene") c.scene = get<std::string>(v, key, "a string");
    else if (key == "output") c.output = get<std::string>(v, key, "a string");
    else if (key == "seed") c.seed = get<std::uint64_t>(v, key, "an unsigned integer");
    else if (key == "threads") c.threads = get_int(v, key);
    else if (key == "deterministic") c.deterministic = get<bool>(v, key, "a boolean");
    else if (key == "spp") c.spp = get_int(v, key);
    else if (key == "max_depth") c.max_depth = get_int(v, key);
    else if (key == "rr_depth") c.rr_depth = get_int(v, key);
    else if (key == "hidden_width") c.network.hidden_width = get_int(v, key);
    else if (key == "hidden_layers") c.network.hidden_layers = get_int(v, key);
    else if (key == "grid_resolutions") c.network.grid_resolutions = get<std::vector<int>>(v, key, "a list of integers");
    else if (key == "feature_dim") c.network.feature_dim = get_int(v, key);
    else if (key == "batch") c.train.batch = get_int(v, key);
    else if (key == "incident") c.incident = get_int(v, key);
    else if (key == "lr") c.train.lr = get_real(v, key);
    else if (key == "lr_half_life") c.train.lr_half_life = get_int(v, key);
    else if (key == "steps") c.train.steps = get_int(v, key);
    else if (key == "relative_loss") c.train.relative_loss = get<bool>(v, key, "a boolean");
    else if (key == "primal_checkpoint") c.primal_checkpoint = get<std::string>(v, key, "a string");
    else if (key == "diff_checkpoint") c.diff_checkpoint = get<std::string>(v, key, "a string");
    else if (key == "mode") c.mode = get<std::string>(v, key, "a string");
    else if (key == "param") c.param = get<std::string>(v, key, "a string");
    else if (key == "eps") c.eps = get_real(v, key);
    else if (key == "iterations") c.iterations = get_int(v, key);
    else if (key == "param_lr") c.param_lr = get_named(v, key);
    else if (key == "target_params") c.target_params = get_named(v, key);
    else if (key == "target_image") c.target_image = get<std::string>(v, key, "a string");
    else if (key == "gradient_mode") c.gradient_mode = get<std::string>(v, key, "a string");
    else if (key == "gradient_source") c.gradient_source = get<std::string>(v, key, "a string");
    else if (key == "loss") c.loss = get<std::string>(v, key, "a string");
    else if (key == "primal_spp") c.primal_spp = get_int(v, key);
    else if (key == "gradient_spp") c.gradient_spp = get_int(v, key);
    else if (key == "finetune_diff_steps") c.finetune_diff_steps = get_int(v, key);
    else if (key == "finetune_primal_steps") c.finetune_primal_steps = get_int(v, key);
    else if (key == "primal_seed_stride") c.primal_seed_stride = get<std::uint64_t>(v, key, "an unsigned integer");
    else if (key == "stop_sq_err") c.stop_sq_err = get_real(v, key);
    else if (key == "depths") c.depths = get<std::vector<int>>(v, key, "a list of integers");
    else if (key == "runs") c.runs = get_int(v, key);
  }
  c.train.incident = c.incident;
  c.train.seed = c.seed;
}

RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open config file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", "config file '" + path.string() + "': " + e.what());
  }
  RunConfig c;
  apply_json(c, j);
  return c;
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["scene"] = c.scene;
  j["output"] = c.output;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["deterministic"] = c.deterministic;
  j["spp"] = c.spp;
  j["max_depth"] = c.max_depth;
  j["rr_depth"] = c.rr_depth;
  j["hidden_width"] = c.network.hidden_width;
  j["hidden_layers"] = c.network.hidden_layers;
  j["grid_resolutions"] = c.network.grid_resolutions;
  j["feature_dim"] = c.network.feature_dim;
  j["batch"] = c.train.batch;
  j["incident"] = c.incident;
  j["lr"] = c.train.lr;
  j["lr_half_life"] = c.train.lr_half_life;
  j["steps"] = c.train.steps;
  j["relative_loss"] = c.train.relative_loss;
  j["primal_checkpoint"] = c.primal_checkpoint;
  j["diff_checkpoint"] = c.diff_checkpoint;
  j["mode"] = c.mode;
  j["param"] = c.param;
  j["eps"] = c.eps;
  j["iterations"] = c.iterations;
  j["param_lr"] = c.param_lr;
  j["target_params"] = c.target_params;
  j["target_image"] = c.target_image;
  j["gradient_mode"] = c.gradient_mode;
  j["gradient_source"] = c.gradient_source;
  j["loss"] = c.loss;
  j["primal_spp"] = c.primal_spp;
  j["gradient_spp"] = c.gradient_spp;
  j["finetune_diff_steps"] = c.finetune_diff_steps;
  j["finetune_primal_steps"] = c.finetune_primal_steps;
  j["primal_seed_stride"] = c.primal_seed_stride;
  j["stop_sq_err"] = c.stop_sq_err;
  j["depths"] = c.depths;
  j["runs"] = c.runs;
  return j;
}

namespace {

void require(bool ok, std::string_view key, const std::string& msg) {
  if (!ok) throw ConfigError(std::string(key), "'" + std::string(key) + "' " + msg);
}

}  // namespace

void validate(const RunConfig& c, std::string_view command) {
  require(!c.scene.empty(), "scene", "is required");
  require(c.threads >= 0, "threads", "must be >= 0");
  require(c.spp >= 1, "spp", "must be >= 1");
  require(c.max_depth >= 1, "max_depth", "must be >= 1");
  require(c.rr_depth >= 1, "rr_depth", "must be >= 1");
  require(c.network.hidden_width >= 1, "hidden_width", "must be >= 1");
  require(c.network.hidden_layers >= 0, "hidden_layers", "must be >= 0");
  require(!c.network.grid_resolutions.empty(), "grid_resolutions", "must not be empty");
  for (int r : c.network.grid_resolutions) require(r >= 1, "grid_resolutions", "entries must be >= 1");
  require(c.network.feature_dim >= 1, "feature_dim", "must be >= 1");
  require(c.train.batch >= 1, "batch", "must be >= 1");
  require(c.incident >= 1, "incident", "must be >= 1");
  require(c.train.lr > 0.0, "lr", "must be positive");
  require(c.train.lr_half_life >= 0, "lr_half_life", "must be >= 0");
  require(c.train.steps >= 0, "steps", "must be >= 0");
  require(c.eps > 0.0, "eps", "must be positive");
  require(c.iterations >= 0, "iterations", "must be >= 0");
  require(c.primal_spp >= 1, "primal_spp", "must be >= 1");
  require(c.gradient_spp >= 1, "gradient_spp", "must be >= 1");
  require(c.finetune_diff_steps >= 0, "finetune_diff_steps", "must be >= 0");
  require(c.finetune_primal_steps >= 0, "finetune_primal_steps", "must be >= 0");
  require(c.stop_sq_err >= 0.0, "stop_sq_err", "must be >= 0");
  require(c.runs >= 1, "runs", "must be >= 1");
  for (int d : c.depths) require(d >= 1, "depths", "entries must be >= 1");
  for (const auto& [name, v] : c.param_lr) {
    for (double x : v) require(x >= 0.0, "param_lr", "entry '" + name + "' must be non-negative");
  }
  parse_gradient_mode(c.gradient_mode);
  parse_gradient_source(c.gradient_source);
  parse_loss(c.loss);

  if (command == "train-diff") require(!c.primal_checkpoint.empty(), "primal_checkpoint", "is required");
  if (command == "grad-image") {
    require(c.mode == "field-lhs" || c.mode == "field-rhs" || c.mode == "fd" || c.mode == "forward-dual", "mode",
            "must be field-lhs, field-rhs, fd or forward-dual");
    if (c.mode == "field-lhs" || c.mode == "field-rhs") {
      require(!c.diff_checkpoint.empty(), "diff_checkpoint", "is required for field modes");
    }
    if (c.mode == "field-rhs") require(!c.primal_checkpoint.empty(), "primal_checkpoint", "is required for field-rhs");
  }
  if (command == "invert") {
    require(!c.target_image.empty() || !c.target_params.empty(), "target_params",
            "or 'target_image' is required");
    if (c.gradient_source == "field") {
      require(!c.diff_checkpoint.empty(), "diff_checkpoint", "is required for field gradients");
      if (c.gradient_mode == "rhs_eval") require(!c.primal_checkpoint.empty(), "primal_checkpoint", "is required for rhs_eval");
    }
  }
  if (command == "compare-baselines") require(!c.depths.empty(), "depths", "must not be empty");
}

Eigen::VectorXd expand_named(const Scene& scene, const std::map<std::string, std::vector<double>>& values,
                             std::string_view key, double fill) {
  Eigen::VectorXd out = Eigen::VectorXd::Constant(scene.param_count(), fill);
  for (const auto& [name, v] : values) {
    if (!scene.params().contains(name)) {
      throw ConfigError(std::string(key), "'" + std::string(key) + "': scene has no parameter '" + name + "'");
    }
    const ParamEntry& e = scene.params().find(name);
    if (v.size() != 1 && static_cast<int>(v.size()) != e.size) {
      throw ConfigError(std::string(key), "'" + std::string(key) + "." + name + "' needs 1 or " +
                                              std::to_string(e.size) + " values");
    }
    for (int c = 0; c < e.size; ++c) out[e.offset + c] = v.size() == 1 ? v[0] : v[static_cast<std::size_t>(c)];
  }
  return out;
}

GradientMode parse_gradient_mode(const std::string& s) {
  if (s == "lhs_query") return GradientMode::lhs_query;
  if (s == "rhs_eval") return GradientMode::rhs_eval;
  throw ConfigError("gradient_mode", "'gradient_mode' must be lhs_query or rhs_eval");
}

GradientSource parse_gradient_source(const std::string& s) {
  if (s == "field") return GradientSource::field;
  if (s == "rb") return GradientSource::rb;
  if (s == "prb") return GradientSource::prb;
  throw ConfigError("gradient_source", "'gradient_source' must be field, rb or prb");
}

LossKind parse_loss(const std::string& s) {
  if (s == "l2") return LossKind::l2;
  if (s == "l1") return LossKind::l1;
  throw ConfigError("loss", "'loss' must be l2 or l1");
}

}  // namespace radfield
