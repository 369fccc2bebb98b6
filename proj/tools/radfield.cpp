// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#include "radfield/baselines.hpp"
#include "radfield/config.hpp"
#include "radfield/inverse.hpp"
#include "radfield/nn/checkpoint.hpp"
#include "radfield/oracle.hpp"
#include "radfield/parallel.hpp"
#include "radfield/pathtrace.hpp"
#include "radfield/runtime.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>

namespace fs = std::filesystem;
using namespace radfield;
using nlohmann::ordered_json;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

/// Failure that happened after validation (reported with exit code 2).
struct RuntimeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Sidecar {
  Sidecar(std::string cmd, const RunConfig* c) : command(std::move(cmd)), cfg(c) {}
  std::string command;
  const RunConfig* cfg;
  ordered_json extra = ordered_json::object();
  std::vector<std::string> artifacts;
};

void write_sidecar(const fs::path& path, const Sidecar& s) {
  ordered_json j;
  j["command"] = s.command;
  j["config"] = to_json(*s.cfg);
  j["seed"] = s.cfg->seed;
  j["artifacts"] = s.artifacts;
  for (const auto& [k, v] : s.extra.items()) j[k] = v;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

fs::path prepare_output(const RunConfig& c) {
  const fs::path out(c.output);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw ConfigError("output", "'output': cannot create directory '" + c.output + "': " + ec.message());
  return out;
}

Scene open_scene(const RunConfig& c) {
  try {
    return load_scene(c.scene);
  } catch (const SceneError& e) {
    throw ConfigError("scene", std::string("'scene': ") + e.what());
  }
}

nn::NetworkConfig network_of_checkpoint(const fs::path& path, std::string_view key, nn::CheckpointHeader* header) {
  try {
    auto in = nn::io::open_in(path);
    *header = nn::io::read_header(in);
  } catch (const nn::CheckpointError& e) {
    throw ConfigError(std::string(key), "'" + std::string(key) + "': " + e.what());
  }
  nn::NetworkConfig cfg;
  cfg.hidden_width = static_cast<int>(header->hidden_width);
  cfg.hidden_layers = static_cast<int>(header->hidden_layers);
  cfg.grid_resolutions.assign(header->grid_resolutions.begin(), header->grid_resolutions.end());
  cfg.feature_dim = static_cast<int>(header->feature_dim);
  return cfg;
}

PrimalField<NetScalar> load_primal(const RunConfig& c, const Scene& scene, nn::Adam<NetScalar>* adam = nullptr) {
  nn::CheckpointHeader h;
  const nn::NetworkConfig cfg = network_of_checkpoint(c.primal_checkpoint, "primal_checkpoint", &h);
  if (h.output_width != 3) throw ConfigError("primal_checkpoint", "'primal_checkpoint' is not a primal field");
  PrimalField<NetScalar> f(cfg, scene, c.seed);
  try {
    nn::load_checkpoint(c.primal_checkpoint, f.network(), adam);
  } catch (const nn::CheckpointError& e) {
    throw ConfigError("primal_checkpoint", std::string("'primal_checkpoint': ") + e.what());
  }
  return f;
}

DiffField<NetScalar> load_diff(const RunConfig& c, const Scene& scene, nn::Adam<NetScalar>* adam = nullptr) {
  nn::CheckpointHeader h;
  const nn::NetworkConfig cfg = network_of_checkpoint(c.diff_checkpoint, "diff_checkpoint", &h);
  const int expected = 3 * std::max(scene.param_count(), 1);
  if (static_cast<int>(h.output_width) != expected) {
    throw ConfigError("diff_checkpoint", "'diff_checkpoint' has " + std::to_string(h.output_width) +
                                             " outputs, the scene needs " + std::to_string(expected));
  }
  DiffField<NetScalar> f(cfg, scene, c.seed);
  try {
    nn::load_checkpoint(c.diff_checkpoint, f.network(), adam);
  } catch (const nn::CheckpointError& e) {
    throw ConfigError("diff_checkpoint", std::string("'diff_checkpoint': ") + e.what());
  }
  return f;
}

std::vector<int> selected_scalars(const RunConfig& c, const Scene& scene) {
  std::vector<int> out;
  if (c.param.empty()) {
    for (int j = 0; j < scene.param_count(); ++j) out.push_back(j);
  } else {
    if (!scene.params().contains(c.param)) throw ConfigError("param", "'param': scene has no parameter '" + c.param + "'");
    const ParamEntry& e = scene.params().find(c.param);
    for (int j = 0; j < e.size; ++j) out.push_back(e.offset + j);
  }
  if (out.empty()) throw ConfigError("scene", "'scene' has no differentiable parameters");
  return out;
}

void write_image_pair(const fs::path& stem, const Image& img, std::vector<std::string>& artifacts) {
  write_pfm(stem.string() + ".pfm", img);
  write_ppm(stem.string() + ".ppm", img);
  artifacts.push_back(stem.filename().string() + ".pfm");
  artifacts.push_back(stem.filename().string() + ".ppm");
}

ordered_json params_json(const Scene& scene, const Eigen::VectorXd& p) {
  ordered_json j = ordered_json::object();
  for (int i = 0; i < scene.param_count(); ++i) j[scene.params().scalar_name(i)] = p[i];
  return j;
}

// ---------------------------------------------------------------------------

int cmd_render(const RunConfig& c) {
  const Scene scene = open_scene(c);
  const fs::path out = prepare_output(c);
  Image img = render_primal(scene, c.spp, c.max_depth, c.seed, c.rr_depth);
  img.meta = {c.spp, c.seed, "primal"};
  Sidecar s{"render", &c};
  write_image_pair(out / "render", img, s.artifacts);
  write_sidecar(out / "render.json", s);
  std::cout << "wrote " << (out / "render.pfm").string() << '\n';
  return 0;
}

int cmd_train_primal(const RunConfig& c) {
  const Scene scene = open_scene(c);
  const fs::path out = prepare_output(c);
  nn::Adam<NetScalar> adam(nn::AdamConfig{c.train.lr});
  PrimalField<NetScalar> field = c.primal_checkpoint.empty() ? PrimalField<NetScalar>(c.network, scene, c.seed)
                                                             : load_primal(c, scene, &adam);
  const auto log = train_primal(field, scene, adam, c.train, adam.steps());
  nn::save_checkpoint(out / "primal.ckpt", field.network(), scene.param_count(), &adam);
  write_train_log(out / "train_primal.csv", log);
  Sidecar s{"train-primal", &c};
  s.artifacts = {"primal.ckpt", "train_primal.csv"};
  Image preview = render_field_lhs(scene, field, 4, c.seed);
  write_image_pair(out / "primal_lhs", preview, s.artifacts);
  s.extra["final_loss"] = log.empty() ? 0.0 : log.back().loss;
  s.extra["clamped_queries"] = field.clamped_queries();
  write_sidecar(out / "primal.json", s);
  if (!log.empty()) std::cout << "step " << log.back().step << " loss " << log.back().loss << '\n';
  return 0;
}

int cmd_train_diff(const RunConfig& c) {
  const Scene scene = open_scene(c);
  if (scene.param_count() == 0) throw ConfigError("scene", "'scene' has no differentiable parameters");
  const fs::path out = prepare_output(c);
  const PrimalField<NetScalar> primal = load_primal(c, scene);
  nn::Adam<NetScalar> adam(nn::AdamConfig{c.train.lr});
  DiffField<NetScalar> field =
      c.diff_checkpoint.empty() ? DiffField<NetScalar>(c.network, scene, c.seed) : load_diff(c, scene, &adam);
  const auto log = train_diff(field, primal, scene, adam, c.train, adam.steps());
  nn::save_checkpoint(out / "diff.ckpt", field.network(), scene.param_count(), &adam);
  write_train_log(out / "train_diff.csv", log);
  Sidecar s{"train-diff", &c};
  s.artifacts = {"diff.ckpt", "train_diff.csv"};
  s.extra["final_loss"] = log.empty() ? 0.0 : log.back().loss;
  write_sidecar(out / "diff.json", s);
  if (!log.empty()) std::cout << "step " << log.back().step << " loss " << log.back().loss << '\n';
  return 0;
}

int cmd_grad_image(const RunConfig& c) {
  const Scene scene = open_scene(c);
  const std::vector<int> scalars = selected_scalars(c, scene);
  if (c.mode == "forward-dual" && static_cast<int>(scalars.size()) > kMaxDualParams) {
    throw ConfigError("param", "'param': forward-dual handles at most " + std::to_string(kMaxDualParams) + " scalars");
  }
  std::optional<PrimalField<NetScalar>> primal;
  std::optional<DiffField<NetScalar>> diff;
  if (c.mode == "field-lhs" || c.mode == "field-rhs") diff.emplace(load_diff(c, scene));
  if (c.mode == "field-rhs") primal.emplace(load_primal(c, scene));
  const fs::path out = prepare_output(c);

  std::map<int, Image> slices;
  if (c.mode == "fd") {
    for (int j : scalars) {
      const auto [lo, hi] = scene.param_range(j);
      const double v = scene.get_param(j);
      if (v - c.eps < lo || v + c.eps > hi) {
        throw ConfigError("eps", "'eps': stencil around " + scene.params().scalar_name(j) + " leaves its valid range");
      }
      slices[j] = fd_gradient(scene, j, c.eps, c.spp, c.seed, c.max_depth);
    }
  } else {
    GradientImage g;
    if (c.mode == "forward-dual") g = forward_dual_gradient(scene, scalars, c.spp, c.max_depth, c.seed, c.rr_depth);
    else if (c.mode == "field-lhs") g = render_field_lhs(scene, *diff, c.spp, c.seed);
    else g = render_field_rhs(scene, *diff, *primal, c.spp, c.incident, c.seed);
    for (int j : scalars) slices[j] = g.slices[static_cast<std::size_t>(j)];
  }

  Sidecar s{"grad-image", &c};
  const std::string stem = "grad_" + c.mode;
  ordered_json names = ordered_json::object();
  for (auto& [j, img] : slices) {
    img.meta = {c.spp, c.seed, c.mode};
    const std::string base = stem + ".p" + std::to_string(j);
    write_pfm(out / (base + ".pfm"), img);
    write_ppm_diverging(out / (base + ".ppm"), img);
    s.artifacts.push_back(base + ".pfm");
    s.artifacts.push_back(base + ".ppm");
    names[base] = scene.params().scalar_name(j);
  }
  s.extra["slices"] = names;
  write_sidecar(out / (stem + ".json"), s);
  std::cout << "wrote " << slices.size() << " slices to " << out.string() << '\n';
  return 0;
}

int cmd_invert(const RunConfig& c) {
  Scene scene = open_scene(c);
  const int n = scene.param_count();
  if (n == 0) throw ConfigError("scene", "'scene' has no differentiable parameters");

  OptimRun run;
  run.iterations = c.iterations;
  run.lr = expand_named(scene, c.param_lr, "param_lr", 0.01);
  run.mode = parse_gradient_mode(c.gradient_mode);
  run.source = parse_gradient_source(c.gradient_source);
  run.primal_spp = c.primal_spp;
  run.gradient_spp = c.gradient_spp;
  run.incident = c.incident;
  run.max_depth = c.max_depth;
  run.rr_depth = c.rr_depth;
  run.finetune_diff_steps = c.finetune_diff_steps;
  run.finetune_primal_steps = c.finetune_primal_steps;
  run.finetune = c.train;
  run.seed = c.seed;
  run.primal_seed_stride = c.primal_seed_stride;
  run.stop_sq_err = c.stop_sq_err;

  const Eigen::VectorXd initial = scene.get_params();
  if (!c.target_params.empty()) {
    Eigen::VectorXd t =
        expand_named(scene, c.target_params, "target_params", std::numeric_limits<double>::quiet_NaN());
    for (int i = 0; i < n; ++i) {
      if (std::isnan(t[i])) t[i] = initial[i];
    }
    Scene probe = scene;
    probe.set_params(t);
    run.target_params = probe.get_params();
  }

  Objective objective;
  objective.kind = parse_loss(c.loss);
  if (!c.target_image.empty()) {
    try {
      objective.target = read_pfm(c.target_image);
    } catch (const ImageError& e) {
      throw ConfigError("target_image", std::string("'target_image': ") + e.what());
    }
    if (objective.target.width() != scene.camera().width || objective.target.height() != scene.camera().height) {
      throw ConfigError("target_image", "'target_image' does not match the camera resolution");
    }
  }

  const bool tuning = run.finetune_diff_steps > 0 || run.finetune_primal_steps > 0;
  std::optional<PrimalField<NetScalar>> primal;
  std::optional<DiffField<NetScalar>> diff;
  if (run.source == GradientSource::field || tuning) {
    if (c.diff_checkpoint.empty()) throw ConfigError("diff_checkpoint", "'diff_checkpoint' is required");
    diff.emplace(load_diff(c, scene));
  }
  if ((run.source == GradientSource::field && run.mode == GradientMode::rhs_eval) || tuning) {
    if (c.primal_checkpoint.empty()) throw ConfigError("primal_checkpoint", "'primal_checkpoint' is required");
    primal.emplace(load_primal(c, scene));
  }
  const fs::path out = prepare_output(c);

  Sidecar s{"invert", &c};
  if (c.target_image.empty()) {
    Scene target_scene = scene;
    target_scene.set_params(*run.target_params);
    objective.target = render_primal(target_scene, c.spp, c.max_depth, mix64(c.seed ^ 0x746172676574), c.rr_depth);
    write_image_pair(out / "target", objective.target, s.artifacts);
  }

  const RunLog log = optimize<NetScalar>(scene, objective, run, primal ? &*primal : nullptr, diff ? &*diff : nullptr);
  write_run_log(out / "invert.csv", log);
  s.artifacts.push_back("invert.csv");
  Image final_img = render_primal(scene, c.spp, c.max_depth, mix64(c.seed ^ 0x66696e616c), c.rr_depth);
  write_image_pair(out / "final", final_img, s.artifacts);
  s.extra["initial_params"] = params_json(scene, initial);
  s.extra["final_params"] = params_json(scene, scene.get_params());
  if (run.target_params) s.extra["target_params"] = params_json(scene, *run.target_params);
  s.extra["iterations_run"] = log.records.size();
  s.extra["stop_reason"] = log.stop_reason;
  s.extra["diverged"] = log.diverged;
  write_sidecar(out / "invert.json", s);
  std::cout << log.stop_reason << " after " << log.records.size() << " iterations\n";
  if (log.diverged) throw RuntimeFailure("optimization diverged: " + log.stop_reason);
  return 0;
}

int cmd_compare_baselines(const RunConfig& c) {
  const Scene scene = open_scene(c);
  const int n = scene.param_count();
  if (n == 0) throw ConfigError("scene", "'scene' has no differentiable parameters");
  std::optional<PrimalField<NetScalar>> primal;
  std::optional<DiffField<NetScalar>> diff;
  if (!c.diff_checkpoint.empty()) diff.emplace(load_diff(c, scene));
  if (!c.primal_checkpoint.empty()) primal.emplace(load_primal(c, scene));
  const fs::path out = prepare_output(c);

  AdjointImage adjoint(scene.camera().width, scene.camera().height);
  adjoint.data().setConstant(1.0 / static_cast<double>(adjoint.pixel_count()));

  using Estimator = std::function<ParamGradient(int depth, std::uint64_t seed)>;
  std::vector<std::pair<std::string, Estimator>> methods;
  methods.emplace_back("rb", [&](int d, std::uint64_t seed) {
    return rb_gradient(scene, adjoint, c.spp, d, seed, c.rr_depth).gradient;
  });
  methods.emplace_back("prb", [&](int d, std::uint64_t seed) {
    return prb_gradient(scene, adjoint, c.spp, d, seed, c.rr_depth).gradient;
  });
  if (n <= kMaxDualParams) {
    methods.emplace_back("forward-dual", [&](int d, std::uint64_t seed) {
      return chain(adjoint, forward_dual_gradient(scene, {}, c.spp, d, seed, c.rr_depth));
    });
  }
  if (diff) {
    methods.emplace_back("field-lhs", [&](int, std::uint64_t seed) {
      return chain(adjoint, measurement_gradient<NetScalar>(scene, &*diff, nullptr, GradientMode::lhs_query, c.spp,
                                                            c.incident, seed));
    });
  }
  if (diff && primal) {
    methods.emplace_back("field-rhs", [&](int, std::uint64_t seed) {
      return chain(adjoint, measurement_gradient<NetScalar>(scene, &*diff, &*primal, GradientMode::rhs_eval, c.spp,
                                                            c.incident, seed));
    });
  }

  const fs::path csv = out / "baselines.csv";
  std::ofstream f(csv, std::ios::trunc);
  if (!f) throw RuntimeFailure("cannot write '" + csv.string() + "'");
  f.precision(17);
  f << "method,param,mean,stderr,wall_ms,max_depth\n";
  for (int depth : c.depths) {
    for (const auto& [name, estimate] : methods) {
      std::vector<std::vector<double>> samples(static_cast<std::size_t>(n));
      double ms = 0.0;
      for (int r = 0; r < c.runs; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        const ParamGradient g = estimate(depth, mix64(mix64(c.seed) + static_cast<std::uint64_t>(r)));
        ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        for (int j = 0; j < n; ++j) samples[static_cast<std::size_t>(j)].push_back(g[j]);
      }
      for (int j = 0; j < n; ++j) {
        const auto [m, e] = mean_and_stderr(samples[static_cast<std::size_t>(j)]);
        f << name << ',' << scene.params().scalar_name(j) << ',' << m << ',' << e << ',' << ms / c.runs << ','
          << depth << '\n';
      }
      std::cout << name << " depth " << depth << ": " << ms / c.runs << " ms/run\n";
    }
  }
  if (!f) throw RuntimeFailure("failed writing '" + csv.string() + "'");
  Sidecar s{"compare-baselines", &c};
  s.artifacts = {"baselines.csv"};
  write_sidecar(out / "baselines.json", s);
  return 0;
}

int cmd_oracle_check(const RunConfig& c) {
  const Scene scene = open_scene(c);
  OracleOptions opt;
  opt.seed = c.seed;
  opt.max_depth = c.max_depth;
  opt.eps = c.eps;
  opt.incident = c.incident;
  std::vector<OracleCheck> checks;
  try {
    checks = run_oracle_suite(scene, opt);
  } catch (const SceneError& e) {
    throw ConfigError("scene", std::string("'scene': ") + e.what());
  }
  bool ok = true;
  for (const OracleCheck& k : checks) {
    std::cout << (k.pass ? "PASS " : "FAIL ") << k.name << ": " << k.value << " (limit " << k.tolerance << ")\n";
    ok = ok && k.pass;
  }
  if (!ok) throw RuntimeFailure("oracle checks failed");
  return 0;
}

// ---------------------------------------------------------------------------

struct Command {
  Command(std::string n, std::string h, int (*fn)(const RunConfig&)) : name(std::move(n)), help(std::move(h)), run(fn) {}
  std::string name;
  std::string help;
  int (*run)(const RunConfig&);
  CLI::App* app = nullptr;
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> flags;
  std::map<std::string, CLI::Option*> options;
};

void add_key_options(Command& cmd) {
  cmd.app->add_option("--config", cmd.config_file, "JSON config file (flags override it)");
  for (const ConfigKey& key : config_keys()) {
    const std::string k(key.name);
    std::string names = "--" + k;
    std::string dashed = k;
    std::replace(dashed.begin(), dashed.end(), '_', '-');
    if (dashed != k) names += ",--" + dashed;
    if (k == "output") names = "-o," + names;
    if (key.type == ConfigType::boolean) {
      cmd.options[k] = cmd.app->add_flag(names, cmd.flags[k], std::string(key.help));
    } else {
      cmd.options[k] = cmd.app->add_option(names, cmd.values[k], std::string(key.help));
    }
  }
}

RunConfig resolve(const Command& cmd) {
  RunConfig c = cmd.config_file.empty() ? RunConfig{} : load_config_file(cmd.config_file);
  nlohmann::json overrides = nlohmann::json::object();
  for (const ConfigKey& key : config_keys()) {
    const std::string k(key.name);
    const CLI::Option* opt = cmd.options.at(k);
    if (opt->count() == 0) continue;
    overrides[k] = key.type == ConfigType::boolean ? nlohmann::json(cmd.flags.at(k))
                                                    : parse_flag_value(key, cmd.values.at(k));
  }
  apply_json(c, overrides);
  if (c.scene.empty() && cmd.name == "oracle-check") c.scene = std::string(RADFIELD_SCENE_DIR) + "/analytic.json";
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  retain_heap_memory();
  CLI::App app{"radfield: differentiable light transport with neural radiance fields"};
  app.require_subcommand(1);
  std::vector<Command> commands{
      {"render", "path-trace the scene", cmd_render},
      {"train-primal", "train the primal radiance field", cmd_train_primal},
      {"train-diff", "train the differential radiance field", cmd_train_diff},
      {"grad-image", "per-parameter gradient images", cmd_grad_image},
      {"invert", "recover scene parameters from a target image", cmd_invert},
      {"compare-baselines", "gradient estimators across path depths", cmd_compare_baselines},
      {"oracle-check", "verify estimators on the analytic scene", cmd_oracle_check},
  };
  for (Command& cmd : commands) {
    cmd.app = app.add_subcommand(cmd.name, cmd.help);
    add_key_options(cmd);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitValidation;
  }

  for (Command& cmd : commands) {
    if (!cmd.app->parsed()) continue;
    RunConfig c;
    try {
      c = resolve(cmd);
      validate(c, cmd.name);
    } catch (const ConfigError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitValidation;
    }
    worker_count() = c.deterministic ? 1 : c.threads;
    try {
      return cmd.run(c);
    } catch (const ConfigError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitValidation;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitRuntime;
    }
  }
  return kExitValidation;
}
