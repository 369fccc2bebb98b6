// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "radfield/geometry.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace radfield {

/// Raised for malformed or inconsistent scene descriptions.
class SceneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Camera {
  Vec3 position = Vec3(0.0, 0.0, 1.0);
  Vec3 look_at = Vec3::Zero();
  Vec3 up = Vec3::UnitY();
  double vertical_fov = 45.0;  // degrees
  int width = 64;
  int height = 64;

  /// Primary ray through film coordinates (px, py) in pixels; (0, 0) is the
  /// top-left corner of the image.
  Ray generate_ray(double px, double py) const;
};

enum class MaterialModel { diffuse, rough_conductor };

/// Scene fields that may be declared differentiable.
enum class ParamField { albedo, roughness, k, emission };

inline constexpr double kMinRoughness = 0.01;

struct MaterialDesc {
  std::string name;
  MaterialModel model = MaterialModel::diffuse;
  Spectrum albedo = Spectrum::Constant(0.5);
  double roughness = 0.5;
  Spectrum eta = Spectrum::Ones();
  Spectrum k = Spectrum::Zero();
  Spectrum emission = Spectrum::Zero();
  bool two_sided = false;

  // First ParameterVector index of each differentiable field, -1 otherwise.
  int albedo_param = -1;
  int roughness_param = -1;
  int k_param = -1;
  int emission_param = -1;

  bool is_emitter() const { return (emission > 0.0).any(); }
  int param_index(ParamField f) const;
};

/// One named differentiable entry: a scalar or an RGB triple.
struct ParamEntry {
  std::string name;  // "material.<material>.<field>"
  int material = -1;
  ParamField field = ParamField::albedo;
  int offset = 0;    // first scalar index
  int size = 1;      // 1 or 3
};

/// Ordered registry mapping names to contiguous scalar indices of p.
class ParameterVector {
 public:
  const std::vector<ParamEntry>& entries() const { return entries_; }
  int size() const { return size_; }
  const ParamEntry& entry_of(int index) const;
  /// Entry by its full name; throws SceneError when unknown.
  const ParamEntry& find(std::string_view name) const;
  bool contains(std::string_view name) const { return lookup_.count(std::string(name)) != 0; }
  /// Human-readable label of scalar `index`, e.g. "material.wall.albedo[1]".
  std::string scalar_name(int index) const;

  void add(ParamEntry entry);

 private:
  std::vector<ParamEntry> entries_;
  std::vector<int> owner_;  // scalar index -> entry
  std::unordered_map<std::string, int> lookup_;
  int size_ = 0;
};

class Scene {
 public:
  Scene() = default;
  Scene(Camera camera, std::vector<MaterialDesc> materials, std::vector<Shape> shapes);

  const Camera& camera() const { return camera_; }
  void set_camera(const Camera& c) { camera_ = c; }
  const Geometry& geometry() const { return geometry_; }
  const std::vector<MaterialDesc>& materials() const { return materials_; }
  const MaterialDesc& material(int id) const { return materials_[static_cast<std::size_t>(id)]; }
  int material_id(std::string_view name) const;
  const MaterialDesc& material_of_shape(int shape_id) const {
    return material(geometry_.shape(shape_id).material);
  }
  const std::vector<int>& emitters() const { return emitters_; }
  const ParameterVector& params() const { return params_; }
  int param_count() const { return params_.size(); }
  const Bounds& bounds() const { return geometry_.bounds(); }

  /// Marks a material field differentiable, appending it to p.
  void make_differentiable(std::string_view material, ParamField field);

  double get_param(int index) const;
  double get_param(std::string_view name, int channel = 0) const;
  /// Stores the clamped value and returns it.
  double set_param(int index, double value);
  double set_param(std::string_view name, double value, int channel = 0);
  Eigen::VectorXd get_params() const;
  void set_params(const Eigen::VectorXd& p);
  /// Inclusive valid range of scalar `index`.
  std::pair<double, double> param_range(int index) const;

 private:
  void refresh_emitters();
  double& param_slot(int index);

  Camera camera_;
  std::vector<MaterialDesc> materials_;
  Geometry geometry_;
  std::vector<int> emitters_;
  ParameterVector params_;
};

Scene load_scene(const std::filesystem::path& path);
Scene parse_scene(std::string_view json_text);
std::string serialize_scene(const Scene& scene);

std::string_view to_string(ParamField f);
std::string_view to_string(MaterialModel m);

}  // namespace radfield
