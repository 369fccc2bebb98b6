// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#include "radfield/scene.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace radfield {

using ojson = nlohmann::ordered_json;

std::string_view to_string(ParamField f) {
  switch (f) {
    case ParamField::albedo: return "albedo";
    case ParamField::roughness: return "roughness";
    case ParamField::k: return "k";
    case ParamField::emission: return "emission";
  }
  return "?";
}

std::string_view to_string(MaterialModel m) {
  return m == MaterialModel::diffuse ? "diffuse" : "rough_conductor";
}

Ray Camera::generate_ray(double px, double py) const {
  const Vec3 forward = (look_at - position).normalized();
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 true_up = right.cross(forward);
  const double tan_half = std::tan(0.5 * vertical_fov * kPi / 180.0);
  const double aspect = static_cast<double>(width) / height;
  const double x = (2.0 * px / width - 1.0) * tan_half * aspect;
  const double y = (1.0 - 2.0 * py / height) * tan_half;
  Ray r;
  r.origin = position;
  r.direction = (forward + x * right + y * true_up).normalized();
  return r;
}

int MaterialDesc::param_index(ParamField f) const {
  switch (f) {
    case ParamField::albedo: return albedo_param;
    case ParamField::roughness: return roughness_param;
    case ParamField::k: return k_param;
    case ParamField::emission: return emission_param;
  }
  return -1;
}

// ---------------------------------------------------------------------------

const ParamEntry& ParameterVector::entry_of(int index) const {
  if (index < 0 || index >= size_) throw SceneError("parameter index " + std::to_string(index) + " out of range");
  return entries_[static_cast<std::size_t>(owner_[static_cast<std::size_t>(index)])];
}

const ParamEntry& ParameterVector::find(std::string_view name) const {
  auto it = lookup_.find(std::string(name));
  if (it == lookup_.end()) throw SceneError("unknown parameter '" + std::string(name) + "'");
  return entries_[static_cast<std::size_t>(it->second)];
}

std::string ParameterVector::scalar_name(int index) const {
  const ParamEntry& e = entry_of(index);
  if (e.size == 1) return e.name;
  return e.name + "[" + std::to_string(index - e.offset) + "]";
}

void ParameterVector::add(ParamEntry entry) {
  if (lookup_.count(entry.name)) throw SceneError("duplicate parameter '" + entry.name + "'");
  entry.offset = size_;
  lookup_[entry.name] = static_cast<int>(entries_.size());
  for (int i = 0; i < entry.size; ++i) owner_.push_back(static_cast<int>(entries_.size()));
  size_ += entry.size;
  entries_.push_back(std::move(entry));
}

// ---------------------------------------------------------------------------

Scene::Scene(Camera camera, std::vector<MaterialDesc> materials, std::vector<Shape> shapes)
    : camera_(std::move(camera)), materials_(std::move(materials)) {
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const int m = shapes[i].material;
    if (m < 0 || m >= static_cast<int>(materials_.size())) {
      throw SceneError("shapes[" + std::to_string(i) + "].material: unknown material");
    }
  }
  if (shapes.empty()) throw SceneError("shapes: scene has no shapes");
  geometry_ = Geometry(std::move(shapes));
  if (!(geometry_.total_area() > 0.0)) throw SceneError("shapes: total surface area is zero");
  for (MaterialDesc& m : materials_) {
    m.albedo_param = m.roughness_param = m.k_param = m.emission_param = -1;
  }
  refresh_emitters();
}

int Scene::material_id(std::string_view name) const {
  for (std::size_t i = 0; i < materials_.size(); ++i) {
    if (materials_[i].name == name) return static_cast<int>(i);
  }
  throw SceneError("unknown material '" + std::string(name) + "'");
}

void Scene::make_differentiable(std::string_view material, ParamField field) {
  const int id = material_id(material);
  MaterialDesc& m = materials_[static_cast<std::size_t>(id)];
  const std::string where = "materials." + m.name + ".differentiable";
  if (field == ParamField::albedo && m.model != MaterialModel::diffuse) {
    throw SceneError(where + ": albedo is only defined for diffuse materials");
  }
  if ((field == ParamField::roughness || field == ParamField::k) && m.model != MaterialModel::rough_conductor) {
    throw SceneError(where + ": " + std::string(to_string(field)) + " is only defined for rough_conductor materials");
  }
  ParamEntry e;
  e.name = "material." + m.name + "." + std::string(to_string(field));
  e.material = id;
  e.field = field;
  e.size = field == ParamField::roughness ? 1 : 3;
  params_.add(e);
  const int offset = params_.find(e.name).offset;
  switch (field) {
    case ParamField::albedo: m.albedo_param = offset; break;
    case ParamField::roughness: m.roughness_param = offset; break;
    case ParamField::k: m.k_param = offset; break;
    case ParamField::emission: m.emission_param = offset; break;
  }
}

double& Scene::param_slot(int index) {
  const ParamEntry& e = params_.entry_of(index);
  MaterialDesc& m = materials_[static_cast<std::size_t>(e.material)];
  const int c = index - e.offset;
  switch (e.field) {
    case ParamField::albedo: return m.albedo[c];
    case ParamField::roughness: return m.roughness;
    case ParamField::k: return m.k[c];
    case ParamField::emission: return m.emission[c];
  }
  throw SceneError("bad parameter field");
}

std::pair<double, double> Scene::param_range(int index) const {
  switch (params_.entry_of(index).field) {
    case ParamField::albedo: return {0.0, 1.0};
    case ParamField::roughness: return {kMinRoughness, 1.0};
    case ParamField::k:
    case ParamField::emission: return {0.0, std::numeric_limits<double>::infinity()};
  }
  return {0.0, 0.0};
}

double Scene::get_param(int index) const { return const_cast<Scene*>(this)->param_slot(index); }

double Scene::get_param(std::string_view name, int channel) const {
  const ParamEntry& e = params_.find(name);
  if (channel < 0 || channel >= e.size) throw SceneError("channel out of range for '" + e.name + "'");
  return get_param(e.offset + channel);
}

double Scene::set_param(int index, double value) {
  const auto [lo, hi] = param_range(index);
  if (std::isnan(value)) throw SceneError("NaN value for parameter " + params_.scalar_name(index));
  double& slot = param_slot(index);
  slot = std::clamp(value, lo, hi);
  if (params_.entry_of(index).field == ParamField::emission) refresh_emitters();
  return slot;
}

double Scene::set_param(std::string_view name, double value, int channel) {
  const ParamEntry& e = params_.find(name);
  if (channel < 0 || channel >= e.size) throw SceneError("channel out of range for '" + e.name + "'");
  return set_param(e.offset + channel, value);
}

Eigen::VectorXd Scene::get_params() const {
  Eigen::VectorXd p(params_.size());
  for (int i = 0; i < params_.size(); ++i) p[i] = get_param(i);
  return p;
}

void Scene::set_params(const Eigen::VectorXd& p) {
  if (p.size() != params_.size()) throw SceneError("parameter vector has wrong length");
  for (int i = 0; i < params_.size(); ++i) set_param(i, p[i]);
}

void Scene::refresh_emitters() {
  emitters_.clear();
  for (std::size_t i = 0; i < geometry_.shapes().size(); ++i) {
    if (material_of_shape(static_cast<int>(i)).is_emitter()) emitters_.push_back(static_cast<int>(i));
  }
}

// ---------------------------------------------------------------------------
// JSON schema

namespace {

void check_keys(const ojson& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw SceneError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!ok.count(it.key())) throw SceneError(where + "." + it.key() + ": unknown key");
  }
}

const ojson& require(const ojson& obj, const std::string& where, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SceneError(where + "." + key + ": missing required key");
  return *it;
}

double read_number(const ojson& v, const std::string& where) {
  if (!v.is_number()) throw SceneError(where + ": expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw SceneError(where + ": must be finite");
  return x;
}

Vec3 read_vec3(const ojson& v, const std::string& where) {
  if (!v.is_array() || v.size() != 3) throw SceneError(where + ": expected an array of 3 numbers");
  return {read_number(v[0], where + "[0]"), read_number(v[1], where + "[1]"), read_number(v[2], where + "[2]")};
}

Spectrum read_rgb(const ojson& v, const std::string& where) {
  if (v.is_number()) return Spectrum::Constant(read_number(v, where));
  return read_vec3(v, where).array();
}

void check_range(const Spectrum& s, double lo, double hi, const std::string& where) {
  if ((s < lo).any() || (s > hi).any()) {
    std::ostringstream os;
    os << where << ": values must lie in [" << lo << ", " << hi << "]";
    throw SceneError(os.str());
  }
}

std::size_t line_of(std::string_view text, std::size_t byte) {
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + std::min(byte, text.size()), '\n'));
}

}  // namespace

Scene parse_scene(std::string_view text) {
  ojson doc;
  try {
    doc = ojson::parse(text.begin(), text.end());
  } catch (const ojson::parse_error& e) {
    throw SceneError("parse error at line " + std::to_string(line_of(text, e.byte)) + ": " + e.what());
  }
  check_keys(doc, "scene", {"camera", "materials", "shapes"});

  Camera cam;
  {
    const ojson& c = require(doc, "scene", "camera");
    check_keys(c, "camera", {"position", "look_at", "up", "fov", "resolution"});
    cam.position = read_vec3(require(c, "camera", "position"), "camera.position");
    cam.look_at = read_vec3(require(c, "camera", "look_at"), "camera.look_at");
    if (c.contains("up")) cam.up = read_vec3(c["up"], "camera.up");
    cam.vertical_fov = read_number(require(c, "camera", "fov"), "camera.fov");
    if (!(cam.vertical_fov > 0.0 && cam.vertical_fov < 180.0)) throw SceneError("camera.fov: must lie in (0, 180)");
    const ojson& res = require(c, "camera", "resolution");
    if (!res.is_array() || res.size() != 2 || !res[0].is_number_integer() || !res[1].is_number_integer()) {
      throw SceneError("camera.resolution: expected [width, height] integers");
    }
    cam.width = res[0].get<int>();
    cam.height = res[1].get<int>();
    if (cam.width <= 0 || cam.height <= 0) throw SceneError("camera.resolution: must be positive");
    const Vec3 fwd = cam.look_at - cam.position;
    if (fwd.norm() == 0.0 || fwd.cross(cam.up).norm() == 0.0) throw SceneError("camera: degenerate orientation");
  }

  std::vector<MaterialDesc> materials;
  std::vector<std::vector<ParamField>> diff_fields;
  {
    const ojson& mats = require(doc, "scene", "materials");
    if (!mats.is_object() || mats.empty()) throw SceneError("materials: expected a non-empty object");
    for (auto it = mats.begin(); it != mats.end(); ++it) {
      const std::string where = "materials." + it.key();
      const ojson& m = it.value();
      check_keys(m, where, {"model", "albedo", "roughness", "eta", "k", "emission", "differentiable", "two_sided"});
      MaterialDesc d;
      d.name = it.key();
      const ojson& model = require(m, where, "model");
      if (model == "diffuse") {
        d.model = MaterialModel::diffuse;
      } else if (model == "rough_conductor") {
        d.model = MaterialModel::rough_conductor;
      } else {
        throw SceneError(where + ".model: expected 'diffuse' or 'rough_conductor'");
      }
      const bool diffuse = d.model == MaterialModel::diffuse;
      for (const char* key : {"albedo"}) {
        if (m.contains(key) && !diffuse) throw SceneError(where + "." + key + ": not a rough_conductor field");
      }
      for (const char* key : {"roughness", "eta", "k"}) {
        if (m.contains(key) && diffuse) throw SceneError(where + "." + key + ": not a diffuse field");
      }
      if (m.contains("albedo")) d.albedo = read_rgb(m["albedo"], where + ".albedo");
      check_range(d.albedo, 0.0, 1.0, where + ".albedo");
      if (m.contains("roughness")) d.roughness = read_number(m["roughness"], where + ".roughness");
      if (!(d.roughness > 0.0 && d.roughness <= 1.0)) throw SceneError(where + ".roughness: must lie in (0, 1]");
      d.roughness = std::max(d.roughness, kMinRoughness);
      if (m.contains("eta")) d.eta = read_rgb(m["eta"], where + ".eta");
      if ((d.eta <= 0.0).any()) throw SceneError(where + ".eta: must be positive");
      if (m.contains("k")) d.k = read_rgb(m["k"], where + ".k");
      check_range(d.k, 0.0, std::numeric_limits<double>::infinity(), where + ".k");
      if (m.contains("emission")) d.emission = read_rgb(m["emission"], where + ".emission");
      check_range(d.emission, 0.0, std::numeric_limits<double>::infinity(), where + ".emission");
      if (m.contains("two_sided")) {
        if (!m["two_sided"].is_boolean()) throw SceneError(where + ".two_sided: expected a boolean");
        d.two_sided = m["two_sided"].get<bool>();
      }
      std::vector<ParamField> fields;
      if (m.contains("differentiable")) {
        const ojson& list = m["differentiable"];
        if (!list.is_array()) throw SceneError(where + ".differentiable: expected an array of field names");
        for (const ojson& f : list) {
          if (f == "albedo") fields.push_back(ParamField::albedo);
          else if (f == "roughness") fields.push_back(ParamField::roughness);
          else if (f == "k") fields.push_back(ParamField::k);
          else if (f == "emission") fields.push_back(ParamField::emission);
          else throw SceneError(where + ".differentiable: unknown field " + f.dump());
        }
      }
      materials.push_back(std::move(d));
      diff_fields.push_back(std::move(fields));
    }
  }

  std::vector<Shape> shapes;
  {
    const ojson& list = require(doc, "scene", "shapes");
    if (!list.is_array()) throw SceneError("shapes: expected an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string where = "shapes[" + std::to_string(i) + "]";
      const ojson& s = list[i];
      if (!s.is_object()) throw SceneError(where + ": expected an object");
      const ojson& type = require(s, where, "type");
      const ojson& mat = require(s, where, "material");
      if (!mat.is_string()) throw SceneError(where + ".material: expected a material name");
      int mid = -1;
      for (std::size_t k = 0; k < materials.size(); ++k) {
        if (materials[k].name == mat.get<std::string>()) mid = static_cast<int>(k);
      }
      if (mid < 0) throw SceneError(where + ".material: unknown material '" + mat.get<std::string>() + "'");
      try {
        if (type == "quad") {
          check_keys(s, where, {"type", "material", "corner", "edge_u", "edge_v"});
          shapes.push_back(Shape::quad(read_vec3(require(s, where, "corner"), where + ".corner"),
                                       read_vec3(require(s, where, "edge_u"), where + ".edge_u"),
                                       read_vec3(require(s, where, "edge_v"), where + ".edge_v"), mid));
        } else if (type == "tri") {
          check_keys(s, where, {"type", "material", "vertices"});
          const ojson& v = require(s, where, "vertices");
          if (!v.is_array() || v.size() != 3) throw SceneError(where + ".vertices: expected 3 points");
          shapes.push_back(Shape::triangle(read_vec3(v[0], where + ".vertices[0]"), read_vec3(v[1], where + ".vertices[1]"),
                                           read_vec3(v[2], where + ".vertices[2]"), mid));
        } else if (type == "sphere") {
          check_keys(s, where, {"type", "material", "center", "radius"});
          shapes.push_back(Shape::sphere(read_vec3(require(s, where, "center"), where + ".center"),
                                         read_number(require(s, where, "radius"), where + ".radius"), mid));
        } else {
          throw SceneError(where + ".type: expected quad, sphere or tri");
        }
      } catch (const std::invalid_argument& e) {
        throw SceneError(where + ": " + e.what());
      }
    }
  }

  Scene scene(std::move(cam), materials, std::move(shapes));
  for (std::size_t m = 0; m < materials.size(); ++m) {
    for (ParamField f : diff_fields[m]) scene.make_differentiable(materials[m].name, f);
  }
  return scene;
}

Scene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SceneError("cannot open scene file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_scene(ss.str());
  } catch (const SceneError& e) {
    throw SceneError(path.string() + ": " + e.what());
  }
}

std::string serialize_scene(const Scene& scene) {
  auto vec = [](const Vec3& v) { return ojson::array({v.x(), v.y(), v.z()}); };
  auto rgb = [](const Spectrum& s) { return ojson::array({s[0], s[1], s[2]}); };
  ojson doc;
  const Camera& c = scene.camera();
  doc["camera"] = {{"position", vec(c.position)},
                   {"look_at", vec(c.look_at)},
                   {"up", vec(c.up)},
                   {"fov", c.vertical_fov},
                   {"resolution", ojson::array({c.width, c.height})}};
  ojson mats = ojson::object();
  for (const MaterialDesc& m : scene.materials()) {
    ojson j;
    j["model"] = std::string(to_string(m.model));
    if (m.model == MaterialModel::diffuse) {
      j["albedo"] = rgb(m.albedo);
    } else {
      j["roughness"] = m.roughness;
      j["eta"] = rgb(m.eta);
      j["k"] = rgb(m.k);
    }
    j["emission"] = rgb(m.emission);
    if (m.two_sided) j["two_sided"] = true;
    ojson diff = ojson::array();
    for (const ParamEntry& e : scene.params().entries()) {
      if (&scene.material(e.material) == &m) diff.push_back(std::string(to_string(e.field)));
    }
    if (!diff.empty()) j["differentiable"] = diff;
    mats[m.name] = j;
  }
  doc["materials"] = mats;
  ojson shapes = ojson::array();
  for (const Shape& s : scene.geometry().shapes()) {
    ojson j;
    switch (s.kind) {
      case ShapeKind::quad:
        j = {{"type", "quad"}, {"corner", vec(s.p0)}, {"edge_u", vec(s.e1)}, {"edge_v", vec(s.e2)}};
        break;
      case ShapeKind::triangle:
        j = {{"type", "tri"}, {"vertices", ojson::array({vec(s.p0), vec(s.p0 + s.e1), vec(s.p0 + s.e2)})}};
        break;
      case ShapeKind::sphere:
        j = {{"type", "sphere"}, {"center", vec(s.p0)}, {"radius", s.radius}};
        break;
    }
    j["material"] = scene.material(s.material).name;
    shapes.push_back(j);
  }
  doc["shapes"] = shapes;
  return doc.dump(2);
}

}  // namespace radfield
