// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "radfield/scene.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace radfield::test {

inline std::string scene_path(const std::string& name) { return std::string(RADFIELD_SCENE_DIR) + "/" + name; }

inline Scene analytic_scene(int res = 8) {
  Scene s = load_scene(scene_path("analytic.json"));
  Camera c = s.camera();
  c.width = c.height = res;
  s.set_camera(c);
  return s;
}

inline Scene cbox_scene(int res = 8) {
  Scene s = load_scene(scene_path("cbox.json"));
  Camera c = s.camera();
  c.width = c.height = res;
  s.set_camera(c);
  return s;
}

inline double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double stderr_of(const std::vector<double>& xs) {
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  const double n = static_cast<double>(xs.size());
  return std::sqrt(ss / (n - 1.0) / n);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace radfield::test
