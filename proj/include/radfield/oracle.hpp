// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "radfield/scene.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace radfield {

struct OracleOptions {
  int primal_spp = 4096;
  int gradient_spp = 256;
  int runs = 8;
  int max_depth = 15;
  double eps = 1e-3;
  int residual_records = 1 << 14;
  int incident = 4;
  std::uint64_t seed = 1;
};

struct OracleCheck {
  std::string name;
  bool pass = false;
  double value = 0.0;      // measured deviation
  double tolerance = 0.0;  // allowed deviation
  double wall_ms = 0.0;
};

/// Checks every estimator against the closed-form solution of a single-bounce
/// scene (see analytic::DirectScene): the reference renderer within 1% of the
/// image mean, fd / forward-dual / rb / prb within 3 standard errors of the
/// albedo derivative, and zero-mean residuals of the exact fields.
std::vector<OracleCheck> run_oracle_suite(const Scene& scene, const OracleOptions& opt);

/// Mean and standard error of the mean.
std::pair<double, double> mean_and_stderr(const std::vector<double>& xs);

}  // namespace radfield
