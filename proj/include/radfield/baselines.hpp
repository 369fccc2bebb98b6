// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "radfield/image.hpp"
#include "radfield/scene.hpp"

#include <cstdint>
#include <stdexcept>

namespace radfield {

/// Per-pixel RGB weights d(objective)/d(pixel).
using AdjointImage = Image;
/// d(objective)/dp in ParameterVector order.
using ParamGradient = Eigen::VectorXd;

/// Pass two of path replay did not revisit the vertices of pass one.
class ReplayDivergence : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct BaselineStats {
  std::int64_t paths = 0;
  std::int64_t vertices = 0;
  /// Largest number of heap allocations and bytes made for a single path.
  std::int64_t max_path_allocations = 0;
  std::int64_t max_path_bytes = 0;
};

struct BaselineResult {
  ParamGradient gradient;
  BaselineStats stats;
};

/// Radiative backpropagation: the adjoint is carried from the sensor and
/// every scattering vertex estimates its incident radiance with a fresh
/// inner path, so the cost grows quadratically with path length.
BaselineResult rb_gradient(const Scene& scene, const AdjointImage& adjoint, int spp, int max_depth, std::uint64_t seed,
                           int rr_depth = 5);

/// Path replay backpropagation: pass one records per-vertex throughput,
/// sampled pdf and radiance-to-go; pass two replays the same random stream
/// and recovers incident radiance by division. Linear in path length.
BaselineResult prb_gradient(const Scene& scene, const AdjointImage& adjoint, int spp, int max_depth, std::uint64_t seed,
                            int rr_depth = 5);

}  // namespace radfield
