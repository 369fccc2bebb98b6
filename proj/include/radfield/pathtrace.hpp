// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "radfield/fields.hpp"
#include "radfield/image.hpp"
#include "radfield/scene.hpp"

#include <cstdint>
#include <span>

namespace radfield {

/// Reference path tracer: one stream per (seed, pixel, sample), box filter.
Image render_primal(const Scene& scene, int spp, int max_depth, std::uint64_t seed, int rr_depth = 5);

/// Primary rays only; the field is queried at the first hit. Negative primal
/// values are clamped to zero.
template <class S>
Image render_field_lhs(const Scene& scene, const PrimalField<S>& field, int spp, std::uint64_t seed);
template <class S>
GradientImage render_field_lhs(const Scene& scene, const DiffField<S>& field, int spp, std::uint64_t seed);

/// One scattering step at the first hit with the current scene parameters,
/// closed by the field at the next hit.
template <class S>
Image render_field_rhs(const Scene& scene, const PrimalField<S>& field, int spp, int incident, std::uint64_t seed);
template <class S>
GradientImage render_field_rhs(const Scene& scene, const DiffField<S>& field, const PrimalField<S>& primal, int spp,
                               int incident, std::uint64_t seed);

/// Central differences with common random numbers. Roulette is disabled so
/// both stencil renders follow the same paths. Throws when p +/- eps leaves
/// the parameter's valid range.
Image fd_gradient(const Scene& scene, int param, double eps, int spp, std::uint64_t seed, int max_depth = 15);

/// Path tracing with dual-number throughput in the active parameters (all
/// when `active` is empty); sampling uses primal values only. One slice per
/// scene parameter, inactive slices are zero.
GradientImage forward_dual_gradient(const Scene& scene, std::span<const int> active, int spp, int max_depth,
                                    std::uint64_t seed, int rr_depth = 5);

inline constexpr int kMaxDualParams = 16;

}  // namespace radfield
