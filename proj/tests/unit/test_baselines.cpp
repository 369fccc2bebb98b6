// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "radfield/baselines.hpp"
#include "radfield/inverse.hpp"
#include "radfield/pathtrace.hpp"
#include "support.hpp"

using namespace radfield;

namespace {

AdjointImage random_adjoint(const Scene& scene, std::uint64_t seed) {
  AdjointImage a(scene.camera().width, scene.camera().height);
  Sampler rng(seed, 0);
  for (Eigen::Index i = 0; i < a.data().size(); ++i) a.data().data()[i] = rng.next1d() - 0.3;
  return a;
}

}  // namespace

TEST_CASE("path replay equals forward-dual tracing on identical paths") {
  const Scene scene = test::cbox_scene(8);
  const AdjointImage adj = random_adjoint(scene, 1);
  const BaselineResult prb = prb_gradient(scene, adj, 4, 15, 9);
  const ParamGradient fwd = chain(adj, forward_dual_gradient(scene, {}, 4, 15, 9));
  REQUIRE(prb.gradient.size() == 7);
  for (int j = 0; j < 7; ++j) {
    INFO("param " << j);
    CHECK(prb.gradient[j] == doctest::Approx(fwd[j]).epsilon(1e-8));
  }
}

TEST_CASE("radiative backpropagation agrees with path replay in expectation") {
  const Scene scene = test::cbox_scene(6);
  const AdjointImage adj = random_adjoint(scene, 2);
  const int runs = 12;
  std::vector<std::vector<double>> rb(7), prb(7);
  for (int r = 0; r < runs; ++r) {
    const ParamGradient a = rb_gradient(scene, adj, 8, 15, 100 + r).gradient;
    const ParamGradient b = prb_gradient(scene, adj, 8, 15, 200 + r).gradient;
    for (int j = 0; j < 7; ++j) {
      rb[static_cast<std::size_t>(j)].push_back(a[j]);
      prb[static_cast<std::size_t>(j)].push_back(b[j]);
    }
  }
  for (std::size_t j = 0; j < 7; ++j) {
    const double se = std::hypot(test::stderr_of(rb[j]), test::stderr_of(prb[j]));
    INFO("param " << j);
    CHECK(std::abs(test::mean(rb[j]) - test::mean(prb[j])) < 5.0 * se);
  }
}

TEST_CASE("depth one has no scattering gradient") {
  const Scene scene = test::cbox_scene(6);
  const AdjointImage adj = random_adjoint(scene, 3);
  CHECK(rb_gradient(scene, adj, 4, 1, 1).gradient.isZero());
  CHECK(prb_gradient(scene, adj, 4, 1, 1).gradient.isZero());
}

TEST_CASE("path replay memory is linear in depth and radiative backpropagation allocates nothing") {
  const Scene scene = test::cbox_scene(4);
  const AdjointImage adj = random_adjoint(scene, 4);
  const BaselineResult shallow = prb_gradient(scene, adj, 2, 2, 1);
  const BaselineResult deep = prb_gradient(scene, adj, 2, 16, 1);
  CHECK(shallow.stats.max_path_allocations == 1);
  CHECK(deep.stats.max_path_allocations == 1);
  CHECK(deep.stats.max_path_bytes == 8 * shallow.stats.max_path_bytes);
  const BaselineResult rb = rb_gradient(scene, adj, 2, 16, 1);
  CHECK(rb.stats.max_path_allocations == 0);
  CHECK(rb.stats.paths == 16 * 2);
  CHECK(rb.stats.vertices > rb.stats.paths);
}

TEST_CASE("baselines validate their inputs") {
  const Scene scene = test::cbox_scene(4);
  const AdjointImage wrong(3, 4);
  CHECK_THROWS(rb_gradient(scene, wrong, 1, 4, 1));
  CHECK_THROWS(prb_gradient(scene, wrong, 1, 4, 1));
  const AdjointImage adj = random_adjoint(scene, 5);
  CHECK_THROWS(prb_gradient(scene, adj, 0, 4, 1));
  CHECK_THROWS(rb_gradient(scene, adj, 1, 0, 1));
}
