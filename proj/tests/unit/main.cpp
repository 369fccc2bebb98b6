// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "radfield/runtime.hpp"

int main(int argc, char** argv) {
  radfield::retain_heap_memory();
  doctest::Context ctx(argc, argv);
  return ctx.run();
}
