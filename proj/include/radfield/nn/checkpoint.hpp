// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "radfield/nn/adam.hpp"
#include "radfield/nn/network.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace radfield::nn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[4] = {'D', 'N', 'R', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Shape block stored after the magic/version header.
struct CheckpointHeader {
  std::uint32_t constant_width = 0;
  std::uint32_t hidden_width = 0;
  std::uint32_t hidden_layers = 0;
  std::uint32_t output_width = 0;
  std::vector<std::uint32_t> grid_resolutions;
  std::uint32_t feature_dim = 0;
  std::uint32_t n_params = 0;
};

namespace io {
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);
void write_header(std::ostream& out, const CheckpointHeader& h);
CheckpointHeader read_header(std::istream& in);
/// (name, rows, cols) of every parameter block a header implies, in storage order.
std::vector<std::tuple<std::string, Eigen::Index, Eigen::Index>> block_shapes(const CheckpointHeader& h);
std::ofstream open_out(const std::filesystem::path& p);
std::ifstream open_in(const std::filesystem::path& p);
}  // namespace io

template <class S>
CheckpointHeader header_of(const Network<S>& net, int n_params) {
  CheckpointHeader h;
  h.constant_width = static_cast<std::uint32_t>(net.constant_width());
  h.hidden_width = static_cast<std::uint32_t>(net.config().hidden_width);
  h.hidden_layers = static_cast<std::uint32_t>(net.config().hidden_layers);
  h.output_width = static_cast<std::uint32_t>(net.output_width());
  for (int r : net.config().grid_resolutions) h.grid_resolutions.push_back(static_cast<std::uint32_t>(r));
  h.feature_dim = static_cast<std::uint32_t>(net.config().feature_dim);
  h.n_params = static_cast<std::uint32_t>(n_params);
  return h;
}

/// Writes weights (and optionally Adam moments) as little-endian f64.
template <class S>
void save_checkpoint(const std::filesystem::path& path, Network<S>& net, int n_params, const Adam<S>* opt = nullptr) {
  auto out = io::open_out(path);
  io::write_header(out, header_of(net, n_params));
  const auto params = net.parameters();
  for (const Parameter<S>* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) io::write_f64(out, static_cast<double>(p->value.data()[i]));
  }
  const bool moments = opt && opt->steps() > 0 && opt->first_moments().size() == params.size();
  io::write_u32(out, moments ? 1u : 0u);
  if (moments) {
    io::write_u64(out, static_cast<std::uint64_t>(opt->steps()));
    for (const auto* set : {&opt->first_moments(), &opt->second_moments()}) {
      for (const Mat<S>& m : *set) {
        for (Eigen::Index i = 0; i < m.size(); ++i) io::write_f64(out, static_cast<double>(m.data()[i]));
      }
    }
  }
  if (!out) throw CheckpointError("failed writing checkpoint '" + path.string() + "'");
}

/// Loads into an already-configured network; any shape difference is an error
/// naming the first mismatching block. Returns the stored scene-parameter count.
template <class S>
int load_checkpoint(const std::filesystem::path& path, Network<S>& net, Adam<S>* opt = nullptr) {
  auto in = io::open_in(path);
  const CheckpointHeader file = io::read_header(in);
  const auto expected = io::block_shapes(header_of(net, static_cast<int>(file.n_params)));
  const auto stored = io::block_shapes(file);
  for (std::size_t i = 0; i < std::max(expected.size(), stored.size()); ++i) {
    if (i >= expected.size() || i >= stored.size()) {
      const auto& [name, r, c] = i < stored.size() ? stored[i] : expected[i];
      throw CheckpointError("checkpoint layer count mismatch at '" + name + "'");
    }
    const auto& [name, r, c] = stored[i];
    const auto& [ename, er, ec] = expected[i];
    if (name != ename || r != er || c != ec) {
      throw CheckpointError("shape mismatch in '" + ename + "': checkpoint has " + std::to_string(r) + "x" +
                            std::to_string(c) + ", network expects " + std::to_string(er) + "x" + std::to_string(ec));
    }
  }
  if (file.constant_width != static_cast<std::uint32_t>(net.constant_width())) {
    throw CheckpointError("input encoding width mismatch");
  }
  const auto params = net.parameters();
  for (Parameter<S>* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = static_cast<S>(io::read_f64(in));
    p->zero_grad();
  }
  const std::uint32_t moments = io::read_u32(in);
  if (moments > 1) throw CheckpointError("corrupt optimizer flag");
  if (moments == 1) {
    const std::uint64_t steps = io::read_u64(in);
    std::vector<Mat<S>> m, v;
    for (auto* set : {&m, &v}) {
      for (const Parameter<S>* p : params) {
        Mat<S> buf(p->value.rows(), p->value.cols());
        for (Eigen::Index i = 0; i < buf.size(); ++i) buf.data()[i] = static_cast<S>(io::read_f64(in));
        set->push_back(std::move(buf));
      }
    }
    if (opt) {
      opt->first_moments() = std::move(m);
      opt->second_moments() = std::move(v);
      opt->set_steps(static_cast<std::int64_t>(steps));
    }
  }
  return static_cast<int>(file.n_params);
}

}  // namespace radfield::nn
