// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#include "radfield/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace radfield::nn::io {

namespace {

template <class T>
void write_le(std::ostream& out, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) throw CheckpointError("checkpoint is truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { write_le(out, v); }
void write_f64(std::ostream& out, double v) { write_le(out, v); }
std::uint32_t read_u32(std::istream& in) { return read_le<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return read_le<std::uint64_t>(in); }
double read_f64(std::istream& in) { return read_le<double>(in); }

void write_header(std::ostream& out, const CheckpointHeader& h) {
  out.write(kCheckpointMagic, 4);
  write_u32(out, kCheckpointVersion);
  write_u32(out, h.constant_width);
  write_u32(out, h.hidden_width);
  write_u32(out, h.hidden_layers);
  write_u32(out, h.output_width);
  write_u32(out, static_cast<std::uint32_t>(h.grid_resolutions.size()));
  for (std::uint32_t r : h.grid_resolutions) write_u32(out, r);
  write_u32(out, h.feature_dim);
  write_u32(out, h.n_params);
}

CheckpointHeader read_header(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4) throw CheckpointError("checkpoint is truncated");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw CheckpointError("bad checkpoint magic");
  const std::uint32_t version = read_u32(in);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  CheckpointHeader h;
  h.constant_width = read_u32(in);
  h.hidden_width = read_u32(in);
  h.hidden_layers = read_u32(in);
  h.output_width = read_u32(in);
  const std::uint32_t levels = read_u32(in);
  if (levels > 64) throw CheckpointError("corrupt grid level count");
  for (std::uint32_t i = 0; i < levels; ++i) h.grid_resolutions.push_back(read_u32(in));
  h.feature_dim = read_u32(in);
  h.n_params = read_u32(in);
  return h;
}

std::vector<std::tuple<std::string, Eigen::Index, Eigen::Index>> block_shapes(const CheckpointHeader& h) {
  std::vector<std::tuple<std::string, Eigen::Index, Eigen::Index>> out;
  Eigen::Index in = h.constant_width + static_cast<Eigen::Index>(h.grid_resolutions.size()) * h.feature_dim;
  for (std::uint32_t l = 0; l <= h.hidden_layers; ++l) {
    const Eigen::Index o = l == h.hidden_layers ? h.output_width : h.hidden_width;
    out.emplace_back("layer" + std::to_string(l) + ".weight", o, in);
    out.emplace_back("layer" + std::to_string(l) + ".bias", o, 1);
    in = o;
  }
  for (std::size_t l = 0; l < h.grid_resolutions.size(); ++l) {
    const Eigen::Index n = h.grid_resolutions[l] + 1;
    out.emplace_back("grid" + std::to_string(l), h.feature_dim, n * n * n);
  }
  return out;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open '" + p.string() + "' for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + p.string() + "'");
  return in;
}

}  // namespace radfield::nn::io
