// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#include "radfield/image.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace radfield {

namespace {

std::uint8_t to_srgb8(double v) {
  v = std::clamp(v, 0.0, 1.0);
  const double s = v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
  return static_cast<std::uint8_t>(std::lround(s * 255.0));
}

void write_ppm_bytes(const std::filesystem::path& path, int w, int h, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageError("cannot open '" + path.string() + "' for writing");
  out << "P6\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ImageError("failed writing '" + path.string() + "'");
}

}  // namespace

void write_pfm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageError("cannot open '" + path.string() + "' for writing");
  out << "PF\n" << image.width() << " " << image.height() << "\n-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(image.width()) * 3);
  for (int y = image.height() - 1; y >= 0; --y) {
    for (int x = 0; x < image.width(); ++x) {
      const Spectrum v = image.at(x, y);
      for (int c = 0; c < 3; ++c) row[static_cast<std::size_t>(3 * x + c)] = static_cast<float>(v[c]);
    }
    if constexpr (std::endian::native == std::endian::big) {
      for (float& f : row) {
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        u = __builtin_bswap32(u);
        std::memcpy(&f, &u, 4);
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw ImageError("failed writing '" + path.string() + "'");
}

Image read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open '" + path.string() + "'");
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  in.get();
  if (magic != "PF" || w <= 0 || h <= 0) throw ImageError("'" + path.string() + "' is not an RGB PFM");
  const bool little = scale < 0.0;
  Image img(w, h);
  std::vector<float> row(static_cast<std::size_t>(w) * 3);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) throw ImageError("'" + path.string() + "' is truncated");
    if (little != (std::endian::native == std::endian::little)) {
      for (float& f : row) {
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        u = __builtin_bswap32(u);
        std::memcpy(&f, &u, 4);
      }
    }
    for (int x = 0; x < w; ++x) {
      const auto i = static_cast<std::size_t>(3 * x);
      img.set(x, y, Spectrum(row[i], row[i + 1], row[i + 2]));
    }
  }
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& image, double exposure) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(static_cast<std::size_t>(image.pixel_count()) * 3);
  for (Eigen::Index i = 0; i < image.pixel_count(); ++i) {
    const Spectrum v = image.at(i) * exposure;
    for (int c = 0; c < 3; ++c) bytes.push_back(to_srgb8(v[c]));
  }
  write_ppm_bytes(path, image.width(), image.height(), bytes);
}

double write_ppm_diverging(const std::filesystem::path& path, const Image& image, double scale) {
  if (scale <= 0.0) scale = image.data().cwiseAbs().maxCoeff();
  const double inv = scale > 0.0 ? 1.0 / scale : 0.0;
  std::vector<std::uint8_t> bytes;
  bytes.reserve(static_cast<std::size_t>(image.pixel_count()) * 3);
  for (Eigen::Index i = 0; i < image.pixel_count(); ++i) {
    const double t = std::clamp(luminance(image.at(i)) * inv, -1.0, 1.0);
    // White at zero, red for positive, blue for negative.
    const double r = t >= 0.0 ? 1.0 : 1.0 + t;
    const double b = t <= 0.0 ? 1.0 : 1.0 - t;
    const double g = 1.0 - std::abs(t);
    for (double c : {r, g, b}) bytes.push_back(static_cast<std::uint8_t>(std::lround(c * 255.0)));
  }
  write_ppm_bytes(path, image.width(), image.height(), bytes);
  return scale;
}

std::vector<std::filesystem::path> write_gradient_pfm(const std::filesystem::path& stem, const GradientImage& g) {
  std::vector<std::filesystem::path> out;
  for (int j = 0; j < g.size(); ++j) {
    std::filesystem::path p = stem;
    p += ".p" + std::to_string(j) + ".pfm";
    write_pfm(p, g.slices[static_cast<std::size_t>(j)]);
    out.push_back(p);
  }
  return out;
}

}  // namespace radfield
