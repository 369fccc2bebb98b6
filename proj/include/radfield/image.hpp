// Copyright Contributors to the radfield Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "radfield/math.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace radfield {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ImageMeta {
  int spp = 0;
  std::uint64_t seed = 0;
  std::string mode;
};

/// RGB image; pixel (x, y) with y = 0 at the top row.
class Image {
 public:
  Image() = default;
  Image(int width, int height) : width_(width), height_(height), data_(3, static_cast<Eigen::Index>(width) * height) {
    data_.setZero();
  }

  int width() const { return width_; }
  int height() const { return height_; }
  Eigen::Index pixel_count() const { return data_.cols(); }
  Eigen::Index index(int x, int y) const { return static_cast<Eigen::Index>(y) * width_ + x; }

  Spectrum at(int x, int y) const { return data_.col(index(x, y)).array(); }
  Spectrum at(Eigen::Index i) const { return data_.col(i).array(); }
  void set(int x, int y, const Spectrum& v) { data_.col(index(x, y)) = v.matrix(); }
  void set(Eigen::Index i, const Spectrum& v) { data_.col(i) = v.matrix(); }

  /// 3 x (width*height), row-major pixel order.
  Eigen::Matrix<double, 3, Eigen::Dynamic>& data() { return data_; }
  const Eigen::Matrix<double, 3, Eigen::Dynamic>& data() const { return data_; }

  Spectrum mean() const { return data_.rowwise().mean().array(); }
  bool same_size(const Image& o) const { return width_ == o.width_ && height_ == o.height_; }

  ImageMeta meta;

 private:
  int width_ = 0;
  int height_ = 0;
  Eigen::Matrix<double, 3, Eigen::Dynamic> data_;
};

/// One image per scalar scene parameter, in parameter order.
struct GradientImage {
  std::vector<Image> slices;

  int size() const { return static_cast<int>(slices.size()); }
};

/// PFM: "PF\n<w> <h>\n-1.0\n", little-endian float32, bottom row first.
void write_pfm(const std::filesystem::path& path, const Image& image);
Image read_pfm(const std::filesystem::path& path);

/// sRGB-encoded 8-bit preview, values clamped to [0, 1] after exposure scaling.
void write_ppm(const std::filesystem::path& path, const Image& image, double exposure = 1.0);
/// Symmetric diverging preview of signed data (blue < 0 < red). Returns the
/// magnitude mapped to full saturation (max |value| when `scale` <= 0).
double write_ppm_diverging(const std::filesystem::path& path, const Image& image, double scale = 0.0);

/// Writes `<stem>.p<j>.pfm` for every slice and returns the paths.
std::vector<std::filesystem::path> write_gradient_pfm(const std::filesystem::path& stem, const GradientImage& g);

}  // namespace radfield
