#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "noisediag/error.hpp"

namespace noisediag {

/// Axis extents of a latent: (channel, time, height, width).
struct Shape {
  std::size_t channels = 1;
  std::size_t frames = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t size() const noexcept { return channels * frames * height * width; }
  std::size_t slice_size() const noexcept { return height * width; }

  std::array<std::size_t, 4> dims() const noexcept { return {channels, frames, height, width}; }

  bool operator==(const Shape&) const = default;

  std::string to_string() const {
    return "(" + std::to_string(channels) + ", " + std::to_string(frames) + ", " +
           std::to_string(height) + ", " + std::to_string(width) + ")";
  }
};

/// Element type the tensor had (or will have) on disk. In memory it is always double.
enum class StorageType { f32, f64 };

/// Dense (C, T, H, W) latent in row-major order, promoted to double.
class LatentTensor {
public:
  LatentTensor() = default;

  explicit LatentTensor(Shape shape, StorageType storage = StorageType::f64)
      : shape_(validated(shape)), data_(shape.size(), 0.0), storage_(storage) {}

  LatentTensor(Shape shape, std::vector<double> data, StorageType storage = StorageType::f64)
      : shape_(validated(shape)), data_(std::move(data)), storage_(storage) {
    if (data_.size() != shape_.size())
      throw shape_error("tensor data length " + std::to_string(data_.size()) +
                        " does not match shape " + shape_.to_string());
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  StorageType storage() const noexcept { return storage_; }
  void set_storage(StorageType storage) noexcept { storage_ = storage; }

  std::span<const double> values() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }

  std::size_t index(std::size_t c, std::size_t t, std::size_t h, std::size_t w) const noexcept {
    return ((c * shape_.frames + t) * shape_.height + h) * shape_.width + w;
  }
  double operator()(std::size_t c, std::size_t t, std::size_t h, std::size_t w) const noexcept {
    return data_[index(c, t, h, w)];
  }
  double& operator()(std::size_t c, std::size_t t, std::size_t h, std::size_t w) noexcept {
    return data_[index(c, t, h, w)];
  }

  /// The (c, t) spatial slice, H*W contiguous values.
  std::span<const double> slice(std::size_t c, std::size_t t) const noexcept {
    return std::span<const double>(data_).subspan(index(c, t, 0, 0), shape_.slice_size());
  }

private:
  static Shape validated(Shape shape) {
    if (shape.channels == 0 || shape.frames == 0 || shape.height == 0 || shape.width == 0)
      throw shape_error("every tensor axis must be at least 1, got " + shape.to_string());
    return shape;
  }

  Shape shape_{};
  std::vector<double> data_ = std::vector<double>(1, 0.0);
  StorageType storage_ = StorageType::f64;
};

inline void require_same_shape(const LatentTensor& a, const LatentTensor& b, const std::string& what) {
  if (a.shape() != b.shape())
    throw shape_error(what + ": shape " + a.shape().to_string() + " vs " + b.shape().to_string());
}

} // namespace noisediag
