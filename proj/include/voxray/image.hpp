// Row-major 2D image container.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace voxray {

template <typename T>
class image {
 public:
  image() = default;
  image(int width, int height, T fill = T{})
      : width_(width), height_(height), pixels_(size_t(width) * size_t(height), fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  size_t pixel_count() const { return pixels_.size(); }
  bool empty() const { return pixels_.empty(); }

  T& at(int x, int y) { return pixels_[size_t(y) * width_ + x]; }
  const T& at(int x, int y) const { return pixels_[size_t(y) * width_ + x]; }

  T* data() { return pixels_.data(); }
  const T* data() const { return pixels_.data(); }

  auto begin() { return pixels_.begin(); }
  auto end() { return pixels_.end(); }
  auto begin() const { return pixels_.begin(); }
  auto end() const { return pixels_.end(); }

  template <typename U>
  bool same_shape(const image<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> pixels_;
};

}  // namespace voxray
