#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace liverfat::nn {

/// Dense NCHW float tensor with an optional gradient buffer of equal size.
class Tensor {
 public:
  using Shape = std::array<int, 4>;

  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return data_.size(); }
  /// Elements per batch item (C * H * W).
  std::size_t item_size() const;

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  float* item(int n) { return data_.data() + static_cast<std::size_t>(n) * item_size(); }
  const float* item(int n) const { return data_.data() + static_cast<std::size_t>(n) * item_size(); }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  bool has_grad() const { return !grad_.empty(); }
  void enable_grad() { grad_.assign(data_.size(), 0.0f); }
  void zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0f); }
  std::span<float> grad() { return grad_; }
  std::span<const float> grad() const { return grad_; }

 private:
  Shape shape_{0, 0, 0, 0};
  std::vector<float> data_;
  std::vector<float> grad_;
};

}  // namespace liverfat::nn
