#include "liverfat/nn/tensor.hpp"

#include "liverfat/error.hpp"

namespace liverfat::nn {

namespace {

std::size_t shape_size(const Tensor::Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    require(d >= 0, "tensor dimensions must be non-negative");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

}  // namespace

Tensor::Tensor(Shape shape, float fill) : shape_(shape), data_(shape_size(shape), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
  require(data_.size() == shape_size(shape_), "tensor data length does not match its shape");
}

std::size_t Tensor::item_size() const {
  return static_cast<std::size_t>(shape_[1]) * shape_[2] * shape_[3];
}

}  // namespace liverfat::nn
