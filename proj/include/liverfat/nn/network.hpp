#pragma once

// Small CNN with hand-written backward passes. Tensors are NCHW; dense
// layers see each batch item flattened and emit {N, out, 1, 1}.

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "liverfat/nn/tensor.hpp"

namespace liverfat::nn {

enum class LayerKind : std::uint32_t {
  kConv2d = 1,
  kRelu = 2,
  kMaxPool = 3,
  kGlobalAvgPool = 4,
  kLinear = 5,
};

struct LayerSpec {
  LayerKind kind = LayerKind::kRelu;
  int kernel = 0;   // conv only
  int stride = 1;   // conv only
  int out = 0;      // conv channels / linear features

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Item shape {C, H, W}.
struct ItemShape {
  int c = 1, h = 1, w = 1;
  std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
  friend bool operator==(const ItemShape&, const ItemShape&) = default;
};

struct NetworkConfig {
  ItemShape input{1, 96, 44};
  std::vector<LayerSpec> layers;

  /// Throws ValidationError unless the layers chain and end in one scalar.
  std::vector<ItemShape> shapes() const;

  /// Text form, e.g. "conv(3,2,8) relu maxpool gap linear(1)".
  static NetworkConfig parse(std::string_view layers, ItemShape input);
  std::string layers_text() const;

  static NetworkConfig desk(ItemShape input = {1, 96, 44});
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual LayerSpec spec() const = 0;
  virtual Tensor forward(const Tensor& in) = 0;
  /// Gradient wrt the last forward input; parameter gradients accumulate.
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual std::vector<Tensor*> params() { return {}; }
  /// Mixes the current piecewise-linear branch pattern into h.
  virtual std::uint64_t signature(std::uint64_t h) const { return h; }
};

class Network {
 public:
  Network() = default;
  Network(NetworkConfig config, std::uint64_t init_seed);

  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const NetworkConfig& config() const { return config_; }

  /// {N, C, H, W} -> {N, 1, 1, 1}
  Tensor forward(const Tensor& batch);
  /// Backpropagates d(loss)/d(output); returns d(loss)/d(input).
  Tensor backward(const Tensor& grad_out);

  std::vector<Tensor*> params();
  std::vector<const Tensor*> params() const;
  void zero_grad();
  std::size_t parameter_count() const;

  /// Hash of ReLU masks and max-pool winners from the last forward pass.
  std::uint64_t activation_signature() const;

 private:
  NetworkConfig config_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace liverfat::nn
