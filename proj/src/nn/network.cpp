#include "liverfat/nn/network.hpp"

#include <charconv>
#include <cmath>
#include <random>
#include <sstream>

#include "liverfat/error.hpp"
#include "liverfat/simd/kernels.hpp"
#include "liverfat/util.hpp"

namespace liverfat::nn {

namespace {

std::uint64_t mix_value(std::uint64_t h, std::uint64_t v) {
  h ^= v;
  return h * 0x100000001b3ULL;
}

ItemShape item_shape(const Tensor& t) { return {t.dim(1), t.dim(2), t.dim(3)}; }

void he_init(Tensor& w, int fan_in, std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
  for (float& x : w.data()) x = dist(rng);
}

class Conv2d final : public Layer {
 public:
  Conv2d(ItemShape in, LayerSpec s, std::mt19937_64& rng)
      : in_(in), k_(s.kernel), stride_(s.stride), out_c_(s.out) {
    pad_ = k_ / 2;
    out_h_ = (in.h + 2 * pad_ - k_) / stride_ + 1;
    out_w_ = (in.w + 2 * pad_ - k_) / stride_ + 1;
    rows_ = in.c * k_ * k_;
    weight_ = Tensor({out_c_, in.c, k_, k_});
    bias_ = Tensor({out_c_, 1, 1, 1});
    he_init(weight_, rows_, rng);
    weight_.enable_grad();
    bias_.enable_grad();
  }

  LayerSpec spec() const override { return {LayerKind::kConv2d, k_, stride_, out_c_}; }

  Tensor forward(const Tensor& in) override {
    require(item_shape(in) == in_, "conv2d input shape mismatch");
    const auto& kt = simd::kernels();
    const int n = in.dim(0);
    const std::size_t pixels = static_cast<std::size_t>(out_h_) * out_w_;
    cols_.assign(static_cast<std::size_t>(n) * rows_ * pixels, 0.0f);
    Tensor out({n, out_c_, out_h_, out_w_});
    for (int b = 0; b < n; ++b) {
      float* cols = cols_.data() + static_cast<std::size_t>(b) * rows_ * pixels;
      im2col(in.item(b), cols);
      float* o = out.item(b);
      for (int oc = 0; oc < out_c_; ++oc) {
        float* orow = o + oc * pixels;
        std::fill(orow, orow + pixels, bias_[oc]);
        const float* w = weight_.data().data() + static_cast<std::size_t>(oc) * rows_;
        for (int r = 0; r < rows_; ++r) kt.axpy(w[r], cols + r * pixels, orow, pixels);
      }
    }
    batch_ = n;
    return out;
  }

  Tensor backward(const Tensor& grad_out) override {
    const auto& kt = simd::kernels();
    const std::size_t pixels = static_cast<std::size_t>(out_h_) * out_w_;
    Tensor din({batch_, in_.c, in_.h, in_.w});
    std::vector<float> dcols(static_cast<std::size_t>(rows_) * pixels);
    auto dw = weight_.grad();
    auto db = bias_.grad();
    for (int b = 0; b < batch_; ++b) {
      const float* cols = cols_.data() + static_cast<std::size_t>(b) * rows_ * pixels;
      const float* g = grad_out.item(b);
      std::fill(dcols.begin(), dcols.end(), 0.0f);
      for (int oc = 0; oc < out_c_; ++oc) {
        const float* grow = g + oc * pixels;
        const float* w = weight_.data().data() + static_cast<std::size_t>(oc) * rows_;
        float* dwr = dw.data() + static_cast<std::size_t>(oc) * rows_;
        float s = 0.0f;
        for (std::size_t p = 0; p < pixels; ++p) s += grow[p];
        db[oc] += s;
        for (int r = 0; r < rows_; ++r) {
          dwr[r] += kt.dot(grow, cols + r * pixels, pixels);
          kt.axpy(w[r], grow, dcols.data() + r * pixels, pixels);
        }
      }
      col2im(dcols.data(), din.item(b));
    }
    return din;
  }

  std::vector<Tensor*> params() override { return {&weight_, &bias_}; }

 private:
  template <typename Fn>
  void for_taps(Fn&& fn) const {
    for (int c = 0; c < in_.c; ++c) {
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          const int r = (c * k_ + ky) * k_ + kx;
          for (int oy = 0; oy < out_h_; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= in_.h) continue;
            for (int ox = 0; ox < out_w_; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix < 0 || ix >= in_.w) continue;
              fn(static_cast<std::size_t>(r) * out_h_ * out_w_ + oy * out_w_ + ox,
                 (static_cast<std::size_t>(c) * in_.h + iy) * in_.w + ix);
            }
          }
        }
      }
    }
  }

  void im2col(const float* in, float* cols) const {
    for_taps([&](std::size_t ci, std::size_t ii) { cols[ci] = in[ii]; });
  }
  void col2im(const float* dcols, float* din) const {
    for_taps([&](std::size_t ci, std::size_t ii) { din[ii] += dcols[ci]; });
  }

  ItemShape in_;
  int k_, stride_, out_c_, pad_, out_h_, out_w_, rows_;
  Tensor weight_, bias_;
  std::vector<float> cols_;
  int batch_ = 0;
};

class Relu final : public Layer {
 public:
  LayerSpec spec() const override { return {LayerKind::kRelu, 0, 1, 0}; }

  Tensor forward(const Tensor& in) override {
    Tensor out(in.shape());
    mask_.resize(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
      mask_[i] = in[i] > 0.0f;
      out[i] = mask_[i] ? in[i] : 0.0f;
    }
    return out;
  }

  Tensor backward(const Tensor& grad_out) override {
    Tensor din(grad_out.shape());
    for (std::size_t i = 0; i < din.size(); ++i) din[i] = mask_[i] ? grad_out[i] : 0.0f;
    return din;
  }

  std::uint64_t signature(std::uint64_t h) const override {
    return fnv1a(mask_, h);
  }

 private:
  std::vector<std::uint8_t> mask_;
};

class MaxPool2 final : public Layer {
 public:
  LayerSpec spec() const override { return {LayerKind::kMaxPool, 0, 1, 0}; }

  Tensor forward(const Tensor& in) override {
    in_shape_ = in.shape();
    const int n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
    const int oh = h / 2, ow = w / 2;
    Tensor out({n, c, oh, ow});
    argmax_.resize(out.size());
    std::size_t o = 0;
    for (int b = 0; b < n; ++b) {
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t plane = (static_cast<std::size_t>(b) * c + ch) * h * w;
        for (int y = 0; y < oh; ++y) {
          for (int x = 0; x < ow; ++x, ++o) {
            std::size_t best = plane + static_cast<std::size_t>(2 * y) * w + 2 * x;
            for (int dy = 0; dy < 2; ++dy) {
              for (int dx = 0; dx < 2; ++dx) {
                const std::size_t i = plane + static_cast<std::size_t>(2 * y + dy) * w + 2 * x + dx;
                if (in[i] > in[best]) best = i;
              }
            }
            argmax_[o] = best;
            out[o] = in[best];
          }
        }
      }
    }
    return out;
  }

  Tensor backward(const Tensor& grad_out) override {
    Tensor din(in_shape_);
    for (std::size_t o = 0; o < grad_out.size(); ++o) din[argmax_[o]] += grad_out[o];
    return din;
  }

  std::uint64_t signature(std::uint64_t h) const override {
    for (std::size_t a : argmax_) h = mix_value(h, a);
    return h;
  }

 private:
  Tensor::Shape in_shape_{};
  std::vector<std::size_t> argmax_;
};

class GlobalAvgPool final : public Layer {
 public:
  LayerSpec spec() const override { return {LayerKind::kGlobalAvgPool, 0, 1, 0}; }

  Tensor forward(const Tensor& in) override {
    in_shape_ = in.shape();
    const int n = in.dim(0), c = in.dim(1);
    const std::size_t hw = static_cast<std::size_t>(in.dim(2)) * in.dim(3);
    Tensor out({n, c, 1, 1});
    for (std::size_t i = 0; i < out.size(); ++i) {
      const float* p = in.data().data() + i * hw;
      float s = 0.0f;
      for (std::size_t j = 0; j < hw; ++j) s += p[j];
      out[i] = s / static_cast<float>(hw);
    }
    return out;
  }

  Tensor backward(const Tensor& grad_out) override {
    Tensor din(in_shape_);
    const std::size_t hw = static_cast<std::size_t>(in_shape_[2]) * in_shape_[3];
    for (std::size_t i = 0; i < grad_out.size(); ++i) {
      const float g = grad_out[i] / static_cast<float>(hw);
      std::fill(din.data().begin() + i * hw, din.data().begin() + (i + 1) * hw, g);
    }
    return din;
  }

 private:
  Tensor::Shape in_shape_{};
};

class Linear final : public Layer {
 public:
  Linear(ItemShape in, LayerSpec s, std::mt19937_64& rng)
      : in_(in), features_(static_cast<int>(in.size())), out_(s.out) {
    weight_ = Tensor({out_, features_, 1, 1});
    bias_ = Tensor({out_, 1, 1, 1});
    he_init(weight_, features_, rng);
    weight_.enable_grad();
    bias_.enable_grad();
  }

  LayerSpec spec() const override { return {LayerKind::kLinear, 0, 1, out_}; }

  Tensor forward(const Tensor& in) override {
    require(item_shape(in) == in_, "linear input shape mismatch");
    const auto& kt = simd::kernels();
    input_ = in;
    const int n = in.dim(0);
    Tensor out({n, out_, 1, 1});
    for (int b = 0; b < n; ++b) {
      for (int o = 0; o < out_; ++o) {
        const float* w = weight_.data().data() + static_cast<std::size_t>(o) * features_;
        out.item(b)[o] = kt.dot(w, in.item(b), features_) + bias_[o];
      }
    }
    return out;
  }

  Tensor backward(const Tensor& grad_out) override {
    const auto& kt = simd::kernels();
    const int n = input_.dim(0);
    Tensor din(input_.shape());
    auto dw = weight_.grad();
    auto db = bias_.grad();
    for (int b = 0; b < n; ++b) {
      for (int o = 0; o < out_; ++o) {
        const float g = grad_out.item(b)[o];
        const std::size_t off = static_cast<std::size_t>(o) * features_;
        db[o] += g;
        kt.axpy(g, input_.item(b), dw.data() + off, features_);
        kt.axpy(g, weight_.data().data() + off, din.item(b), features_);
      }
    }
    return din;
  }

  std::vector<Tensor*> params() override { return {&weight_, &bias_}; }

 private:
  ItemShape in_;
  int features_, out_;
  Tensor weight_, bias_;
  Tensor input_;
};

std::unique_ptr<Layer> make_layer(ItemShape in, const LayerSpec& s, std::mt19937_64& rng) {
  switch (s.kind) {
    case LayerKind::kConv2d: return std::make_unique<Conv2d>(in, s, rng);
    case LayerKind::kRelu: return std::make_unique<Relu>();
    case LayerKind::kMaxPool: return std::make_unique<MaxPool2>();
    case LayerKind::kGlobalAvgPool: return std::make_unique<GlobalAvgPool>();
    case LayerKind::kLinear: return std::make_unique<Linear>(in, s, rng);
  }
  throw ValidationError("unknown layer kind");
}

std::vector<int> parse_args(std::string_view token, std::string_view name) {
  std::vector<int> out;
  if (token.size() == name.size()) return out;
  require(token[name.size()] == '(' && token.back() == ')', "malformed layer: " + std::string(token));
  std::string_view inner = token.substr(name.size() + 1, token.size() - name.size() - 2);
  while (!inner.empty()) {
    const auto comma = inner.find(',');
    std::string_view part = inner.substr(0, comma);
    int v = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    require(ec == std::errc() && ptr == part.data() + part.size(), "bad layer argument in " + std::string(token));
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    inner.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace

std::vector<ItemShape> NetworkConfig::shapes() const {
  require(input.c > 0 && input.h > 0 && input.w > 0, "network input shape must be positive");
  require(!layers.empty(), "network needs at least one layer");
  std::vector<ItemShape> out{input};
  ItemShape s = input;
  for (const auto& l : layers) {
    switch (l.kind) {
      case LayerKind::kConv2d: {
        require(l.kernel >= 1 && l.stride >= 1 && l.out >= 1, "conv2d needs kernel, stride, channels >= 1");
        const int pad = l.kernel / 2;
        require(s.h + 2 * pad >= l.kernel && s.w + 2 * pad >= l.kernel, "conv2d kernel larger than input");
        s = {l.out, (s.h + 2 * pad - l.kernel) / l.stride + 1, (s.w + 2 * pad - l.kernel) / l.stride + 1};
        break;
      }
      case LayerKind::kRelu: break;
      case LayerKind::kMaxPool:
        require(s.h >= 2 && s.w >= 2, "maxpool input smaller than 2x2");
        s = {s.c, s.h / 2, s.w / 2};
        break;
      case LayerKind::kGlobalAvgPool: s = {s.c, 1, 1}; break;
      case LayerKind::kLinear:
        require(l.out >= 1, "linear needs at least one output");
        s = {l.out, 1, 1};
        break;
      default: throw ValidationError("unknown layer kind");
    }
    out.push_back(s);
  }
  require(s == ItemShape{1, 1, 1}, "network must end in a single scalar");
  return out;
}

NetworkConfig NetworkConfig::parse(std::string_view text, ItemShape input) {
  NetworkConfig cfg;
  cfg.input = input;
  std::istringstream is{std::string(text)};
  std::string tok;
  while (is >> tok) {
    std::string_view t = tok;
    LayerSpec s;
    if (t.starts_with("conv")) {
      auto a = parse_args(t, "conv");
      require(a.size() == 3, "conv takes (kernel,stride,channels)");
      s = {LayerKind::kConv2d, a[0], a[1], a[2]};
    } else if (t.starts_with("linear")) {
      auto a = parse_args(t, "linear");
      require(a.size() == 1, "linear takes (outputs)");
      s = {LayerKind::kLinear, 0, 1, a[0]};
    } else if (t == "relu") {
      s = {LayerKind::kRelu, 0, 1, 0};
    } else if (t == "maxpool") {
      s = {LayerKind::kMaxPool, 0, 1, 0};
    } else if (t == "gap") {
      s = {LayerKind::kGlobalAvgPool, 0, 1, 0};
    } else {
      throw ValidationError("unknown layer: " + tok);
    }
    cfg.layers.push_back(s);
  }
  cfg.shapes();
  return cfg;
}

std::string NetworkConfig::layers_text() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (i) os << ' ';
    switch (l.kind) {
      case LayerKind::kConv2d: os << "conv(" << l.kernel << ',' << l.stride << ',' << l.out << ')'; break;
      case LayerKind::kRelu: os << "relu"; break;
      case LayerKind::kMaxPool: os << "maxpool"; break;
      case LayerKind::kGlobalAvgPool: os << "gap"; break;
      case LayerKind::kLinear: os << "linear(" << l.out << ')'; break;
    }
  }
  return os.str();
}

NetworkConfig NetworkConfig::desk(ItemShape input) {
  return parse("conv(3,2,8) relu maxpool conv(3,1,16) relu maxpool linear(1)", input);
}

Network::Network(NetworkConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
  const auto shapes = config_.shapes();
  std::mt19937_64 rng(init_seed);
  for (std::size_t i = 0; i < config_.layers.size(); ++i) {
    layers_.push_back(make_layer(shapes[i], config_.layers[i], rng));
  }
}

Network::Network(const Network& other) : Network(other.config_, 0) {
  auto dst = params();
  auto src = other.params();
  for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] = *src[i];
}

Network& Network::operator=(const Network& other) {
  if (this != &other) *this = Network(other);
  return *this;
}

Tensor Network::forward(const Tensor& batch) {
  Tensor x = batch;
  for (auto& l : layers_) x = l->forward(x);
  return x;
}

Tensor Network::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<Tensor*> Network::params() {
  std::vector<Tensor*> out;
  for (auto& l : layers_) {
    for (Tensor* p : l->params()) out.push_back(p);
  }
  return out;
}

std::vector<const Tensor*> Network::params() const {
  std::vector<const Tensor*> out;
  for (const auto& l : layers_) {
    for (Tensor* p : l->params()) out.push_back(p);
  }
  return out;
}

void Network::zero_grad() {
  for (Tensor* p : params()) p->zero_grad();
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* p : params()) n += p->size();
  return n;
}

std::uint64_t Network::activation_signature() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& l : layers_) h = l->signature(h);
  return h;
}

}  // namespace liverfat::nn
