#include "liverfat/nn/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "liverfat/error.hpp"
#include "liverfat/simd/kernels.hpp"
#include "liverfat/util.hpp"

namespace liverfat::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

void adam_step(std::span<Tensor* const> params, AdamState& state, float lr) {
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (Tensor* p : params) {
      state.m.emplace_back(p->size(), 0.0f);
      state.v.emplace_back(p->size(), 0.0f);
    }
  }
  ++state.step;
  const auto t = static_cast<double>(state.step);
  const auto bc1 = static_cast<float>(1.0 - std::pow(static_cast<double>(state.beta1), t));
  const auto bc2 = static_cast<float>(1.0 - std::pow(static_cast<double>(state.beta2), t));
  const auto& kt = simd::kernels();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    require(p.has_grad() && state.m[i].size() == p.size(), "adam state does not match parameters");
    kt.adam_update(p.data().data(), p.grad().data(), state.m[i].data(), state.v[i].data(), p.size(),
                   lr, state.beta1, state.beta2, state.eps, bc1, bc2);
  }
}

double mse_loss(std::span<const float> pred, std::span<const float> target) {
  require(pred.size() == target.size() && !pred.empty(), "mse_loss needs equal non-empty lists");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - target[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

void TrainConfig::validate() const {
  require(batch_size >= 1, "batch_size must be >= 1");
  require(total_iterations >= 1, "total_iterations must be >= 1");
  require(drop_window >= 0 && drop_window <= total_iterations, "drop window must fit in total_iterations");
  require(base_lr > 0.0f && lr_drop_factor > 0.0f, "learning rate and drop factor must be positive");
  require(translation_range >= 0, "translation_range must be >= 0");
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.total_iterations = 2000;
  c.base_lr = 1e-3f;
  c.translation_range = 2;
  return c;
}

float lr_schedule(int iteration, const TrainConfig& cfg) {
  if (iteration >= cfg.total_iterations - cfg.drop_window) return cfg.base_lr / cfg.lr_drop_factor;
  return cfg.base_lr;
}

SliceImage translate(const SliceImage& img, int dx, int dy) {
  SliceImage out = img;
  std::fill(out.data.begin(), out.data.end(), std::uint8_t{0});
  for (int r = 0; r < img.height; ++r) {
    const int sr = r - dy;
    if (sr < 0 || sr >= img.height) continue;
    for (int c = 0; c < img.width; ++c) {
      const int sc = c - dx;
      if (sc < 0 || sc >= img.width) continue;
      out.data[static_cast<std::size_t>(r) * img.width + c] = img.at(sr, sc);
    }
  }
  return out;
}

SliceImage augment_translate(const SliceImage& img, int range, std::mt19937_64& rng) {
  if (range == 0) return img;
  std::uniform_int_distribution<int> d(-range, range);
  const int dx = d(rng);
  const int dy = d(rng);
  return translate(img, dx, dy);
}

Tensor to_tensor(std::span<const SliceImage> images) {
  require(!images.empty(), "empty image batch");
  const int h = images[0].height, w = images[0].width;
  Tensor t({static_cast<int>(images.size()), 1, h, w});
  for (std::size_t b = 0; b < images.size(); ++b) {
    const auto& img = images[b];
    require(img.height == h && img.width == w, "images in a batch must share a size");
    float* dst = t.item(static_cast<int>(b));
    for (std::size_t i = 0; i < img.data.size(); ++i) {
      dst[i] = static_cast<float>(decode8(img.data[i], img.encoding));
    }
  }
  return t;
}

TrainResult train(std::span<const TrainingSample> dataset, const NetworkConfig& net_cfg,
                  const TrainConfig& cfg) {
  require(!dataset.empty(), "training set is empty");
  cfg.validate();
  for (const auto& s : dataset) {
    require(s.image.height == net_cfg.input.h && s.image.width == net_cfg.input.w && net_cfg.input.c == 1,
            "training image does not match the network input");
  }

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = dataset[a];
    const auto& y = dataset[b];
    if (x.target != y.target) return x.target < y.target;
    return x.image.data < y.image.data;
  });

  TrainResult result{Network(net_cfg, mix_seed(cfg.seed, 1)), {}};
  Network& net = result.network;
  auto params = net.params();
  AdamState adam;
  std::mt19937_64 rng(mix_seed(cfg.seed, 2));
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);

  std::vector<SliceImage> batch(static_cast<std::size_t>(cfg.batch_size));
  std::vector<float> targets(batch.size());
  result.log.reserve(static_cast<std::size_t>(cfg.total_iterations));
  for (int it = 0; it < cfg.total_iterations; ++it) {
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& s = dataset[order[pick(rng)]];
      batch[b] = augment_translate(s.image, cfg.translation_range, rng);
      targets[b] = s.target;
    }
    Tensor out = net.forward(to_tensor(batch));
    const double loss = mse_loss(out.data(), targets);
    Tensor grad(out.shape());
    const float scale = 2.0f / static_cast<float>(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) grad[b] = scale * (out[b] - targets[b]);
    net.zero_grad();
    net.backward(grad);
    const float lr = lr_schedule(it, cfg);
    adam_step(params, adam, lr);
    result.log.push_back({it, lr, loss});
  }
  return result;
}

float predict(Network& net, const SliceImage& img) {
  return net.forward(to_tensor(std::span(&img, 1)))[0];
}

std::vector<float> predict_batch(Network& net, std::span<const SliceImage> images) {
  if (images.empty()) return {};
  Tensor out = net.forward(to_tensor(images));
  return {out.data().begin(), out.data().end()};
}

void write_training_log(const std::filesystem::path& path, std::span<const LogEntry> log) {
  std::ostringstream os;
  os << "iteration,lr,loss\n";
  for (const auto& e : log) {
    os << e.iteration << ',' << fmt_double(e.lr) << ',' << fmt_double(e.loss) << '\n';
  }
  write_text(path, os.str());
}

CvPlan make_cv_plan(std::vector<std::string> ids, int k, std::uint64_t seed) {
  require(k >= 1, "k must be >= 1");
  require(ids.size() >= static_cast<std::size_t>(k), "fewer ids than folds");
  std::sort(ids.begin(), ids.end());
  require(std::adjacent_find(ids.begin(), ids.end()) == ids.end(), "duplicate subject ids");
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  CvPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.folds.resize(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < ids.size(); ++i) plan.folds[i % k].push_back(ids[i]);
  for (auto& f : plan.folds) std::sort(f.begin(), f.end());
  return plan;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + 4);
}

struct Reader {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (bytes.size() - pos < n) throw ValidationError("truncated checkpoint");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + pos, 4);
    pos += 4;
    return v;
  }
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Network& net) {
  const auto& cfg = net.config();
  std::vector<std::uint8_t> out{'F', 'F', 'N', '1'};
  put_u32(out, static_cast<std::uint32_t>(cfg.input.c));
  put_u32(out, static_cast<std::uint32_t>(cfg.input.h));
  put_u32(out, static_cast<std::uint32_t>(cfg.input.w));
  put_u32(out, static_cast<std::uint32_t>(cfg.layers.size()));
  for (const auto& l : cfg.layers) {
    put_u32(out, static_cast<std::uint32_t>(l.kind));
    put_u32(out, static_cast<std::uint32_t>(l.kernel));
    put_u32(out, static_cast<std::uint32_t>(l.stride));
    put_u32(out, static_cast<std::uint32_t>(l.out));
  }
  const auto params = net.params();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const Tensor* p : params) {
    put_u32(out, static_cast<std::uint32_t>(p->size()));
    const auto* b = reinterpret_cast<const std::uint8_t*>(p->data().data());
    out.insert(out.end(), b, b + p->size() * sizeof(float));
  }
  return out;
}

Network decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r{bytes};
  r.need(4);
  if (std::memcmp(bytes.data(), "FFN1", 4) != 0) throw ValidationError("not an FFN1 checkpoint");
  r.pos = 4;
  NetworkConfig cfg;
  cfg.input.c = static_cast<int>(r.u32());
  cfg.input.h = static_cast<int>(r.u32());
  cfg.input.w = static_cast<int>(r.u32());
  const std::uint32_t n_layers = r.u32();
  require(n_layers <= 1024, "implausible layer count in checkpoint");
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec s;
    const std::uint32_t kind = r.u32();
    require(kind >= 1 && kind <= 5, "unknown layer kind in checkpoint");
    s.kind = static_cast<LayerKind>(kind);
    s.kernel = static_cast<int>(r.u32());
    s.stride = static_cast<int>(r.u32());
    s.out = static_cast<int>(r.u32());
    cfg.layers.push_back(s);
  }
  Network net(cfg, 0);
  auto params = net.params();
  require(r.u32() == params.size(), "checkpoint parameter count mismatch");
  for (Tensor* p : params) {
    require(r.u32() == p->size(), "checkpoint parameter size mismatch");
    r.need(p->size() * sizeof(float));
    std::memcpy(p->data().data(), bytes.data() + r.pos, p->size() * sizeof(float));
    r.pos += p->size() * sizeof(float);
  }
  require(r.pos == bytes.size(), "trailing bytes after checkpoint");
  return net;
}

void save_checkpoint(const std::filesystem::path& path, const Network& net) {
  write_bytes(path, encode_checkpoint(net));
}

Network load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_bytes(path));
}

}  // namespace liverfat::nn
