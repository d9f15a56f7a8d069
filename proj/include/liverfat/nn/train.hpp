#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "liverfat/nn/network.hpp"
#include "liverfat/preprocess.hpp"

namespace liverfat::nn {

struct AdamState {
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  std::int64_t step = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
};

/// One bias-corrected Adam step over params using their grad buffers.
/// Moment buffers are created on first use.
void adam_step(std::span<Tensor* const> params, AdamState& state, float lr);

double mse_loss(std::span<const float> pred, std::span<const float> target);

struct TrainConfig {
  int batch_size = 32;
  int total_iterations = 6000;
  float base_lr = 1e-4f;
  float lr_drop_factor = 10.0f;
  int drop_window = 1000;
  int translation_range = 5;
  std::uint64_t seed = 0;

  void validate() const;
  static TrainConfig desk();
};

float lr_schedule(int iteration, const TrainConfig& cfg);

/// Integer shift by (dx columns, dy rows); vacated pixels become 0.
SliceImage translate(const SliceImage& img, int dx, int dy);
/// Shift drawn uniformly from [-range, range] per axis.
SliceImage augment_translate(const SliceImage& img, int range, std::mt19937_64& rng);

/// u8 image -> fractions in a {1, 1, H, W} tensor.
Tensor to_tensor(std::span<const SliceImage> images);

struct TrainingSample {
  SliceImage image;
  float target = 0.0f;
};

struct LogEntry {
  int iteration = 0;
  float lr = 0.0f;
  double loss = 0.0;
};

struct TrainResult {
  Network network;
  std::vector<LogEntry> log;
};

/// Samples are put in a canonical content order first, so the result depends
/// only on the multiset of samples and the seed.
TrainResult train(std::span<const TrainingSample> dataset, const NetworkConfig& net_cfg,
                  const TrainConfig& cfg);

float predict(Network& net, const SliceImage& img);
std::vector<float> predict_batch(Network& net, std::span<const SliceImage> images);

void write_training_log(const std::filesystem::path& path, std::span<const LogEntry> log);

struct CvPlan {
  int k = 10;
  std::uint64_t seed = 0;
  std::vector<std::vector<std::string>> folds;
};

CvPlan make_cv_plan(std::vector<std::string> ids, int k, std::uint64_t seed);

/// FFN1 checkpoint.
std::vector<std::uint8_t> encode_checkpoint(const Network& net);
Network decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Network& net);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace liverfat::nn
