#pragma once

#include <torch/torch.h>

#include <functional>

namespace scd {

// Convolutional block attention: a channel gate followed by a spatial gate.
//
// All tensors are batched, [B, C, H, W]. Gates:
//   channel  M_c = sigmoid(MLP(avgpool(x)) + MLP(maxpool(x)))      [B, C, 1, 1]
//   spatial  M_s = sigmoid(conv7x7([mean_c(x'); max_c(x')]))        [B, 1, H, W]
// where x' = x * M_c and the MLP is C -> C/r -> C with a ReLU between the two affine maps.

inline constexpr int64_t kSpatialKernel = 7;

struct CbamOptions {
  int64_t channels = 64;
  int64_t reduction = 16;
};

class ChannelAttentionImpl : public torch::nn::Module {
 public:
  ChannelAttentionImpl(int64_t channels, int64_t reduction);

  // Returns M_c with shape [B, C, 1, 1].
  torch::Tensor forward(const torch::Tensor& x);
  void reset_parameters();

  int64_t channels() const { return channels_; }

  torch::nn::Linear fc1{nullptr};
  torch::nn::Linear fc2{nullptr};

 private:
  int64_t channels_;
};
TORCH_MODULE(ChannelAttention);

class SpatialAttentionImpl : public torch::nn::Module {
 public:
  SpatialAttentionImpl();

  // Returns M_s with shape [B, 1, H, W]; zero padding keeps H x W.
  torch::Tensor forward(const torch::Tensor& x);
  void reset_parameters();

  torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(SpatialAttention);

struct CbamGates {
  torch::Tensor channel;  // [B, C, 1, 1]
  torch::Tensor spatial;  // [B, 1, H, W]
};

class CbamImpl : public torch::nn::Module {
 public:
  explicit CbamImpl(const CbamOptions& options);
  // Uses a spatial gate owned (and registered) elsewhere; lets decoder stages share it.
  CbamImpl(const CbamOptions& options, SpatialAttention shared_spatial);

  // Sequential gates computed from x: M_c on x, then M_s on x * M_c.
  // With gates disabled (ablation or test hook) both maps are all ones.
  CbamGates gates(const torch::Tensor& x);
  // x * M_c * M_s.
  torch::Tensor forward(const torch::Tensor& x);

  void set_enabled(bool enabled) { enabled_ = enabled; }
  bool enabled() const { return enabled_; }
  // Debug hook: receives every pair of gates this block produces.
  void set_observer(std::function<void(const CbamGates&)> observer) { observer_ = std::move(observer); }

  ChannelAttention channel{nullptr};
  SpatialAttention spatial{nullptr};

 private:
  bool enabled_ = true;
  std::function<void(const CbamGates&)> observer_;
};
TORCH_MODULE(Cbam);

torch::Tensor apply_channel(const torch::Tensor& x, const torch::Tensor& channel_gate);
torch::Tensor apply_spatial(const torch::Tensor& x, const torch::Tensor& spatial_gate);

// Bilinear resize of high to low's H x W (no-op when equal), align_corners = false.
torch::Tensor align_to(const torch::Tensor& high, const torch::Tensor& low);

// concat([resize(x_high); x_low * M_c * M_s]) along channels, gates taken from x_low.
torch::Tensor attention_fuse(const torch::Tensor& x_low, const torch::Tensor& x_high, Cbam& cbam);

}  // namespace scd
