#include "scd/cbam.hpp"

#include <cmath>

#include "scd/errors.hpp"

namespace F = torch::nn::functional;

namespace scd {
namespace {

void fan_in_uniform(torch::Tensor& weight, torch::Tensor& bias, int64_t fan_in) {
  torch::NoGradGuard no_grad;
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  weight.uniform_(-bound, bound);
  if (bias.defined()) bias.zero_();
}

void check_4d(const torch::Tensor& x, const char* what) {
  require(x.dim() == 4, ErrorKind::ShapeMismatch, std::string(what) + " must be [B,C,H,W]");
  require(x.size(1) >= 1 && x.size(2) >= 1 && x.size(3) >= 1, ErrorKind::ShapeMismatch,
          std::string(what) + " has an empty dimension");
}

}  // namespace

ChannelAttentionImpl::ChannelAttentionImpl(int64_t channels, int64_t reduction) : channels_(channels) {
  require(channels >= 1 && reduction >= 1 && channels % reduction == 0, ErrorKind::InvalidConfig,
          "CBAM reduction ratio " + std::to_string(reduction) + " must divide channel count " +
              std::to_string(channels));
  const int64_t hidden = channels / reduction;
  fc1 = register_module("fc1", torch::nn::Linear(channels, hidden));
  fc2 = register_module("fc2", torch::nn::Linear(hidden, channels));
  reset_parameters();
}

void ChannelAttentionImpl::reset_parameters() {
  fan_in_uniform(fc1->weight, fc1->bias, fc1->weight.size(1));
  fan_in_uniform(fc2->weight, fc2->bias, fc2->weight.size(1));
}

torch::Tensor ChannelAttentionImpl::forward(const torch::Tensor& x) {
  check_4d(x, "channel attention input");
  require(x.size(1) == channels_, ErrorKind::ShapeMismatch,
          "channel attention expects " + std::to_string(channels_) + " channels, got " + std::to_string(x.size(1)));
  const auto avg = x.mean({2, 3});
  const auto max = x.amax({2, 3});
  auto mlp = [this](const torch::Tensor& v) { return fc2->forward(torch::relu(fc1->forward(v))); };
  return torch::sigmoid(mlp(avg) + mlp(max)).unsqueeze(-1).unsqueeze(-1);
}

SpatialAttentionImpl::SpatialAttentionImpl() {
  conv = register_module(
      "conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(2, 1, kSpatialKernel).padding(kSpatialKernel / 2).bias(true)));
  reset_parameters();
}

void SpatialAttentionImpl::reset_parameters() {
  fan_in_uniform(conv->weight, conv->bias, 2 * kSpatialKernel * kSpatialKernel);
}

torch::Tensor SpatialAttentionImpl::forward(const torch::Tensor& x) {
  check_4d(x, "spatial attention input");
  const auto pooled = torch::cat({x.mean(1, /*keepdim=*/true), x.amax(1, /*keepdim=*/true)}, 1);
  return torch::sigmoid(conv->forward(pooled));
}

CbamImpl::CbamImpl(const CbamOptions& options) {
  channel = register_module("channel", ChannelAttention(options.channels, options.reduction));
  spatial = register_module("spatial", SpatialAttention());
}

CbamImpl::CbamImpl(const CbamOptions& options, SpatialAttention shared_spatial) {
  channel = register_module("channel", ChannelAttention(options.channels, options.reduction));
  spatial = std::move(shared_spatial);
}

CbamGates CbamImpl::gates(const torch::Tensor& x) {
  check_4d(x, "CBAM input");
  CbamGates g;
  if (!enabled_) {
    g.channel = torch::ones({x.size(0), x.size(1), 1, 1}, x.options());
    g.spatial = torch::ones({x.size(0), 1, x.size(2), x.size(3)}, x.options());
  } else {
    g.channel = channel->forward(x);
    g.spatial = spatial->forward(apply_channel(x, g.channel));
  }
  if (observer_) observer_(g);
  return g;
}

torch::Tensor CbamImpl::forward(const torch::Tensor& x) {
  const auto g = gates(x);
  return apply_spatial(apply_channel(x, g.channel), g.spatial);
}

torch::Tensor apply_channel(const torch::Tensor& x, const torch::Tensor& channel_gate) {
  check_4d(x, "feature map");
  require(channel_gate.dim() == 4 && channel_gate.size(0) == x.size(0) && channel_gate.size(1) == x.size(1) &&
              channel_gate.size(2) == 1 && channel_gate.size(3) == 1,
          ErrorKind::ShapeMismatch, "channel gate must be [B,C,1,1] matching the feature map");
  return x * channel_gate;
}

torch::Tensor apply_spatial(const torch::Tensor& x, const torch::Tensor& spatial_gate) {
  check_4d(x, "feature map");
  require(spatial_gate.dim() == 4 && spatial_gate.size(0) == x.size(0) && spatial_gate.size(1) == 1 &&
              spatial_gate.size(2) == x.size(2) && spatial_gate.size(3) == x.size(3),
          ErrorKind::ShapeMismatch, "spatial gate must be [B,1,H,W] matching the feature map");
  return x * spatial_gate;
}

torch::Tensor align_to(const torch::Tensor& high, const torch::Tensor& low) {
  if (high.size(2) == low.size(2) && high.size(3) == low.size(3)) return high;
  return F::interpolate(high, F::InterpolateFuncOptions()
                                  .size(std::vector<int64_t>{low.size(2), low.size(3)})
                                  .mode(torch::kBilinear)
                                  .align_corners(false));
}

torch::Tensor attention_fuse(const torch::Tensor& x_low, const torch::Tensor& x_high, Cbam& cbam) {
  check_4d(x_low, "x_low");
  check_4d(x_high, "x_high");
  require(x_low.size(0) == x_high.size(0), ErrorKind::ShapeMismatch, "x_low and x_high batch sizes differ");
  const auto low_att = cbam->forward(x_low);
  return torch::cat({align_to(x_high, x_low), low_att}, 1);
}

}  // namespace scd
