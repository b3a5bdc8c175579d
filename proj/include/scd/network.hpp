#pragma once

#include <torch/torch.h>

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "scd/cbam.hpp"
#include "scd/datamodel.hpp"

namespace scd {

struct EncoderConfig {
  // Stem width followed by the four residual stage widths.
  std::vector<int64_t> stage_channels{64, 64, 128, 256, 512};
  // Cumulative output stride of the stem conv and each residual stage.
  std::vector<int64_t> stage_strides{2, 4, 8, 16, 32};
  // Residual blocks per stage; 3,4,6,3 is the 34-layer configuration.
  std::vector<int64_t> block_counts{3, 4, 6, 3};
  // Optional named-tensor container with encoder weights (empty = random init).
  std::string pretrained_path;
};

struct CbamConfig {
  bool enabled = true;
  int64_t reduction = 16;
  // Share the channel-agnostic 7x7 spatial gate across decoder stages.
  bool share_spatial = false;
};

struct InteractionConfig {
  bool enabled = true;
  int64_t heads = 4;
  // Average-pooling factor applied to the stride-32 maps before tokenisation.
  int64_t token_stride = 1;
};

struct DecoderConfig {
  // Output widths of the three fusion stages (against strides 16, 8, 4).
  std::vector<int64_t> channels{256, 128, 64};
};

struct ModelConfig {
  int64_t num_classes = 6;
  EncoderConfig encoder;
  CbamConfig cbam;
  InteractionConfig interaction;
  DecoderConfig decoder;
  bool share_semantic_decoders = true;
  // Per-channel input standardisation applied inside the model: (x - mean) / std.
  std::array<double, 3> input_mean{0.0, 0.0, 0.0};
  std::array<double, 3> input_std{1.0, 1.0, 1.0};
  uint64_t seed = 0;
};

void validate(const ModelConfig& config);

// Features at strides 4, 8, 16, 32.
struct MultiScaleFeatures {
  std::array<torch::Tensor, 4> f;
};

struct SemanticChangeOutputs {
  torch::Tensor y1;  // [B, K, H, W], per-pixel simplex
  torch::Tensor y2;  // [B, K, H, W]
  torch::Tensor yc;  // [B, H, W] in [0, 1]
};

// ResNet basic block; member names follow the torchvision layout so converted weights load by name.
class BasicBlockImpl : public torch::nn::Module {
 public:
  BasicBlockImpl(int64_t in_channels, int64_t out_channels, int64_t stride);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
  torch::nn::Sequential downsample{nullptr};
};
TORCH_MODULE(BasicBlock);

class ResNetEncoderImpl : public torch::nn::Module {
 public:
  explicit ResNetEncoderImpl(const EncoderConfig& config);
  MultiScaleFeatures forward(const torch::Tensor& image);
  std::array<int64_t, 4> feature_channels() const;

  torch::nn::Conv2d conv1{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr};
  std::array<torch::nn::Sequential, 4> layers{nullptr, nullptr, nullptr, nullptr};

 private:
  EncoderConfig config_;
};
TORCH_MODULE(ResNetEncoder);

// concat(f1, f2, |f1 - f2|) along channels: the change stream's per-stage input.
torch::Tensor change_stage_input(const torch::Tensor& f1, const torch::Tensor& f2);

class ChangeEncoderImpl : public torch::nn::Module {
 public:
  explicit ChangeEncoderImpl(const std::array<int64_t, 4>& channels);
  MultiScaleFeatures forward(const MultiScaleFeatures& t1, const MultiScaleFeatures& t2);

  std::array<torch::nn::Sequential, 4> stages{nullptr, nullptr, nullptr, nullptr};
};
TORCH_MODULE(ChangeEncoder);

// Pre-norm residual multi-head self-attention over the joint token sequence of the three streams.
class CrossTemporalAttentionImpl : public torch::nn::Module {
 public:
  CrossTemporalAttentionImpl(int64_t channels, const InteractionConfig& config);

  // tokens: [B, L, C] -> (attended tokens [B, L, C], attention weights [B, heads, L, L]).
  std::pair<torch::Tensor, torch::Tensor> attend(const torch::Tensor& tokens);
  // The residual branch alone: (proj(attention(norm(tokens))), weights).
  std::pair<torch::Tensor, torch::Tensor> residual(const torch::Tensor& tokens);
  std::array<torch::Tensor, 3> forward(const torch::Tensor& t1, const torch::Tensor& t2, const torch::Tensor& tc);

  torch::nn::LayerNorm norm{nullptr};
  torch::nn::Linear qkv{nullptr}, proj{nullptr};

 private:
  int64_t channels_;
  InteractionConfig config_;
};
TORCH_MODULE(CrossTemporalAttention);

class DecoderImpl : public torch::nn::Module {
 public:
  DecoderImpl(const std::array<int64_t, 4>& feature_channels, const DecoderConfig& config, const CbamConfig& cbam,
              int64_t out_channels);

  // Logits at output_hw: three attention fusions (strides 16, 8, 4), x4 bilinear upsample, 1x1 head.
  torch::Tensor forward(const MultiScaleFeatures& features, std::array<int64_t, 2> output_hw);

  // Channel count entering the conv block of fusion stage s (0 = stride 16).
  int64_t fused_channels(int stage) const { return fused_channels_[static_cast<size_t>(stage)]; }
  void set_cbam_enabled(bool enabled);
  void set_cbam_observer(const std::function<void(const CbamGates&)>& observer);

  std::array<Cbam, 3> cbams{nullptr, nullptr, nullptr};
  std::array<torch::nn::Sequential, 3> blocks{nullptr, nullptr, nullptr};
  SpatialAttention shared_spatial{nullptr};
  torch::nn::Conv2d head{nullptr};

 private:
  std::array<int64_t, 3> fused_channels_{};
};
TORCH_MODULE(Decoder);

class ScdNetImpl : public torch::nn::Module {
 public:
  explicit ScdNetImpl(const ModelConfig& config);

  SemanticChangeOutputs forward(const torch::Tensor& t1, const torch::Tensor& t2);
  // Single unbatched pair, t1/t2 [3, H, W]; outputs keep a batch dimension of 1.
  SemanticChangeOutputs forward(const ImagePair& pair);

  MultiScaleFeatures encode(const torch::Tensor& image);
  torch::Tensor decode_semantic(const MultiScaleFeatures& features, std::array<int64_t, 2> hw, int date);
  torch::Tensor decode_change(const MultiScaleFeatures& features, std::array<int64_t, 2> hw);

  const ModelConfig& config() const { return config_; }
  // Test hook and ablation switch: gates forced to ones in every decoder.
  void set_cbam_enabled(bool enabled);
  void set_cbam_observer(const std::function<void(const CbamGates&)>& observer);
  // Unique trainable parameters (shared modules counted once).
  std::vector<torch::Tensor> trainable_parameters() const;

  ResNetEncoder encoder{nullptr};
  ChangeEncoder change_encoder{nullptr};
  CrossTemporalAttention interaction{nullptr};
  Decoder semantic_decoder{nullptr};
  Decoder semantic_decoder2{nullptr};  // null when the two dates share a decoder
  Decoder change_decoder{nullptr};

 private:
  torch::Tensor normalize(const torch::Tensor& image) const;

  ModelConfig config_;
};
TORCH_MODULE(ScdNet);

// Per pixel: both labels 0 where yc < threshold, else 1 + argmax_k y_i (ties to the lower class).
// Returns int64 [B, H, W] maps for the two dates.
std::pair<torch::Tensor, torch::Tensor> predict_scd(const SemanticChangeOutputs& out, double threshold);

// Loads a named-tensor container (see checkpoint.hpp) into the encoder; names follow torchvision's resnet34.
void load_pretrained_encoder(ResNetEncoder& encoder, const std::string& path);

}  // namespace scd
