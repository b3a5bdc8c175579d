#include "scd/network.hpp"

#include <cmath>
#include <set>

#include "scd/checkpoint.hpp"
#include "scd/errors.hpp"

namespace F = torch::nn::functional;
namespace nn = torch::nn;

namespace scd {
namespace {

nn::Conv2d conv3x3(int64_t in, int64_t out, int64_t stride = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false));
}

void kaiming_init(nn::Module& module) {
  torch::NoGradGuard no_grad;
  for (auto& m : module.modules(/*include_self=*/false)) {
    if (auto* conv = m->as<nn::Conv2d>()) {
      nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanOut, torch::kReLU);
      if (conv->bias.defined()) conv->bias.zero_();
    } else if (auto* bn = m->as<nn::BatchNorm2d>()) {
      bn->weight.fill_(1.0);
      bn->bias.zero_();
    }
  }
}

nn::Sequential conv_bn_relu(int64_t in, int64_t out) {
  return nn::Sequential(conv3x3(in, out), nn::BatchNorm2d(out), nn::ReLU(nn::ReLUOptions(true)));
}

void check_image_batch(const torch::Tensor& x) {
  require(x.dim() == 4 && x.size(1) == 3, ErrorKind::ShapeMismatch, "expected an image batch [B,3,H,W]");
  require(x.size(2) >= 32 && x.size(3) >= 32 && x.size(2) % 32 == 0 && x.size(3) % 32 == 0, ErrorKind::ShapeMismatch,
          "image H and W must be >= 32 and divisible by 32, got " + std::to_string(x.size(2)) + "x" +
              std::to_string(x.size(3)));
}

}  // namespace

void validate(const ModelConfig& c) {
  require(c.num_classes >= 2, ErrorKind::InvalidConfig, "model.num_classes must be >= 2");
  require(c.encoder.stage_channels.size() == 5, ErrorKind::InvalidConfig,
          "model.encoder.stage_channels needs 5 entries (stem + 4 stages)");
  require(c.encoder.stage_strides == std::vector<int64_t>({2, 4, 8, 16, 32}), ErrorKind::InvalidConfig,
          "model.encoder.stage_strides must be [2,4,8,16,32] (final stride 32)");
  require(c.encoder.block_counts.size() == 4, ErrorKind::InvalidConfig, "model.encoder.block_counts needs 4 entries");
  for (auto b : c.encoder.block_counts) require(b >= 1, ErrorKind::InvalidConfig, "block counts must be >= 1");
  for (auto ch : c.encoder.stage_channels) require(ch >= 1, ErrorKind::InvalidConfig, "stage channels must be >= 1");
  require(c.decoder.channels.size() == 3, ErrorKind::InvalidConfig, "model.decoder.channels needs 3 entries");
  require(c.cbam.reduction >= 1, ErrorKind::InvalidConfig, "model.cbam.reduction must be >= 1");
  for (size_t s = 1; s < 4; ++s) {
    require(c.encoder.stage_channels[s] % c.cbam.reduction == 0, ErrorKind::InvalidConfig,
            "model.cbam.reduction must divide the skip channel count " + std::to_string(c.encoder.stage_channels[s]));
  }
  if (c.interaction.enabled) {
    require(c.interaction.heads >= 1 && c.encoder.stage_channels[4] % c.interaction.heads == 0,
            ErrorKind::InvalidConfig, "model.interaction.heads must divide the stride-32 channel count");
    require(c.interaction.token_stride >= 1, ErrorKind::InvalidConfig, "model.interaction.token_stride must be >= 1");
  }
  for (double s : c.input_std) require(s > 0.0, ErrorKind::InvalidConfig, "model.input_std entries must be > 0");
}

// ---------------------------------------------------------------------------
// Encoder

BasicBlockImpl::BasicBlockImpl(int64_t in_channels, int64_t out_channels, int64_t stride) {
  conv1 = register_module("conv1", conv3x3(in_channels, out_channels, stride));
  bn1 = register_module("bn1", nn::BatchNorm2d(out_channels));
  conv2 = register_module("conv2", conv3x3(out_channels, out_channels));
  bn2 = register_module("bn2", nn::BatchNorm2d(out_channels));
  if (stride != 1 || in_channels != out_channels) {
    downsample = register_module(
        "downsample",
        nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 1).stride(stride).bias(false)),
                       nn::BatchNorm2d(out_channels)));
  }
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
  auto out = torch::relu(bn1->forward(conv1->forward(x)));
  out = bn2->forward(conv2->forward(out));
  const auto identity = downsample ? downsample->forward(x) : x;
  return torch::relu(out + identity);
}

ResNetEncoderImpl::ResNetEncoderImpl(const EncoderConfig& config) : config_(config) {
  const auto& ch = config.stage_channels;
  conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(3, ch[0], 7).stride(2).padding(3).bias(false)));
  bn1 = register_module("bn1", nn::BatchNorm2d(ch[0]));
  int64_t in = ch[0];
  for (size_t s = 0; s < 4; ++s) {
    nn::Sequential layer;
    const int64_t out = ch[s + 1];
    for (int64_t b = 0; b < config.block_counts[s]; ++b) {
      const int64_t stride = (b == 0 && s > 0) ? 2 : 1;
      layer->push_back(BasicBlock(b == 0 ? in : out, out, stride));
    }
    in = out;
    layers[s] = register_module("layer" + std::to_string(s + 1), layer);
  }
  kaiming_init(*this);
}

MultiScaleFeatures ResNetEncoderImpl::forward(const torch::Tensor& image) {
  check_image_batch(image);
  auto x = torch::relu(bn1->forward(conv1->forward(image)));
  x = F::max_pool2d(x, F::MaxPool2dFuncOptions(3).stride(2).padding(1));
  MultiScaleFeatures out;
  for (size_t s = 0; s < 4; ++s) {
    x = layers[s]->forward(x);
    out.f[s] = x;
  }
  return out;
}

std::array<int64_t, 4> ResNetEncoderImpl::feature_channels() const {
  const auto& ch = config_.stage_channels;
  return {ch[1], ch[2], ch[3], ch[4]};
}

// ---------------------------------------------------------------------------
// Change encoder

torch::Tensor change_stage_input(const torch::Tensor& f1, const torch::Tensor& f2) {
  require(f1.sizes() == f2.sizes(), ErrorKind::ShapeMismatch, "change encoder inputs differ in shape");
  return torch::cat({f1, f2, (f1 - f2).abs()}, 1);
}

ChangeEncoderImpl::ChangeEncoderImpl(const std::array<int64_t, 4>& channels) {
  for (size_t s = 0; s < 4; ++s) {
    const int64_t c = channels[s];
    stages[s] = register_module("stage" + std::to_string(s + 1),
                                nn::Sequential(conv3x3(3 * c, c), nn::BatchNorm2d(c), nn::ReLU(nn::ReLUOptions(true)),
                                               conv3x3(c, c), nn::BatchNorm2d(c), nn::ReLU(nn::ReLUOptions(true))));
  }
  kaiming_init(*this);
}

MultiScaleFeatures ChangeEncoderImpl::forward(const MultiScaleFeatures& t1, const MultiScaleFeatures& t2) {
  MultiScaleFeatures out;
  for (size_t s = 0; s < 4; ++s) out.f[s] = stages[s]->forward(change_stage_input(t1.f[s], t2.f[s]));
  return out;
}

// ---------------------------------------------------------------------------
// Cross-temporal interaction

CrossTemporalAttentionImpl::CrossTemporalAttentionImpl(int64_t channels, const InteractionConfig& config)
    : channels_(channels), config_(config) {
  require(config.heads >= 1 && channels % config.heads == 0, ErrorKind::InvalidConfig,
          "attention heads must divide the token width");
  norm = register_module("norm", nn::LayerNorm(nn::LayerNormOptions({channels})));
  qkv = register_module("qkv", nn::Linear(channels, 3 * channels));
  proj = register_module("proj", nn::Linear(channels, channels));
}

std::pair<torch::Tensor, torch::Tensor> CrossTemporalAttentionImpl::attend(const torch::Tensor& tokens) {
  auto [delta, weights] = residual(tokens);
  return {tokens + delta, weights};
}

std::pair<torch::Tensor, torch::Tensor> CrossTemporalAttentionImpl::residual(const torch::Tensor& tokens) {
  require(tokens.dim() == 3 && tokens.size(2) == channels_, ErrorKind::ShapeMismatch,
          "tokens must be [B, L, " + std::to_string(channels_) + "]");
  const int64_t b = tokens.size(0), l = tokens.size(1), h = config_.heads, d = channels_ / h;
  auto qkv_out = qkv->forward(norm->forward(tokens)).view({b, l, 3, h, d}).permute({2, 0, 3, 1, 4});
  const auto q = qkv_out[0], k = qkv_out[1], v = qkv_out[2];  // [B, h, L, d]
  auto weights = torch::softmax(torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(d)), -1);
  auto mixed = torch::matmul(weights, v).transpose(1, 2).reshape({b, l, channels_});
  return {proj->forward(mixed), weights};
}

std::array<torch::Tensor, 3> CrossTemporalAttentionImpl::forward(const torch::Tensor& t1, const torch::Tensor& t2,
                                                                 const torch::Tensor& tc) {
  require(t1.sizes() == t2.sizes() && t1.sizes() == tc.sizes(), ErrorKind::ShapeMismatch,
          "interaction streams differ in shape");
  require(t1.dim() == 4 && t1.size(1) == channels_, ErrorKind::ShapeMismatch, "interaction expects [B,C,h,w] maps");
  const int64_t stride = config_.token_stride;
  auto pool = [stride](const torch::Tensor& t) {
    return stride > 1 ? F::avg_pool2d(t, F::AvgPool2dFuncOptions(stride).stride(stride).ceil_mode(true)) : t;
  };
  const std::array<torch::Tensor, 3> pooled{pool(t1), pool(t2), pool(tc)};
  const int64_t b = t1.size(0), ph = pooled[0].size(2), pw = pooled[0].size(3), n = ph * pw;
  std::vector<torch::Tensor> seq;
  for (const auto& p : pooled) seq.push_back(p.flatten(2).transpose(1, 2));
  const auto tokens = torch::cat(seq, 1);
  const auto delta = residual(tokens).first;

  std::array<torch::Tensor, 3> out;
  const std::array<const torch::Tensor*, 3> inputs{&t1, &t2, &tc};
  for (int64_t i = 0; i < 3; ++i) {
    auto d = delta.narrow(1, i * n, n).transpose(1, 2).reshape({b, channels_, ph, pw});
    if (stride > 1) d = align_to(d, *inputs[static_cast<size_t>(i)]);
    out[static_cast<size_t>(i)] = *inputs[static_cast<size_t>(i)] + d;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Decoder

DecoderImpl::DecoderImpl(const std::array<int64_t, 4>& fc, const DecoderConfig& config, const CbamConfig& cbam,
                         int64_t out_channels) {
  if (cbam.share_spatial) shared_spatial = register_module("shared_spatial", SpatialAttention());
  int64_t high = fc[3];
  for (size_t s = 0; s < 3; ++s) {
    const int64_t low = fc[2 - s];
    const CbamOptions opts{low, cbam.reduction};
    cbams[s] = register_module("cbam" + std::to_string(s + 1),
                               cbam.share_spatial ? Cbam(opts, shared_spatial) : Cbam(opts));
    cbams[s]->set_enabled(cbam.enabled);
    fused_channels_[s] = high + low;
    blocks[s] = register_module("block" + std::to_string(s + 1), conv_bn_relu(high + low, config.channels[s]));
    high = config.channels[s];
  }
  head = register_module("head", nn::Conv2d(nn::Conv2dOptions(high, out_channels, 1)));
  for (auto& b : blocks) kaiming_init(*b);
}

torch::Tensor DecoderImpl::forward(const MultiScaleFeatures& features, std::array<int64_t, 2> output_hw) {
  auto x = features.f[3];
  for (size_t s = 0; s < 3; ++s) x = blocks[s]->forward(attention_fuse(features.f[2 - s], x, cbams[s]));
  x = F::interpolate(x, F::InterpolateFuncOptions()
                            .size(std::vector<int64_t>{output_hw[0], output_hw[1]})
                            .mode(torch::kBilinear)
                            .align_corners(false));
  return head->forward(x);
}

void DecoderImpl::set_cbam_enabled(bool enabled) {
  for (auto& c : cbams) c->set_enabled(enabled);
}

void DecoderImpl::set_cbam_observer(const std::function<void(const CbamGates&)>& observer) {
  for (auto& c : cbams) c->set_observer(observer);
}

// ---------------------------------------------------------------------------
// Full model

ScdNetImpl::ScdNetImpl(const ModelConfig& config) : config_(config) {
  validate(config);
  torch::manual_seed(config.seed);
  encoder = register_module("encoder", ResNetEncoder(config.encoder));
  const auto fc = encoder->feature_channels();
  change_encoder = register_module("change_encoder", ChangeEncoder(fc));
  if (config.interaction.enabled) {
    interaction = register_module("interaction", CrossTemporalAttention(fc[3], config.interaction));
  }
  semantic_decoder = register_module("semantic_decoder", Decoder(fc, config.decoder, config.cbam, config.num_classes));
  if (!config.share_semantic_decoders) {
    semantic_decoder2 =
        register_module("semantic_decoder2", Decoder(fc, config.decoder, config.cbam, config.num_classes));
  }
  change_decoder = register_module("change_decoder", Decoder(fc, config.decoder, config.cbam, 1));
  if (!config.encoder.pretrained_path.empty()) load_pretrained_encoder(encoder, config.encoder.pretrained_path);
}

torch::Tensor ScdNetImpl::normalize(const torch::Tensor& image) const {
  const auto& m = config_.input_mean;
  const auto& s = config_.input_std;
  if (m == std::array<double, 3>{0, 0, 0} && s == std::array<double, 3>{1, 1, 1}) return image;
  auto mean = torch::tensor({m[0], m[1], m[2]}, image.options()).view({1, 3, 1, 1});
  auto std = torch::tensor({s[0], s[1], s[2]}, image.options()).view({1, 3, 1, 1});
  return (image - mean) / std;
}

MultiScaleFeatures ScdNetImpl::encode(const torch::Tensor& image) { return encoder->forward(normalize(image)); }

torch::Tensor ScdNetImpl::decode_semantic(const MultiScaleFeatures& features, std::array<int64_t, 2> hw, int date) {
  auto& decoder = (date == 2 && semantic_decoder2) ? semantic_decoder2 : semantic_decoder;
  return torch::softmax(decoder->forward(features, hw), 1);
}

torch::Tensor ScdNetImpl::decode_change(const MultiScaleFeatures& features, std::array<int64_t, 2> hw) {
  return torch::sigmoid(change_decoder->forward(features, hw)).squeeze(1);
}

SemanticChangeOutputs ScdNetImpl::forward(const torch::Tensor& t1, const torch::Tensor& t2) {
  check_image_batch(t1);
  require(t1.sizes() == t2.sizes(), ErrorKind::ShapeMismatch, "t1 and t2 differ in shape");
  const std::array<int64_t, 2> hw{t1.size(2), t1.size(3)};
  auto f1 = encode(t1);
  auto f2 = encode(t2);
  auto fc = change_encoder->forward(f1, f2);
  if (interaction) {
    auto mixed = interaction->forward(f1.f[3], f2.f[3], fc.f[3]);
    f1.f[3] = mixed[0];
    f2.f[3] = mixed[1];
    fc.f[3] = mixed[2];
  }
  SemanticChangeOutputs out;
  out.y1 = decode_semantic(f1, hw, 1);
  out.y2 = decode_semantic(f2, hw, 2);
  out.yc = decode_change(fc, hw);
  return out;
}

SemanticChangeOutputs ScdNetImpl::forward(const ImagePair& pair) {
  require(pair.t1.dim() == 3, ErrorKind::ShapeMismatch, "ImagePair tensors must be [3,H,W]");
  return forward(pair.t1.unsqueeze(0), pair.t2.unsqueeze(0));
}

void ScdNetImpl::set_cbam_enabled(bool enabled) {
  for (auto* d : {&semantic_decoder, &semantic_decoder2, &change_decoder}) {
    if (*d) (*d)->set_cbam_enabled(enabled);
  }
}

void ScdNetImpl::set_cbam_observer(const std::function<void(const CbamGates&)>& observer) {
  for (auto* d : {&semantic_decoder, &semantic_decoder2, &change_decoder}) {
    if (*d) (*d)->set_cbam_observer(observer);
  }
}

std::vector<torch::Tensor> ScdNetImpl::trainable_parameters() const {
  std::vector<torch::Tensor> params;
  std::set<const void*> seen;
  for (const auto& p : parameters(/*recurse=*/true)) {
    if (p.requires_grad() && seen.insert(p.unsafeGetTensorImpl()).second) params.push_back(p);
  }
  return params;
}

std::pair<torch::Tensor, torch::Tensor> predict_scd(const SemanticChangeOutputs& out, double threshold) {
  require(threshold > 0.0 && threshold < 1.0, ErrorKind::OutOfRange, "threshold must lie in (0,1)");
  const auto changed = out.yc.ge(threshold);
  auto label = [&](const torch::Tensor& y) {
    return torch::where(changed, y.argmax(1) + 1, torch::zeros_like(changed, torch::kInt64));
  };
  return {label(out.y1), label(out.y2)};
}

void load_pretrained_encoder(ResNetEncoder& encoder, const std::string& path) {
  const auto table = read_tensor_table(path);
  torch::NoGradGuard no_grad;
  auto assign = [&](const std::string& name, torch::Tensor& target) {
    auto it = table.find(name);
    if (it == table.end()) it = table.find("encoder." + name);
    require(it != table.end(), ErrorKind::ConfigMismatch, path + ": missing encoder tensor '" + name + "'");
    require(it->second.sizes() == target.sizes(), ErrorKind::ConfigMismatch,
            path + ": shape mismatch for '" + name + "'");
    target.copy_(it->second);
  };
  for (auto& p : encoder->named_parameters(true)) assign(p.key(), p.value());
  for (auto& b : encoder->named_buffers(true)) {
    if (b.key().find("num_batches_tracked") != std::string::npos) continue;
    assign(b.key(), b.value());
  }
}

}  // namespace scd
