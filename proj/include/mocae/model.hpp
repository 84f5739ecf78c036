#pragma once
// The dual-output autoencoder/classifier: a residual encoder produces one
// latent descriptor per slice which feeds both the mirrored decoder and the
// tumour-presence classifier.

#include <string>
#include <utility>
#include <vector>

#include "mocae/adam.hpp"
#include "mocae/configs.hpp"
#include "mocae/nn.hpp"

namespace mocae {

template <class S>
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  ModelConfig config;
  TrainConfig train_config;
  nn::ParamMap<S> params;
  AdamState<S> opt;
  std::vector<HistoryRow> history;
};

template <class S>
class Model {
public:
  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    auto [bh, bw] = cfg_.bottleneck_hw();
    bottleneck_h_ = bh;
    bottleneck_w_ = bw;
    const std::size_t flat =
        static_cast<std::size_t>(cfg_.widths.back()) * bh * bw;

    // Encoder: each stage opens with a stride-2 block that changes width.
    std::size_t in_ch = static_cast<std::size_t>(cfg_.input_channels);
    for (int s = 0; s < cfg_.stages(); ++s) {
      const std::size_t w = static_cast<std::size_t>(cfg_.widths[s]);
      for (int b = 0; b < cfg_.blocks_per_stage; ++b) {
        nn::PreactResidualBlock<S> blk;
        blk.name = "enc.s" + std::to_string(s) + ".b" + std::to_string(b);
        blk.in_ch = (b == 0) ? in_ch : w;
        blk.out_ch = w;
        blk.stride = (b == 0) ? 2 : 1;
        blk.dropout_rate = cfg_.dropout;
        blk.configure();
        encoder_.push_back(std::move(blk));
      }
      in_ch = w;
    }
    enc_head_bn_ = {"enc.head_bn", in_ch};
    enc_fc_ = {"enc.fc", flat, static_cast<std::size_t>(cfg_.latent_dim)};

    // Decoder mirrors the encoder: upsample then residual blocks per stage.
    dec_fc_ = {"dec.fc", static_cast<std::size_t>(cfg_.latent_dim), flat};
    in_ch = static_cast<std::size_t>(cfg_.widths.back());
    for (int s = 0; s < cfg_.stages(); ++s) {
      const int widx = cfg_.stages() - 2 - s;
      const std::size_t w =
          static_cast<std::size_t>(cfg_.widths[widx >= 0 ? widx : 0]);
      for (int b = 0; b < cfg_.blocks_per_stage; ++b) {
        nn::PreactResidualBlock<S> blk;
        blk.name = "dec.s" + std::to_string(s) + ".b" + std::to_string(b);
        blk.in_ch = (b == 0) ? in_ch : w;
        blk.out_ch = w;
        blk.stride = 1;
        blk.dropout_rate = cfg_.dropout;
        blk.configure();
        decoder_.push_back(std::move(blk));
      }
      in_ch = w;
    }
    dec_head_bn_ = {"dec.head_bn", in_ch};
    dec_out_ = {"dec.out", in_ch, static_cast<std::size_t>(cfg_.input_channels),
                1, 1, 0, true};

    cls_fc1_ = {"cls.fc1", static_cast<std::size_t>(cfg_.latent_dim),
                static_cast<std::size_t>(cfg_.classifier_hidden)};
    cls_fc2_ = {"cls.fc2", static_cast<std::size_t>(cfg_.classifier_hidden), 1};
  }

  const ModelConfig& config() const { return cfg_; }

  void init_params(nn::ParamMap<S>& p, Rng& rng) const {
    for (const auto& blk : encoder_) blk.init(p, rng, /*stats_valid=*/true);
    enc_head_bn_.init(p, rng, true);
    enc_fc_.init(p, rng);
    dec_fc_.init(p, rng);
    for (const auto& blk : decoder_) blk.init(p, rng, true);
    dec_head_bn_.init(p, rng, true);
    dec_out_.init(p, rng);
    cls_fc1_.init(p, rng);
    cls_fc2_.init(p, rng);
  }

  // Graph-level pieces; a full training step chains all three off one
  // encode result so there is exactly one descriptor per sample.
  int encode_g(nn::FwdCtx<S>& c, int x) const {
    const Tensor<S>& in = c.g.val(x);
    if (in.rank() != 4 || in.dim(1) != static_cast<std::size_t>(cfg_.input_channels))
      throw ShapeError("encode: expected [N,4,H,W], got " + in.shape_str());
    if (in.dim(2) != static_cast<std::size_t>(cfg_.input_h) ||
        in.dim(3) != static_cast<std::size_t>(cfg_.input_w))
      throw ShapeError("encode: input spatial size " + in.shape_str() +
                       " does not match configured " + std::to_string(cfg_.input_h) +
                       "x" + std::to_string(cfg_.input_w));
    int h = x;
    for (const auto& blk : encoder_) h = blk.forward(c, h);
    h = enc_head_bn_.forward(c, h);
    h = op::relu(c.g, h);
    const std::size_t n = c.g.val(h).dim(0);
    h = op::reshape(c.g, h,
                    {n, static_cast<std::size_t>(cfg_.widths.back()) *
                            bottleneck_h_ * bottleneck_w_});
    return enc_fc_.forward(c, h);  // linear latent, no activation
  }

  int decode_g(nn::FwdCtx<S>& c, int z) const {
    const Tensor<S>& lat = c.g.val(z);
    if (lat.rank() != 2 || lat.dim(1) != static_cast<std::size_t>(cfg_.latent_dim))
      throw ShapeError("decode: expected [N," + std::to_string(cfg_.latent_dim) +
                       "], got " + lat.shape_str());
    int h = dec_fc_.forward(c, z);
    const std::size_t n = c.g.val(h).dim(0);
    h = op::reshape(c.g, h,
                    {n, static_cast<std::size_t>(cfg_.widths.back()), bottleneck_h_,
                     bottleneck_w_});
    std::size_t i = 0;
    for (int s = 0; s < cfg_.stages(); ++s) {
      h = op::upsample2x(c.g, h);
      for (int b = 0; b < cfg_.blocks_per_stage; ++b, ++i)
        h = decoder_[i].forward(c, h);
    }
    h = dec_head_bn_.forward(c, h);
    h = op::relu(c.g, h);
    h = dec_out_.forward(c, h);
    return op::tanh_act(c.g, h);
  }

  int classify_logit_g(nn::FwdCtx<S>& c, int z) const {
    const Tensor<S>& lat = c.g.val(z);
    if (lat.rank() != 2 || lat.dim(1) != static_cast<std::size_t>(cfg_.latent_dim))
      throw ShapeError("classify: expected [N," + std::to_string(cfg_.latent_dim) +
                       "], got " + lat.shape_str());
    int h = cls_fc1_.forward(c, z);
    h = op::relu(c.g, h);
    return cls_fc2_.forward(c, h);
  }

private:
  ModelConfig cfg_;
  std::size_t bottleneck_h_ = 0, bottleneck_w_ = 0;
  std::vector<nn::PreactResidualBlock<S>> encoder_;
  nn::BatchNormLayer<S> enc_head_bn_;
  nn::DenseLayer<S> enc_fc_;
  nn::DenseLayer<S> dec_fc_;
  std::vector<nn::PreactResidualBlock<S>> decoder_;
  nn::BatchNormLayer<S> dec_head_bn_;
  nn::Conv2dLayer<S> dec_out_;
  nn::DenseLayer<S> cls_fc1_;
  nn::DenseLayer<S> cls_fc2_;
};

// Deterministically initialized checkpoint for a configuration.
template <class S>
Checkpoint<S> build_model(const ModelConfig& cfg) {
  Model<S> m(cfg);
  Checkpoint<S> ckpt;
  ckpt.config = cfg;
  Rng rng(cfg.seed);
  m.init_params(ckpt.params, rng);
  return ckpt;
}

// Inference-mode conveniences on an immutable checkpoint. Parameters are
// copied into a fresh graph per call, so concurrent use is safe.

template <class S>
Tensor<S> encode(const Checkpoint<S>& ckpt, const Tensor<S>& batch) {
  Model<S> m(ckpt.config);
  Graph<S> g;
  auto params = ckpt.params;
  nn::FwdCtx<S> c{g, params, Mode::Infer, nullptr};
  int z = m.encode_g(c, g.leaf(batch));
  return g.val(z);
}

template <class S>
Tensor<S> decode(const Checkpoint<S>& ckpt, const Tensor<S>& latent) {
  Model<S> m(ckpt.config);
  Graph<S> g;
  auto params = ckpt.params;
  nn::FwdCtx<S> c{g, params, Mode::Infer, nullptr};
  int y = m.decode_g(c, g.leaf(latent));
  return g.val(y);
}

// Tumour probabilities, one per row of the latent batch.
template <class S>
Tensor<S> classify(const Checkpoint<S>& ckpt, const Tensor<S>& latent) {
  Model<S> m(ckpt.config);
  Graph<S> g;
  auto params = ckpt.params;
  nn::FwdCtx<S> c{g, params, Mode::Infer, nullptr};
  int p = op::sigmoid(g, m.classify_logit_g(c, g.leaf(latent)));
  Tensor<S> out({g.val(p).dim(0)});
  out.data = g.val(p).data;
  return out;
}

}  // namespace mocae
