#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedheads/lora.hpp"
#include "fedheads/model_config.hpp"
#include "fedheads/tape.hpp"
#include "fedheads/tensor.hpp"

namespace fedheads {

// Frozen parameters: embeddings, sinusoidal positions, per-layer attention
// projections, layer norms, and the feed-forward pair. Never updated;
// reconstructed from (config, seed) everywhere, so a checkpoint only needs
// the seed.
struct BackboneLayer {
  Tensor wq, wk, wv, wo;      // [hidden x hidden], applied as x * W
  Tensor ln1_gain, ln1_bias;  // [1 x hidden]
  Tensor ln2_gain, ln2_bias;
  Tensor ff1;  // [hidden x ff_hidden]
  Tensor ff2;  // [ff_hidden x hidden]
};

struct Backbone {
  Tensor embedding;   // [vocab x hidden]
  Tensor positional;  // [max_seq x hidden]
  std::vector<BackboneLayer> layers;

  static Backbone init(const ModelConfig& cfg, std::uint64_t seed, double stddev = 0.05);
};

struct Sample {
  std::vector<std::int32_t> tokens;  // unpadded, EOS-terminated
  std::int32_t label = 0;
};

using Batch = std::vector<Sample>;

// Post-softmax attention probabilities (and the pre-softmax masked scores)
// for every sample, layer, and head, plus what importance scoring needs to
// tell valid, padded, and EOS positions apart.
struct AttentionTrace {
  // indexed [sample][layer][head], each [max_seq x max_seq]
  std::vector<std::vector<std::vector<Tensor>>> probs;
  std::vector<std::vector<std::vector<Tensor>>> scores;
  std::vector<std::size_t> valid_len;
  std::vector<std::vector<std::int32_t>> tokens;  // padded to max_seq
};

struct ForwardResult {
  Tensor logits;  // [batch x classes]
  AttentionTrace trace;
};

struct LossAndGrad {
  double loss = 0.0;
  LoraParams grads;
  Tensor logits;
  AttentionTrace trace;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Encoder-only classifier: embed + positions, L blocks of MHA + FFN with
// residuals and post-layer-norm, masked mean pooling, linear task head.
// The backbone is shared read-only between model replicas; the adapter is
// owned by the caller.
class Model {
 public:
  Model(ModelConfig cfg, std::shared_ptr<const Backbone> backbone);

  const ModelConfig& config() const { return cfg_; }
  const Backbone& backbone() const { return *backbone_; }
  std::shared_ptr<const Backbone> backbone_ptr() const { return backbone_; }

  // adapter == nullptr runs the bare backbone (plus task head, if given)
  ForwardResult forward(const Batch& batch, const LoraParams* adapter) const;
  LossAndGrad loss_and_grad(const Batch& batch, const LoraParams& adapter) const;
  EvalResult evaluate(const Batch& batch, const LoraParams& adapter) const;

 private:
  ModelConfig cfg_;
  std::shared_ptr<const Backbone> backbone_;
};

// Single attention block on an explicit input, exposed for unit-level
// checks. Returns the block output before residual/norm and the per-head
// probability matrices. x is [seq x hidden]; key_mask[j] marks valid keys.
struct MhaResult {
  Tensor output;
  std::vector<Tensor> head_probs;
};
MhaResult mha_forward(const ModelConfig& cfg, const BackboneLayer& layer, const Tensor& x,
                      const std::vector<std::uint8_t>& key_mask,
                      const LayerAdapters* adapter);

double cross_entropy_value(const Tensor& logits, const std::vector<std::int32_t>& labels);

// Checkpoint: config + backbone seed + adapter values, JSON.
std::string checkpoint_to_json(const ModelConfig& cfg, std::uint64_t backbone_seed,
                               const LoraParams& phi);
struct Checkpoint {
  ModelConfig config;
  std::uint64_t backbone_seed = 0;
  LoraParams phi;
};
Checkpoint checkpoint_from_json(const std::string& text);

}  // namespace fedheads
