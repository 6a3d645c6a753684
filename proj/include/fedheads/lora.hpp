#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedheads/model_config.hpp"
#include "fedheads/tensor.hpp"

namespace fedheads {

// One low-rank pair per targeted projection: a maps hidden -> rank,
// b maps rank -> hidden. b rows are partitioned into contiguous per-head
// blocks of head_dim rows; block h is owned by attention head h.
struct LoraPair {
  Tensor a;  // [rank x hidden]
  Tensor b;  // [hidden x rank]
};

struct LayerAdapters {
  LoraPair q, k, v;
};

// The trainable set: adapters on W_Q/W_K/W_V per layer plus the task head.
// The same container holds parameter values, gradients, and deltas.
struct LoraParams {
  std::vector<LayerAdapters> layers;
  Tensor task_head;  // [hidden x classes]

  static LoraParams zeros(const ModelConfig& cfg);
  static LoraParams init(const ModelConfig& cfg, std::uint64_t seed, double a_stddev = 0.05);

  void add_scaled(const LoraParams& other, double s);
  void scale(double s);
  LoraParams minus(const LoraParams& other) const;
  std::size_t param_count() const;
  bool same_shape(const LoraParams& other) const;
};

// Per (layer, head) keep/prune flags. kept == false means the head's b
// blocks are frozen locally and absent from the uploaded payload.
struct PruneMask {
  std::size_t layers = 0;
  std::size_t heads = 0;
  double sparsity = 0.0;
  std::vector<std::uint8_t> keep;  // layers*heads, row-major

  static PruneMask all_keep(std::size_t layers, std::size_t heads);
  bool kept(std::size_t layer, std::size_t head) const { return keep[layer * heads + head] != 0; }
  void set(std::size_t layer, std::size_t head, bool k) {
    keep[layer * heads + head] = k ? 1 : 0;
  }
  std::size_t pruned_count() const;
  std::size_t kept_count() const { return layers * heads - pruned_count(); }
};

// Rows [h*head_dim, (h+1)*head_dim) of b, copied out.
Tensor head_slice(const Tensor& b, std::size_t head, std::size_t n_heads);
void write_head_slice(Tensor& b, std::size_t head, std::size_t n_heads, const Tensor& block);

// Zeroes the gradient rows of b owned by pruned heads; a, task head, and
// kept blocks pass through. Idempotent.
void freeze_pruned(LoraParams& grads, const PruneMask& mask);

struct HeadBlockDelta {
  std::uint32_t head = 0;
  std::vector<float> dq, dk, dv;  // each head_dim*rank, row-major
};

struct LayerDelta {
  std::vector<float> da_q, da_k, da_v;  // each rank*hidden, dense
  std::vector<HeadBlockDelta> b_blocks;  // kept heads only, ascending head id
};

// Sparse client upload. Values are stored as 32-bit floats: that is what
// goes on the wire, so serialization round-trips exactly and the byte
// accounting matches 4 bytes per transmitted parameter.
struct ClientUpdate {
  std::uint32_t client_id = 0;
  std::uint32_t round = 0;
  std::uint32_t num_samples = 0;
  float final_loss = 0.0f;
  // adapter geometry echoed for self-description
  std::uint32_t layers = 0, heads = 0, hidden = 0, rank = 0, classes = 0;
  std::vector<float> importance;  // layers*heads, pruned heads are exactly 0
  std::vector<LayerDelta> layer_deltas;
  std::vector<float> d_task;  // hidden*classes

  // transmitted trainable parameter values (excludes importance scores)
  std::size_t param_count() const;
  std::size_t param_bytes() const { return 4 * param_count(); }
};

ClientUpdate make_client_update(std::uint32_t client_id, std::uint32_t round,
                                std::uint32_t num_samples, float final_loss,
                                const std::vector<double>& importance,
                                const LoraParams& delta, const PruneMask& mask,
                                const ModelConfig& cfg);

std::vector<std::uint8_t> serialize_update(const ClientUpdate& u);
ClientUpdate deserialize_update(std::span<const std::uint8_t> bytes);

}  // namespace fedheads
