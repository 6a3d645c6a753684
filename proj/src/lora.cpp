#include "fedheads/lora.hpp"

#include <cstring>
#include <stdexcept>
#include <string>

#include "fedheads/rng.hpp"

namespace fedheads {

namespace {

void fill_gaussian(Tensor& t, Rng& rng, double stddev) {
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) t.at(i, j) = rng.normal(0.0, stddev);
}

}  // namespace

LoraParams LoraParams::zeros(const ModelConfig& cfg) {
  LoraParams p;
  p.layers.resize(cfg.layers);
  for (auto& layer : p.layers) {
    for (LoraPair* pair : {&layer.q, &layer.k, &layer.v}) {
      pair->a = Tensor(cfg.lora_rank, cfg.hidden);
      pair->b = Tensor(cfg.hidden, cfg.lora_rank);
    }
  }
  p.task_head = Tensor(cfg.hidden, cfg.classes);
  return p;
}

LoraParams LoraParams::init(const ModelConfig& cfg, std::uint64_t seed, double a_stddev) {
  LoraParams p = zeros(cfg);
  Rng rng(seed);
  // a is Gaussian, b starts at zero so the adapter is an exact identity
  for (auto& layer : p.layers) {
    for (LoraPair* pair : {&layer.q, &layer.k, &layer.v}) {
      fill_gaussian(pair->a, rng, a_stddev);
    }
  }
  return p;
}

void LoraParams::add_scaled(const LoraParams& other, double s) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].q.a.add_scaled(other.layers[l].q.a, s);
    layers[l].q.b.add_scaled(other.layers[l].q.b, s);
    layers[l].k.a.add_scaled(other.layers[l].k.a, s);
    layers[l].k.b.add_scaled(other.layers[l].k.b, s);
    layers[l].v.a.add_scaled(other.layers[l].v.a, s);
    layers[l].v.b.add_scaled(other.layers[l].v.b, s);
  }
  task_head.add_scaled(other.task_head, s);
}

void LoraParams::scale(double s) {
  for (auto& layer : layers) {
    for (LoraPair* pair : {&layer.q, &layer.k, &layer.v}) {
      pair->a.scale_inplace(s);
      pair->b.scale_inplace(s);
    }
  }
  task_head.scale_inplace(s);
}

LoraParams LoraParams::minus(const LoraParams& other) const {
  LoraParams out = *this;
  out.add_scaled(other, -1.0);
  return out;
}

std::size_t LoraParams::param_count() const {
  std::size_t n = task_head.size();
  for (const auto& layer : layers) {
    n += layer.q.a.size() + layer.q.b.size();
    n += layer.k.a.size() + layer.k.b.size();
    n += layer.v.a.size() + layer.v.b.size();
  }
  return n;
}

bool LoraParams::same_shape(const LoraParams& other) const {
  if (layers.size() != other.layers.size()) return false;
  if (!task_head.same_shape(other.task_head)) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (!layers[l].q.a.same_shape(other.layers[l].q.a)) return false;
    if (!layers[l].q.b.same_shape(other.layers[l].q.b)) return false;
  }
  return true;
}

PruneMask PruneMask::all_keep(std::size_t layers, std::size_t heads) {
  PruneMask m;
  m.layers = layers;
  m.heads = heads;
  m.sparsity = 0.0;
  m.keep.assign(layers * heads, 1);
  return m;
}

std::size_t PruneMask::pruned_count() const {
  std::size_t n = 0;
  for (std::uint8_t k : keep) n += (k == 0);
  return n;
}

Tensor head_slice(const Tensor& b, std::size_t head, std::size_t n_heads) {
  if (n_heads == 0 || b.rows() % n_heads != 0) {
    throw std::invalid_argument("head_slice: " + b.shape_str() + " not divisible into " +
                                std::to_string(n_heads) + " head blocks");
  }
  if (head >= n_heads) {
    throw std::invalid_argument("head_slice: head " + std::to_string(head) + " out of [0," +
                                std::to_string(n_heads) + ")");
  }
  const std::size_t block = b.rows() / n_heads;
  Tensor out(block, b.cols());
  for (std::size_t i = 0; i < block; ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) out.at(i, j) = b.at(head * block + i, j);
  return out;
}

void write_head_slice(Tensor& b, std::size_t head, std::size_t n_heads, const Tensor& block) {
  const std::size_t rows = b.rows() / n_heads;
  if (head >= n_heads || block.rows() != rows || block.cols() != b.cols()) {
    throw std::invalid_argument("write_head_slice: block " + block.shape_str() +
                                " does not fit " + b.shape_str());
  }
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) b.at(head * rows + i, j) = block.at(i, j);
}

void freeze_pruned(LoraParams& grads, const PruneMask& mask) {
  if (grads.layers.size() != mask.layers) {
    throw std::invalid_argument("freeze_pruned: mask has " + std::to_string(mask.layers) +
                                " layers, gradients have " + std::to_string(grads.layers.size()));
  }
  for (std::size_t l = 0; l < mask.layers; ++l) {
    auto& layer = grads.layers[l];
    const std::size_t block = layer.q.b.rows() / mask.heads;
    for (std::size_t h = 0; h < mask.heads; ++h) {
      if (mask.kept(l, h)) continue;
      for (Tensor* b : {&layer.q.b, &layer.k.b, &layer.v.b}) {
        for (std::size_t i = h * block; i < (h + 1) * block; ++i)
          for (std::size_t j = 0; j < b->cols(); ++j) b->at(i, j) = 0.0;
      }
    }
  }
}

namespace {

std::vector<float> narrow(const Tensor& t) {
  std::vector<float> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<float>(t.data()[i]);
  return out;
}

std::vector<float> narrow_block(const Tensor& b, std::size_t head, std::size_t n_heads) {
  const std::size_t rows = b.rows() / n_heads;
  std::vector<float> out(rows * b.cols());
  std::size_t k = 0;
  for (std::size_t i = head * rows; i < (head + 1) * rows; ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) out[k++] = static_cast<float>(b.at(i, j));
  return out;
}

}  // namespace

ClientUpdate make_client_update(std::uint32_t client_id, std::uint32_t round,
                                std::uint32_t num_samples, float final_loss,
                                const std::vector<double>& importance,
                                const LoraParams& delta, const PruneMask& mask,
                                const ModelConfig& cfg) {
  if (importance.size() != cfg.layers * cfg.heads) {
    throw std::invalid_argument("make_client_update: importance size mismatch");
  }
  ClientUpdate u;
  u.client_id = client_id;
  u.round = round;
  u.num_samples = num_samples;
  u.final_loss = final_loss;
  u.layers = static_cast<std::uint32_t>(cfg.layers);
  u.heads = static_cast<std::uint32_t>(cfg.heads);
  u.hidden = static_cast<std::uint32_t>(cfg.hidden);
  u.rank = static_cast<std::uint32_t>(cfg.lora_rank);
  u.classes = static_cast<std::uint32_t>(cfg.classes);
  u.importance.resize(importance.size());
  for (std::size_t i = 0; i < importance.size(); ++i)
    u.importance[i] = static_cast<float>(importance[i]);
  u.layer_deltas.resize(cfg.layers);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    auto& ld = u.layer_deltas[l];
    ld.da_q = narrow(delta.layers[l].q.a);
    ld.da_k = narrow(delta.layers[l].k.a);
    ld.da_v = narrow(delta.layers[l].v.a);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      if (!mask.kept(l, h)) continue;
      HeadBlockDelta blk;
      blk.head = static_cast<std::uint32_t>(h);
      blk.dq = narrow_block(delta.layers[l].q.b, h, cfg.heads);
      blk.dk = narrow_block(delta.layers[l].k.b, h, cfg.heads);
      blk.dv = narrow_block(delta.layers[l].v.b, h, cfg.heads);
      ld.b_blocks.push_back(std::move(blk));
    }
  }
  u.d_task = narrow(delta.task_head);
  return u;
}

std::size_t ClientUpdate::param_count() const {
  std::size_t n = d_task.size();
  for (const auto& ld : layer_deltas) {
    n += ld.da_q.size() + ld.da_k.size() + ld.da_v.size();
    for (const auto& blk : ld.b_blocks) n += blk.dq.size() + blk.dk.size() + blk.dv.size();
  }
  return n;
}

namespace {

constexpr std::uint32_t kMagic = 0x46485550;  // "FHUP"
constexpr std::uint32_t kWireVersion = 1;

struct Writer {
  std::vector<std::uint8_t> out;
  void u32(std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 24));
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void f32s(const std::vector<float>& vs) {
    for (float v : vs) f32(v);
  }
};

struct Reader {
  std::span<const std::uint8_t> in;
  std::size_t pos = 0;
  std::uint32_t u32() {
    if (pos + 4 > in.size()) throw std::runtime_error("update payload truncated");
    std::uint32_t v = static_cast<std::uint32_t>(in[pos]) |
                      static_cast<std::uint32_t>(in[pos + 1]) << 8 |
                      static_cast<std::uint32_t>(in[pos + 2]) << 16 |
                      static_cast<std::uint32_t>(in[pos + 3]) << 24;
    pos += 4;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::vector<float> f32s(std::size_t n) {
    std::vector<float> vs(n);
    for (auto& v : vs) v = f32();
    return vs;
  }
};

}  // namespace

std::vector<std::uint8_t> serialize_update(const ClientUpdate& u) {
  Writer w;
  w.u32(kMagic);
  w.u32(kWireVersion);
  w.u32(u.client_id);
  w.u32(u.round);
  w.u32(u.num_samples);
  w.f32(u.final_loss);
  w.u32(u.layers);
  w.u32(u.heads);
  w.u32(u.hidden);
  w.u32(u.rank);
  w.u32(u.classes);
  w.f32s(u.importance);
  for (const auto& ld : u.layer_deltas) {
    w.f32s(ld.da_q);
    w.f32s(ld.da_k);
    w.f32s(ld.da_v);
    w.u32(static_cast<std::uint32_t>(ld.b_blocks.size()));
    for (const auto& blk : ld.b_blocks) {
      w.u32(blk.head);
      w.f32s(blk.dq);
      w.f32s(blk.dk);
      w.f32s(blk.dv);
    }
  }
  w.f32s(u.d_task);
  return std::move(w.out);
}

ClientUpdate deserialize_update(std::span<const std::uint8_t> bytes) {
  Reader r{bytes};
  if (r.u32() != kMagic) throw std::runtime_error("update payload: bad magic");
  if (r.u32() != kWireVersion) throw std::runtime_error("update payload: unsupported version");
  ClientUpdate u;
  u.client_id = r.u32();
  u.round = r.u32();
  u.num_samples = r.u32();
  u.final_loss = r.f32();
  u.layers = r.u32();
  u.heads = r.u32();
  u.hidden = r.u32();
  u.rank = r.u32();
  u.classes = r.u32();
  if (u.heads == 0 || u.hidden % u.heads != 0) {
    throw std::runtime_error("update payload: invalid geometry");
  }
  const std::size_t block = (u.hidden / u.heads) * u.rank;
  u.importance = r.f32s(static_cast<std::size_t>(u.layers) * u.heads);
  u.layer_deltas.resize(u.layers);
  for (auto& ld : u.layer_deltas) {
    ld.da_q = r.f32s(static_cast<std::size_t>(u.rank) * u.hidden);
    ld.da_k = r.f32s(static_cast<std::size_t>(u.rank) * u.hidden);
    ld.da_v = r.f32s(static_cast<std::size_t>(u.rank) * u.hidden);
    const std::uint32_t n_blocks = r.u32();
    if (n_blocks > u.heads) throw std::runtime_error("update payload: too many head blocks");
    ld.b_blocks.resize(n_blocks);
    for (auto& blk : ld.b_blocks) {
      blk.head = r.u32();
      if (blk.head >= u.heads) throw std::runtime_error("update payload: head id out of range");
      blk.dq = r.f32s(block);
      blk.dk = r.f32s(block);
      blk.dv = r.f32s(block);
    }
  }
  u.d_task = r.f32s(static_cast<std::size_t>(u.hidden) * u.classes);
  if (r.pos != bytes.size()) throw std::runtime_error("update payload: trailing bytes");
  return u;
}

}  // namespace fedheads
