#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fedheads/tensor.hpp"

namespace fedheads {

using VarId = std::uint32_t;

// Reverse-mode tape over Tensor values. Each op records its output value
// and a closure that replays the vector-Jacobian product. backward() walks
// the record once, in reverse creation order, so gradient accumulation
// order is fixed and runs are bit-reproducible.
class Tape {
 public:
  VarId constant(Tensor value) { return push(std::move(value), false); }
  VarId param(Tensor value) { return push(std::move(value), true); }

  VarId matmul(VarId a, VarId b);
  // value(a) * value(b)^T
  VarId matmul_nt(VarId a, VarId b);
  VarId add(VarId a, VarId b);
  VarId scale(VarId a, double s);
  // x [m x n] + bias [1 x n], broadcast over rows
  VarId add_row_broadcast(VarId x, VarId bias);
  VarId relu(VarId x);
  VarId softmax_rows(VarId x);
  // per-row normalization with affine gain/bias, both [1 x d]
  VarId layer_norm(VarId x, VarId gain, VarId bias, double eps = 1e-5);
  VarId slice_cols(VarId x, std::size_t c0, std::size_t c1);
  VarId concat_cols(std::span<const VarId> parts);
  VarId concat_rows(std::span<const VarId> parts);
  // mean negative log-softmax probability of the true class; scalar output
  VarId cross_entropy(VarId logits, const std::vector<std::int32_t>& labels);

  void backward(VarId root);

  const Tensor& value(VarId id) const { return nodes_[id].value; }
  // gradient of the last backward() root w.r.t. id; zeros if untouched
  Tensor grad_of(VarId id) const;
  bool needs_grad(VarId id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    std::function<void(Tape&)> backward;
  };

  VarId push(Tensor value, bool needs_grad, std::function<void(Tape&)> fn = {});
  void accumulate(VarId id, const Tensor& g);
  Tensor& grad_ref(VarId id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
};

}  // namespace fedheads
