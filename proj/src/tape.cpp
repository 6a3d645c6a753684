#include "fedheads/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fedheads {

VarId Tape::push(Tensor value, bool needs_grad, std::function<void(Tape&)> fn) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = needs_grad;
  node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return static_cast<VarId>(nodes_.size() - 1);
}

void Tape::accumulate(VarId id, const Tensor& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
  n.grad.add_scaled(g, 1.0);
}

Tensor Tape::grad_of(VarId id) const {
  const Node& n = nodes_[id];
  if (n.grad.empty()) return Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(VarId root) {
  Node& r = nodes_[root];
  if (r.value.rows() != 1 || r.value.cols() != 1) {
    throw std::invalid_argument("backward: root must be a scalar, got " + r.value.shape_str());
  }
  for (Node& n : nodes_) n.grad = Tensor();
  r.grad = Tensor(1, 1, 1.0);
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this);
  }
}

VarId Tape::matmul(VarId a, VarId b) {
  Tensor out = fedheads::matmul(value(a), value(b));
  const bool needs = needs_grad(a) || needs_grad(b);
  VarId id = push(std::move(out), needs);
  if (needs) {
    nodes_[id].backward = [a, b, id](Tape& t) {
      const Tensor& g = t.grad_ref(id);
      if (t.needs_grad(a)) t.accumulate(a, fedheads::matmul_nt(g, t.value(b)));
      if (t.needs_grad(b)) t.accumulate(b, fedheads::matmul(fedheads::transpose(t.value(a)), g));
    };
  }
  return id;
}

VarId Tape::matmul_nt(VarId a, VarId b) {
  Tensor out = fedheads::matmul_nt(value(a), value(b));
  const bool needs = needs_grad(a) || needs_grad(b);
  VarId id = push(std::move(out), needs);
  if (needs) {
    nodes_[id].backward = [a, b, id](Tape& t) {
      const Tensor& g = t.grad_ref(id);
      // y = a b^T: da = g b, db = g^T a
      if (t.needs_grad(a)) t.accumulate(a, fedheads::matmul(g, t.value(b)));
      if (t.needs_grad(b)) t.accumulate(b, fedheads::matmul(fedheads::transpose(g), t.value(a)));
    };
  }
  return id;
}

VarId Tape::add(VarId a, VarId b) {
  Tensor out = fedheads::add(value(a), value(b));
  const bool needs = needs_grad(a) || needs_grad(b);
  VarId id = push(std::move(out), needs);
  if (needs) {
    nodes_[id].backward = [a, b, id](Tape& t) {
      const Tensor& g = t.grad_ref(id);
      t.accumulate(a, g);
      t.accumulate(b, g);
    };
  }
  return id;
}

VarId Tape::scale(VarId a, double s) {
  Tensor out = value(a);
  out.scale_inplace(s);
  const bool needs = needs_grad(a);
  VarId id = push(std::move(out), needs);
  if (needs) {
    nodes_[id].backward = [a, s, id](Tape& t) {
      Tensor g = t.grad_ref(id);
      g.scale_inplace(s);
      t.accumulate(a, g);
    };
  }
  return id;
}

VarId Tape::add_row_broadcast(VarId x, VarId bias) {
  const Tensor& xv = value(x);
  const Tensor& bv = value(bias);
  if (bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw std::invalid_argument("add_row_broadcast: bias " + bv.shape_str() +
                                " does not broadcast over " + xv.shape_str());
  }
  Tensor out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out.at(i, j) += bv.at(0, j);
  const bool needs = needs_grad(x) || needs_grad(bias);
  VarId id = push(std::move(out), needs);
  if (needs) {
    nodes_[id].backward = [x, bias, id](Tape& t) {
      const Tensor& g = t.grad_ref(id);
      if (t.needs_grad(x)) t.accumulate(x, g);
      if (t.needs_grad(bias)) {
        Tensor gb(1, g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) gb.at(0, j) += g.at(i, j);
        t.accumulate(bias, gb);
      }
    };
  }
  return id;
}

VarId Tape::relu(VarId x) {
  Tensor out = value(x);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j)
      if (out.at(i, j) < 0.0) out.at(i, j) = 0.0;
  const bool needs = needs_grad(x);
  VarId id = push(std::move(out), needs);
  if (needs) {
    nodes_[id].backward = [x, id](Tape& t) {
      const Tensor& g = t.grad_ref(id);
      const Tensor& xv = t.value(x);
      Tensor gx = g;
      for (std::size_t i = 0; i < gx.rows(); ++i)
        for (std::size_t j = 0; j < gx.cols(); ++j)
          if (xv.at(i, j) <= 0.0) gx.at(i, j) = 0.0;
      t.accumulate(x, gx);
    };
  }
  return id;
}

VarId Tape::softmax_rows(VarId x) {
  Tensor out = softmax_rows_value(value(x));
  const bool needs = needs_grad(x);
  VarId id = push(std::move(out), needs);
  if (needs) {
    nodes_[id].backward = [x, id](Tape& t) {
      const Tensor& g = t.grad_ref(id);
      const Tensor& p = t.value(id);
      Tensor gx(g.rows(), g.cols());
      for (std::size_t i = 0; i < g.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < g.cols(); ++j) dot += g.at(i, j) * p.at(i, j);
        for (std::size_t j = 0; j < g.cols(); ++j)
          gx.at(i, j) = p.at(i, j) * (g.at(i, j) - dot);
      }
      t.accumulate(x, gx);
    };
  }
  return id;
}

VarId Tape::layer_norm(VarId x, VarId gain, VarId bias, double eps) {
  const Tensor& xv = value(x);
  const Tensor& gv = value(gain);
  const Tensor& bv = value(bias);
  const std::size_t d = xv.cols();
  if (d == 0) throw std::invalid_argument("layer_norm: empty rows");
  if (gv.rows() != 1 || gv.cols() != d || bv.rows() != 1 || bv.cols() != d) {
    throw std::invalid_argument("layer_norm: gain/bias must be [1x" + std::to_string(d) + "]");
  }
  Tensor normed(xv.rows(), d);
  std::vector<double> inv_std(xv.rows());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xv.at(i, j);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xv.at(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) normed.at(i, j) = (xv.at(i, j) - mean) * inv_std[i];
  }
  Tensor out(xv.rows(), d);
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = normed.at(i, j) * gv.at(0, j) + bv.at(0, j);

  const bool needs = needs_grad(x) || needs_grad(gain) || needs_grad(bias);
  VarId id = push(std::move(out), needs);
  if (needs) {
    nodes_[id].backward = [x, gain, bias, id, normed, inv_std](Tape& t) {
      const Tensor& g = t.grad_ref(id);
      const Tensor& gv = t.value(gain);
      const std::size_t d = g.cols();
      if (t.needs_grad(gain)) {
        Tensor gg(1, d);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < d; ++j) gg.at(0, j) += g.at(i, j) * normed.at(i, j);
        t.accumulate(gain, gg);
      }
      if (t.needs_grad(bias)) {
        Tensor gb(1, d);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < d; ++j) gb.at(0, j) += g.at(i, j);
        t.accumulate(bias, gb);
      }
      if (t.needs_grad(x)) {
        Tensor gx(g.rows(), d);
        for (std::size_t i = 0; i < g.rows(); ++i) {
          double mean_dn = 0.0, mean_dn_n = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dn = g.at(i, j) * gv.at(0, j);
            mean_dn += dn;
            mean_dn_n += dn * normed.at(i, j);
          }
          mean_dn /= static_cast<double>(d);
          mean_dn_n /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const double dn = g.at(i, j) * gv.at(0, j);
            gx.at(i, j) = inv_std[i] * (dn - mean_dn - normed.at(i, j) * mean_dn_n);
          }
        }
        t.accumulate(x, gx);
      }
    };
  }
  return id;
}

VarId Tape::slice_cols(VarId x, std::size_t c0, std::size_t c1) {
  const Tensor& xv = value(x);
  if (c0 >= c1 || c1 > xv.cols()) {
    throw std::invalid_argument("slice_cols: range [" + std::to_string(c0) + "," +
                                std::to_string(c1) + ") out of " + xv.shape_str());
  }
  Tensor out(xv.rows(), c1 - c0);
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t j = c0; j < c1; ++j) out.at(i, j - c0) = xv.at(i, j);
  const bool needs = needs_grad(x);
  VarId id = push(std::move(out), needs);
  if (needs) {
    nodes_[id].backward = [x, c0, id](Tape& t) {
      const Tensor& g = t.grad_ref(id);
      const Tensor& xv = t.value(x);
      Tensor gx(xv.rows(), xv.cols());
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gx.at(i, j + c0) = g.at(i, j);
      t.accumulate(x, gx);
    };
  }
  return id;
}

VarId Tape::concat_cols(std::span<const VarId> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t rows = value(parts[0]).rows();
  std::size_t cols = 0;
  bool needs = false;
  for (VarId p : parts) {
    if (value(p).rows() != rows)
      throw std::invalid_argument("concat_cols: row counts differ");
    cols += value(p).cols();
    needs = needs || needs_grad(p);
  }
  Tensor out(rows, cols);
  std::size_t off = 0;
  for (VarId p : parts) {
    const Tensor& v = value(p);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out.at(i, off + j) = v.at(i, j);
    off += v.cols();
  }
  std::vector<VarId> owned(parts.begin(), parts.end());
  VarId id = push(std::move(out), needs);
  if (needs) {
    nodes_[id].backward = [owned, id](Tape& t) {
      const Tensor& g = t.grad_ref(id);
      std::size_t off = 0;
      for (VarId p : owned) {
        const Tensor& v = t.value(p);
        if (t.needs_grad(p)) {
          Tensor gp(v.rows(), v.cols());
          for (std::size_t i = 0; i < v.rows(); ++i)
            for (std::size_t j = 0; j < v.cols(); ++j) gp.at(i, j) = g.at(i, off + j);
          t.accumulate(p, gp);
        }
        off += v.cols();
      }
    };
  }
  return id;
}

VarId Tape::concat_rows(std::span<const VarId> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const std::size_t cols = value(parts[0]).cols();
  std::size_t rows = 0;
  bool needs = false;
  for (VarId p : parts) {
    if (value(p).cols() != cols)
      throw std::invalid_argument("concat_rows: column counts differ");
    rows += value(p).rows();
    needs = needs || needs_grad(p);
  }
  Tensor out(rows, cols);
  std::size_t off = 0;
  for (VarId p : parts) {
    const Tensor& v = value(p);
    for (std::size_t i = 0; i < v.rows(); ++i)
      for (std::size_t j = 0; j < cols; ++j) out.at(off + i, j) = v.at(i, j);
    off += v.rows();
  }
  std::vector<VarId> owned(parts.begin(), parts.end());
  VarId id = push(std::move(out), needs);
  if (needs) {
    nodes_[id].backward = [owned, id](Tape& t) {
      const Tensor& g = t.grad_ref(id);
      std::size_t off = 0;
      for (VarId p : owned) {
        const Tensor& v = t.value(p);
        if (t.needs_grad(p)) {
          Tensor gp(v.rows(), v.cols());
          for (std::size_t i = 0; i < v.rows(); ++i)
            for (std::size_t j = 0; j < v.cols(); ++j) gp.at(i, j) = g.at(off + i, j);
          t.accumulate(p, gp);
        }
        off += v.rows();
      }
    };
  }
  return id;
}

VarId Tape::cross_entropy(VarId logits, const std::vector<std::int32_t>& labels) {
  const Tensor& lv = value(logits);
  const std::size_t n = lv.rows();
  const std::size_t classes = lv.cols();
  if (labels.size() != n) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(n) + " rows");
  }
  for (std::int32_t lbl : labels) {
    if (lbl < 0 || static_cast<std::size_t>(lbl) >= classes) {
      throw std::invalid_argument("cross_entropy: label " + std::to_string(lbl) +
                                  " out of [0," + std::to_string(classes) + ")");
    }
  }
  Tensor probs = softmax_rows_value(lv);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    // recompute the log-sum-exp path directly for accuracy near 0/1
    double mx = lv.at(i, 0);
    for (std::size_t j = 1; j < classes; ++j) mx = std::max(mx, lv.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < classes; ++j) sum += std::exp(lv.at(i, j) - mx);
    loss += mx + std::log(sum) - lv.at(i, static_cast<std::size_t>(labels[i]));
  }
  loss /= static_cast<double>(n);
  const bool needs = needs_grad(logits);
  VarId id = push(Tensor(1, 1, loss), needs);
  if (needs) {
    nodes_[id].backward = [logits, labels, probs, id](Tape& t) {
      const double up = t.grad_ref(id).at(0, 0);
      Tensor gl = probs;
      const double inv_n = 1.0 / static_cast<double>(probs.rows());
      for (std::size_t i = 0; i < probs.rows(); ++i) {
        gl.at(i, static_cast<std::size_t>(labels[i])) -= 1.0;
        for (std::size_t j = 0; j < probs.cols(); ++j) gl.at(i, j) *= up * inv_n;
      }
      t.accumulate(logits, gl);
    };
  }
  return id;
}

}  // namespace fedheads
