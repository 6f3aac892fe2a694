// syncasr/tensor.cc

// Copyright 2026   syncasr authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "syncasr/tensor.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace syncasr {

std::string ShapeString(const Mat &m) {
  std::ostringstream os;
  os << "[" << m.rows() << " x " << m.cols() << "]";
  return os.str();
}

const Mat &Var::value() const { return graph_->Value(id_); }

double Var::scalar() const {
  const Mat &v = value();
  if (v.size() != 1)
    throw DimensionError("scalar() on tensor of shape " + ShapeString(v));
  return v(0, 0);
}

Var Graph::Constant(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), nullptr, false, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Graph::Leaf(Mat value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), Mat(), nullptr,
                        requires_grad && grad_enabled_, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Graph::Param(Parameter &p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var(this, it->second);
  nodes_.push_back(Node{p.value, Mat(), nullptr, grad_enabled_, &p});
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Mat &Graph::GradBuffer(std::size_t id) {
  Node &n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

const Mat &Graph::Grad(Var v) const {
  const Node &n = nodes_[v.id()];
  if (!n.requires_grad)
    throw ContractError("Grad() requested for a node without requires_grad");
  return n.grad;
}

Var Graph::Emit(Mat value, std::initializer_list<Var> inputs,
                BackwardFn backward) {
  bool needs = false;
  if (grad_enabled_) {
    for (const Var &v : inputs) needs = needs || nodes_[v.id()].requires_grad;
  }
  nodes_.push_back(
      Node{std::move(value), Mat(), needs ? std::move(backward) : nullptr,
           needs, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Graph::Emit(Mat value, const std::vector<Var> &inputs,
                BackwardFn backward) {
  bool needs = false;
  if (grad_enabled_) {
    for (const Var &v : inputs) needs = needs || nodes_[v.id()].requires_grad;
  }
  nodes_.push_back(
      Node{std::move(value), Mat(), needs ? std::move(backward) : nullptr,
           needs, nullptr});
  return Var(this, nodes_.size() - 1);
}

void Graph::Backward(Var output) {
  if (!grad_enabled_)
    throw ContractError("Backward() on a graph with grad disabled");
  if (output.value().size() != 1)
    throw DimensionError("Backward() needs a 1 x 1 output, got " +
                         ShapeString(output.value()));
  if (!nodes_[output.id()].requires_grad) return;
  GradBuffer(output.id())(0, 0) += 1.0;
  for (std::size_t id = output.id() + 1; id-- > 0;) {
    Node &n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param != nullptr) n.param->grad += n.grad;
  }
}

namespace {

void CheckSameGraph(Var a, Var b) {
  if (a.graph() != b.graph())
    throw ContractError("operands belong to different graphs");
}

enum class Broadcast { kNone, kRow };

Broadcast CheckBinary(const char *op, Var a, Var b) {
  CheckSameGraph(a, b);
  const Mat &x = a.value(), &y = b.value();
  if (x.rows() == y.rows() && x.cols() == y.cols()) return Broadcast::kNone;
  if (y.rows() == 1 && y.cols() == x.cols()) return Broadcast::kRow;
  throw DimensionError(std::string(op) + ": cannot combine " + ShapeString(x) +
                       " with " + ShapeString(y));
}

}  // namespace

Var MatMul(Var a, Var b) {
  CheckSameGraph(a, b);
  const Mat &x = a.value(), &y = b.value();
  if (x.cols() != y.rows())
    throw DimensionError("MatMul: inner dimensions differ for " +
                         ShapeString(x) + " and " + ShapeString(y));
  Mat out = x * y;
  return a.graph()->Emit(std::move(out), {a, b},
                         [a, b](Graph &g, std::size_t self) {
                           const Mat &dc = g.OutputGrad(self);
                           if (g.RequiresGrad(a))
                             g.GradBuffer(a.id()).noalias() +=
                                 dc * g.Value(b.id()).transpose();
                           if (g.RequiresGrad(b))
                             g.GradBuffer(b.id()).noalias() +=
                                 g.Value(a.id()).transpose() * dc;
                         });
}

Var MatMulNT(Var a, Var b) {
  CheckSameGraph(a, b);
  const Mat &x = a.value(), &y = b.value();
  if (x.cols() != y.cols())
    throw DimensionError("MatMulNT: inner dimensions differ for " +
                         ShapeString(x) + " and " + ShapeString(y) + "^T");
  Mat out = x * y.transpose();
  return a.graph()->Emit(std::move(out), {a, b},
                         [a, b](Graph &g, std::size_t self) {
                           const Mat &dc = g.OutputGrad(self);
                           if (g.RequiresGrad(a))
                             g.GradBuffer(a.id()).noalias() +=
                                 dc * g.Value(b.id());
                           if (g.RequiresGrad(b))
                             g.GradBuffer(b.id()).noalias() +=
                                 dc.transpose() * g.Value(a.id());
                         });
}

Var Transpose(Var a) {
  Mat out = a.value().transpose();
  return a.graph()->Emit(std::move(out), {a}, [a](Graph &g, std::size_t self) {
    g.GradBuffer(a.id()) += g.OutputGrad(self).transpose();
  });
}

Var Add(Var a, Var b) {
  Broadcast bc = CheckBinary("Add", a, b);
  Mat out = a.value();
  if (bc == Broadcast::kNone)
    out += b.value();
  else
    out.rowwise() += b.value().row(0);
  return a.graph()->Emit(std::move(out), {a, b},
                         [a, b, bc](Graph &g, std::size_t self) {
                           const Mat &d = g.OutputGrad(self);
                           if (g.RequiresGrad(a)) g.GradBuffer(a.id()) += d;
                           if (g.RequiresGrad(b)) {
                             if (bc == Broadcast::kNone)
                               g.GradBuffer(b.id()) += d;
                             else
                               g.GradBuffer(b.id()) += d.colwise().sum();
                           }
                         });
}

Var Sub(Var a, Var b) {
  Broadcast bc = CheckBinary("Sub", a, b);
  Mat out = a.value();
  if (bc == Broadcast::kNone)
    out -= b.value();
  else
    out.rowwise() -= b.value().row(0);
  return a.graph()->Emit(std::move(out), {a, b},
                         [a, b, bc](Graph &g, std::size_t self) {
                           const Mat &d = g.OutputGrad(self);
                           if (g.RequiresGrad(a)) g.GradBuffer(a.id()) += d;
                           if (g.RequiresGrad(b)) {
                             if (bc == Broadcast::kNone)
                               g.GradBuffer(b.id()) -= d;
                             else
                               g.GradBuffer(b.id()) -= d.colwise().sum();
                           }
                         });
}

Var Mul(Var a, Var b) {
  Broadcast bc = CheckBinary("Mul", a, b);
  Mat out = a.value();
  if (bc == Broadcast::kNone)
    out.array() *= b.value().array();
  else
    out.array().rowwise() *= b.value().row(0).array();
  return a.graph()->Emit(
      std::move(out), {a, b}, [a, b, bc](Graph &g, std::size_t self) {
        const Mat &d = g.OutputGrad(self);
        const Mat &x = g.Value(a.id()), &y = g.Value(b.id());
        if (g.RequiresGrad(a)) {
          if (bc == Broadcast::kNone)
            g.GradBuffer(a.id()).array() += d.array() * y.array();
          else
            g.GradBuffer(a.id()).array() +=
                d.array().rowwise() * y.row(0).array();
        }
        if (g.RequiresGrad(b)) {
          if (bc == Broadcast::kNone)
            g.GradBuffer(b.id()).array() += d.array() * x.array();
          else
            g.GradBuffer(b.id()) += (d.array() * x.array()).matrix().colwise().sum();
        }
      });
}

Var Scale(Var a, double s) {
  Mat out = a.value() * s;
  return a.graph()->Emit(std::move(out), {a},
                         [a, s](Graph &g, std::size_t self) {
                           g.GradBuffer(a.id()) += s * g.OutputGrad(self);
                         });
}

Var Relu(Var a) {
  Mat out = a.value().cwiseMax(0.0);
  return a.graph()->Emit(std::move(out), {a}, [a](Graph &g, std::size_t self) {
    const Mat &x = g.Value(a.id());
    g.GradBuffer(a.id()).array() +=
        (x.array() > 0.0).select(g.OutputGrad(self).array(), 0.0);
  });
}

Var Sigmoid(Var a) {
  Mat out = a.value().unaryExpr(
      [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  return a.graph()->Emit(std::move(out), {a}, [a](Graph &g, std::size_t self) {
    const Mat &y = g.Value(self);
    g.GradBuffer(a.id()).array() +=
        g.OutputGrad(self).array() * y.array() * (1.0 - y.array());
  });
}

Var Abs(Var a) {
  Mat out = a.value().cwiseAbs();
  return a.graph()->Emit(std::move(out), {a}, [a](Graph &g, std::size_t self) {
    const Mat &x = g.Value(a.id());
    Mat sign = x.unaryExpr(
        [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
    g.GradBuffer(a.id()).array() += g.OutputGrad(self).array() * sign.array();
  });
}

Var SoftmaxRows(Var a, int causal_offset) {
  const Mat &x = a.value();
  if (x.cols() < 1) throw DimensionError("SoftmaxRows on " + ShapeString(x));
  Mat out = Mat::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index n = x.cols();
    if (causal_offset >= 0)
      n = std::min<Eigen::Index>(n, i + causal_offset + 1);
    if (n <= 0) continue;
    auto row = x.row(i).head(n);
    auto dst = out.row(i).head(n);
    dst = (row.array() - row.maxCoeff()).exp().matrix();
    dst /= dst.sum();
  }
  return a.graph()->Emit(std::move(out), {a}, [a](Graph &g, std::size_t self) {
    const Mat &p = g.Value(self);
    const Mat &d = g.OutputGrad(self);
    Eigen::VectorXd dot = (d.array() * p.array()).rowwise().sum();
    g.GradBuffer(a.id()).array() +=
        p.array() * (d.array().colwise() - dot.array());
  });
}

Var LogSoftmaxRows(Var a) {
  const Mat &x = a.value();
  if (x.cols() < 1) throw DimensionError("LogSoftmaxRows on " + ShapeString(x));
  Mat out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    const double lse = m + std::log((x.row(i).array() - m).exp().sum());
    out.row(i) = x.row(i).array() - lse;
  }
  return a.graph()->Emit(std::move(out), {a}, [a](Graph &g, std::size_t self) {
    const Mat &lp = g.Value(self);
    const Mat &d = g.OutputGrad(self);
    Eigen::VectorXd total = d.rowwise().sum();
    g.GradBuffer(a.id()).array() +=
        d.array() - lp.array().exp().colwise() * total.array();
  });
}

namespace {
constexpr double kLayerNormEps = 1e-6;
}

Var LayerNorm(Var x, Var gain, Var bias) {
  CheckSameGraph(x, gain);
  CheckSameGraph(x, bias);
  const Mat &in = x.value();
  const Eigen::Index n = in.cols();
  if (gain.value().rows() != 1 || gain.value().cols() != n ||
      bias.value().rows() != 1 || bias.value().cols() != n)
    throw DimensionError("LayerNorm: input " + ShapeString(in) + " with gain " +
                         ShapeString(gain.value()) + " and bias " +
                         ShapeString(bias.value()));
  Mat normed(in.rows(), n);
  Eigen::VectorXd inv_std(in.rows());
  for (Eigen::Index i = 0; i < in.rows(); ++i) {
    const double mu = in.row(i).mean();
    const double var = (in.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + kLayerNormEps);
    normed.row(i) = (in.row(i).array() - mu) * inv_std(i);
  }
  Mat out = normed;
  out.array().rowwise() *= gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  return x.graph()->Emit(
      std::move(out), {x, gain, bias},
      [x, gain, bias, normed = std::move(normed),
       inv_std = std::move(inv_std)](Graph &g, std::size_t self) {
        const Mat &d = g.OutputGrad(self);
        if (g.RequiresGrad(gain))
          g.GradBuffer(gain.id()) +=
              (d.array() * normed.array()).matrix().colwise().sum();
        if (g.RequiresGrad(bias)) g.GradBuffer(bias.id()) += d.colwise().sum();
        if (g.RequiresGrad(x)) {
          Mat dn = d;
          dn.array().rowwise() *= g.Value(gain.id()).row(0).array();
          Mat &dx = g.GradBuffer(x.id());
          for (Eigen::Index i = 0; i < dn.rows(); ++i) {
            const double m1 = dn.row(i).mean();
            const double m2 = (dn.row(i).array() * normed.row(i).array()).mean();
            dx.row(i).array() += inv_std(i) * (dn.row(i).array() - m1 -
                                               normed.row(i).array() * m2);
          }
        }
      });
}

Var Conv1d(Var x, Var kernel, Var bias, int width, int stride,
           Padding padding) {
  CheckSameGraph(x, kernel);
  CheckSameGraph(x, bias);
  const Mat &in = x.value();
  const Eigen::Index steps = in.rows(), c_in = in.cols();
  if (width < 1 || stride < 1)
    throw ContractError("Conv1d: width and stride must be positive");
  if (padding == Padding::kSame && width % 2 == 0)
    throw ContractError("Conv1d: same padding needs an odd width, got " +
                        std::to_string(width));
  const Mat &k = kernel.value();
  if (k.rows() != width * c_in || bias.value().rows() != 1 ||
      bias.value().cols() != k.cols())
    throw DimensionError("Conv1d: input " + ShapeString(in) + " width " +
                         std::to_string(width) + " with kernel " +
                         ShapeString(k) + " and bias " +
                         ShapeString(bias.value()));
  Eigen::Index out_steps;
  Eigen::Index shift;
  if (padding == Padding::kSame) {
    out_steps = (steps + stride - 1) / stride;
    shift = width / 2;
  } else {
    if (width > steps)
      throw DimensionError("Conv1d: valid-mode width " + std::to_string(width) +
                           " exceeds input length " + std::to_string(steps) +
                           " (empty output)");
    out_steps = (steps - width) / stride + 1;
    shift = 0;
  }
  Mat cols = Mat::Zero(out_steps, width * c_in);
  for (Eigen::Index t = 0; t < out_steps; ++t) {
    for (int tap = 0; tap < width; ++tap) {
      const Eigen::Index src = t * stride + tap - shift;
      if (src < 0 || src >= steps) continue;
      cols.block(t, tap * c_in, 1, c_in) = in.row(src);
    }
  }
  Mat out = cols * k;
  out.rowwise() += bias.value().row(0);
  return x.graph()->Emit(
      std::move(out), {x, kernel, bias},
      [x, kernel, bias, cols = std::move(cols), width, stride, shift, steps,
       c_in](Graph &g, std::size_t self) {
        const Mat &d = g.OutputGrad(self);
        if (g.RequiresGrad(kernel))
          g.GradBuffer(kernel.id()).noalias() += cols.transpose() * d;
        if (g.RequiresGrad(bias)) g.GradBuffer(bias.id()) += d.colwise().sum();
        if (g.RequiresGrad(x)) {
          Mat dcols = d * g.Value(kernel.id()).transpose();
          Mat &dx = g.GradBuffer(x.id());
          for (Eigen::Index t = 0; t < dcols.rows(); ++t) {
            for (int tap = 0; tap < width; ++tap) {
              const Eigen::Index src = t * stride + tap - shift;
              if (src < 0 || src >= steps) continue;
              dx.row(src) += dcols.block(t, tap * c_in, 1, c_in);
            }
          }
        }
      });
}

Var SliceRows(Var a, Eigen::Index start, Eigen::Index count) {
  const Mat &x = a.value();
  if (start < 0 || count < 0 || start + count > x.rows())
    throw DimensionError("SliceRows [" + std::to_string(start) + ", +" +
                         std::to_string(count) + ") of " + ShapeString(x));
  Mat out = x.middleRows(start, count);
  return a.graph()->Emit(std::move(out), {a},
                         [a, start, count](Graph &g, std::size_t self) {
                           g.GradBuffer(a.id()).middleRows(start, count) +=
                               g.OutputGrad(self);
                         });
}

Var SliceCols(Var a, Eigen::Index start, Eigen::Index count) {
  const Mat &x = a.value();
  if (start < 0 || count < 0 || start + count > x.cols())
    throw DimensionError("SliceCols [" + std::to_string(start) + ", +" +
                         std::to_string(count) + ") of " + ShapeString(x));
  Mat out = x.middleCols(start, count);
  return a.graph()->Emit(std::move(out), {a},
                         [a, start, count](Graph &g, std::size_t self) {
                           g.GradBuffer(a.id()).middleCols(start, count) +=
                               g.OutputGrad(self);
                         });
}

Var ConcatRows(const std::vector<Var> &parts) {
  if (parts.empty()) throw ContractError("ConcatRows of nothing");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var &p : parts) {
    CheckSameGraph(parts[0], p);
    if (p.cols() != cols)
      throw DimensionError("ConcatRows: " + ShapeString(parts[0].value()) +
                           " vs " + ShapeString(p.value()));
    rows += p.rows();
  }
  Mat out(rows, cols);
  Eigen::Index r = 0;
  for (const Var &p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return parts[0].graph()->Emit(
      std::move(out), parts, [parts](Graph &g, std::size_t self) {
        const Mat &d = g.OutputGrad(self);
        Eigen::Index r = 0;
        for (const Var &p : parts) {
          const Eigen::Index n = g.Value(p.id()).rows();
          if (g.RequiresGrad(p)) g.GradBuffer(p.id()) += d.middleRows(r, n);
          r += n;
        }
      });
}

Var ConcatCols(const std::vector<Var> &parts) {
  if (parts.empty()) throw ContractError("ConcatCols of nothing");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var &p : parts) {
    CheckSameGraph(parts[0], p);
    if (p.rows() != rows)
      throw DimensionError("ConcatCols: " + ShapeString(parts[0].value()) +
                           " vs " + ShapeString(p.value()));
    cols += p.cols();
  }
  Mat out(rows, cols);
  Eigen::Index c = 0;
  for (const Var &p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return parts[0].graph()->Emit(
      std::move(out), parts, [parts](Graph &g, std::size_t self) {
        const Mat &d = g.OutputGrad(self);
        Eigen::Index c = 0;
        for (const Var &p : parts) {
          const Eigen::Index n = g.Value(p.id()).cols();
          if (g.RequiresGrad(p)) g.GradBuffer(p.id()) += d.middleCols(c, n);
          c += n;
        }
      });
}

Var PairConcat(Var a) {
  const Mat &x = a.value();
  const Eigen::Index steps = x.rows(), d = x.cols();
  const Eigen::Index out_steps = (steps + 1) / 2;
  Mat out = Mat::Zero(out_steps, 2 * d);
  for (Eigen::Index t = 0; t < steps; ++t)
    out.block(t / 2, (t % 2) * d, 1, d) = x.row(t);
  return a.graph()->Emit(std::move(out), {a},
                         [a, steps, d](Graph &g, std::size_t self) {
                           const Mat &dy = g.OutputGrad(self);
                           Mat &dx = g.GradBuffer(a.id());
                           for (Eigen::Index t = 0; t < steps; ++t)
                             dx.row(t) += dy.block(t / 2, (t % 2) * d, 1, d);
                         });
}

Var GatherRows(Var table, const std::vector<int> &rows) {
  const Mat &tab = table.value();
  Mat out(static_cast<Eigen::Index>(rows.size()), tab.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= tab.rows())
      throw DimensionError("GatherRows: index " + std::to_string(rows[i]) +
                           " outside table " + ShapeString(tab));
    out.row(static_cast<Eigen::Index>(i)) = tab.row(rows[i]);
  }
  return table.graph()->Emit(std::move(out), {table},
                             [table, rows](Graph &g, std::size_t self) {
                               const Mat &d = g.OutputGrad(self);
                               Mat &dt = g.GradBuffer(table.id());
                               for (std::size_t i = 0; i < rows.size(); ++i)
                                 dt.row(rows[i]) +=
                                     d.row(static_cast<Eigen::Index>(i));
                             });
}

Var Sum(Var a) {
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return a.graph()->Emit(std::move(out), {a}, [a](Graph &g, std::size_t self) {
    g.GradBuffer(a.id()).array() += g.OutputGrad(self)(0, 0);
  });
}

Var Mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return Scale(Sum(a), 1.0 / n);
}

Var ProximityBias(Var scores, Var log_tau, int query_offset) {
  CheckSameGraph(scores, log_tau);
  if (log_tau.value().size() != 1)
    throw DimensionError("ProximityBias: log_tau must be 1 x 1, got " +
                         ShapeString(log_tau.value()));
  const Mat &s = scores.value();
  Mat dist(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    for (Eigen::Index j = 0; j < s.cols(); ++j)
      dist(i, j) = std::abs(static_cast<double>(i + query_offset - j));
  const double tau = std::exp(log_tau.value()(0, 0));
  Mat out = s - dist / tau;
  return scores.graph()->Emit(
      std::move(out), {scores, log_tau},
      [scores, log_tau, dist = std::move(dist), tau](Graph &g,
                                                     std::size_t self) {
        const Mat &d = g.OutputGrad(self);
        if (g.RequiresGrad(scores)) g.GradBuffer(scores.id()) += d;
        if (g.RequiresGrad(log_tau))
          g.GradBuffer(log_tau.id())(0, 0) +=
              (d.array() * dist.array()).sum() / tau;
      });
}

namespace internal {

Var DropoutWithMask(Var a, Mat mask) {
  Mat out = a.value().cwiseProduct(mask);
  return a.graph()->Emit(std::move(out), {a},
                         [a, mask = std::move(mask)](Graph &g,
                                                     std::size_t self) {
                           g.GradBuffer(a.id()).array() +=
                               g.OutputGrad(self).array() * mask.array();
                         });
}

}  // namespace internal

}  // namespace syncasr
