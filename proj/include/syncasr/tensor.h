// syncasr/tensor.h

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

#ifndef SYNCASR_TENSOR_H_
#define SYNCASR_TENSOR_H_

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace syncasr {

/// Row-major dense matrix; rows index time (or label position), columns
/// index feature dimensions.
template <typename Scalar>
using MatrixX =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Mat = MatrixX<double>;
using RowVec = RowVectorX<double>;

/// Thrown for any shape disagreement; the message names both shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a documented precondition of an operation is violated.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Thrown on NaN/Inf encountered where finite values are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string ShapeString(const Mat &m);

/// A trainable tensor with a gradient accumulator.  Gradients from any number
/// of graphs are summed into `grad` until ZeroGrad() is called.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;

  Parameter(std::string n, Mat v)
      : name(std::move(n)), value(std::move(v)),
        grad(Mat::Zero(value.rows(), value.cols())) {}
  void ZeroGrad() { grad.setZero(); }
};

class Graph;

/// Handle to a node in a Graph.  Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph *g, std::size_t id) : graph_(g), id_(id) {}

  const Mat &value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
  Graph *graph() const { return graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph *graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Tape of operations for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the tape is already a
/// topological order; Backward() walks it in reverse and sums the gradient
/// contributions of every consumer before a node propagates further.  A graph
/// constructed with grad disabled records values only (inference mode).
class Graph {
 public:
  using BackwardFn = std::function<void(Graph &, std::size_t)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph &) = delete;
  Graph &operator=(const Graph &) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var Constant(Mat value);
  /// Leaf whose gradient is readable through Grad() after Backward().
  Var Leaf(Mat value, bool requires_grad = true);
  /// Leaf bound to a Parameter; Backward() adds into parameter.grad.  A
  /// parameter maps to a single node per graph.
  Var Param(Parameter &p);

  /// Seeds d(output)/d(output) = 1 for a 1x1 output and back-propagates.
  void Backward(Var output);

  const Mat &Value(std::size_t id) const { return nodes_[id].value; }
  const Mat &Grad(Var v) const;
  bool RequiresGrad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool RequiresGrad(Var v) const { return RequiresGrad(v.id()); }

  /// Gradient buffer of node `id`, zero-allocated on first access.
  Mat &GradBuffer(std::size_t id);
  /// Gradient w.r.t. a node's output; only valid inside a backward function.
  const Mat &OutputGrad(std::size_t id) const { return nodes_[id].grad; }

  /// Appends an operation result.  `backward` is dropped when no input
  /// requires a gradient or grad is disabled.
  Var Emit(Mat value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var Emit(Mat value, const std::vector<Var> &inputs, BackwardFn backward);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    BackwardFn backward;
    bool requires_grad = false;
    Parameter *param = nullptr;
  };
  bool grad_enabled_;
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter *, std::size_t> param_nodes_;
};

// ---------------------------------------------------------------------------
// Differentiable operations.  All operands must live in the same graph.

/// a[m x k] * b[k x n].
Var MatMul(Var a, Var b);
/// a[m x k] * b[n x k]^T.
Var MatMulNT(Var a, Var b);
Var Transpose(Var a);

/// Elementwise binary ops.  `b` may be a 1 x n row broadcast over the rows of
/// `a`; no other broadcasting is performed.
Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);
Var Scale(Var a, double s);

Var Relu(Var a);
Var Sigmoid(Var a);
Var Abs(Var a);

/// Row-wise softmax.  Column j of row i is excluded (probability exactly 0)
/// when `causal_offset >= 0` and j > i + causal_offset.
Var SoftmaxRows(Var a, int causal_offset = -1);
Var LogSoftmaxRows(Var a);

/// Normalizes each row to zero mean / unit variance (epsilon 1e-6), then
/// applies the 1 x n gain and bias.
Var LayerNorm(Var x, Var gain, Var bias);

enum class Padding { kSame, kValid };

/// 1-d convolution over rows.  `kernel` is (width * c_in) x c_out with tap k
/// occupying rows [k*c_in, (k+1)*c_in); `bias` is 1 x c_out.  In same mode the
/// window of output t is centered at input t*stride and the borders are zero
/// padded, giving ceil(T / stride) outputs.
Var Conv1d(Var x, Var kernel, Var bias, int width, int stride, Padding padding);

Var SliceRows(Var a, Eigen::Index start, Eigen::Index count);
Var SliceCols(Var a, Eigen::Index start, Eigen::Index count);
Var ConcatRows(const std::vector<Var> &parts);
Var ConcatCols(const std::vector<Var> &parts);

/// [T x d] -> [ceil(T/2) x 2d] by concatenating adjacent rows; odd T is zero
/// padded to even first.
Var PairConcat(Var a);

/// Row lookup into an embedding table.
Var GatherRows(Var table, const std::vector<int> &rows);

Var Sum(Var a);
Var Mean(Var a);

/// Inverted dropout with a stored mask; identity when rate == 0.
template <typename Rng>
Var Dropout(Var a, double rate, Rng &rng);

/// Adds -|q - k| / exp(log_tau) to attention scores, where q = row +
/// query_offset and k = column.  `log_tau` is 1 x 1.
Var ProximityBias(Var scores, Var log_tau, int query_offset);

// ---------------------------------------------------------------------------

namespace internal {
Var DropoutWithMask(Var a, Mat mask);
}  // namespace internal

template <typename Rng>
Var Dropout(Var a, double rate, Rng &rng) {
  if (rate <= 0.0) return a;
  Mat mask(a.rows(), a.cols());
  const double keep = 1.0 - rate;
  for (Eigen::Index i = 0; i < mask.size(); ++i)
    mask.data()[i] = rng.Uniform() < keep ? 1.0 / keep : 0.0;
  return internal::DropoutWithMask(a, std::move(mask));
}

}  // namespace syncasr

#endif  // SYNCASR_TENSOR_H_
