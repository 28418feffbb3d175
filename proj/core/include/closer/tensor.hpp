#pragma once

// Dense double-precision tensors and a tape-based reverse-mode differentiator.
//
// Tensor is a plain value (shape + row-major data). Differentiation happens on
// a Tape: leaves and constants are registered on it, every op appends a node,
// and Tape::backward walks the nodes once in reverse order. Var is a cheap
// handle (tape pointer + node index) to a node.
//
// Shapes are explicit. Elementwise ops require identical shapes; the only
// row-broadcast is add_row_vector, which has to be asked for by name.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace closer {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);
  explicit Tensor(Shape shape);  // zero-filled

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Rank-2 accessors. A rank-1 tensor reads as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);

  // Convenience for scalar results of shape [1].
  double item() const;

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Vars hold a pointer to their tape, so tapes are neither copied nor moved.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input. Receives a gradient in backward().
  Var leaf(Tensor value);
  /// Non-differentiable input.
  Var constant(Tensor value);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;

  /// Reverse sweep from a shape-[1] loss. Gradients from a previous sweep
  /// are discarded first.
  void backward(Var loss);

  /// Gradient of the last backward() loss with respect to v; zeros when v is
  /// unreachable from the loss or no sweep has happened.
  Tensor grad(Var v) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() noexcept { nodes_.clear(); }

  // Used by op implementations.
  using Backprop = std::function<void(Tape&, std::size_t self)>;
  Var record(Tensor value, std::vector<std::size_t> inputs, Backprop backprop);
  Tensor& grad_buffer(std::size_t id);
  const Tensor& grad_of(std::size_t id) const { return nodes_[id].grad; }
  const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until touched by backward()
    std::vector<std::size_t> inputs;
    Backprop backprop;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

// Forward ops. Each appends one node to the tape shared by its inputs.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var sum(Var a);
Var mean(Var a);

/// [n,m] + [m]: adds the vector to every row.
Var add_row_vector(Var a, Var row);
/// Scales every row of a rank-2 tensor to unit Euclidean norm.
Var normalize_rows(Var a);
/// Row-wise log-softmax. Entries where mask is false are excluded from the
/// normalizer, produce 0 and receive no gradient. An empty mask keeps all.
Var log_softmax_rows(Var a, std::vector<bool> mask = {});
/// Picks the listed (row, col) entries of a rank-2 tensor into a vector.
Var gather(Var a, std::vector<std::pair<std::size_t, std::size_t>> index);
/// log(sum(exp(a))) over all elements, shape [1].
Var logsumexp(Var a);
Var concat_rows(Var a, Var b);
Var slice_rows(Var a, std::size_t begin, std::size_t end);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// Value-level matrix product used outside the tape (evaluation paths).
Tensor matmul(const Tensor& a, const Tensor& b);

}  // namespace closer
