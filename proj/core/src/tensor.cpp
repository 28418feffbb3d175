#include "closer/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "closer/error.hpp"
#include "closer/geometry.hpp"

namespace closer {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch: return "shape-mismatch";
    case ErrorCode::kDomain: return "domain";
    case ErrorCode::kDegenerateInput: return "degenerate-input";
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kNoPairs: return "no-pairs";
    case ErrorCode::kNotInRegime: return "not-in-regime";
    case ErrorCode::kNonFinite: return "non-finite";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kFrozenEncoder: return "frozen-encoder";
    case ErrorCode::kMissingArtifact: return "missing-artifact";
  }
  return "unknown";
}

namespace {

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void require_same_tape(Var a, Var b, const char* op) {
  require(a.tape != nullptr && a.tape == b.tape, ErrorCode::kInvalidArgument,
          std::string(op) + ": operands live on different tapes");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    fail(ErrorCode::kShapeMismatch, std::string(op) + ": shapes " +
                                        shape_to_string(a.shape()) + " and " +
                                        shape_to_string(b.shape()) + " differ");
  }
}

void require_rank2(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    fail(ErrorCode::kShapeMismatch,
         std::string(op) + ": expected a matrix, got " + shape_to_string(a.shape()));
  }
}

void accumulate(Tensor& into, std::span<const double> g, double factor = 1.0) {
  auto d = into.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * g[i];
}

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  require(!shape_.empty(), ErrorCode::kShapeMismatch, "tensor shape must have at least one extent");
  for (auto e : shape_) {
    require(e > 0, ErrorCode::kShapeMismatch,
            "tensor extents must be positive, got " + shape_to_string(shape_));
  }
  if (product(shape_) != data_.size()) {
    fail(ErrorCode::kShapeMismatch, "tensor data length " + std::to_string(data_.size()) +
                                        " does not match shape " + shape_to_string(shape_));
  }
}

Tensor::Tensor(Shape shape) : Tensor(shape, std::vector<double>(product(shape), 0.0)) {}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    require(row.size() == c, ErrorCode::kShapeMismatch, "ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::rows() const {
  if (rank() == 1) return 1;
  require(rank() == 2, ErrorCode::kShapeMismatch, "rows() needs rank <= 2");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() == 1) return shape_[0];
  require(rank() == 2, ErrorCode::kShapeMismatch, "cols() needs rank <= 2");
  return shape_[1];
}

std::span<const double> Tensor::row(std::size_t r) const {
  const auto c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

std::span<double> Tensor::row(std::size_t r) {
  const auto c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

double Tensor::item() const {
  require(size() == 1, ErrorCode::kShapeMismatch,
          "item() on non-scalar tensor " + shape_to_string(shape_));
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, true});
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
  return Var{this, nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const {
  require(v.tape == this && v.id < nodes_.size(), ErrorCode::kInvalidArgument,
          "variable does not belong to this tape");
  return nodes_[v.id].value;
}

bool Tape::requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, Backprop backprop) {
  if (!value.all_finite()) {
    fail(ErrorCode::kNonFinite, "operation produced a non-finite value (node " +
                                    std::to_string(nodes_.size()) + ")");
  }
  bool needs = false;
  for (auto i : inputs) needs = needs || nodes_[i].requires_grad;
  if (!needs) backprop = nullptr;
  nodes_.push_back(Node{std::move(value), {}, std::move(inputs), std::move(backprop), needs});
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_buffer(std::size_t id) {
  auto& node = nodes_[id];
  if (node.grad.empty()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

void Tape::backward(Var loss) {
  require(loss.tape == this && loss.id < nodes_.size(), ErrorCode::kInvalidArgument,
          "backward: loss does not belong to this tape");
  const auto& v = nodes_[loss.id].value;
  require(v.rank() == 1 && v.size() == 1, ErrorCode::kShapeMismatch,
          "backward: loss must have shape [1], got " + shape_to_string(v.shape()));
  for (auto& n : nodes_) n.grad = Tensor();
  grad_buffer(loss.id)[0] = 1.0;
  for (std::size_t k = loss.id + 1; k-- > 0;) {
    auto& node = nodes_[k];
    if (!node.requires_grad || !node.backprop || node.grad.empty()) continue;
    node.backprop(*this, k);
  }
}

Tensor Tape::grad(Var v) const {
  const auto& node = nodes_.at(v.id);
  if (node.grad.empty()) return Tensor(node.value.shape());
  return node.grad;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const auto n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) {
    fail(ErrorCode::kShapeMismatch, "matmul: inner extents differ, " +
                                        shape_to_string(a.shape()) + " x " +
                                        shape_to_string(b.shape()));
  }
  Tensor out({n, m});
  auto o = out.data();
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = o.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ad[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bd.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
    }
  }
  return out;
}

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  const auto& x = a.value();
  const auto& y = b.value();
  require_same_shape(x, y, "add");
  Tensor out = x;
  accumulate(out, y.data());
  return a.tape->record(std::move(out), {a.id, b.id}, [a, b](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    if (t.needs_grad(a.id)) accumulate(t.grad_buffer(a.id), g.data());
    if (t.needs_grad(b.id)) accumulate(t.grad_buffer(b.id), g.data());
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b, "sub");
  const auto& x = a.value();
  const auto& y = b.value();
  require_same_shape(x, y, "sub");
  Tensor out = x;
  accumulate(out, y.data(), -1.0);
  return a.tape->record(std::move(out), {a.id, b.id}, [a, b](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    if (t.needs_grad(a.id)) accumulate(t.grad_buffer(a.id), g.data());
    if (t.needs_grad(b.id)) accumulate(t.grad_buffer(b.id), g.data(), -1.0);
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b, "mul");
  const auto& x = a.value();
  const auto& y = b.value();
  require_same_shape(x, y, "mul");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  return a.tape->record(std::move(out), {a.id, b.id}, [a, b](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& x = t.value_of(a.id);
    const auto& y = t.value_of(b.id);
    if (t.needs_grad(a.id)) {
      auto& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (t.needs_grad(b.id)) {
      auto& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= factor;
  return a.tape->record(std::move(out), {a.id}, [a, factor](Tape& t, std::size_t self) {
    accumulate(t.grad_buffer(a.id), t.grad_of(self).data(), factor);
  });
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  Tensor out = matmul(a.value(), b.value());
  return a.tape->record(std::move(out), {a.id, b.id}, [a, b](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& x = t.value_of(a.id);
    const auto& y = t.value_of(b.id);
    const auto n = x.rows(), k = x.cols(), m = y.cols();
    if (t.needs_grad(a.id)) {
      auto ga = t.grad_buffer(a.id).data();
      // dA = G * B^T, accumulated row-wise against a transposed copy of B
      std::vector<double> yt(m * k);
      const auto yd = y.data();
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < m; ++j) yt[j * k + p] = yd[p * m + j];
      const auto gd = g.data();
      for (std::size_t i = 0; i < n; ++i) {
        double* arow = ga.data() + i * k;
        for (std::size_t j = 0; j < m; ++j) {
          const double gij = gd[i * m + j];
          if (gij == 0.0) continue;
          const double* ytrow = yt.data() + j * k;
          for (std::size_t p = 0; p < k; ++p) arow[p] += gij * ytrow[p];
        }
      }
    }
    if (t.needs_grad(b.id)) {
      auto gb = t.grad_buffer(b.id).data();
      // dB = A^T * G
      for (std::size_t i = 0; i < n; ++i) {
        const auto grow = g.row(i);
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = x.data()[i * k + p];
          if (aip == 0.0) continue;
          double* brow = gb.data() + p * m;
          for (std::size_t j = 0; j < m; ++j) brow[j] += aip * grow[j];
        }
      }
    }
  });
}

Var transpose(Var a) {
  const auto& x = a.value();
  require_rank2(x, "transpose");
  const auto n = x.rows(), m = x.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.at(j, i) = x.at(i, j);
  return a.tape->record(std::move(out), {a.id}, [a, n, m](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ga.at(i, j) += g.at(j, i);
  });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return a.tape->record(std::move(out), {a.id}, [a](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& x = t.value_of(a.id);
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) ga[i] += g[i];
  });
}

Var exp(Var a) {
  Tensor out = a.value();
  for (auto& v : out.data()) v = std::exp(v);
  return a.tape->record(std::move(out), {a.id}, [a](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& y = t.value_of(self);
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
  });
}

Var log(Var a) {
  Tensor out = a.value();
  for (auto& v : out.data()) {
    if (!(v > 0.0)) fail(ErrorCode::kDomain, "log: non-positive input " + std::to_string(v));
    v = std::log(v);
  }
  return a.tape->record(std::move(out), {a.id}, [a](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& x = t.value_of(a.id);
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
  });
}

Var sum(Var a) {
  const auto& x = a.value();
  const double s = std::accumulate(x.data().begin(), x.data().end(), 0.0);
  return a.tape->record(Tensor::scalar(s), {a.id}, [a](Tape& t, std::size_t self) {
    const double g = t.grad_of(self)[0];
    for (auto& v : t.grad_buffer(a.id).data()) v += g;
  });
}

Var mean(Var a) {
  const auto& x = a.value();
  const double n = static_cast<double>(x.size());
  const double s = std::accumulate(x.data().begin(), x.data().end(), 0.0) / n;
  return a.tape->record(Tensor::scalar(s), {a.id}, [a, n](Tape& t, std::size_t self) {
    const double g = t.grad_of(self)[0] / n;
    for (auto& v : t.grad_buffer(a.id).data()) v += g;
  });
}

Var add_row_vector(Var a, Var row) {
  require_same_tape(a, row, "add_row_vector");
  const auto& x = a.value();
  const auto& r = row.value();
  require_rank2(x, "add_row_vector");
  if (r.rank() != 1 || r.size() != x.cols()) {
    fail(ErrorCode::kShapeMismatch, "add_row_vector: row " + shape_to_string(r.shape()) +
                                        " does not fit matrix " + shape_to_string(x.shape()));
  }
  Tensor out = x;
  const auto n = x.rows(), m = x.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) += r[j];
  return a.tape->record(std::move(out), {a.id, row.id}, [a, row, n, m](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    if (t.needs_grad(a.id)) accumulate(t.grad_buffer(a.id), g.data());
    if (t.needs_grad(row.id)) {
      auto& gr = t.grad_buffer(row.id);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) gr[j] += g.at(i, j);
    }
  });
}

Var normalize_rows(Var a) {
  const auto& x = a.value();
  require_rank2(x, "normalize_rows");
  const auto n = x.rows(), m = x.cols();
  Tensor out = x;
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (double v : x.row(i)) ss += v * v;
    const double norm = std::sqrt(ss);
    if (!(norm > kNormEpsilon)) {
      fail(ErrorCode::kDegenerateInput,
           "normalize_rows: row " + std::to_string(i) + " has near-zero norm");
    }
    norms[i] = norm;
    for (auto& v : out.row(i)) v /= norm;
  }
  return a.tape->record(std::move(out), {a.id},
                        [a, n, m, norms = std::move(norms)](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& y = t.value_of(self);
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += y.at(i, j) * g.at(i, j);
      for (std::size_t j = 0; j < m; ++j)
        ga.at(i, j) += (g.at(i, j) - y.at(i, j) * dot) / norms[i];
    }
  });
}

Var log_softmax_rows(Var a, std::vector<bool> mask) {
  const auto& x = a.value();
  require_rank2(x, "log_softmax_rows");
  const auto n = x.rows(), m = x.cols();
  if (mask.empty()) mask.assign(n * m, true);
  require(mask.size() == n * m, ErrorCode::kShapeMismatch,
          "log_softmax_rows: mask size does not match input");
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j)
      if (mask[i * m + j]) mx = std::max(mx, x.at(i, j));
    require(std::isfinite(mx), ErrorCode::kInvalidArgument,
            "log_softmax_rows: row " + std::to_string(i) + " has no unmasked entries");
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j)
      if (mask[i * m + j]) s += std::exp(x.at(i, j) - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < m; ++j)
      if (mask[i * m + j]) out.at(i, j) = x.at(i, j) - lse;
  }
  return a.tape->record(std::move(out), {a.id},
                        [a, n, m, mask = std::move(mask)](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& y = t.value_of(self);
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < n; ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < m; ++j)
        if (mask[i * m + j]) gs += g.at(i, j);
      for (std::size_t j = 0; j < m; ++j)
        if (mask[i * m + j]) ga.at(i, j) += g.at(i, j) - std::exp(y.at(i, j)) * gs;
    }
  });
}

Var gather(Var a, std::vector<std::pair<std::size_t, std::size_t>> index) {
  const auto& x = a.value();
  require_rank2(x, "gather");
  require(!index.empty(), ErrorCode::kInvalidArgument, "gather: empty index list");
  std::vector<double> picked;
  picked.reserve(index.size());
  for (auto [r, c] : index) {
    require(r < x.rows() && c < x.cols(), ErrorCode::kInvalidArgument,
            "gather: index (" + std::to_string(r) + "," + std::to_string(c) +
                ") outside " + shape_to_string(x.shape()));
    picked.push_back(x.at(r, c));
  }
  return a.tape->record(Tensor::vector(std::move(picked)), {a.id},
                        [a, index = std::move(index)](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t k = 0; k < index.size(); ++k) ga.at(index[k].first, index[k].second) += g[k];
  });
}

Var logsumexp(Var a) {
  const auto& x = a.value();
  const double mx = *std::max_element(x.data().begin(), x.data().end());
  double s = 0.0;
  for (double v : x.data()) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  return a.tape->record(Tensor::scalar(lse), {a.id}, [a, lse](Tape& t, std::size_t self) {
    const double g = t.grad_of(self)[0];
    const auto& x = t.value_of(a.id);
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g * std::exp(x[i] - lse);
  });
}

Var concat_rows(Var a, Var b) {
  require_same_tape(a, b, "concat_rows");
  const auto& x = a.value();
  const auto& y = b.value();
  require_rank2(x, "concat_rows");
  require_rank2(y, "concat_rows");
  require(x.cols() == y.cols(), ErrorCode::kShapeMismatch,
          "concat_rows: column counts differ, " + shape_to_string(x.shape()) + " and " +
              shape_to_string(y.shape()));
  std::vector<double> data(x.data().begin(), x.data().end());
  data.insert(data.end(), y.data().begin(), y.data().end());
  const auto split = x.size();
  Tensor out({x.rows() + y.rows(), x.cols()}, std::move(data));
  return a.tape->record(std::move(out), {a.id, b.id}, [a, b, split](Tape& t, std::size_t self) {
    const auto g = t.grad_of(self).data();
    if (t.needs_grad(a.id)) accumulate(t.grad_buffer(a.id), g.subspan(0, split));
    if (t.needs_grad(b.id)) accumulate(t.grad_buffer(b.id), g.subspan(split));
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const auto& x = a.value();
  require_rank2(x, "slice_rows");
  require(begin < end && end <= x.rows(), ErrorCode::kInvalidArgument,
          "slice_rows: bad range [" + std::to_string(begin) + "," + std::to_string(end) + ")");
  const auto m = x.cols();
  std::vector<double> data(x.data().begin() + begin * m, x.data().begin() + end * m);
  Tensor out({end - begin, m}, std::move(data));
  return a.tape->record(std::move(out), {a.id}, [a, begin, m](Tape& t, std::size_t self) {
    const auto g = t.grad_of(self).data();
    auto ga = t.grad_buffer(a.id).data();
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * m + i] += g[i];
  });
}

}  // namespace closer
