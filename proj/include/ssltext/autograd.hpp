#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "ssltext/error.hpp"

// Minimal dense-tensor reverse-mode AD. One Tape per training step; ops
// append nodes, backward() walks them in reverse insertion order (the tape
// is SSA, so that is a reverse topological order).
namespace ssltext::ag {

// Row-major tensor of doubles. Rank 0 is represented as shape {1}.
// Construction rejects non-finite values; every op that could produce
// NaN/Inf therefore fails loudly instead of propagating poison.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor scalar(double value);
  static Tensor vec(std::vector<double> data);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  std::size_t numel() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  // Matrix accessors; rank-1 tensors read as a single row.
  std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return rank() == 2 ? shape_[1] : numel(); }

  double at(std::size_t i) const { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

  double scalar_value() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_str(const Tensor& t);

class Tape;

// Handle to a node on a Tape. Cheap to copy; invalidated when the tape dies.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  // Gradient of the last backward() target w.r.t. this node. Zero tensor
  // for nodes off the path.
  Tensor grad() const;
  Tape* tape() const { return tape_; }
  std::size_t index() const { return index_; }

 private:
  friend class Tape;
  friend struct OpAccess;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}
  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every node
  // reachable from a grad-requiring leaf. loss must be scalar.
  void backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;

  struct Node {
    Tensor value;
    std::vector<double> grad;  // same numel as value, lazily sized
    bool needs_grad = false;
    std::vector<std::size_t> parents;
    std::function<void(Tape&, std::size_t)> backprop;
  };

  Node& node(std::size_t i) { return nodes_[i]; }
  const Node& node(std::size_t i) const { return nodes_[i]; }
  std::vector<double>& grad_buf(std::size_t i);

  std::vector<Node> nodes_;

  friend struct OpAccess;
};

// --- forward primitives -----------------------------------------------
// Shape rules throw Error("ag: <op>: ...") naming the offending shapes.

Var add(Var a, Var b);           // elementwise, equal shapes
Var sub(Var a, Var b);           // elementwise, equal shapes
Var mul(Var a, Var b);           // elementwise, equal shapes
Var scale(Var x, double c);      // c * x
Var shift(Var x, double c);      // x + c
Var matmul(Var a, Var b);        // (r,k) x (k,c)
Var add_row_bias(Var m, Var bias);  // (r,c) + (c,) broadcast over rows
Var relu(Var x);
Var log(Var x);                  // natural log; no clamping here
Var power(Var x, double exponent);
Var sum(Var x);                  // -> scalar
// Rows of the embedding matrix selected by index; out[(i), :] = emb[ids[i], :].
Var gather_rows(Var embedding, const std::vector<int>& ids);
// x is (b*len, d); ids is the b x len padded id matrix that produced it.
// out[r, :] = mean over non-pad positions of row r's segment.
Var mean_pool_nonpad(Var x, const std::vector<std::vector<int>>& ids, int pad_id);
Var softmax_rows(Var x);         // softmax over the last axis of a (r,c) tensor

// --- gradient checking --------------------------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;  // index into the parameter list
  std::size_t worst_coord = 0;
};

// Builds the scalar function on a fresh tape per evaluation. The AD side
// comes from one backward pass; the FD side from central differences
// (f(p+eps*e) - f(p-eps*e)) / (2 eps) per coordinate. Relative error is
// |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
using TapeFn = std::function<Var(Tape&, const std::vector<Var>&)>;
GradCheckReport grad_check(const TapeFn& fn, const std::vector<Tensor>& params, double eps);

// --- checkpoints ---------------------------------------------------------
// Single file: one JSON manifest line ({"format", "params":[{name, shape,
// offset}], ...extra fields}), then raw little-endian float64 payload.
// Offsets are in doubles from the start of the payload.

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& params,
                     const std::string& extra_manifest_json);
struct Checkpoint {
  std::vector<NamedTensor> params;
  std::string extra_manifest_json;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ssltext::ag
