#include "ssltext/autograd.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace ssltext::ag {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

[[noreturn]] void fail(const std::string& msg) { throw Error("ag: " + msg); }

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty()) shape_ = {1};
  if (shape_numel(shape_) != data_.size()) {
    fail("tensor: data length " + std::to_string(data_.size()) +
         " does not match shape " + shape_str(*this));
  }
  for (double v : data_) {
    if (!std::isfinite(v)) fail("tensor: non-finite value at creation");
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::vec(std::vector<double> data) {
  std::size_t n = data.size();
  return Tensor({n}, std::move(data));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

double Tensor::scalar_value() const {
  if (numel() != 1) fail("tensor: scalar_value on shape " + shape_str(*this));
  return data_[0];
}

std::string shape_str(const Tensor& t) {
  std::string s = "(";
  for (std::size_t i = 0; i < t.shape().size(); ++i) {
    if (i) s += "x";
    s += std::to_string(t.shape()[i]);
  }
  return s + ")";
}

// --- tape ----------------------------------------------------------------

const Tensor& Var::value() const { return tape_->node(index_).value; }

Tensor Var::grad() const {
  const auto& n = tape_->node(index_);
  Tensor g = Tensor::zeros(n.value.shape());
  if (!n.grad.empty()) g.data() = n.grad;
  return g;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

std::vector<double>& Tape::grad_buf(std::size_t i) {
  Node& n = nodes_[i];
  if (n.grad.empty()) n.grad.assign(n.value.numel(), 0.0);
  return n.grad;
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) fail("backward: var from another tape");
  const Node& top = nodes_[loss.index()];
  if (top.value.numel() != 1) {
    fail("backward: loss must be scalar, got " + shape_str(top.value));
  }
  grad_buf(loss.index())[0] = 1.0;
  for (std::size_t i = loss.index() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || !n.backprop || n.grad.empty()) continue;
    n.backprop(*this, i);
  }
}

// Shared constructor for every op node.
struct OpAccess {
  static Var make(Tape& tape, Tensor out, std::vector<std::size_t> parents,
                  std::function<void(Tape&, std::size_t)> backprop) {
    Tape::Node n;
    n.value = std::move(out);
    n.parents = std::move(parents);
    for (std::size_t p : n.parents) {
      if (tape.node(p).needs_grad) {
        n.needs_grad = true;
        break;
      }
    }
    n.backprop = std::move(backprop);
    tape.nodes_.push_back(std::move(n));
    return Var(&tape, tape.nodes_.size() - 1);
  }
  static Tape::Node& node(Tape& t, std::size_t i) { return t.nodes_[i]; }
  static std::vector<double>& grad(Tape& t, std::size_t i) { return t.grad_buf(i); }
  static bool wants_grad(Tape& t, std::size_t i) { return t.nodes_[i].needs_grad; }
};

namespace {

Tape* same_tape(Var a, Var b, const char* op) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    fail(std::string(op) + ": operands from different tapes");
  }
  return a.tape();
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    fail(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

// Elementwise binary op with per-element partials.
template <typename Fwd, typename DA, typename DB>
Var elementwise2(Var a, Var b, const char* op, Fwd fwd, DA da, DB db) {
  Tape& t = *same_tape(a, b, op);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  check_same_shape(av, bv, op);
  std::vector<double> out(av.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av.at(i), bv.at(i));
  std::size_t ia = a.index(), ib = b.index();
  return OpAccess::make(
      t, Tensor(av.shape(), std::move(out)), {ia, ib},
      [ia, ib, da, db](Tape& tape, std::size_t self) {
        const auto& g = OpAccess::node(tape, self).grad;
        const Tensor& va = OpAccess::node(tape, ia).value;
        const Tensor& vb = OpAccess::node(tape, ib).value;
        if (OpAccess::wants_grad(tape, ia)) {
          auto& ga = OpAccess::grad(tape, ia);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * da(va.at(i), vb.at(i));
        }
        if (OpAccess::wants_grad(tape, ib)) {
          auto& gb = OpAccess::grad(tape, ib);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * db(va.at(i), vb.at(i));
        }
      });
}

template <typename Fwd, typename Dx>
Var elementwise1(Var x, const char* op, Fwd fwd, Dx dx) {
  if (x.tape() == nullptr) fail(std::string(op) + ": null var");
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  std::vector<double> out(xv.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv.at(i));
  std::size_t ix = x.index();
  return OpAccess::make(t, Tensor(xv.shape(), std::move(out)), {ix},
                        [ix, dx](Tape& tape, std::size_t self) {
                          if (!OpAccess::wants_grad(tape, ix)) return;
                          const auto& g = OpAccess::node(tape, self).grad;
                          const Tensor& vx = OpAccess::node(tape, ix).value;
                          auto& gx = OpAccess::grad(tape, ix);
                          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dx(vx.at(i));
                        });
}

}  // namespace

Var add(Var a, Var b) {
  return elementwise2(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return elementwise2(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return elementwise2(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Var scale(Var x, double c) {
  return elementwise1(
      x, "scale", [c](double v) { return c * v; }, [c](double) { return c; });
}

Var shift(Var x, double c) {
  return elementwise1(
      x, "shift", [c](double v) { return v + c; }, [](double) { return 1.0; });
}

Var relu(Var x) {
  return elementwise1(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var log(Var x) {
  return elementwise1(
      x, "log", [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

Var power(Var x, double exponent) {
  return elementwise1(
      x, "power", [exponent](double v) { return std::pow(v, exponent); },
      [exponent](double v) { return exponent * std::pow(v, exponent - 1.0); });
}

Var matmul(Var a, Var b) {
  Tape& t = *same_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
    fail("matmul: shape mismatch " + shape_str(av) + " x " + shape_str(bv));
  }
  const std::size_t r = av.rows(), k = av.cols(), c = bv.cols();
  std::vector<double> out(r * c, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = av.at(i, kk);
      for (std::size_t j = 0; j < c; ++j) out[i * c + j] += aik * bv.at(kk, j);
    }
  }
  std::size_t ia = a.index(), ib = b.index();
  return OpAccess::make(
      t, Tensor({r, c}, std::move(out)), {ia, ib},
      [ia, ib, r, k, c](Tape& tape, std::size_t self) {
        const auto& g = OpAccess::node(tape, self).grad;
        const Tensor& va = OpAccess::node(tape, ia).value;
        const Tensor& vb = OpAccess::node(tape, ib).value;
        if (OpAccess::wants_grad(tape, ia)) {
          auto& ga = OpAccess::grad(tape, ia);  // dA = dC * B^T
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) {
              const double gij = g[i * c + j];
              for (std::size_t kk = 0; kk < k; ++kk) ga[i * k + kk] += gij * vb.at(kk, j);
            }
        }
        if (OpAccess::wants_grad(tape, ib)) {
          auto& gb = OpAccess::grad(tape, ib);  // dB = A^T * dC
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t kk = 0; kk < k; ++kk) {
              const double aik = va.at(i, kk);
              for (std::size_t j = 0; j < c; ++j) gb[kk * c + j] += aik * g[i * c + j];
            }
        }
      });
}

Var add_row_bias(Var m, Var bias) {
  Tape& t = *same_tape(m, bias, "add_row_bias");
  const Tensor& mv = m.value();
  const Tensor& bv = bias.value();
  if (mv.rank() != 2 || bv.rank() != 1 || mv.cols() != bv.numel()) {
    fail("add_row_bias: shape mismatch " + shape_str(mv) + " + " + shape_str(bv));
  }
  const std::size_t r = mv.rows(), c = mv.cols();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = mv.at(i, j) + bv.at(j);
  std::size_t im = m.index(), ib = bias.index();
  return OpAccess::make(t, Tensor({r, c}, std::move(out)), {im, ib},
                        [im, ib, r, c](Tape& tape, std::size_t self) {
                          const auto& g = OpAccess::node(tape, self).grad;
                          if (OpAccess::wants_grad(tape, im)) {
                            auto& gm = OpAccess::grad(tape, im);
                            for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
                          }
                          if (OpAccess::wants_grad(tape, ib)) {
                            auto& gb = OpAccess::grad(tape, ib);
                            for (std::size_t i = 0; i < r; ++i)
                              for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
                          }
                        });
}

Var sum(Var x) {
  if (x.tape() == nullptr) fail("sum: null var");
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  double s = 0.0;
  for (std::size_t i = 0; i < xv.numel(); ++i) s += xv.at(i);
  std::size_t ix = x.index();
  return OpAccess::make(t, Tensor::scalar(s), {ix}, [ix](Tape& tape, std::size_t self) {
    if (!OpAccess::wants_grad(tape, ix)) return;
    const double g = OpAccess::node(tape, self).grad[0];
    auto& gx = OpAccess::grad(tape, ix);
    for (double& v : gx) v += g;
  });
}

Var gather_rows(Var embedding, const std::vector<int>& ids) {
  if (embedding.tape() == nullptr) fail("gather_rows: null var");
  Tape& t = *embedding.tape();
  const Tensor& ev = embedding.value();
  if (ev.rank() != 2) fail("gather_rows: embedding must be rank 2, got " + shape_str(ev));
  const std::size_t v = ev.rows(), d = ev.cols();
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      fail("gather_rows: id " + std::to_string(ids[i]) + " out of range for " + shape_str(ev));
    }
    std::memcpy(&out[i * d], &ev.data()[static_cast<std::size_t>(ids[i]) * d],
                d * sizeof(double));
  }
  std::size_t ie = embedding.index();
  return OpAccess::make(t, Tensor({ids.size(), d}, std::move(out)), {ie},
                        [ie, ids, d](Tape& tape, std::size_t self) {
                          if (!OpAccess::wants_grad(tape, ie)) return;
                          const auto& g = OpAccess::node(tape, self).grad;
                          auto& ge = OpAccess::grad(tape, ie);
                          for (std::size_t i = 0; i < ids.size(); ++i) {
                            const std::size_t row = static_cast<std::size_t>(ids[i]);
                            for (std::size_t j = 0; j < d; ++j) ge[row * d + j] += g[i * d + j];
                          }
                        });
}

Var mean_pool_nonpad(Var x, const std::vector<std::vector<int>>& ids, int pad_id) {
  if (x.tape() == nullptr) fail("mean_pool_nonpad: null var");
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  const std::size_t b = ids.size();
  const std::size_t len = b ? ids[0].size() : 0;
  for (const auto& row : ids) {
    if (row.size() != len) fail("mean_pool_nonpad: ragged id matrix");
  }
  if (xv.rank() != 2 || xv.rows() != b * len) {
    fail("mean_pool_nonpad: input " + shape_str(xv) + " does not match " +
         std::to_string(b) + "x" + std::to_string(len) + " ids");
  }
  const std::size_t d = xv.cols();
  std::vector<double> counts(b, 0.0);
  std::vector<double> out(b * d, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t l = 0; l < len; ++l) {
      if (ids[i][l] == pad_id) continue;
      counts[i] += 1.0;
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] += xv.at(i * len + l, j);
    }
    if (counts[i] == 0.0) {
      fail("mean_pool_nonpad: sequence " + std::to_string(i) + " has no non-pad ids");
    }
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] /= counts[i];
  }
  std::size_t ix = x.index();
  return OpAccess::make(t, Tensor({b, d}, std::move(out)), {ix},
                        [ix, ids, pad_id, counts, len, d](Tape& tape, std::size_t self) {
                          if (!OpAccess::wants_grad(tape, ix)) return;
                          const auto& g = OpAccess::node(tape, self).grad;
                          auto& gx = OpAccess::grad(tape, ix);
                          for (std::size_t i = 0; i < ids.size(); ++i) {
                            for (std::size_t l = 0; l < len; ++l) {
                              if (ids[i][l] == pad_id) continue;
                              for (std::size_t j = 0; j < d; ++j) {
                                gx[(i * len + l) * d + j] += g[i * d + j] / counts[i];
                              }
                            }
                          }
                        });
}

Var softmax_rows(Var x) {
  if (x.tape() == nullptr) fail("softmax_rows: null var");
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  if (xv.rank() != 2) fail("softmax_rows: input must be rank 2, got " + shape_str(xv));
  const std::size_t r = xv.rows(), c = xv.cols();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    double mx = xv.at(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, xv.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(xv.at(i, j) - mx);
      z += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  std::size_t ix = x.index();
  return OpAccess::make(
      t, Tensor({r, c}, std::move(out)), {ix}, [ix, r, c](Tape& tape, std::size_t self) {
        if (!OpAccess::wants_grad(tape, ix)) return;
        const auto& node = OpAccess::node(tape, self);
        const auto& g = node.grad;
        const Tensor& y = node.value;
        auto& gx = OpAccess::grad(tape, ix);
        // dx = y * (dy - <dy, y>) per row
        for (std::size_t i = 0; i < r; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y.at(i, j);
          for (std::size_t j = 0; j < c; ++j) {
            gx[i * c + j] += y.at(i, j) * (g[i * c + j] - dot);
          }
        }
      });
}

// --- gradient checking -----------------------------------------------------

GradCheckReport grad_check(const TapeFn& fn, const std::vector<Tensor>& params, double eps) {
  if (!(eps > 0.0) || eps > 1e-3) {
    fail("grad_check: eps must be in (0, 1e-3], got " + std::to_string(eps));
  }
  auto eval = [&fn](const std::vector<Tensor>& p, bool with_grad,
                    std::vector<Tensor>* grads) -> double {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(p.size());
    for (const Tensor& t : p) leaves.push_back(tape.leaf(t, with_grad));
    Var out = fn(tape, leaves);
    const double value = out.value().scalar_value();
    if (!std::isfinite(value)) fail("grad_check: non-finite function value");
    if (with_grad) {
      tape.backward(out);
      grads->clear();
      for (const Var& leaf : leaves) grads->push_back(leaf.grad());
    }
    return value;
  };

  std::vector<Tensor> analytic;
  eval(params, true, &analytic);

  GradCheckReport report;
  std::vector<Tensor> probe = params;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].numel(); ++i) {
      const double orig = probe[p].data()[i];
      probe[p].data()[i] = orig + eps;
      const double fp = eval(probe, false, nullptr);
      probe[p].data()[i] = orig - eps;
      const double fm = eval(probe, false, nullptr);
      probe[p].data()[i] = orig;
      const double fd = (fp - fm) / (2.0 * eps);
      const double ad = analytic[p].at(i);
      const double rel = std::abs(ad - fd) / std::max(1e-8, std::abs(ad) + std::abs(fd));
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = p;
        report.worst_coord = i;
      }
    }
  }
  return report;
}

// --- checkpoints ------------------------------------------------------------

namespace {

void write_le_double(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(buf), 8);
}

double read_le_double(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& params,
                     const std::string& extra_manifest_json) {
  nlohmann::ordered_json manifest;
  manifest["format"] = "ssltext-checkpoint-v1";
  manifest["byte_order"] = "little-endian";
  if (!extra_manifest_json.empty()) {
    nlohmann::ordered_json extra = nlohmann::ordered_json::parse(extra_manifest_json);
    for (auto& [k, v] : extra.items()) manifest[k] = v;
  }
  nlohmann::ordered_json plist = nlohmann::ordered_json::array();
  std::size_t offset = 0;
  for (const auto& [name, tensor] : params) {
    nlohmann::ordered_json entry;
    entry["name"] = name;
    entry["shape"] = tensor.shape();
    entry["offset"] = offset;
    plist.push_back(entry);
    offset += tensor.numel();
  }
  manifest["params"] = plist;

  std::ofstream os(path, std::ios::binary);
  if (!os) fail("checkpoint: cannot open " + path + " for writing");
  os << manifest.dump() << "\n";
  for (const auto& [name, tensor] : params) {
    for (double v : tensor.data()) write_le_double(os, v);
  }
  if (!os) fail("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("checkpoint: cannot open " + path);
  std::string header;
  if (!std::getline(is, header)) fail("checkpoint: missing manifest line in " + path);
  nlohmann::ordered_json manifest;
  try {
    manifest = nlohmann::ordered_json::parse(header);
  } catch (const std::exception& e) {
    fail("checkpoint: bad manifest in " + path + ": " + e.what());
  }
  if (manifest.value("format", "") != "ssltext-checkpoint-v1") {
    fail("checkpoint: unsupported format in " + path);
  }

  Checkpoint ckpt;
  const std::streampos payload_start = is.tellg();
  for (const auto& entry : manifest.at("params")) {
    NamedTensor nt;
    nt.name = entry.at("name").get<std::string>();
    std::vector<std::size_t> shape = entry.at("shape").get<std::vector<std::size_t>>();
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    is.seekg(payload_start + static_cast<std::streamoff>(offset * sizeof(double)));
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = read_le_double(is);
    if (!is) fail("checkpoint: truncated payload in " + path);
    ckpt.params.push_back({std::move(nt.name), Tensor(std::move(shape), std::move(data))});
  }
  manifest.erase("format");
  manifest.erase("byte_order");
  manifest.erase("params");
  ckpt.extra_manifest_json = manifest.dump();
  return ckpt;
}

}  // namespace ssltext::ag
