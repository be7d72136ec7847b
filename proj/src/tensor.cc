#include "sluj/tensor.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "sluj/errors.h"

namespace sluj {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  long tape_index = -1;
  std::function<void(std::span<const double>)> backward;
};

}  // namespace detail

namespace {

thread_local Tape* g_active_tape = nullptr;

using Fn = std::function<void(std::span<const double>)>;

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) {
    throw DimensionError(std::string(op) + ": empty tensor");
  }
}

void require_shape(size_t rows, size_t cols, size_t n) {
  if (rows == 0 || cols == 0) {
    throw DimensionError("tensor extents must be positive, got " +
                         Shape{rows, cols}.str());
  }
  if (rows * cols != n) {
    std::ostringstream msg;
    msg << "shape " << Shape{rows, cols}.str() << " needs " << rows * cols
        << " values, got " << n;
    throw DimensionError(msg.str());
  }
}

std::string shapes(const Tensor& a, const Tensor& b) {
  return a.shape().str() + " and " + b.shape().str();
}

// Adds the upstream gradient into t when t takes one.
void accumulate(const Tensor& t, std::span<const double> g) {
  if (!t.requires_grad()) return;
  auto dst = t.mutable_grad();
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

Tensor elementwise(const Tensor& a, const char* op,
                   double (*f)(double),
                   double (*dfdy)(double x, double y)) {
  require_defined(a, op);
  std::vector<double> y(a.size());
  auto x = a.values();
  for (size_t i = 0; i < y.size(); ++i) y[i] = f(x[i]);
  std::vector<double> ycopy = y;
  return record_op(a.shape(), std::move(y), {a},
                   [a, ycopy = std::move(ycopy), dfdy](std::span<const double> g) mutable {
                     if (!a.requires_grad()) return;
                     auto x = a.values();
                     auto gx = a.mutable_grad();
                     for (size_t i = 0; i < gx.size(); ++i) {
                       gx[i] += g[i] * dfdy(x[i], ycopy[i]);
                     }
                   });
}

}  // namespace

std::string Shape::str() const {
  std::ostringstream out;
  out << "[" << rows << " x " << cols << "]";
  return out.str();
}

// --- Tensor --------------------------------------------------------------

Tensor Tensor::zeros(size_t rows, size_t cols) {
  return constant(rows, cols, std::vector<double>(rows * cols, 0.0));
}

Tensor Tensor::filled(size_t rows, size_t cols, double value) {
  return constant(rows, cols, std::vector<double>(rows * cols, value));
}

Tensor Tensor::constant(size_t rows, size_t cols, std::vector<double> data) {
  require_shape(rows, cols, data.size());
  auto node = std::make_shared<detail::Node>();
  node->shape = {rows, cols};
  node->value = std::move(data);
  return Tensor(std::move(node));
}

Tensor Tensor::parameter(size_t rows, size_t cols, std::vector<double> data) {
  Tensor t = constant(rows, cols, std::move(data));
  t.node_->requires_grad = true;
  t.node_->grad.assign(rows * cols, 0.0);
  return t;
}

Tensor Tensor::scalar(double value) { return constant(1, 1, {value}); }

Tensor Tensor::row(std::vector<double> data) {
  size_t n = data.size();
  return constant(1, n, std::move(data));
}

const Shape& Tensor::shape() const {
  static const Shape kEmpty;
  return node_ ? node_->shape : kEmpty;
}

std::span<const double> Tensor::values() const {
  if (!node_) return {};
  return node_->value;
}

std::span<double> Tensor::mutable_values() const {
  if (!node_) return {};
  return node_->value;
}

double Tensor::at(size_t r, size_t c) const {
  const Shape& s = shape();
  if (r >= s.rows || c >= s.cols) {
    throw DimensionError("index (" + std::to_string(r) + ", " +
                         std::to_string(c) + ") outside " + s.str());
  }
  return node_->value[r * s.cols + c];
}

double Tensor::item() const {
  if (shape() != Shape{1, 1}) {
    throw DimensionError("item() needs a 1 x 1 tensor, got " + shape().str());
  }
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

std::span<const double> Tensor::grad() const {
  if (!node_) return {};
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() const {
  if (!node_) return {};
  if (node_->grad.size() != node_->value.size()) {
    node_->grad.assign(node_->value.size(), 0.0);
  }
  return node_->grad;
}

void Tensor::zero_grad() const {
  if (node_ && !node_->grad.empty()) {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }
}

long Tensor::node_id() const { return node_ ? node_->tape_index : -1; }

Tensor Tensor::detach() const {
  require_defined(*this, "detach");
  return constant(rows(), cols(), node_->value);
}

Tensor Tensor::clone() const {
  require_defined(*this, "clone");
  if (node_->requires_grad && node_->tape_index < 0) {
    return parameter(rows(), cols(), node_->value);
  }
  return constant(rows(), cols(), node_->value);
}

// --- Tape ----------------------------------------------------------------

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.shape() != Shape{1, 1}) {
    throw ContractError("backward needs a scalar loss, got " +
                        loss.shape().str());
  }
  if (!loss.requires_grad()) {
    nodes_.clear();
    return;
  }
  long idx = loss.node_->tape_index;
  if (idx >= 0 && (static_cast<size_t>(idx) >= nodes_.size() ||
                   nodes_[idx] != loss.node_)) {
    throw ContractError("loss was not recorded on this tape");
  }
  Tensor seed = loss;
  seed.mutable_grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    detail::Node& node = **it;
    if (node.backward && !node.grad.empty()) node.backward(node.grad);
    node.backward = nullptr;
  }
  for (auto& node : nodes_) node->tape_index = -1;
  nodes_.clear();
}

Tensor record_op(Shape shape, std::vector<double> value,
                 std::vector<Tensor> inputs, Fn fn) {
  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->value = std::move(value);
  Tape* tape = Tape::active();
  bool tracked = false;
  if (tape) {
    for (const Tensor& in : inputs) tracked = tracked || in.requires_grad();
  }
  if (tracked) {
    node->requires_grad = true;
    node->backward = std::move(fn);
    node->tape_index = static_cast<long>(tape->nodes_.size());
    tape->nodes_.push_back(node);
  }
  return Tensor(std::move(node));
}

// --- Operations ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner extents differ for " + shapes(a, b));
  }
  const size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> c(m * n, 0.0);
  auto av = a.values();
  auto bv = b.values();
  for (size_t i = 0; i < m; ++i) {
    double* ci = c.data() + i * n;
    for (size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* bp = bv.data() + p * n;
      for (size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
  return record_op({m, n}, std::move(c), {a, b},
                   [a, b, m, k, n](std::span<const double> g) mutable {
                     auto av = a.values();
                     auto bv = b.values();
                     if (a.requires_grad()) {
                       auto ga = a.mutable_grad();
                       for (size_t i = 0; i < m; ++i) {
                         for (size_t p = 0; p < k; ++p) {
                           double s = 0.0;
                           for (size_t j = 0; j < n; ++j) {
                             s += g[i * n + j] * bv[p * n + j];
                           }
                           ga[i * k + p] += s;
                         }
                       }
                     }
                     if (b.requires_grad()) {
                       auto gb = b.mutable_grad();
                       for (size_t i = 0; i < m; ++i) {
                         for (size_t p = 0; p < k; ++p) {
                           const double aip = av[i * k + p];
                           for (size_t j = 0; j < n; ++j) {
                             gb[p * n + j] += aip * g[i * n + j];
                           }
                         }
                       }
                     }
                   });
}

Tensor transpose(const Tensor& a) {
  require_defined(a, "transpose");
  const size_t m = a.rows(), n = a.cols();
  std::vector<double> y(m * n);
  auto x = a.values();
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = 0; j < n; ++j) y[j * m + i] = x[i * n + j];
  }
  return record_op({n, m}, std::move(y), {a},
                   [a, m, n](std::span<const double> g) mutable {
                     if (!a.requires_grad()) return;
                     auto ga = a.mutable_grad();
                     for (size_t i = 0; i < m; ++i) {
                       for (size_t j = 0; j < n; ++j) {
                         ga[i * n + j] += g[j * m + i];
                       }
                     }
                   });
}

namespace {

bool broadcastable(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() || (b.rows() == 1 && b.cols() == a.cols());
}

Tensor add_signed(const Tensor& a, const Tensor& b, double sign,
                  const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (!broadcastable(a, b)) {
    throw DimensionError(std::string(op) + ": cannot combine " + shapes(a, b));
  }
  const size_t n = a.cols();
  const bool bcast = a.shape() != b.shape();
  std::vector<double> y(a.values().begin(), a.values().end());
  auto bv = b.values();
  for (size_t i = 0; i < y.size(); ++i) y[i] += sign * bv[bcast ? i % n : i];
  return record_op(a.shape(), std::move(y), {a, b},
                   [a, b, sign, bcast, n](std::span<const double> g) mutable {
                     accumulate(a, g);
                     if (!b.requires_grad()) return;
                     auto gb = b.mutable_grad();
                     for (size_t i = 0; i < g.size(); ++i) {
                       gb[bcast ? i % n : i] += sign * g[i];
                     }
                   });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return add_signed(a, b, 1.0, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return add_signed(a, b, -1.0, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_defined(a, "mul");
  require_defined(b, "mul");
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: shapes differ, " + shapes(a, b));
  }
  std::vector<double> y(a.size());
  auto av = a.values();
  auto bv = b.values();
  for (size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  return record_op(a.shape(), std::move(y), {a, b},
                   [a, b](std::span<const double> g) mutable {
                     auto av = a.values();
                     auto bv = b.values();
                     if (a.requires_grad()) {
                       auto ga = a.mutable_grad();
                       for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                     }
                     if (b.requires_grad()) {
                       auto gb = b.mutable_grad();
                       for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                     }
                   });
}

Tensor scale(const Tensor& a, double factor) {
  require_defined(a, "scale");
  std::vector<double> y(a.values().begin(), a.values().end());
  for (double& v : y) v *= factor;
  return record_op(a.shape(), std::move(y), {a},
                   [a, factor](std::span<const double> g) mutable {
                     if (!a.requires_grad()) return;
                     auto ga = a.mutable_grad();
                     for (size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
                   });
}

Tensor tanh(const Tensor& a) {
  return elementwise(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return elementwise(
      a, "sigmoid",
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor log(const Tensor& a) {
  return elementwise(
      a, "log", [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor softmax_rows(const Tensor& a) {
  require_defined(a, "softmax");
  const size_t m = a.rows(), n = a.cols();
  auto x = a.values();
  std::vector<double> y(m * n);
  for (size_t i = 0; i < m; ++i) {
    const double* xi = x.data() + i * n;
    double* yi = y.data() + i * n;
    double mx = *std::max_element(xi, xi + n);
    double z = 0.0;
    for (size_t j = 0; j < n; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      z += yi[j];
    }
    for (size_t j = 0; j < n; ++j) yi[j] /= z;
  }
  std::vector<double> ycopy = y;
  return record_op(a.shape(), std::move(y), {a},
                   [a, ycopy = std::move(ycopy), m, n](std::span<const double> g) mutable {
                     if (!a.requires_grad()) return;
                     auto ga = a.mutable_grad();
                     for (size_t i = 0; i < m; ++i) {
                       double dot = 0.0;
                       for (size_t j = 0; j < n; ++j) {
                         dot += g[i * n + j] * ycopy[i * n + j];
                       }
                       for (size_t j = 0; j < n; ++j) {
                         ga[i * n + j] += ycopy[i * n + j] * (g[i * n + j] - dot);
                       }
                     }
                   });
}

Tensor softmax_row(const Tensor& a) {
  require_defined(a, "softmax_row");
  if (a.rows() != 1) {
    throw DimensionError("softmax_row needs a single row, got " +
                         a.shape().str());
  }
  return softmax_rows(a);
}

Tensor logsumexp(const Tensor& a) {
  require_defined(a, "logsumexp");
  auto x = a.values();
  double mx = *std::max_element(x.begin(), x.end());
  double out;
  if (std::isinf(mx) && mx < 0) {
    out = mx;
  } else {
    double s = 0.0;
    for (double v : x) s += std::exp(v - mx);
    out = mx + std::log(s);
  }
  return record_op({1, 1}, {out}, {a},
                   [a, out](std::span<const double> g) mutable {
                     if (!a.requires_grad()) return;
                     auto x = a.values();
                     auto ga = a.mutable_grad();
                     for (size_t i = 0; i < ga.size(); ++i) {
                       ga[i] += g[0] * std::exp(x[i] - out);
                     }
                   });
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  double s = 0.0;
  for (double v : a.values()) s += v;
  return record_op({1, 1}, {s}, {a}, [a](std::span<const double> g) mutable {
    if (!a.requires_grad()) return;
    for (double& v : a.mutable_grad()) v += g[0];
  });
}

Tensor pick(const Tensor& a, size_t r, size_t c) {
  double v = a.at(r, c);
  const size_t idx = r * a.cols() + c;
  return record_op({1, 1}, {v}, {a}, [a, idx](std::span<const double> g) mutable {
    if (!a.requires_grad()) return;
    a.mutable_grad()[idx] += g[0];
  });
}

Tensor slice_rows(const Tensor& a, size_t begin, size_t count) {
  require_defined(a, "slice_rows");
  if (count == 0 || begin + count > a.rows()) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " +
                         a.shape().str());
  }
  const size_t n = a.cols();
  auto x = a.values();
  std::vector<double> y(x.begin() + begin * n, x.begin() + (begin + count) * n);
  return record_op({count, n}, std::move(y), {a},
                   [a, begin, n](std::span<const double> g) mutable {
                     if (!a.requires_grad()) return;
                     auto ga = a.mutable_grad();
                     for (size_t i = 0; i < g.size(); ++i) ga[begin * n + i] += g[i];
                   });
}

Tensor slice_cols(const Tensor& a, size_t begin, size_t count) {
  require_defined(a, "slice_cols");
  if (count == 0 || begin + count > a.cols()) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " +
                         a.shape().str());
  }
  const size_t m = a.rows(), n = a.cols();
  auto x = a.values();
  std::vector<double> y(m * count);
  for (size_t i = 0; i < m; ++i) {
    std::copy_n(x.begin() + i * n + begin, count, y.begin() + i * count);
  }
  return record_op({m, count}, std::move(y), {a},
                   [a, begin, count, m, n](std::span<const double> g) mutable {
                     if (!a.requires_grad()) return;
                     auto ga = a.mutable_grad();
                     for (size_t i = 0; i < m; ++i) {
                       for (size_t j = 0; j < count; ++j) {
                         ga[i * n + begin + j] += g[i * count + j];
                       }
                     }
                   });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const size_t n = parts[0].cols();
  size_t m = 0;
  for (const Tensor& p : parts) {
    require_defined(p, "concat_rows");
    if (p.cols() != n) {
      throw DimensionError("concat_rows: column counts differ, " +
                           shapes(parts[0], p));
    }
    m += p.rows();
  }
  std::vector<double> y;
  y.reserve(m * n);
  for (const Tensor& p : parts) y.insert(y.end(), p.values().begin(), p.values().end());
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return record_op({m, n}, std::move(y), inputs,
                   [inputs](std::span<const double> g) mutable {
                     size_t offset = 0;
                     for (Tensor& p : inputs) {
                       accumulate(p, g.subspan(offset, p.size()));
                       offset += p.size();
                     }
                   });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const size_t m = parts[0].rows();
  size_t n = 0;
  for (const Tensor& p : parts) {
    require_defined(p, "concat_cols");
    if (p.rows() != m) {
      throw DimensionError("concat_cols: row counts differ, " +
                           shapes(parts[0], p));
    }
    n += p.cols();
  }
  std::vector<double> y(m * n);
  size_t col = 0;
  for (const Tensor& p : parts) {
    auto x = p.values();
    const size_t w = p.cols();
    for (size_t i = 0; i < m; ++i) {
      std::copy_n(x.begin() + i * w, w, y.begin() + i * n + col);
    }
    col += w;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return record_op({m, n}, std::move(y), inputs,
                   [inputs, m, n](std::span<const double> g) mutable {
                     size_t col = 0;
                     for (Tensor& p : inputs) {
                       const size_t w = p.cols();
                       if (p.requires_grad()) {
                         auto gp = p.mutable_grad();
                         for (size_t i = 0; i < m; ++i) {
                           for (size_t j = 0; j < w; ++j) {
                             gp[i * w + j] += g[i * n + col + j];
                           }
                         }
                       }
                       col += w;
                     }
                   });
}

Tensor concat_rows(std::initializer_list<Tensor> parts) {
  return concat_rows(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor concat_cols(std::initializer_list<Tensor> parts) {
  return concat_cols(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor gather_rows(const Tensor& table, std::span<const size_t> ids) {
  require_defined(table, "gather_rows");
  if (ids.empty()) throw DimensionError("gather_rows: no ids");
  const size_t n = table.cols();
  auto x = table.values();
  std::vector<double> y;
  y.reserve(ids.size() * n);
  for (size_t id : ids) {
    if (id >= table.rows()) {
      throw DimensionError("gather_rows: id " + std::to_string(id) +
                           " outside " + table.shape().str());
    }
    y.insert(y.end(), x.begin() + id * n, x.begin() + (id + 1) * n);
  }
  std::vector<size_t> idcopy(ids.begin(), ids.end());
  return record_op({ids.size(), n}, std::move(y), {table},
                   [table, idcopy = std::move(idcopy), n](std::span<const double> g) mutable {
                     if (!table.requires_grad()) return;
                     auto gt = table.mutable_grad();
                     for (size_t r = 0; r < idcopy.size(); ++r) {
                       for (size_t j = 0; j < n; ++j) {
                         gt[idcopy[r] * n + j] += g[r * n + j];
                       }
                     }
                   });
}

Tensor pad_rows(const Tensor& a, size_t pad) {
  require_defined(a, "pad_rows");
  if (pad == 0) return a;
  Tensor zeros = Tensor::zeros(pad, a.cols());
  return concat_rows({zeros, a, zeros});
}

}  // namespace sluj
