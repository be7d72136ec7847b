#ifndef SLUJ_TENSOR_H_
#define SLUJ_TENSOR_H_

// Dense row-major matrices of doubles with a reverse-mode gradient tape.
//
// Every value is two-dimensional (rows x cols); vectors are 1 x n rows and
// scalars are 1 x 1. Operations record themselves on the tape that is active
// on the calling thread, but only when at least one input requires a
// gradient. With no active tape, operations are plain numeric functions and
// may run concurrently on shared read-only parameters.
//
//   Tape tape;
//   Tensor loss = sum(tanh(matmul(x, w)));
//   tape.backward(loss);   // w.grad() now holds d loss / d w

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sluj {

struct Shape {
  size_t rows = 0;
  size_t cols = 0;

  size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

namespace detail {
struct Node;
}

class Tensor {
 public:
  // Empty handle; most operations reject it.
  Tensor() = default;

  static Tensor zeros(size_t rows, size_t cols);
  static Tensor filled(size_t rows, size_t cols, double value);
  // Constant data: never receives a gradient.
  static Tensor constant(size_t rows, size_t cols, std::vector<double> data);
  // A trainable leaf. Its gradient buffer exists from creation.
  static Tensor parameter(size_t rows, size_t cols, std::vector<double> data);
  static Tensor scalar(double value);
  static Tensor row(std::vector<double> data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  size_t rows() const { return shape().rows; }
  size_t cols() const { return shape().cols; }
  size_t size() const { return shape().size(); }

  std::span<const double> values() const;
  // Direct write access for optimizers and checkpoint loading. Not recorded.
  std::span<double> mutable_values() const;
  double at(size_t r, size_t c) const;
  double item() const;  // 1 x 1 only

  bool requires_grad() const;
  // Zero-length span when no gradient has been accumulated.
  std::span<const double> grad() const;
  // Allocates the buffer on first use.
  std::span<double> mutable_grad() const;
  void zero_grad() const;

  // Position on the active tape, or -1 for leaves and untracked values.
  long node_id() const;

  // Same data, no gradient history.
  Tensor detach() const;
  // Deep copy of values; parameters stay parameters.
  Tensor clone() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  friend class Tape;
  friend Tensor record_op(Shape shape, std::vector<double> value,
                          std::vector<Tensor> inputs,
                          std::function<void(std::span<const double>)> fn);

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
};

// Records operations in execution order. Constructing a Tape makes it the
// active tape of the current thread until it is destroyed; the previously
// active tape (if any) is restored afterwards. Single-threaded.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Seeds d loss / d loss = 1 and replays the tape in reverse, accumulating
  // into the gradient of every reachable tensor that requires one. Clears
  // the tape. Leaf gradients accumulate across calls until zero_grad().
  void backward(const Tensor& loss);

  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  static Tape* active();

 private:
  friend Tensor record_op(Shape shape, std::vector<double> value,
                          std::vector<Tensor> inputs,
                          std::function<void(std::span<const double>)> fn);

  std::vector<std::shared_ptr<detail::Node>> nodes_;
  Tape* previous_ = nullptr;
};

// Extension point for custom differentiable operations. `fn` receives the
// upstream gradient of the result and must accumulate into the inputs'
// mutable_grad() (only for inputs that require a gradient). When no tape is
// active or no input requires a gradient, `fn` is dropped and the result is
// a constant.
Tensor record_op(Shape shape, std::vector<double> value,
                 std::vector<Tensor> inputs,
                 std::function<void(std::span<const double>)> fn);

// --- Operations ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise. `add` and `sub` also accept a 1 x n right-hand side that is
// broadcast over the rows of an m x n left-hand side.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log(const Tensor& a);

// Softmax of each row, max-subtracted.
Tensor softmax_rows(const Tensor& a);
// Softmax of a single 1 x n row.
Tensor softmax_row(const Tensor& a);
// log sum exp of every entry, max-subtracted. Returns 1 x 1.
Tensor logsumexp(const Tensor& a);

Tensor sum(const Tensor& a);
// Entry (r, c) as a 1 x 1 tensor.
Tensor pick(const Tensor& a, size_t r, size_t c);

Tensor slice_rows(const Tensor& a, size_t begin, size_t count);
Tensor slice_cols(const Tensor& a, size_t begin, size_t count);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::initializer_list<Tensor> parts);
Tensor concat_cols(std::initializer_list<Tensor> parts);

// Rows of `table` selected by `ids`; the gradient scatters back.
Tensor gather_rows(const Tensor& table, std::span<const size_t> ids);
// `pad` zero rows above and below.
Tensor pad_rows(const Tensor& a, size_t pad);

}  // namespace sluj

#endif  // SLUJ_TENSOR_H_
