#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace csihar {

// Dense tensor of doubles. The payload (shape + values) is immutable after
// construction; copies share storage. Gradients are not stored here, they
// live on the Tape that recorded the operations producing the tensor.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> values,
         bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<std::size_t> shape, double value,
                     bool requires_grad = false);

  bool defined() const { return payload_ != nullptr; }
  const std::vector<std::size_t>& shape() const;
  const std::vector<double>& values() const;
  std::size_t size() const;
  std::size_t rank() const { return shape().size(); }
  bool requires_grad() const;

  // Scalar extraction; throws std::invalid_argument unless size() == 1.
  double item() const;

  // Copy under a new shape with identical element count. Not recorded on
  // any tape; inside differentiable code use Tape::reshape instead.
  Tensor reshaped(std::vector<std::size_t> shape) const;

 private:
  struct Payload {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    bool requires_grad = false;
  };
  std::shared_ptr<const Payload> payload_;

  friend class Tape;
  const void* key() const { return payload_.get(); }
};

std::string shape_to_string(const std::vector<std::size_t>& shape);

// Records operations as they execute and replays them backwards to
// accumulate gradients. One tape per training run; not thread safe.
// Gradients add up across backward() calls until reset() or zero_grad().
class Tape {
 public:
  using CustomBackward =
      std::function<void(const std::vector<double>& out_grad,
                         const std::vector<std::span<double>>& input_grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Elementwise; shapes must match exactly except add/sub also accept a
  // rank-1 right operand broadcast across the rows of a rank-2 left one.
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scalar_mul(const Tensor& a, double factor);
  Tensor relu(const Tensor& a);

  // log(max(a_i, floor)) elementwise; floor must be positive.
  Tensor log_clamped(const Tensor& a, double floor = 1e-9);

  // Rank-2 by rank-2 matrix product. Rank-1 operands are treated as a row
  // (left) or a column (right) and the unit axis is squeezed from the result.
  Tensor matmul(const Tensor& a, const Tensor& b);

  Tensor sum(const Tensor& a);
  Tensor mean(const Tensor& a);

  // Rank-1 softmax, computed with max subtraction.
  Tensor softmax(const Tensor& a);

  // Concatenates rank-1 tensors into one rank-1 tensor.
  Tensor concat(const std::vector<Tensor>& parts);

  // Same values under a new shape; gradients pass through unchanged.
  Tensor reshape(const Tensor& a, std::vector<std::size_t> shape);

  // Rows [begin, begin + count) of a rank-2 tensor.
  Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);

  // Extension point for ops whose gradient rule lives outside this module.
  // `backward` receives the output gradient and one writable gradient span
  // per input, in the order the inputs were passed.
  Tensor custom(const std::string& name, const std::vector<Tensor>& inputs,
                std::vector<std::size_t> out_shape,
                std::vector<double> out_values, CustomBackward backward);

  // Seeds d(root)/d(root) = 1 and sweeps the tape once in reverse insertion
  // order, accumulating into per-node gradient buffers. Root must be scalar.
  void backward(const Tensor& root);

  // Gradient accumulated so far for `t`; zeros if `t` never touched the tape
  // or no backward() reached it.
  std::vector<double> grad(const Tensor& t) const;

  void zero_grad();
  void reset();
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<int> inputs;
    CustomBackward backward;
    std::shared_ptr<const void> holder;
  };

  int intern(const Tensor& t);
  Tensor record(Tensor out, const std::vector<Tensor>& inputs,
                CustomBackward backward);

  std::vector<Node> nodes_;
  std::vector<std::size_t> node_sizes_;
  std::vector<std::vector<double>> grads_;
  std::unordered_map<const void*, int> ids_;
};

// New tensor holding param - lr * grad; shape and requires_grad preserved.
Tensor sgd_step(const Tensor& param, const std::vector<double>& grad, double lr);

// Central-difference check of d(f)/d(params) against the tape gradients.
// f must build its computation on the tape it is given and return a scalar.
// Returns the maximum over parameter entries of
//   |analytic - fd| / max(1, |analytic|).
double gradient_check(
    const std::function<Tensor(Tape&, const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& params, double eps = 1e-5);

}  // namespace csihar
