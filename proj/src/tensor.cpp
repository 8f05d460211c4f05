#include "csihar/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace csihar {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values,
               bool requires_grad) {
  if (element_count(shape) != values.size()) {
    throw std::invalid_argument(
        "tensor: " + std::to_string(values.size()) + " values for shape " +
        shape_to_string(shape));
  }
  auto payload = std::make_shared<Payload>();
  payload->shape = std::move(shape);
  payload->values = std::move(values);
  payload->requires_grad = requires_grad;
  payload_ = std::move(payload);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value,
                    bool requires_grad) {
  std::size_t n = element_count(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

const std::vector<std::size_t>& Tensor::shape() const {
  if (!payload_) throw std::invalid_argument("tensor: use of empty tensor");
  return payload_->shape;
}

const std::vector<double>& Tensor::values() const {
  if (!payload_) throw std::invalid_argument("tensor: use of empty tensor");
  return payload_->values;
}

std::size_t Tensor::size() const { return values().size(); }

bool Tensor::requires_grad() const {
  return payload_ && payload_->requires_grad;
}

double Tensor::item() const {
  if (size() != 1) {
    throw std::invalid_argument("tensor: item() on shape " +
                                shape_to_string(shape()));
  }
  return values()[0];
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  if (element_count(shape) != size()) {
    throw std::invalid_argument("reshape: " + shape_to_string(this->shape()) +
                                " to " + shape_to_string(shape));
  }
  Tensor out;
  auto payload = std::make_shared<Payload>();
  payload->shape = std::move(shape);
  payload->values = values();
  payload->requires_grad = requires_grad();
  out.payload_ = std::move(payload);
  return out;
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

int Tape::intern(const Tensor& t) {
  if (!t.defined()) throw std::invalid_argument("tape: empty tensor operand");
  auto it = ids_.find(t.key());
  if (it != ids_.end()) return it->second;
  int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{{}, nullptr, t.payload_});
  node_sizes_.push_back(t.size());
  ids_.emplace(t.key(), id);
  return id;
}

Tensor Tape::record(Tensor out, const std::vector<Tensor>& inputs,
                    CustomBackward backward) {
  std::vector<int> input_ids;
  input_ids.reserve(inputs.size());
  for (const Tensor& in : inputs) input_ids.push_back(intern(in));
  int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{std::move(input_ids), std::move(backward), out.payload_});
  node_sizes_.push_back(out.size());
  ids_.emplace(out.key(), id);
  return out;
}

void Tape::backward(const Tensor& root) {
  if (root.size() != 1) {
    throw std::invalid_argument("backward: root must be scalar, got " +
                                shape_to_string(root.shape()));
  }
  auto it = ids_.find(root.key());
  if (it == ids_.end()) {
    throw std::invalid_argument("backward: root was not recorded on this tape");
  }
  grads_.resize(nodes_.size());
  int root_id = it->second;
  auto& seed = grads_[static_cast<std::size_t>(root_id)];
  if (seed.empty()) seed.assign(1, 0.0);
  seed[0] += 1.0;

  std::vector<std::vector<double>> local(nodes_.size());
  local[static_cast<std::size_t>(root_id)] = {1.0};
  for (int id = root_id; id >= 0; --id) {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.backward) continue;
    auto& g = local[static_cast<std::size_t>(id)];
    if (g.empty()) continue;
    std::vector<std::span<double>> spans;
    spans.reserve(node.inputs.size());
    for (int in : node.inputs) {
      auto& buf = local[static_cast<std::size_t>(in)];
      if (buf.empty()) buf.assign(node_sizes_[static_cast<std::size_t>(in)], 0.0);
      spans.emplace_back(buf);
    }
    node.backward(g, spans);
  }
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (static_cast<int>(id) == root_id) continue;
    auto& g = local[id];
    if (g.empty()) continue;
    auto& acc = grads_[id];
    if (acc.empty()) acc.assign(node_sizes_[id], 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
  }
}

std::vector<double> Tape::grad(const Tensor& t) const {
  auto it = ids_.find(t.key());
  if (it == ids_.end() || grads_.size() <= static_cast<std::size_t>(it->second) ||
      grads_[static_cast<std::size_t>(it->second)].empty()) {
    return std::vector<double>(t.size(), 0.0);
  }
  return grads_[static_cast<std::size_t>(it->second)];
}

void Tape::zero_grad() {
  for (auto& g : grads_) g.clear();
}

void Tape::reset() {
  nodes_.clear();
  node_sizes_.clear();
  grads_.clear();
  ids_.clear();
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  if (a.rank() == 2 && b.rank() == 1 && a.shape()[1] == b.shape()[0]) {
    std::size_t rows = a.shape()[0], cols = a.shape()[1];
    std::vector<double> out(a.values());
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += b.values()[c];
    bool rq = a.requires_grad() || b.requires_grad();
    return record(
        Tensor(a.shape(), std::move(out), rq), {a, b},
        [rows, cols](const std::vector<double>& g,
                     const std::vector<std::span<double>>& gin) {
          for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) gin[1][c] += g[r * cols + c];
        });
  }
  require_same_shape("add", a, b);
  std::vector<double> out(a.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.values()[i];
  bool rq = a.requires_grad() || b.requires_grad();
  return record(Tensor(a.shape(), std::move(out), rq), {a, b},
                [](const std::vector<double>& g,
                   const std::vector<std::span<double>>& gin) {
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    gin[0][i] += g[i];
                    gin[1][i] += g[i];
                  }
                });
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.values()[i];
  bool rq = a.requires_grad() || b.requires_grad();
  return record(Tensor(a.shape(), std::move(out), rq), {a, b},
                [](const std::vector<double>& g,
                   const std::vector<std::span<double>>& gin) {
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    gin[0][i] += g[i];
                    gin[1][i] -= g[i];
                  }
                });
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] * b.values()[i];
  bool rq = a.requires_grad() || b.requires_grad();
  return record(Tensor(a.shape(), std::move(out), rq), {a, b},
                [a, b](const std::vector<double>& g,
                       const std::vector<std::span<double>>& gin) {
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    gin[0][i] += g[i] * b.values()[i];
                    gin[1][i] += g[i] * a.values()[i];
                  }
                });
}

Tensor Tape::scalar_mul(const Tensor& a, double factor) {
  std::vector<double> out(a.values());
  for (double& v : out) v *= factor;
  return record(Tensor(a.shape(), std::move(out), a.requires_grad()), {a},
                [factor](const std::vector<double>& g,
                         const std::vector<std::span<double>>& gin) {
                  for (std::size_t i = 0; i < g.size(); ++i)
                    gin[0][i] += g[i] * factor;
                });
}

Tensor Tape::relu(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& v : out) v = std::max(0.0, v);
  return record(Tensor(a.shape(), std::move(out), a.requires_grad()), {a},
                [a](const std::vector<double>& g,
                    const std::vector<std::span<double>>& gin) {
                  for (std::size_t i = 0; i < g.size(); ++i)
                    if (a.values()[i] > 0.0) gin[0][i] += g[i];
                });
}

Tensor Tape::log_clamped(const Tensor& a, double floor) {
  if (!(floor > 0.0)) {
    throw std::invalid_argument("log_clamped: floor must be positive");
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::log(std::max(a.values()[i], floor));
  return record(Tensor(a.shape(), std::move(out), a.requires_grad()), {a},
                [a, floor](const std::vector<double>& g,
                           const std::vector<std::span<double>>& gin) {
                  for (std::size_t i = 0; i < g.size(); ++i)
                    if (a.values()[i] > floor)
                      gin[0][i] += g[i] / a.values()[i];
                });
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 1 || a.rank() > 2 || b.rank() < 1 || b.rank() > 2) {
    throw std::invalid_argument("matmul: rank must be 1 or 2, got " +
                                shape_to_string(a.shape()) + " and " +
                                shape_to_string(b.shape()));
  }
  std::size_t m = a.rank() == 2 ? a.shape()[0] : 1;
  std::size_t k = a.rank() == 2 ? a.shape()[1] : a.shape()[0];
  std::size_t k2 = b.rank() == 2 ? b.shape()[0] : b.shape()[0];
  std::size_t n = b.rank() == 2 ? b.shape()[1] : 1;
  if (k != k2) {
    throw std::invalid_argument("matmul: inner dimension mismatch " +
                                shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv.data() + p * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  std::vector<std::size_t> out_shape;
  if (a.rank() == 2 && b.rank() == 2) {
    out_shape = {m, n};
  } else if (a.rank() == 1 && b.rank() == 2) {
    out_shape = {n};
  } else if (a.rank() == 2 && b.rank() == 1) {
    out_shape = {m};
  } else {
    out_shape = {1};
  }
  bool rq = a.requires_grad() || b.requires_grad();
  return record(
      Tensor(std::move(out_shape), std::move(out), rq), {a, b},
      [a, b, m, k, n](const std::vector<double>& g,
                      const std::vector<std::span<double>>& gin) {
        const auto& av = a.values();
        const auto& bv = b.values();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* grow = g.data() + i * n;
            const double* brow = bv.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            gin[0][i * k + p] += acc;
          }
        }
        for (std::size_t p = 0; p < k; ++p) {
          for (std::size_t i = 0; i < m; ++i) {
            double aip = av[i * k + p];
            if (aip == 0.0) continue;
            const double* grow = g.data() + i * n;
            double* brow = gin[1].data() + p * n;
            for (std::size_t j = 0; j < n; ++j) brow[j] += aip * grow[j];
          }
        }
      });
}

Tensor Tape::sum(const Tensor& a) {
  double total = std::accumulate(a.values().begin(), a.values().end(), 0.0);
  return record(Tensor({1}, {total}, a.requires_grad()), {a},
                [](const std::vector<double>& g,
                   const std::vector<std::span<double>>& gin) {
                  for (double& v : gin[0]) v += g[0];
                });
}

Tensor Tape::mean(const Tensor& a) {
  double total = std::accumulate(a.values().begin(), a.values().end(), 0.0);
  double inv = 1.0 / static_cast<double>(a.size());
  return record(Tensor({1}, {total * inv}, a.requires_grad()), {a},
                [inv](const std::vector<double>& g,
                      const std::vector<std::span<double>>& gin) {
                  for (double& v : gin[0]) v += g[0] * inv;
                });
}

Tensor Tape::softmax(const Tensor& a) {
  if (a.rank() != 1) {
    throw std::invalid_argument("softmax: expected rank-1 input, got " +
                                shape_to_string(a.shape()));
  }
  double hi = *std::max_element(a.values().begin(), a.values().end());
  std::vector<double> out(a.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(a.values()[i] - hi);
    denom += out[i];
  }
  for (double& v : out) v /= denom;
  Tensor result(a.shape(), std::move(out), a.requires_grad());
  std::vector<double> s = result.values();
  return record(std::move(result), {a},
                [s = std::move(s)](const std::vector<double>& g,
                                   const std::vector<std::span<double>>& gin) {
                  double dot = 0.0;
                  for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * s[i];
                  for (std::size_t i = 0; i < g.size(); ++i)
                    gin[0][i] += s[i] * (g[i] - dot);
                });
}

Tensor Tape::concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  std::vector<double> out;
  bool rq = false;
  for (const Tensor& p : parts) {
    if (p.rank() != 1) {
      throw std::invalid_argument("concat: expected rank-1 parts, got " +
                                  shape_to_string(p.shape()));
    }
    out.insert(out.end(), p.values().begin(), p.values().end());
    rq = rq || p.requires_grad();
  }
  std::vector<std::size_t> sizes;
  sizes.reserve(parts.size());
  for (const Tensor& p : parts) sizes.push_back(p.size());
  std::size_t total = out.size();
  return record(Tensor({total}, std::move(out), rq), parts,
                [sizes = std::move(sizes)](
                    const std::vector<double>& g,
                    const std::vector<std::span<double>>& gin) {
                  std::size_t offset = 0;
                  for (std::size_t p = 0; p < sizes.size(); ++p) {
                    for (std::size_t i = 0; i < sizes[p]; ++i)
                      gin[p][i] += g[offset + i];
                    offset += sizes[p];
                  }
                });
}

Tensor Tape::reshape(const Tensor& a, std::vector<std::size_t> shape) {
  if (element_count(shape) != a.size()) {
    throw std::invalid_argument("reshape: " + shape_to_string(a.shape()) +
                                " to " + shape_to_string(shape));
  }
  return record(Tensor(std::move(shape), a.values(), a.requires_grad()), {a},
                [](const std::vector<double>& g,
                   const std::vector<std::span<double>>& gin) {
                  for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
                });
}

Tensor Tape::slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  if (a.rank() != 2) {
    throw std::invalid_argument("slice_rows: expected rank-2, got " +
                                shape_to_string(a.shape()));
  }
  std::size_t rows = a.shape()[0];
  std::size_t cols = a.shape()[1];
  if (count == 0 || begin + count > rows) {
    throw std::invalid_argument(
        "slice_rows: rows [" + std::to_string(begin) + ", " +
        std::to_string(begin + count) + ") of " + shape_to_string(a.shape()));
  }
  std::vector<double> out(a.values().begin() +
                              static_cast<std::ptrdiff_t>(begin * cols),
                          a.values().begin() +
                              static_cast<std::ptrdiff_t>((begin + count) * cols));
  std::size_t offset = begin * cols;
  return record(Tensor({count, cols}, std::move(out), a.requires_grad()), {a},
                [offset](const std::vector<double>& g,
                         const std::vector<std::span<double>>& gin) {
                  for (std::size_t i = 0; i < g.size(); ++i)
                    gin[0][offset + i] += g[i];
                });
}

Tensor Tape::custom(const std::string& name, const std::vector<Tensor>& inputs,
                    std::vector<std::size_t> out_shape,
                    std::vector<double> out_values, CustomBackward backward) {
  if (inputs.empty()) {
    throw std::invalid_argument("custom op '" + name + "': no inputs");
  }
  bool rq = false;
  for (const Tensor& in : inputs) rq = rq || in.requires_grad();
  return record(Tensor(std::move(out_shape), std::move(out_values), rq), inputs,
                std::move(backward));
}

Tensor sgd_step(const Tensor& param, const std::vector<double>& grad,
                double lr) {
  if (grad.size() != param.size()) {
    throw std::invalid_argument("sgd_step: gradient size " +
                                std::to_string(grad.size()) + " for parameter " +
                                shape_to_string(param.shape()));
  }
  std::vector<double> next(param.values());
  for (std::size_t i = 0; i < next.size(); ++i) next[i] -= lr * grad[i];
  return Tensor(param.shape(), std::move(next), param.requires_grad());
}

double gradient_check(
    const std::function<Tensor(Tape&, const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& params, double eps) {
  Tape tape;
  Tensor out = f(tape, params);
  if (out.size() != 1) {
    throw std::invalid_argument("gradient_check: f must return a scalar");
  }
  tape.backward(out);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const Tensor& p : params) analytic.push_back(tape.grad(p));

  auto eval_at = [&](std::size_t pi, std::size_t ei, double delta) {
    std::vector<Tensor> perturbed = params;
    std::vector<double> vals = params[pi].values();
    vals[ei] += delta;
    perturbed[pi] =
        Tensor(params[pi].shape(), std::move(vals), params[pi].requires_grad());
    Tape scratch;
    return f(scratch, perturbed).item();
  };

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    if (!params[pi].requires_grad()) continue;
    for (std::size_t ei = 0; ei < params[pi].size(); ++ei) {
      double fd = (eval_at(pi, ei, eps) - eval_at(pi, ei, -eps)) / (2.0 * eps);
      double an = analytic[pi][ei];
      double rel = std::abs(an - fd) / std::max(1.0, std::abs(an));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace csihar
