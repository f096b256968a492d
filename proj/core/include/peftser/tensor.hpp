#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "peftser/errors.hpp"
#include "peftser/rng.hpp"

namespace peftser {

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

namespace detail {

// Shared storage behind a Tensor handle. `requires_grad` marks trainable
// leaves; `on_tape` marks values produced by a recorded op. During backward,
// leaf gradients accumulate across passes while intermediate gradients are
// reset at the start of every pass (tracked via `grad_pass`).
struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad; // empty until first needed
    bool requires_grad = false;
    bool on_tape = false;
    Tape* tape = nullptr;
    uint64_t grad_pass = 0;
};

} // namespace detail

// Dense row-major tensor of 64-bit floats. Value-semantic handle: copies
// alias the same storage, clone() makes a detached deep copy.
class Tensor {
  public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value);
    static Tensor uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t rank() const { return static_cast<int64_t>(node_->shape.size()); }
    int64_t dim(int64_t i) const;
    int64_t size() const { return static_cast<int64_t>(node_->data.size()); }

    std::span<const double> data() const { return node_->data; }
    // Direct writes to storage; never recorded on a tape.
    std::span<double> mutable_data() { return node_->data; }

    // Value of a one-element tensor.
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool value) { node_->requires_grad = value; }

    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    // Deep copy, detached from any tape; keeps requires_grad.
    Tensor clone() const;

    detail::TensorNode* node() const { return node_.get(); }
    std::shared_ptr<detail::TensorNode> shared_node() const { return node_; }

  private:
    std::shared_ptr<detail::TensorNode> node_;
};

// Reverse-mode record of primitive ops. Constructing a Tape makes it the
// active tape of the current thread (ops record onto it when gradients are
// needed); destruction restores the previous one. A tape and the tensors on
// it belong to a single thread; independent tapes may run in parallel.
class Tape {
  public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Seeds d(loss)/d(loss) = 1 and sweeps recorded ops in reverse order.
    // Leaf gradients accumulate additively across repeated calls.
    void backward(const Tensor& loss);

    size_t size() const { return ops_.size(); }
    uint64_t pass() const { return pass_; }

    void record(std::function<void(uint64_t)> backward_fn);

    static Tape* active();

  private:
    std::vector<std::function<void(uint64_t)>> ops_;
    uint64_t pass_ = 0;
    Tape* prev_ = nullptr;
};

// Backward through the tape that produced `loss`.
void backward(const Tensor& loss);

// Suppresses recording for its scope (forward passes in evaluation paths).
class NoGrad {
  public:
    NoGrad();
    ~NoGrad();
    NoGrad(const NoGrad&) = delete;
    NoGrad& operator=(const NoGrad&) = delete;

  private:
    Tape* prev_;
};

namespace detail {

// Gradient buffer of `n` for accumulation during pass `pass`, or nullptr if
// this node does not participate in gradients.
double* grad_sink(TensorNode* n, uint64_t pass);

// Gradient of an op output if it was touched during pass `pass`.
const double* grad_source(const TensorNode* n, uint64_t pass);

inline bool grad_relevant(const TensorNode* n) { return n->requires_grad || n->on_tape; }

} // namespace detail

// FNV-1a over the raw bytes of the tensors' values, in order.
uint64_t data_checksum(const std::vector<Tensor>& tensors);

} // namespace peftser
