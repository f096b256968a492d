#include "peftser/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

namespace peftser {

namespace {
thread_local Tape* g_active_tape = nullptr;
} // namespace

int64_t numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) {
            os << "x";
        }
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
    if (numel(shape) != static_cast<int64_t>(data.size())) {
        throw DimensionError("tensor: shape " + shape_str(shape) + " does not match " +
                             std::to_string(data.size()) + " values");
    }
    node_ = std::make_shared<detail::TensorNode>();
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const int64_t n = numel(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const int64_t n = numel(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), value), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad) {
    const int64_t n = numel(shape);
    std::vector<double> data(static_cast<size_t>(n));
    for (double& v : data) {
        v = rng.uniform(lo, hi);
    }
    return Tensor(std::move(shape), std::move(data), requires_grad);
}

int64_t Tensor::dim(int64_t i) const {
    const int64_t r = rank();
    if (i < 0) {
        i += r;
    }
    if (i < 0 || i >= r) {
        throw DimensionError("tensor: axis " + std::to_string(i) + " out of range for " +
                             shape_str(shape()));
    }
    return node_->shape[static_cast<size_t>(i)];
}

double Tensor::item() const {
    if (size() != 1) {
        throw UsageError("item: tensor " + shape_str(shape()) + " is not a scalar");
    }
    return node_->data[0];
}

std::span<const double> Tensor::grad() const {
    static const std::vector<double> empty;
    return node_->grad.empty() ? std::span<const double>(empty) : std::span<const double>(node_->grad);
}

std::span<double> Tensor::mutable_grad() {
    if (node_->grad.empty()) {
        node_->grad.assign(node_->data.size(), 0.0);
    }
    return node_->grad;
}

void Tensor::zero_grad() {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
    Tensor out(node_->shape, node_->data, node_->requires_grad);
    return out;
}

Tape::Tape() {
    prev_ = g_active_tape;
    g_active_tape = this;
}

Tape::~Tape() { g_active_tape = prev_; }

NoGrad::NoGrad() {
    prev_ = g_active_tape;
    g_active_tape = nullptr;
}

NoGrad::~NoGrad() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void(uint64_t)> backward_fn) {
    ops_.push_back(std::move(backward_fn));
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw UsageError("backward: loss must be a scalar tensor");
    }
    detail::TensorNode* n = loss.node();
    if (!n->on_tape || n->tape != this) {
        throw UsageError("backward: loss was not produced on this tape");
    }
    ++pass_;
    double* seed = detail::grad_sink(n, pass_);
    seed[0] += 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
        (*it)(pass_);
    }
}

void backward(const Tensor& loss) {
    if (!loss.defined() || !loss.node()->on_tape || loss.node()->tape == nullptr) {
        throw UsageError("backward: loss is not on a tape");
    }
    loss.node()->tape->backward(loss);
}

namespace detail {

double* grad_sink(TensorNode* n, uint64_t pass) {
    if (!grad_relevant(n)) {
        return nullptr;
    }
    if (n->grad.empty()) {
        n->grad.assign(n->data.size(), 0.0);
        n->grad_pass = pass;
    } else if (n->on_tape && n->grad_pass != pass) {
        std::fill(n->grad.begin(), n->grad.end(), 0.0);
        n->grad_pass = pass;
    } else {
        n->grad_pass = pass;
    }
    return n->grad.data();
}

const double* grad_source(const TensorNode* n, uint64_t pass) {
    if (n->grad.empty()) {
        return nullptr;
    }
    if (n->on_tape && n->grad_pass != pass) {
        return nullptr;
    }
    return n->grad.data();
}

} // namespace detail

uint64_t data_checksum(const std::vector<Tensor>& tensors) {
    uint64_t hash = 1469598103934665603ull;
    for (const Tensor& t : tensors) {
        const auto values = t.data();
        const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
        const size_t n = values.size() * sizeof(double);
        for (size_t i = 0; i < n; ++i) {
            hash ^= bytes[i];
            hash *= 1099511628211ull;
        }
    }
    return hash;
}

} // namespace peftser
