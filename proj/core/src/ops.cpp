#include "peftser/ops.hpp"

#include <algorithm>
#include <cmath>

namespace peftser {

using detail::grad_relevant;
using detail::grad_sink;
using detail::grad_source;
using detail::TensorNode;

namespace kernels {

void matmul_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

void matmul_nt_acc(const double* gc, const double* b, double* ga, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* grow = gc + i * n;
        double* garow = ga + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double s = 0.0;
            for (int64_t j = 0; j < n; ++j) {
                s += grow[j] * brow[j];
            }
            garow[p] += s;
        }
    }
}

void matmul_tn_acc(const double* a, const double* gc, double* gb, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* grow = gc + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            double* gbrow = gb + p * n;
            for (int64_t j = 0; j < n; ++j) {
                gbrow[j] += av * grow[j];
            }
        }
    }
}

} // namespace kernels

namespace {

constexpr double kGeluCoeff = 0.7978845608028654; // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;

Tape* tape_for(std::initializer_list<const Tensor*> inputs) {
    Tape* tape = Tape::active();
    if (!tape) {
        return nullptr;
    }
    for (const Tensor* t : inputs) {
        if (grad_relevant(t->node())) {
            return tape;
        }
    }
    return nullptr;
}

Tape* tape_for_list(const std::vector<Tensor>& inputs) {
    Tape* tape = Tape::active();
    if (!tape) {
        return nullptr;
    }
    for (const Tensor& t : inputs) {
        if (grad_relevant(t.node())) {
            return tape;
        }
    }
    return nullptr;
}

void mark_output(Tensor& out, Tape* tape) {
    out.node()->on_tape = true;
    out.node()->tape = tape;
}

// Tile size of `b` under trailing-dimension broadcast into `a`.
int64_t broadcast_tile(const Shape& a, const Shape& b, const char* op) {
    if (a == b) {
        return numel(b);
    }
    if (numel(b) == 1) {
        return 1;
    }
    if (b.size() <= a.size() && std::equal(b.begin(), b.end(), a.end() - b.size())) {
        return numel(b);
    }
    throw DimensionError(std::string(op) + ": shape " + shape_str(b) +
                         " does not broadcast into " + shape_str(a));
}

struct AxisSpan {
    int64_t outer, len, inner;
};

AxisSpan axis_span(const Shape& shape, int64_t axis, const char* op) {
    const int64_t r = static_cast<int64_t>(shape.size());
    if (axis < 0) {
        axis += r;
    }
    if (axis < 0 || axis >= r) {
        throw DimensionError(std::string(op) + ": axis out of range for " + shape_str(shape));
    }
    AxisSpan s{1, shape[static_cast<size_t>(axis)], 1};
    for (int64_t i = 0; i < axis; ++i) {
        s.outer *= shape[static_cast<size_t>(i)];
    }
    for (int64_t i = axis + 1; i < r; ++i) {
        s.inner *= shape[static_cast<size_t>(i)];
    }
    return s;
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    }
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = Tensor::zeros({m, n});
    kernels::matmul_nn(a.data().data(), b.data().data(), out.mutable_data().data(), m, k, n);
    if (Tape* tape = tape_for({&a, &b})) {
        mark_output(out, tape);
        auto an = a.shared_node(), bn = b.shared_node(), on = out.shared_node();
        tape->record([an, bn, on, m, k, n](uint64_t pass) {
            const double* go = grad_source(on.get(), pass);
            if (!go) {
                return;
            }
            if (double* ga = grad_sink(an.get(), pass)) {
                kernels::matmul_nt_acc(go, bn->data.data(), ga, m, k, n);
            }
            if (double* gb = grad_sink(bn.get(), pass)) {
                kernels::matmul_tn_acc(an->data.data(), go, gb, m, k, n);
            }
        });
    }
    return out;
}

Tensor transpose(const Tensor& x) {
    if (x.rank() != 2) {
        throw DimensionError("transpose: expected rank 2, got " + shape_str(x.shape()));
    }
    const int64_t r = x.dim(0), c = x.dim(1);
    Tensor out = Tensor::zeros({c, r});
    const auto* xd = x.data().data();
    auto* od = out.mutable_data().data();
    for (int64_t i = 0; i < r; ++i) {
        for (int64_t j = 0; j < c; ++j) {
            od[j * r + i] = xd[i * c + j];
        }
    }
    if (Tape* tape = tape_for({&x})) {
        mark_output(out, tape);
        auto xn = x.shared_node(), on = out.shared_node();
        tape->record([xn, on, r, c](uint64_t pass) {
            const double* go = grad_source(on.get(), pass);
            if (!go) {
                return;
            }
            if (double* gx = grad_sink(xn.get(), pass)) {
                for (int64_t i = 0; i < r; ++i) {
                    for (int64_t j = 0; j < c; ++j) {
                        gx[i * c + j] += go[j * r + i];
                    }
                }
            }
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    const int64_t nb = broadcast_tile(a.shape(), b.shape(), "add");
    const int64_t na = a.size();
    Tensor out = Tensor::zeros(a.shape());
    const auto* ad = a.data().data();
    const auto* bd = b.data().data();
    auto* od = out.mutable_data().data();
    for (int64_t i = 0; i < na; ++i) {
        od[i] = ad[i] + bd[i % nb];
    }
    if (Tape* tape = tape_for({&a, &b})) {
        mark_output(out, tape);
        auto an = a.shared_node(), bn = b.shared_node(), on = out.shared_node();
        tape->record([an, bn, on, na, nb](uint64_t pass) {
            const double* go = grad_source(on.get(), pass);
            if (!go) {
                return;
            }
            if (double* ga = grad_sink(an.get(), pass)) {
                for (int64_t i = 0; i < na; ++i) {
                    ga[i] += go[i];
                }
            }
            if (double* gb = grad_sink(bn.get(), pass)) {
                for (int64_t i = 0; i < na; ++i) {
                    gb[i % nb] += go[i];
                }
            }
        });
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    const int64_t nb = broadcast_tile(a.shape(), b.shape(), "sub");
    const int64_t na = a.size();
    Tensor out = Tensor::zeros(a.shape());
    const auto* ad = a.data().data();
    const auto* bd = b.data().data();
    auto* od = out.mutable_data().data();
    for (int64_t i = 0; i < na; ++i) {
        od[i] = ad[i] - bd[i % nb];
    }
    if (Tape* tape = tape_for({&a, &b})) {
        mark_output(out, tape);
        auto an = a.shared_node(), bn = b.shared_node(), on = out.shared_node();
        tape->record([an, bn, on, na, nb](uint64_t pass) {
            const double* go = grad_source(on.get(), pass);
            if (!go) {
                return;
            }
            if (double* ga = grad_sink(an.get(), pass)) {
                for (int64_t i = 0; i < na; ++i) {
                    ga[i] += go[i];
                }
            }
            if (double* gb = grad_sink(bn.get(), pass)) {
                for (int64_t i = 0; i < na; ++i) {
                    gb[i % nb] -= go[i];
                }
            }
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    const int64_t nb = broadcast_tile(a.shape(), b.shape(), "mul");
    const int64_t na = a.size();
    Tensor out = Tensor::zeros(a.shape());
    const auto* ad = a.data().data();
    const auto* bd = b.data().data();
    auto* od = out.mutable_data().data();
    for (int64_t i = 0; i < na; ++i) {
        od[i] = ad[i] * bd[i % nb];
    }
    if (Tape* tape = tape_for({&a, &b})) {
        mark_output(out, tape);
        auto an = a.shared_node(), bn = b.shared_node(), on = out.shared_node();
        tape->record([an, bn, on, na, nb](uint64_t pass) {
            const double* go = grad_source(on.get(), pass);
            if (!go) {
                return;
            }
            if (double* ga = grad_sink(an.get(), pass)) {
                for (int64_t i = 0; i < na; ++i) {
                    ga[i] += go[i] * bn->data[static_cast<size_t>(i % nb)];
                }
            }
            if (double* gb = grad_sink(bn.get(), pass)) {
                for (int64_t i = 0; i < na; ++i) {
                    gb[i % nb] += go[i] * an->data[static_cast<size_t>(i)];
                }
            }
        });
    }
    return out;
}

Tensor scale(const Tensor& x, double factor) {
    const int64_t n = x.size();
    Tensor out = Tensor::zeros(x.shape());
    const auto* xd = x.data().data();
    auto* od = out.mutable_data().data();
    for (int64_t i = 0; i < n; ++i) {
        od[i] = factor * xd[i];
    }
    if (Tape* tape = tape_for({&x})) {
        mark_output(out, tape);
        auto xn = x.shared_node(), on = out.shared_node();
        tape->record([xn, on, n, factor](uint64_t pass) {
            const double* go = grad_source(on.get(), pass);
            if (!go) {
                return;
            }
            if (double* gx = grad_sink(xn.get(), pass)) {
                for (int64_t i = 0; i < n; ++i) {
                    gx[i] += factor * go[i];
                }
            }
        });
    }
    return out;
}

Tensor relu(const Tensor& x) {
    const int64_t n = x.size();
    Tensor out = Tensor::zeros(x.shape());
    const auto* xd = x.data().data();
    auto* od = out.mutable_data().data();
    for (int64_t i = 0; i < n; ++i) {
        od[i] = xd[i] > 0.0 ? xd[i] : 0.0;
    }
    if (Tape* tape = tape_for({&x})) {
        mark_output(out, tape);
        auto xn = x.shared_node(), on = out.shared_node();
        tape->record([xn, on, n](uint64_t pass) {
            const double* go = grad_source(on.get(), pass);
            if (!go) {
                return;
            }
            if (double* gx = grad_sink(xn.get(), pass)) {
                // subgradient at exactly 0 is 0
                for (int64_t i = 0; i < n; ++i) {
                    gx[i] += xn->data[static_cast<size_t>(i)] > 0.0 ? go[i] : 0.0;
                }
            }
        });
    }
    return out;
}

Tensor gelu(const Tensor& x) {
    const int64_t n = x.size();
    Tensor out = Tensor::zeros(x.shape());
    const auto* xd = x.data().data();
    auto* od = out.mutable_data().data();
    for (int64_t i = 0; i < n; ++i) {
        const double v = xd[i];
        const double u = kGeluCoeff * (v + kGeluCubic * v * v * v);
        od[i] = 0.5 * v * (1.0 + std::tanh(u));
    }
    if (Tape* tape = tape_for({&x})) {
        mark_output(out, tape);
        auto xn = x.shared_node(), on = out.shared_node();
        tape->record([xn, on, n](uint64_t pass) {
            const double* go = grad_source(on.get(), pass);
            if (!go) {
                return;
            }
            if (double* gx = grad_sink(xn.get(), pass)) {
                for (int64_t i = 0; i < n; ++i) {
                    const double v = xn->data[static_cast<size_t>(i)];
                    const double u = kGeluCoeff * (v + kGeluCubic * v * v * v);
                    const double t = std::tanh(u);
                    const double du = kGeluCoeff * (1.0 + 3.0 * kGeluCubic * v * v);
                    gx[i] += go[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
                }
            }
        });
    }
    return out;
}

Tensor softmax(const Tensor& x, int64_t axis) {
    const AxisSpan s = axis_span(x.shape(), axis, "softmax");
    Tensor out = Tensor::zeros(x.shape());
    const auto* xd = x.data().data();
    auto* od = out.mutable_data().data();
    for (int64_t o = 0; o < s.outer; ++o) {
        for (int64_t in = 0; in < s.inner; ++in) {
            const int64_t base = o * s.len * s.inner + in;
            double hi = xd[base];
            for (int64_t t = 1; t < s.len; ++t) {
                hi = std::max(hi, xd[base + t * s.inner]);
            }
            double total = 0.0;
            for (int64_t t = 0; t < s.len; ++t) {
                const double e = std::exp(xd[base + t * s.inner] - hi);
                od[base + t * s.inner] = e;
                total += e;
            }
            for (int64_t t = 0; t < s.len; ++t) {
                od[base + t * s.inner] /= total;
            }
        }
    }
    if (Tape* tape = tape_for({&x})) {
        mark_output(out, tape);
        auto xn = x.shared_node(), on = out.shared_node();
        tape->record([xn, on, s](uint64_t pass) {
            const double* go = grad_source(on.get(), pass);
            if (!go) {
                return;
            }
            double* gx = grad_sink(xn.get(), pass);
            if (!gx) {
                return;
            }
            const double* y = on->data.data();
            for (int64_t o = 0; o < s.outer; ++o) {
                for (int64_t in = 0; in < s.inner; ++in) {
                    const int64_t base = o * s.len * s.inner + in;
                    double dot = 0.0;
                    for (int64_t t = 0; t < s.len; ++t) {
                        const int64_t p = base + t * s.inner;
                        dot += go[p] * y[p];
                    }
                    for (int64_t t = 0; t < s.len; ++t) {
                        const int64_t p = base + t * s.inner;
                        gx[p] += y[p] * (go[p] - dot);
                    }
                }
            }
        });
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (x.rank() < 1) {
        throw DimensionError("layer_norm: input must have rank >= 1");
    }
    const int64_t d = x.dim(-1);
    if (gain.rank() != 1 || gain.dim(0) != d || bias.rank() != 1 || bias.dim(0) != d) {
        throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                             shape_str(bias.shape()) + " must be [" + std::to_string(d) +
                             "] for input " + shape_str(x.shape()));
    }
    const int64_t rows = x.size() / d;
    Tensor out = Tensor::zeros(x.shape());
    std::vector<double> xhat(static_cast<size_t>(x.size()));
    std::vector<double> inv_std(static_cast<size_t>(rows));
    const auto* xd = x.data().data();
    const auto* gd = gain.data().data();
    const auto* bd = bias.data().data();
    auto* od = out.mutable_data().data();
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = xd + r * d;
        double mu = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            mu += xr[j];
        }
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            const double c = xr[j] - mu;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<size_t>(r)] = inv;
        for (int64_t j = 0; j < d; ++j) {
            const double h = (xr[j] - mu) * inv;
            xhat[static_cast<size_t>(r * d + j)] = h;
            od[r * d + j] = gd[j] * h + bd[j];
        }
    }
    if (Tape* tape = tape_for({&x, &gain, &bias})) {
        mark_output(out, tape);
        auto xn = x.shared_node(), gn = gain.shared_node(), bn = bias.shared_node(),
             on = out.shared_node();
        tape->record([xn, gn, bn, on, rows, d, xhat = std::move(xhat),
                      inv_std = std::move(inv_std)](uint64_t pass) {
            const double* go = grad_source(on.get(), pass);
            if (!go) {
                return;
            }
            double* gx = grad_sink(xn.get(), pass);
            double* gg = grad_sink(gn.get(), pass);
            double* gb = grad_sink(bn.get(), pass);
            const double* gain_d = gn->data.data();
            for (int64_t r = 0; r < rows; ++r) {
                const double* gor = go + r * d;
                const double* hr = xhat.data() + r * d;
                if (gg || gb) {
                    for (int64_t j = 0; j < d; ++j) {
                        if (gg) {
                            gg[j] += gor[j] * hr[j];
                        }
                        if (gb) {
                            gb[j] += gor[j];
                        }
                    }
                }
                if (gx) {
                    double mean_h = 0.0, mean_hx = 0.0;
                    for (int64_t j = 0; j < d; ++j) {
                        const double w = gain_d[j] * gor[j];
                        mean_h += w;
                        mean_hx += w * hr[j];
                    }
                    mean_h /= static_cast<double>(d);
                    mean_hx /= static_cast<double>(d);
                    const double inv = inv_std[static_cast<size_t>(r)];
                    for (int64_t j = 0; j < d; ++j) {
                        gx[r * d + j] +=
                            inv * (gain_d[j] * gor[j] - mean_h - hr[j] * mean_hx);
                    }
                }
            }
        });
    }
    return out;
}

Tensor mean(const Tensor& x, int64_t axis) {
    const AxisSpan s = axis_span(x.shape(), axis, "mean");
    if (s.len == 0) {
        throw DimensionError("mean: cannot reduce an empty axis of " + shape_str(x.shape()));
    }
    Shape out_shape;
    const int64_t r = x.rank();
    const int64_t norm_axis = axis < 0 ? axis + r : axis;
    for (int64_t i = 0; i < r; ++i) {
        if (i != norm_axis) {
            out_shape.push_back(x.shape()[static_cast<size_t>(i)]);
        }
    }
    if (out_shape.empty()) {
        out_shape = {1};
    }
    Tensor out = Tensor::zeros(out_shape);
    const auto* xd = x.data().data();
    auto* od = out.mutable_data().data();
    for (int64_t o = 0; o < s.outer; ++o) {
        for (int64_t in = 0; in < s.inner; ++in) {
            double acc = 0.0;
            const int64_t base = o * s.len * s.inner + in;
            for (int64_t t = 0; t < s.len; ++t) {
                acc += xd[base + t * s.inner];
            }
            od[o * s.inner + in] = acc / static_cast<double>(s.len);
        }
    }
    if (Tape* tape = tape_for({&x})) {
        mark_output(out, tape);
        auto xn = x.shared_node(), on = out.shared_node();
        tape->record([xn, on, s](uint64_t pass) {
            const double* go = grad_source(on.get(), pass);
            if (!go) {
                return;
            }
            if (double* gx = grad_sink(xn.get(), pass)) {
                for (int64_t o = 0; o < s.outer; ++o) {
                    for (int64_t in = 0; in < s.inner; ++in) {
                        const double g = go[o * s.inner + in] / static_cast<double>(s.len);
                        const int64_t base = o * s.len * s.inner + in;
                        for (int64_t t = 0; t < s.len; ++t) {
                            gx[base + t * s.inner] += g;
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor sum(const Tensor& x) {
    const int64_t n = x.size();
    double acc = 0.0;
    const auto* xd = x.data().data();
    for (int64_t i = 0; i < n; ++i) {
        acc += xd[i];
    }
    Tensor out = Tensor::scalar(acc);
    if (Tape* tape = tape_for({&x})) {
        mark_output(out, tape);
        auto xn = x.shared_node(), on = out.shared_node();
        tape->record([xn, on, n](uint64_t pass) {
            const double* go = grad_source(on.get(), pass);
            if (!go) {
                return;
            }
            if (double* gx = grad_sink(xn.get(), pass)) {
                for (int64_t i = 0; i < n; ++i) {
                    gx[i] += go[0];
                }
            }
        });
    }
    return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int64_t>& labels) {
    if (logits.rank() != 2) {
        throw DimensionError("cross_entropy: logits must be [n x C], got " +
                             shape_str(logits.shape()));
    }
    const int64_t n = logits.dim(0), c = logits.dim(1);
    if (static_cast<int64_t>(labels.size()) != n) {
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) +
                             " labels for logits " + shape_str(logits.shape()));
    }
    for (int64_t label : labels) {
        if (label < 0 || label >= c) {
            throw DataError("cross_entropy: label " + std::to_string(label) +
                            " outside [0, " + std::to_string(c) + ")");
        }
    }
    const auto* xd = logits.data().data();
    std::vector<double> probs(static_cast<size_t>(n * c));
    double loss = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double* row = xd + i * c;
        double hi = row[0];
        for (int64_t j = 1; j < c; ++j) {
            hi = std::max(hi, row[j]);
        }
        double total = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            const double e = std::exp(row[j] - hi);
            probs[static_cast<size_t>(i * c + j)] = e;
            total += e;
        }
        for (int64_t j = 0; j < c; ++j) {
            probs[static_cast<size_t>(i * c + j)] /= total;
        }
        loss += hi + std::log(total) - row[labels[static_cast<size_t>(i)]];
    }
    loss /= static_cast<double>(n);
    Tensor out = Tensor::scalar(loss);
    if (Tape* tape = tape_for({&logits})) {
        mark_output(out, tape);
        auto xn = logits.shared_node(), on = out.shared_node();
        tape->record(
            [xn, on, n, c, probs = std::move(probs), labels](uint64_t pass) {
                const double* go = grad_source(on.get(), pass);
                if (!go) {
                    return;
                }
                if (double* gx = grad_sink(xn.get(), pass)) {
                    const double g = go[0] / static_cast<double>(n);
                    for (int64_t i = 0; i < n; ++i) {
                        for (int64_t j = 0; j < c; ++j) {
                            const double onehot =
                                j == labels[static_cast<size_t>(i)] ? 1.0 : 0.0;
                            gx[i * c + j] +=
                                g * (probs[static_cast<size_t>(i * c + j)] - onehot);
                        }
                    }
                }
            });
    }
    return out;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    if (a.rank() < 1 || a.rank() != b.rank() ||
        !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1)) {
        throw DimensionError("concat_rows: shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " differ beyond the first axis");
    }
    Shape out_shape = a.shape();
    out_shape[0] += b.shape()[0];
    Tensor out = Tensor::zeros(out_shape);
    auto* od = out.mutable_data().data();
    std::copy(a.data().begin(), a.data().end(), od);
    std::copy(b.data().begin(), b.data().end(), od + a.size());
    if (Tape* tape = tape_for({&a, &b})) {
        mark_output(out, tape);
        auto an = a.shared_node(), bn = b.shared_node(), on = out.shared_node();
        const int64_t na = a.size(), nb = b.size();
        tape->record([an, bn, on, na, nb](uint64_t pass) {
            const double* go = grad_source(on.get(), pass);
            if (!go) {
                return;
            }
            if (double* ga = grad_sink(an.get(), pass)) {
                for (int64_t i = 0; i < na; ++i) {
                    ga[i] += go[i];
                }
            }
            if (double* gb = grad_sink(bn.get(), pass)) {
                for (int64_t i = 0; i < nb; ++i) {
                    gb[i] += go[na + i];
                }
            }
        });
    }
    return out;
}

Tensor slice_rows(const Tensor& x, int64_t start, int64_t len) {
    if (x.rank() < 1 || start < 0 || len < 0 || start + len > x.dim(0)) {
        throw DimensionError("slice_rows: range [" + std::to_string(start) + ", " +
                             std::to_string(start + len) + ") invalid for " +
                             shape_str(x.shape()));
    }
    const int64_t row = x.dim(0) == 0 ? 0 : x.size() / x.dim(0);
    Shape out_shape = x.shape();
    out_shape[0] = len;
    Tensor out = Tensor::zeros(out_shape);
    std::copy(x.data().begin() + start * row, x.data().begin() + (start + len) * row,
              out.mutable_data().begin());
    if (Tape* tape = tape_for({&x})) {
        mark_output(out, tape);
        auto xn = x.shared_node(), on = out.shared_node();
        const int64_t offset = start * row, count = len * row;
        tape->record([xn, on, offset, count](uint64_t pass) {
            const double* go = grad_source(on.get(), pass);
            if (!go) {
                return;
            }
            if (double* gx = grad_sink(xn.get(), pass)) {
                for (int64_t i = 0; i < count; ++i) {
                    gx[offset + i] += go[i];
                }
            }
        });
    }
    return out;
}

Tensor slice_cols(const Tensor& x, int64_t start, int64_t len) {
    if (x.rank() != 2 || start < 0 || len < 0 || start + len > x.dim(1)) {
        throw DimensionError("slice_cols: range [" + std::to_string(start) + ", " +
                             std::to_string(start + len) + ") invalid for " +
                             shape_str(x.shape()));
    }
    const int64_t rows = x.dim(0), cols = x.dim(1);
    Tensor out = Tensor::zeros({rows, len});
    const auto* xd = x.data().data();
    auto* od = out.mutable_data().data();
    for (int64_t i = 0; i < rows; ++i) {
        for (int64_t j = 0; j < len; ++j) {
            od[i * len + j] = xd[i * cols + start + j];
        }
    }
    if (Tape* tape = tape_for({&x})) {
        mark_output(out, tape);
        auto xn = x.shared_node(), on = out.shared_node();
        tape->record([xn, on, rows, cols, start, len](uint64_t pass) {
            const double* go = grad_source(on.get(), pass);
            if (!go) {
                return;
            }
            if (double* gx = grad_sink(xn.get(), pass)) {
                for (int64_t i = 0; i < rows; ++i) {
                    for (int64_t j = 0; j < len; ++j) {
                        gx[i * cols + start + j] += go[i * len + j];
                    }
                }
            }
        });
    }
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw UsageError("concat_cols: no tensors given");
    }
    const int64_t rows = parts.front().rank() == 2 ? parts.front().dim(0) : -1;
    int64_t total = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != 2 || p.dim(0) != rows) {
            throw DimensionError("concat_cols: shape " + shape_str(p.shape()) +
                                 " incompatible with " + shape_str(parts.front().shape()));
        }
        total += p.dim(1);
    }
    Tensor out = Tensor::zeros({rows, total});
    auto* od = out.mutable_data().data();
    int64_t col = 0;
    for (const Tensor& p : parts) {
        const int64_t c = p.dim(1);
        const auto* pd = p.data().data();
        for (int64_t i = 0; i < rows; ++i) {
            for (int64_t j = 0; j < c; ++j) {
                od[i * total + col + j] = pd[i * c + j];
            }
        }
        col += c;
    }
    if (Tape* tape = tape_for_list(parts)) {
        mark_output(out, tape);
        std::vector<std::shared_ptr<detail::TensorNode>> nodes;
        std::vector<int64_t> widths;
        for (const Tensor& p : parts) {
            nodes.push_back(p.shared_node());
            widths.push_back(p.dim(1));
        }
        auto on = out.shared_node();
        tape->record([nodes, widths, on, rows, total](uint64_t pass) {
            const double* go = grad_source(on.get(), pass);
            if (!go) {
                return;
            }
            int64_t col = 0;
            for (size_t p = 0; p < nodes.size(); ++p) {
                const int64_t c = widths[p];
                if (double* gp = grad_sink(nodes[p].get(), pass)) {
                    for (int64_t i = 0; i < rows; ++i) {
                        for (int64_t j = 0; j < c; ++j) {
                            gp[i * c + j] += go[i * total + col + j];
                        }
                    }
                }
                col += c;
            }
        });
    }
    return out;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) {
        throw UsageError("stack_rows: no tensors given");
    }
    const int64_t d = rows.front().rank() == 1 ? rows.front().dim(0) : -1;
    for (const Tensor& r : rows) {
        if (r.rank() != 1 || r.dim(0) != d) {
            throw DimensionError("stack_rows: expected rank-1 tensors of equal length, got " +
                                 shape_str(r.shape()));
        }
    }
    const int64_t k = static_cast<int64_t>(rows.size());
    Tensor out = Tensor::zeros({k, d});
    auto* od = out.mutable_data().data();
    for (int64_t i = 0; i < k; ++i) {
        std::copy(rows[static_cast<size_t>(i)].data().begin(),
                  rows[static_cast<size_t>(i)].data().end(), od + i * d);
    }
    if (Tape* tape = tape_for_list(rows)) {
        mark_output(out, tape);
        std::vector<std::shared_ptr<detail::TensorNode>> nodes;
        for (const Tensor& r : rows) {
            nodes.push_back(r.shared_node());
        }
        auto on = out.shared_node();
        tape->record([nodes, on, d](uint64_t pass) {
            const double* go = grad_source(on.get(), pass);
            if (!go) {
                return;
            }
            for (size_t i = 0; i < nodes.size(); ++i) {
                if (double* gr = grad_sink(nodes[i].get(), pass)) {
                    for (int64_t j = 0; j < d; ++j) {
                        gr[j] += go[static_cast<int64_t>(i) * d + j];
                    }
                }
            }
        });
    }
    return out;
}

Tensor reshape(const Tensor& x, Shape new_shape) {
    if (numel(new_shape) != x.size()) {
        throw DimensionError("reshape: " + shape_str(x.shape()) + " has " +
                             std::to_string(x.size()) + " values, target " +
                             shape_str(new_shape) + " needs " +
                             std::to_string(numel(new_shape)));
    }
    Tensor out(std::move(new_shape), std::vector<double>(x.data().begin(), x.data().end()));
    if (Tape* tape = tape_for({&x})) {
        mark_output(out, tape);
        auto xn = x.shared_node(), on = out.shared_node();
        const int64_t n = x.size();
        tape->record([xn, on, n](uint64_t pass) {
            const double* go = grad_source(on.get(), pass);
            if (!go) {
                return;
            }
            if (double* gx = grad_sink(xn.get(), pass)) {
                for (int64_t i = 0; i < n; ++i) {
                    gx[i] += go[i];
                }
            }
        });
    }
    return out;
}

} // namespace peftser
