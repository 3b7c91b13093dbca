#include "dgqn/tape.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "dgqn/kernels.hpp"

namespace dgqn {

ValueId Trace::push(Node n) {
    nodes_.push_back(std::move(n));
    if (nodes_.size() > std::numeric_limits<ValueId>::max())
        throw std::length_error("Trace: too many nodes");
    return static_cast<ValueId>(nodes_.size() - 1);
}

ValueId Trace::constant(Tensor v) {
    Node n;
    n.value = std::move(v);
    return push(std::move(n));
}

ValueId Trace::param(const std::string& name, Tensor v) {
    if (name.empty()) throw std::invalid_argument("Trace::param: empty name");
    for (const Node& n : nodes_)
        if (n.param_name == name)
            throw std::invalid_argument("Trace::param: duplicate name '" + name + "'");
    Node n;
    n.value = std::move(v);
    n.requires_grad = true;
    n.param_name = name;
    return push(std::move(n));
}

const Tensor& Trace::value(ValueId id) const {
    if (id >= nodes_.size()) throw std::out_of_range("Trace::value: bad id");
    return nodes_[id].value;
}

Tensor Trace::grad(ValueId id) const {
    if (id >= nodes_.size()) throw std::out_of_range("Trace::grad: bad id");
    if (id < has_grad_.size() && has_grad_[id]) return grads_[id];
    return Tensor::zeros(nodes_[id].value.shape());
}

void Trace::accumulate(ValueId id, const Tensor& g) {
    if (!nodes_[id].value.same_shape(g))
        throw std::logic_error("Trace: gradient shape " + g.shape_str() + " does not match value " +
                               nodes_[id].value.shape_str());
    if (grads_.size() < nodes_.size()) {
        grads_.resize(nodes_.size());
        has_grad_.resize(nodes_.size(), false);
    }
    if (!has_grad_[id]) {
        grads_[id] = g;
        has_grad_[id] = true;
    } else {
        double* dst = grads_[id].data();
        const double* src = g.data();
        for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
    }
}

ValueId Trace::matmul(ValueId a, ValueId b, bool trans_a, bool trans_b) {
    Node n;
    n.value = kern::gemm(val(a), val(b), trans_a, trans_b);
    n.requires_grad = needs(a) || needs(b);
    if (n.requires_grad) {
        n.backward = [a, b, trans_a, trans_b](Trace& t, const Tensor& g) {
            if (t.needs(a)) {
                Tensor da = trans_a ? kern::gemm(t.val(b), g, trans_b, true)
                                    : kern::gemm(g, t.val(b), false, !trans_b);
                t.accumulate(a, da);
            }
            if (t.needs(b)) {
                Tensor db = trans_b ? kern::gemm(g, t.val(a), true, trans_a)
                                    : kern::gemm(t.val(a), g, !trans_a, false);
                t.accumulate(b, db);
            }
        };
    }
    return push(std::move(n));
}

ValueId Trace::masked_row_softmax(ValueId logits, Tensor mask) {
    Node n;
    n.value = kern::masked_row_softmax(val(logits), mask);
    n.requires_grad = needs(logits);
    if (n.requires_grad) {
        Tensor out = n.value;
        n.backward = [logits, mask = std::move(mask), out = std::move(out)](Trace& t,
                                                                            const Tensor& g) {
            t.accumulate(logits, kern::masked_row_softmax_grad(out, mask, g));
        };
    }
    return push(std::move(n));
}

ValueId Trace::softmax_over_axis(ValueId x, std::size_t axis) {
    const Tensor& in = val(x);
    if (in.rank() != 2 || axis > 1)
        throw std::invalid_argument("softmax_over_axis: expects rank-2 input and axis 0 or 1");
    const std::size_t rows = in.extent(0), cols = in.extent(1);
    Tensor out({rows, cols});
    const std::size_t slices = axis == 0 ? cols : rows;
    const std::size_t len = axis == 0 ? rows : cols;
    const std::size_t stride = axis == 0 ? cols : 1;
    for (std::size_t s = 0; s < slices; ++s) {
        const double* src = in.data() + (axis == 0 ? s : s * cols);
        double* dst = out.data() + (axis == 0 ? s : s * cols);
        double mx = src[0];
        for (std::size_t i = 1; i < len; ++i)
            if (src[i * stride] > mx) mx = src[i * stride];
        double denom = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            dst[i * stride] = std::exp(src[i * stride] - mx);
            denom += dst[i * stride];
        }
        for (std::size_t i = 0; i < len; ++i) dst[i * stride] /= denom;
    }
    Node n;
    n.value = out;
    n.requires_grad = needs(x);
    if (n.requires_grad) {
        n.backward = [x, axis, out = std::move(out), slices, len, stride](Trace& t,
                                                                          const Tensor& g) {
            Tensor dx(out.shape());
            const std::size_t cols = out.extent(1);
            for (std::size_t s = 0; s < slices; ++s) {
                const std::size_t base = axis == 0 ? s : s * cols;
                const double* y = out.data() + base;
                const double* gr = g.data() + base;
                double* d = dx.data() + base;
                double dot = 0.0;
                for (std::size_t i = 0; i < len; ++i) dot += gr[i * stride] * y[i * stride];
                for (std::size_t i = 0; i < len; ++i)
                    d[i * stride] = y[i * stride] * (gr[i * stride] - dot);
            }
            t.accumulate(x, dx);
        };
    }
    return push(std::move(n));
}

ValueId Trace::relu(ValueId x) {
    const Tensor& in = val(x);
    Tensor out(in.shape());
    for (std::size_t i = 0; i < in.numel(); ++i) out.data()[i] = in.data()[i] > 0.0 ? in.data()[i] : 0.0;
    Node n;
    n.value = std::move(out);
    n.requires_grad = needs(x);
    if (n.requires_grad) {
        n.backward = [x](Trace& t, const Tensor& g) {
            const Tensor& in = t.val(x);
            Tensor dx(in.shape());
            for (std::size_t i = 0; i < in.numel(); ++i)
                dx.data()[i] = in.data()[i] > 0.0 ? g.data()[i] : 0.0;
            t.accumulate(x, dx);
        };
    }
    return push(std::move(n));
}

ValueId Trace::sigmoid(ValueId x) {
    const Tensor& in = val(x);
    Tensor out(in.shape());
    for (std::size_t i = 0; i < in.numel(); ++i) out.data()[i] = 1.0 / (1.0 + std::exp(-in.data()[i]));
    Node n;
    n.value = out;
    n.requires_grad = needs(x);
    if (n.requires_grad) {
        n.backward = [x, out = std::move(out)](Trace& t, const Tensor& g) {
            Tensor dx(out.shape());
            for (std::size_t i = 0; i < out.numel(); ++i) {
                const double y = out.data()[i];
                dx.data()[i] = g.data()[i] * y * (1.0 - y);
            }
            t.accumulate(x, dx);
        };
    }
    return push(std::move(n));
}

ValueId Trace::conv2d(ValueId input, ValueId kernel) {
    Node n;
    n.value = kern::conv2d(val(input), val(kernel));
    n.requires_grad = needs(input) || needs(kernel);
    if (n.requires_grad) {
        n.backward = [input, kernel](Trace& t, const Tensor& g) {
            const Tensor& in = t.val(input);
            const Tensor& ker = t.val(kernel);
            if (t.needs(input))
                t.accumulate(input, kern::conv2d_input_grad(g, ker, in.extent(0), in.extent(1),
                                                            in.extent(2)));
            if (t.needs(kernel))
                t.accumulate(kernel, kern::conv2d_kernel_grad(in, g, ker.extent(0), ker.extent(1)));
        };
    }
    return push(std::move(n));
}

ValueId Trace::add(ValueId a, ValueId b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (!ta.same_shape(tb))
        throw std::invalid_argument("Trace::add: shapes " + ta.shape_str() + " and " +
                                    tb.shape_str() + " differ");
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < ta.numel(); ++i) out.data()[i] = ta.data()[i] + tb.data()[i];
    Node n;
    n.value = std::move(out);
    n.requires_grad = needs(a) || needs(b);
    if (n.requires_grad) {
        n.backward = [a, b](Trace& t, const Tensor& g) {
            if (t.needs(a)) t.accumulate(a, g);
            if (t.needs(b)) t.accumulate(b, g);
        };
    }
    return push(std::move(n));
}

ValueId Trace::add_bias_channels(ValueId x, ValueId bias) {
    const Tensor& in = val(x);
    const Tensor& b = val(bias);
    if (in.rank() != 3 || b.rank() != 1 || b.extent(0) != in.extent(2))
        throw std::invalid_argument("add_bias_channels: need H x W x C input and length-C bias");
    const std::size_t pix = in.extent(0) * in.extent(1), c = in.extent(2);
    Tensor out(in.shape());
    for (std::size_t p = 0; p < pix; ++p)
        for (std::size_t k = 0; k < c; ++k) out.data()[p * c + k] = in.data()[p * c + k] + b.data()[k];
    Node n;
    n.value = std::move(out);
    n.requires_grad = needs(x) || needs(bias);
    if (n.requires_grad) {
        n.backward = [x, bias, pix, c](Trace& t, const Tensor& g) {
            if (t.needs(x)) t.accumulate(x, g);
            if (t.needs(bias)) {
                Tensor db({c});
                for (std::size_t p = 0; p < pix; ++p)
                    for (std::size_t k = 0; k < c; ++k) db.data()[k] += g.data()[p * c + k];
                t.accumulate(bias, db);
            }
        };
    }
    return push(std::move(n));
}

ValueId Trace::reshape(ValueId x, std::vector<std::size_t> shape) {
    Node n;
    n.value = val(x).reshaped(shape);
    n.requires_grad = needs(x);
    if (n.requires_grad) {
        n.backward = [x](Trace& t, const Tensor& g) {
            t.accumulate(x, g.reshaped(t.val(x).shape()));
        };
    }
    return push(std::move(n));
}

ValueId Trace::concat_rows(const std::vector<ValueId>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_rows: empty operand list");
    std::size_t rows = 0;
    const std::size_t cols = val(xs[0]).extent(1);
    for (ValueId id : xs) {
        const Tensor& t = val(id);
        if (t.rank() != 2 || t.extent(1) != cols)
            throw std::invalid_argument("concat_rows: operands must be rank-2 with equal columns");
        rows += t.extent(0);
    }
    Tensor out({rows, cols});
    std::size_t off = 0;
    for (ValueId id : xs) {
        const Tensor& t = val(id);
        std::copy(t.data(), t.data() + t.numel(), out.data() + off);
        off += t.numel();
    }
    Node n;
    n.value = std::move(out);
    for (ValueId id : xs) n.requires_grad = n.requires_grad || needs(id);
    if (n.requires_grad) {
        n.backward = [xs](Trace& t, const Tensor& g) {
            std::size_t off = 0;
            for (ValueId id : xs) {
                const Tensor& v = t.val(id);
                if (t.needs(id)) {
                    Tensor part(v.shape());
                    std::copy(g.data() + off, g.data() + off + v.numel(), part.data());
                    t.accumulate(id, part);
                }
                off += v.numel();
            }
        };
    }
    return push(std::move(n));
}

ValueId Trace::pick(ValueId x, std::size_t flat_index) {
    const Tensor& in = val(x);
    if (flat_index >= in.numel())
        throw std::out_of_range("Trace::pick: index " + std::to_string(flat_index) +
                                " out of range for " + in.shape_str());
    Node n;
    n.value = Tensor::scalar(in.data()[flat_index]);
    n.requires_grad = needs(x);
    if (n.requires_grad) {
        n.backward = [x, flat_index](Trace& t, const Tensor& g) {
            Tensor dx = Tensor::zeros(t.val(x).shape());
            dx.data()[flat_index] = g.data()[0];
            t.accumulate(x, dx);
        };
    }
    return push(std::move(n));
}

ValueId Trace::sum(ValueId x) {
    const Tensor& in = val(x);
    double s = 0.0;
    for (std::size_t i = 0; i < in.numel(); ++i) s += in.data()[i];
    Node n;
    n.value = Tensor::scalar(s);
    n.requires_grad = needs(x);
    if (n.requires_grad) {
        n.backward = [x](Trace& t, const Tensor& g) {
            t.accumulate(x, Tensor::full(t.val(x).shape(), g.data()[0]));
        };
    }
    return push(std::move(n));
}

ValueId Trace::square(ValueId x) {
    const Tensor& in = val(x);
    Tensor out(in.shape());
    for (std::size_t i = 0; i < in.numel(); ++i) out.data()[i] = in.data()[i] * in.data()[i];
    Node n;
    n.value = std::move(out);
    n.requires_grad = needs(x);
    if (n.requires_grad) {
        n.backward = [x](Trace& t, const Tensor& g) {
            const Tensor& in = t.val(x);
            Tensor dx(in.shape());
            for (std::size_t i = 0; i < in.numel(); ++i) dx.data()[i] = 2.0 * in.data()[i] * g.data()[i];
            t.accumulate(x, dx);
        };
    }
    return push(std::move(n));
}

ValueId Trace::scale(ValueId x, double c) {
    const Tensor& in = val(x);
    Tensor out(in.shape());
    for (std::size_t i = 0; i < in.numel(); ++i) out.data()[i] = c * in.data()[i];
    Node n;
    n.value = std::move(out);
    n.requires_grad = needs(x);
    if (n.requires_grad) {
        n.backward = [x, c](Trace& t, const Tensor& g) {
            Tensor dx(g.shape());
            for (std::size_t i = 0; i < g.numel(); ++i) dx.data()[i] = c * g.data()[i];
            t.accumulate(x, dx);
        };
    }
    return push(std::move(n));
}

ValueId Trace::sub_from_const(double c, ValueId x) {
    const Tensor& in = val(x);
    if (!in.is_scalar()) throw std::invalid_argument("sub_from_const: operand must be scalar");
    Node n;
    n.value = Tensor::scalar(c - in.data()[0]);
    n.requires_grad = needs(x);
    if (n.requires_grad) {
        n.backward = [x](Trace& t, const Tensor& g) {
            t.accumulate(x, Tensor::scalar(-g.data()[0]));
        };
    }
    return push(std::move(n));
}

void Trace::backward(ValueId root) {
    if (root >= nodes_.size()) throw std::out_of_range("Trace::backward: bad root id");
    if (!nodes_[root].value.is_scalar())
        throw std::invalid_argument("Trace::backward: root must be scalar, got " +
                                    nodes_[root].value.shape_str());
    grads_.assign(nodes_.size(), Tensor());
    has_grad_.assign(nodes_.size(), false);
    accumulate(root, Tensor::scalar(1.0));
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        const ValueId id = static_cast<ValueId>(i);
        if (!has_grad_[id] || !nodes_[id].backward) continue;
        nodes_[id].backward(*this, grads_[id]);
    }
}

std::map<std::string, Tensor> Trace::param_grads() const {
    std::map<std::string, Tensor> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].param_name.empty()) continue;
        out.emplace(nodes_[i].param_name, grad(static_cast<ValueId>(i)));
    }
    return out;
}

}  // namespace dgqn
