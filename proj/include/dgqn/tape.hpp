#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dgqn/tensor.hpp"

namespace dgqn {

using ValueId = std::uint32_t;

/// Records a forward computation and replays it in reverse for gradients.
/// Ids are issued in construction order; every op only references earlier
/// ids, so a single reverse sweep visits each recorded op exactly once.
class Trace {
public:
    ValueId constant(Tensor v);
    /// Registers a differentiable leaf. Names must be unique within a trace.
    ValueId param(const std::string& name, Tensor v);

    const Tensor& value(ValueId id) const;
    /// Gradient of the last backward() root w.r.t. this id (zeros if unreached).
    Tensor grad(ValueId id) const;

    ValueId matmul(ValueId a, ValueId b, bool trans_a = false, bool trans_b = false);
    ValueId masked_row_softmax(ValueId logits, Tensor mask);
    ValueId softmax_over_axis(ValueId x, std::size_t axis);
    ValueId relu(ValueId x);
    ValueId sigmoid(ValueId x);
    ValueId conv2d(ValueId input, ValueId kernel);
    ValueId add(ValueId a, ValueId b);
    /// x: H x W x C plus a length-C bias broadcast over positions.
    ValueId add_bias_channels(ValueId x, ValueId bias);
    ValueId reshape(ValueId x, std::vector<std::size_t> shape);
    /// Stacks rank-2 operands with equal column counts along axis 0.
    ValueId concat_rows(const std::vector<ValueId>& xs);
    /// Extracts one element (flat index) as a scalar.
    ValueId pick(ValueId x, std::size_t flat_index);
    ValueId sum(ValueId x);
    ValueId square(ValueId x);
    ValueId scale(ValueId x, double c);
    /// Scalar c minus scalar x.
    ValueId sub_from_const(double c, ValueId x);

    /// Accumulates gradients for everything reachable from a scalar root.
    void backward(ValueId root);

    /// name -> gradient for every registered param (zeros if unreached).
    std::map<std::string, Tensor> param_grads() const;

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        bool requires_grad = false;
        std::string param_name;
        std::function<void(Trace&, const Tensor&)> backward;
    };

    ValueId push(Node n);
    void accumulate(ValueId id, const Tensor& g);
    const Tensor& val(ValueId id) const { return nodes_[id].value; }
    bool needs(ValueId id) const { return nodes_[id].requires_grad; }

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    std::vector<bool> has_grad_;
};

}  // namespace dgqn
