#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "m2snet/errors.hpp"
#include "m2snet/tensor.hpp"

namespace m2s::ad {

enum class Mode { kTrain, kInference };

/// Reverse-mode tape. Nodes are appended during the forward pass, so the
/// node vector is already in topological order; backward() walks it in
/// reverse and lets each node push its gradient into its inputs. A node
/// consumed by several downstream nodes receives the sum of their
/// contributions. One Graph belongs to one thread of execution.
class Graph {
public:
    using BackwardFn = std::function<void(Graph&)>;

    struct Node {
        Tensor owned;               // value storage for computed nodes
        const Tensor* external = nullptr;  // set for leaves bound to parameters
        Tensor* param = nullptr;    // gradient sink for parameter leaves
        std::vector<double> grad;
        std::vector<int> inputs;
        BackwardFn backward;
        const char* op = "";
    };

    /// Leaf bound to an external parameter tensor. The parameter must
    /// outlive the graph; backward() accumulates into its grad buffer.
    int leaf(Tensor& parameter) {
        Node n;
        n.external = &parameter;
        n.param = &parameter;
        n.op = "leaf";
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    /// Constant input; never receives a useful gradient.
    int constant(Tensor value, const char* op = "const") {
        Node n;
        n.owned = std::move(value);
        n.op = op;
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    int add_node(Tensor value, std::vector<int> inputs, const char* op) {
        for (int id : inputs) check_id(id);
        Node n;
        n.owned = std::move(value);
        n.inputs = std::move(inputs);
        n.op = op;
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    void set_backward(int id, BackwardFn fn) {
        check_id(id);
        nodes_[static_cast<size_t>(id)].backward = std::move(fn);
    }

    const Tensor& value(int id) const {
        check_id(id);
        const Node& n = nodes_[static_cast<size_t>(id)];
        return n.external ? *n.external : n.owned;
    }

    std::vector<double>& grad(int id) {
        check_id(id);
        return nodes_[static_cast<size_t>(id)].grad;
    }

    const Node& node(int id) const {
        check_id(id);
        return nodes_[static_cast<size_t>(id)];
    }

    int size() const { return static_cast<int>(nodes_.size()); }

    /// Reverse pass from a scalar loss node. Populates the grad buffer of
    /// every parameter leaf; parameters that do not reach the loss keep a
    /// zero gradient.
    void backward(int loss_id) {
        if (nodes_.empty()) throw StateError("backward: graph has no nodes; run a forward pass first");
        check_id(loss_id);
        if (value(loss_id).numel() != 1) {
            throw DimensionError("backward: loss node must be scalar, got shape " +
                                 value(loss_id).shape_str());
        }
        for (Node& n : nodes_) {
            size_t len = n.external ? n.external->data.size() : n.owned.data.size();
            n.grad.assign(len, 0.0);
        }
        nodes_[static_cast<size_t>(loss_id)].grad[0] = 1.0;
        for (int id = loss_id; id >= 0; --id) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (n.backward) n.backward(*this);
        }
        for (Node& n : nodes_) {
            if (!n.param) continue;
            n.param->ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) n.param->grad[i] += n.grad[i];
        }
    }

private:
    void check_id(int id) const {
        if (id < 0 || id >= static_cast<int>(nodes_.size())) {
            throw StateError("graph: node id " + std::to_string(id) + " out of range");
        }
    }

    std::vector<Node> nodes_;
};

}  // namespace m2s::ad
