#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "crpl/ops.hpp"

namespace crpl {

// Reverse-mode tape. Nodes are appended in forward order, which is by
// construction a topological order; backward() walks it in exact reverse.
// Leaf gradients accumulate additively across backward() calls until
// zero_grad(); intermediate gradients are reset at the start of each call.
//
// One Graph instance is single-threaded (one forward/backward at a time).
template <class Scalar>
class Graph {
 public:
  using ValueId = std::int32_t;
  static constexpr ValueId kNone = -1;

  explicit Graph(bool record = true) : record_(record) {}

  // backward closures capture `this`
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  ValueId leaf(Tensor<Scalar> value, bool requires_grad, std::string name = {}) {
    assert_all_finite(value, "leaf");
    nodes_.push_back(Node{std::move(value), Tensor<Scalar>(), true, requires_grad, false,
                          std::move(name), "leaf", nullptr});
    return static_cast<ValueId>(nodes_.size() - 1);
  }

  const Tensor<Scalar>& value(ValueId id) const { return node(id).value; }

  // Gradient of the last backward() target w.r.t. node id (zeros if the node
  // was never reached).
  const Tensor<Scalar>& grad(ValueId id) {
    Node& nd = node(id);
    if (nd.grad.empty()) nd.grad = Tensor<Scalar>(nd.value.shape());
    return nd.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  // -- ops -----------------------------------------------------------------

  ValueId conv2d(ValueId x, ValueId w, ValueId b, int stride, int padding, int groups) {
    const Tensor<Scalar>* bias = b == kNone ? nullptr : &node(b).value;
    ValueId id = push(crpl::conv2d(node(x).value, node(w).value, bias, stride, padding, groups),
                      "conv2d");
    attach(id, [this, id, x, w, b, stride, padding, groups](const Tensor<Scalar>& g) {
      auto grads = conv2d_backward(node(x).value, node(w).value, b != kNone, stride, padding,
                                   groups, g);
      accumulate(x, grads.input);
      accumulate(w, grads.weight);
      if (b != kNone) accumulate(b, grads.bias);
    });
    return id;
  }

  ValueId depthwise_conv2d(ValueId x, ValueId w, int stride, int padding) {
    check_arg(node(w).value.dim(1) == 1 && node(w).value.dim(0) == node(x).value.dim(1),
              "depthwise_conv2d: weight must be (C,1,Kh,Kw) with C matching input");
    return conv2d(x, w, kNone, stride, padding, static_cast<int>(node(x).value.dim(1)));
  }

  ValueId batch_norm(ValueId x, ValueId gamma, ValueId beta, Tensor<Scalar>* running_mean,
                     Tensor<Scalar>* running_var, bool training, double momentum, double eps) {
    BnSaved saved;
    ValueId id = push(crpl::batch_norm(node(x).value, node(gamma).value, node(beta).value,
                                       running_mean, running_var, training, momentum, eps, &saved),
                      "batch_norm");
    attach(id, [this, x, gamma, beta, training, saved](const Tensor<Scalar>& g) {
      auto grads = batch_norm_backward(node(x).value, node(gamma).value, saved, training, g);
      accumulate(x, grads.input);
      accumulate(gamma, grads.gamma);
      accumulate(beta, grads.beta);
    });
    return id;
  }

  ValueId silu(ValueId x) {
    ValueId id = push(crpl::silu(node(x).value), "silu");
    attach(id, [this, x](const Tensor<Scalar>& g) {
      accumulate(x, silu_backward(node(x).value, g));
    });
    return id;
  }

  ValueId sigmoid(ValueId x) {
    ValueId id = push(crpl::sigmoid(node(x).value), "sigmoid");
    attach(id, [this, id, x](const Tensor<Scalar>& g) {
      accumulate(x, sigmoid_backward(node(id).value, g));
    });
    return id;
  }

  ValueId global_avg_pool(ValueId x) {
    ValueId id = push(crpl::global_avg_pool(node(x).value), "global_avg_pool");
    attach(id, [this, x](const Tensor<Scalar>& g) {
      accumulate(x, global_avg_pool_backward(node(x).value.shape(), g));
    });
    return id;
  }

  ValueId flatten2(ValueId x) {
    const auto& v = node(x).value;
    check_arg(v.rank() == 4, "flatten2: expects NCHW");
    ValueId id = push(v.reshaped({v.dim(0), v.numel() / std::max<std::int64_t>(v.dim(0), 1)}),
                      "flatten2");
    attach(id, [this, x](const Tensor<Scalar>& g) {
      accumulate(x, g.reshaped(node(x).value.shape()));
    });
    return id;
  }

  ValueId linear(ValueId x, ValueId w, ValueId b) {
    const Tensor<Scalar>* bias = b == kNone ? nullptr : &node(b).value;
    ValueId id = push(crpl::linear(node(x).value, node(w).value, bias), "linear");
    attach(id, [this, x, w, b](const Tensor<Scalar>& g) {
      auto grads = linear_backward(node(x).value, node(w).value, b != kNone, g);
      accumulate(x, grads.input);
      accumulate(w, grads.weight);
      if (b != kNone) accumulate(b, grads.bias);
    });
    return id;
  }

  ValueId add(ValueId a, ValueId b) {
    ValueId id = push(crpl::add(node(a).value, node(b).value), "add");
    attach(id, [this, a, b](const Tensor<Scalar>& g) {
      accumulate(a, g);
      accumulate(b, g);
    });
    return id;
  }

  ValueId mul(ValueId a, ValueId b) {
    ValueId id = push(crpl::mul(node(a).value, node(b).value), "mul");
    attach(id, [this, a, b](const Tensor<Scalar>& g) {
      accumulate(a, crpl::mul(g, node(b).value));
      accumulate(b, crpl::mul(g, node(a).value));
    });
    return id;
  }

  ValueId scale_channels(ValueId x, ValueId gate) {
    ValueId id = push(crpl::scale_channels(node(x).value, node(gate).value), "scale_channels");
    attach(id, [this, x, gate](const Tensor<Scalar>& g) {
      auto grads = scale_channels_backward(node(x).value, node(gate).value, g);
      accumulate(x, grads.input);
      accumulate(gate, grads.gate);
    });
    return id;
  }

  ValueId sum_all(ValueId x) {
    ValueId id = push(crpl::sum_all(node(x).value), "sum_all");
    attach(id, [this, x](const Tensor<Scalar>& g) {
      accumulate(x, Tensor<Scalar>::full(node(x).value.shape(), g[0]));
    });
    return id;
  }

  ValueId bce_with_logits(ValueId logits, Tensor<Scalar> labels) {
    ValueId id = push(crpl::bce_with_logits(node(logits).value, labels), "bce_with_logits");
    attach(id, [this, logits, labels = std::move(labels)](const Tensor<Scalar>& g) {
      accumulate(logits,
                 bce_with_logits_backward(node(logits).value, labels, static_cast<double>(g[0])));
    });
    return id;
  }

  // -- backward ------------------------------------------------------------

  void backward(ValueId loss) {
    check_arg(record_, "backward: graph was built in no-record mode");
    Node& ln = node(loss);
    check_arg(ln.value.numel() == 1, "backward: loss must be scalar, got shape ",
              shape_str(ln.value));
    // reset intermediate grads; leaves keep accumulating until zero_grad()
    for (Node& nd : nodes_) {
      nd.pending = false;
      if (!nd.is_leaf) nd.grad = Tensor<Scalar>();
    }
    if (ln.grad.empty()) ln.grad = Tensor<Scalar>(ln.value.shape());
    ln.grad[0] = ln.grad[0] + Scalar(1);
    ln.pending = true;
    for (ValueId id = loss; id >= 0; --id) {
      Node& nd = node(id);
      if (!nd.pending || !nd.backward) continue;
      nd.backward(nd.grad);
    }
    for (const Node& nd : nodes_) {
      if (nd.is_leaf && nd.requires_grad && !nd.grad.empty())
        assert_all_finite(nd.grad, "backward gradient");
    }
  }

  void zero_grad() {
    for (Node& nd : nodes_) nd.grad = Tensor<Scalar>();
  }

  // Gradients of all named leaves (zero tensors for leaves the loss never
  // reached).
  std::map<std::string, Tensor<Scalar>> gradients() {
    std::map<std::string, Tensor<Scalar>> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& nd = nodes_[i];
      if (nd.is_leaf && nd.requires_grad && !nd.name.empty())
        out[nd.name] = grad(static_cast<ValueId>(i));
    }
    return out;
  }

 private:
  struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    bool is_leaf = false;
    bool requires_grad = false;
    bool pending = false;  // received gradient during the current backward
    std::string name;
    const char* op = "";
    std::function<void(const Tensor<Scalar>&)> backward;
  };

  Node& node(ValueId id) { return nodes_.at(static_cast<std::size_t>(id)); }
  const Node& node(ValueId id) const { return nodes_.at(static_cast<std::size_t>(id)); }

  ValueId push(Tensor<Scalar> value, const char* op) {
    nodes_.push_back(Node{std::move(value), Tensor<Scalar>(), false, false, false, {}, op, nullptr});
    return static_cast<ValueId>(nodes_.size() - 1);
  }

  template <class Fn>
  void attach(ValueId id, Fn&& fn) {
    if (record_) node(id).backward = std::forward<Fn>(fn);
  }

  void accumulate(ValueId id, const Tensor<Scalar>& delta) {
    Node& nd = node(id);
    nd.pending = true;
    if (nd.grad.empty()) {
      nd.grad = delta;
      return;
    }
    check_arg(nd.grad.same_shape(delta), "gradient shape mismatch for op ", nd.op);
    for (std::int64_t i = 0; i < delta.numel(); ++i) nd.grad[i] = nd.grad[i] + delta[i];
  }

  std::vector<Node> nodes_;
  bool record_;
};

}  // namespace crpl
