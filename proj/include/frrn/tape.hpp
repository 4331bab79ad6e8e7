#pragma once

// Tape-based reverse-mode differentiation with optional block partitioning.
//
// Every op is recorded eagerly: its value is computed when the op is applied.
// Cut points split the node sequence into contiguous blocks. When a cut is
// reached during the forward pass, every earlier activation that cannot be
// needed again is dropped. An activation is kept (a "boundary" activation)
// only if the caller still holds a Var for it or if an op in a later block
// consumed it. backward_checkpointed() then walks the blocks deepest first,
// recomputing the dropped activations of one block before back-propagating
// through it.
//
// Both backward routines visit nodes in strictly decreasing index order, so
// every gradient buffer receives its contributions in the same order; with
// deterministic kernels the two routines agree bit for bit.

#include <algorithm>
#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "frrn/params.hpp"
#include "frrn/tensor.hpp"

#ifdef FRRN_OP_TIMING
#include <chrono>
#include <map>
#endif

namespace frrn {

#ifdef FRRN_OP_TIMING
/// Accumulated seconds per "op/forward" and "op/backward" key.
inline std::map<std::string, double>& op_timings() {
  static std::map<std::string, double> t;
  return t;
}

struct OpTimer {
  std::string key;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  ~OpTimer() {
    op_timings()[key] += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};
#define FRRN_TIME_OP(op, phase) OpTimer frrn_op_timer_{std::string((op).name()) + "/" + (phase)}
#else
#define FRRN_TIME_OP(op, phase) static_cast<void>(0)
#endif

template <typename T>
using TensorRefs = std::span<const Tensor<T>* const>;
template <typename T>
using GradRefs = std::span<Tensor<T>* const>;

/// A differentiable operation. Ops may cache small per-call state
/// (e.g. batch statistics) between forward and backward; recomputation
/// must reproduce that state exactly.
template <typename T>
class Op {
 public:
  virtual ~Op() = default;
  virtual std::string_view name() const = 0;
  /// `recompute` is true when the tape replays the op during checkpointed
  /// backprop; side effects such as running-statistic updates must be skipped.
  virtual Tensor<T> forward(TensorRefs<T> inputs, bool recompute) = 0;
  /// grads[i] is nullptr for inputs that need no gradient.
  virtual void backward(TensorRefs<T> inputs, const Tensor<T>& output, const Tensor<T>& doutput,
                        GradRefs<T> grads) = 0;
  virtual bool has_trainable_params() const { return false; }
};

template <typename T>
class Tape;

/// Handle to a tape node. Live handles keep an activation retained across
/// cut points; the Tape must outlive every Var referring to it.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) { acquire(); }
  Var(const Var& o) : tape_(o.tape_), id_(o.id_) { acquire(); }
  Var(Var&& o) noexcept : tape_(o.tape_), id_(o.id_) {
    o.tape_ = nullptr;
    o.id_ = -1;
  }
  Var& operator=(const Var& o) {
    if (this != &o) {
      Var tmp(o);
      swap(tmp);
    }
    return *this;
  }
  Var& operator=(Var&& o) noexcept {
    if (this != &o) {
      reset();
      tape_ = o.tape_;
      id_ = o.id_;
      o.tape_ = nullptr;
      o.id_ = -1;
    }
    return *this;
  }
  ~Var() { reset(); }

  int id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }
  Tape<T>* tape() const noexcept { return tape_; }
  const Shape& shape() const;
  const Tensor<T>& value() const;
  const Tensor<T>& grad() const;

  void reset() {
    if (tape_ != nullptr) tape_->release_handle(id_);
    tape_ = nullptr;
    id_ = -1;
  }

 private:
  void acquire() {
    if (tape_ != nullptr) tape_->acquire_handle(id_);
  }
  void swap(Var& o) noexcept {
    std::swap(tape_, o.tape_);
    std::swap(id_, o.id_);
  }

  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

/// Activation accounting, in scalar elements.
struct MemoryStats {
  std::size_t live = 0;
  std::size_t peak = 0;
  std::size_t recomputed_nodes = 0;
};

template <typename T>
class Tape {
 public:
  /// `cut_points` are node indices at which a new block starts; they take
  /// effect as recording reaches them. More cuts can be added with cut().
  explicit Tape(std::vector<std::size_t> cut_points = {}) : pending_cuts_(std::move(cut_points)) {
    std::sort(pending_cuts_.begin(), pending_cuts_.end());
    pending_cuts_.erase(std::unique(pending_cuts_.begin(), pending_cuts_.end()), pending_cuts_.end());
  }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> input(Tensor<T> value, bool requires_grad = false) {
    apply_pending_cuts();
    Node node;
    node.shape = value.shape();
    node.leaf = true;
    node.requires_grad = requires_grad;
    node.block = cuts_.size();
    nodes_.push_back(std::move(node));
    set_value(nodes_.back(), std::move(value));
    return Var<T>(this, static_cast<int>(nodes_.size() - 1));
  }

  Var<T> apply(std::unique_ptr<Op<T>> op, std::initializer_list<const Var<T>*> inputs) {
    apply_pending_cuts();
    Node node;
    node.block = cuts_.size();
    node.requires_grad = op->has_trainable_params();
    const int id = static_cast<int>(nodes_.size());
    for (const Var<T>* v : inputs) {
      check_owned(*v);
      node.inputs.push_back(v->id());
      node.requires_grad = node.requires_grad || nodes_[v->id()].requires_grad;
    }
    std::vector<const Tensor<T>*> refs;
    for (int in : node.inputs) {
      if (!nodes_[in].has_value) {
        throw std::logic_error("tape: input node " + std::to_string(in) + " of '" +
                               std::string(op->name()) + "' has been released");
      }
      refs.push_back(&nodes_[in].value);
    }
    Tensor<T> out = [&] {
      FRRN_TIME_OP(*op, "forward");
      return op->forward(refs, false);
    }();
    check_finite(out, *op, id);
    node.shape = out.shape();
    node.op = std::move(op);
    for (int in : node.inputs) nodes_[in].consumers.push_back(id);
    nodes_.push_back(std::move(node));
    set_value(nodes_.back(), std::move(out));
    return Var<T>(this, id);
  }

  /// Starts a new block at the current position.
  void cut() {
    const std::size_t at = nodes_.size();
    if (at == 0 || (!cuts_.empty() && cuts_.back() == at)) return;
    cuts_.push_back(at);
    evict_unneeded(at);
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<std::size_t>& cut_points() const noexcept { return cuts_; }
  const MemoryStats& stats() const noexcept { return stats_; }

  const Tensor<T>& value(const Var<T>& v) const {
    check_owned(v);
    const Node& n = nodes_[v.id()];
    if (!n.has_value) throw std::logic_error("tape: value of node " + std::to_string(v.id()) + " was released");
    return n.value;
  }

  const Shape& shape(const Var<T>& v) const {
    check_owned(v);
    return nodes_[v.id()].shape;
  }

  /// Gradient of the last backward pass w.r.t. a node; zeros if none flowed.
  const Tensor<T>& grad(const Var<T>& v) {
    check_owned(v);
    Node& n = nodes_[v.id()];
    if (!n.has_grad) {
      n.grad = Tensor<T>(n.shape);
      n.has_grad = true;
    }
    return n.grad;
  }

  /// Standard backprop over the whole retained forward pass.
  void backward_full(const Var<T>& loss) {
    const int last = check_loss(loss);
    for (int i = 0; i <= last; ++i) {
      if (!nodes_[i].has_value) {
        throw std::logic_error(
            "backward_full: activations were released at cut points; use backward_checkpointed");
      }
    }
    seed(last);
    for (int i = last; i >= 0; --i) backprop_node(i);
  }

  /// Block-partitioned backprop: recompute each block's forward, deepest block
  /// first, then back-propagate through it.
  void backward_checkpointed(const Var<T>& loss) {
    const int last = check_loss(loss);
    for (std::size_t k = 0; k < cuts_.size(); ++k) {
      if (cuts_[k] == 0 || cuts_[k] >= nodes_.size() || (k > 0 && cuts_[k] <= cuts_[k - 1])) {
        throw std::invalid_argument("backward_checkpointed: invalid cut points");
      }
    }
    if (!pending_cuts_.empty()) {
      throw std::invalid_argument("backward_checkpointed: cut point " +
                                  std::to_string(pending_cuts_.front()) + " lies beyond the " +
                                  std::to_string(nodes_.size()) + "-node tape");
    }
    std::vector<std::size_t> starts{0};
    starts.insert(starts.end(), cuts_.begin(), cuts_.end());
    seed(last);
    for (std::size_t b = starts.size(); b-- > 0;) {
      const int begin = static_cast<int>(starts[b]);
      const int end = std::min(b + 1 < starts.size() ? static_cast<int>(starts[b + 1]) : last + 1,
                               last + 1);
      if (begin > last) continue;
      for (int i = begin; i < end; ++i) recompute(i);
      for (int i = end - 1; i >= begin; --i) backprop_node(i);
      for (int i = begin; i < end; ++i) {
        Node& n = nodes_[i];
        if (!n.leaf && n.handles == 0) {
          drop_value(n);
          drop_grad(n);
        }
      }
    }
  }

  // Handle bookkeeping (used by Var).
  void acquire_handle(int id) { ++nodes_[id].handles; }
  void release_handle(int id) { --nodes_[id].handles; }

 private:
  struct Node {
    std::unique_ptr<Op<T>> op;
    std::vector<int> inputs;
    std::vector<int> consumers;
    Shape shape;
    Tensor<T> value;
    Tensor<T> grad;
    bool has_value = false;
    bool has_grad = false;
    bool requires_grad = false;
    bool leaf = false;
    std::size_t block = 0;
    int handles = 0;
  };

  void check_owned(const Var<T>& v) const {
    if (v.tape() != this || v.id() < 0 || v.id() >= static_cast<int>(nodes_.size())) {
      throw std::invalid_argument("tape: Var does not belong to this tape");
    }
  }

  static void check_finite(const Tensor<T>& t, const Op<T>& op, int id) {
    if (!t.all_finite()) {
      throw NumericError("non-finite value produced by '" + std::string(op.name()) + "' (node " +
                         std::to_string(id) + ")");
    }
  }

  void set_value(Node& n, Tensor<T> v) {
    n.value = std::move(v);
    n.has_value = true;
    stats_.live += n.value.size();
    stats_.peak = std::max(stats_.peak, stats_.live);
  }

  void drop_value(Node& n) {
    if (!n.has_value) return;
    stats_.live -= n.value.size();
    n.value.release();
    n.has_value = false;
  }

  void drop_grad(Node& n) {
    n.grad.release();
    n.has_grad = false;
  }

  void apply_pending_cuts() {
    while (!pending_cuts_.empty() && pending_cuts_.front() <= nodes_.size()) {
      const std::size_t at = pending_cuts_.front();
      pending_cuts_.erase(pending_cuts_.begin());
      if (at == nodes_.size()) cut();
    }
  }

  void evict_unneeded(std::size_t boundary) {
    for (std::size_t i = 0; i < boundary; ++i) {
      Node& n = nodes_[i];
      if (n.leaf || !n.has_value || n.handles > 0) continue;
      const bool crosses = std::any_of(n.consumers.begin(), n.consumers.end(),
                                       [&](int c) { return nodes_[c].block != n.block; });
      if (!crosses) drop_value(n);
    }
  }

  int check_loss(const Var<T>& loss) {
    check_owned(loss);
    const Node& n = nodes_[loss.id()];
    if (n.shape.numel() != 1) {
      throw ShapeError("backward: loss must be a scalar, got shape " + n.shape.str());
    }
    for (Node& node : nodes_) drop_grad(node);
    return loss.id();
  }

  void seed(int last) {
    Node& n = nodes_[last];
    n.grad = Tensor<T>(n.shape, T(1));
    n.has_grad = true;
  }

  void recompute(int i) {
    Node& n = nodes_[i];
    if (n.has_value || n.leaf) return;
    std::vector<const Tensor<T>*> refs;
    for (int in : n.inputs) {
      if (!nodes_[in].has_value) {
        throw std::logic_error("backward_checkpointed: boundary activation " + std::to_string(in) +
                               " missing while recomputing node " + std::to_string(i));
      }
      refs.push_back(&nodes_[in].value);
    }
    Tensor<T> out = n.op->forward(refs, true);
    check_finite(out, *n.op, i);
    ++stats_.recomputed_nodes;
    set_value(n, std::move(out));
  }

  void backprop_node(int i) {
    Node& n = nodes_[i];
    if (n.leaf || !n.has_grad || !n.requires_grad) return;
    std::vector<const Tensor<T>*> refs;
    std::vector<Tensor<T>*> grads;
    for (int in : n.inputs) {
      Node& src = nodes_[in];
      refs.push_back(&src.value);
      if (src.requires_grad) {
        if (!src.has_grad) {
          src.grad = Tensor<T>(src.shape);
          src.has_grad = true;
        }
        grads.push_back(&src.grad);
      } else {
        grads.push_back(nullptr);
      }
    }
    {
      FRRN_TIME_OP(*n.op, "backward");
      n.op->backward(refs, n.value, n.grad, grads);
    }
  }

  std::vector<Node> nodes_;
  std::vector<std::size_t> cuts_;
  std::vector<std::size_t> pending_cuts_;
  MemoryStats stats_;
};

template <typename T>
const Shape& Var<T>::shape() const {
  return tape_->shape(*this);
}
template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(*this);
}
template <typename T>
const Tensor<T>& Var<T>::grad() const {
  return tape_->grad(*this);
}

}  // namespace frrn
