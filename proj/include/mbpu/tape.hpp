// Reverse-mode differentiation tape: an append-only record of operations.
#ifndef MBPU_TAPE_HPP
#define MBPU_TAPE_HPP

#include <functional>
#include <memory>
#include <vector>

#include "mbpu/tensor.hpp"

namespace mbpu {

/// Result of a backward pass. Inputs recorded on the tape but unreachable
/// from the differentiated scalar read back as zero tensors.
class Gradients {
 public:
  Tensor grad(const Tensor& t) const {
    require(t.on_tape(), "gradients: tensor is not on a tape");
    const int slot = t.slot();
    require(slot >= 0 && static_cast<std::size_t>(slot) < buffers_.size(),
            "gradients: slot out of range");
    if (!buffers_[slot]) return Tensor(t.shape());
    return Tensor(t.shape(), *buffers_[slot]);
  }

  bool nonzero(const Tensor& t) const {
    return t.on_tape() && buffers_[t.slot()] != nullptr;
  }

 private:
  friend class Tape;
  std::vector<std::shared_ptr<std::vector<double>>> buffers_;
};

/// Recorded computation graph. Ops append one node each; backward() walks the
/// record in reverse and accumulates vector-Jacobian products into per-slot
/// buffers. A tape is confined to one logical execution at a time.
class Tape {
 public:
  /// Marks a tensor as a differentiable input. Shares the data buffer.
  Tensor watch(const Tensor& t) {
    if (t.on_tape()) {
      require(t.tape() == this, "tape: tensor already on a different tape");
      return t;
    }
    Tensor out = t;
    out.tape_ = this;
    out.slot_ = new_slot(out);
    return out;
  }

  std::size_t node_count() const { return nodes_.size(); }

  /// Op-author hook. `inputs` may mix taped and constant tensors; `out` gains
  /// a slot on this tape. `replay_fn` recomputes out's buffer from the input
  /// buffers in place. `backward_fn` receives d(loss)/d(out) and one grad
  /// buffer pointer per input (null for constants), to be accumulated into.
  void record(const std::vector<const Tensor*>& inputs, Tensor& out,
              std::function<void()> replay_fn,
              std::function<void(const double*, const std::vector<double*>&)>
                  backward_fn) {
    Node node;
    node.in_slots.reserve(inputs.size());
    for (const Tensor* t : inputs) {
      require(!t->on_tape() || t->tape() == this,
              "tape: op mixes tensors from different tapes");
      node.in_slots.push_back(t->on_tape() ? t->slot() : -1);
    }
    out.tape_ = this;
    out.slot_ = new_slot(out);
    node.out_slot = out.slot_;
    node.replay = std::move(replay_fn);
    node.backward = std::move(backward_fn);
    nodes_.push_back(std::move(node));
  }

  /// Reverse sweep from a recorded scalar. Returns one gradient per reachable
  /// recorded input; shapes match the inputs.
  Gradients backward(const Tensor& output) const {
    require(output.on_tape() && output.tape() == this,
            "tape: backward output is not recorded on this tape");
    require(output.size() == 1, "tape: backward needs a scalar, got shape ",
            shape_str(output.shape()));
    Gradients g;
    g.buffers_.assign(slot_sizes_.size(), nullptr);
    ensure(g, output.slot());
    (*g.buffers_[output.slot()])[0] = 1.0;

    std::vector<double*> din;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      const Node& node = *it;
      const auto& gout = g.buffers_[node.out_slot];
      if (!gout) continue;
      din.clear();
      for (int slot : node.in_slots) {
        if (slot < 0) {
          din.push_back(nullptr);
        } else {
          ensure(g, slot);
          din.push_back(g.buffers_[slot]->data());
        }
      }
      node.backward(gout->data(), din);
    }
    return g;
  }

  /// Recomputes every recorded op in order, writing into the recorded output
  /// buffers. Forward results are reproduced exactly from the recorded inputs.
  void replay() const {
    for (const Node& node : nodes_) node.replay();
  }

 private:
  struct Node {
    std::vector<int> in_slots;
    int out_slot = -1;
    std::function<void()> replay;
    std::function<void(const double*, const std::vector<double*>&)> backward;
  };

  int new_slot(const Tensor& t) {
    slot_sizes_.push_back(t.size());
    return static_cast<int>(slot_sizes_.size()) - 1;
  }

  void ensure(Gradients& g, int slot) const {
    if (!g.buffers_[slot])
      g.buffers_[slot] =
          std::make_shared<std::vector<double>>(slot_sizes_[slot], 0.0);
  }

  std::vector<Node> nodes_;
  std::vector<std::size_t> slot_sizes_;
};

namespace detail {

/// Common tape of a set of op inputs; null when all are constants.
inline Tape* tape_of(std::initializer_list<const Tensor*> ts) {
  Tape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t->on_tape()) continue;
    require(tape == nullptr || tape == t->tape(),
            "tape: op mixes tensors from different tapes");
    tape = t->tape();
  }
  return tape;
}

}  // namespace detail

}  // namespace mbpu

#endif  // MBPU_TAPE_HPP
