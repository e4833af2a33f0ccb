#pragma once

#include <functional>
#include <initializer_list>
#include <unordered_map>
#include <vector>

#include "mgfi/tensor.hpp"

namespace mgfi {

class Tape;

// Gradients of a scalar loss with respect to watched leaf tensors,
// keyed by node handle. Only leaves marked as requiring gradients appear.
class GradientMap {
public:
    bool contains(const Tensor& t) const;
    const Tensor& at(const Tensor& t) const;
    std::size_t size() const { return by_node_.size(); }
    bool empty() const { return by_node_.empty(); }

private:
    friend class Tape;
    std::unordered_map<int, Tensor> by_node_;
    std::uint64_t tape_id_ = 0;
};

// Handed to backward closures. grad(slot) returns the accumulation buffer
// for that forward input, or nullptr when the input was a constant and no
// gradient is needed.
class GradSink {
public:
    const float* upstream() const { return upstream_; }
    float* grad(std::size_t slot) const {
        return slot < slots_.size() ? slots_[slot] : nullptr;
    }

private:
    friend class Tape;
    const float* upstream_ = nullptr;
    std::vector<float*> slots_;
};

using BackwardFn = std::function<void(const GradSink&)>;

// Recording of one forward pass. At most one tape may be active per thread;
// library ops append nodes while a tape is active and any of their inputs is
// tracked. Destroying the tape ends the recording.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Marks a tensor as a differentiation leaf; returns a tracked handle.
    Tensor watch(const Tensor& t);

    // Reverse-topological accumulation from a scalar loss. Gradients for all
    // watched leaves are populated (zeros when disconnected); intermediate
    // gradients are discarded. Deterministic: identical records give
    // bit-identical gradients.
    GradientMap backward(const Tensor& loss);

    int node_count() const { return static_cast<int>(nodes_.size()); }

    static Tape* active();
    // True when `t` is a node of this tape (stale handles from closed tapes
    // are treated as constants by the ops).
    bool tracks(const Tensor& t) const;

    // Used by ops: registers `out` as a new node computed from `inputs`.
    void attach(Tensor& out, std::initializer_list<const Tensor*> inputs,
                BackwardFn fn);
    void attach(Tensor& out, const std::vector<const Tensor*>& inputs,
                BackwardFn fn);

private:
    struct Node {
        Shape shape;
        std::vector<int> inputs;  // node index per forward slot, -1 untracked
        BackwardFn backward;
        bool leaf = false;
    };

    std::vector<Node> nodes_;
    std::uint64_t id_ = 0;
};

}  // namespace mgfi
