#include "mgfi/tape.hpp"

#include <atomic>
#include <stdexcept>

namespace mgfi {

namespace {
thread_local Tape* g_active_tape = nullptr;
std::atomic<std::uint64_t> g_next_tape_id{1};
}  // namespace

bool GradientMap::contains(const Tensor& t) const {
    const auto& ref = t.node();
    return ref.tape == tape_id_ && by_node_.count(ref.index) > 0;
}

const Tensor& GradientMap::at(const Tensor& t) const {
    const auto& ref = t.node();
    if (ref.tape != tape_id_) {
        throw std::invalid_argument("gradient lookup for tensor from a different record");
    }
    auto it = by_node_.find(ref.index);
    if (it == by_node_.end()) {
        throw std::invalid_argument("no gradient recorded for this tensor");
    }
    return it->second;
}

Tape::Tape() {
    if (g_active_tape != nullptr) {
        throw std::logic_error("record already active");
    }
    id_ = g_next_tape_id.fetch_add(1);
    g_active_tape = this;
}

Tape::~Tape() {
    if (g_active_tape == this) g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

bool Tape::tracks(const Tensor& t) const {
    return t.node().tape == id_ && t.node().index >= 0;
}

Tensor Tape::watch(const Tensor& t) {
    if (!t.defined()) {
        throw std::invalid_argument("watch() on an undefined tensor");
    }
    Tensor out = t;  // shares payload
    Node node;
    node.shape = t.shape();
    node.leaf = true;
    nodes_.push_back(std::move(node));
    out.node_ = detail::NodeRef{id_, static_cast<int>(nodes_.size()) - 1};
    return out;
}

void Tape::attach(Tensor& out, std::initializer_list<const Tensor*> inputs,
                  BackwardFn fn) {
    attach(out, std::vector<const Tensor*>(inputs), std::move(fn));
}

void Tape::attach(Tensor& out, const std::vector<const Tensor*>& inputs,
                  BackwardFn fn) {
    Node node;
    node.shape = out.shape();
    node.inputs.reserve(inputs.size());
    for (const Tensor* in : inputs) {
        node.inputs.push_back(tracks(*in) ? in->node().index : -1);
    }
    node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    out.node_ = detail::NodeRef{id_, static_cast<int>(nodes_.size()) - 1};
}

GradientMap Tape::backward(const Tensor& loss) {
    if (!loss.defined() || !loss.is_scalar()) {
        throw std::invalid_argument("backward() requires a scalar (1,1,1,1) loss");
    }
    GradientMap out;
    out.tape_id_ = id_;

    const auto& ref = loss.node();
    if (ref.tape != 0 && ref.tape != id_) {
        throw std::invalid_argument("backward() on a loss from a foreign record");
    }

    // One buffer per node, allocated on first touch. Accumulation order is
    // fixed by node order, so repeated runs are bit-identical.
    std::vector<std::vector<float>> grad(nodes_.size());
    auto ensure = [&](int idx) -> std::vector<float>& {
        if (grad[idx].empty()) {
            grad[idx].assign(static_cast<std::size_t>(nodes_[idx].shape.count()), 0.0f);
        }
        return grad[idx];
    };

    if (ref.tape == id_ && ref.index >= 0) {
        ensure(ref.index)[0] = 1.0f;
        for (int i = ref.index; i >= 0; --i) {
            if (grad[i].empty() || !nodes_[i].backward) continue;
            GradSink sink;
            sink.upstream_ = grad[i].data();
            sink.slots_.reserve(nodes_[i].inputs.size());
            for (int in : nodes_[i].inputs) {
                sink.slots_.push_back(in >= 0 ? ensure(in).data() : nullptr);
            }
            nodes_[i].backward(sink);
        }
    }

    for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
        if (!nodes_[i].leaf) continue;
        const Shape& s = nodes_[i].shape;
        Tensor g = grad[i].empty() ? Tensor::zeros(s) : Tensor(s, std::move(grad[i]));
        out.by_node_.emplace(i, std::move(g));
    }
    return out;
}

}  // namespace mgfi
