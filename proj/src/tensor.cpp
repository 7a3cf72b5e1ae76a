#include "granet/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

#include "granet/error.hpp"

namespace granet::ad {

namespace {

thread_local bool g_grad_enabled = true;

} // namespace

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

void Node::ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
}

std::uint64_t next_seq() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

} // namespace detail

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_size(shape) != values.size()) {
        throw DimensionError("tensor shape " + shape_str(shape) + " holds " +
                             std::to_string(shape_size(shape)) + " values, got " +
                             std::to_string(values.size()));
    }
    for (auto e : shape) {
        if (e == 0) throw DimensionError("tensor extents must be positive: " + shape_str(shape));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    node->seq = detail::next_seq();
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::vector<double> v(shape_size(shape), value);
    return from(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->value.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= rank()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
    return shape()[axis];
}

std::span<const double> Tensor::values() const { return node_->value; }
std::span<double> Tensor::mutable_values() { return node_->value; }

double Tensor::item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
    if (rank() != 2) throw DimensionError("at(row, col) needs a matrix, got " + shape_str(shape()));
    return node_->value[row * shape()[1] + col];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::has_grad() const { return node_->grad.size() == node_->value.size(); }

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw ContractError("tensor has no gradient; run backward first");
    return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

std::uint64_t Tensor::id() const { return node_->seq; }
const char* Tensor::op_name() const { return node_->op; }

namespace {

// Nodes reachable from root that carry gradient, in replay order
// (consumers before inputs).
std::vector<detail::Node*> reverse_order(const Tensor& root) {
    std::vector<detail::Node*> nodes;
    std::unordered_set<detail::Node*> seen;
    std::vector<detail::Node*> stack{root.node().get()};
    while (!stack.empty()) {
        auto* n = stack.back();
        stack.pop_back();
        if (!n->requires_grad || !seen.insert(n).second) continue;
        nodes.push_back(n);
        for (auto& in : n->inputs) stack.push_back(in.get());
    }
    // Every input is created before its consumer, so creation order is a
    // topological order of the record.
    std::sort(nodes.begin(), nodes.end(), [](auto* a, auto* b) { return a->seq > b->seq; });
    return nodes;
}

} // namespace

std::vector<RecordEntry> computation_record(const Tensor& root) {
    auto nodes = reverse_order(root);
    std::vector<RecordEntry> record;
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
        auto* n = *it;
        if (!n->backward) continue;
        RecordEntry e{n->op, {}, n->seq};
        for (auto& in : n->inputs) e.input_ids.push_back(in->seq);
        record.push_back(std::move(e));
    }
    return record;
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw ContractError("backward needs a scalar loss, got shape " +
                            (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    if (!loss.requires_grad()) throw ContractError("loss does not depend on any requires_grad tensor");
    auto nodes = reverse_order(loss);
    loss.node()->ensure_grad();
    loss.node()->grad[0] += 1.0;
    for (auto* n : nodes) {
        if (!n->backward) continue;
        for (auto& in : n->inputs) {
            if (in->requires_grad) in->ensure_grad();
        }
        n->ensure_grad();
        n->backward(*n);
    }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

namespace {
thread_local BranchTrace* g_branch_trace = nullptr;
} // namespace

BranchTrace::BranchTrace() : previous_(g_branch_trace) { g_branch_trace = this; }
BranchTrace::~BranchTrace() { g_branch_trace = previous_; }

bool branch_tracing() { return g_branch_trace != nullptr; }

void note_branch(std::uint64_t choice) {
    if (g_branch_trace == nullptr) return;
    auto& h = g_branch_trace->digest_;
    h = (h ^ choice) * 1099511628211ull;
}

Tensor make_result(const char* op, Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward_fn) {
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->op = op;
    node->seq = detail::next_seq();
    if (g_grad_enabled) {
        bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
        if (any) {
            node->requires_grad = true;
            node->inputs.reserve(inputs.size());
            for (auto& t : inputs) node->inputs.push_back(t.node());
            node->backward = std::move(backward_fn);
        }
    }
    return Tensor(std::move(node));
}

} // namespace granet::ad
