#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace granet::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until a backward pass reaches the node
    bool requires_grad = false;
    std::uint64_t seq = 0;     // creation order, used to replay the record
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this node's grad and accumulates into the inputs' grads.
    std::function<void(Node&)> backward;

    void ensure_grad();
};

std::uint64_t next_seq();

} // namespace detail

// Dense row-major array of doubles with an attached differentiation record.
// Copies share the underlying node; values are not modified by operations,
// only by explicit parameter updates.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t size() const;
    std::size_t dim(std::size_t axis) const;

    std::span<const double> values() const;
    // Direct write access; meant for optimizers, checkpoint loading and
    // finite-difference probes. Never call while a record built on this
    // tensor is still awaiting backward.
    std::span<double> mutable_values();

    double item() const;
    double operator[](std::size_t flat) const { return values()[flat]; }
    double at(std::size_t row, std::size_t col) const;

    bool requires_grad() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    std::uint64_t id() const;
    const char* op_name() const;

    // Internal: used by operation implementations.
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

// One entry of the replayed record: the operation and the ids it links.
struct RecordEntry {
    std::string op;
    std::vector<std::uint64_t> input_ids;
    std::uint64_t output_id = 0;
};

// The ordered list of primitive applications reachable from `root` that carry
// gradient, inputs before consumers.
std::vector<RecordEntry> computation_record(const Tensor& root);

// Reverse-mode pass from a scalar loss. Gradients accumulate into every
// requires_grad tensor reachable from the loss (call zero_grad to reset).
void backward(const Tensor& loss);

// Disables recording for the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

// While alive, piecewise operations (relu, max_pool) on this thread fold
// every branch decision into a digest. Two evaluations with equal digests
// took the same linear piece everywhere.
class BranchTrace {
public:
    BranchTrace();
    ~BranchTrace();
    BranchTrace(const BranchTrace&) = delete;
    BranchTrace& operator=(const BranchTrace&) = delete;

    std::uint64_t digest() const { return digest_; }

private:
    friend void note_branch(std::uint64_t choice);
    BranchTrace* previous_;
    std::uint64_t digest_ = 14695981039346656037ull;
};

bool branch_tracing();
void note_branch(std::uint64_t choice);

// Builds an op result. When recording is enabled and any input requires grad,
// the inputs and backward closure are attached.
Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs, std::function<void(detail::Node&)> backward_fn);

} // namespace granet::ad
