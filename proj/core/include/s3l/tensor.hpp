#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "s3l/common.hpp"

namespace s3l {

enum class DType : uint8_t { F32 = 0, F64 = 1 };

inline const char* dtype_name(DType dt) { return dt == DType::F32 ? "f32" : "f64"; }
inline size_t dtype_size(DType dt) { return dt == DType::F32 ? 4 : 8; }

class Tensor;

namespace detail {

/// One record of the compute graph. Results own their inputs through
/// `parents`, so the graph reachable from a loss is exactly the set of
/// records its backward pass must visit; dropping the loss frees it.
struct Node {
    std::vector<int64_t> shape;
    DType dtype = DType::F32;
    std::vector<float> f32;
    std::vector<double> f64;

    bool requires_grad = false;
    std::shared_ptr<Node> grad;                 // same shape/dtype, lazily allocated
    std::vector<Tensor> parents;                // empty for leaves
    std::function<void(Node&)> backward_fn;     // reads this->grad, accumulates into parents
    std::string op;                             // producing op, for diagnostics

    int64_t numel() const;
    double get(int64_t i) const;
    void set(int64_t i, double v);
};

bool grad_enabled();

}  // namespace detail

/// Gradient recording is on by default; scopes that only evaluate (momentum
/// encoders, metrics, data prep) disable it so no graph is built.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

/// Dense row-major n-d array, the value type of the whole engine. Copying a
/// Tensor copies a handle; values are immutable once an op produced them
/// (leaves owned by an optimizer are the exception and are updated between
/// graphs). Gradients accumulate additively into every tensor that has
/// requires_grad when backward() runs.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

    static Tensor zeros(std::vector<int64_t> shape, DType dt = DType::F32);
    static Tensor full(std::vector<int64_t> shape, double value, DType dt = DType::F32);
    static Tensor scalar(double value, DType dt = DType::F32);
    static Tensor from_vector(std::vector<int64_t> shape, const std::vector<float>& data);
    static Tensor from_vector(std::vector<int64_t> shape, const std::vector<double>& data);

    bool defined() const { return node_ != nullptr; }
    const std::vector<int64_t>& shape() const;
    int64_t dim(size_t i) const;
    size_t rank() const;
    int64_t numel() const;
    DType dtype() const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool b);

    float* f32();
    const float* f32() const;
    double* f64();
    const double* f64() const;

    double get(int64_t flat_index) const;
    void set(int64_t flat_index, double v);
    double at(std::initializer_list<int64_t> idx) const;
    double scalar_value() const;

    /// Accumulated gradient; undefined Tensor when none has been produced.
    Tensor grad() const;
    /// Gradient tensor, allocating zeros on first use. requires_grad only.
    Tensor ensure_grad() const;
    void zero_grad() const;

    /// Value copy that drops graph edges and requires_grad.
    Tensor detach() const;
    Tensor clone() const;
    Tensor to(DType dt) const;

    /// In-place value mutation for leaves (optimizer updates, EMA, buffers).
    void copy_values_from(const Tensor& src);
    void fill(double v);

    /// Reverse-mode sweep from a scalar. Visits each reachable graph record
    /// exactly once, in reverse topological order.
    void backward() const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

namespace detail {

/// Op-author helper: allocate a result, wire parents and the backward
/// closure if recording is on and any parent participates.
Tensor make_op_result(std::vector<int64_t> shape, DType dt, const char* op,
                      std::vector<Tensor> parents, std::function<void(Node&)> backward_fn);

/// Accumulate `src` (same shape/dtype contract as `dst`) into dst's grad.
void accumulate_grad(const Tensor& dst, const std::vector<double>& contrib);

/// Throws if any stored value is NaN/Inf. Ops call this on their outputs.
void check_finite(const Tensor& t, const char* op);

}  // namespace detail

}  // namespace s3l
