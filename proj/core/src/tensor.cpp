#include "s3l/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace s3l {

namespace detail {

namespace {
thread_local bool g_grad_enabled = true;

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        S3L_CHECK(d > 0, "tensor extents must be positive");
        n *= d;
    }
    return n;
}
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

int64_t Node::numel() const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

double Node::get(int64_t i) const {
    return dtype == DType::F32 ? static_cast<double>(f32[static_cast<size_t>(i)])
                               : f64[static_cast<size_t>(i)];
}

void Node::set(int64_t i, double v) {
    if (dtype == DType::F32)
        f32[static_cast<size_t>(i)] = static_cast<float>(v);
    else
        f64[static_cast<size_t>(i)] = v;
}

}  // namespace detail

NoGradGuard::NoGradGuard() : prev_(detail::g_grad_enabled) { detail::g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { detail::g_grad_enabled = prev_; }

namespace {

std::shared_ptr<detail::Node> alloc_node(std::vector<int64_t> shape, DType dt) {
    auto n = std::make_shared<detail::Node>();
    int64_t count = detail::shape_numel(shape);
    n->shape = std::move(shape);
    n->dtype = dt;
    if (dt == DType::F32)
        n->f32.assign(static_cast<size_t>(count), 0.0f);
    else
        n->f64.assign(static_cast<size_t>(count), 0.0);
    return n;
}

}  // namespace

Tensor Tensor::zeros(std::vector<int64_t> shape, DType dt) {
    return Tensor(alloc_node(std::move(shape), dt));
}

Tensor Tensor::full(std::vector<int64_t> shape, double value, DType dt) {
    Tensor t = zeros(std::move(shape), dt);
    t.fill(value);
    return t;
}

Tensor Tensor::scalar(double value, DType dt) { return full({1}, value, dt); }

Tensor Tensor::from_vector(std::vector<int64_t> shape, const std::vector<float>& data) {
    Tensor t = zeros(std::move(shape), DType::F32);
    S3L_CHECK(t.numel() == static_cast<int64_t>(data.size()),
              "from_vector: shape wants ", t.numel(), " values, got ", data.size());
    std::copy(data.begin(), data.end(), t.node_->f32.begin());
    return t;
}

Tensor Tensor::from_vector(std::vector<int64_t> shape, const std::vector<double>& data) {
    Tensor t = zeros(std::move(shape), DType::F64);
    S3L_CHECK(t.numel() == static_cast<int64_t>(data.size()),
              "from_vector: shape wants ", t.numel(), " values, got ", data.size());
    std::copy(data.begin(), data.end(), t.node_->f64.begin());
    return t;
}

const std::vector<int64_t>& Tensor::shape() const {
    S3L_CHECK(node_, "undefined tensor");
    return node_->shape;
}

int64_t Tensor::dim(size_t i) const {
    const auto& s = shape();
    S3L_CHECK(i < s.size(), "dim index ", i, " out of range for rank ", s.size());
    return s[i];
}

size_t Tensor::rank() const { return shape().size(); }

int64_t Tensor::numel() const {
    S3L_CHECK(node_, "undefined tensor");
    return node_->numel();
}

DType Tensor::dtype() const {
    S3L_CHECK(node_, "undefined tensor");
    return node_->dtype;
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool b) {
    S3L_CHECK(node_, "undefined tensor");
    node_->requires_grad = b;
    return *this;
}

float* Tensor::f32() {
    S3L_CHECK(node_ && node_->dtype == DType::F32, "tensor is not f32");
    return node_->f32.data();
}
const float* Tensor::f32() const {
    S3L_CHECK(node_ && node_->dtype == DType::F32, "tensor is not f32");
    return node_->f32.data();
}
double* Tensor::f64() {
    S3L_CHECK(node_ && node_->dtype == DType::F64, "tensor is not f64");
    return node_->f64.data();
}
const double* Tensor::f64() const {
    S3L_CHECK(node_ && node_->dtype == DType::F64, "tensor is not f64");
    return node_->f64.data();
}

double Tensor::get(int64_t i) const {
    S3L_CHECK(node_ && i >= 0 && i < numel(), "flat index out of range");
    return node_->get(i);
}

void Tensor::set(int64_t i, double v) {
    S3L_CHECK(node_ && i >= 0 && i < numel(), "flat index out of range");
    node_->set(i, v);
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
    const auto& s = shape();
    S3L_CHECK(idx.size() == s.size(), "index rank mismatch");
    int64_t flat = 0;
    size_t k = 0;
    for (int64_t i : idx) {
        S3L_CHECK(i >= 0 && i < s[k], "index out of range at axis ", k);
        flat = flat * s[k] + i;
        ++k;
    }
    return node_->get(flat);
}

double Tensor::scalar_value() const {
    S3L_CHECK(numel() == 1, "scalar_value on tensor with ", numel(), " elements");
    return node_->get(0);
}

Tensor Tensor::grad() const {
    S3L_CHECK(node_, "undefined tensor");
    return node_->grad ? Tensor(node_->grad) : Tensor();
}

Tensor Tensor::ensure_grad() const {
    S3L_CHECK(node_, "undefined tensor");
    S3L_CHECK(node_->requires_grad, "ensure_grad on tensor without requires_grad");
    if (!node_->grad) node_->grad = alloc_node(node_->shape, node_->dtype);
    return Tensor(node_->grad);
}

void Tensor::zero_grad() const {
    S3L_CHECK(node_, "undefined tensor");
    node_->grad.reset();
}

Tensor Tensor::detach() const { return clone(); }

Tensor Tensor::clone() const {
    S3L_CHECK(node_, "undefined tensor");
    Tensor t = zeros(node_->shape, node_->dtype);
    t.node_->f32 = node_->f32;
    t.node_->f64 = node_->f64;
    return t;
}

Tensor Tensor::to(DType dt) const {
    S3L_CHECK(node_, "undefined tensor");
    if (dt == node_->dtype) return clone();
    Tensor t = zeros(node_->shape, dt);
    int64_t n = numel();
    for (int64_t i = 0; i < n; ++i) t.node_->set(i, node_->get(i));
    return t;
}

void Tensor::copy_values_from(const Tensor& src) {
    S3L_CHECK(node_ && src.node_, "undefined tensor");
    S3L_CHECK(shape() == src.shape() && dtype() == src.dtype(),
              "copy_values_from: shape/dtype mismatch");
    node_->f32 = src.node_->f32;
    node_->f64 = src.node_->f64;
}

void Tensor::fill(double v) {
    S3L_CHECK(node_, "undefined tensor");
    if (node_->dtype == DType::F32)
        std::fill(node_->f32.begin(), node_->f32.end(), static_cast<float>(v));
    else
        std::fill(node_->f64.begin(), node_->f64.end(), v);
}

void Tensor::backward() const {
    S3L_CHECK(node_, "backward on undefined tensor");
    S3L_CHECK(numel() == 1, "backward: loss must be scalar, has ", numel(), " elements");
    S3L_CHECK(node_->requires_grad, "backward: loss does not require grad");

    // Post-order DFS over parents; reversing gives a topological order in
    // which each record is processed exactly once.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    struct Frame {
        detail::Node* node;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({node_.get(), 0});
    visited.insert(node_.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            detail::Node* p = f.node->parents[f.next_parent++].node().get();
            if (p && p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    ensure_grad().fill(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward_fn && n->grad) n->backward_fn(*n);
    }
}

namespace detail {

Tensor make_op_result(std::vector<int64_t> shape, DType dt, const char* op,
                      std::vector<Tensor> parents, std::function<void(Node&)> backward_fn) {
    Tensor t = Tensor::zeros(std::move(shape), dt);
    t.node()->op = op;
    bool wants_grad = false;
    if (grad_enabled()) {
        for (const Tensor& p : parents)
            if (p.defined() && p.requires_grad()) {
                wants_grad = true;
                break;
            }
    }
    if (wants_grad) {
        t.node()->requires_grad = true;
        t.node()->parents = std::move(parents);
        t.node()->backward_fn = std::move(backward_fn);
    }
    return t;
}

void accumulate_grad(const Tensor& dst, const std::vector<double>& contrib) {
    if (!dst.requires_grad()) return;
    Tensor g = dst.ensure_grad();
    S3L_CHECK(static_cast<int64_t>(contrib.size()) == g.numel(),
              "accumulate_grad: size mismatch");
    auto& n = *g.node();
    int64_t count = g.numel();
    for (int64_t i = 0; i < count; ++i) n.set(i, n.get(i) + contrib[static_cast<size_t>(i)]);
}

void check_finite(const Tensor& t, const char* op) {
    const auto& n = *t.node();
    if (n.dtype == DType::F32) {
        for (float v : n.f32)
            if (!std::isfinite(v)) throw Error(std::string("non-finite value produced by ") + op);
    } else {
        for (double v : n.f64)
            if (!std::isfinite(v)) throw Error(std::string("non-finite value produced by ") + op);
    }
}

}  // namespace detail

}  // namespace s3l
