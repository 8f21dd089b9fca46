#include "s3l/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace s3l {

namespace detail {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
void gemm_impl(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool trans_a,
               bool trans_b, bool accumulate) {
    CMapMat<T> A(a, trans_a ? k : m, trans_a ? m : k);
    CMapMat<T> B(b, trans_b ? n : k, trans_b ? k : n);
    MapMat<T> C(c, m, n);
    if (!trans_a && !trans_b) {
        if (accumulate) C.noalias() += A * B;
        else C.noalias() = A * B;
    } else if (trans_a && !trans_b) {
        if (accumulate) C.noalias() += A.transpose() * B;
        else C.noalias() = A.transpose() * B;
    } else if (!trans_a && trans_b) {
        if (accumulate) C.noalias() += A * B.transpose();
        else C.noalias() = A * B.transpose();
    } else {
        if (accumulate) C.noalias() += A.transpose() * B.transpose();
        else C.noalias() = A.transpose() * B.transpose();
    }
}

}  // namespace

void gemm_f32(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n,
              bool trans_a, bool trans_b, bool accumulate) {
    gemm_impl(a, b, c, m, k, n, trans_a, trans_b, accumulate);
}

void gemm_f64(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
              bool trans_a, bool trans_b, bool accumulate) {
    gemm_impl(a, b, c, m, k, n, trans_a, trans_b, accumulate);
}

int64_t conv_out_extent(int64_t in, int64_t kernel, int64_t stride, int64_t padding) {
    return (in + 2 * padding - kernel) / stride + 1;
}

}  // namespace detail

namespace {

using detail::Node;

template <typename T>
const T* typed(const Tensor& t);
template <>
const float* typed<float>(const Tensor& t) {
    return t.f32();
}
template <>
const double* typed<double>(const Tensor& t) {
    return t.f64();
}

template <typename T>
T* typed_mut(Tensor& t);
template <>
float* typed_mut<float>(Tensor& t) {
    return t.f32();
}
template <>
double* typed_mut<double>(Tensor& t) {
    return t.f64();
}

template <typename F>
void dispatch(DType dt, F&& f) {
    if (dt == DType::F32)
        f(float{});
    else
        f(double{});
}

template <typename T>
void gemm(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool trans_a,
          bool trans_b, bool accumulate) {
    if constexpr (std::is_same_v<T, float>)
        detail::gemm_f32(a, b, c, m, k, n, trans_a, trans_b, accumulate);
    else
        detail::gemm_f64(a, b, c, m, k, n, trans_a, trans_b, accumulate);
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
    S3L_CHECK(a.defined() && b.defined(), op, ": undefined input");
    S3L_CHECK(a.dtype() == b.dtype(), op, ": dtype mismatch");
    S3L_CHECK(a.shape() == b.shape(), op, ": shape mismatch");
}

// Grad tensor of `self`, typed.
template <typename T>
const T* self_grad(Node& self) {
    return typed<T>(Tensor(self.grad));
}

}  // namespace

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    require_same(a, b, "add");
    Tensor y = detail::make_op_result(a.shape(), a.dtype(), "add", {a, b}, [a, b](Node& self) {
        dispatch(a.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const T* gy = self_grad<T>(self);
            int64_t n = a.numel();
            if (a.requires_grad()) {
                Tensor g = a.ensure_grad();
                T* ga = typed_mut<T>(g);
                for (int64_t i = 0; i < n; ++i) ga[i] += gy[i];
            }
            if (b.requires_grad()) {
                Tensor g = b.ensure_grad();
                T* gb = typed_mut<T>(g);
                for (int64_t i = 0; i < n; ++i) gb[i] += gy[i];
            }
        });
    });
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* pa = typed<T>(a);
        const T* pb = typed<T>(b);
        T* py = typed_mut<T>(y);
        int64_t n = a.numel();
        for (int64_t i = 0; i < n; ++i) py[i] = pa[i] + pb[i];
    });
    detail::check_finite(y, "add");
    return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same(a, b, "sub");
    Tensor y = detail::make_op_result(a.shape(), a.dtype(), "sub", {a, b}, [a, b](Node& self) {
        dispatch(a.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const T* gy = self_grad<T>(self);
            int64_t n = a.numel();
            if (a.requires_grad()) {
                Tensor g = a.ensure_grad();
                T* ga = typed_mut<T>(g);
                for (int64_t i = 0; i < n; ++i) ga[i] += gy[i];
            }
            if (b.requires_grad()) {
                Tensor g = b.ensure_grad();
                T* gb = typed_mut<T>(g);
                for (int64_t i = 0; i < n; ++i) gb[i] -= gy[i];
            }
        });
    });
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* pa = typed<T>(a);
        const T* pb = typed<T>(b);
        T* py = typed_mut<T>(y);
        int64_t n = a.numel();
        for (int64_t i = 0; i < n; ++i) py[i] = pa[i] - pb[i];
    });
    detail::check_finite(y, "sub");
    return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same(a, b, "mul");
    Tensor y = detail::make_op_result(a.shape(), a.dtype(), "mul", {a, b}, [a, b](Node& self) {
        dispatch(a.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const T* gy = self_grad<T>(self);
            const T* pa = typed<T>(a);
            const T* pb = typed<T>(b);
            int64_t n = a.numel();
            if (a.requires_grad()) {
                Tensor g = a.ensure_grad();
                T* ga = typed_mut<T>(g);
                for (int64_t i = 0; i < n; ++i) ga[i] += gy[i] * pb[i];
            }
            if (b.requires_grad()) {
                Tensor g = b.ensure_grad();
                T* gb = typed_mut<T>(g);
                for (int64_t i = 0; i < n; ++i) gb[i] += gy[i] * pa[i];
            }
        });
    });
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* pa = typed<T>(a);
        const T* pb = typed<T>(b);
        T* py = typed_mut<T>(y);
        int64_t n = a.numel();
        for (int64_t i = 0; i < n; ++i) py[i] = pa[i] * pb[i];
    });
    detail::check_finite(y, "mul");
    return y;
}

Tensor scale(const Tensor& a, double s) { return affine(a, s, 0.0); }

Tensor affine(const Tensor& x, double a, double b) {
    S3L_CHECK(x.defined(), "affine: undefined input");
    Tensor y = detail::make_op_result(x.shape(), x.dtype(), "affine", {x}, [x, a](Node& self) {
        if (!x.requires_grad()) return;
        dispatch(x.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const T* gy = self_grad<T>(self);
            Tensor g = x.ensure_grad();
            T* gx = typed_mut<T>(g);
            int64_t n = x.numel();
            T ta = static_cast<T>(a);
            for (int64_t i = 0; i < n; ++i) gx[i] += ta * gy[i];
        });
    });
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* px = typed<T>(x);
        T* py = typed_mut<T>(y);
        int64_t n = x.numel();
        T ta = static_cast<T>(a), tb = static_cast<T>(b);
        for (int64_t i = 0; i < n; ++i) py[i] = ta * px[i] + tb;
    });
    detail::check_finite(y, "affine");
    return y;
}

Tensor relu(const Tensor& x) {
    S3L_CHECK(x.defined(), "relu: undefined input");
    Tensor y = detail::make_op_result(x.shape(), x.dtype(), "relu", {x}, [x](Node& self) {
        if (!x.requires_grad()) return;
        // subgradient at 0 is 0
        dispatch(x.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const T* gy = self_grad<T>(self);
            const T* px = typed<T>(x);
            Tensor g = x.ensure_grad();
            T* gx = typed_mut<T>(g);
            int64_t n = x.numel();
            for (int64_t i = 0; i < n; ++i)
                if (px[i] > T(0)) gx[i] += gy[i];
        });
    });
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* px = typed<T>(x);
        T* py = typed_mut<T>(y);
        int64_t n = x.numel();
        for (int64_t i = 0; i < n; ++i) py[i] = px[i] > T(0) ? px[i] : T(0);
    });
    detail::check_finite(y, "relu");
    return y;
}

// ---- shape -----------------------------------------------------------------

Tensor reshape(const Tensor& x, std::vector<int64_t> shape) {
    S3L_CHECK(x.defined(), "reshape: undefined input");
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    S3L_CHECK(n == x.numel(), "reshape: element count mismatch");
    Tensor y = detail::make_op_result(shape, x.dtype(), "reshape", {x}, [x](Node& self) {
        if (!x.requires_grad()) return;
        dispatch(x.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const T* gy = self_grad<T>(self);
            Tensor g = x.ensure_grad();
            T* gx = typed_mut<T>(g);
            int64_t n = x.numel();
            for (int64_t i = 0; i < n; ++i) gx[i] += gy[i];
        });
    });
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        std::memcpy(typed_mut<T>(y), typed<T>(x), sizeof(T) * static_cast<size_t>(n));
    });
    return y;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    S3L_CHECK(a.defined() && b.defined(), "concat_cols: undefined input");
    S3L_CHECK(a.dtype() == b.dtype(), "concat_cols: dtype mismatch");
    S3L_CHECK(a.rank() == 2 && b.rank() == 2 && a.dim(0) == b.dim(0),
              "concat_cols: inputs must be [N,p] and [N,q]");
    int64_t rows = a.dim(0), p = a.dim(1), q = b.dim(1);
    Tensor y = detail::make_op_result({rows, p + q}, a.dtype(), "concat_cols", {a, b},
                                      [a, b, rows, p, q](Node& self) {
        dispatch(a.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const T* gy = self_grad<T>(self);
            if (a.requires_grad()) {
                Tensor g = a.ensure_grad();
                T* ga = typed_mut<T>(g);
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t c = 0; c < p; ++c) ga[r * p + c] += gy[r * (p + q) + c];
            }
            if (b.requires_grad()) {
                Tensor g = b.ensure_grad();
                T* gb = typed_mut<T>(g);
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t c = 0; c < q; ++c) gb[r * q + c] += gy[r * (p + q) + p + c];
            }
        });
    });
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* pa = typed<T>(a);
        const T* pb = typed<T>(b);
        T* py = typed_mut<T>(y);
        for (int64_t r = 0; r < rows; ++r) {
            std::memcpy(py + r * (p + q), pa + r * p, sizeof(T) * static_cast<size_t>(p));
            std::memcpy(py + r * (p + q) + p, pb + r * q, sizeof(T) * static_cast<size_t>(q));
        }
    });
    return y;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    S3L_CHECK(a.defined() && b.defined(), "concat_rows: undefined input");
    S3L_CHECK(a.dtype() == b.dtype(), "concat_rows: dtype mismatch");
    S3L_CHECK(a.rank() == b.rank() && a.rank() >= 1, "concat_rows: rank mismatch");
    for (size_t i = 1; i < a.rank(); ++i)
        S3L_CHECK(a.dim(i) == b.dim(i), "concat_rows: trailing dims disagree at axis ", i);
    std::vector<int64_t> shape = a.shape();
    shape[0] += b.dim(0);
    int64_t na = a.numel(), nb = b.numel();
    Tensor y = detail::make_op_result(shape, a.dtype(), "concat_rows", {a, b},
                                      [a, b, na, nb](Node& self) {
        dispatch(a.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const T* gy = self_grad<T>(self);
            if (a.requires_grad()) {
                Tensor g = a.ensure_grad();
                T* ga = typed_mut<T>(g);
                for (int64_t i = 0; i < na; ++i) ga[i] += gy[i];
            }
            if (b.requires_grad()) {
                Tensor g = b.ensure_grad();
                T* gb = typed_mut<T>(g);
                for (int64_t i = 0; i < nb; ++i) gb[i] += gy[na + i];
            }
        });
    });
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        T* py = typed_mut<T>(y);
        std::memcpy(py, typed<T>(a), sizeof(T) * static_cast<size_t>(na));
        std::memcpy(py + na, typed<T>(b), sizeof(T) * static_cast<size_t>(nb));
    });
    return y;
}

Tensor pick(const Tensor& x, std::vector<int64_t> idx) {
    S3L_CHECK(x.defined(), "pick: undefined input");
    const auto& s = x.shape();
    S3L_CHECK(idx.size() == s.size(), "pick: index rank mismatch");
    int64_t flat = 0;
    for (size_t k = 0; k < idx.size(); ++k) {
        S3L_CHECK(idx[k] >= 0 && idx[k] < s[k], "pick: index out of range at axis ", k);
        flat = flat * s[k] + idx[k];
    }
    Tensor y = detail::make_op_result({1}, x.dtype(), "pick", {x}, [x, flat](Node& self) {
        if (!x.requires_grad()) return;
        Tensor g = x.ensure_grad();
        g.set(flat, g.get(flat) + self.grad->get(0));
    });
    y.set(0, x.get(flat));
    return y;
}

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& x) {
    S3L_CHECK(x.defined(), "sum: undefined input");
    Tensor y = detail::make_op_result({1}, x.dtype(), "sum", {x}, [x](Node& self) {
        if (!x.requires_grad()) return;
        dispatch(x.dtype(), [&](auto tag) {
            using T = decltype(tag);
            T gy = static_cast<T>(self.grad->get(0));
            Tensor g = x.ensure_grad();
            T* gx = typed_mut<T>(g);
            int64_t n = x.numel();
            for (int64_t i = 0; i < n; ++i) gx[i] += gy;
        });
    });
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* px = typed<T>(x);
        T acc = T(0);
        int64_t n = x.numel();
        for (int64_t i = 0; i < n; ++i) acc += px[i];
        typed_mut<T>(y)[0] = acc;
    });
    detail::check_finite(y, "sum");
    return y;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    S3L_CHECK(a.defined() && b.defined(), "matmul: undefined input");
    S3L_CHECK(a.dtype() == b.dtype(), "matmul: dtype mismatch");
    S3L_CHECK(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
              "matmul: inner dimensions disagree");
    int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor y = detail::make_op_result({m, n}, a.dtype(), "matmul", {a, b}, [a, b, m, k, n](Node& self) {
        dispatch(a.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const T* gy = self_grad<T>(self);
            if (a.requires_grad()) {
                Tensor g = a.ensure_grad();
                gemm<T>(gy, typed<T>(b), typed_mut<T>(g), m, n, k, false, true, true);
            }
            if (b.requires_grad()) {
                Tensor g = b.ensure_grad();
                gemm<T>(typed<T>(a), gy, typed_mut<T>(g), k, m, n, true, false, true);
            }
        });
    });
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        gemm<T>(typed<T>(a), typed<T>(b), typed_mut<T>(y), m, k, n, false, false, false);
    });
    detail::check_finite(y, "matmul");
    return y;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    S3L_CHECK(a.defined() && b.defined(), "matmul_nt: undefined input");
    S3L_CHECK(a.dtype() == b.dtype(), "matmul_nt: dtype mismatch");
    S3L_CHECK(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(1),
              "matmul_nt: inner dimensions disagree");
    int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    Tensor y = detail::make_op_result({m, n}, a.dtype(), "matmul_nt", {a, b}, [a, b, m, k, n](Node& self) {
        dispatch(a.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const T* gy = self_grad<T>(self);
            if (a.requires_grad()) {
                Tensor g = a.ensure_grad();
                gemm<T>(gy, typed<T>(b), typed_mut<T>(g), m, n, k, false, false, true);
            }
            if (b.requires_grad()) {
                Tensor g = b.ensure_grad();
                gemm<T>(gy, typed<T>(a), typed_mut<T>(g), n, m, k, true, false, true);
            }
        });
    });
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        gemm<T>(typed<T>(a), typed<T>(b), typed_mut<T>(y), m, k, n, false, true, false);
    });
    detail::check_finite(y, "matmul_nt");
    return y;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    S3L_CHECK(x.defined() && w.defined() && b.defined(), "linear: undefined input");
    S3L_CHECK(x.dtype() == w.dtype() && x.dtype() == b.dtype(), "linear: dtype mismatch");
    S3L_CHECK(x.rank() == 2 && w.rank() == 2 && b.rank() == 1, "linear: want x[N,in] w[out,in] b[out]");
    S3L_CHECK(x.dim(1) == w.dim(1), "linear: in features disagree (", x.dim(1), " vs ", w.dim(1), ")");
    S3L_CHECK(w.dim(0) == b.dim(0), "linear: bias length disagrees with out features");
    int64_t rows = x.dim(0), in = x.dim(1), out = w.dim(0);
    Tensor y = detail::make_op_result({rows, out}, x.dtype(), "linear", {x, w, b},
                                      [x, w, b, rows, in, out](Node& self) {
        dispatch(x.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const T* gy = self_grad<T>(self);
            if (x.requires_grad()) {
                Tensor g = x.ensure_grad();
                gemm<T>(gy, typed<T>(w), typed_mut<T>(g), rows, out, in, false, false, true);
            }
            if (w.requires_grad()) {
                Tensor g = w.ensure_grad();
                gemm<T>(gy, typed<T>(x), typed_mut<T>(g), out, rows, in, true, false, true);
            }
            if (b.requires_grad()) {
                Tensor g = b.ensure_grad();
                T* gb = typed_mut<T>(g);
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t c = 0; c < out; ++c) gb[c] += gy[r * out + c];
            }
        });
    });
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        T* py = typed_mut<T>(y);
        gemm<T>(typed<T>(x), typed<T>(w), py, rows, in, out, false, true, false);
        const T* pb = typed<T>(b);
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < out; ++c) py[r * out + c] += pb[c];
    });
    detail::check_finite(y, "linear");
    return y;
}

Tensor rowwise_dot(const Tensor& a, const Tensor& b) {
    S3L_CHECK(a.defined() && b.defined(), "rowwise_dot: undefined input");
    S3L_CHECK(a.dtype() == b.dtype(), "rowwise_dot: dtype mismatch");
    S3L_CHECK(a.rank() == 2 && a.shape() == b.shape(), "rowwise_dot: want matching [N,d]");
    int64_t rows = a.dim(0), d = a.dim(1);
    Tensor y = detail::make_op_result({rows}, a.dtype(), "rowwise_dot", {a, b},
                                      [a, b, rows, d](Node& self) {
        dispatch(a.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const T* gy = self_grad<T>(self);
            const T* pa = typed<T>(a);
            const T* pb = typed<T>(b);
            if (a.requires_grad()) {
                Tensor g = a.ensure_grad();
                T* ga = typed_mut<T>(g);
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t c = 0; c < d; ++c) ga[r * d + c] += gy[r] * pb[r * d + c];
            }
            if (b.requires_grad()) {
                Tensor g = b.ensure_grad();
                T* gb = typed_mut<T>(g);
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t c = 0; c < d; ++c) gb[r * d + c] += gy[r] * pa[r * d + c];
            }
        });
    });
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* pa = typed<T>(a);
        const T* pb = typed<T>(b);
        T* py = typed_mut<T>(y);
        for (int64_t r = 0; r < rows; ++r) {
            T acc = T(0);
            for (int64_t c = 0; c < d; ++c) acc += pa[r * d + c] * pb[r * d + c];
            py[r] = acc;
        }
    });
    detail::check_finite(y, "rowwise_dot");
    return y;
}

// ---- convolution & pooling -------------------------------------------------

namespace {

struct ConvDims {
    int64_t batch, cin, h, w;
    int64_t cout, kh, kw;
    int64_t stride, pad;
    int64_t ho, wo;
    int64_t patch() const { return cin * kh * kw; }
    int64_t out_spatial() const { return ho * wo; }
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
    S3L_CHECK(x.rank() == 4, "conv2d: input must be NCHW");
    S3L_CHECK(w.rank() == 4, "conv2d: weight must be OIHW");
    S3L_CHECK(stride >= 1 && pad >= 0, "conv2d: bad stride/padding");
    ConvDims d;
    d.batch = x.dim(0);
    d.cin = x.dim(1);
    d.h = x.dim(2);
    d.w = x.dim(3);
    d.cout = w.dim(0);
    d.kh = w.dim(2);
    d.kw = w.dim(3);
    d.stride = stride;
    d.pad = pad;
    S3L_CHECK(w.dim(1) == d.cin, "conv2d: channel counts disagree (input ", d.cin, ", weight ",
              w.dim(1), ")");
    d.ho = detail::conv_out_extent(d.h, d.kh, stride, pad);
    d.wo = detail::conv_out_extent(d.w, d.kw, stride, pad);
    S3L_CHECK(d.ho > 0 && d.wo > 0, "conv2d: non-positive output size (", d.ho, "x", d.wo, ")");
    return d;
}

// cols is [patch, batch*ho*wo]; column index n*(ho*wo) + oy*wo + ox.
template <typename T>
void im2col(const T* x, const ConvDims& d, T* cols) {
    int64_t spatial = d.out_spatial();
    int64_t width = d.batch * spatial;
    for (int64_t ci = 0; ci < d.cin; ++ci) {
        for (int64_t ky = 0; ky < d.kh; ++ky) {
            for (int64_t kx = 0; kx < d.kw; ++kx) {
                T* row = cols + ((ci * d.kh + ky) * d.kw + kx) * width;
                for (int64_t n = 0; n < d.batch; ++n) {
                    const T* xn = x + (n * d.cin + ci) * d.h * d.w;
                    for (int64_t oy = 0; oy < d.ho; ++oy) {
                        int64_t iy = oy * d.stride + ky - d.pad;
                        T* dst = row + n * spatial + oy * d.wo;
                        if (iy < 0 || iy >= d.h) {
                            std::fill(dst, dst + d.wo, T(0));
                            continue;
                        }
                        for (int64_t ox = 0; ox < d.wo; ++ox) {
                            int64_t ix = ox * d.stride + kx - d.pad;
                            dst[ox] = (ix >= 0 && ix < d.w) ? xn[iy * d.w + ix] : T(0);
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* cols, const ConvDims& d, T* gx) {
    int64_t spatial = d.out_spatial();
    int64_t width = d.batch * spatial;
    for (int64_t ci = 0; ci < d.cin; ++ci) {
        for (int64_t ky = 0; ky < d.kh; ++ky) {
            for (int64_t kx = 0; kx < d.kw; ++kx) {
                const T* row = cols + ((ci * d.kh + ky) * d.kw + kx) * width;
                for (int64_t n = 0; n < d.batch; ++n) {
                    T* xn = gx + (n * d.cin + ci) * d.h * d.w;
                    for (int64_t oy = 0; oy < d.ho; ++oy) {
                        int64_t iy = oy * d.stride + ky - d.pad;
                        if (iy < 0 || iy >= d.h) continue;
                        const T* src = row + n * spatial + oy * d.wo;
                        for (int64_t ox = 0; ox < d.wo; ++ox) {
                            int64_t ix = ox * d.stride + kx - d.pad;
                            if (ix >= 0 && ix < d.w) xn[iy * d.w + ix] += src[ox];
                        }
                    }
                }
            }
        }
    }
}

// y[n,o,p] <-> packed[o, n*spatial + p]
template <typename T>
void scatter_out(const T* packed, const ConvDims& d, T* y) {
    int64_t spatial = d.out_spatial();
    for (int64_t n = 0; n < d.batch; ++n)
        for (int64_t o = 0; o < d.cout; ++o)
            std::memcpy(y + (n * d.cout + o) * spatial, packed + o * d.batch * spatial + n * spatial,
                        sizeof(T) * static_cast<size_t>(spatial));
}

template <typename T>
void gather_out(const T* y, const ConvDims& d, T* packed) {
    int64_t spatial = d.out_spatial();
    for (int64_t n = 0; n < d.batch; ++n)
        for (int64_t o = 0; o < d.cout; ++o)
            std::memcpy(packed + o * d.batch * spatial + n * spatial, y + (n * d.cout + o) * spatial,
                        sizeof(T) * static_cast<size_t>(spatial));
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int padding) {
    S3L_CHECK(x.defined() && w.defined(), "conv2d: undefined input");
    S3L_CHECK(x.dtype() == w.dtype(), "conv2d: dtype mismatch");
    ConvDims d = conv_dims(x, w, stride, padding);
    Tensor y = detail::make_op_result({d.batch, d.cout, d.ho, d.wo}, x.dtype(), "conv2d", {x, w},
                                      [x, w, d](Node& self) {
        dispatch(x.dtype(), [&](auto tag) {
            using T = decltype(tag);
            int64_t width = d.batch * d.out_spatial();
            std::vector<T> gpacked(static_cast<size_t>(d.cout * width));
            gather_out(self_grad<T>(self), d, gpacked.data());
            if (w.requires_grad()) {
                std::vector<T> cols(static_cast<size_t>(d.patch() * width));
                im2col(typed<T>(x), d, cols.data());
                Tensor g = w.ensure_grad();
                gemm<T>(gpacked.data(), cols.data(), typed_mut<T>(g), d.cout, width, d.patch(),
                        false, true, true);
            }
            if (x.requires_grad()) {
                std::vector<T> gcols(static_cast<size_t>(d.patch() * width));
                gemm<T>(typed<T>(w), gpacked.data(), gcols.data(), d.patch(), d.cout, width, true,
                        false, false);
                Tensor g = x.ensure_grad();
                col2im_add(gcols.data(), d, typed_mut<T>(g));
            }
        });
    });
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        int64_t width = d.batch * d.out_spatial();
        std::vector<T> cols(static_cast<size_t>(d.patch() * width));
        im2col(typed<T>(x), d, cols.data());
        std::vector<T> packed(static_cast<size_t>(d.cout * width));
        gemm<T>(typed<T>(w), cols.data(), packed.data(), d.cout, d.patch(), width, false, false,
                false);
        scatter_out(packed.data(), d, typed_mut<T>(y));
    });
    detail::check_finite(y, "conv2d");
    return y;
}

Tensor max_pool2d(const Tensor& x, int kernel, int stride, int padding) {
    S3L_CHECK(x.defined() && x.rank() == 4, "max_pool2d: input must be NCHW");
    S3L_CHECK(kernel >= 1 && stride >= 1 && padding >= 0, "max_pool2d: bad geometry");
    int64_t batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    int64_t ho = detail::conv_out_extent(h, kernel, stride, padding);
    int64_t wo = detail::conv_out_extent(w, kernel, stride, padding);
    S3L_CHECK(ho > 0 && wo > 0, "max_pool2d: non-positive output size");

    auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(batch * c * ho * wo));
    Tensor y = detail::make_op_result({batch, c, ho, wo}, x.dtype(), "max_pool2d", {x},
                                      [x, argmax](Node& self) {
        if (!x.requires_grad()) return;
        dispatch(x.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const T* gy = self_grad<T>(self);
            Tensor g = x.ensure_grad();
            T* gx = typed_mut<T>(g);
            for (size_t i = 0; i < argmax->size(); ++i) gx[(*argmax)[i]] += gy[i];
        });
    });
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* px = typed<T>(x);
        T* py = typed_mut<T>(y);
        int64_t out_i = 0;
        for (int64_t n = 0; n < batch; ++n) {
            for (int64_t ci = 0; ci < c; ++ci) {
                const T* plane = px + (n * c + ci) * h * w;
                int64_t base = (n * c + ci) * h * w;
                for (int64_t oy = 0; oy < ho; ++oy) {
                    for (int64_t ox = 0; ox < wo; ++ox, ++out_i) {
                        T best = -std::numeric_limits<T>::infinity();
                        int64_t best_idx = -1;
                        for (int64_t ky = 0; ky < kernel; ++ky) {
                            int64_t iy = oy * stride + ky - padding;
                            if (iy < 0 || iy >= h) continue;
                            for (int64_t kx = 0; kx < kernel; ++kx) {
                                int64_t ix = ox * stride + kx - padding;
                                if (ix < 0 || ix >= w) continue;
                                T v = plane[iy * w + ix];
                                if (v > best) {
                                    best = v;
                                    best_idx = base + iy * w + ix;
                                }
                            }
                        }
                        S3L_CHECK(best_idx >= 0, "max_pool2d: window fully outside input");
                        py[out_i] = best;
                        (*argmax)[static_cast<size_t>(out_i)] = best_idx;
                    }
                }
            }
        }
    });
    detail::check_finite(y, "max_pool2d");
    return y;
}

Tensor global_avg_pool(const Tensor& x) {
    S3L_CHECK(x.defined() && x.rank() == 4, "global_avg_pool: input must be NCHW");
    int64_t batch = x.dim(0), c = x.dim(1), spatial = x.dim(2) * x.dim(3);
    Tensor y = detail::make_op_result({batch, c}, x.dtype(), "global_avg_pool", {x},
                                      [x, batch, c, spatial](Node& self) {
        if (!x.requires_grad()) return;
        dispatch(x.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const T* gy = self_grad<T>(self);
            Tensor g = x.ensure_grad();
            T* gx = typed_mut<T>(g);
            T inv = T(1) / static_cast<T>(spatial);
            for (int64_t n = 0; n < batch; ++n)
                for (int64_t ci = 0; ci < c; ++ci) {
                    T v = gy[n * c + ci] * inv;
                    T* plane = gx + (n * c + ci) * spatial;
                    for (int64_t p = 0; p < spatial; ++p) plane[p] += v;
                }
        });
    });
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* px = typed<T>(x);
        T* py = typed_mut<T>(y);
        for (int64_t n = 0; n < batch; ++n)
            for (int64_t ci = 0; ci < c; ++ci) {
                const T* plane = px + (n * c + ci) * spatial;
                T acc = T(0);
                for (int64_t p = 0; p < spatial; ++p) acc += plane[p];
                py[n * c + ci] = acc / static_cast<T>(spatial);
            }
    });
    detail::check_finite(y, "global_avg_pool");
    return y;
}

// ---- normalization ---------------------------------------------------------

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BnStats* stats,
                  bool train, double momentum, double eps) {
    S3L_CHECK(x.defined() && gamma.defined() && beta.defined(), "batch_norm: undefined input");
    S3L_CHECK(x.rank() == 4 || x.rank() == 2, "batch_norm: input must be NCHW or [N,C]");
    int64_t batch = x.dim(0);
    int64_t c = x.dim(1);
    int64_t spatial = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
    int64_t m = batch * spatial;
    S3L_CHECK(gamma.rank() == 1 && gamma.dim(0) == c, "batch_norm: gamma length must equal C");
    S3L_CHECK(beta.rank() == 1 && beta.dim(0) == c, "batch_norm: beta length must equal C");
    S3L_CHECK(!train || m >= 2, "batch_norm: train mode requires batch*H*W >= 2");
    if (stats) {
        S3L_CHECK(stats->mean.defined() && stats->mean.dim(0) == c, "batch_norm: running mean length");
        S3L_CHECK(stats->var.defined() && stats->var.dim(0) == c, "batch_norm: running var length");
    } else {
        S3L_CHECK(train, "batch_norm: eval mode needs running statistics");
    }

    // Per-channel mean and inverse stddev used for this forward; captured for
    // the backward closure so later buffer updates cannot skew it.
    auto mu = std::make_shared<std::vector<double>>(static_cast<size_t>(c));
    auto invstd = std::make_shared<std::vector<double>>(static_cast<size_t>(c));

    std::vector<double> var(static_cast<size_t>(c));
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* px = typed<T>(x);
        for (int64_t ci = 0; ci < c; ++ci) {
            double channel_mean, channel_var;
            if (train) {
                double s = 0;
                for (int64_t n = 0; n < batch; ++n) {
                    const T* plane = px + (n * c + ci) * spatial;
                    for (int64_t p = 0; p < spatial; ++p) s += plane[p];
                }
                channel_mean = s / static_cast<double>(m);
                double sq = 0;
                for (int64_t n = 0; n < batch; ++n) {
                    const T* plane = px + (n * c + ci) * spatial;
                    for (int64_t p = 0; p < spatial; ++p) {
                        double dlt = plane[p] - channel_mean;
                        sq += dlt * dlt;
                    }
                }
                channel_var = sq / static_cast<double>(m);
            } else {
                channel_mean = stats->mean.get(ci);
                channel_var = std::max(stats->var.get(ci), 0.0);
            }
            (*mu)[static_cast<size_t>(ci)] = channel_mean;
            var[static_cast<size_t>(ci)] = channel_var;
            (*invstd)[static_cast<size_t>(ci)] = 1.0 / std::sqrt(channel_var + eps);
        }
    });

    Tensor y = detail::make_op_result(x.shape(), x.dtype(), "batch_norm", {x, gamma, beta},
                                      [x, gamma, beta, mu, invstd, train, batch, c, spatial,
                                       m](Node& self) {
        dispatch(x.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const T* gy = self_grad<T>(self);
            const T* px = typed<T>(x);
            Tensor gx_t, gg_t, gb_t;
            T* gx = nullptr;
            T* gg = nullptr;
            T* gb = nullptr;
            if (x.requires_grad()) {
                gx_t = x.ensure_grad();
                gx = typed_mut<T>(gx_t);
            }
            if (gamma.requires_grad()) {
                gg_t = gamma.ensure_grad();
                gg = typed_mut<T>(gg_t);
            }
            if (beta.requires_grad()) {
                gb_t = beta.ensure_grad();
                gb = typed_mut<T>(gb_t);
            }
            for (int64_t ci = 0; ci < c; ++ci) {
                double cmu = (*mu)[static_cast<size_t>(ci)];
                double cis = (*invstd)[static_cast<size_t>(ci)];
                double g = gamma.get(ci);
                double s1 = 0, s2 = 0;
                for (int64_t n = 0; n < batch; ++n) {
                    const T* gyp = gy + (n * c + ci) * spatial;
                    const T* xp = px + (n * c + ci) * spatial;
                    for (int64_t p = 0; p < spatial; ++p) {
                        double xhat = (xp[p] - cmu) * cis;
                        s1 += gyp[p];
                        s2 += gyp[p] * xhat;
                    }
                }
                if (gg) gg[ci] += static_cast<T>(s2);
                if (gb) gb[ci] += static_cast<T>(s1);
                if (gx) {
                    double inv_m = 1.0 / static_cast<double>(m);
                    for (int64_t n = 0; n < batch; ++n) {
                        const T* gyp = gy + (n * c + ci) * spatial;
                        const T* xp = px + (n * c + ci) * spatial;
                        T* gxp = gx + (n * c + ci) * spatial;
                        for (int64_t p = 0; p < spatial; ++p) {
                            double xhat = (xp[p] - cmu) * cis;
                            double d = train ? g * cis * (gyp[p] - s1 * inv_m - xhat * s2 * inv_m)
                                             : g * cis * gyp[p];
                            gxp[p] += static_cast<T>(d);
                        }
                    }
                }
            }
        });
    });

    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* px = typed<T>(x);
        T* py = typed_mut<T>(y);
        for (int64_t ci = 0; ci < c; ++ci) {
            double cmu = (*mu)[static_cast<size_t>(ci)];
            double cis = (*invstd)[static_cast<size_t>(ci)];
            double g = gamma.get(ci);
            double bta = beta.get(ci);
            for (int64_t n = 0; n < batch; ++n) {
                const T* xp = px + (n * c + ci) * spatial;
                T* yp = py + (n * c + ci) * spatial;
                for (int64_t p = 0; p < spatial; ++p)
                    yp[p] = static_cast<T>(g * (xp[p] - cmu) * cis + bta);
            }
        }
    });

    if (train && stats) {
        double unbias = static_cast<double>(m) / static_cast<double>(m - 1);
        for (int64_t ci = 0; ci < c; ++ci) {
            stats->mean.set(ci, (1.0 - momentum) * stats->mean.get(ci) +
                                    momentum * (*mu)[static_cast<size_t>(ci)]);
            stats->var.set(ci, (1.0 - momentum) * stats->var.get(ci) +
                                   momentum * var[static_cast<size_t>(ci)] * unbias);
        }
    }
    detail::check_finite(y, "batch_norm");
    return y;
}

Tensor l2_normalize(const Tensor& x, int axis) {
    S3L_CHECK(x.defined(), "l2_normalize: undefined input");
    const auto& s = x.shape();
    S3L_CHECK(axis >= 0 && axis < static_cast<int>(s.size()), "l2_normalize: bad axis");
    int64_t outer = 1, inner = 1, len = s[static_cast<size_t>(axis)];
    for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];

    auto norms = std::make_shared<std::vector<double>>(static_cast<size_t>(outer * inner));
    constexpr double kEps = 1e-12;

    Tensor y = detail::make_op_result(x.shape(), x.dtype(), "l2_normalize", {x},
                                      [x, norms, outer, inner, len](Node& self) {
        if (!x.requires_grad()) return;
        dispatch(x.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const T* gy = self_grad<T>(self);
            const T* px = typed<T>(x);
            Tensor g = x.ensure_grad();
            T* gx = typed_mut<T>(g);
            for (int64_t o = 0; o < outer; ++o) {
                for (int64_t i = 0; i < inner; ++i) {
                    double r = (*norms)[static_cast<size_t>(o * inner + i)];
                    int64_t base = o * len * inner + i;
                    double dot = 0;
                    for (int64_t l = 0; l < len; ++l) {
                        int64_t idx = base + l * inner;
                        dot += static_cast<double>(gy[idx]) * px[idx] / r;
                    }
                    for (int64_t l = 0; l < len; ++l) {
                        int64_t idx = base + l * inner;
                        double u = px[idx] / r;
                        gx[idx] += static_cast<T>((gy[idx] - u * dot) / r);
                    }
                }
            }
        });
    });
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* px = typed<T>(x);
        T* py = typed_mut<T>(y);
        for (int64_t o = 0; o < outer; ++o) {
            for (int64_t i = 0; i < inner; ++i) {
                int64_t base = o * len * inner + i;
                double sq = 0;
                for (int64_t l = 0; l < len; ++l) {
                    double v = px[base + l * inner];
                    sq += v * v;
                }
                double r = std::sqrt(sq);
                S3L_CHECK(r > kEps, "l2_normalize: degenerate embedding (norm ", r, ")");
                (*norms)[static_cast<size_t>(o * inner + i)] = r;
                for (int64_t l = 0; l < len; ++l) {
                    int64_t idx = base + l * inner;
                    py[idx] = static_cast<T>(px[idx] / r);
                }
            }
        }
    });
    detail::check_finite(y, "l2_normalize");
    return y;
}

// ---- losses ----------------------------------------------------------------

namespace {

// Row-stable softmax probabilities in double precision.
std::shared_ptr<std::vector<double>> softmax_probs(const Tensor& logits) {
    int64_t rows = logits.dim(0), cols = logits.dim(1);
    auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(rows * cols));
    for (int64_t r = 0; r < rows; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t c = 0; c < cols; ++c) mx = std::max(mx, logits.get(r * cols + c));
        double denom = 0;
        for (int64_t c = 0; c < cols; ++c) {
            double e = std::exp(logits.get(r * cols + c) - mx);
            (*probs)[static_cast<size_t>(r * cols + c)] = e;
            denom += e;
        }
        for (int64_t c = 0; c < cols; ++c) (*probs)[static_cast<size_t>(r * cols + c)] /= denom;
    }
    return probs;
}

double row_logsumexp(const Tensor& logits, int64_t r) {
    int64_t cols = logits.dim(1);
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t c = 0; c < cols; ++c) mx = std::max(mx, logits.get(r * cols + c));
    double s = 0;
    for (int64_t c = 0; c < cols; ++c) s += std::exp(logits.get(r * cols + c) - mx);
    return mx + std::log(s);
}

}  // namespace

Tensor softmax(const Tensor& logits) {
    S3L_CHECK(logits.defined() && logits.rank() == 2, "softmax: want [N,C]");
    int64_t rows = logits.dim(0), cols = logits.dim(1);
    auto probs = softmax_probs(logits);
    Tensor y = detail::make_op_result(logits.shape(), logits.dtype(), "softmax", {logits},
                                      [logits, probs, rows, cols](Node& self) {
        if (!logits.requires_grad()) return;
        dispatch(logits.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const T* gy = self_grad<T>(self);
            Tensor g = logits.ensure_grad();
            T* gx = typed_mut<T>(g);
            for (int64_t r = 0; r < rows; ++r) {
                double dot = 0;
                for (int64_t c = 0; c < cols; ++c)
                    dot += static_cast<double>(gy[r * cols + c]) *
                           (*probs)[static_cast<size_t>(r * cols + c)];
                for (int64_t c = 0; c < cols; ++c) {
                    double p = (*probs)[static_cast<size_t>(r * cols + c)];
                    gx[r * cols + c] += static_cast<T>(p * (gy[r * cols + c] - dot));
                }
            }
        });
    });
    for (int64_t i = 0; i < rows * cols; ++i) y.set(i, (*probs)[static_cast<size_t>(i)]);
    detail::check_finite(y, "softmax");
    return y;
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int64_t>& targets) {
    S3L_CHECK(logits.defined() && logits.rank() == 2, "softmax_cross_entropy: want [N,C]");
    int64_t rows = logits.dim(0), cols = logits.dim(1);
    S3L_CHECK(cols >= 2, "softmax_cross_entropy: need C >= 2, got ", cols);
    S3L_CHECK(static_cast<int64_t>(targets.size()) == rows,
              "softmax_cross_entropy: target count mismatch");
    for (int64_t t : targets)
        S3L_CHECK(t >= 0 && t < cols, "softmax_cross_entropy: class index out of range");

    auto probs = softmax_probs(logits);
    auto tgt = std::make_shared<std::vector<int64_t>>(targets);
    Tensor y = detail::make_op_result({1}, logits.dtype(), "softmax_cross_entropy", {logits},
                                      [logits, probs, tgt, rows, cols](Node& self) {
        if (!logits.requires_grad()) return;
        dispatch(logits.dtype(), [&](auto tag) {
            using T = decltype(tag);
            double gy = self.grad->get(0) / static_cast<double>(rows);
            Tensor g = logits.ensure_grad();
            T* gx = typed_mut<T>(g);
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t c = 0; c < cols; ++c) {
                    double p = (*probs)[static_cast<size_t>(r * cols + c)];
                    double ind = (c == (*tgt)[static_cast<size_t>(r)]) ? 1.0 : 0.0;
                    gx[r * cols + c] += static_cast<T>(gy * (p - ind));
                }
        });
    });
    double loss = 0;
    for (int64_t r = 0; r < rows; ++r)
        loss += row_logsumexp(logits, r) - logits.get(r * cols + targets[static_cast<size_t>(r)]);
    y.set(0, loss / static_cast<double>(rows));
    detail::check_finite(y, "softmax_cross_entropy");
    return y;
}

Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& soft_targets) {
    S3L_CHECK(logits.defined() && logits.rank() == 2, "softmax_cross_entropy: want [N,C]");
    S3L_CHECK(soft_targets.defined() && soft_targets.shape() == logits.shape(),
              "softmax_cross_entropy: soft target shape mismatch");
    int64_t rows = logits.dim(0), cols = logits.dim(1);
    S3L_CHECK(cols >= 2, "softmax_cross_entropy: need C >= 2, got ", cols);
    for (int64_t r = 0; r < rows; ++r) {
        double s = 0;
        for (int64_t c = 0; c < cols; ++c) s += soft_targets.get(r * cols + c);
        S3L_CHECK(std::abs(s - 1.0) <= 1e-6, "softmax_cross_entropy: soft-target row ", r,
                  " sums to ", s, ", not 1");
    }
    auto probs = softmax_probs(logits);
    Tensor t_const = soft_targets.detach();
    Tensor y = detail::make_op_result({1}, logits.dtype(), "softmax_cross_entropy", {logits},
                                      [logits, probs, t_const, rows, cols](Node& self) {
        if (!logits.requires_grad()) return;
        dispatch(logits.dtype(), [&](auto tag) {
            using T = decltype(tag);
            double gy = self.grad->get(0) / static_cast<double>(rows);
            Tensor g = logits.ensure_grad();
            T* gx = typed_mut<T>(g);
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t c = 0; c < cols; ++c) {
                    double p = (*probs)[static_cast<size_t>(r * cols + c)];
                    gx[r * cols + c] += static_cast<T>(gy * (p - t_const.get(r * cols + c)));
                }
        });
    });
    double loss = 0;
    for (int64_t r = 0; r < rows; ++r) {
        double lse = row_logsumexp(logits, r);
        double dot = 0;
        for (int64_t c = 0; c < cols; ++c)
            dot += soft_targets.get(r * cols + c) * logits.get(r * cols + c);
        loss += lse - dot;
    }
    y.set(0, loss / static_cast<double>(rows));
    detail::check_finite(y, "softmax_cross_entropy");
    return y;
}

}  // namespace s3l
