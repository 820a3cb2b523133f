#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ltf/error.hpp"
#include "ltf/tensor.hpp"

namespace ltf {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

// Internal access + recording glue shared by every op.
struct OpBuilder {
    static const NodePtr& node(const Tensor& t) { return t.n_; }

    static Tensor wrap(std::vector<std::size_t> shape, std::vector<double> val) {
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->val = std::move(val);
        return Tensor(std::move(n));
    }

    static void record(const NodePtr& out, std::function<void()> fn) {
        out->requires_grad = true;
        Tape::active()->records_.push_back({out, std::move(fn)});
    }
};

namespace {

bool recording(std::initializer_list<const Tensor*> inputs) {
    if (Tape::active() == nullptr) return false;
    for (auto* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

void post_check(const Tensor& t, const char* op) {
    if (!checked_mode()) return;
    for (double v : t.values()) {
        if (!std::isfinite(v)) {
            throw NumericsError(std::string("non-finite output of ") + op);
        }
    }
}

// Accumulate src into dst->grad if dst participates in differentiation.
inline bool wants_grad(const NodePtr& n) { return n->requires_grad; }

// ---- broadcasting ----------------------------------------------------------
// Supported: identical shapes; a 1-element side treated as a scalar; one side
// with extra leading dims whose trailing dims equal the other shape exactly.
enum class Bcast { Same, ScalarA, ScalarB, BatchA, BatchB };

struct BcastPlan {
    Bcast kind;
    std::vector<std::size_t> out_shape;
    std::size_t inner = 1;  // element count of the smaller side (Batch cases)
};

bool is_suffix(const std::vector<std::size_t>& small,
               const std::vector<std::size_t>& big) {
    if (small.size() >= big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

BcastPlan resolve_bcast(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return {Bcast::Same, a.shape(), 0};
    if (a.size() == 1) return {Bcast::ScalarA, b.shape(), 0};
    if (b.size() == 1) return {Bcast::ScalarB, a.shape(), 0};
    if (is_suffix(b.shape(), a.shape())) return {Bcast::BatchA, a.shape(), b.size()};
    if (is_suffix(a.shape(), b.shape())) return {Bcast::BatchB, b.shape(), a.size()};
    throw DimensionError(std::string(op) + ": incompatible shapes");
}

// Generic elementwise binary op. FwdF(x,y)->v, DaF(x,y)->dv/dx, DbF(x,y)->dv/dy.
template <typename FwdF, typename DaF, typename DbF>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, FwdF fwd,
                 DaF dfa, DbF dfb) {
    const BcastPlan plan = resolve_bcast(a, b, name);
    const auto& av = a.values();
    const auto& bv = b.values();
    const std::size_t n = [&] {
        std::size_t m = 1;
        for (auto d : plan.out_shape) m *= d;
        return m;
    }();

    std::vector<double> out(n);
    auto bidx = [&](std::size_t i) -> std::size_t {
        switch (plan.kind) {
            case Bcast::Same: return i;
            case Bcast::ScalarA: return 0;     // index into a
            case Bcast::ScalarB: return 0;     // index into b
            case Bcast::BatchA: return i % plan.inner;  // index into b
            case Bcast::BatchB: return i % plan.inner;  // index into a
        }
        return 0;
    };
    for (std::size_t i = 0; i < n; ++i) {
        const double x = (plan.kind == Bcast::ScalarA)   ? av[0]
                         : (plan.kind == Bcast::BatchB) ? av[bidx(i)]
                                                        : av[i];
        const double y = (plan.kind == Bcast::ScalarB)   ? bv[0]
                         : (plan.kind == Bcast::BatchA) ? bv[bidx(i)]
                                                        : bv[i];
        out[i] = fwd(x, y);
    }

    Tensor r = OpBuilder::wrap(plan.out_shape, std::move(out));
    if (recording({&a, &b})) {
        auto an = OpBuilder::node(a);
        auto bn = OpBuilder::node(b);
        auto on = OpBuilder::node(r);
        OpBuilder::record(on, [an, bn, on, plan, dfa, dfb]() {
            const bool ga = wants_grad(an);
            const bool gb = wants_grad(bn);
            if (ga) an->ensure_grad();
            if (gb) bn->ensure_grad();
            const std::size_t n = on->val.size();
            for (std::size_t i = 0; i < n; ++i) {
                const double go = on->grad[i];
                if (go == 0.0) continue;
                std::size_t ia = i, ib = i;
                if (plan.kind == Bcast::ScalarA) ia = 0;
                if (plan.kind == Bcast::ScalarB) ib = 0;
                if (plan.kind == Bcast::BatchA) ib = i % plan.inner;
                if (plan.kind == Bcast::BatchB) ia = i % plan.inner;
                const double x = an->val[ia];
                const double y = bn->val[ib];
                if (ga) an->grad[ia] += go * dfa(x, y);
                if (gb) bn->grad[ib] += go * dfb(x, y);
            }
        });
    }
    post_check(r, name);
    return r;
}

template <typename FwdF, typename DF>
Tensor unary_op(const char* name, const Tensor& a, FwdF fwd, DF df) {
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);

    Tensor r = OpBuilder::wrap(a.shape(), std::move(out));
    if (recording({&a})) {
        auto an = OpBuilder::node(a);
        auto on = OpBuilder::node(r);
        OpBuilder::record(on, [an, on, df]() {
            an->ensure_grad();
            for (std::size_t i = 0; i < on->val.size(); ++i) {
                an->grad[i] += on->grad[i] * df(an->val[i], on->val[i]);
            }
        });
    }
    post_check(r, name);
    return r;
}

// C[m,n] (+)= A[m,k] * B[k,n], raw buffers, ikj order.
void gemm_acc(const double* A, const double* B, double* C, std::size_t m,
              std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double a = A[i * k + p];
            if (a == 0.0) continue;
            const double* brow = B + p * n;
            double* crow = C + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
}

// C[m,n] (+)= A[m,k] * B^T where B is [n,k].
void gemm_bt_acc(const double* A, const double* B, double* C, std::size_t m,
                 std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            const double* arow = A + i * k;
            const double* brow = B + j * k;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            C[i * n + j] += s;
        }
    }
}

// C[k,n] (+)= A^T * B where A is [m,k], B is [m,n].
void gemm_at_acc(const double* A, const double* B, double* C, std::size_t m,
                 std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = A + i * k;
        const double* brow = B + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double a = arow[p];
            if (a == 0.0) continue;
            double* crow = C + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
        }
    }
}

}  // namespace

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

Tensor neg(const Tensor& a) {
    return unary_op(
        "neg", a, [](double v) { return -v; },
        [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& a) {
    return unary_op(
        "exp", a, [](double v) { return std::exp(v); },
        [](double, double o) { return o; });
}

Tensor log(const Tensor& a) {
    return unary_op(
        "log", a, [](double v) { return std::log(v); },
        [](double v, double) { return 1.0 / v; });
}

Tensor tanh(const Tensor& a) {
    return unary_op(
        "tanh", a, [](double v) { return std::tanh(v); },
        [](double, double o) { return 1.0 - o * o; });
}

Tensor xlogx(const Tensor& a) {
    return unary_op(
        "xlogx", a, [](double v) { return v == 0.0 ? 0.0 : v * std::log(v); },
        [](double v, double) { return v == 0.0 ? 0.0 : std::log(v) + 1.0; });
}

Tensor square(const Tensor& a) {
    return unary_op(
        "square", a, [](double v) { return v * v; },
        [](double v, double) { return 2.0 * v; });
}

Tensor add_const(const Tensor& a, double c) {
    return unary_op(
        "add_const", a, [c](double v) { return v + c; },
        [](double, double) { return 1.0; });
}

Tensor scale(const Tensor& a, double c) {
    return unary_op(
        "scale", a, [c](double v) { return v * c; },
        [c](double, double) { return c; });
}

// ---- matmul ----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw DimensionError("matmul: both operands must be rank-2");
    }
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    const std::size_t k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2) throw DimensionError("matmul: inner dimensions disagree");

    std::vector<double> out(m * n, 0.0);
    gemm_acc(a.values().data(), b.values().data(), out.data(), m, k, n);

    Tensor r = OpBuilder::wrap({m, n}, std::move(out));
    if (recording({&a, &b})) {
        auto an = OpBuilder::node(a);
        auto bn = OpBuilder::node(b);
        auto on = OpBuilder::node(r);
        OpBuilder::record(on, [an, bn, on, m, k, n]() {
            if (wants_grad(an)) {
                an->ensure_grad();  // dA += GO * B^T
                gemm_bt_acc(on->grad.data(), bn->val.data(), an->grad.data(), m, n, k);
            }
            if (wants_grad(bn)) {
                bn->ensure_grad();  // dB += A^T * GO
                gemm_at_acc(an->val.data(), on->grad.data(), bn->grad.data(), m, k, n);
            }
        });
    }
    post_check(r, "matmul");
    return r;
}

// ---- reductions ------------------------------------------------------------

Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    Tensor r = OpBuilder::wrap({}, {s});
    if (recording({&a})) {
        auto an = OpBuilder::node(a);
        auto on = OpBuilder::node(r);
        OpBuilder::record(on, [an, on]() {
            an->ensure_grad();
            const double go = on->grad[0];
            for (auto& g : an->grad) g += go;
        });
    }
    post_check(r, "sum_all");
    return r;
}

Tensor mean_all(const Tensor& a) {
    return scale(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

Tensor sum_lastdim(const Tensor& a) {
    if (a.rank() < 1) throw DimensionError("sum_lastdim: rank-0 input");
    const std::size_t c = a.shape().back();
    const std::size_t rows = a.size() / c;
    std::vector<std::size_t> out_shape(a.shape().begin(), a.shape().end() - 1);
    std::vector<double> out(rows, 0.0);
    const auto& av = a.values();
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[i] += av[i * c + j];
    }
    Tensor r = OpBuilder::wrap(std::move(out_shape), std::move(out));
    if (recording({&a})) {
        auto an = OpBuilder::node(a);
        auto on = OpBuilder::node(r);
        OpBuilder::record(on, [an, on, rows, c]() {
            an->ensure_grad();
            for (std::size_t i = 0; i < rows; ++i) {
                const double go = on->grad[i];
                for (std::size_t j = 0; j < c; ++j) an->grad[i * c + j] += go;
            }
        });
    }
    post_check(r, "sum_lastdim");
    return r;
}

Tensor mean_axis0(const Tensor& a) {
    if (a.rank() < 1) throw DimensionError("mean_axis0: rank-0 input");
    const std::size_t d0 = a.shape()[0];
    const std::size_t inner = a.size() / d0;
    std::vector<std::size_t> out_shape(a.shape().begin() + 1, a.shape().end());
    std::vector<double> out(inner, 0.0);
    const auto& av = a.values();
    for (std::size_t i = 0; i < d0; ++i) {
        for (std::size_t j = 0; j < inner; ++j) out[j] += av[i * inner + j];
    }
    const double inv = 1.0 / static_cast<double>(d0);
    for (auto& v : out) v *= inv;
    Tensor r = OpBuilder::wrap(std::move(out_shape), std::move(out));
    if (recording({&a})) {
        auto an = OpBuilder::node(a);
        auto on = OpBuilder::node(r);
        OpBuilder::record(on, [an, on, d0, inner, inv]() {
            an->ensure_grad();
            for (std::size_t i = 0; i < d0; ++i) {
                for (std::size_t j = 0; j < inner; ++j) {
                    an->grad[i * inner + j] += on->grad[j] * inv;
                }
            }
        });
    }
    post_check(r, "mean_axis0");
    return r;
}

// ---- softmax / logsumexp ---------------------------------------------------

Tensor softmax(const Tensor& a) {
    if (a.rank() < 1) throw DimensionError("softmax: rank-0 input");
    const std::size_t c = a.shape().back();
    const std::size_t rows = a.size() / c;
    const auto& av = a.values();
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < rows; ++i) {
        const double* x = av.data() + i * c;
        double m = x[0];
        for (std::size_t j = 1; j < c; ++j) m = std::max(m, x[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            out[i * c + j] = std::exp(x[j] - m);
            s += out[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= s;
    }
    Tensor r = OpBuilder::wrap(a.shape(), std::move(out));
    if (recording({&a})) {
        auto an = OpBuilder::node(a);
        auto on = OpBuilder::node(r);
        OpBuilder::record(on, [an, on, rows, c]() {
            an->ensure_grad();
            for (std::size_t i = 0; i < rows; ++i) {
                const double* p = on->val.data() + i * c;
                const double* go = on->grad.data() + i * c;
                double dot = 0.0;
                for (std::size_t j = 0; j < c; ++j) dot += go[j] * p[j];
                for (std::size_t j = 0; j < c; ++j) {
                    an->grad[i * c + j] += p[j] * (go[j] - dot);
                }
            }
        });
    }
    post_check(r, "softmax");
    return r;
}

Tensor logsumexp(const Tensor& a, double temperature) {
    if (a.rank() < 1) throw DimensionError("logsumexp: rank-0 input");
    if (!(temperature > 0.0)) throw ContractError("logsumexp: temperature must be > 0");
    const std::size_t c = a.shape().back();
    const std::size_t rows = a.size() / c;
    const auto& av = a.values();
    std::vector<std::size_t> out_shape(a.shape().begin(), a.shape().end() - 1);
    std::vector<double> out(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        const double* x = av.data() + i * c;
        double m = x[0];
        for (std::size_t j = 1; j < c; ++j) m = std::max(m, x[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += std::exp((x[j] - m) / temperature);
        out[i] = m + temperature * std::log(s);
    }
    Tensor r = OpBuilder::wrap(std::move(out_shape), std::move(out));
    if (recording({&a})) {
        auto an = OpBuilder::node(a);
        auto on = OpBuilder::node(r);
        const double T = temperature;
        OpBuilder::record(on, [an, on, rows, c, T]() {
            an->ensure_grad();
            for (std::size_t i = 0; i < rows; ++i) {
                const double go = on->grad[i];
                if (go == 0.0) continue;
                const double* x = an->val.data() + i * c;
                // d/dx_j = softmax(x/T)_j
                double m = x[0];
                for (std::size_t j = 1; j < c; ++j) m = std::max(m, x[j]);
                double s = 0.0;
                for (std::size_t j = 0; j < c; ++j) s += std::exp((x[j] - m) / T);
                for (std::size_t j = 0; j < c; ++j) {
                    an->grad[i * c + j] += go * std::exp((x[j] - m) / T) / s;
                }
            }
        });
    }
    post_check(r, "logsumexp");
    return r;
}

// ---- indexing / structure --------------------------------------------------

Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& idx) {
    if (a.rank() != 2) throw DimensionError("gather_rows: rank-2 input required");
    const std::size_t r = a.shape()[0], c = a.shape()[1];
    if (idx.size() != r) throw DimensionError("gather_rows: one index per row required");
    std::vector<double> out(r);
    const auto& av = a.values();
    for (std::size_t i = 0; i < r; ++i) {
        if (idx[i] >= c) throw DimensionError("gather_rows: index out of range");
        out[i] = av[i * c + idx[i]];
    }
    Tensor res = OpBuilder::wrap({r}, std::move(out));
    if (recording({&a})) {
        auto an = OpBuilder::node(a);
        auto on = OpBuilder::node(res);
        auto ix = idx;
        OpBuilder::record(on, [an, on, ix, c]() {
            an->ensure_grad();
            for (std::size_t i = 0; i < on->val.size(); ++i) {
                an->grad[i * c + ix[i]] += on->grad[i];
            }
        });
    }
    post_check(res, "gather_rows");
    return res;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw DimensionError("concat: no inputs");
    const auto& s0 = parts[0].shape();
    if (axis >= s0.size()) throw DimensionError("concat: axis out of range");
    std::size_t axis_total = 0;
    for (const auto& p : parts) {
        if (p.rank() != s0.size()) throw DimensionError("concat: rank mismatch");
        for (std::size_t d = 0; d < s0.size(); ++d) {
            if (d != axis && p.shape()[d] != s0[d]) {
                throw DimensionError("concat: non-axis dimensions must agree");
            }
        }
        axis_total += p.shape()[axis];
    }
    std::vector<std::size_t> out_shape = s0;
    out_shape[axis] = axis_total;

    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s0[d];
    for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];

    std::vector<double> out(outer * axis_total * inner);
    std::size_t axis_off = 0;
    for (const auto& p : parts) {
        const std::size_t sp = p.shape()[axis];
        const auto& pv = p.values();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy(pv.begin() + o * sp * inner, pv.begin() + (o + 1) * sp * inner,
                      out.begin() + (o * axis_total + axis_off) * inner);
        }
        axis_off += sp;
    }

    Tensor r = OpBuilder::wrap(std::move(out_shape), std::move(out));
    std::vector<const Tensor*> ins;
    for (const auto& p : parts) ins.push_back(&p);
    const bool rec = Tape::active() != nullptr &&
                     std::any_of(ins.begin(), ins.end(),
                                 [](const Tensor* t) { return t->requires_grad(); });
    if (rec) {
        std::vector<NodePtr> pns;
        std::vector<std::size_t> sizes;
        for (const auto& p : parts) {
            pns.push_back(OpBuilder::node(p));
            sizes.push_back(p.shape()[axis]);
        }
        auto on = OpBuilder::node(r);
        OpBuilder::record(on, [pns, sizes, on, outer, inner, axis_total]() {
            std::size_t axis_off = 0;
            for (std::size_t pi = 0; pi < pns.size(); ++pi) {
                const std::size_t sp = sizes[pi];
                if (wants_grad(pns[pi])) {
                    pns[pi]->ensure_grad();
                    for (std::size_t o = 0; o < outer; ++o) {
                        const double* g =
                            on->grad.data() + (o * axis_total + axis_off) * inner;
                        double* dst = pns[pi]->grad.data() + o * sp * inner;
                        for (std::size_t j = 0; j < sp * inner; ++j) dst[j] += g[j];
                    }
                }
                axis_off += sp;
            }
        });
    }
    post_check(r, "concat");
    return r;
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len) {
    if (axis >= a.rank()) throw DimensionError("slice: axis out of range");
    if (start + len > a.shape()[axis] || len == 0) {
        throw DimensionError("slice: range out of bounds");
    }
    const auto& s = a.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
    for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    const std::size_t sa = s[axis];

    std::vector<std::size_t> out_shape = s;
    out_shape[axis] = len;
    std::vector<double> out(outer * len * inner);
    const auto& av = a.values();
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy(av.begin() + (o * sa + start) * inner,
                  av.begin() + (o * sa + start + len) * inner,
                  out.begin() + o * len * inner);
    }
    Tensor r = OpBuilder::wrap(std::move(out_shape), std::move(out));
    if (recording({&a})) {
        auto an = OpBuilder::node(a);
        auto on = OpBuilder::node(r);
        OpBuilder::record(on, [an, on, outer, inner, sa, start, len]() {
            an->ensure_grad();
            for (std::size_t o = 0; o < outer; ++o) {
                const double* g = on->grad.data() + o * len * inner;
                double* dst = an->grad.data() + (o * sa + start) * inner;
                for (std::size_t j = 0; j < len * inner; ++j) dst[j] += g[j];
            }
        });
    }
    post_check(r, "slice");
    return r;
}

Tensor reshape(const Tensor& a, std::vector<std::size_t> new_shape) {
    std::size_t n = 1;
    for (auto d : new_shape) n *= d;
    if (n != a.size()) throw DimensionError("reshape: element count must be preserved");
    std::vector<double> out(a.values().begin(), a.values().end());
    Tensor r = OpBuilder::wrap(std::move(new_shape), std::move(out));
    if (recording({&a})) {
        auto an = OpBuilder::node(a);
        auto on = OpBuilder::node(r);
        OpBuilder::record(on, [an, on]() {
            an->ensure_grad();
            for (std::size_t i = 0; i < on->val.size(); ++i) {
                an->grad[i] += on->grad[i];
            }
        });
    }
    return r;
}

}  // namespace ltf
