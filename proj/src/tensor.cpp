#include "ltf/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "ltf/error.hpp"

namespace ltf {

namespace {
thread_local Tape* g_active_tape = nullptr;
std::atomic<bool> g_checked{false};

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        if (d == 0) throw DimensionError("zero-sized dimension");
        n *= d;
    }
    return n;
}

void check_finite(const std::vector<double>& v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw NumericsError(std::string("non-finite value in ") + what);
        }
    }
}
}  // namespace

void set_checked_mode(bool on) { g_checked.store(on); }
bool checked_mode() { return g_checked.load(std::memory_order_relaxed); }

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from({}, {v}, requires_grad);
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    auto n = std::make_shared<detail::Node>();
    n->val.assign(shape_numel(shape), 0.0);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v, bool requires_grad) {
    auto t = zeros(std::move(shape), requires_grad);
    for (auto& x : t.n_->val) x = v;
    if (checked_mode()) check_finite(t.n_->val, "tensor construction");
    return t;
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> data,
                    bool requires_grad) {
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("data length does not match shape");
    }
    if (checked_mode()) check_finite(data, "tensor construction");
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->val = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

double Tensor::item() const {
    if (size() != 1) throw ContractError("item() on non-scalar tensor");
    return n_->val[0];
}

double Tensor::at(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != rank()) throw DimensionError("index rank mismatch");
    std::size_t flat = 0;
    std::size_t i = 0;
    for (auto ix : idx) {
        if (ix >= n_->shape[i]) throw DimensionError("index out of range");
        flat = flat * n_->shape[i] + ix;
        ++i;
    }
    return n_->val[flat];
}

std::span<const double> Tensor::grad() const& {
    if (!has_grad()) throw ContractError("tensor has no gradient buffer");
    return n_->grad;
}

void Tensor::zero_grad() {
    if (n_->requires_grad) {
        n_->ensure_grad();
        std::fill(n_->grad.begin(), n_->grad.end(), 0.0);
    }
}

void Tensor::set_requires_grad(bool rg) { n_->requires_grad = rg; }

Tensor Tensor::detach() const {
    auto n = std::make_shared<detail::Node>();
    n->shape = n_->shape;
    n->val = n_->val;
    n->requires_grad = false;
    return Tensor(std::move(n));
}

Tensor Tensor::clone() const {
    auto t = detach();
    t.n_->requires_grad = n_->requires_grad;
    return t;
}

std::string Tensor::debug_json() const {
    std::ostringstream os;
    os.precision(17);
    os << "{\"shape\":[";
    for (std::size_t i = 0; i < n_->shape.size(); ++i) {
        if (i) os << ",";
        os << n_->shape[i];
    }
    os << "],\"data\":[";
    for (std::size_t i = 0; i < n_->val.size(); ++i) {
        if (i) os << ",";
        os << n_->val[i];
    }
    os << "]}";
    return os.str();
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& t) : prev_(g_active_tape) { g_active_tape = &t; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
        throw ContractError("backward() requires a scalar loss");
    }
    if (!loss.requires_grad()) {
        throw ContractError("backward() on a tensor not recorded on any tape");
    }
    // Intermediate grads are per-sweep; leaf grads (never op outputs here)
    // accumulate across calls.
    for (auto& r : records_) {
        r.out->ensure_grad();
        std::fill(r.out->grad.begin(), r.out->grad.end(), 0.0);
    }
    loss.n_->ensure_grad();
    loss.n_->grad[0] += 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        it->backward();
    }
}

}  // namespace ltf
