#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ltf {

class Tape;

namespace detail {
struct Node {
    std::vector<std::size_t> shape;
    std::vector<double> val;
    std::vector<double> grad;  // sized lazily, same length as val
    bool requires_grad = false;

    std::size_t size() const { return val.size(); }
    void ensure_grad() {
        if (grad.size() != val.size()) grad.assign(val.size(), 0.0);
    }
};
}  // namespace detail

// Dense row-major tensor of 64-bit reals. A Tensor is a cheap handle to a
// shared node; ops executed inside a TapeScope record backward rules on the
// active tape. Rank-0 tensors are scalars.
class Tensor {
  public:
    Tensor() = default;

    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<std::size_t> shape, double v, bool requires_grad = false);
    static Tensor from(std::vector<std::size_t> shape, std::vector<double> data,
                       bool requires_grad = false);

    bool defined() const { return n_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return n_->shape; }
    std::size_t rank() const { return n_->shape.size(); }
    std::size_t size() const { return n_->val.size(); }
    bool requires_grad() const { return n_->requires_grad; }

    // Scalar value; ContractError unless size() == 1.
    double item() const;
    double at(std::initializer_list<std::size_t> idx) const;

    // Spans borrow the tensor's storage: lvalue-only, so a span can never
    // outlive a temporary.
    std::span<const double> values() const& { return n_->val; }
    std::span<const double> values() const&& = delete;
    // Direct value mutation is for leaves only (optimizer steps, samplers).
    std::span<double> mutable_values() & { return n_->val; }
    std::span<double> mutable_values() && = delete;

    bool has_grad() const { return n_->grad.size() == n_->val.size(); }
    std::span<const double> grad() const&;
    std::span<const double> grad() const&& = delete;
    void zero_grad();
    void set_requires_grad(bool rg);

    // Leaf sharing the same values but cut off from any gradient path.
    Tensor detach() const;
    // Deep-copied leaf.
    Tensor clone() const;

    std::string debug_json() const;

  private:
    explicit Tensor(std::shared_ptr<detail::Node> n) : n_(std::move(n)) {}
    std::shared_ptr<detail::Node> n_;

    friend class Tape;
    friend struct OpBuilder;
};

// Records one backward rule per executed op, in execution order. backward()
// sweeps the records in reverse, so topological order holds by construction
// and each op is visited exactly once. Leaf gradients accumulate across
// backward() calls; intermediate gradients are reset per call.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void backward(const Tensor& loss);
    void clear() { records_.clear(); }
    std::size_t op_count() const { return records_.size(); }

    static Tape* active();

  private:
    struct Record {
        std::shared_ptr<detail::Node> out;
        std::function<void()> backward;
    };
    std::vector<Record> records_;

    friend struct OpBuilder;
    friend class TapeScope;
};

// RAII guard making a tape the active recording target for this thread.
class TapeScope {
  public:
    explicit TapeScope(Tape& t);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

  private:
    Tape* prev_;
};

// Checked mode scans every op output for NaN/Inf (and leaf construction).
// Off by default.
void set_checked_mode(bool on);
bool checked_mode();

// ---- ops -------------------------------------------------------------------
// Elementwise binary ops broadcast in three cases: identical shapes, either
// side a 1-element scalar, or one side carrying extra leading batch dims over
// the other's exact shape (e.g. [b,d] + [d]).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
// x * ln x with 0 -> 0; the entropy building block.
Tensor xlogx(const Tensor& a);
Tensor square(const Tensor& a);

Tensor add_const(const Tensor& a, double c);
Tensor scale(const Tensor& a, double c);

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor sum_lastdim(const Tensor& a);
Tensor mean_axis0(const Tensor& a);

Tensor softmax(const Tensor& a);                          // over last dim
Tensor logsumexp(const Tensor& a, double temperature = 1.0);  // reduce last dim

// out[i] = a[i, idx[i]] for 2-D a; gradient scatters into the picked slots.
Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& idx);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len);
Tensor reshape(const Tensor& a, std::vector<std::size_t> new_shape);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double c) { return add_const(a, c); }
inline Tensor operator-(const Tensor& a, double c) { return add_const(a, -c); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---- persistence -----------------------------------------------------------
// Flat binary: little-endian u64 rank, u64 dims, then f64 payload.
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace ltf
