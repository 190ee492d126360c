#include "pguide/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pguide/errors.hpp"

namespace pguide {

namespace {

void require_same_shape(const Tensor2& a, const Tensor2& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
    }
}

void require_finite(const Tensor2& t, const char* op) {
    if (!t.all_finite()) {
        throw DomainError(std::string(op) + ": non-finite result");
    }
}

}  // namespace

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        std::ostringstream os;
        os << "Tensor2: data length " << data_.size() << " does not match " << rows_ << "x"
           << cols_;
        throw ShapeError(os.str());
    }
}

Tensor2 Tensor2::identity(std::size_t n) {
    Tensor2 t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

Tensor2 Tensor2::row(std::span<const double> values) {
    return Tensor2(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

std::vector<double> Tensor2::row_vector(std::size_t r) const {
    auto s = row_span(r);
    return {s.begin(), s.end()};
}

void Tensor2::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor2::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor2::shape_string() const {
    std::ostringstream os;
    os << "(" << rows_ << "x" << cols_ << ")";
    return os.str();
}

Tensor2& Tensor2::operator+=(const Tensor2& other) {
    require_same_shape(*this, other, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Tensor2& Tensor2::operator-=(const Tensor2& other) {
    require_same_shape(*this, other, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Tensor2& Tensor2::operator*=(double s) {
    for (auto& v : data_) v *= s;
    return *this;
}

Tensor2 operator+(Tensor2 a, const Tensor2& b) { return a += b; }
Tensor2 operator-(Tensor2 a, const Tensor2& b) { return a -= b; }
Tensor2 operator*(Tensor2 a, double s) { return a *= s; }

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ " + a.shape_string() + " x " +
                         b.shape_string());
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor2 out(m, n);
    // i-k-j order keeps the inner loop contiguous in both b and out; four
    // rows of b are folded per pass to cut load/store traffic on out.
    for (std::size_t i = 0; i < m; ++i) {
        double* __restrict o = out.row_span(i).data();
        const double* ai = a.row_span(i).data();
        std::size_t p = 0;
        for (; p + 4 <= k; p += 4) {
            const double a0 = ai[p], a1 = ai[p + 1], a2 = ai[p + 2], a3 = ai[p + 3];
            const double* __restrict b0 = b.row_span(p).data();
            const double* __restrict b1 = b0 + n;
            const double* __restrict b2 = b1 + n;
            const double* __restrict b3 = b2 + n;
            for (std::size_t j = 0; j < n; ++j) {
                o[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
        }
        for (; p < k; ++p) {
            const double av = ai[p];
            const double* __restrict bp = b.row_span(p).data();
            for (std::size_t j = 0; j < n; ++j) o[j] += av * bp[j];
        }
    }
    require_finite(out, "matmul");
    return out;
}

Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn: row counts differ " + a.shape_string() + " vs " +
                         b.shape_string());
    }
    return matmul(transpose(a), b);
}

Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: column counts differ " + a.shape_string() + " vs " +
                         b.shape_string());
    }
    // Transposing b first lets the product run in the contiguous i-k-j order.
    return matmul(a, transpose(b));
}

Tensor2 transpose(const Tensor2& a) {
    Tensor2 out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

double max_abs_diff(const Tensor2& a, const Tensor2& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a.flat()[i] - b.flat()[i]));
    return m;
}

double frobenius_norm(const Tensor2& a) {
    double s = 0.0;
    for (double v : a.flat()) s += v * v;
    return std::sqrt(s);
}

void zero_grads(std::span<ParamTensor* const> params) {
    for (auto* p : params) p->zero_grad();
}

}  // namespace pguide
