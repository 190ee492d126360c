#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace pguide {

/// Dense row-major matrix of doubles. Vectors are 1 x d or n x d batches.
class Tensor2 {
public:
    Tensor2() = default;
    Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Tensor2 identity(std::size_t n);
    static Tensor2 row(std::span<const double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row_span(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row_span(std::size_t r) const {
        return {data_.data() + r * cols_, cols_};
    }
    std::vector<double> row_vector(std::size_t r) const;

    std::span<double> flat() noexcept { return data_; }
    std::span<const double> flat() const noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    void fill(double v);
    bool all_finite() const;
    bool same_shape(const Tensor2& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    std::string shape_string() const;

    Tensor2& operator+=(const Tensor2& other);
    Tensor2& operator-=(const Tensor2& other);
    Tensor2& operator*=(double s);

    friend bool operator==(const Tensor2&, const Tensor2&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Tensor2 operator+(Tensor2 a, const Tensor2& b);
Tensor2 operator-(Tensor2 a, const Tensor2& b);
Tensor2 operator*(Tensor2 a, double s);

/// a (m x k) times b (k x n). Throws ShapeError when a.cols != b.rows.
Tensor2 matmul(const Tensor2& a, const Tensor2& b);
/// a^T b without materializing the transpose.
Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b);
/// a b^T without materializing the transpose.
Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b);
Tensor2 transpose(const Tensor2& a);

double max_abs_diff(const Tensor2& a, const Tensor2& b);
double frobenius_norm(const Tensor2& a);

/// Trainable block: value plus an accumulated gradient of the same shape.
struct ParamTensor {
    std::string name;
    Tensor2 value;
    Tensor2 grad;

    ParamTensor() = default;
    ParamTensor(std::string n, Tensor2 v)
        : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

    void zero_grad() { grad.fill(0.0); }
};

void zero_grads(std::span<ParamTensor* const> params);

}  // namespace pguide
