#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "relaybp/errors.hpp"

namespace relaybp {

using Index = std::int64_t;
using Shape = std::vector<Index>;

inline Index shape_numel(const Shape& shape) {
    Index n = 1;
    for (Index d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

/// Dense n-dimensional array over a contiguous row-major buffer.
/// Value type: copies copy the buffer. The flat storage is an Eigen array so
/// elementwise work stays expression-based; 2-d views for GEMM come from
/// matrix()/as_matrix() maps.
template <typename S>
class Tensor {
public:
    using ArrayType = Eigen::Array<S, Eigen::Dynamic, 1>;
    using MatrixMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    using ConstMatrixMap =
        Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        check_shape(shape_);
        data_ = ArrayType::Zero(shape_numel(shape_));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, S value) {
        Tensor t(std::move(shape));
        t.data_.setConstant(value);
        return t;
    }

    static Tensor from_values(Shape shape, std::initializer_list<S> values) {
        Tensor t(std::move(shape));
        if (static_cast<Index>(values.size()) != t.size())
            throw ShapeError("from_values: " + std::to_string(values.size()) +
                             " values for shape " + shape_str(t.shape()));
        Index i = 0;
        for (S v : values) t.data_[i++] = v;
        return t;
    }

    const Shape& shape() const { return shape_; }
    Index ndim() const { return static_cast<Index>(shape_.size()); }
    Index dim(Index i) const { return shape_[static_cast<std::size_t>(i)]; }
    Index size() const { return data_.size(); }

    S* data() { return data_.data(); }
    const S* data() const { return data_.data(); }

    ArrayType& array() { return data_; }
    const ArrayType& array() const { return data_; }

    S& operator[](Index i) { return data_[i]; }
    S operator[](Index i) const { return data_[i]; }

    /// Row-major 2-d view; total element count must match rows*cols.
    MatrixMap matrix(Index rows, Index cols) {
        require_numel(rows * cols);
        return MatrixMap(data_.data(), rows, cols);
    }
    ConstMatrixMap matrix(Index rows, Index cols) const {
        require_numel(rows * cols);
        return ConstMatrixMap(data_.data(), rows, cols);
    }

    /// 2-d view of an already 2-d tensor.
    MatrixMap as_matrix() {
        require_2d();
        return MatrixMap(data_.data(), shape_[0], shape_[1]);
    }
    ConstMatrixMap as_matrix() const {
        require_2d();
        return ConstMatrixMap(data_.data(), shape_[0], shape_[1]);
    }

    /// Same buffer contents under a new shape of equal element count.
    Tensor reshaped(Shape shape) const {
        if (shape_numel(shape) != size())
            throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(shape) +
                             ": element count changes");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (Index i = 0; i < size(); ++i)
            if (!std::isfinite(static_cast<double>(data_[i]))) return false;
        return true;
    }

    template <typename T>
    Tensor<T> cast() const {
        Tensor<T> t(shape_);
        for (Index i = 0; i < size(); ++i) t[i] = static_cast<T>(data_[i]);
        return t;
    }

private:
    static void check_shape(const Shape& shape) {
        for (Index d : shape)
            if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(shape));
    }
    void require_numel(Index n) const {
        if (n != size())
            throw ShapeError("matrix view of " + std::to_string(n) + " elements over tensor " +
                             shape_str(shape_));
    }
    void require_2d() const {
        if (ndim() != 2) throw ShapeError("as_matrix on tensor " + shape_str(shape_));
    }

    Shape shape_;
    ArrayType data_;
};

template <typename S>
void require_shape(const Tensor<S>& t, const Shape& want, const char* what) {
    if (t.shape() != want)
        throw ShapeError(std::string(what) + ": expected " + shape_str(want) + ", got " +
                         shape_str(t.shape()));
}

/// Throws NumericError when the tensor holds NaN/Inf. Kernels call this on
/// their outputs in debug builds; telemetry calls it unconditionally.
template <typename S>
void ensure_finite(const Tensor<S>& t, const std::string& context) {
    if (!t.all_finite()) throw NumericError(context + ": non-finite values");
}

#ifdef NDEBUG
#define RELAYBP_DEBUG_CHECK_FINITE(tensor, context) ((void)0)
#else
#define RELAYBP_DEBUG_CHECK_FINITE(tensor, context) ::relaybp::ensure_finite((tensor), (context))
#endif

}  // namespace relaybp
