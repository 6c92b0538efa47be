#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include "ggnet/errors.hpp"

namespace ggnet {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// (batch, channels, height, width)
struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    [[nodiscard]] std::size_t numel() const {
        return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
               static_cast<std::size_t>(w);
    }
    [[nodiscard]] int plane() const { return h * w; }

    friend bool operator==(const Shape&, const Shape&) = default;

    [[nodiscard]] std::string str() const {
        std::ostringstream os;
        os << '(' << n << ", " << c << ", " << h << ", " << w << ')';
        return os.str();
    }
};

inline std::ostream& operator<<(std::ostream& os, const Shape& s) { return os << s.str(); }

/// Dense NCHW array with an optional gradient buffer of identical shape.
template <typename Scalar>
class Tensor {
public:
    using value_type = Scalar;

    Tensor() = default;

    explicit Tensor(Shape shape, Scalar fill = Scalar(0)) : shape_(shape) {
        if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
            throw DimensionError("negative tensor dimension " + shape.str());
        }
        data_ = VectorX<Scalar>::Constant(static_cast<Eigen::Index>(shape.numel()), fill);
    }

    Tensor(int n, int c, int h, int w, Scalar fill = Scalar(0)) : Tensor(Shape{n, c, h, w}, fill) {}

    static Tensor from_data(Shape shape, VectorX<Scalar> data) {
        if (static_cast<std::size_t>(data.size()) != shape.numel()) {
            throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                                 shape.str());
        }
        Tensor t;
        t.shape_ = shape;
        t.data_ = std::move(data);
        return t;
    }

    [[nodiscard]] const Shape& shape() const { return shape_; }
    [[nodiscard]] int batch() const { return shape_.n; }
    [[nodiscard]] int channels() const { return shape_.c; }
    [[nodiscard]] int height() const { return shape_.h; }
    [[nodiscard]] int width() const { return shape_.w; }
    [[nodiscard]] std::size_t size() const { return shape_.numel(); }

    [[nodiscard]] std::size_t index(int n, int c, int y, int x) const {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }

    Scalar& operator()(int n, int c, int y, int x) { return data_[static_cast<Eigen::Index>(index(n, c, y, x))]; }
    Scalar operator()(int n, int c, int y, int x) const {
        return data_[static_cast<Eigen::Index>(index(n, c, y, x))];
    }
    Scalar& operator[](std::size_t i) { return data_[static_cast<Eigen::Index>(i)]; }
    Scalar operator[](std::size_t i) const { return data_[static_cast<Eigen::Index>(i)]; }

    VectorX<Scalar>& data() { return data_; }
    const VectorX<Scalar>& data() const { return data_; }
    Scalar* ptr() { return data_.data(); }
    const Scalar* ptr() const { return data_.data(); }

    /// Pointer to the first element of plane (n, c).
    Scalar* plane_ptr(int n, int c) { return data_.data() + index(n, c, 0, 0); }
    const Scalar* plane_ptr(int n, int c) const { return data_.data() + index(n, c, 0, 0); }

    [[nodiscard]] bool has_grad() const { return grad_.has_value(); }

    /// Gradient buffer, allocated as zeros on first access.
    VectorX<Scalar>& grad() {
        if (!grad_) grad_ = VectorX<Scalar>::Zero(data_.size());
        return *grad_;
    }
    const VectorX<Scalar>& grad() const {
        if (!grad_) throw DimensionError("tensor has no gradient buffer");
        return *grad_;
    }
    void zero_grad() { grad() = VectorX<Scalar>::Zero(data_.size()); }
    void drop_grad() { grad_.reset(); }

    void fill(Scalar v) { data_.setConstant(v); }

    [[nodiscard]] bool all_finite() const { return data_.allFinite(); }

    template <typename Other>
    [[nodiscard]] Tensor<Other> cast() const {
        return Tensor<Other>::from_data(shape_, data_.template cast<Other>());
    }

private:
    Shape shape_{};
    VectorX<Scalar> data_{};
    std::optional<VectorX<Scalar>> grad_{};
};

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(what) + ": shape " + a.shape().str() + " vs " + b.shape().str());
    }
}

/// Copies channels [first, first + count) of every batch item.
template <typename Scalar>
Tensor<Scalar> slice_channels(const Tensor<Scalar>& t, int first, int count) {
    if (first < 0 || count < 0 || first + count > t.channels()) {
        throw DimensionError("channel slice [" + std::to_string(first) + ", " + std::to_string(first + count) +
                             ") out of range for " + t.shape().str());
    }
    Tensor<Scalar> out(t.batch(), count, t.height(), t.width());
    const auto plane = static_cast<Eigen::Index>(t.shape().plane());
    for (int n = 0; n < t.batch(); ++n) {
        out.data().segment(static_cast<Eigen::Index>(out.index(n, 0, 0, 0)), plane * count) =
            t.data().segment(static_cast<Eigen::Index>(t.index(n, first, 0, 0)), plane * count);
    }
    return out;
}

/// Adds `src` into channels [first, first + src.channels()) of `dst`.
template <typename Scalar>
void accumulate_channels(Tensor<Scalar>& dst, const Tensor<Scalar>& src, int first) {
    if (dst.batch() != src.batch() || dst.height() != src.height() || dst.width() != src.width() ||
        first < 0 || first + src.channels() > dst.channels()) {
        throw DimensionError("cannot place " + src.shape().str() + " into " + dst.shape().str());
    }
    const auto len = static_cast<Eigen::Index>(src.shape().plane()) * src.channels();
    for (int n = 0; n < src.batch(); ++n) {
        dst.data().segment(static_cast<Eigen::Index>(dst.index(n, first, 0, 0)), len) +=
            src.data().segment(static_cast<Eigen::Index>(src.index(n, 0, 0, 0)), len);
    }
}

/// Copies batch item `n` into a batch-of-one tensor.
template <typename Scalar>
Tensor<Scalar> batch_item(const Tensor<Scalar>& t, int n) {
    Shape s = t.shape();
    s.n = 1;
    const auto len = static_cast<Eigen::Index>(s.numel());
    return Tensor<Scalar>::from_data(s, t.data().segment(static_cast<Eigen::Index>(t.index(n, 0, 0, 0)), len));
}

} // namespace ggnet
