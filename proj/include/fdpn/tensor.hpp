// Dense row-major tensor of doubles, ranks 0..4. Deliberately small: the
// heavy loops live in the modules that own them, this class only manages
// shape and storage.

#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fdpn/errors.hpp"

namespace fdpn {

using Index = std::int64_t;

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<Index> shape, double fill = 0.0)
        : shape_(std::move(shape)) {
        for (Index d : shape_) {
            if (d < 0) throw ShapeError("tensor dimension must be non-negative");
        }
        data_.assign(static_cast<std::size_t>(count(shape_)), fill);
    }

    static Tensor from(std::vector<Index> shape, std::vector<double> values) {
        Tensor t;
        t.shape_ = std::move(shape);
        if (count(t.shape_) != static_cast<Index>(values.size()))
            throw ShapeError("tensor value count does not match shape");
        t.data_ = std::move(values);
        return t;
    }

    Index rank() const { return static_cast<Index>(shape_.size()); }
    Index dim(Index axis) const {
        assert(axis >= 0 && axis < rank());
        return shape_[static_cast<std::size_t>(axis)];
    }
    Index size() const { return static_cast<Index>(data_.size()); }
    const std::vector<Index>& shape() const { return shape_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](Index i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](Index i) const { return data_[static_cast<std::size_t>(i)]; }

    double& at(Index i) {
        assert(rank() == 1);
        return data_[idx1(i)];
    }
    double at(Index i) const { return const_cast<Tensor*>(this)->at(i); }
    double& at(Index i, Index j) {
        assert(rank() == 2);
        return data_[idx2(i, j)];
    }
    double at(Index i, Index j) const { return const_cast<Tensor*>(this)->at(i, j); }
    double& at(Index i, Index j, Index k) {
        assert(rank() == 3);
        return data_[idx3(i, j, k)];
    }
    double at(Index i, Index j, Index k) const { return const_cast<Tensor*>(this)->at(i, j, k); }
    double& at(Index i, Index j, Index k, Index l) {
        assert(rank() == 4);
        return data_[idx4(i, j, k, l)];
    }
    double at(Index i, Index j, Index k, Index l) const {
        return const_cast<Tensor*>(this)->at(i, j, k, l);
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    // Size-preserving shape change; data order untouched.
    Tensor reshaped(std::vector<Index> shape) const {
        if (count(shape) != size()) throw ShapeError("reshape changes element count");
        Tensor t = *this;
        t.shape_ = std::move(shape);
        return t;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

    std::string shape_string() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) os << 'x';
            os << shape_[i];
        }
        os << ']';
        return os.str();
    }

private:
    static Index count(const std::vector<Index>& shape) {
        Index n = 1;
        for (Index d : shape) n *= d;
        return n;
    }
    std::size_t idx1(Index i) const {
        assert(i >= 0 && i < shape_[0]);
        return static_cast<std::size_t>(i);
    }
    std::size_t idx2(Index i, Index j) const {
        assert(i >= 0 && i < shape_[0] && j >= 0 && j < shape_[1]);
        return static_cast<std::size_t>(i * shape_[1] + j);
    }
    std::size_t idx3(Index i, Index j, Index k) const {
        assert(i >= 0 && i < shape_[0] && j >= 0 && j < shape_[1] && k >= 0 && k < shape_[2]);
        return static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k);
    }
    std::size_t idx4(Index i, Index j, Index k, Index l) const {
        assert(i >= 0 && i < shape_[0] && j >= 0 && j < shape_[1] && k >= 0 && k < shape_[2] &&
               l >= 0 && l < shape_[3]);
        return static_cast<std::size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l);
    }

    std::vector<Index> shape_;
    std::vector<double> data_;
};

// Rounds every element through float32. Training state is kept
// float32-representable so checkpoints restore it exactly.
inline void quantize_f32(Tensor& t) {
    double* p = t.data();
    for (Index i = 0; i < t.size(); ++i) p[i] = static_cast<double>(static_cast<float>(p[i]));
}

}  // namespace fdpn
