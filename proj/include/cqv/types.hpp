#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

namespace cqv {

using cx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;

constexpr double kPi = 3.14159265358979323846;

inline cx I() { return cx(0.0, 1.0); }

// Dense rank-3 / rank-4 containers over a single chart dimension n.
// Indices are row-major; these stay tiny (n <= 4) so no view machinery.
namespace detail {

// Flat complex container with elementwise arithmetic, shared by the rank-3
// and rank-4 tensors below.
template <class Derived>
class TensorBase {
public:
    Derived& operator+=(const Derived& other) {
        for (size_t i = 0; i < v_.size(); ++i) v_[i] += other.v_[i];
        return self();
    }
    Derived& operator-=(const Derived& other) {
        for (size_t i = 0; i < v_.size(); ++i) v_[i] -= other.v_[i];
        return self();
    }
    Derived& operator*=(const cx& s) {
        for (auto& v : v_) v *= s;
        return self();
    }
    Derived& operator/=(const cx& s) {
        for (auto& v : v_) v /= s;
        return self();
    }
    friend Derived operator+(Derived a, const Derived& b) { return a += b; }
    friend Derived operator-(Derived a, const Derived& b) { return a -= b; }
    friend Derived operator-(Derived a) { return a *= cx(-1, 0); }
    friend Derived operator*(const cx& s, Derived a) { return a *= s; }
    friend Derived operator*(Derived a, const cx& s) { return a *= s; }
    friend Derived operator*(double s, Derived a) { return a *= cx(s, 0); }
    friend Derived operator/(Derived a, const cx& s) { return a /= s; }
    friend Derived operator/(Derived a, double s) { return a /= cx(s, 0); }
    int dim() const { return n_; }

protected:
    Derived& self() { return static_cast<Derived&>(*this); }
    int n_ = 0;
    std::vector<cx> v_;
};

}  // namespace detail

class Tensor3 : public detail::TensorBase<Tensor3> {
public:
    Tensor3() = default;
    explicit Tensor3(int n) {
        n_ = n;
        v_.assign(static_cast<size_t>(n) * n * n, cx(0, 0));
    }
    cx& operator()(int a, int b, int c) { return v_[(static_cast<size_t>(a) * n_ + b) * n_ + c]; }
    const cx& operator()(int a, int b, int c) const {
        return v_[(static_cast<size_t>(a) * n_ + b) * n_ + c];
    }
};

class Tensor4 : public detail::TensorBase<Tensor4> {
public:
    Tensor4() = default;
    explicit Tensor4(int n) {
        n_ = n;
        v_.assign(static_cast<size_t>(n) * n * n * n, cx(0, 0));
    }
    cx& operator()(int a, int b, int c, int d) {
        return v_[((static_cast<size_t>(a) * n_ + b) * n_ + c) * n_ + d];
    }
    const cx& operator()(int a, int b, int c, int d) const {
        return v_[((static_cast<size_t>(a) * n_ + b) * n_ + c) * n_ + d];
    }
};

inline bool finite(const cx& z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

inline bool finite(const CVec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (!finite(v[i])) return false;
    return true;
}

}  // namespace cqv
