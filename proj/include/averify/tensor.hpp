#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace averify {

/// Raised when an operation would produce or has produced NaN/Inf values.
struct NonFiniteError : std::runtime_error {
    explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

/// Dense row-major tensor of 64-bit floats. data.size() == product(shape)
/// is enforced by every constructor; operations that build tensors keep it.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0);
    Tensor(std::vector<std::size_t> dims, std::vector<double> values);

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    double& at2(std::size_t i, std::size_t j);
    double at2(std::size_t i, std::size_t j) const;
    double& at3(std::size_t i, std::size_t j, std::size_t k);
    double at3(std::size_t i, std::size_t j, std::size_t k) const;
    double& at4(std::size_t i, std::size_t j, std::size_t k, std::size_t l);
    double at4(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const;

    bool operator==(const Tensor& other) const = default;
};

bool same_shape(const Tensor& a, const Tensor& b);
std::string shape_to_string(const std::vector<std::size_t>& shape);

/// Throws NonFiniteError naming `what` if any element is NaN or Inf.
void require_finite(const Tensor& t, const char* what);

/// Scalar -1/0/+1; exact zero maps to 0.
inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Elementwise -1/0/+1; exact zero maps to 0. Idempotent.
Tensor sign(const Tensor& t);

/// Image in [channels, height, width] layout with all pixels in [0, 1].
class ImageTensor {
public:
    explicit ImageTensor(Tensor t);

    const Tensor& tensor() const { return t_; }
    std::size_t channels() const { return t_.shape[0]; }
    std::size_t height() const { return t_.shape[1]; }
    std::size_t width() const { return t_.shape[2]; }

    bool operator==(const ImageTensor& other) const = default;

private:
    Tensor t_;
};

/// Projects `candidate` onto the L-inf ball of radius `epsilon` around
/// `origin`, intersected with the valid pixel range [0, 1].
/// The candidate is a raw tensor: pre-projection iterates may leave [0, 1].
ImageTensor clip_ball(const Tensor& candidate, const ImageTensor& origin, double epsilon);

/// k-class probability distribution: k >= 2, entries in [0, 1], sum within
/// 1e-9 of 1. Softmax outputs are strictly positive; wire-level vectors
/// (rounded oracle mode) may contain exact zeros.
class ProbabilityVector {
public:
    explicit ProbabilityVector(std::vector<double> probs);

    std::size_t size() const { return p_.size(); }
    double operator[](std::size_t i) const { return p_[i]; }
    const std::vector<double>& values() const { return p_; }

    /// Index of the largest entry; first occurrence wins on ties.
    std::size_t argmax() const;

private:
    std::vector<double> p_;
};

}  // namespace averify
