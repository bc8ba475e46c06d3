#include "averify/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace averify {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

static void check_dims_positive(const std::vector<std::size_t>& dims) {
    if (dims.empty()) throw std::invalid_argument("tensor shape must have at least one dimension");
    for (std::size_t d : dims) {
        if (d == 0) throw std::invalid_argument("tensor dimensions must be positive");
    }
}

Tensor::Tensor(std::vector<std::size_t> dims, double fill) : shape(std::move(dims)) {
    check_dims_positive(shape);
    data.assign(shape_product(shape), fill);
}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> values)
    : shape(std::move(dims)), data(std::move(values)) {
    check_dims_positive(shape);
    if (data.size() != shape_product(shape)) {
        throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_to_string(shape));
    }
}

double& Tensor::at2(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
double Tensor::at2(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

double& Tensor::at3(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * shape[1] + j) * shape[2] + k];
}
double Tensor::at3(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
}

double& Tensor::at4(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
}
double Tensor::at4(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

std::string shape_to_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

void require_finite(const Tensor& t, const char* what) {
    for (double v : t.data) {
        if (!std::isfinite(v)) {
            throw NonFiniteError(std::string(what) + ": non-finite value encountered");
        }
    }
}

Tensor sign(const Tensor& t) {
    Tensor out(t.shape);
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        double v = t.data[i];
        out.data[i] = (v > 0.0) ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
    }
    return out;
}

ImageTensor::ImageTensor(Tensor t) : t_(std::move(t)) {
    if (t_.rank() != 3) {
        throw std::invalid_argument("image tensor must be [channels, height, width], got " +
                                    shape_to_string(t_.shape));
    }
    for (double v : t_.data) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw std::invalid_argument("image pixel out of [0, 1]: " + std::to_string(v));
        }
    }
}

ImageTensor clip_ball(const Tensor& candidate, const ImageTensor& origin, double epsilon) {
    if (!same_shape(candidate, origin.tensor())) {
        throw std::invalid_argument("clip_ball: candidate shape " +
                                    shape_to_string(candidate.shape) + " != origin shape " +
                                    shape_to_string(origin.tensor().shape));
    }
    if (!(epsilon >= 0.0)) throw std::invalid_argument("clip_ball: epsilon must be >= 0");
    require_finite(candidate, "clip_ball candidate");

    Tensor out(candidate.shape);
    const std::vector<double>& ox = origin.tensor().data;
    for (std::size_t i = 0; i < candidate.data.size(); ++i) {
        double lo = std::max(0.0, ox[i] - epsilon);
        double hi = std::min(1.0, ox[i] + epsilon);
        out.data[i] = std::min(std::max(candidate.data[i], lo), hi);
    }
    return ImageTensor(std::move(out));
}

ProbabilityVector::ProbabilityVector(std::vector<double> probs) : p_(std::move(probs)) {
    if (p_.size() < 2) throw std::invalid_argument("probability vector needs k >= 2 classes");
    double sum = 0.0;
    for (double v : p_) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw std::invalid_argument("probability entry out of [0, 1]: " + std::to_string(v));
        }
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument("probabilities sum to " + std::to_string(sum) + ", not 1");
    }
}

std::size_t ProbabilityVector::argmax() const {
    return static_cast<std::size_t>(std::max_element(p_.begin(), p_.end()) - p_.begin());
}

}  // namespace averify
