#include "histplan/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace histplan {

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size())) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(shape_));
    }
}

Tensor Tensor::zeros(Shape shape) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

Tensor Tensor::full(Shape shape, double value) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::matrix(std::int64_t rows, std::int64_t cols, std::vector<double> data) {
    return Tensor({rows, cols}, std::move(data));
}

std::int64_t Tensor::rows() const {
    if (shape_.size() <= 1) return shape_.empty() ? 0 : 1;
    return shape_[0];
}

std::int64_t Tensor::cols() const {
    if (shape_.empty()) return 0;
    if (shape_.size() == 1) return shape_[0];
    if (shape_.size() == 2) return shape_[1];
    throw ShapeError("cols() on tensor of rank " + std::to_string(shape_.size()));
}

// splitmix64; small state, solid distribution, trivially reproducible.
std::uint64_t Rng::next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double Rng::next_double() {
    return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
}

std::int64_t Rng::next_index(std::int64_t n) {
    if (n <= 0) throw ValidationError("next_index needs a positive bound");
    return static_cast<std::int64_t>(next_u64() % static_cast<std::uint64_t>(n));
}

double Rng::next_normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = 0.0;
    do {
        u1 = next_double();
    } while (u1 <= 1e-300);
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

Rng Rng::fork(std::uint64_t tag) const {
    Rng base(state_ ^ (0xa0761d6478bd642fULL * (tag + 1)));
    base.next_u64();
    return base;
}

void fill_normal(Tensor& t, Rng& rng, double stddev) {
    for (auto& v : t.data()) v = rng.next_normal() * stddev;
}

}  // namespace histplan
