#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace histplan {

// Error taxonomy. The CLI maps these onto exit codes: shape/config/validation
// and parse errors are data errors (2), NumericError is a numeric failure (3).
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ParseError : std::runtime_error {
    ParseError(const std::string& msg, std::int64_t line)
        : std::runtime_error(msg + " (line " + std::to_string(line) + ")"), line_number(line) {}
    std::int64_t line_number;
};

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

/// Dense row-major tensor of 64-bit floats. A Tensor is a value: copying it
/// copies the data. When produced under an active Tape it additionally refers
/// to the tape node that created it, so gradients can be routed back.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);
    /// Row-major 2-D constructor used heavily by tests.
    static Tensor matrix(std::int64_t rows, std::int64_t cols, std::vector<double> data);

    const Shape& shape() const { return shape_; }
    std::int64_t ndim() const { return static_cast<std::int64_t>(shape_.size()); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

    // 2-D accessors; a 1-D tensor counts as a single row.
    std::int64_t rows() const;
    std::int64_t cols() const;
    double at(std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
    double at(std::int64_t r, std::int64_t c) const { return data_[static_cast<std::size_t>(r * cols() + c)]; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool attached() const { return tape_ != nullptr; }
    Tape* tape() const { return tape_; }
    int node() const { return node_; }
    void attach(Tape* tape, int node) { tape_ = tape; node_ = node; }
    /// Drop the tape reference; the values remain.
    Tensor detached() const { return Tensor(shape_, data_); }
    void detach_in_place() { tape_ = nullptr; node_ = -1; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    Shape shape_;
    std::vector<double> data_;
    Tape* tape_ = nullptr;
    int node_ = -1;
};

/// Deterministic RNG used for parameter init and data generation.
/// A thin wrapper so every stream is explicitly seeded.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double next_double();
    /// Uniform integer in [0, n).
    std::int64_t next_index(std::int64_t n);
    /// Standard normal via Box-Muller (stateless pairs, reproducible).
    double next_normal();
    /// Derive an independent stream; deterministic in (seed, tag).
    Rng fork(std::uint64_t tag) const;

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// Fill with N(0, stddev^2) draws in row-major order.
void fill_normal(Tensor& t, Rng& rng, double stddev);

}  // namespace histplan
