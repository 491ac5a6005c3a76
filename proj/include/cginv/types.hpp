#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace cginv {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Raised when a vector leaves the domain of the nonlinearity.
class DomainError : public std::domain_error {
public:
    DomainError(const std::string& what, Index index)
        : std::domain_error(what), index_(index) {}
    Index index() const noexcept { return index_; }

private:
    Index index_;
};

/// Raised by iterative routines when an intermediate stops being finite.
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& what, long iteration)
        : std::runtime_error(what), iteration_(iteration) {}
    long iteration() const noexcept { return iteration_; }

private:
    long iteration_;
};

/// Raised on malformed files; `position` is the 1-based line (0 when unknown).
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t position)
        : std::runtime_error(what + " (line " + std::to_string(position) + ")"), position_(position) {}
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

inline bool all_finite(const Vector& v) { return v.allFinite(); }

} // namespace cginv
