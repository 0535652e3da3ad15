// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace sketchcp {

// Factor matrices are accessed row-at-a-time by every kernel.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;
using SquareMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

using index_t = std::uint32_t;

enum class ScheduleKind { tensor_stationary, accumulator_stationary };
enum class SamplerKind { none, arls_lev, sts };

const char* to_string(ScheduleKind kind);
const char* to_string(SamplerKind kind);

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class BoundsError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

/// Raised when a leverage-tree walk meets a node whose total mass is zero.
class DegenerateWalkError : public Error {
public:
    using Error::Error;
};

}  // namespace sketchcp
