#pragma once

#include <Eigen/Dense>
#include <optional>

namespace balsam::detail {

/// Minimize c'x subject to A x = b, x >= 0. Two-phase tableau simplex with
/// Bland's rule. Intended for the tiny landing-phase programs (tens of rows,
/// a few thousand columns). Returns nullopt when infeasible.
std::optional<Eigen::VectorXd> solve_linear_program(const Eigen::MatrixXd& constraints,
                                                    const Eigen::VectorXd& rhs,
                                                    const Eigen::VectorXd& cost);

}  // namespace balsam::detail
