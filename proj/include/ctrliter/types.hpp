#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace ctrliter {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Autonomous vector field x -> f(x).
using VectorField = std::function<Vector(const Vector&)>;
/// Jacobian field x -> Df(x).
using JacobianField = std::function<Matrix(const Vector&)>;
using ScalarField = std::function<double(const Vector&)>;

}  // namespace ctrliter
