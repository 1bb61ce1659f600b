#pragma once

#include "ctrliter/types.hpp"

#include <functional>
#include <vector>

namespace ctrliter {

/// Largest singular value (operator 2-norm). Throws InputError on non-finite
/// entries.
double spectral_norm(const Matrix& m);

enum class OdeMethod { rk4, euler };

struct OdeStepSpec {
    double step_size = 1e-2;
    OdeMethod method = OdeMethod::rk4;
};

/// Uniformly sampled solution of x' = f(x). `states[i]` is the state at
/// `times[i]`; the last sample sits exactly at the requested duration (the
/// final step is shortened when the duration is not a multiple of the step).
struct Trajectory {
    std::vector<double> times;
    std::vector<Vector> states;

    const Vector& final_state() const { return states.back(); }
};

/// Fixed-step integration of an autonomous field. Throws DivergenceError
/// carrying the time of the first non-finite state.
Trajectory integrate_ode(const VectorField& field, const Vector& x0, double duration,
                         const OdeStepSpec& spec = {});

/// One fixed step of the chosen method.
Vector ode_step(const VectorField& field, const Vector& x, double h, OdeMethod method);

struct QuadratureSpec {
    double alpha = 1.0;      // discount rate
    double horizon = 40.0;   // truncation time T
    int node_count = 4001;   // nodes on [0, T]
};

/// ∫_0^T e^{-αs} h(s) ds by composite Simpson (3/8 rule closes an odd
/// interval count). Throws InputError when α <= 0.
double discounted_quadrature(const std::function<double(double)>& integrand,
                             const QuadratureSpec& spec);
Vector discounted_quadrature(const std::function<Vector(double)>& integrand,
                             const QuadratureSpec& spec);

/// Same rule applied to integrand samples h(i·step), i = 0..n-1; the discount
/// factor is applied here, so `samples` are the undiscounted values.
Vector discounted_quadrature(const std::vector<Vector>& samples, double step, double alpha);

/// Weights of the composite rule for `node_count` equispaced nodes of spacing
/// `step` (no discount).
std::vector<double> composite_weights(int node_count, double step);

/// Truncation error bound of the discounted integral when |h(s)| <= C e^{ρs},
/// ρ < α: C e^{-(α-ρ)T} / (α-ρ).
double discounted_tail_bound(double c, double rho, double alpha, double horizon);

/// Smallest horizon whose tail bound is below `tolerance` (at least
/// `min_horizon`).
double horizon_for_tolerance(double c, double rho, double alpha, double tolerance = 1e-10,
                             double min_horizon = 1.0);

/// Symmetric PSD square root σ with σσ* = S. Eigenvalues down to -1e-12
/// (relative to the largest magnitude) are clamped to zero; asymmetry beyond
/// 1e-10 or stronger indefiniteness throws InputError.
Matrix symmetric_sqrt(const Matrix& s);

/// Symmetrizes and clamps negative eigenvalues to zero.
Matrix clamp_psd(const Matrix& s);

bool all_finite(const Matrix& m);

/// Golden-section minimization of a scalar function on [lo, hi] with a fixed
/// number of evaluations. Throws StepError on non-finite values.
double golden_section(const std::function<double(double)>& fn, double lo, double hi,
                      int evaluations = 60);

}  // namespace ctrliter
