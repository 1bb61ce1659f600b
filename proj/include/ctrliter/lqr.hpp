#pragma once

#include "ctrliter/iteration_trace.hpp"
#include "ctrliter/types.hpp"

#include <cstdint>
#include <functional>

namespace ctrliter {

/// Discounted linear-quadratic problem: dynamics x' = Ax + Ba, running cost
/// ½x*Mx + ½a*Na, discount α.
struct LqProblem {
    Matrix A;  // n×n
    Matrix B;  // n×d
    Matrix N;  // d×d, symmetric invertible
    Matrix M;  // n×n, symmetric PSD
    double alpha = 1.0;

    int state_dim() const { return static_cast<int>(A.rows()); }
    int control_dim() const { return static_cast<int>(B.cols()); }

    /// Throws InputError if shapes, symmetry, invertibility or α are off.
    void validate() const;

    /// B N^{-1} B*.
    Matrix feedback_gain_matrix() const;
};

/// Constants of the contraction argument for g(x,a) = A(x) + Ba,
/// f(x,a) = F(x) + ½a*Na.
///
/// alpha_ok: α - 2γ > 2√(M‖BN⁻¹B*‖). When it holds, β > 1 and ϖ is the
/// smaller root of ϖ²‖BN⁻¹B*‖ - (α-2γ)ϖ + M = 0. b_ok is the smallness
/// requirement on the second-derivative modulus b; when both hold, ν is the
/// smaller root of the same quadratic with M replaced by M + bϖ (ν = ϖ when
/// b = 0). Undefined constants are NaN.
struct ConvergenceCertificate {
    double alpha = 0.0;
    double gamma = 0.0;
    double b = 0.0;
    double m_bound = 0.0;
    double bnb_norm = 0.0;
    double beta = 0.0;
    double varpi = 0.0;
    double nu = 0.0;
    bool alpha_ok = false;
    bool b_ok = false;

    bool passes() const { return alpha_ok && b_ok; }
    /// 2γ + 2√(M‖BN⁻¹B*‖).
    double alpha_threshold() const;
    /// Largest admissible b (right-hand side of the b condition).
    double b_limit() const;
    /// (γ + ‖BN⁻¹B*‖ν) / (α - γ - ‖BN⁻¹B*‖ϖ); below 1 when the certificate
    /// passes.
    double contraction_rate() const;
};

ConvergenceCertificate certify_constants(double alpha, double gamma, double b, double m_bound,
                                         double bnb_norm);

/// γ = ‖A‖, b = 0, M-bound = ‖M‖, ‖BN⁻¹B*‖.
ConvergenceCertificate compute_certificate(const LqProblem& p);

struct RiccatiStep {
    Matrix next;
    double rcond = 0.0;  // reciprocal condition estimate of αI - A + BN⁻¹B*P
};

/// One step of P⁺(αI - A + BN⁻¹B*P) = M + A*P, solved for P⁺ multiplying
/// from the left. Throws StepError (with the smallest singular value) when the
/// system is singular.
RiccatiStep riccati_step(const LqProblem& p, const Matrix& pk);

struct RiccatiOptions {
    double tol = 1e-10;
    std::size_t max_iter = 10000;
    /// Keep stepping after convergence until this many distances are recorded.
    std::size_t min_iter = 0;
    double blow_up = kBlowUpThreshold;
    /// Called after every recorded distance with (iteration, distance).
    std::function<void(std::size_t, double)> on_iteration;
};

struct RiccatiSolution {
    Matrix P;
    IterationTrace trace;
};

/// Iterates riccati_step from P0 until ‖P^{k+1} - P^k‖ < tol. Divergence is
/// reported in the trace, not thrown; a singular step aborts with the partial
/// trace and the last good iterate.
RiccatiSolution solve_riccati(const LqProblem& p, const Matrix& p0, const RiccatiOptions& opts = {});

/// ‖αP - M - A*P - PA + PBN⁻¹B*P‖.
double riccati_residual(const LqProblem& p, const Matrix& P);

struct LqEvaluation {
    double value = 0.0;
    Vector action;
    Vector lambda;
};

/// λ = Px (P symmetrized), a = -N⁻¹B*λ, u = (F(x) + ½a*Na + λ·(Ax + Ba))/α.
LqEvaluation lq_value_and_feedback(const LqProblem& p, const Matrix& P, const Vector& x);

/// Seeded random problem: A, B uniform in [-1, 1]; N = R*R + I and M = S*S for
/// uniform R, S. Uses a 64-bit Mersenne twister.
LqProblem random_lq_problem(int state_dim, int control_dim, double alpha, std::uint64_t seed);

/// Random n×n matrix (uniform [-1, 1] entries) rescaled to spectral norm
/// `norm`.
Matrix random_matrix_with_norm(int n, double norm, std::uint64_t seed);

}  // namespace ctrliter
