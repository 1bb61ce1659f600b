#include "ctrliter/lqr.hpp"

#include "ctrliter/errors.hpp"
#include "ctrliter/numerics.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace ctrliter {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Uniform [lo, hi) from raw 64-bit draws; identical on every standard library.
double uniform(std::mt19937_64& rng, double lo, double hi) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

Matrix uniform_matrix(std::mt19937_64& rng, int rows, int cols) {
    Matrix m(rows, cols);
    // Fill row by row so the layout of draws is independent of storage order.
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = uniform(rng, -1.0, 1.0);
    return m;
}

// Smaller root of s·w² - c·w + k = 0 written without cancellation; valid for
// s = 0 too.
double smaller_root(double s, double c, double k) {
    const double disc = c * c - 4.0 * k * s;
    if (disc < 0.0) return kNaN;
    if (k == 0.0) return 0.0;
    return 2.0 * k / (c + std::sqrt(disc));
}

}  // namespace

void LqProblem::validate() const {
    const auto n = A.rows();
    if (n < 1 || A.cols() != n) throw InputError("LqProblem: A must be square and non-empty");
    if (B.rows() != n || B.cols() < 1) throw InputError("LqProblem: B must have n rows");
    const auto d = B.cols();
    if (N.rows() != d || N.cols() != d) throw InputError("LqProblem: N must be d×d");
    if (M.rows() != n || M.cols() != n) throw InputError("LqProblem: M must be n×n");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InputError("LqProblem: alpha must be positive");
    if (!A.allFinite() || !B.allFinite() || !N.allFinite() || !M.allFinite()) {
        throw InputError("LqProblem: non-finite entries");
    }
    const double n_scale = std::max(1.0, N.cwiseAbs().maxCoeff());
    if ((N - N.transpose()).cwiseAbs().maxCoeff() > 1e-10 * n_scale) {
        throw InputError("LqProblem: N must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> n_eig(0.5 * (N + N.transpose()));
    if (n_eig.eigenvalues().cwiseAbs().minCoeff() <= 1e-10) {
        throw InputError("LqProblem: N is singular");
    }
    const double m_scale = std::max(1.0, M.cwiseAbs().maxCoeff());
    if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-10 * m_scale) {
        throw InputError("LqProblem: M must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> m_eig(0.5 * (M + M.transpose()));
    if (m_eig.eigenvalues().minCoeff() < -1e-10 * m_scale) {
        throw InputError("LqProblem: M must be positive semidefinite");
    }
}

Matrix LqProblem::feedback_gain_matrix() const {
    return B * N.partialPivLu().solve(B.transpose());
}

double ConvergenceCertificate::alpha_threshold() const {
    return 2.0 * gamma + 2.0 * std::sqrt(m_bound * bnb_norm);
}

double ConvergenceCertificate::b_limit() const {
    if (!alpha_ok) return kNaN;
    if (m_bound == 0.0 || bnb_norm == 0.0) return std::numeric_limits<double>::infinity();
    // As printed: √(‖BN⁻¹B*‖/M) (β-1)/(√β - √(β-1)).
    const double printed =
        std::sqrt(bnb_norm / m_bound) * (beta - 1.0) / (std::sqrt(beta) - std::sqrt(beta - 1.0));
    // Needed for the ν quadratic to have a real root: bϖ < (β-1)M.
    const double root_exists = (beta - 1.0) * m_bound / varpi;
    return std::min(printed, root_exists);
}

double ConvergenceCertificate::contraction_rate() const {
    return (gamma + bnb_norm * nu) / (alpha - gamma - bnb_norm * varpi);
}

ConvergenceCertificate certify_constants(double alpha, double gamma, double b, double m_bound,
                                         double bnb_norm) {
    ConvergenceCertificate c;
    c.alpha = alpha;
    c.gamma = gamma;
    c.b = b;
    c.m_bound = m_bound;
    c.bnb_norm = bnb_norm;

    const double margin = alpha - 2.0 * gamma;
    const double product = m_bound * bnb_norm;
    c.beta = product > 0.0 ? margin * margin / (4.0 * product)
                           : std::numeric_limits<double>::infinity();
    c.alpha_ok = margin > 0.0 && margin > 2.0 * std::sqrt(product);
    if (!c.alpha_ok) {
        c.varpi = kNaN;
        c.nu = kNaN;
        c.b_ok = false;
        return c;
    }
    c.varpi = smaller_root(bnb_norm, margin, m_bound);
    c.b_ok = b < c.b_limit();
    c.nu = c.b_ok ? smaller_root(bnb_norm, margin, m_bound + b * c.varpi) : kNaN;
    if (c.b_ok && !std::isfinite(c.nu)) c.b_ok = false;
    return c;
}

ConvergenceCertificate compute_certificate(const LqProblem& p) {
    p.validate();
    return certify_constants(p.alpha, spectral_norm(p.A), 0.0, spectral_norm(p.M),
                             spectral_norm(p.feedback_gain_matrix()));
}

RiccatiStep riccati_step(const LqProblem& p, const Matrix& pk) {
    const auto n = p.A.rows();
    if (pk.rows() != n || pk.cols() != n) throw InputError("riccati_step: P must be n×n");
    const Matrix k = p.alpha * Matrix::Identity(n, n) - p.A + p.feedback_gain_matrix() * pk;
    const Matrix r = p.M + p.A.transpose() * pk;

    // P⁺K = R  <=>  K*(P⁺)* = R*.
    const Matrix kt = k.transpose();
    Eigen::PartialPivLU<Matrix> lu(kt);
    const double rcond = lu.rcond();
    if (!(rcond > 1e-14) || !k.allFinite()) {
        const double smin = k.allFinite() ? Eigen::JacobiSVD<Matrix>(k).singularValues()(n - 1) : kNaN;
        throw StepError("riccati_step: singular system (smallest singular value " +
                            std::to_string(smin) + ")",
                        smin);
    }
    RiccatiStep step;
    step.next = lu.solve(r.transpose()).transpose();
    step.rcond = rcond;
    return step;
}

RiccatiSolution solve_riccati(const LqProblem& p, const Matrix& p0, const RiccatiOptions& opts) {
    p.validate();
    RiccatiSolution sol;
    sol.P = p0;
    sol.trace.tolerance = opts.tol;
    for (std::size_t k = 0; k < opts.max_iter; ++k) {
        RiccatiStep step;
        try {
            step = riccati_step(p, sol.P);
        } catch (const StepError& e) {
            sol.trace.aborted = true;
            sol.trace.abort_reason = e.what();
            break;
        }
        const Matrix diff = step.next - sol.P;
        const double dist = diff.allFinite() ? spectral_norm(diff)
                                             : std::numeric_limits<double>::infinity();
        sol.trace.record(dist);
        if (opts.on_iteration) opts.on_iteration(k, dist);
        if (!(dist <= opts.blow_up)) {
            sol.trace.blew_up = true;
            break;
        }
        sol.P = step.next;
        if (sol.trace.converged && sol.trace.iterations >= opts.min_iter) break;
    }
    sol.trace.diverged = !sol.trace.converged;
    return sol;
}

double riccati_residual(const LqProblem& p, const Matrix& P) {
    const auto n = p.A.rows();
    if (P.rows() != n || P.cols() != n) throw InputError("riccati_residual: P must be n×n");
    const Matrix r = p.alpha * P - p.M - p.A.transpose() * P - P * p.A +
                     P * p.feedback_gain_matrix() * P;
    return spectral_norm(r);
}

LqEvaluation lq_value_and_feedback(const LqProblem& p, const Matrix& P, const Vector& x) {
    if (x.size() != p.A.rows()) throw InputError("lq_value_and_feedback: state dimension mismatch");
    const Matrix sym = 0.5 * (P + P.transpose());
    LqEvaluation out;
    out.lambda = sym * x;
    out.action = -p.N.partialPivLu().solve(p.B.transpose() * out.lambda);
    const double running = 0.5 * x.dot(p.M * x) + 0.5 * out.action.dot(p.N * out.action);
    out.value = (running + out.lambda.dot(p.A * x + p.B * out.action)) / p.alpha;
    return out;
}

LqProblem random_lq_problem(int state_dim, int control_dim, double alpha, std::uint64_t seed) {
    if (state_dim < 1 || control_dim < 1) throw InputError("random_lq_problem: dimensions must be >= 1");
    std::mt19937_64 rng(seed);
    LqProblem p;
    p.A = uniform_matrix(rng, state_dim, state_dim);
    p.B = uniform_matrix(rng, state_dim, control_dim);
    const Matrix rn = uniform_matrix(rng, control_dim, control_dim);
    const Matrix rm = uniform_matrix(rng, state_dim, state_dim);
    p.N = rn.transpose() * rn + Matrix::Identity(control_dim, control_dim);
    p.M = rm.transpose() * rm;
    p.alpha = alpha;
    return p;
}

Matrix random_matrix_with_norm(int n, double norm, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Matrix m = uniform_matrix(rng, n, n);
    const double s = spectral_norm(m);
    return s > 0.0 ? Matrix(m * (norm / s)) : m;
}

}  // namespace ctrliter
