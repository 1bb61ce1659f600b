#include "ctrliter/lambda_solver.hpp"

#include "ctrliter/errors.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace ctrliter {

namespace {

constexpr double kOriginFloor = 1e-8;

Vector central_difference(const std::function<Vector(const Vector&)>& fn, const Vector& x, int k,
                          double h) {
    Vector xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    return (fn(xp) - fn(xm)) / (2.0 * h);
}

std::vector<Vector> grid_nodes(const std::vector<GridAxis>& axes) {
    std::size_t count = 1;
    for (const auto& a : axes) count *= static_cast<std::size_t>(a.count);
    std::vector<Vector> nodes(count, Vector(static_cast<Eigen::Index>(axes.size())));
    for (std::size_t n = 0; n < count; ++n) {
        std::size_t rest = n;
        for (std::size_t l = 0; l < axes.size(); ++l) {
            const auto c = static_cast<std::size_t>(axes[l].count);
            nodes[n](static_cast<Eigen::Index>(l)) = axes[l].node(static_cast<int>(rest % c));
            rest /= c;
        }
    }
    return nodes;
}

}  // namespace

// ---------------------------------------------------------------- problem

void NonlinearProblem::validate() const {
    if (!drift || !drift_jacobian || !cost_gradient) {
        throw InputError("NonlinearProblem: drift, drift_jacobian and cost_gradient are required");
    }
    if (B.rows() < 1 || B.cols() < 1) throw InputError("NonlinearProblem: B must be non-empty");
    if (N.rows() != B.cols() || N.cols() != B.cols()) throw InputError("NonlinearProblem: N must be d×d");
    if (!(alpha > 0.0)) throw InputError("NonlinearProblem: alpha must be positive");
    if (!(gamma >= 0.0) || !(b_modulus >= 0.0) || !(m_bound >= 0.0)) {
        throw InputError("NonlinearProblem: declared moduli must be non-negative");
    }
    if (!B.allFinite() || !N.allFinite()) throw InputError("NonlinearProblem: non-finite B or N");
}

Matrix NonlinearProblem::feedback_gain_matrix() const {
    return B * N.partialPivLu().solve(B.transpose());
}

ConvergenceCertificate NonlinearProblem::certificate() const {
    return certify_constants(alpha, gamma, b_modulus, m_bound, spectral_norm(feedback_gain_matrix()));
}

Vector NonlinearProblem::dynamics(const Vector& x, const Vector& a) const { return drift(x) + B * a; }

double NonlinearProblem::running(const Vector& x, const Vector& a) const {
    if (running_cost) return running_cost(x, a);
    if (!cost) throw InputError("NonlinearProblem: the cost F is needed to evaluate f(x, a)");
    return cost(x) + 0.5 * a.dot(N * a);
}

Vector NonlinearProblem::running_gradient(const Vector& x, const Vector& a) const {
    if (!running_cost) return N * a;
    if (running_cost_gradient) return running_cost_gradient(x, a);
    Vector g(a.size());
    for (Eigen::Index k = 0; k < a.size(); ++k) {
        const double h = 1e-6 * (1.0 + std::abs(a(k)));
        Vector ap = a, am = a;
        ap(k) += h;
        am(k) -= h;
        g(k) = (running_cost(x, ap) - running_cost(x, am)) / (2.0 * h);
    }
    return g;
}

double NonlinearProblem::check_moduli(const std::vector<Vector>& samples) const {
    double worst = 0.0;
    auto ratio = [](double lhs, double rhs) {
        if (lhs <= 1e-14) return 0.0;
        return rhs > 0.0 ? lhs / rhs : std::numeric_limits<double>::infinity();
    };
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Vector& x = samples[i];
        const double nx = x.norm();
        worst = std::max(worst, ratio(drift(x).norm(), gamma * nx));
        worst = std::max(worst, ratio(cost_gradient(x).norm(), m_bound * nx));
        if (i + 1 < samples.size()) {
            const Vector& y = samples[i + 1];
            const double lhs = spectral_norm(drift_jacobian(x) - drift_jacobian(y));
            worst = std::max(worst, ratio(lhs, b_modulus * (x - y).norm() / (1.0 + nx + y.norm())));
        }
    }
    return worst;
}

NonlinearProblem from_lq(const LqProblem& lq) {
    lq.validate();
    NonlinearProblem p;
    const Matrix A = lq.A;
    const Matrix M = lq.M;
    p.drift = [A](const Vector& x) -> Vector { return A * x; };
    p.drift_jacobian = [A](const Vector&) -> Matrix { return A; };
    p.cost_gradient = [M](const Vector& x) -> Vector { return M * x; };
    p.cost = [M](const Vector& x) { return 0.5 * x.dot(M * x); };
    p.B = lq.B;
    p.N = lq.N;
    p.gamma = spectral_norm(lq.A);
    p.b_modulus = 0.0;
    p.m_bound = spectral_norm(lq.M);
    p.alpha = lq.alpha;
    return p;
}

// ---------------------------------------------------------------- fields

KernelSpec SampledField::default_spec() {
    KernelSpec spec;
    spec.gamma = 1e-10;
    spec.tail = PolynomialTail::linear;
    return spec;
}

SampledField::SampledField(std::vector<Vector> points, Matrix values, KernelSpec spec)
    : points_(std::move(points)), values_(std::move(values)), spec_(spec) {
    if (points_.empty()) throw InputError("SampledField: no collocation points");
    if (static_cast<std::size_t>(values_.rows()) != points_.size()) {
        throw InputError("SampledField: one value row per point required");
    }
    model_ = fit_kernel(spec_, points_, values_);
}

Vector SampledField::operator()(const Vector& x) const {
    if (!model_) throw InputError("SampledField: empty field");
    return model_->predict(x);
}

Matrix SampledField::jacobian(const Vector& x) const {
    const double h = 1e-4 * (1.0 + x.norm());
    Matrix j(output_dim(), x.size());
    auto fn = [this](const Vector& y) { return (*this)(y); };
    for (Eigen::Index k = 0; k < x.size(); ++k) j.col(k) = central_difference(fn, x, static_cast<int>(k), h);
    return j;
}

SampledField SampledField::with_values(Matrix values) const {
    return SampledField(points_, std::move(values), spec_);
}

namespace {

Matrix sample_rows(const std::vector<Vector>& points, const VectorField& fn) {
    if (points.empty()) throw InputError("sample: no points");
    const Vector first = fn(points.front());
    Matrix v(static_cast<Eigen::Index>(points.size()), first.size());
    v.row(0) = first.transpose();
    for (std::size_t i = 1; i < points.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = fn(points[i]).transpose();
    return v;
}

}  // namespace

GradientField GradientField::sample(const std::vector<Vector>& points, const VectorField& fn,
                                    KernelSpec spec) {
    return GradientField(SampledField(points, sample_rows(points, fn), spec));
}

GradientField GradientField::zero(const std::vector<Vector>& points, int dim, KernelSpec spec) {
    return GradientField(SampledField(points, Matrix::Zero(static_cast<Eigen::Index>(points.size()), dim), spec));
}

FeedbackField FeedbackField::sample(const std::vector<Vector>& points, const VectorField& fn,
                                    KernelSpec spec) {
    return FeedbackField(SampledField(points, sample_rows(points, fn), spec));
}

std::vector<Vector> tensor_grid(int dim, int per_axis, double lo, double hi) {
    if (dim < 1 || per_axis < 2 || !(hi > lo)) throw InputError("tensor_grid: bad arguments");
    std::vector<GridAxis> axes(static_cast<std::size_t>(dim), GridAxis{lo, hi, per_axis});
    return grid_nodes(axes);
}

std::vector<Vector> halton_points(int dim, std::size_t count, double lo, double hi, std::size_t skip) {
    static constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
    if (dim < 1 || dim > 12) throw InputError("halton_points: dimension must be in [1, 12]");
    std::vector<Vector> pts;
    pts.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Vector x(dim);
        for (int k = 0; k < dim; ++k) {
            const int base = kPrimes[k];
            double f = 1.0, r = 0.0;
            for (std::size_t n = i + skip; n > 0; n /= static_cast<std::size_t>(base)) {
                f /= base;
                r += f * static_cast<double>(n % static_cast<std::size_t>(base));
            }
            x(k) = lo + (hi - lo) * r;
        }
        pts.push_back(std::move(x));
    }
    return pts;
}

// ---------------------------------------------------------------- Γ map

Trajectory closed_loop_trajectory(const NonlinearProblem& p, const SampledField& lam, const Vector& x,
                                  double duration, double ode_step) {
    const Matrix gain = p.feedback_gain_matrix();
    auto field = [&](const Vector& y) -> Vector { return p.drift(y) - gain * lam(y); };
    return integrate_ode(field, x, duration, OdeStepSpec{ode_step, OdeMethod::rk4});
}

Vector gamma_map(const NonlinearProblem& p, const SampledField& lam, const Vector& x,
                 const GammaOptions& opts) {
    const double bnb = spectral_norm(p.feedback_gain_matrix());
    double varpi = 0.0;
    if (opts.varpi) {
        varpi = *opts.varpi;
    } else {
        const ConvergenceCertificate cert = p.certificate();
        if (!cert.alpha_ok) {
            throw PreconditionError("gamma_map: certificate fails (alpha below " +
                                    std::to_string(cert.alpha_threshold()) + ")");
        }
        varpi = cert.varpi;
    }
    const double rho = p.gamma + bnb * varpi;
    if (!(p.alpha > rho)) {
        throw PreconditionError("gamma_map: alpha must exceed gamma + |BN^-1B*| varpi = " +
                                std::to_string(rho));
    }

    const double nx = x.norm();
    if (nx == 0.0) return Vector::Zero(x.size());

    const double c = (p.m_bound + p.gamma * varpi) * nx;
    const double horizon = horizon_for_tolerance(c, rho, p.alpha, opts.tail_tol);
    const auto steps = static_cast<long>(std::ceil(horizon / opts.ode_step));
    const double h = horizon / static_cast<double>(steps);

    const Trajectory traj = closed_loop_trajectory(p, lam, x, horizon, h);
    std::vector<Vector> samples;
    samples.reserve(traj.states.size());
    for (const Vector& y : traj.states) {
        samples.push_back(p.cost_gradient(y) + p.drift_jacobian(y).transpose() * lam(y));
    }
    return discounted_quadrature(samples, h, p.alpha);
}

double weighted_sup_distance(const std::vector<Vector>& points, const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols() || static_cast<std::size_t>(a.rows()) != points.size()) {
        throw InputError("weighted_sup_distance: shape mismatch");
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const double d = (a.row(r) - b.row(r)).norm() / std::max(points[i].norm(), kOriginFloor);
        if (!std::isfinite(d)) return std::numeric_limits<double>::infinity();
        worst = std::max(worst, d);
    }
    return worst;
}

LambdaSolution lambda_fixed_point(const NonlinearProblem& p, const GradientField& lam0,
                                  const LambdaOptions& opts) {
    p.validate();
    if (lam0.output_dim() != p.state_dim()) throw InputError("lambda_fixed_point: λ must map ℝⁿ to ℝⁿ");

    const ConvergenceCertificate cert = p.certificate();
    const double varpi = opts.gamma.varpi ? *opts.gamma.varpi : cert.varpi;
    if (opts.check_cone) {
        if (!cert.alpha_ok) throw PreconditionError("lambda_fixed_point: certificate fails");
        const double nu = cert.b_ok ? cert.nu : varpi;
        for (std::size_t i = 0; i < lam0.size(); ++i) {
            const Vector& x = lam0.points()[i];
            const double mag = lam0.value(i).norm();
            if (mag > varpi * x.norm() + 1e-9) {
                std::ostringstream msg;
                msg << "lambda_fixed_point: |λ₀(x)| = " << mag << " exceeds ϖ|x| = " << varpi * x.norm()
                    << " at x = (" << x.transpose() << ")";
                throw PreconditionError(msg.str());
            }
            const double slope = spectral_norm(lam0.jacobian(x));
            if (slope > nu + 1e-6) {
                std::ostringstream msg;
                msg << "lambda_fixed_point: ‖Dλ₀(x)‖ = " << slope << " exceeds ν = " << nu
                    << " at x = (" << x.transpose() << ")";
                throw PreconditionError(msg.str());
            }
        }
    }

    LambdaSolution sol{lam0, {}};
    sol.trace.tolerance = opts.tol;
    GammaOptions gopts = opts.gamma;
    gopts.varpi = varpi;
    const auto& pts = lam0.points();
    const auto count = static_cast<Eigen::Index>(pts.size());

    for (std::size_t k = 0; k < opts.max_iter; ++k) {
        Matrix next(count, p.state_dim());
        parallel_for(
            pts.size(),
            [&](std::size_t i) {
                next.row(static_cast<Eigen::Index>(i)) = gamma_map(p, sol.lambda, pts[i], gopts).transpose();
            },
            opts.workers);
        const double dist = weighted_sup_distance(pts, next, sol.lambda.values());
        sol.trace.record(dist);
        if (!(dist <= kBlowUpThreshold)) {
            sol.trace.blew_up = true;
            break;
        }
        GradientField refit(sol.lambda.with_values(std::move(next)));
        refit.varpi = varpi;
        refit.nu = cert.b_ok ? cert.nu : varpi;
        sol.lambda = std::move(refit);
        if (sol.trace.converged) break;
    }
    sol.trace.diverged = !sol.trace.converged;
    return sol;
}

double lambda_residual(const NonlinearProblem& p, const SampledField& lam, const std::vector<Vector>& points) {
    const Matrix gain = p.feedback_gain_matrix();
    double worst = 0.0;
    for (const Vector& x : points) {
        const Vector l = lam(x);
        const Vector r = p.alpha * l - p.drift_jacobian(x).transpose() * l -
                         lam.jacobian(x) * (p.drift(x) - gain * l) - p.cost_gradient(x);
        worst = std::max(worst, r.cwiseAbs().maxCoeff());
    }
    return worst;
}

// ---------------------------------------------------------------- feedback

double recover_value(const NonlinearProblem& p, const SampledField& lam, const SampledField& a_hat,
                     const Vector& x) {
    const Vector a = a_hat(x);
    return (p.running(x, a) + lam(x).dot(p.dynamics(x, a))) / p.alpha;
}

Vector feedback_gradient_step(const NonlinearProblem& p, const Vector& a_k, const Vector& lam_x,
                              const Vector& x, std::optional<double> theta_max) {
    const Vector d = p.running_gradient(x, a_k) + p.B.transpose() * lam_x;
    if (!d.allFinite()) throw StepError("feedback_gradient_step: non-finite descent direction");
    if (d.norm() == 0.0) return a_k;
    const Vector ax = p.drift(x);
    auto hamiltonian = [&](double theta) {
        const Vector w = a_k - theta * d;
        return p.running(x, w) + lam_x.dot(ax + p.B * w);
    };
    const double upper = theta_max ? *theta_max : 10.0 / (1.0 + spectral_norm(p.N));
    const double h0 = hamiltonian(0.0);
    if (!std::isfinite(h0)) throw StepError("feedback_gradient_step: non-finite Hamiltonian");
    const double theta = golden_section(hamiltonian, 0.0, upper);
    if (hamiltonian(theta) > h0) return a_k;
    return a_k - theta * d;
}

Vector feedback_gradient_step(const NonlinearProblem& p, const SampledField& a_hat_k,
                              const SampledField& lam_next, const Vector& x,
                              std::optional<double> theta_max) {
    return feedback_gradient_step(p, a_hat_k(x), lam_next(x), x, theta_max);
}

Vector minimize_hamiltonian(const NonlinearProblem& p, const Vector& lam_x, const Vector& x) {
    if (lam_x.size() != p.state_dim()) throw InputError("minimize_hamiltonian: λ dimension mismatch");
    if (!p.running_cost) {
        Eigen::LLT<Matrix> llt(p.N);
        if (llt.info() != Eigen::Success) {
            throw PreconditionError("minimize_hamiltonian: N is not positive definite and no "
                                    "running_cost fallback is configured");
        }
        return -llt.solve(p.B.transpose() * lam_x);
    }
    Vector a = Vector::Zero(p.control_dim());
    for (int it = 0; it < 200; ++it) {
        const Vector next = feedback_gradient_step(p, a, lam_x, x);
        const double change = (next - a).norm();
        a = next;
        if (change <= 1e-12 * (1.0 + a.norm())) break;
    }
    return a;
}

// ---------------------------------------------------------------- grid iterations

PolicyStep policy_style_iteration(const NonlinearProblem& p, const std::vector<GridAxis>& axes,
                                  const Matrix& actions, const SplitIterate& u0,
                                  const PolicyStepOptions& opts) {
    if (static_cast<int>(axes.size()) != p.state_dim()) {
        throw InputError("policy_style_iteration: one grid axis per state dimension required");
    }
    const std::vector<Vector> nodes = grid_nodes(axes);
    const auto count = static_cast<Eigen::Index>(nodes.size());
    if (actions.rows() != count || actions.cols() != p.control_dim()) {
        throw InputError("policy_style_iteration: actions must be nodes × d");
    }

    Matrix drift(count, p.state_dim());
    Matrix source(count, 1);
    for (Eigen::Index i = 0; i < count; ++i) {
        const Vector a = actions.row(i).transpose();
        drift.row(i) = p.dynamics(nodes[static_cast<std::size_t>(i)], a).transpose();
        source(i, 0) = p.running(nodes[static_cast<std::size_t>(i)], a);
    }
    std::optional<Matrix> inflow;
    if (opts.inflow_value) {
        inflow = Matrix(count, 1);
        for (Eigen::Index i = 0; i < count; ++i) (*inflow)(i, 0) = (*opts.inflow_value)(nodes[static_cast<std::size_t>(i)]);
    }
    const SplittingSolver solver(axes, p.alpha, std::move(drift), std::move(source), std::move(inflow),
                                 opts.g_min);
    SplittingSolver::Result res = solver.solve(u0, opts.tol, opts.max_sweeps, opts.workers);

    PolicyStep out;
    out.lambda = Matrix(count, p.state_dim());
    for (int l = 0; l < p.state_dim(); ++l) out.lambda.col(l) = solver.partial(res.iterate.values, l).col(0);
    out.actions = Matrix(count, p.control_dim());
    for (Eigen::Index i = 0; i < count; ++i) {
        out.actions.row(i) =
            minimize_hamiltonian(p, out.lambda.row(i).transpose(), nodes[static_cast<std::size_t>(i)]).transpose();
    }
    out.u = std::move(res.iterate);
    out.trace = std::move(res.trace);
    return out;
}

TransportLambdaSolution lambda_transport_iteration(const NonlinearProblem& p, const std::vector<GridAxis>& axes,
                                                   const Matrix& lam0, const TransportLambdaOptions& opts) {
    p.validate();
    if (static_cast<int>(axes.size()) != p.state_dim()) {
        throw InputError("lambda_transport_iteration: one grid axis per state dimension required");
    }
    const std::vector<Vector> nodes = grid_nodes(axes);
    const auto count = static_cast<Eigen::Index>(nodes.size());
    if (lam0.rows() != count || lam0.cols() != p.state_dim()) {
        throw InputError("lambda_transport_iteration: λ₀ must be nodes × n");
    }
    const Matrix gain = p.feedback_gain_matrix();

    std::optional<Matrix> inflow;
    if (opts.inflow_value) {
        inflow = Matrix(count, p.state_dim());
        for (Eigen::Index i = 0; i < count; ++i) inflow->row(i) = (*opts.inflow_value)(nodes[static_cast<std::size_t>(i)]).transpose();
    }

    TransportLambdaSolution sol{lam0, {}};
    sol.trace.tolerance = opts.tol;
    for (std::size_t k = 0; k < opts.max_iter; ++k) {
        Matrix drift(count, p.state_dim());
        Matrix source(count, p.state_dim());
        for (Eigen::Index i = 0; i < count; ++i) {
            const Vector& x = nodes[static_cast<std::size_t>(i)];
            const Vector l = sol.lambda.row(i).transpose();
            drift.row(i) = (p.drift(x) - gain * l).transpose();
            source.row(i) = (p.drift_jacobian(x).transpose() * l + p.cost_gradient(x)).transpose();
        }
        const SplittingSolver solver(axes, p.alpha, std::move(drift), std::move(source), inflow, opts.g_min);
        const SplittingSolver::Result res =
            solver.solve(SplitIterate{sol.lambda, 0}, opts.sweep_tol, opts.max_sweeps, opts.workers);
        const double dist = weighted_sup_distance(nodes, res.iterate.values, sol.lambda);
        sol.trace.record(dist);
        if (!(dist <= kBlowUpThreshold)) {
            sol.trace.blew_up = true;
            break;
        }
        sol.lambda = res.iterate.values;
        if (sol.trace.converged) break;
    }
    sol.trace.diverged = !sol.trace.converged;
    return sol;
}

}  // namespace ctrliter
