#pragma once

#include "ctrliter/approx.hpp"
#include "ctrliter/iteration_trace.hpp"
#include "ctrliter/lqr.hpp"
#include "ctrliter/numerics.hpp"
#include "ctrliter/parallel.hpp"
#include "ctrliter/splitting.hpp"
#include "ctrliter/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace ctrliter {

/// Cost callable f(x, a) and its action gradient D_a f(x, a).
using RunningCost = std::function<double(const Vector&, const Vector&)>;
using RunningCostGradient = std::function<Vector(const Vector&, const Vector&)>;

/// Deterministic problem with dynamics g(x, a) = A(x) + Ba and running cost
/// f(x, a) = F(x) + ½a*Na, discount α.
///
/// gamma, b_modulus and m_bound are the user-declared moduli |A(x)| <= γ|x|,
/// ‖DA(x₁) - DA(x₂)‖ <= b|x₁ - x₂|/(1 + |x₁| + |x₂|), |DF(x)| <= M|x|. A
/// non-quadratic running cost may replace F + ½a*Na through `running_cost`
/// (its action gradient is taken by finite differences when
/// `running_cost_gradient` is empty).
struct NonlinearProblem {
    VectorField drift;             // A
    JacobianField drift_jacobian;  // DA
    Matrix B;
    Matrix N;
    VectorField cost_gradient;     // DF
    ScalarField cost;              // F, needed only for value recovery
    double gamma = 0.0;
    double b_modulus = 0.0;
    double m_bound = 0.0;
    double alpha = 1.0;
    RunningCost running_cost;
    RunningCostGradient running_cost_gradient;

    int state_dim() const { return static_cast<int>(B.rows()); }
    int control_dim() const { return static_cast<int>(B.cols()); }

    void validate() const;
    Matrix feedback_gain_matrix() const;  // BN⁻¹B*
    ConvergenceCertificate certificate() const;

    Vector dynamics(const Vector& x, const Vector& a) const;  // g(x, a)
    double running(const Vector& x, const Vector& a) const;   // f(x, a)
    Vector running_gradient(const Vector& x, const Vector& a) const;  // D_a f

    /// Spot-checks the declared moduli at the given points; returns the
    /// largest violation ratio observed (<= 1 means consistent).
    double check_moduli(const std::vector<Vector>& samples) const;
};

/// A(x) = Ax, F(x) = ½x*Mx, γ = ‖A‖, b = 0, M-bound = ‖M‖.
NonlinearProblem from_lq(const LqProblem& lq);

/// Values attached to collocation points, queried between them by kernel
/// interpolation with a linear tail (so affine fields are reproduced exactly).
class SampledField {
public:
    SampledField() = default;
    SampledField(std::vector<Vector> points, Matrix values, KernelSpec spec = default_spec());

    static KernelSpec default_spec();

    const std::vector<Vector>& points() const { return points_; }
    /// One row per point.
    const Matrix& values() const { return values_; }
    Vector value(std::size_t i) const { return values_.row(static_cast<Eigen::Index>(i)).transpose(); }
    const KernelSpec& spec() const { return spec_; }
    std::size_t size() const { return points_.size(); }
    int output_dim() const { return static_cast<int>(values_.cols()); }

    Vector operator()(const Vector& x) const;
    /// Central differences with step 1e-4·(1 + |x|).
    Matrix jacobian(const Vector& x) const;

    /// Same points and interpolation settings, new values.
    SampledField with_values(Matrix values) const;

private:
    std::vector<Vector> points_;
    Matrix values_;
    KernelSpec spec_;
    std::optional<FittedModel> model_;
};

/// Sampled λ: ℝⁿ → ℝⁿ, optionally tagged with the cone bounds
/// |λ(x)| <= ϖ|x|, ‖Dλ‖ <= ν it was certified against.
class GradientField : public SampledField {
public:
    using SampledField::SampledField;
    GradientField(SampledField base) : SampledField(std::move(base)) {}

    /// Samples fn at the points.
    static GradientField sample(const std::vector<Vector>& points, const VectorField& fn,
                                KernelSpec spec = default_spec());
    static GradientField zero(const std::vector<Vector>& points, int dim,
                              KernelSpec spec = default_spec());

    std::optional<double> varpi;
    std::optional<double> nu;
};

/// Sampled feedback â: ℝⁿ → ℝ^d.
class FeedbackField : public SampledField {
public:
    using SampledField::SampledField;
    FeedbackField(SampledField base) : SampledField(std::move(base)) {}

    static FeedbackField sample(const std::vector<Vector>& points, const VectorField& fn,
                                KernelSpec spec = default_spec());
};

/// Tensor grid with `per_axis` nodes on [lo, hi]^dim (first axis fastest).
std::vector<Vector> tensor_grid(int dim, int per_axis, double lo, double hi);
/// Scrambled-free Halton points on [lo, hi]^dim, skipping the first `skip`.
std::vector<Vector> halton_points(int dim, std::size_t count, double lo, double hi,
                                  std::size_t skip = 1);

struct GammaOptions {
    double ode_step = 0.01;     // nominal integration step
    double tail_tol = 1e-10;    // bound on the truncated tail of the integral
    /// Cone radius used for the closed-loop growth bound; defaults to the
    /// certificate's ϖ.
    std::optional<double> varpi;
};

/// dy/ds = A(y) - BN⁻¹B*λ(y), y(0) = x.
Trajectory closed_loop_trajectory(const NonlinearProblem& p, const SampledField& lam, const Vector& x,
                                  double duration, double ode_step = 0.01);

/// Γ(x) = ∫_0^∞ e^{-αs}(DF(y) + DA*(y)λ(y)) ds along the closed-loop path,
/// truncated where the growth bound |y(s)| <= |x|e^{(γ + ‖BN⁻¹B*‖ϖ)s} puts the
/// tail below tail_tol. Throws PreconditionError unless α > γ + ‖BN⁻¹B*‖ϖ.
Vector gamma_map(const NonlinearProblem& p, const SampledField& lam, const Vector& x,
                 const GammaOptions& opts = {});

/// sup over points of |a(x) - b(x)| / max(|x|, 1e-8).
double weighted_sup_distance(const std::vector<Vector>& points, const Matrix& a, const Matrix& b);

struct LambdaOptions {
    double tol = 1e-8;
    std::size_t max_iter = 200;
    GammaOptions gamma;
    std::size_t workers = default_worker_count();
    bool check_cone = true;  // verify λ₀ against (ϖ, ν) before iterating
};

struct LambdaSolution {
    GradientField lambda;
    IterationTrace trace;
};

/// λ^{k+1}(x_m) = Γλ^k(x_m) at every collocation point, refit, repeat. The
/// starting field must respect the certificate cone at the points (checked
/// with finite differences unless disabled).
LambdaSolution lambda_fixed_point(const NonlinearProblem& p, const GradientField& lam0,
                                  const LambdaOptions& opts = {});

/// max over the given points of |αλ - DA*λ - Dλ(A - BN⁻¹B*λ) - DF|, Dλ by
/// finite differences.
double lambda_residual(const NonlinearProblem& p, const SampledField& lam,
                       const std::vector<Vector>& points);

/// (f(x, â(x)) + λ(x)·g(x, â(x))) / α.
double recover_value(const NonlinearProblem& p, const SampledField& lam, const SampledField& a_hat,
                     const Vector& x);

/// argmin_a λ·g(x, a) + f(x, a). Closed form -N⁻¹B*λ for the quadratic cost
/// (N must be positive definite); otherwise repeated gradient steps.
Vector minimize_hamiltonian(const NonlinearProblem& p, const Vector& lam_x, const Vector& x);

/// One gradient step on a ↦ f(x, a) + λ·g(x, a) from a_k with the step
/// length found by golden-section search on [0, θ_max],
/// θ_max = 10/(1 + ‖N‖) unless given.
Vector feedback_gradient_step(const NonlinearProblem& p, const Vector& a_k, const Vector& lam_x,
                              const Vector& x, std::optional<double> theta_max = std::nullopt);
Vector feedback_gradient_step(const NonlinearProblem& p, const SampledField& a_hat_k,
                              const SampledField& lam_next, const Vector& x,
                              std::optional<double> theta_max = std::nullopt);

/// The value-based iteration on a tensor grid: solve
/// αu = f(x, â(x)) + Du·g(x, â(x)) with the splitting solver, λ = Du by
/// finite differences, then the new feedback by Hamiltonian minimization.
struct PolicyStep {
    SplitIterate u;
    Matrix lambda;   // nodes × n
    Matrix actions;  // nodes × d
    IterationTrace trace;  // splitting sweeps
};

struct PolicyStepOptions {
    double tol = 1e-12;
    std::size_t max_sweeps = 500;
    std::optional<ScalarField> inflow_value;  // Dirichlet data for u
    double g_min = 1e-6;
    std::size_t workers = default_worker_count();
};

/// `actions` holds â^k at the grid nodes (nodes × d); `u0` seeds the sweeps.
PolicyStep policy_style_iteration(const NonlinearProblem& p, const std::vector<GridAxis>& axes,
                                  const Matrix& actions, const SplitIterate& u0,
                                  const PolicyStepOptions& opts = {});

/// Transport form of the λ iteration:
/// αλ^{k+1} - Dλ^{k+1}(A - BN⁻¹B*λ^k) = DA*λ^k + DF, each step solved on the
/// grid by splitting. `lam0` seeds the grid values (nodes × n).
struct TransportLambdaSolution {
    Matrix lambda;  // nodes × n
    IterationTrace trace;
};

struct TransportLambdaOptions {
    double tol = 1e-8;
    std::size_t max_iter = 100;
    double sweep_tol = 1e-12;
    std::size_t max_sweeps = 500;
    std::optional<VectorField> inflow_value;
    double g_min = 1e-6;
    std::size_t workers = default_worker_count();
};

TransportLambdaSolution lambda_transport_iteration(const NonlinearProblem& p,
                                                   const std::vector<GridAxis>& axes,
                                                   const Matrix& lam0,
                                                   const TransportLambdaOptions& opts = {});

}  // namespace ctrliter
