#pragma once

#include "ctrliter/parallel.hpp"
#include "ctrliter/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

namespace ctrliter {

/// Standard normal variate from two raw 64-bit draws (Box-Muller), so the
/// stream is identical across standard libraries.
double standard_normal(std::mt19937_64& rng);

/// f(x) = E f(x, Z) through a seeded sampler for Z and the per-sample
/// gradient D_x f(x, Z). `full_gradient` is Df when known in closed form;
/// otherwise gradient() averages `mc_samples` per-sample gradients.
struct StochasticObjective {
    int dim = 1;
    std::function<Vector(std::mt19937_64&)> sample;
    std::function<Vector(const Vector&, const Vector&)> sample_gradient;
    std::function<Vector(const Vector&)> full_gradient;
    std::size_t mc_samples = 1000;

    Vector gradient(const Vector& x, std::uint64_t seed = 0) const;

    /// f(x, Z) = ½|x - Z|² with Z = mean + L·ξ, ξ standard normal.
    static StochasticObjective quadratic(const Vector& mean, const Matrix& factor);
    /// f(x, Z) = ½|x|² with no randomness.
    static StochasticObjective deterministic_quadratic(int dim);
};

/// η_k for k = 1, 2, ...
struct StepSchedule {
    std::function<double(std::size_t)> eta;
    double lower_bound = 0.0;  // u₀ when the schedule acts as a control

    double operator()(std::size_t k) const { return eta(k); }
    static StepSchedule constant(double eta);
    /// η_k = c / k.
    static StepSchedule harmonic(double c);
};

/// X_{k+1} = X_k - η_{k+1} D_x f(X_k, Z_{k+1}); returns X_0..X_K.
std::vector<Vector> sgd_run(const StochasticObjective& obj, const Vector& x0, const StepSchedule& schedule,
                            std::size_t iterations, std::uint64_t seed);

struct NoiseCovariance {
    Matrix sigma_squared;  // Σ, PSD clamped
    Matrix sigma;          // symmetric square root
};

/// Σ(x) = E[D_x f (D_x f)*] - Df Df*, estimated by the centered sample
/// covariance of S per-sample gradients.
NoiseCovariance noise_covariance(const StochasticObjective& obj, const Vector& x, std::size_t samples,
                                 std::uint64_t seed);

/// Covariance of the whitened noise Y = σ⁺(Df - D_x f(x, Z)) over S samples;
/// close to the identity on the range of σ.
Matrix whitening_diagnostic(const StochasticObjective& obj, const Vector& x, std::size_t samples,
                            std::uint64_t seed);

struct EnsembleStats {
    Matrix terminal;   // R × d
    Vector mean;
    Matrix covariance; // unbiased sample covariance
    std::size_t replicas() const { return static_cast<std::size_t>(terminal.rows()); }

    static EnsembleStats from_terminal(Matrix terminal);
};

/// dX = -u(t)Df(X)dt + u(t)ησ(X)dB by Euler-Maruyama.
struct DiffusionSpec {
    double eta = 1.0;
    double horizon = 1.0;
    double step = 0.0;  // <= 0 selects 1e-3·horizon
    std::size_t replicas = 1000;
    std::uint64_t seed = 0;
    std::function<double(double)> control;  // u(t); constant 1 when empty
    std::optional<Matrix> sigma;            // fixed σ; estimated at x₀ when empty
    std::size_t reestimate_every = 0;       // > 0: re-estimate σ every κ steps
    std::size_t sigma_samples = 1000;
    bool keep_paths = false;
    std::size_t workers = default_worker_count();

    double step_size() const { return step > 0.0 ? step : 1e-3 * horizon; }
};

struct DiffusionResult {
    EnsembleStats stats;
    std::vector<std::vector<Vector>> paths;  // only with keep_paths
};

DiffusionResult diffusion_simulate(const StochasticObjective& obj, const Vector& x0, const DiffusionSpec& spec);

/// One Euler-Maruyama path driven by explicit Brownian increments (row i is
/// ΔB over step i), with constant σ. Returns X_0..X_steps.
std::vector<Vector> diffusion_path(const StochasticObjective& obj, const Vector& x0, const Matrix& sigma,
                                   double eta, double step, const std::function<double(double)>& control,
                                   const Matrix& increments);

struct VarianceEstimate {
    double value = 0.0;
    double standard_error = 0.0;
};

/// E|X_T - EX_T|² as the trace of the unbiased sample covariance, with a
/// jackknife standard error.
VarianceEstimate variance_objective(const EnsembleStats& stats);

struct ScheduleRow {
    double control = 0.0;
    VarianceEstimate variance;
};

struct ScheduleSearchResult {
    std::size_t best = 0;
    std::vector<ScheduleRow> table;
};

/// Constant controls u on the candidate grid, all run with the same seed
/// (common random numbers); the first minimum wins ties.
ScheduleSearchResult schedule_search(const StochasticObjective& obj, const Vector& x0,
                                     const std::vector<double>& candidates, const DiffusionSpec& spec);

}  // namespace ctrliter
