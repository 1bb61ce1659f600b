#include "ctrliter/sgd_control.hpp"

#include "ctrliter/errors.hpp"
#include "ctrliter/numerics.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace ctrliter {

double standard_normal(std::mt19937_64& rng) {
    // u1 in (0, 1] keeps the logarithm finite.
    const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Vector StochasticObjective::gradient(const Vector& x, std::uint64_t seed) const {
    if (full_gradient) return full_gradient(x);
    std::mt19937_64 rng(seed);
    Vector g = Vector::Zero(x.size());
    for (std::size_t i = 0; i < mc_samples; ++i) g += sample_gradient(x, sample(rng));
    return g / static_cast<double>(mc_samples);
}

StochasticObjective StochasticObjective::quadratic(const Vector& mean, const Matrix& factor) {
    if (factor.rows() != mean.size()) throw InputError("StochasticObjective::quadratic: factor must have d rows");
    StochasticObjective obj;
    obj.dim = static_cast<int>(mean.size());
    obj.sample = [mean, factor](std::mt19937_64& rng) -> Vector {
        Vector xi(factor.cols());
        for (Eigen::Index i = 0; i < xi.size(); ++i) xi(i) = standard_normal(rng);
        return mean + factor * xi;
    };
    obj.sample_gradient = [](const Vector& x, const Vector& z) -> Vector { return x - z; };
    obj.full_gradient = [mean](const Vector& x) -> Vector { return x - mean; };
    return obj;
}

StochasticObjective StochasticObjective::deterministic_quadratic(int dim) {
    StochasticObjective obj;
    obj.dim = dim;
    obj.sample = [dim](std::mt19937_64&) -> Vector { return Vector::Zero(dim); };
    obj.sample_gradient = [](const Vector& x, const Vector& z) -> Vector { return x - z; };
    obj.full_gradient = [](const Vector& x) -> Vector { return x; };
    return obj;
}

StepSchedule StepSchedule::constant(double eta) {
    StepSchedule s;
    s.eta = [eta](std::size_t) { return eta; };
    s.lower_bound = eta;
    return s;
}

StepSchedule StepSchedule::harmonic(double c) {
    StepSchedule s;
    s.eta = [c](std::size_t k) { return c / static_cast<double>(k); };
    return s;
}

std::vector<Vector> sgd_run(const StochasticObjective& obj, const Vector& x0, const StepSchedule& schedule,
                            std::size_t iterations, std::uint64_t seed) {
    if (iterations < 1) throw InputError("sgd_run: need at least one iteration");
    if (x0.size() != obj.dim) throw InputError("sgd_run: x0 has the wrong dimension");
    std::mt19937_64 rng(seed);
    std::vector<Vector> xs;
    xs.reserve(iterations + 1);
    xs.push_back(x0);
    for (std::size_t k = 1; k <= iterations; ++k) {
        const Vector z = obj.sample(rng);
        Vector next = xs.back() - schedule(k) * obj.sample_gradient(xs.back(), z);
        if (!next.allFinite()) {
            throw DivergenceError("sgd_run: non-finite iterate at k=" + std::to_string(k), static_cast<double>(k));
        }
        xs.push_back(std::move(next));
    }
    return xs;
}

NoiseCovariance noise_covariance(const StochasticObjective& obj, const Vector& x, std::size_t samples,
                                 std::uint64_t seed) {
    if (samples < 2) throw InputError("noise_covariance: need at least two samples");
    std::mt19937_64 rng(seed);
    const auto d = x.size();
    // The centered sample covariance estimates E[gg*] - DfDf* with an error
    // independent of |Df|, unlike the raw second moment minus DfDf*.
    Matrix g(static_cast<Eigen::Index>(samples), d);
    for (std::size_t i = 0; i < samples; ++i) {
        g.row(static_cast<Eigen::Index>(i)) = obj.sample_gradient(x, obj.sample(rng)).transpose();
    }
    const Eigen::RowVectorXd mean = g.colwise().mean();
    g.rowwise() -= mean;
    const Matrix sigma2 = (g.transpose() * g) / (static_cast<double>(samples) - 1.0);
    NoiseCovariance out;
    out.sigma_squared = clamp_psd(sigma2);
    out.sigma = symmetric_sqrt(out.sigma_squared);
    return out;
}

Matrix whitening_diagnostic(const StochasticObjective& obj, const Vector& x, std::size_t samples,
                            std::uint64_t seed) {
    const NoiseCovariance nc = noise_covariance(obj, x, samples, seed);
    const Matrix pinv = nc.sigma.completeOrthogonalDecomposition().pseudoInverse();
    const Vector df = obj.gradient(x, seed);
    std::mt19937_64 rng(seed + 1);
    const auto d = x.size();
    Matrix cov = Matrix::Zero(d, d);
    for (std::size_t i = 0; i < samples; ++i) {
        const Vector y = pinv * (df - obj.sample_gradient(x, obj.sample(rng)));
        cov.noalias() += y * y.transpose();
    }
    return cov / static_cast<double>(samples);
}

EnsembleStats EnsembleStats::from_terminal(Matrix terminal) {
    EnsembleStats s;
    const auto r = terminal.rows();
    s.mean = terminal.colwise().mean().transpose();
    const Matrix centered = terminal.rowwise() - s.mean.transpose();
    s.covariance = r > 1 ? Matrix(centered.transpose() * centered / static_cast<double>(r - 1))
                         : Matrix::Zero(terminal.cols(), terminal.cols());
    s.terminal = std::move(terminal);
    return s;
}

std::vector<Vector> diffusion_path(const StochasticObjective& obj, const Vector& x0, const Matrix& sigma,
                                   double eta, double step, const std::function<double(double)>& control,
                                   const Matrix& increments) {
    if (increments.cols() != x0.size()) throw InputError("diffusion_path: increments must have d columns");
    std::vector<Vector> xs;
    xs.reserve(static_cast<std::size_t>(increments.rows()) + 1);
    xs.push_back(x0);
    Vector x = x0;
    for (Eigen::Index i = 0; i < increments.rows(); ++i) {
        const double t = static_cast<double>(i) * step;
        const double u = control ? control(t) : 1.0;
        x = x - u * step * obj.gradient(x) + u * eta * (sigma * increments.row(i).transpose());
        if (!x.allFinite()) throw DivergenceError("diffusion_path: non-finite state", t + step);
        xs.push_back(x);
    }
    return xs;
}

DiffusionResult diffusion_simulate(const StochasticObjective& obj, const Vector& x0, const DiffusionSpec& spec) {
    if (!(spec.horizon > 0.0)) throw InputError("diffusion_simulate: horizon must be positive");
    if (spec.replicas < 1) throw InputError("diffusion_simulate: need at least one replica");
    if (x0.size() != obj.dim) throw InputError("diffusion_simulate: x0 has the wrong dimension");
    const double h = spec.step_size();
    const auto steps = static_cast<std::size_t>(std::llround(spec.horizon / h));
    const double sqrt_h = std::sqrt(h);
    const auto d = x0.size();
    const Matrix sigma0 = spec.sigma ? *spec.sigma : noise_covariance(obj, x0, spec.sigma_samples, spec.seed).sigma;
    if (sigma0.rows() != d || sigma0.cols() != d) throw InputError("diffusion_simulate: σ must be d×d");

    Matrix terminal(static_cast<Eigen::Index>(spec.replicas), d);
    DiffusionResult out;
    if (spec.keep_paths) out.paths.resize(spec.replicas);

    parallel_for(
        spec.replicas,
        [&](std::size_t r) {
            std::mt19937_64 rng(spec.seed + r);
            Matrix sigma = sigma0;
            Vector x = x0;
            Vector db(d);
            std::vector<Vector> path;
            if (spec.keep_paths) path.push_back(x);
            for (std::size_t i = 0; i < steps; ++i) {
                const double t = static_cast<double>(i) * h;
                if (spec.reestimate_every > 0 && i > 0 && i % spec.reestimate_every == 0) {
                    sigma = noise_covariance(obj, x, spec.sigma_samples, spec.seed ^ (r * 0x9E3779B97F4A7C15ULL + i)).sigma;
                }
                for (Eigen::Index k = 0; k < d; ++k) db(k) = sqrt_h * standard_normal(rng);
                const double u = spec.control ? spec.control(t) : 1.0;
                x = x - u * h * obj.gradient(x) + u * spec.eta * (sigma * db);
                if (!x.allFinite()) throw DivergenceError("diffusion_simulate: non-finite state", t + h);
                if (spec.keep_paths) path.push_back(x);
            }
            terminal.row(static_cast<Eigen::Index>(r)) = x.transpose();
            if (spec.keep_paths) out.paths[r] = std::move(path);
        },
        spec.workers);
    out.stats = EnsembleStats::from_terminal(std::move(terminal));
    return out;
}

VarianceEstimate variance_objective(const EnsembleStats& stats) {
    const auto r = stats.terminal.rows();
    if (r < 2) throw InputError("variance_objective: need at least two replicas");
    const Matrix centered = stats.terminal.rowwise() - stats.mean.transpose();
    const Vector dev = centered.rowwise().squaredNorm();
    const double ss = dev.sum();
    const auto rr = static_cast<double>(r);
    VarianceEstimate v;
    v.value = ss / (rr - 1.0);
    if (r < 3) {
        v.standard_error = std::numeric_limits<double>::infinity();
        return v;
    }
    // Leave-one-out sums of squares: SS_{-i} = SS - R/(R-1)|x_i - μ|².
    Vector loo(r);
    for (Eigen::Index i = 0; i < r; ++i) loo(i) = (ss - rr / (rr - 1.0) * dev(i)) / (rr - 2.0);
    const double mean_loo = loo.mean();
    v.standard_error = std::sqrt((rr - 1.0) / rr * (loo.array() - mean_loo).square().sum());
    return v;
}

ScheduleSearchResult schedule_search(const StochasticObjective& obj, const Vector& x0,
                                     const std::vector<double>& candidates, const DiffusionSpec& spec) {
    if (candidates.empty()) throw InputError("schedule_search: empty candidate grid");
    ScheduleSearchResult out;
    for (double u : candidates) {
        if (!(u > 0.0 && u <= 1.0)) throw InputError("schedule_search: controls must lie in (0, 1]");
        DiffusionSpec s = spec;
        s.control = [u](double) { return u; };
        s.keep_paths = false;
        out.table.push_back({u, variance_objective(diffusion_simulate(obj, x0, s).stats)});
    }
    for (std::size_t i = 1; i < out.table.size(); ++i) {
        if (out.table[i].variance.value < out.table[out.best].variance.value) out.best = i;
    }
    return out;
}

}  // namespace ctrliter
