#include "ctrliter/numerics.hpp"

#include "ctrliter/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ctrliter {

bool all_finite(const Matrix& m) { return m.allFinite(); }

double spectral_norm(const Matrix& m) {
    if (!m.allFinite()) throw InputError("spectral_norm: non-finite entries");
    if (m.size() == 0) return 0.0;
    if (m.rows() == 1 || m.cols() == 1) return m.norm();
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()(0);
}

Vector ode_step(const VectorField& field, const Vector& x, double h, OdeMethod method) {
    if (method == OdeMethod::euler) return x + h * field(x);
    const Vector k1 = field(x);
    const Vector k2 = field(x + 0.5 * h * k1);
    const Vector k3 = field(x + 0.5 * h * k2);
    const Vector k4 = field(x + h * k3);
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Trajectory integrate_ode(const VectorField& field, const Vector& x0, double duration,
                         const OdeStepSpec& spec) {
    if (!(spec.step_size > 0.0)) throw InputError("integrate_ode: step_size must be positive");
    if (!(duration >= 0.0)) throw InputError("integrate_ode: duration must be non-negative");
    if (!x0.allFinite()) throw InputError("integrate_ode: non-finite initial state");

    // Steps of nominal size; the last one is shortened to land on `duration`.
    const auto full_steps = static_cast<long>(std::floor(duration / spec.step_size + 1e-9));
    const double remainder = duration - static_cast<double>(full_steps) * spec.step_size;
    const bool partial = remainder > 1e-12 * std::max(1.0, duration);

    Trajectory traj;
    const std::size_t n_samples = static_cast<std::size_t>(full_steps) + (partial ? 2 : 1);
    traj.times.reserve(n_samples);
    traj.states.reserve(n_samples);
    traj.times.push_back(0.0);
    traj.states.push_back(x0);

    Vector x = x0;
    for (long i = 0; i < full_steps; ++i) {
        x = ode_step(field, x, spec.step_size, spec.method);
        const double t = static_cast<double>(i + 1) * spec.step_size;
        if (!x.allFinite()) {
            throw DivergenceError("integrate_ode: non-finite state at t=" + std::to_string(t), t);
        }
        traj.times.push_back(t);
        traj.states.push_back(x);
    }
    if (partial) {
        x = ode_step(field, x, remainder, spec.method);
        if (!x.allFinite()) {
            throw DivergenceError("integrate_ode: non-finite state at t=" + std::to_string(duration),
                                  duration);
        }
        traj.times.push_back(duration);
        traj.states.push_back(x);
    }
    return traj;
}

std::vector<double> composite_weights(int node_count, double step) {
    if (node_count < 2) throw InputError("composite_weights: need at least 2 nodes");
    std::vector<double> w(static_cast<std::size_t>(node_count), 0.0);
    const int intervals = node_count - 1;
    if (intervals == 1) {
        w[0] = w[1] = 0.5 * step;
        return w;
    }
    // Simpson over an even number of intervals, 3/8 rule on the last three
    // when the count is odd.
    const int simpson_intervals = (intervals % 2 == 0) ? intervals : intervals - 3;
    for (int i = 0; i < simpson_intervals; i += 2) {
        w[i] += step / 3.0;
        w[i + 1] += 4.0 * step / 3.0;
        w[i + 2] += step / 3.0;
    }
    if (simpson_intervals != intervals) {
        const int s = simpson_intervals;
        w[s] += 3.0 * step / 8.0;
        w[s + 1] += 9.0 * step / 8.0;
        w[s + 2] += 9.0 * step / 8.0;
        w[s + 3] += 3.0 * step / 8.0;
    }
    return w;
}

namespace {

void check_quadrature(const QuadratureSpec& spec) {
    if (!(spec.alpha > 0.0)) throw InputError("discounted_quadrature: alpha must be positive");
    if (!(spec.horizon > 0.0)) throw InputError("discounted_quadrature: horizon must be positive");
    if (spec.node_count < 2) throw InputError("discounted_quadrature: node_count must be >= 2");
}

}  // namespace

double discounted_quadrature(const std::function<double(double)>& integrand,
                             const QuadratureSpec& spec) {
    check_quadrature(spec);
    const double step = spec.horizon / (spec.node_count - 1);
    const auto w = composite_weights(spec.node_count, step);
    double sum = 0.0;
    for (int i = 0; i < spec.node_count; ++i) {
        const double s = i * step;
        sum += w[i] * std::exp(-spec.alpha * s) * integrand(s);
    }
    return sum;
}

Vector discounted_quadrature(const std::function<Vector(double)>& integrand,
                             const QuadratureSpec& spec) {
    check_quadrature(spec);
    const double step = spec.horizon / (spec.node_count - 1);
    const auto w = composite_weights(spec.node_count, step);
    Vector sum;
    for (int i = 0; i < spec.node_count; ++i) {
        const double s = i * step;
        const Vector v = integrand(s);
        if (i == 0) sum = Vector::Zero(v.size());
        sum += (w[i] * std::exp(-spec.alpha * s)) * v;
    }
    return sum;
}

Vector discounted_quadrature(const std::vector<Vector>& samples, double step, double alpha) {
    if (!(alpha > 0.0)) throw InputError("discounted_quadrature: alpha must be positive");
    if (samples.size() < 2) throw InputError("discounted_quadrature: need at least 2 samples");
    const auto w = composite_weights(static_cast<int>(samples.size()), step);
    Vector sum = Vector::Zero(samples.front().size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        sum += (w[i] * std::exp(-alpha * step * static_cast<double>(i))) * samples[i];
    }
    return sum;
}

double discounted_tail_bound(double c, double rho, double alpha, double horizon) {
    if (!(alpha > rho)) throw InputError("discounted_tail_bound: requires alpha > rho");
    return c * std::exp(-(alpha - rho) * horizon) / (alpha - rho);
}

double horizon_for_tolerance(double c, double rho, double alpha, double tolerance,
                             double min_horizon) {
    if (!(alpha > rho)) throw InputError("horizon_for_tolerance: requires alpha > rho");
    if (!(tolerance > 0.0)) throw InputError("horizon_for_tolerance: tolerance must be positive");
    const double gap = alpha - rho;
    if (c <= 0.0) return min_horizon;
    const double t = std::log(c / (gap * tolerance)) / gap;
    return std::max(min_horizon, t);
}

Matrix clamp_psd(const Matrix& s) {
    const Matrix sym = 0.5 * (s + s.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    const Vector vals = eig.eigenvalues().cwiseMax(0.0);
    return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

Matrix symmetric_sqrt(const Matrix& s) {
    if (s.rows() != s.cols()) throw InputError("symmetric_sqrt: matrix must be square");
    if (!s.allFinite()) throw InputError("symmetric_sqrt: non-finite entries");
    const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
    if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
        throw InputError("symmetric_sqrt: matrix is not symmetric");
    }
    const Matrix sym = 0.5 * (s + s.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    const Vector& vals = eig.eigenvalues();
    const double floor = -1e-12 * std::max(1.0, vals.cwiseAbs().maxCoeff());
    if (vals.minCoeff() < floor) {
        throw InputError("symmetric_sqrt: matrix is indefinite (eigenvalue " +
                         std::to_string(vals.minCoeff()) + ")");
    }
    const Vector roots = vals.cwiseMax(0.0).cwiseSqrt();
    Matrix root = eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (root + root.transpose());
}

double golden_section(const std::function<double(double)>& fn, double lo, double hi, int evaluations) {
    if (evaluations < 2 || !(hi >= lo)) throw InputError("golden_section: bad bracket");
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    auto eval = [&](double t) {
        const double v = fn(t);
        if (!std::isfinite(v)) throw StepError("golden_section: non-finite objective at " + std::to_string(t));
        return v;
    };
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = eval(c), fd = eval(d);
    for (int i = 2; i < evaluations; ++i) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d);
        }
    }
    return fc <= fd ? c : d;
}

}  // namespace ctrliter
