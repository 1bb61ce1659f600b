#include "ctrliter/deep_pmp.hpp"

#include "ctrliter/errors.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>

namespace ctrliter {

// ---------------------------------------------------------------- dynamics

LayerDynamics::LayerDynamics(int state_dim, Activation activation) : n_(state_dim), activation_(activation) {
    if (state_dim < 1) throw InputError("LayerDynamics: state dimension must be >= 1");
}

Vector LayerDynamics::pack(const Matrix& W, const Vector& b) {
    const auto n = W.rows();
    if (W.cols() != n || b.size() != n) throw InputError("LayerDynamics::pack: W must be n×n and b length n");
    Vector theta(n * n + n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) theta(i * n + j) = W(i, j);
    theta.tail(n) = b;
    return theta;
}

namespace {

Vector pre_activation(int n, const Vector& x, const Vector& theta) {
    Vector z = theta.tail(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) z(i) += theta(i * n + j) * x(j);
    return z;
}

}  // namespace

Vector LayerDynamics::eval(const Vector& x, const Vector& theta, double) const {
    Vector z = pre_activation(n_, x, theta);
    for (int i = 0; i < n_; ++i) z(i) = activate(activation_, z(i));
    return z;
}

Matrix LayerDynamics::state_jacobian(const Vector& x, const Vector& theta, double) const {
    const Vector z = pre_activation(n_, x, theta);
    Matrix j(n_, n_);
    for (int i = 0; i < n_; ++i) {
        const double s = activate_derivative(activation_, z(i));
        for (int k = 0; k < n_; ++k) j(i, k) = s * theta(i * n_ + k);
    }
    return j;
}

Matrix LayerDynamics::param_jacobian(const Vector& x, const Vector& theta, double) const {
    const Vector z = pre_activation(n_, x, theta);
    Matrix j = Matrix::Zero(n_, param_dim());
    for (int i = 0; i < n_; ++i) {
        const double s = activate_derivative(activation_, z(i));
        for (int k = 0; k < n_; ++k) j(i, i * n_ + k) = s * x(k);
        j(i, n_ * n_ + i) = s;
    }
    return j;
}

// ---------------------------------------------------------------- net

Vector ContinuousNet::embed(const Vector& x) const {
    if (input_map) return input_map(x);
    if (x.size() != state_dim()) throw InputError("ContinuousNet: input dimension differs from state dimension");
    return x;
}

double ContinuousNet::output(const Vector& x_T) const {
    if (readout.size() == 0) return x_T(0);
    return readout.dot(x_T);
}

Vector ContinuousNet::output_gradient(const Vector& x_T) const {
    if (readout.size() == 0) {
        Vector e = Vector::Zero(x_T.size());
        e(0) = 1.0;
        return e;
    }
    return readout;
}

void ContinuousNet::validate() const {
    if (!dynamics) throw InputError("ContinuousNet: dynamics missing");
    if (!(horizon > 0.0) || steps < 1) throw InputError("ContinuousNet: horizon > 0 and steps >= 1 required");
    if (readout.size() != 0 && readout.size() != state_dim()) throw InputError("ContinuousNet: readout length");
}

ControlPath ControlPath::constant(int steps, const Vector& value) {
    return ControlPath{std::vector<Vector>(static_cast<std::size_t>(steps), value)};
}

namespace {

void check_inputs(const ContinuousNet& net, const ControlPath& theta, const TrainingSet& data) {
    net.validate();
    if (static_cast<int>(theta.steps()) != net.steps) throw InputError("ControlPath: one θ per grid interval");
    for (const Vector& t : theta.theta) {
        if (t.size() != net.dynamics->param_dim()) throw InputError("ControlPath: θ has the wrong dimension");
        if (!t.allFinite()) throw InputError("ControlPath: non-finite θ");
    }
    if (data.inputs.empty() || data.inputs.size() != data.targets.size()) {
        throw InputError("TrainingSet: need matching, non-empty inputs and targets");
    }
}

// Cubic Hermite value at the midpoint of [t_k, t_{k+1}].
Vector hermite_mid(const Vector& y0, const Vector& y1, const Vector& d0, const Vector& d1, double h) {
    return 0.5 * (y0 + y1) + (h / 8.0) * (d0 - d1);
}

// Frozen quantities of one sample on one interval.
struct Frame {
    Vector x[3];  // t_k, midpoint, t_{k+1}
    Vector p[3];
};

Frame frame(const ContinuousNet& net, const ControlPath& theta, const StatePath& xs, const StatePath& ps,
            std::size_t k) {
    const Dynamics& f = *net.dynamics;
    const double h = net.dt();
    const double t0 = static_cast<double>(k) * h;
    const Vector& th = theta.theta[k];
    Frame fr;
    fr.x[0] = xs[k];
    fr.x[2] = xs[k + 1];
    const Vector f0 = f.eval(fr.x[0], th, t0);
    const Vector f1 = f.eval(fr.x[2], th, t0 + h);
    fr.x[1] = hermite_mid(fr.x[0], fr.x[2], f0, f1, h);
    fr.p[0] = ps[k];
    fr.p[2] = ps[k + 1];
    const Vector d0 = -f.state_jacobian(fr.x[0], th, t0).transpose() * fr.p[0];
    const Vector d1 = -f.state_jacobian(fr.x[2], th, t0 + h).transpose() * fr.p[2];
    fr.p[1] = hermite_mid(fr.p[0], fr.p[2], d0, d1, h);
    return fr;
}

constexpr double kSimpson[3] = {1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0};

}  // namespace

std::vector<StatePath> forward_states(const ContinuousNet& net, const ControlPath& theta, const TrainingSet& data,
                                      std::size_t workers) {
    check_inputs(net, theta, data);
    const Dynamics& f = *net.dynamics;
    const double h = net.dt();
    std::vector<StatePath> out(data.size());
    parallel_for(
        data.size(),
        [&](std::size_t m) {
            StatePath path;
            path.reserve(static_cast<std::size_t>(net.steps) + 1);
            Vector x = net.embed(data.inputs[m]);
            path.push_back(x);
            for (int k = 0; k < net.steps; ++k) {
                const Vector& th = theta.theta[static_cast<std::size_t>(k)];
                const double t = k * h;
                if (net.method == OdeMethod::euler) {
                    x = x + h * f.eval(x, th, t);
                } else {
                    const Vector k1 = f.eval(x, th, t);
                    const Vector k2 = f.eval(x + 0.5 * h * k1, th, t + 0.5 * h);
                    const Vector k3 = f.eval(x + 0.5 * h * k2, th, t + 0.5 * h);
                    const Vector k4 = f.eval(x + h * k3, th, t + h);
                    x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                }
                if (!x.allFinite()) {
                    throw DivergenceError("forward_states: non-finite state at t=" + std::to_string(t + h), t + h);
                }
                path.push_back(x);
            }
            out[m] = std::move(path);
        },
        workers);
    return out;
}

double training_cost(const ContinuousNet& net, const ControlPath& theta, const TrainingSet& data,
                     const std::vector<StatePath>& states) {
    double loss = 0.0;
    for (std::size_t m = 0; m < data.size(); ++m) {
        const double r = data.targets[m] - net.output(states[m].back());
        loss += data.sample_weight * r * r;
    }
    double reg = 0.0;
    for (const Vector& t : theta.theta) reg += t.squaredNorm();
    return loss + data.regularization * net.dt() * reg;
}

double training_cost(const ContinuousNet& net, const ControlPath& theta, const TrainingSet& data,
                     std::size_t workers) {
    return training_cost(net, theta, data, forward_states(net, theta, data, workers));
}

std::vector<StatePath> backward_adjoints(const ContinuousNet& net, const ControlPath& theta, const TrainingSet& data,
                                         const std::vector<StatePath>& states, std::size_t workers) {
    check_inputs(net, theta, data);
    if (states.size() != data.size()) throw InputError("backward_adjoints: one forward path per sample");
    const Dynamics& f = *net.dynamics;
    const double h = net.dt();
    std::vector<StatePath> out(data.size());
    parallel_for(
        data.size(),
        [&](std::size_t m) {
            const StatePath& xs = states[m];
            const auto K = static_cast<std::size_t>(net.steps);
            StatePath ps(K + 1);
            const double r = data.targets[m] - net.output(xs[K]);
            ps[K] = -2.0 * data.sample_weight * r * net.output_gradient(xs[K]);
            for (std::size_t k = K; k-- > 0;) {
                const Vector& th = theta.theta[k];
                const double t0 = static_cast<double>(k) * h;
                const Vector f0 = f.eval(xs[k], th, t0);
                const Vector f1 = f.eval(xs[k + 1], th, t0 + h);
                const Vector xm = hermite_mid(xs[k], xs[k + 1], f0, f1, h);
                const Matrix j1 = f.state_jacobian(xs[k + 1], th, t0 + h).transpose();
                const Matrix jm = f.state_jacobian(xm, th, t0 + 0.5 * h).transpose();
                const Matrix j0 = f.state_jacobian(xs[k], th, t0).transpose();
                // dp/dτ = (D_x f)*p in reversed time τ = t_{k+1} - t.
                const Vector& p = ps[k + 1];
                const Vector k1 = j1 * p;
                const Vector k2 = jm * (p + 0.5 * h * k1);
                const Vector k3 = jm * (p + 0.5 * h * k2);
                const Vector k4 = j0 * (p + h * k3);
                ps[k] = p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            out[m] = std::move(ps);
        },
        workers);
    return out;
}

std::vector<Vector> hamiltonian_gradient(const ContinuousNet& net, const ControlPath& theta, const TrainingSet& data,
                                         const std::vector<StatePath>& states,
                                         const std::vector<StatePath>& adjoints) {
    const Dynamics& f = *net.dynamics;
    const double h = net.dt();
    std::vector<Vector> grad(theta.steps());
    for (std::size_t k = 0; k < theta.steps(); ++k) {
        const Vector& th = theta.theta[k];
        const double t0 = static_cast<double>(k) * h;
        Vector g = 2.0 * data.regularization * h * th;
        for (std::size_t m = 0; m < data.size(); ++m) {
            const Frame fr = frame(net, theta, states[m], adjoints[m], k);
            for (int s = 0; s < 3; ++s) {
                g += h * kSimpson[s] * (f.param_jacobian(fr.x[s], th, t0 + 0.5 * s * h).transpose() * fr.p[s]);
            }
        }
        grad[k] = std::move(g);
    }
    return grad;
}

MsaStep msa_step(const ContinuousNet& net, const ControlPath& theta, const TrainingSet& data, const MsaOptions& opts) {
    const auto states = forward_states(net, theta, data, opts.workers);
    const auto adjoints = backward_adjoints(net, theta, data, states, opts.workers);
    const Dynamics& f = *net.dynamics;
    const double h = net.dt();

    MsaStep out{theta, std::vector<bool>(theta.steps(), false)};
    parallel_for(
        theta.steps(),
        [&](std::size_t k) {
            const double t0 = static_cast<double>(k) * h;
            std::vector<Frame> frames;
            frames.reserve(data.size());
            for (std::size_t m = 0; m < data.size(); ++m) frames.push_back(frame(net, theta, states[m], adjoints[m], k));

            auto hamiltonian = [&](const Vector& th) {
                double v = data.regularization * h * th.squaredNorm();
                for (const Frame& fr : frames)
                    for (int s = 0; s < 3; ++s) v += h * kSimpson[s] * fr.p[s].dot(f.eval(fr.x[s], th, t0 + 0.5 * s * h));
                return v;
            };
            // Gradient per unit time, so the learning rate does not depend on K.
            auto gradient = [&](const Vector& th) {
                Vector g = 2.0 * data.regularization * th;
                for (const Frame& fr : frames)
                    for (int s = 0; s < 3; ++s)
                        g += kSimpson[s] * (f.param_jacobian(fr.x[s], th, t0 + 0.5 * s * h).transpose() * fr.p[s]);
                return g;
            };

            Vector th = theta.theta[k];
            const int rounds = opts.mode == MsaMode::damped ? 1 : opts.argmin_iterations;
            for (int it = 0; it < rounds; ++it) {
                const Vector g = gradient(th);
                const double gg = g.squaredNorm();
                if (!(gg > 1e-30)) break;
                const double h0 = hamiltonian(th);
                double lr = opts.learning_rate;
                bool accepted = false;
                for (int b = 0; b <= opts.backtracking; ++b, lr *= 0.5) {
                    const Vector trial = th - lr * g;
                    const double ht = hamiltonian(trial);
                    if (std::isfinite(ht) && ht <= h0 - 1e-4 * lr * h * gg) {
                        th = trial;
                        accepted = true;
                        break;
                    }
                }
                if (!accepted) {
                    if (it == 0) out.line_search_failed[k] = true;
                    break;
                }
            }
            out.theta.theta[k] = th;
        },
        opts.workers);
    return out;
}

TrainResult train(const ContinuousNet& net, const ControlPath& theta0, const TrainingSet& data,
                  const TrainOptions& opts) {
    TrainResult r;
    r.theta = theta0;
    double cost = training_cost(net, theta0, data, opts.msa.workers);
    r.costs.push_back(cost);
    MsaOptions msa = opts.msa;
    int halvings = 0;
    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        const MsaStep step = msa_step(net, r.theta, data, msa);
        double next = std::numeric_limits<double>::infinity();
        try {
            next = training_cost(net, step.theta, data, msa.workers);
        } catch (const DivergenceError&) {
        }
        if (!(next <= cost + 1e-12)) {
            ++r.rejected;
            msa.learning_rate *= 0.5;
            if (++halvings >= opts.max_halvings) {
                r.stagnated = true;
                break;
            }
            continue;
        }
        halvings = 0;
        const double decrease = cost - next;
        r.theta = step.theta;
        cost = next;
        r.costs.push_back(cost);
        if (decrease < opts.tol) {
            r.converged = true;
            break;
        }
    }
    return r;
}

// ---------------------------------------------------------------- data files

TrainingSet parse_training_set(std::istream& in, const std::string& source_name) {
    TrainingSet set;
    std::string line;
    int line_no = 0;
    Eigen::Index width = -1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        for (char& c : line)
            if (c == ',' || c == ';' || c == '\t') c = ' ';
        std::istringstream row(line);
        std::vector<double> values;
        std::string token;
        while (row >> token) {
            try {
                std::size_t used = 0;
                values.push_back(std::stod(token, &used));
                if (used != token.size()) throw std::invalid_argument(token);
            } catch (const std::exception&) {
                throw InputError(source_name + ":" + std::to_string(line_no) + ": not a number: '" + token + "'");
            }
        }
        if (values.empty()) continue;
        if (values.size() < 2) {
            throw InputError(source_name + ":" + std::to_string(line_no) + ": need at least one input and a target");
        }
        const auto d = static_cast<Eigen::Index>(values.size() - 1);
        if (width >= 0 && d != width) {
            throw InputError(source_name + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) +
                             " inputs");
        }
        width = d;
        Vector x(d);
        for (Eigen::Index i = 0; i < d; ++i) x(i) = values[static_cast<std::size_t>(i)];
        set.inputs.push_back(std::move(x));
        set.targets.push_back(values.back());
    }
    if (set.inputs.empty()) throw InputError(source_name + ": no samples");
    return set;
}

TrainingSet load_training_set(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("load_training_set: cannot open " + path);
    return parse_training_set(in, path);
}

}  // namespace ctrliter
