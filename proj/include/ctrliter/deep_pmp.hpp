#pragma once

#include "ctrliter/approx.hpp"
#include "ctrliter/numerics.hpp"
#include "ctrliter/parallel.hpp"
#include "ctrliter/types.hpp"

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace ctrliter {

/// Right-hand side f(X, θ, t) of the state equation with its Jacobians.
class Dynamics {
public:
    virtual ~Dynamics() = default;
    virtual int state_dim() const = 0;
    virtual int param_dim() const = 0;
    virtual Vector eval(const Vector& x, const Vector& theta, double t) const = 0;
    virtual Matrix state_jacobian(const Vector& x, const Vector& theta, double t) const = 0;
    virtual Matrix param_jacobian(const Vector& x, const Vector& theta, double t) const = 0;
};

/// f = σ(WX + b), θ = (W row-major, b).
class LayerDynamics final : public Dynamics {
public:
    LayerDynamics(int state_dim, Activation activation = Activation::tanh);

    int state_dim() const override { return n_; }
    int param_dim() const override { return n_ * n_ + n_; }
    Vector eval(const Vector& x, const Vector& theta, double t) const override;
    Matrix state_jacobian(const Vector& x, const Vector& theta, double t) const override;
    Matrix param_jacobian(const Vector& x, const Vector& theta, double t) const override;

    Activation activation() const { return activation_; }
    static Vector pack(const Matrix& W, const Vector& b);

private:
    int n_;
    Activation activation_;
};

/// f = θ (the state follows the control directly).
class ControlDynamics final : public Dynamics {
public:
    explicit ControlDynamics(int state_dim) : n_(state_dim) {}

    int state_dim() const override { return n_; }
    int param_dim() const override { return n_; }
    Vector eval(const Vector&, const Vector& theta, double) const override { return theta; }
    Matrix state_jacobian(const Vector&, const Vector&, double) const override { return Matrix::Zero(n_, n_); }
    Matrix param_jacobian(const Vector&, const Vector&, double) const override {
        return Matrix::Identity(n_, n_);
    }

private:
    int n_;
};

/// Continuous-depth model dX/dt = f(X, θ_t, t) on [0, T] with K grid
/// intervals, input map χ (identity by default) and linear read-out
/// g(X) = r·X (r = e₀ by default).
struct ContinuousNet {
    std::shared_ptr<const Dynamics> dynamics;
    double horizon = 1.0;
    int steps = 10;
    OdeMethod method = OdeMethod::rk4;
    std::function<Vector(const Vector&)> input_map;
    Vector readout;

    double dt() const { return horizon / steps; }
    int state_dim() const { return dynamics->state_dim(); }
    Vector embed(const Vector& x) const;
    double output(const Vector& x_T) const;
    Vector output_gradient(const Vector& x_T) const;
    void validate() const;
};

/// θ_t piecewise constant: theta[k] holds on [t_k, t_{k+1}).
struct ControlPath {
    std::vector<Vector> theta;

    static ControlPath constant(int steps, const Vector& value);
    std::size_t steps() const { return theta.size(); }
};

/// Samples (x^m, y^m), loss Σ_m w(y^m - g(X_T^m))² + ∫ γ_reg|θ_t|² dt.
/// `sample_weight` w is the per-sample scaling (1 by default, 1/M for a
/// mean).
struct TrainingSet {
    std::vector<Vector> inputs;
    std::vector<double> targets;
    double regularization = 0.0;
    double sample_weight = 1.0;

    std::size_t size() const { return inputs.size(); }
};

/// Reads one sample per line: d inputs then the target, separated by commas
/// or whitespace. `#` starts a comment.
TrainingSet parse_training_set(std::istream& in, const std::string& source_name = "<input>");
TrainingSet load_training_set(const std::string& path);

/// X_k at the grid times t_k = k·dt for one sample.
using StatePath = std::vector<Vector>;

std::vector<StatePath> forward_states(const ContinuousNet& net, const ControlPath& theta,
                                      const TrainingSet& data,
                                      std::size_t workers = default_worker_count());

/// Terminal loss plus regularizer.
double training_cost(const ContinuousNet& net, const ControlPath& theta, const TrainingSet& data,
                     const std::vector<StatePath>& states);
double training_cost(const ContinuousNet& net, const ControlPath& theta, const TrainingSet& data,
                     std::size_t workers = default_worker_count());

/// p_k at the grid times, integrated backward from p_T = D_xΦ(X_T) along
/// -dp/dt = (D_x f)*p with the forward states interpolated (cubic Hermite) at
/// interval midpoints.
std::vector<StatePath> backward_adjoints(const ContinuousNet& net, const ControlPath& theta,
                                         const TrainingSet& data, const std::vector<StatePath>& states,
                                         std::size_t workers = default_worker_count());

/// dJ/dθ_k assembled from the adjoints: Σ_m ∫_{t_k}^{t_{k+1}} (D_θ f)*p dt
/// (Simpson) plus the regularizer term 2γ_reg·dt·θ_k.
std::vector<Vector> hamiltonian_gradient(const ContinuousNet& net, const ControlPath& theta,
                                         const TrainingSet& data, const std::vector<StatePath>& states,
                                         const std::vector<StatePath>& adjoints);

enum class MsaMode { damped, full_argmin };

struct MsaOptions {
    MsaMode mode = MsaMode::damped;
    double learning_rate = 0.1;  // step on the per-unit-time Hamiltonian gradient
    int backtracking = 30;       // Armijo halvings per node
    int argmin_iterations = 200; // inner iterations for full_argmin
    std::size_t workers = default_worker_count();
};

struct MsaStep {
    ControlPath theta;
    std::vector<bool> line_search_failed;  // per node
};

/// Per node, lowers H_k(θ) = Σ_m ∫ p·f(X, θ, t) dt + γ_reg·dt·|θ|² with the
/// forward/backward paths of θ_k frozen: one Armijo-backtracked gradient step
/// (damped) or gradient descent to stationarity (full_argmin).
MsaStep msa_step(const ContinuousNet& net, const ControlPath& theta, const TrainingSet& data,
                 const MsaOptions& opts = {});

struct TrainOptions {
    std::size_t epochs = 1000;
    double tol = 1e-12;  // stop when an accepted step lowers J by less than this
    MsaOptions msa;
    int max_halvings = 30;
};

struct TrainResult {
    ControlPath theta;
    std::vector<double> costs;  // accepted J per epoch, starting with J(θ₀)
    bool converged = false;
    bool stagnated = false;
    std::size_t rejected = 0;
};

/// MSA loop; a step that raises J by more than 1e-12 is rejected and the
/// learning rate halved. Returns the best path seen.
TrainResult train(const ContinuousNet& net, const ControlPath& theta0, const TrainingSet& data,
                  const TrainOptions& opts = {});

}  // namespace ctrliter
