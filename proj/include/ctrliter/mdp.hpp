#pragma once

#include "ctrliter/approx.hpp"
#include "ctrliter/iteration_trace.hpp"
#include "ctrliter/parallel.hpp"
#include "ctrliter/types.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace ctrliter {

/// Finite chain with row-stochastic transition matrix, per-state reward f and
/// discount α in (0, 1).
struct MarkovChain {
    Matrix transition;  // S×S
    Vector reward;      // S
    double alpha = 0.5;

    int states() const { return static_cast<int>(transition.rows()); }
    void validate() const;
};

/// Finite-action MDP. `transitions[a]` is the S×S kernel under action a and
/// `cost(x, a)` = f(x, a) >= 0.
struct MdpProblem {
    std::vector<Matrix> transitions;
    Matrix cost;  // S×A
    double alpha = 0.5;

    int states() const { return static_cast<int>(cost.rows()); }
    int actions() const { return static_cast<int>(cost.cols()); }
    void validate() const;
};

/// Action index per state.
using Policy = std::vector<int>;
/// Q(x, a), S×A.
using QTable = Matrix;

/// Chain obtained by freezing the feedback.
MarkovChain policy_chain(const MdpProblem& p, const Policy& policy);
/// A one-action problem wrapping a chain.
MdpProblem single_action_problem(const MarkovChain& c);

/// (Φg)(x) = Σ_η π(x; η) g(η). Rows must sum to one within 1e-10.
Vector apply_markov_operator(const MarkovChain& c, const Vector& g);
Vector apply_markov_operator(const MdpProblem& p, const Policy& policy, const Vector& g);

/// u = (I - αΦ)⁻¹ f.
Vector evaluate_reward_sum(const MarkovChain& c);

/// Smallest n with α^n · max f / (1 - α) < tolerance.
std::size_t truncation_horizon(double alpha, double max_reward, double tolerance = 1e-8);

struct MonteCarloEstimate {
    double estimate = 0.0;
    double standard_error = 0.0;
    std::size_t horizon = 0;
    double bias_bound = 0.0;  // α^horizon · max f / (1 - α)
};

/// Next-state sampler for chains known only through simulation.
using TransitionSampler = std::function<int(int state, std::mt19937_64& rng)>;

/// (1/N) Σ_ν Σ_{n<horizon} α^n f(X_n^ν), X_0 = x. Sample ν uses its own
/// generator seeded with seed + ν, so the result does not depend on the
/// worker count. Without a horizon the truncation bias is kept below 1e-8.
MonteCarloEstimate monte_carlo_value(const MarkovChain& c, int x, std::size_t samples,
                                     std::optional<std::size_t> horizon, std::uint64_t seed,
                                     std::size_t workers = default_worker_count());
MonteCarloEstimate monte_carlo_value(const TransitionSampler& sampler, const Vector& reward, double alpha,
                                     int x, std::size_t samples, std::optional<std::size_t> horizon,
                                     std::uint64_t seed, std::size_t workers = default_worker_count());

/// Index drawn from a discrete distribution with one uniform variate.
int sample_index(const Eigen::Ref<const Eigen::RowVectorXd>& probabilities, std::mt19937_64& rng);

/// min_a [f(x, a) + αΦ^a u(x)], ties to the lowest index.
Vector bellman_backup(const MdpProblem& p, const Vector& u, Policy* argmin = nullptr);
/// f(x, a) + αΦ^a u(x) for every pair.
QTable q_values(const MdpProblem& p, const Vector& u);

struct ValueIterationResult {
    Vector u;
    std::vector<double> changes;  // sup |u_{k+1} - u_k|
    Policy policy;                // greedy policy of the last backup
};

/// K backups from u₀ = 0.
ValueIterationResult value_iteration(const MdpProblem& p, std::size_t iterations);

/// Action minimizing f(x, ·) per state.
Policy greedy_cost_policy(const MdpProblem& p);

struct PolicyIterationResult {
    Vector u;
    Policy policy;
    IterationTrace trace;            // sup change of the policy values
    std::vector<Vector> values;      // u^k after each evaluation
};

/// Exact evaluation followed by greedy improvement until the policy is
/// stable. Actions only change on a strict improvement so ties cannot cycle.
PolicyIterationResult policy_iteration(const MdpProblem& p, const Policy& a0, std::size_t max_iter = 1000);

struct QIterationResult {
    QTable q;
    Policy policy;
    IterationTrace trace;  // sup |Q^{k+1} - Q^k|
};

/// Q⁰ = f; ū^{k+1}(x) = Q^k(x, a^k(x)) with a^k greedy on Q^k;
/// Q^{k+1} = f + αΦ^a ū^{k+1}.
QIterationResult q_iteration(const MdpProblem& p, std::size_t max_iter, double tol);

/// Ridge fit of u ≈ Σθ_iφ_i on the states by least squares on the
/// Bellman-evaluation residual Σ_x |u(x) - f(x) - αΦu(x)|² + γ|θ|².
/// `features` is S×I (φ_i at each state).
FittedModel fit_value_function(const MarkovChain& c, const Matrix& features, double gamma);

/// Continuous-action MDP on finite states. `transition_row(x, a)` is the
/// distribution of the next state. Derivatives are optional; they default to
/// central differences with step 1e-5.
struct ContinuousMdp {
    int states = 0;
    int action_dim = 1;
    std::function<double(int, const Vector&)> cost;
    std::function<Eigen::RowVectorXd(int, const Vector&)> transition_row;
    std::function<Vector(int, const Vector&)> cost_gradient;
    /// S×d_a: ∂π(x, a; η)/∂a_k.
    std::function<Matrix(int, const Vector&)> transition_gradient;
    double alpha = 0.5;
};

/// Q(x, a) = f(x, a) + α Σ_η π(x, a; η) u(η).
double action_q(const ContinuousMdp& p, const Vector& u, int x, const Vector& a);
/// D_a Q(x, a).
Vector action_q_gradient(const ContinuousMdp& p, const Vector& u, int x, const Vector& a);

/// a_k - ρ*·D_aQ with ρ* from golden-section search on [0, rho_max].
Vector action_gradient_step(const ContinuousMdp& p, const Vector& a_k, const Vector& u, int x,
                            double rho_max = 10.0);
/// The step above at every state (independent tasks).
std::vector<Vector> action_gradient_sweep(const ContinuousMdp& p, const std::vector<Vector>& policy,
                                          const Vector& u, double rho_max = 10.0,
                                          std::size_t workers = default_worker_count());

/// Reads the fixture format described in docs/mdp_format.md.
MdpProblem parse_mdp(std::istream& in, const std::string& source_name = "<input>");
MdpProblem load_mdp(const std::string& path);

}  // namespace ctrliter
