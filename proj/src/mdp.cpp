#include "ctrliter/mdp.hpp"

#include "ctrliter/errors.hpp"
#include "ctrliter/numerics.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

namespace ctrliter {

namespace {

void check_stochastic(const Matrix& t, double tol, const std::string& who) {
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
        if ((t.row(i).array() < -1e-15).any() || (t.row(i).array() > 1.0 + 1e-15).any()) {
            throw InputError(who + ": transition entries must lie in [0, 1] (row " + std::to_string(i) + ")");
        }
        const double s = t.row(i).sum();
        if (std::abs(s - 1.0) > tol) {
            throw InputError(who + ": row " + std::to_string(i) + " sums to " + std::to_string(s));
        }
    }
}

void check_alpha(double alpha, const std::string& who) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError(who + ": alpha must lie in (0, 1)");
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

void MarkovChain::validate() const {
    if (transition.rows() < 1 || transition.cols() != transition.rows()) {
        throw InputError("MarkovChain: transition must be square and non-empty");
    }
    if (reward.size() != transition.rows()) throw InputError("MarkovChain: one reward per state required");
    if (!transition.allFinite() || !reward.allFinite()) throw InputError("MarkovChain: non-finite entries");
    check_alpha(alpha, "MarkovChain");
    check_stochastic(transition, 1e-10, "MarkovChain");
}

void MdpProblem::validate() const {
    const auto s = cost.rows();
    if (s < 1 || cost.cols() < 1) throw InputError("MdpProblem: empty cost table");
    if (static_cast<Eigen::Index>(transitions.size()) != cost.cols()) {
        throw InputError("MdpProblem: one transition matrix per action required");
    }
    for (std::size_t a = 0; a < transitions.size(); ++a) {
        if (transitions[a].rows() != s || transitions[a].cols() != s) {
            throw InputError("MdpProblem: transition " + std::to_string(a) + " must be S×S");
        }
        check_stochastic(transitions[a], 1e-10, "MdpProblem action " + std::to_string(a));
    }
    if (!cost.allFinite() || (cost.array() < 0.0).any()) {
        throw InputError("MdpProblem: costs must be finite and non-negative");
    }
    check_alpha(alpha, "MdpProblem");
}

MarkovChain policy_chain(const MdpProblem& p, const Policy& policy) {
    const int s = p.states();
    if (static_cast<int>(policy.size()) != s) throw InputError("policy_chain: one action per state required");
    MarkovChain c;
    c.transition.resize(s, s);
    c.reward.resize(s);
    c.alpha = p.alpha;
    for (int x = 0; x < s; ++x) {
        const int a = policy[static_cast<std::size_t>(x)];
        if (a < 0 || a >= p.actions()) throw InputError("policy_chain: action index out of range");
        c.transition.row(x) = p.transitions[static_cast<std::size_t>(a)].row(x);
        c.reward(x) = p.cost(x, a);
    }
    return c;
}

MdpProblem single_action_problem(const MarkovChain& c) {
    MdpProblem p;
    p.transitions = {c.transition};
    p.cost = c.reward;
    p.alpha = c.alpha;
    return p;
}

Vector apply_markov_operator(const MarkovChain& c, const Vector& g) {
    if (g.size() != c.transition.cols()) throw InputError("apply_markov_operator: dimension mismatch");
    check_stochastic(c.transition, 1e-10, "apply_markov_operator");
    return c.transition * g;
}

Vector apply_markov_operator(const MdpProblem& p, const Policy& policy, const Vector& g) {
    return apply_markov_operator(policy_chain(p, policy), g);
}

Vector evaluate_reward_sum(const MarkovChain& c) {
    c.validate();
    const auto s = c.transition.rows();
    const Matrix system = Matrix::Identity(s, s) - c.alpha * c.transition;
    const Eigen::PartialPivLU<Matrix> lu(system);
    Vector u = lu.solve(c.reward);
    // Two rounds of iterative refinement.
    for (int round = 0; round < 2; ++round) {
        const Vector r = c.reward - system * u;
        if (r.cwiseAbs().maxCoeff() == 0.0) break;
        u += lu.solve(r);
    }
    return u;
}

std::size_t truncation_horizon(double alpha, double max_reward, double tolerance) {
    check_alpha(alpha, "truncation_horizon");
    if (max_reward <= 0.0) return 1;
    const double n = std::log(tolerance * (1.0 - alpha) / max_reward) / std::log(alpha);
    return n <= 1.0 ? 1 : static_cast<std::size_t>(std::ceil(n));
}

int sample_index(const Eigen::Ref<const Eigen::RowVectorXd>& probabilities, std::mt19937_64& rng) {
    const double u = uniform01(rng);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < probabilities.size(); ++j) {
        acc += probabilities(j);
        if (u < acc) return static_cast<int>(j);
    }
    // Round-off leaves acc slightly below one: fall back to the last state
    // with positive mass.
    for (Eigen::Index j = probabilities.size() - 1; j >= 0; --j)
        if (probabilities(j) > 0.0) return static_cast<int>(j);
    return static_cast<int>(probabilities.size() - 1);
}

MonteCarloEstimate monte_carlo_value(const TransitionSampler& sampler, const Vector& reward, double alpha,
                                     int x, std::size_t samples, std::optional<std::size_t> horizon,
                                     std::uint64_t seed, std::size_t workers) {
    check_alpha(alpha, "monte_carlo_value");
    if (samples < 1) throw InputError("monte_carlo_value: need at least one sample");
    if (x < 0 || x >= reward.size()) throw InputError("monte_carlo_value: start state out of range");
    const double max_f = reward.cwiseAbs().maxCoeff();

    MonteCarloEstimate out;
    out.horizon = horizon ? *horizon : truncation_horizon(alpha, max_f);
    out.bias_bound = std::pow(alpha, static_cast<double>(out.horizon)) * max_f / (1.0 - alpha);

    std::vector<double> totals(samples);
    parallel_for(
        samples,
        [&](std::size_t nu) {
            std::mt19937_64 rng(seed + nu);
            int state = x;
            double discount = 1.0, total = 0.0;
            for (std::size_t n = 0; n < out.horizon; ++n) {
                total += discount * reward(state);
                discount *= alpha;
                if (n + 1 < out.horizon) state = sampler(state, rng);
            }
            totals[nu] = total;
        },
        workers);

    double mean = 0.0;
    for (double t : totals) mean += t;
    mean /= static_cast<double>(samples);
    double ss = 0.0;
    for (double t : totals) ss += (t - mean) * (t - mean);
    out.estimate = mean;
    out.standard_error =
        samples > 1 ? std::sqrt(ss / static_cast<double>(samples - 1) / static_cast<double>(samples)) : 0.0;
    return out;
}

MonteCarloEstimate monte_carlo_value(const MarkovChain& c, int x, std::size_t samples,
                                     std::optional<std::size_t> horizon, std::uint64_t seed,
                                     std::size_t workers) {
    c.validate();
    const Matrix& t = c.transition;
    auto sampler = [&t](int state, std::mt19937_64& rng) { return sample_index(t.row(state), rng); };
    return monte_carlo_value(sampler, c.reward, c.alpha, x, samples, horizon, seed, workers);
}

QTable q_values(const MdpProblem& p, const Vector& u) {
    QTable q(p.states(), p.actions());
    for (int a = 0; a < p.actions(); ++a) {
        q.col(a) = p.cost.col(a) + p.alpha * (p.transitions[static_cast<std::size_t>(a)] * u);
    }
    return q;
}

namespace {

Vector row_min(const QTable& q, Policy* argmin) {
    Vector m(q.rows());
    if (argmin) argmin->assign(static_cast<std::size_t>(q.rows()), 0);
    for (Eigen::Index x = 0; x < q.rows(); ++x) {
        int best = 0;
        for (Eigen::Index a = 1; a < q.cols(); ++a)
            if (q(x, a) < q(x, best)) best = static_cast<int>(a);
        m(x) = q(x, best);
        if (argmin) (*argmin)[static_cast<std::size_t>(x)] = best;
    }
    return m;
}

}  // namespace

Vector bellman_backup(const MdpProblem& p, const Vector& u, Policy* argmin) {
    if (u.size() != p.states()) throw InputError("bellman_backup: dimension mismatch");
    return row_min(q_values(p, u), argmin);
}

ValueIterationResult value_iteration(const MdpProblem& p, std::size_t iterations) {
    p.validate();
    ValueIterationResult r;
    r.u = Vector::Zero(p.states());
    r.policy.assign(static_cast<std::size_t>(p.states()), 0);
    for (std::size_t k = 0; k < iterations; ++k) {
        Vector next = bellman_backup(p, r.u, &r.policy);
        r.changes.push_back((next - r.u).cwiseAbs().maxCoeff());
        r.u = std::move(next);
    }
    return r;
}

Policy greedy_cost_policy(const MdpProblem& p) {
    Policy a;
    row_min(p.cost, &a);
    return a;
}

PolicyIterationResult policy_iteration(const MdpProblem& p, const Policy& a0, std::size_t max_iter) {
    p.validate();
    PolicyIterationResult r;
    r.policy = a0;
    r.trace.tolerance = 0.0;
    Vector previous;
    for (std::size_t k = 0; k < max_iter; ++k) {
        r.u = evaluate_reward_sum(policy_chain(p, r.policy));
        r.values.push_back(r.u);
        if (previous.size() > 0) r.trace.record((r.u - previous).cwiseAbs().maxCoeff());
        previous = r.u;

        const QTable q = q_values(p, r.u);
        const double scale = 1e-12 * std::max(1.0, r.u.cwiseAbs().maxCoeff());
        bool changed = false;
        for (int x = 0; x < p.states(); ++x) {
            int& current = r.policy[static_cast<std::size_t>(x)];
            int best = current;
            for (int a = 0; a < p.actions(); ++a) {
                if (q(x, a) < q(x, best) - scale) best = a;
            }
            if (best != current) {
                current = best;
                changed = true;
            }
        }
        if (!changed) {
            r.trace.converged = true;
            break;
        }
    }
    r.trace.diverged = !r.trace.converged;
    return r;
}

QIterationResult q_iteration(const MdpProblem& p, std::size_t max_iter, double tol) {
    p.validate();
    QIterationResult r;
    r.q = p.cost;
    r.trace.tolerance = tol;
    for (std::size_t k = 0; k < max_iter; ++k) {
        const Vector ubar = row_min(r.q, &r.policy);
        QTable next = q_values(p, ubar);
        r.trace.record((next - r.q).cwiseAbs().maxCoeff());
        r.q = std::move(next);
        if (r.trace.converged) break;
    }
    row_min(r.q, &r.policy);
    r.trace.diverged = !r.trace.converged;
    return r;
}

FittedModel fit_value_function(const MarkovChain& c, const Matrix& features, double gamma) {
    c.validate();
    if (features.rows() != c.states()) throw InputError("fit_value_function: one feature row per state required");
    const Matrix design = features - c.alpha * (c.transition * features);
    return fit_linear_design(design, Matrix(c.reward), gamma);
}

// ---------------------------------------------------------------- continuous actions

double action_q(const ContinuousMdp& p, const Vector& u, int x, const Vector& a) {
    return p.cost(x, a) + p.alpha * p.transition_row(x, a).dot(u.transpose());
}

Vector action_q_gradient(const ContinuousMdp& p, const Vector& u, int x, const Vector& a) {
    Vector g(a.size());
    if (p.cost_gradient) {
        g = p.cost_gradient(x, a);
    } else {
        for (Eigen::Index k = 0; k < a.size(); ++k) {
            Vector ap = a, am = a;
            ap(k) += 1e-5;
            am(k) -= 1e-5;
            g(k) = (p.cost(x, ap) - p.cost(x, am)) / 2e-5;
        }
    }
    if (p.transition_gradient) {
        g += p.alpha * p.transition_gradient(x, a).transpose() * u;
    } else {
        for (Eigen::Index k = 0; k < a.size(); ++k) {
            Vector ap = a, am = a;
            ap(k) += 1e-5;
            am(k) -= 1e-5;
            g(k) += p.alpha * (p.transition_row(x, ap) - p.transition_row(x, am)).dot(u.transpose()) / 2e-5;
        }
    }
    return g;
}

Vector action_gradient_step(const ContinuousMdp& p, const Vector& a_k, const Vector& u, int x, double rho_max) {
    if (x < 0 || x >= p.states) throw InputError("action_gradient_step: state out of range");
    const Vector d = action_q_gradient(p, u, x, a_k);
    if (!d.allFinite()) throw StepError("action_gradient_step: non-finite gradient");
    if (d.norm() == 0.0) return a_k;
    auto q = [&](double rho) { return action_q(p, u, x, a_k - rho * d); };
    const double q0 = q(0.0);
    if (!std::isfinite(q0)) throw StepError("action_gradient_step: non-finite Q");
    const double rho = golden_section(q, 0.0, rho_max);
    if (q(rho) > q0) return a_k;
    return a_k - rho * d;
}

std::vector<Vector> action_gradient_sweep(const ContinuousMdp& p, const std::vector<Vector>& policy,
                                          const Vector& u, double rho_max, std::size_t workers) {
    if (static_cast<int>(policy.size()) != p.states) throw InputError("action_gradient_sweep: one action per state");
    std::vector<Vector> out(policy.size());
    parallel_for(
        policy.size(),
        [&](std::size_t x) { out[x] = action_gradient_step(p, policy[x], u, static_cast<int>(x), rho_max); },
        workers);
    return out;
}

// ---------------------------------------------------------------- fixture format

MdpProblem parse_mdp(std::istream& in, const std::string& source_name) {
    int states = -1, actions = -1;
    double alpha = -1.0;
    std::vector<Matrix> transitions;
    std::vector<bool> seen;
    Matrix cost;
    bool have_cost = false;

    std::string line;
    int line_no = 0;
    auto fail = [&](const std::string& msg) -> void {
        throw InputError(source_name + ":" + std::to_string(line_no) + ": " + msg);
    };
    auto next_data_line = [&](std::istringstream& row) {
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            row = std::istringstream(line);
            return true;
        }
        return false;
    };
    auto read_rows = [&](Matrix& m, int rows, int cols) {
        for (int i = 0; i < rows; ++i) {
            std::istringstream row;
            if (!next_data_line(row)) fail("unexpected end of input inside a matrix block");
            for (int j = 0; j < cols; ++j) {
                if (!(row >> m(i, j))) fail("expected " + std::to_string(cols) + " numbers");
            }
            std::string extra;
            if (row >> extra) fail("too many entries on the row");
        }
    };

    std::istringstream row;
    while (next_data_line(row)) {
        std::string key;
        row >> key;
        if (key == "states" || key == "actions") {
            int v = 0;
            if (!(row >> v) || v < 1) fail("'" + key + "' needs a positive integer");
            (key == "states" ? states : actions) = v;
        } else if (key == "alpha") {
            if (!(row >> alpha)) fail("'alpha' needs a number");
        } else if (key == "transition") {
            if (states < 1 || actions < 1) fail("'states' and 'actions' must precede 'transition'");
            int a = -1;
            if (!(row >> a) || a < 0 || a >= actions) fail("'transition' needs an action index in [0, actions)");
            if (transitions.empty()) {
                transitions.assign(static_cast<std::size_t>(actions), Matrix());
                seen.assign(static_cast<std::size_t>(actions), false);
            }
            if (seen[static_cast<std::size_t>(a)]) fail("duplicate transition block for action " + std::to_string(a));
            Matrix m(states, states);
            read_rows(m, states, states);
            transitions[static_cast<std::size_t>(a)] = m;
            seen[static_cast<std::size_t>(a)] = true;
        } else if (key == "cost") {
            if (states < 1 || actions < 1) fail("'states' and 'actions' must precede 'cost'");
            cost.resize(states, actions);
            read_rows(cost, states, actions);
            have_cost = true;
        } else {
            fail("unknown key '" + key + "'");
        }
    }
    if (states < 1 || actions < 1) throw InputError(source_name + ": missing 'states' or 'actions'");
    if (alpha < 0.0) throw InputError(source_name + ": missing 'alpha'");
    if (!have_cost) throw InputError(source_name + ": missing 'cost' block");
    for (std::size_t a = 0; a < seen.size() || a < static_cast<std::size_t>(actions); ++a) {
        if (a >= seen.size() || !seen[a]) throw InputError(source_name + ": missing transition block for action " + std::to_string(a));
    }
    MdpProblem p;
    p.transitions = std::move(transitions);
    p.cost = std::move(cost);
    p.alpha = alpha;
    try {
        p.validate();
    } catch (const InputError& e) {
        throw InputError(source_name + ": " + e.what());
    }
    return p;
}

MdpProblem load_mdp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("load_mdp: cannot open " + path);
    return parse_mdp(in, path);
}

}  // namespace ctrliter
