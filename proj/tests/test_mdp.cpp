#include "ctrliter/errors.hpp"
#include "ctrliter/mdp.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

using namespace ctrliter;

namespace {

const char* const kFixtures[] = {"two_state.mdp", "chain3.mdp", "ties3.mdp", "grid4.mdp", "unit_cost.mdp"};

std::string fixture(const std::string& name) { return std::string(CTRL_ITER_FIXTURE_DIR) + "/" + name; }

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Exact value of one deterministic policy, assembled without the library.
Vector policy_value(const MdpProblem& p, const Policy& pol) {
    const int s = p.states();
    Matrix phi(s, s);
    Vector f(s);
    for (int x = 0; x < s; ++x) {
        phi.row(x) = p.transitions[static_cast<std::size_t>(pol[static_cast<std::size_t>(x)])].row(x);
        f(x) = p.cost(x, pol[static_cast<std::size_t>(x)]);
    }
    return (Matrix::Identity(s, s) - p.alpha * phi).fullPivLu().solve(f);
}

struct BruteForce {
    Vector value;
    Policy policy;  // lexicographically first policy attaining the value
};

BruteForce enumerate(const MdpProblem& p) {
    const int s = p.states(), a = p.actions();
    std::size_t total = 1;
    for (int i = 0; i < s; ++i) total *= static_cast<std::size_t>(a);
    BruteForce best;
    best.value = Vector::Constant(s, std::numeric_limits<double>::infinity());
    std::vector<Vector> values;
    std::vector<Policy> policies;
    for (std::size_t code = 0; code < total; ++code) {
        Policy pol(static_cast<std::size_t>(s));
        std::size_t c = code;
        for (int x = 0; x < s; ++x) {
            pol[static_cast<std::size_t>(x)] = static_cast<int>(c % static_cast<std::size_t>(a));
            c /= static_cast<std::size_t>(a);
        }
        values.push_back(policy_value(p, pol));
        policies.push_back(pol);
        best.value = best.value.cwiseMin(values.back());
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        if ((values[i] - best.value).cwiseAbs().maxCoeff() < 1e-12) {
            best.policy = policies[i];
            break;
        }
    }
    return best;
}

MarkovChain chain(const Matrix& t, const Vector& f, double alpha) {
    MarkovChain c;
    c.transition = t;
    c.reward = f;
    c.alpha = alpha;
    return c;
}

Matrix mixing2() {
    Matrix t(2, 2);
    t << 0.3, 0.7, 0.6, 0.4;
    return t;
}

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double c : v) out(i++) = c;
    return out;
}

}  // namespace

TEST(MdpFormat, DocumentedExampleIsPinned) {
    const std::string bytes = slurp(fixture("two_state.mdp"));
    EXPECT_EQ(fnv1a(bytes), 0x6e0a37f8bd80a00aULL);
    const std::string doc = slurp(std::string(CTRL_ITER_SOURCE_DIR) + "/docs/mdp_format.md");
    const std::string fence = "```mdp\n";
    const auto start = doc.find(fence);
    ASSERT_NE(start, std::string::npos);
    const auto end = doc.find("```", start + fence.size());
    EXPECT_EQ(doc.substr(start + fence.size(), end - start - fence.size()), bytes);
}

TEST(MdpFormat, ParseErrorsNameTheLine) {
    std::istringstream in("states 2\nactions 1\nalpha 0.5\ntransition 0\n1 0\n0.5 0.4\ncost\n1\n1\n");
    try {
        parse_mdp(in, "bad.mdp");
        FAIL() << "expected InputError";
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("bad.mdp"), std::string::npos);
    }
    std::istringstream unknown("states 2\nfoo 3\n");
    try {
        parse_mdp(unknown, "u.mdp");
        FAIL() << "expected InputError";
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("u.mdp:2"), std::string::npos);
    }
}

TEST(MdpFormat, RejectsNegativeCostAndBadAlpha) {
    std::istringstream neg("states 1\nactions 1\nalpha 0.5\ntransition 0\n1\ncost\n-1\n");
    EXPECT_THROW(parse_mdp(neg), InputError);
    std::istringstream one("states 1\nactions 1\nalpha 1\ntransition 0\n1\ncost\n1\n");
    EXPECT_THROW(parse_mdp(one), InputError);
}

TEST(MarkovOperator, Examples) {
    const MarkovChain id = chain(Matrix::Identity(3, 3), Vector::Ones(3), 0.5);
    const Vector g = vec({1.0, -2.0, 5.0});
    EXPECT_EQ(apply_markov_operator(id, g), g);
    const MarkovChain uni = chain(Matrix::Constant(2, 2, 0.5), Vector::Ones(2), 0.5);
    EXPECT_EQ(apply_markov_operator(uni, vec({0.0, 2.0})), vec({1.0, 1.0}));
}

TEST(MarkovOperator, NonExpansive) {
    const MdpProblem p = load_mdp(fixture("grid4.mdp"));
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        Vector g(4);
        for (int i = 0; i < 4; ++i) g(i) = n(rng);
        for (int a = 0; a < 3; ++a) {
            const Vector out = apply_markov_operator(p, Policy(4, a), g);
            EXPECT_LE(out.cwiseAbs().maxCoeff(), g.cwiseAbs().maxCoeff() + 1e-15);
        }
    }
}

TEST(MarkovOperator, RowSumsChecked) {
    Matrix t(2, 2);
    t << 0.5, 0.4, 0.0, 1.0;
    EXPECT_THROW(apply_markov_operator(chain(t, Vector::Ones(2), 0.5), Vector::Ones(2)), InputError);
}

TEST(RewardSum, Examples) {
    EXPECT_LT((evaluate_reward_sum(chain(Matrix::Identity(2, 2), vec({1.0, 2.0}), 0.5)) - vec({2.0, 4.0}))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-14);
    EXPECT_LT((evaluate_reward_sum(chain(mixing2(), Vector::Ones(2), 0.5)) - Vector::Constant(2, 2.0))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-14);
}

TEST(RewardSum, NeumannSeries) {
    const MarkovChain c = chain(load_mdp(fixture("chain3.mdp")).transitions[0], vec({2.0, 1.5, 0.1}), 0.8);
    Vector series = Vector::Zero(3), term = c.reward;
    for (int n = 0; n < 400; ++n) {
        series += term;
        term = c.alpha * (c.transition * term);
    }
    const Vector u = evaluate_reward_sum(c);
    EXPECT_LT((u - series).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((u - c.reward - c.alpha * c.transition * u).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RewardSum, NeumannSeriesHundredTerms) {
    // α = 0.5: the tail after 100 terms is below 2^-100·max f/(1-α).
    const MarkovChain c = chain(mixing2(), vec({1.0, 3.0}), 0.5);
    Vector series = Vector::Zero(2), term = c.reward;
    for (int n = 0; n < 100; ++n) {
        series += term;
        term = c.alpha * (c.transition * term);
    }
    EXPECT_LT((evaluate_reward_sum(c) - series).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(MonteCarlo, DegenerateChains) {
    const MarkovChain id = chain(Matrix::Identity(2, 2), vec({1.0, 5.0}), 0.5);
    const auto est = monte_carlo_value(id, 0, 100, std::nullopt, 1, 1);
    EXPECT_EQ(est.standard_error, 0.0);
    EXPECT_NEAR(est.estimate, 2.0, est.bias_bound + 1e-15);
    EXPECT_LE(est.bias_bound, 1e-8);
    const MarkovChain ones = chain(mixing2(), Vector::Ones(2), 0.5);
    const auto e2 = monte_carlo_value(ones, 1, 100, std::nullopt, 1, 1);
    EXPECT_EQ(e2.standard_error, 0.0);
    EXPECT_NEAR(e2.estimate, 2.0, e2.bias_bound + 1e-15);
}

TEST(MonteCarlo, AgreesWithExactSolve) {
    const MarkovChain c = chain(mixing2(), vec({1.0, 3.0}), 0.7);
    const Vector exact = evaluate_reward_sum(c);
    for (int x = 0; x < 2; ++x) {
        const auto est = monte_carlo_value(c, x, 10000, std::nullopt, 42, 2);
        EXPECT_LT(std::abs(est.estimate - exact(x)), 4.0 * est.standard_error + est.bias_bound);
        EXPECT_GT(est.standard_error, 0.0);
    }
}

TEST(MonteCarlo, WorkerCountInvariant) {
    const MarkovChain c = chain(mixing2(), vec({1.0, 3.0}), 0.7);
    const auto a = monte_carlo_value(c, 0, 500, 30, 9, 1);
    const auto b = monte_carlo_value(c, 0, 500, 30, 9, 4);
    EXPECT_EQ(a.estimate, b.estimate);
    EXPECT_EQ(a.standard_error, b.standard_error);
}

TEST(MonteCarlo, BlackBoxSampler) {
    const MarkovChain c = chain(mixing2(), vec({1.0, 3.0}), 0.7);
    const TransitionSampler sampler = [t = c.transition](int x, std::mt19937_64& rng) {
        return sample_index(t.row(x), rng);
    };
    const auto a = monte_carlo_value(sampler, c.reward, c.alpha, 0, 500, 30, 9, 1);
    const auto b = monte_carlo_value(c, 0, 500, 30, 9, 1);
    EXPECT_EQ(a.estimate, b.estimate);
}

TEST(MonteCarlo, TruncationHorizon) {
    const std::size_t n = truncation_horizon(0.5, 1.0, 1e-8);
    EXPECT_LT(std::pow(0.5, static_cast<double>(n)) * 2.0, 1e-8);
    EXPECT_GE(std::pow(0.5, static_cast<double>(n - 1)) * 2.0, 1e-8);
}

TEST(ValueIteration, SingleActionGeometric) {
    const MdpProblem p = single_action_problem(chain(mixing2(), Vector::Ones(2), 0.5));
    EXPECT_NEAR(value_iteration(p, 1).u(0), 1.0, 1e-15);
    EXPECT_NEAR(value_iteration(p, 2).u(0), 1.5, 1e-15);
    EXPECT_NEAR(value_iteration(p, 3).u(1), 1.75, 1e-15);
    for (std::size_t k = 1; k < 10; ++k) {
        EXPECT_NEAR(value_iteration(p, k).u(1), 2.0 * (1.0 - std::pow(0.5, static_cast<double>(k))), 1e-14);
    }
}

TEST(ValueIteration, FixturesMatchEnumeration) {
    for (const char* name : kFixtures) {
        const MdpProblem p = load_mdp(fixture(name));
        const BruteForce bf = enumerate(p);
        const std::size_t k = 2000;
        const auto vi = value_iteration(p, k);
        EXPECT_LT((vi.u - bf.value).cwiseAbs().maxCoeff(), 1e-8) << name;
        EXPECT_EQ(vi.policy, bf.policy) << name;
    }
}

TEST(ValueIteration, ContractionAndMonotonicity) {
    for (const char* name : kFixtures) {
        const MdpProblem p = load_mdp(fixture(name));
        const auto vi = value_iteration(p, 200);
        for (std::size_t k = 1; k < vi.changes.size(); ++k) {
            EXPECT_LE(vi.changes[k], p.alpha * vi.changes[k - 1] + 1e-12) << name << " k=" << k;
        }
        Vector prev = Vector::Zero(p.states());
        for (std::size_t k = 1; k <= 30; ++k) {
            const Vector u = value_iteration(p, k).u;
            EXPECT_TRUE(((u - prev).array() >= -1e-15).all()) << name << " k=" << k;
            prev = u;
        }
    }
}

TEST(ValueIteration, KPeriodValue) {
    // u_k is the value of the k-period problem: brute force over action sequences.
    const MdpProblem p = load_mdp(fixture("two_state.mdp"));
    std::function<double(int, int)> best = [&](int x, int periods) -> double {
        if (periods == 0) return 0.0;
        double v = std::numeric_limits<double>::infinity();
        for (int a = 0; a < p.actions(); ++a) {
            double cont = 0.0;
            for (int y = 0; y < p.states(); ++y) {
                const double pr = p.transitions[static_cast<std::size_t>(a)](x, y);
                if (pr > 0.0) cont += pr * best(y, periods - 1);
            }
            v = std::min(v, p.cost(x, a) + p.alpha * cont);
        }
        return v;
    };
    const Vector u = value_iteration(p, 6).u;
    for (int x = 0; x < 2; ++x) EXPECT_NEAR(u(x), best(x, 6), 1e-14);
}

TEST(ValueIteration, ConstantShift) {
    MdpProblem p = load_mdp(fixture("chain3.mdp"));
    const Vector base = policy_iteration(p, greedy_cost_policy(p)).u;
    p.cost.array() += 0.5;
    const Vector shifted = policy_iteration(p, greedy_cost_policy(p)).u;
    EXPECT_LT((shifted - base - Vector::Constant(3, 0.5 / (1.0 - p.alpha))).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PolicyIteration, SingleActionOneIteration) {
    const MarkovChain c = chain(mixing2(), vec({1.0, 3.0}), 0.7);
    const auto pi = policy_iteration(single_action_problem(c), Policy{0, 0});
    EXPECT_EQ(pi.values.size(), 1u);  // one evaluation, no policy change
    EXPECT_TRUE(pi.trace.converged);
    EXPECT_LT((pi.u - evaluate_reward_sum(c)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(PolicyIteration, FixturesMatchEnumeration) {
    for (const char* name : kFixtures) {
        const MdpProblem p = load_mdp(fixture(name));
        const BruteForce bf = enumerate(p);
        const auto pi = policy_iteration(p, greedy_cost_policy(p));
        EXPECT_LT((pi.u - bf.value).cwiseAbs().maxCoeff(), 1e-10) << name;
        EXPECT_LT((pi.u - policy_value(p, pi.policy)).cwiseAbs().maxCoeff(), 1e-12) << name;
        // Bellman residual.
        EXPECT_LT((bellman_backup(p, pi.u) - pi.u).cwiseAbs().maxCoeff(), 1e-10) << name;
        for (std::size_t k = 1; k < pi.values.size(); ++k) {
            EXPECT_TRUE(((pi.values[k] - pi.values[k - 1]).array() <= 1e-12).all()) << name;
        }
    }
}

TEST(PolicyIteration, TwoStateExample) {
    const MdpProblem p = load_mdp(fixture("two_state.mdp"));
    const auto pi = policy_iteration(p, greedy_cost_policy(p));
    EXPECT_EQ(pi.policy, (Policy{1, 0}));
    EXPECT_NEAR(pi.u(0), 1.5, 1e-12);
    EXPECT_NEAR(pi.u(1), 0.0, 1e-12);
}

TEST(PolicyIteration, TiesResolveToLowestIndex) {
    const MdpProblem p = load_mdp(fixture("ties3.mdp"));
    EXPECT_EQ(greedy_cost_policy(p), (Policy{0, 0, 0}));
    EXPECT_EQ(policy_iteration(p, Policy{2, 1, 2}).policy, (Policy{2, 1, 2}));  // no strict improvement
    EXPECT_EQ(policy_iteration(p, greedy_cost_policy(p)).policy, (Policy{0, 0, 0}));
    Policy argmin;
    bellman_backup(p, Vector::Zero(3), &argmin);
    EXPECT_EQ(argmin, (Policy{0, 0, 0}));
}

TEST(QIteration, FixturesAgree) {
    for (const char* name : kFixtures) {
        const MdpProblem p = load_mdp(fixture(name));
        const double tol = 1e-12;
        const auto qi = q_iteration(p, 100000, tol);
        ASSERT_TRUE(qi.trace.converged) << name;
        const Vector u = qi.q.rowwise().minCoeff();
        const BruteForce bf = enumerate(p);
        EXPECT_LT((u - bf.value).cwiseAbs().maxCoeff(), 1e-8) << name;
        EXPECT_LT((u - value_iteration(p, 3000).u).cwiseAbs().maxCoeff(), 1e-8) << name;
        // Q = f + αΦ^a min_a' Q.
        EXPECT_LT((qi.q - q_values(p, u)).cwiseAbs().maxCoeff(), 10.0 * tol / (1.0 - p.alpha)) << name;
    }
}

TEST(QIteration, SingleActionCollapsesToValue) {
    const MarkovChain c = chain(mixing2(), vec({1.0, 3.0}), 0.7);
    const auto qi = q_iteration(single_action_problem(c), 10000, 1e-13);
    EXPECT_LT((qi.q.col(0) - evaluate_reward_sum(c)).cwiseAbs().maxCoeff(), 1e-11);
}

TEST(UnitCost, ExactGeometricValue) {
    const MdpProblem p = load_mdp(fixture("unit_cost.mdp"));
    const Vector expected = Vector::Constant(4, 1.0 / (1.0 - p.alpha));
    const auto pi = policy_iteration(p, greedy_cost_policy(p));
    // Rows such as (0.3, 0.7) do not sum to one in binary, so "exactly" means
    // within a few ulps of 1/(1 - α).
    const double ulps = 4.0 * std::numeric_limits<double>::epsilon() * expected(0);
    EXPECT_LE((pi.u - expected).cwiseAbs().maxCoeff(), ulps);
    const auto qi = q_iteration(p, 10000, 1e-13);
    EXPECT_LT((qi.q - Matrix::Constant(4, 2, 4.0)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((value_iteration(p, 200).u - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ValueFunctionFit, ExactFeaturesRecoverValue) {
    const MarkovChain c = chain(mixing2(), vec({1.0, 3.0}), 0.7);
    const auto model = fit_value_function(c, Matrix::Identity(2, 2), 0.0);
    const Vector u = model.coefficients().col(0);
    EXPECT_LT((u - evaluate_reward_sum(c)).cwiseAbs().maxCoeff(), 1e-10);
}

namespace {

// Q(x, a) = (a - 1)² + const: next state independent of the action.
ContinuousMdp quadratic_action_mdp() {
    ContinuousMdp p;
    p.states = 2;
    p.action_dim = 1;
    p.alpha = 0.5;
    p.cost = [](int, const Vector& a) { return (a(0) - 1.0) * (a(0) - 1.0) + 0.25; };
    p.transition_row = [](int, const Vector&) {
        Eigen::RowVectorXd r(2);
        r << 0.5, 0.5;
        return r;
    };
    return p;
}

}  // namespace

TEST(ActionGradient, ScalarToyReachesMinimizer) {
    const ContinuousMdp p = quadratic_action_mdp();
    const Vector u = vec({1.0, 2.0});
    const Vector a = action_gradient_step(p, Vector::Zero(1), u, 0);
    EXPECT_NEAR(a(0), 1.0, 1e-6);
}

TEST(ActionGradient, StationaryActionUnchanged) {
    const ContinuousMdp p = quadratic_action_mdp();
    EXPECT_EQ(action_gradient_step(p, Vector::Ones(1), vec({1.0, 2.0}), 1)(0), 1.0);
}

TEST(ActionGradient, ActionDependentKernel) {
    // π(x, a) = (σ(a), 1 - σ(a)), f = a²: minimizer balances cost against the
    // cheaper continuation in state 0.
    ContinuousMdp p;
    p.states = 2;
    p.alpha = 0.9;
    p.cost = [](int, const Vector& a) { return a(0) * a(0); };
    p.transition_row = [](int, const Vector& a) {
        const double s = 1.0 / (1.0 + std::exp(-a(0)));
        Eigen::RowVectorXd r(2);
        r << s, 1.0 - s;
        return r;
    };
    const Vector u = vec({0.0, 4.0});
    Vector a = Vector::Zero(1);
    for (int k = 0; k < 50; ++k) a = action_gradient_step(p, a, u, 0);
    EXPECT_LT(action_q_gradient(p, u, 0, a).norm(), 1e-5);
    // The central-difference gradient agrees with the analytic one.
    const double s = 1.0 / (1.0 + std::exp(-a(0)));
    const double analytic = 2.0 * a(0) + p.alpha * s * (1.0 - s) * (u(0) - u(1));
    EXPECT_NEAR(action_q_gradient(p, u, 0, a)(0), analytic, 1e-6);
    const auto sweep = action_gradient_sweep(p, {Vector::Zero(1), Vector::Zero(1)}, u, 10.0, 2);
    EXPECT_EQ(sweep[0], action_gradient_step(p, Vector::Zero(1), u, 0));
}
