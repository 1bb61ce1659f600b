// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "ctrliter/deep_pmp.hpp"
#include "ctrliter/lambda_solver.hpp"
#include "ctrliter/lqr.hpp"
#include "ctrliter/mdp.hpp"
#include "ctrliter/numerics.hpp"
#include "ctrliter/sgd_control.hpp"
#include "ctrliter/splitting.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace ctrliter;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kScalarTol = 1e-10;
constexpr std::size_t kScalarMaxIter = 60;
constexpr double kCertTol = 1e-12;
constexpr double kFig2Diff = 1e-6;
constexpr std::size_t kFig1Iter = 30;
constexpr double kRateSlack = 0.05;
constexpr double kLambdaRel = 1e-4;
constexpr double kConeSlack = 1e-6;
constexpr double kRatioLo = 3.0, kRatioHi = 5.0;
constexpr double kMdpTol = 1e-8;
constexpr double kContractionSlack = 1e-12;
constexpr double kPmpCostTol = 1e-6;
constexpr double kPmpThetaTol = 1e-3;
constexpr double kAdjointRel = 1e-4;
constexpr double kOuSe = 4.0;

// Runtime budgets in seconds.
constexpr double kScalarBudget = 1e-3;
constexpr double kFig2Budget = 5.0;
constexpr double kLambdaBudget = 30.0;
constexpr double kSplitBudget = 10.0;
constexpr double kMdpBudget = 1.0;
constexpr double kPmpBudget = 5.0;
constexpr double kSgdBudget = 20.0;

struct Outcome {
    bool ok = true;
    std::ostringstream detail;

    void require(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            detail << " [failed: " << what << "]";
        }
    }
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

LqProblem scalar_problem() {
    LqProblem p;
    p.A = Matrix::Zero(1, 1);
    p.B = p.N = p.M = Matrix::Identity(1, 1);
    p.alpha = 3.0;
    return p;
}

Outcome scalar_riccati() {
    Outcome o;
    const LqProblem p = scalar_problem();
    RiccatiOptions opts;
    opts.tol = kScalarTol;
    // Best of a few runs so a cold cache does not decide the timing.
    double best = std::numeric_limits<double>::infinity();
    RiccatiSolution sol;
    for (int rep = 0; rep < 5; ++rep) {
        const Stopwatch sw;
        sol = solve_riccati(p, Matrix::Zero(1, 1), opts);
        best = std::min(best, sw.seconds());
    }
    const double exact = (std::sqrt(13.0) - 3.0) / 2.0;
    const double err = std::abs(sol.P(0, 0) - exact);
    const double res = riccati_residual(p, sol.P);
    o.detail << "P=" << sol.P(0, 0) << " err=" << err << " iters=" << sol.trace.iterations << " residual=" << res
             << " time=" << best * 1e3 << "ms";
    o.require(sol.trace.converged, "converged");
    o.require(err < kScalarTol, "error");
    o.require(sol.trace.iterations <= kScalarMaxIter, "iterations");
    o.require(res < kScalarTol, "residual");
    o.require(best < kScalarBudget, "runtime");
    return o;
}

Outcome certificate_constants() {
    Outcome o;
    const auto c = compute_certificate(scalar_problem());
    const double root = (3.0 - std::sqrt(5.0)) / 2.0;
    const double quad_varpi = c.varpi * c.varpi * c.bnb_norm - (c.alpha - 2 * c.gamma) * c.varpi + c.m_bound;
    const double quad_nu = c.nu * c.nu * c.bnb_norm - (c.alpha - 2 * c.gamma) * c.nu + c.m_bound;
    o.detail << "beta=" << c.beta << " varpi=" << c.varpi << " nu=" << c.nu << " quadratic=" << quad_varpi;
    o.require(c.passes(), "passes");
    o.require(std::abs(c.beta - 2.25) < kCertTol, "beta");
    o.require(std::abs(c.varpi - root) < kCertTol, "varpi");
    o.require(std::abs(c.nu - root) < kCertTol, "nu");
    o.require(std::abs(quad_varpi) < kCertTol && std::abs(quad_nu) < kCertTol, "quadratic");
    return o;
}

// 10-dim state, 30-dim control, seed 7, four P⁰ samples seeded 8..11.
constexpr int kStateDim = 10, kControlDim = 30;
constexpr std::uint64_t kFigSeed = 7;

Outcome figure2() {
    Outcome o;
    const Stopwatch sw;
    LqProblem p = random_lq_problem(kStateDim, kControlDim, 1.0, kFigSeed);
    p.alpha = 2.0 * compute_certificate(p).alpha_threshold();
    const auto c = compute_certificate(p);
    o.require(c.passes(), "certificate");
    RiccatiOptions opts;
    opts.tol = 1e-10;
    opts.min_iter = 16;
    double worst = 0.0;
    for (std::uint64_t i = 0; i < 4; ++i) {
        const Matrix p0 = random_matrix_with_norm(kStateDim, c.varpi, kFigSeed + 1 + i);
        o.require(spectral_norm(p0) <= c.varpi * (1 + 1e-12), "P0 in cone");
        const auto sol = solve_riccati(p, p0, opts);
        o.require(sol.trace.converged, "converged");
        if (sol.trace.distances.size() < 16) {
            o.require(false, "trace reaches k=15");
            continue;
        }
        worst = std::max(worst, sol.trace.distances[15]);
    }
    const double t = sw.seconds();
    o.detail << "alpha=" << p.alpha << " max|P16-P15|=" << worst << " time=" << t << "s";
    o.require(worst < kFig2Diff, "difference at k=15");
    o.require(t < kFig2Budget, "runtime");
    return o;
}

Outcome figure1() {
    Outcome o;
    LqProblem p = random_lq_problem(kStateDim, kControlDim, 1.0, kFigSeed);
    p.alpha = 1.0;
    RiccatiOptions opts;
    opts.max_iter = kFig1Iter;
    int diverged = 0;
    double smallest_last = std::numeric_limits<double>::infinity();
    for (std::uint64_t i = 0; i < 4; ++i) {
        const Matrix p0 = random_matrix_with_norm(kStateDim, 0.1, kFigSeed + 1 + i);
        const auto sol = solve_riccati(p, p0, opts);
        if (sol.trace.diverged && !sol.trace.converged && sol.trace.iterations <= kFig1Iter) ++diverged;
        smallest_last = std::min(smallest_last, sol.trace.last());
    }
    o.detail << "diverged=" << diverged << "/4 smallest final distance=" << smallest_last;
    o.require(diverged == 4, "all diverged");
    return o;
}

Outcome contraction_rate() {
    Outcome o;
    double worst_margin = -std::numeric_limits<double>::infinity();
    for (std::uint64_t seed = 200; seed < 220; ++seed) {
        LqProblem p = random_lq_problem(6, 8, 1.0, seed);
        p.alpha = 1.5 * compute_certificate(p).alpha_threshold();
        const auto c = compute_certificate(p);
        o.require(c.passes(), "certificate");
        RiccatiOptions opts;
        opts.tol = 1e-13;
        const auto sol = solve_riccati(p, random_matrix_with_norm(6, c.varpi, seed), opts);
        const auto& d = sol.trace.distances;
        if (!sol.trace.converged || d.size() < 4) {
            o.require(false, "seed " + std::to_string(seed) + " converged");
            continue;
        }
        const std::size_t k = d.size() - 3;
        worst_margin = std::max(worst_margin, d[k + 1] / d[k] - c.contraction_rate());
    }
    o.detail << "max(observed - bound)=" << worst_margin << " over 20 seeds";
    o.require(worst_margin <= kRateSlack, "rate");
    return o;
}

Outcome lambda_cross_validation() {
    Outcome o;
    const Stopwatch sw;
    LqProblem lq;
    lq.A = random_matrix_with_norm(2, 0.2, 3);
    lq.B = lq.N = lq.M = Matrix::Identity(2, 2);
    lq.alpha = 4.0;
    RiccatiOptions ropts;
    ropts.tol = 1e-13;
    const Matrix P = solve_riccati(lq, Matrix::Zero(2, 2), ropts).P;
    const Matrix Ps = 0.5 * (P + P.transpose());
    const NonlinearProblem p = from_lq(lq);
    const auto pts = tensor_grid(2, 11, -1.0, 1.0);  // 121 collocation points
    const auto sol = lambda_fixed_point(p, GradientField::zero(pts, 2), {});
    o.require(sol.trace.converged, "converged");
    double worst = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Vector exact = Ps * pts[i];
        if (exact.norm() == 0.0) {
            o.require(sol.lambda.value(i).norm() < 1e-12, "origin");
            continue;
        }
        worst = std::max(worst, (sol.lambda.value(i) - exact).norm() / exact.norm());
    }
    const auto cert = p.certificate();
    const auto samples = halton_points(2, 1000, -1.0, 1.0);
    double cone = -std::numeric_limits<double>::infinity();
    for (const auto& x : samples) cone = std::max(cone, gamma_map(p, sol.lambda, x).norm() - cert.varpi * x.norm());
    const double t = sw.seconds();
    o.detail << "points=" << pts.size() << " max rel err=" << worst << " max(|Γ(x)|-ϖ|x|)=" << cone << " time=" << t
             << "s";
    o.require(pts.size() >= 100, "point count");
    o.require(worst < kLambdaRel, "agreement");
    o.require(cone <= kConeSlack, "cone");
    o.require(t < kLambdaBudget, "runtime");
    return o;
}

Vector vec(std::initializer_list<double> v) {
    Vector g(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double c : v) g(i++) = c;
    return g;
}

struct Manufactured {
    std::function<double(const Vector&)> value;
    std::function<Vector(const Vector&)> gradient;
};

TransportProblem manufactured(const Manufactured& m, const Vector& g, double alpha, int nodes) {
    TransportProblem p;
    p.dim = static_cast<int>(g.size());
    p.alpha = alpha;
    p.drift = [g](const Vector&) { return g; };
    p.source = [m, g, alpha](const Vector& x) {
        return Vector::Constant(1, alpha * m.value(x) - m.gradient(x).dot(g));
    };
    p.axes.assign(p.dim, GridAxis{0.0, 1.0, nodes});
    p.inflow_value = [m](const Vector& x) { return Vector::Constant(1, m.value(x)); };
    return p;
}

double interior_error(const TransportProblem& p, const Manufactured& m, int margin, bool& converged) {
    const SplittingSolver solver(p);
    const auto res = solver.solve(solver.zero_iterate(), 1e-13, 5000, 1);
    converged = converged && res.trace.converged;
    double err = 0.0;
    for (Eigen::Index i = 0; i < solver.node_count(); ++i) {
        if (!solver.is_interior(i, margin)) continue;
        err = std::max(err, std::abs(res.iterate.values(i, 0) - m.value(solver.node(i))));
    }
    return err;
}

Outcome splitting() {
    Outcome o;
    const Manufactured sin1 = {[](const Vector& x) { return std::sin(2.0 * x(0)); },
                               [](const Vector& x) { return Vector::Constant(1, 2.0 * std::cos(2.0 * x(0))); }};
    const Manufactured sin2 = {[](const Vector& x) { return std::sin(x(0)) + std::cos(x(1)); },
                               [](const Vector& x) { return vec({std::cos(x(0)), -std::sin(x(1))}); }};
    const Manufactured sin3 = {
        [](const Vector& x) { return std::sin(x(0)) + std::sin(x(1) + 0.5) + std::sin(x(2) + 1.0); },
        [](const Vector& x) { return vec({std::cos(x(0)), std::cos(x(1) + 0.5), std::cos(x(2) + 1.0)}); }};
    struct Case {
        const Manufactured* m;
        Vector g;
        double alpha;
        int coarse, fine, margin;
    };
    const Case cases[] = {{&sin1, vec({-1.0}), 2.0, 21, 41, 0},
                          {&sin2, vec({-1.0, -1.0}), 40.0, 21, 41, 3},
                          {&sin3, vec({-1.0, -2.0, -1.0}), 60.0, 9, 17, 3}};
    for (const Case& c : cases) {
        const Stopwatch sw;
        bool converged = true;
        const double e1 = interior_error(manufactured(*c.m, c.g, c.alpha, c.coarse), *c.m, c.margin, converged);
        const double e2 = interior_error(manufactured(*c.m, c.g, c.alpha, c.fine), *c.m, 2 * c.margin, converged);
        const double ratio = e1 / e2;
        const double t = sw.seconds();
        const std::string d = std::to_string(c.g.size());
        o.detail << " d=" << d << " ratio=" << ratio << " (" << t << "s)";
        o.require(converged, "d=" + d + " converged");
        o.require(ratio >= kRatioLo && ratio <= kRatioHi, "d=" + d + " ratio");
        o.require(t < kSplitBudget, "d=" + d + " runtime");
    }

    const TransportProblem p = manufactured(sin3, vec({-1.0, 2.0, -1.0}), 60.0, 9);
    const SplittingSolver solver(p);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    SplitIterate lam = solver.zero_iterate();
    for (Eigen::Index i = 0; i < lam.values.rows(); ++i) lam.values(i, 0) = u(rng);
    const auto ra = solver.solve(lam, 1e-12, 200, 1);
    const auto rb = solver.solve(lam, 1e-12, 200, 4);
    const bool identical = ra.iterate.values == rb.iterate.values && ra.trace.distances == rb.trace.distances &&
                           solver.sweep(lam, 1).values == solver.sweep(lam, 8).values;
    o.detail << " workers bit-identical=" << (identical ? "yes" : "no");
    o.require(identical, "bit-identical");
    return o;
}

Vector policy_value(const MdpProblem& p, const Policy& pol) {
    const int s = p.states();
    Matrix phi(s, s);
    Vector f(s);
    for (int x = 0; x < s; ++x) {
        const auto a = static_cast<std::size_t>(pol[static_cast<std::size_t>(x)]);
        phi.row(x) = p.transitions[a].row(x);
        f(x) = p.cost(x, static_cast<int>(a));
    }
    return (Matrix::Identity(s, s) - p.alpha * phi).fullPivLu().solve(f);
}

Vector enumerate_optimum(const MdpProblem& p) {
    const int s = p.states(), a = p.actions();
    std::size_t total = 1;
    for (int i = 0; i < s; ++i) total *= static_cast<std::size_t>(a);
    Vector best = Vector::Constant(s, std::numeric_limits<double>::infinity());
    for (std::size_t code = 0; code < total; ++code) {
        Policy pol(static_cast<std::size_t>(s));
        std::size_t c = code;
        for (int x = 0; x < s; ++x) {
            pol[static_cast<std::size_t>(x)] = static_cast<int>(c % static_cast<std::size_t>(a));
            c /= static_cast<std::size_t>(a);
        }
        best = best.cwiseMin(policy_value(p, pol));
    }
    return best;
}

Outcome mdp_suite() {
    Outcome o;
    const Stopwatch sw;
    const char* const fixtures[] = {"two_state.mdp", "chain3.mdp", "ties3.mdp", "grid4.mdp", "unit_cost.mdp"};
    double worst = 0.0;
    for (const char* name : fixtures) {
        const MdpProblem p = load_mdp(std::string(CTRL_ITER_FIXTURE_DIR) + "/" + name);
        o.require(p.states() <= 4 && p.actions() <= 3, std::string(name) + " size");
        const Vector bf = enumerate_optimum(p);
        const auto vi = value_iteration(p, 2000);
        for (std::size_t k = 1; k < vi.changes.size(); ++k) {
            if (vi.changes[k] > p.alpha * vi.changes[k - 1] + kContractionSlack) {
                o.require(false, std::string(name) + " contraction");
                break;
            }
        }
        Vector prev = Vector::Zero(p.states());
        for (std::size_t k = 1; k <= 30; ++k) {
            const Vector u = value_iteration(p, k).u;
            if (!((u - prev).array() >= 0.0).all()) {
                o.require(false, std::string(name) + " monotone");
                break;
            }
            prev = u;
        }
        const auto pi = policy_iteration(p, greedy_cost_policy(p));
        const auto qi = q_iteration(p, 100000, 1e-12);
        o.require(qi.trace.converged, std::string(name) + " q converged");
        const Vector qu = qi.q.rowwise().minCoeff();
        for (const Vector* u : {&vi.u, &pi.u, &qu}) worst = std::max(worst, (*u - bf).cwiseAbs().maxCoeff());
    }
    const MdpProblem unit = load_mdp(std::string(CTRL_ITER_FIXTURE_DIR) + "/unit_cost.mdp");
    const Vector expected = Vector::Constant(unit.states(), 1.0 / (1.0 - unit.alpha));
    const double unit_err = (policy_iteration(unit, greedy_cost_policy(unit)).u - expected).cwiseAbs().maxCoeff();
    // Transition rows such as (0.3, 0.7) are not exact in binary; allow 4 ulps.
    const double ulps = 4.0 * std::numeric_limits<double>::epsilon() * expected(0);
    const double t = sw.seconds();
    o.detail << "max err vs enumeration=" << worst << " unit-cost err=" << unit_err << " time=" << t << "s";
    o.require(worst < kMdpTol, "agreement");
    o.require(unit_err <= ulps, "unit cost");
    o.require(t < kMdpBudget, "runtime");
    return o;
}

Outcome pmp() {
    Outcome o;
    const Stopwatch sw;
    ContinuousNet toy;
    toy.dynamics = std::make_shared<ControlDynamics>(1);
    toy.horizon = 1.0;
    toy.steps = 10;
    TrainingSet data;
    data.inputs = {Vector::Zero(1)};
    data.targets = {1.0};
    data.regularization = 1.0;
    TrainOptions opts;
    opts.msa.workers = 1;
    const auto r = train(toy, ControlPath::constant(10, Vector::Zero(1)), data, opts);
    double theta_err = 0.0;
    for (const Vector& th : r.theta.theta) theta_err = std::max(theta_err, std::abs(th(0) - 0.5));
    const double cost_err = std::abs(r.costs.back() - 0.5);

    ContinuousNet net;
    net.dynamics = std::make_shared<LayerDynamics>(3, Activation::tanh);
    net.horizon = 1.0;
    net.steps = 20;
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0.0, 0.5);
    ControlPath theta;
    for (int k = 0; k < net.steps; ++k) {
        Vector th(net.dynamics->param_dim());
        for (Eigen::Index i = 0; i < th.size(); ++i) th(i) = n(rng);
        theta.theta.push_back(th);
    }
    TrainingSet d;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int m = 0; m < 4; ++m) {
        d.inputs.push_back(vec({u(rng), u(rng), u(rng)}));
        d.targets.push_back(u(rng));
    }
    d.regularization = 0.0;
    const auto xs = forward_states(net, theta, d, 1);
    const auto ps = backward_adjoints(net, theta, d, xs, 1);
    const auto grad = hamiltonian_gradient(net, theta, d, xs, ps);
    double worst = 0.0;
    for (std::size_t k = 0; k < grad.size(); ++k) {
        Vector fd(grad[k].size());
        for (Eigen::Index i = 0; i < fd.size(); ++i) {
            const double eps = 1e-5;
            ControlPath up = theta, down = theta;
            up.theta[k](i) += eps;
            down.theta[k](i) -= eps;
            fd(i) = (training_cost(net, up, d, 1) - training_cost(net, down, d, 1)) / (2 * eps);
        }
        worst = std::max(worst, (grad[k] - fd).norm() / fd.norm());
    }
    const double t = sw.seconds();
    o.detail << "J=" << r.costs.back() << " max|θ-0.5|=" << theta_err << " adjoint rel err=" << worst
             << " time=" << t << "s";
    o.require(cost_err < kPmpCostTol, "cost");
    o.require(theta_err < kPmpThetaTol, "theta");
    o.require(worst < kAdjointRel, "adjoint");
    o.require(t < kPmpBudget, "runtime");
    return o;
}

Outcome sgd() {
    Outcome o;
    const Stopwatch sw;
    const double eta = 0.5, s = 1.3, T = 1.0;
    const auto obj = StochasticObjective::quadratic(Vector::Zero(1), Matrix::Identity(1, 1));
    DiffusionSpec spec;
    spec.eta = eta;
    spec.horizon = T;
    spec.step = 1e-3;
    spec.replicas = 10000;
    spec.seed = 2024;
    spec.sigma = Matrix::Constant(1, 1, s);
    const auto v = variance_objective(diffusion_simulate(obj, Vector::Constant(1, 1.0), spec).stats);
    const double oracle = eta * eta * s * s * (1.0 - std::exp(-2.0 * T)) / 2.0;
    const double z = std::abs(v.value - oracle) / v.standard_error;

    const std::size_t S = 20000;
    const double band = 4.0 * std::sqrt(2.0 / static_cast<double>(S));
    double sigma_err = 0.0;
    for (double x : {-2.0, 0.0, 1.5}) {
        sigma_err = std::max(sigma_err, std::abs(noise_covariance(obj, Vector::Constant(1, x), S, 9).sigma_squared(0, 0) - 1.0));
    }
    const double t = sw.seconds();
    o.detail << "variance=" << v.value << " oracle=" << oracle << " |z|=" << z << " max|Σ-1|=" << sigma_err
             << " (band " << band << ") time=" << t << "s";
    o.require(z <= kOuSe, "OU variance");
    o.require(sigma_err <= band, "Σ estimator");
    o.require(t < kSgdBudget, "runtime");
    return o;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome cli_determinism() {
    Outcome o;
    const char* const names[] = {"riccati_small", "riccati_sweep", "riccati_diverge", "mdp_two_state",
                                 "transport_1d",  "lambda_scalar", "pmp_toy",         "sgd_small"};
    const fs::path scratch = fs::temp_directory_path() / "ctrl_iter_acceptance";
    int matched = 0;
    for (const char* name : names) {
        const std::string golden = std::string(CTRL_ITER_GOLDEN_DIR) + "/" + name;
        bool same = true;
        for (const char* run : {"a", "b"}) {
            const fs::path out = scratch / name / run;
            fs::remove_all(out);
            const std::string cmd = "\"" CTRL_ITER_BINARY "\" --out \"" + out.string() + "\" run \"" + golden +
                                    ".cfg\" > /dev/null 2>&1";
            const int status = std::system(cmd.c_str());
            same = same && WIFEXITED(status) && WEXITSTATUS(status) == 0;
            for (const char* file : {"trace.csv", "summary.txt"}) {
                const std::string got = slurp(out / file);
                same = same && !got.empty() && got == slurp(fs::path(golden) / file);
            }
        }
        if (same) ++matched;
        o.require(same, name);
    }
    o.detail << matched << "/" << std::size(names) << " configs byte-identical across two runs";
    return o;
}

}  // namespace

int main() {
    const std::pair<const char*, std::function<Outcome()>> criteria[] = {
        {"scalar-riccati-oracle", scalar_riccati},
        {"certificate-constants", certificate_constants},
        {"figure2-convergence", figure2},
        {"figure1-divergence", figure1},
        {"contraction-rate", contraction_rate},
        {"lambda-lq-cross-validation", lambda_cross_validation},
        {"splitting-second-order", splitting},
        {"mdp-suite", mdp_suite},
        {"pmp-toy-and-adjoint", pmp},
        {"sgd-diffusion", sgd},
        {"cli-determinism", cli_determinism},
    };
    int failures = 0;
    for (const auto& [name, check] : criteria) {
        Outcome r;
        try {
            r = check();
        } catch (const std::exception& e) {
            r.ok = false;
            r.detail << " exception: " << e.what();
        }
        if (!r.ok) ++failures;
        std::printf("%s %s: %s\n", r.ok ? "PASS" : "FAIL", name, r.detail.str().c_str());
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failures, std::size(criteria));
    return failures == 0 ? 0 : 1;
}
