#include "ctrliter/experiments.hpp"

#include "ctrliter/deep_pmp.hpp"
#include "ctrliter/errors.hpp"
#include "ctrliter/lambda_solver.hpp"
#include "ctrliter/mdp.hpp"
#include "ctrliter/numerics.hpp"
#include "ctrliter/parallel.hpp"
#include "ctrliter/sgd_control.hpp"
#include "ctrliter/splitting.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>

namespace ctrliter {

namespace {

using Summary = std::vector<std::pair<std::string, std::string>>;

const std::set<std::string> kCommonKeys = {"kind", "seed", "out"};

std::set<std::string> with_common(std::set<std::string> keys) {
    keys.insert(kCommonKeys.begin(), kCommonKeys.end());
    return keys;
}

std::string flag(bool b) { return b ? "true" : "false"; }

std::string join_numbers(const std::vector<double>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ",";
        out += format_number(xs[i]);
    }
    return out;
}

std::string join_policy(const Policy& p) {
    std::string out;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(p[i]);
    }
    return out;
}

std::uint64_t seed_of(const Config& cfg, const RunContext& ctx) {
    return ctx.seed ? *ctx.seed : cfg.get_u64("seed", 0);
}

std::size_t positive_count(const Config& cfg, const std::string& key, long fallback) {
    const long v = cfg.get_int(key, fallback);
    if (v < 1) throw ConfigError(cfg.source(), cfg.line_of(key), key, "must be at least 1");
    return static_cast<std::size_t>(v);
}

double positive_double(const Config& cfg, const std::string& key, double fallback) {
    const double v = cfg.get_double(key, fallback);
    if (!(v > 0.0)) throw ConfigError(cfg.source(), cfg.line_of(key), key, "must be positive");
    return v;
}

double positive_double(const Config& cfg, const std::string& key) {
    if (!cfg.has(key)) throw ConfigError(cfg.source(), 0, key, "required key is missing");
    return positive_double(cfg, key, 0.0);
}

void add_trace(std::vector<TraceRow>& rows, const std::string& run, const std::vector<double>& distances) {
    for (std::size_t k = 0; k < distances.size(); ++k) rows.push_back({run, k, distances[k], std::nullopt});
}

void add_certificate(Summary& s, const std::string& prefix, const ConvergenceCertificate& c) {
    s.emplace_back(prefix + "alpha", format_number(c.alpha));
    s.emplace_back(prefix + "gamma", format_number(c.gamma));
    s.emplace_back(prefix + "b", format_number(c.b));
    s.emplace_back(prefix + "m_bound", format_number(c.m_bound));
    s.emplace_back(prefix + "bnb_norm", format_number(c.bnb_norm));
    s.emplace_back(prefix + "alpha_threshold", format_number(c.alpha_threshold()));
    s.emplace_back(prefix + "beta", format_number(c.beta));
    s.emplace_back(prefix + "varpi", format_number(c.varpi));
    s.emplace_back(prefix + "nu", format_number(c.nu));
    s.emplace_back(prefix + "alpha_ok", flag(c.alpha_ok));
    s.emplace_back(prefix + "b_ok", flag(c.b_ok));
    s.emplace_back(prefix + "contraction_rate", format_number(c.passes() ? c.contraction_rate() : NAN));
}

// ---------------------------------------------------------------- riccati

const std::set<std::string> kRiccatiKeys = with_common(
    {"problem", "state_dim", "control_dim", "alpha", "alpha_factor", "alpha_list", "alpha_factor_list", "samples",
     "p0_scale", "p0_norm", "tol", "max_iter", "min_iter", "report_every", "report_until", "timing", "a", "b", "n", "m"});

LqProblem riccati_problem(const Config& cfg, std::uint64_t seed) {
    const std::string kind = cfg.get_string("problem", "random");
    if (kind == "random") {
        const long m = cfg.get_int("state_dim", 10);
        const long n = cfg.get_int("control_dim", 30);
        if (m < 1) throw ConfigError(cfg.source(), cfg.line_of("state_dim"), "state_dim", "must be at least 1");
        if (n < 1) throw ConfigError(cfg.source(), cfg.line_of("control_dim"), "control_dim", "must be at least 1");
        return random_lq_problem(static_cast<int>(m), static_cast<int>(n), 1.0, seed);
    }
    if (kind == "scalar") {
        LqProblem p;
        p.A = Matrix::Constant(1, 1, cfg.get_double("a", 0.0));
        p.B = Matrix::Constant(1, 1, cfg.get_double("b", 1.0));
        p.N = Matrix::Constant(1, 1, cfg.get_double("n", 1.0));
        p.M = Matrix::Constant(1, 1, cfg.get_double("m", 1.0));
        p.alpha = 1.0;
        try {
            p.validate();
        } catch (const InputError& e) {
            throw ConfigError(cfg.source(), cfg.line_of("problem"), "problem", e.what());
        }
        return p;
    }
    throw ConfigError(cfg.source(), cfg.line_of("problem"), "problem", "expected random or scalar, got '" + kind + "'");
}

// Discount factors requested by the config, as (alpha, is_sweep).
std::pair<std::vector<double>, bool> riccati_alphas(const Config& cfg, const LqProblem& base) {
    const std::vector<std::string> keys = {"alpha", "alpha_factor", "alpha_list", "alpha_factor_list"};
    std::string chosen;
    for (const auto& k : keys) {
        if (!cfg.has(k)) continue;
        if (!chosen.empty()) {
            throw ConfigError(cfg.source(), cfg.line_of(k), k, "conflicts with '" + chosen + "'");
        }
        chosen = k;
    }
    if (chosen.empty()) {
        throw ConfigError(cfg.source(), 0, "alpha", "one of alpha, alpha_factor, alpha_list, alpha_factor_list is required");
    }
    LqProblem probe = base;
    const double threshold = compute_certificate(probe).alpha_threshold();
    std::vector<double> values;
    const bool sweep = chosen == "alpha_list" || chosen == "alpha_factor_list";
    if (sweep) {
        values = cfg.get_list(chosen);
    } else {
        values = {cfg.get_double(chosen)};
    }
    if (chosen == "alpha_factor" || chosen == "alpha_factor_list") {
        for (double& v : values) v *= threshold;
    }
    for (double v : values) {
        if (!(v > 0.0)) throw ConfigError(cfg.source(), cfg.line_of(chosen), chosen, "alpha must be positive");
    }
    return {values, sweep};
}

struct RiccatiRun {
    RiccatiSolution sol;
    std::vector<double> ms;
    double residual = 0.0;
};

ExperimentResult run_riccati(const Config& cfg, const RunContext& ctx) {
    cfg.check_keys(kRiccatiKeys);
    const std::uint64_t seed = seed_of(cfg, ctx);
    const LqProblem base = riccati_problem(cfg, seed);
    const auto [alphas, sweep] = riccati_alphas(cfg, base);
    const std::size_t samples = positive_count(cfg, "samples", 4);
    const double p0_scale = cfg.get_double("p0_scale", 1.0);
    const double p0_fallback = cfg.get_double("p0_norm", 0.1);
    if (p0_scale < 0.0) throw ConfigError(cfg.source(), cfg.line_of("p0_scale"), "p0_scale", "must be non-negative");
    if (p0_fallback < 0.0) throw ConfigError(cfg.source(), cfg.line_of("p0_norm"), "p0_norm", "must be non-negative");
    RiccatiOptions opts;
    opts.tol = positive_double(cfg, "tol", 1e-10);
    opts.max_iter = positive_count(cfg, "max_iter", 10000);
    opts.min_iter = cfg.has("min_iter") ? positive_count(cfg, "min_iter", 1) : 0;
    const std::size_t every = positive_count(cfg, "report_every", 5);
    const std::size_t until = static_cast<std::size_t>(cfg.get_int("report_until", 25));
    const bool timing = cfg.get_bool("timing", false);

    ExperimentResult out;
    out.kind = "riccati";
    Summary& s = out.summary;
    s.emplace_back("kind", "riccati");
    s.emplace_back("problem", cfg.get_string("problem", "random"));
    s.emplace_back("state_dim", std::to_string(base.state_dim()));
    s.emplace_back("control_dim", std::to_string(base.control_dim()));
    s.emplace_back("seed", std::to_string(seed));
    s.emplace_back("samples", std::to_string(samples));
    s.emplace_back("tol", format_number(opts.tol));
    s.emplace_back("max_iter", std::to_string(opts.max_iter));

    std::vector<std::size_t> iterations_per_alpha;
    bool all_converged = true;
    bool any_diverged = false;
    for (double alpha : alphas) {
        LqProblem p = base;
        p.alpha = alpha;
        const ConvergenceCertificate cert = compute_certificate(p);
        const double p0_norm = cert.passes() ? p0_scale * cert.varpi : p0_fallback;
        const std::string tag = sweep ? "alpha=" + format_number(alpha) : "";
        const std::string prefix = sweep ? tag + "." : "";
        add_certificate(s, prefix, cert);
        s.emplace_back(prefix + "p0_norm", format_number(p0_norm));

        std::vector<RiccatiRun> runs(samples);
        parallel_for(
            samples,
            [&](std::size_t i) {
                const Matrix p0 = random_matrix_with_norm(p.state_dim(), p0_norm, seed + 1 + i);
                RiccatiOptions o = opts;
                const auto start = std::chrono::steady_clock::now();
                if (timing) {
                    o.on_iteration = [&runs, i, start](std::size_t, double) {
                        const auto now = std::chrono::steady_clock::now();
                        runs[i].ms.push_back(std::chrono::duration<double, std::milli>(now - start).count());
                    };
                }
                runs[i].sol = solve_riccati(p, p0, o);
                runs[i].residual = riccati_residual(p, runs[i].sol.P);
            },
            ctx.workers);

        std::vector<TraceRow> alpha_rows;
        std::size_t max_iterations = 0;
        bool alpha_converged = true;
        for (std::size_t i = 0; i < samples; ++i) {
            const RiccatiRun& r = runs[i];
            const IterationTrace& t = r.sol.trace;
            const std::string run = (sweep ? tag + "/" : std::string()) + "p0=" + std::to_string(i);
            for (std::size_t k = 0; k < t.distances.size(); ++k) {
                TraceRow row{run, k, t.distances[k], std::nullopt};
                if (timing && k < r.ms.size()) row.ms = r.ms[k];
                alpha_rows.push_back(row);
            }
            const std::string rp = prefix + "run." + std::to_string(i) + ".";
            s.emplace_back(rp + "converged", flag(t.converged));
            s.emplace_back(rp + "diverged", flag(t.diverged));
            s.emplace_back(rp + "blew_up", flag(t.blew_up));
            s.emplace_back(rp + "aborted", flag(t.aborted));
            s.emplace_back(rp + "iterations", std::to_string(t.iterations));
            s.emplace_back(rp + "converged_at", std::to_string(t.first_below()));
            s.emplace_back(rp + "final_distance", format_number(t.last()));
            s.emplace_back(rp + "residual", format_number(r.residual));
            for (std::size_t k = every; k <= until; k += every) {
                s.emplace_back(rp + "distance_k" + std::to_string(k),
                               k < t.distances.size() ? format_number(t.distances[k]) : "na");
            }
            alpha_converged = alpha_converged && t.converged;
            any_diverged = any_diverged || t.diverged;
            if (t.aborted) out.numerical_abort = true;
            max_iterations = std::max(max_iterations, t.first_below());
        }
        if (sweep) s.emplace_back(prefix + "all_converged", flag(alpha_converged));
        all_converged = all_converged && alpha_converged;
        iterations_per_alpha.push_back(alpha_converged ? max_iterations : opts.max_iter + 1);
        if (sweep) out.extra_traces["trace_alpha_" + format_number(alpha) + ".csv"] = alpha_rows;
        out.trace.insert(out.trace.end(), alpha_rows.begin(), alpha_rows.end());
    }
    s.emplace_back("all_converged", flag(all_converged));
    s.emplace_back("any_diverged", flag(any_diverged));
    if (sweep) {
        // Iterations to tolerance should not increase with α.
        std::vector<std::size_t> order(alphas.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return alphas[a] < alphas[b]; });
        bool monotone = true;
        for (std::size_t i = 1; i < order.size(); ++i) {
            if (iterations_per_alpha[order[i]] > iterations_per_alpha[order[i - 1]]) monotone = false;
        }
        std::vector<double> iters;
        for (std::size_t idx : order) iters.push_back(static_cast<double>(iterations_per_alpha[idx]));
        s.emplace_back("sweep.iterations", join_numbers(iters));
        s.emplace_back("sweep.monotone_iterations", flag(monotone));
    }
    return out;
}

// ---------------------------------------------------------------- lambda

const std::set<std::string> kLambdaKeys = with_common(
    {"problem", "alpha", "a", "a_norm", "dim", "tanh_scale", "grid", "box", "tol", "max_iter", "ode_step"});

NonlinearProblem lambda_problem(const Config& cfg, std::uint64_t seed, std::optional<LqProblem>& lq) {
    const std::string kind = cfg.get_string("problem", "lq");
    const double alpha = positive_double(cfg, "alpha");
    if (kind == "lq_scalar" || kind == "lq") {
        LqProblem p;
        if (kind == "lq_scalar") {
            p.A = Matrix::Constant(1, 1, cfg.get_double("a", 0.0));
            p.B = p.N = p.M = Matrix::Identity(1, 1);
        } else {
            const long dim = cfg.get_int("dim", 2);
            if (dim < 1) throw ConfigError(cfg.source(), cfg.line_of("dim"), "dim", "must be at least 1");
            const int n = static_cast<int>(dim);
            p.A = random_matrix_with_norm(n, cfg.get_double("a_norm", 0.2), seed);
            p.B = p.N = p.M = Matrix::Identity(n, n);
        }
        p.alpha = alpha;
        lq = p;
        return from_lq(p);
    }
    if (kind == "tanh") {
        // A(x) = -c·tanh(x) componentwise, F(x) = ½|x|², B = N = I.
        const long dim = cfg.get_int("dim", 2);
        if (dim < 1) throw ConfigError(cfg.source(), cfg.line_of("dim"), "dim", "must be at least 1");
        const int n = static_cast<int>(dim);
        const double c = cfg.get_double("tanh_scale", 0.2);
        NonlinearProblem p;
        p.drift = [c](const Vector& x) -> Vector { return -c * x.array().tanh().matrix(); };
        p.drift_jacobian = [c](const Vector& x) -> Matrix {
            const Vector t = x.array().tanh();
            return (-c * (1.0 - t.array().square())).matrix().asDiagonal();
        };
        p.cost_gradient = [](const Vector& x) -> Vector { return x; };
        p.cost = [](const Vector& x) { return 0.5 * x.squaredNorm(); };
        p.B = p.N = Matrix::Identity(n, n);
        p.gamma = std::abs(c);
        p.b_modulus = 2.0 * std::abs(c);  // sup of |Δsech²|(1+|x₁|+|x₂|)/|Δx| is about 1.954
        p.m_bound = 1.0;
        p.alpha = alpha;
        return p;
    }
    throw ConfigError(cfg.source(), cfg.line_of("problem"), "problem",
                      "expected lq_scalar, lq or tanh, got '" + kind + "'");
}

ExperimentResult run_lambda(const Config& cfg, const RunContext& ctx) {
    cfg.check_keys(kLambdaKeys);
    const std::uint64_t seed = seed_of(cfg, ctx);
    std::optional<LqProblem> lq;
    const NonlinearProblem p = lambda_problem(cfg, seed, lq);
    const ConvergenceCertificate cert = p.certificate();
    if (!cert.passes()) {
        throw ConfigError(cfg.source(), cfg.line_of("alpha"), "alpha",
                          "certificate fails (threshold " + format_number(cert.alpha_threshold()) + ")");
    }
    const int per_axis = static_cast<int>(positive_count(cfg, "grid", 10));
    const double box = positive_double(cfg, "box", 1.0);
    LambdaOptions opts;
    opts.tol = positive_double(cfg, "tol", 1e-8);
    opts.max_iter = positive_count(cfg, "max_iter", 200);
    opts.gamma.ode_step = positive_double(cfg, "ode_step", 0.01);
    opts.workers = ctx.workers;
    const auto points = tensor_grid(p.state_dim(), per_axis, -box, box);
    const LambdaSolution sol = lambda_fixed_point(p, GradientField::zero(points, p.state_dim()), opts);

    ExperimentResult out;
    out.kind = "lambda";
    add_trace(out.trace, "lambda", sol.trace.distances);
    Summary& s = out.summary;
    s.emplace_back("kind", "lambda");
    s.emplace_back("problem", cfg.get_string("problem", "lq"));
    s.emplace_back("state_dim", std::to_string(p.state_dim()));
    s.emplace_back("seed", std::to_string(seed));
    s.emplace_back("points", std::to_string(points.size()));
    add_certificate(s, "", cert);
    s.emplace_back("converged", flag(sol.trace.converged));
    s.emplace_back("diverged", flag(sol.trace.diverged));
    s.emplace_back("iterations", std::to_string(sol.trace.iterations));
    s.emplace_back("final_distance", format_number(sol.trace.last()));
    s.emplace_back("residual", format_number(lambda_residual(p, sol.lambda, points)));
    double cone = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double r = points[i].norm();
        if (r > 0.0) cone = std::max(cone, sol.lambda.value(i).norm() / r);
    }
    s.emplace_back("max_lambda_ratio", format_number(cone));
    if (lq) {
        RiccatiOptions ro;
        ro.tol = 1e-13;
        ro.max_iter = 100000;
        const RiccatiSolution rs = solve_riccati(*lq, Matrix::Zero(lq->state_dim(), lq->state_dim()), ro);
        double worst = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const Vector exact = 0.5 * (rs.P + rs.P.transpose()) * points[i];
            if (exact.norm() == 0.0) continue;
            worst = std::max(worst, (sol.lambda.value(i) - exact).norm() / exact.norm());
        }
        s.emplace_back("riccati_converged", flag(rs.trace.converged));
        s.emplace_back("lq_relative_error", format_number(worst));
    }
    return out;
}

// ---------------------------------------------------------------- transport

const std::set<std::string> kTransportKeys =
    with_common({"dim", "alpha", "grid", "lo", "hi", "drift", "inflow", "tol", "max_sweeps"});

ExperimentResult run_transport(const Config& cfg, const RunContext& ctx) {
    cfg.check_keys(kTransportKeys);
    const long dim_raw = cfg.get_int("dim", 2);
    if (dim_raw < 1) throw ConfigError(cfg.source(), cfg.line_of("dim"), "dim", "must be at least 1");
    const int dim = static_cast<int>(dim_raw);
    const double alpha = positive_double(cfg, "alpha");
    const int grid = static_cast<int>(positive_count(cfg, "grid", 21));
    if (grid < 3) throw ConfigError(cfg.source(), cfg.line_of("grid"), "grid", "need at least 3 nodes per axis");
    const double lo = cfg.get_double("lo", 0.0);
    const double hi = cfg.get_double("hi", 1.0);
    if (!(hi > lo)) throw ConfigError(cfg.source(), cfg.line_of("hi"), "hi", "must exceed lo");
    std::vector<double> drift_list = cfg.has("drift") ? cfg.get_list("drift") : std::vector<double>(dim, 1.0);
    if (static_cast<int>(drift_list.size()) != dim) {
        throw ConfigError(cfg.source(), cfg.line_of("drift"), "drift", "needs one entry per dimension");
    }
    const std::string inflow = cfg.get_string("inflow", "exact");
    if (inflow != "exact" && inflow != "quasi_steady") {
        throw ConfigError(cfg.source(), cfg.line_of("inflow"), "inflow", "expected exact or quasi_steady");
    }
    const double tol = positive_double(cfg, "tol", 1e-12);
    const std::size_t max_sweeps = positive_count(cfg, "max_sweeps", 500);

    // Manufactured solution λ(x) = Σ_l sin(x_l + 0.5l) under constant drift.
    const Vector g = Eigen::Map<const Vector>(drift_list.data(), dim);
    const VectorField exact = [](const Vector& x) {
        double v = 0.0;
        for (Eigen::Index l = 0; l < x.size(); ++l) v += std::sin(x(l) + 0.5 * static_cast<double>(l));
        return Vector::Constant(1, v);
    };
    TransportProblem tp;
    tp.dim = dim;
    tp.components = 1;
    tp.alpha = alpha;
    tp.drift = [g](const Vector&) { return g; };
    tp.source = [alpha, g, exact](const Vector& x) {
        double dlam_g = 0.0;
        for (Eigen::Index l = 0; l < x.size(); ++l) dlam_g += std::cos(x(l) + 0.5 * static_cast<double>(l)) * g(l);
        return Vector::Constant(1, alpha * exact(x)(0) - dlam_g);
    };
    tp.axes.assign(dim, GridAxis{lo, hi, grid});
    if (inflow == "exact") tp.inflow_value = exact;

    const SplittingSolver solver(tp);
    const auto result = solver.solve(solver.zero_iterate(), tol, max_sweeps, ctx.workers);
    double err = 0.0;
    for (Eigen::Index i = 0; i < solver.node_count(); ++i) {
        if (!solver.is_interior(i)) continue;
        err = std::max(err, std::abs(result.iterate.values(i, 0) - exact(solver.node(i))(0)));
    }

    ExperimentResult out;
    out.kind = "transport";
    add_trace(out.trace, "sweep", result.trace.distances);
    Summary& s = out.summary;
    s.emplace_back("kind", "transport");
    s.emplace_back("dim", std::to_string(dim));
    s.emplace_back("alpha", format_number(alpha));
    s.emplace_back("grid", std::to_string(grid));
    s.emplace_back("step", format_number(tp.axes[0].step()));
    s.emplace_back("inflow", inflow);
    s.emplace_back("converged", flag(result.trace.converged));
    s.emplace_back("diverged", flag(result.trace.diverged));
    s.emplace_back("sweeps", std::to_string(result.trace.iterations));
    s.emplace_back("final_distance", format_number(result.trace.last()));
    s.emplace_back("interior_max_error", format_number(err));
    s.emplace_back("residual", format_number(solver.residual(result.iterate)));
    return out;
}

// ---------------------------------------------------------------- mdp

const std::set<std::string> kMdpKeys = with_common({"file", "max_iter", "tol"});

ExperimentResult run_mdp(const Config& cfg, const RunContext&) {
    cfg.check_keys(kMdpKeys);
    std::filesystem::path file = cfg.get_string("file");
    if (file.is_relative()) file = std::filesystem::path(cfg.base_dir()) / file;
    MdpProblem p;
    try {
        p = load_mdp(file.string());
    } catch (const InputError& e) {
        throw ConfigError(cfg.source(), cfg.line_of("file"), "file", e.what());
    }
    const std::size_t max_iter = positive_count(cfg, "max_iter", 1000);
    const double tol = positive_double(cfg, "tol", 1e-12);

    // Value iteration until the sup change drops below tol.
    Vector u = Vector::Zero(p.states());
    std::vector<double> vi_changes;
    Policy vi_policy;
    for (std::size_t k = 0; k < max_iter; ++k) {
        Vector next = bellman_backup(p, u, &vi_policy);
        vi_changes.push_back((next - u).cwiseAbs().maxCoeff());
        u = std::move(next);
        if (vi_changes.back() < tol) break;
    }
    const PolicyIterationResult pi = policy_iteration(p, greedy_cost_policy(p), max_iter);
    const QIterationResult qi = q_iteration(p, max_iter, tol);
    const Vector q_u = qi.q.rowwise().minCoeff();

    ExperimentResult out;
    out.kind = "mdp";
    add_trace(out.trace, "value", vi_changes);
    add_trace(out.trace, "policy", pi.trace.distances);
    add_trace(out.trace, "q", qi.trace.distances);
    Summary& s = out.summary;
    s.emplace_back("kind", "mdp");
    s.emplace_back("file", file.filename().string());
    s.emplace_back("states", std::to_string(p.states()));
    s.emplace_back("actions", std::to_string(p.actions()));
    s.emplace_back("alpha", format_number(p.alpha));
    const auto vec = [](const Vector& v) { return join_numbers(std::vector<double>(v.data(), v.data() + v.size())); };
    s.emplace_back("value.converged", flag(!vi_changes.empty() && vi_changes.back() < tol));
    s.emplace_back("value.iterations", std::to_string(vi_changes.size()));
    s.emplace_back("value.u", vec(u));
    s.emplace_back("value.policy", join_policy(vi_policy));
    s.emplace_back("policy.converged", flag(pi.trace.converged));
    s.emplace_back("policy.iterations", std::to_string(pi.trace.iterations));
    s.emplace_back("policy.u", vec(pi.u));
    s.emplace_back("policy.policy", join_policy(pi.policy));
    s.emplace_back("q.converged", flag(qi.trace.converged));
    s.emplace_back("q.iterations", std::to_string(qi.trace.iterations));
    s.emplace_back("q.u", vec(q_u));
    s.emplace_back("q.policy", join_policy(qi.policy));
    const double gap = std::max((u - pi.u).cwiseAbs().maxCoeff(), (q_u - pi.u).cwiseAbs().maxCoeff());
    s.emplace_back("max_disagreement", format_number(gap));
    return out;
}

// ---------------------------------------------------------------- pmp

const std::set<std::string> kPmpKeys = with_common({"problem", "dim", "samples", "data", "horizon", "steps", "method",
                                                    "epochs", "learning_rate", "mode", "regularization", "weighting", "tol"});

ExperimentResult run_pmp(const Config& cfg, const RunContext& ctx) {
    cfg.check_keys(kPmpKeys);
    const std::uint64_t seed = seed_of(cfg, ctx);
    const std::string kind = cfg.get_string("problem", "toy");
    ContinuousNet net;
    TrainingSet data;
    net.horizon = positive_double(cfg, "horizon", 1.0);
    net.steps = static_cast<int>(positive_count(cfg, "steps", 10));
    const std::string method = cfg.get_string("method", "rk4");
    if (method == "rk4") {
        net.method = OdeMethod::rk4;
    } else if (method == "euler") {
        net.method = OdeMethod::euler;
    } else {
        throw ConfigError(cfg.source(), cfg.line_of("method"), "method", "expected rk4 or euler");
    }
    ControlPath theta0;
    if (kind == "toy") {
        // dX/dt = θ from x = 0 to the target y = 1 with cost ∫θ².
        net.dynamics = std::make_shared<ControlDynamics>(1);
        data.inputs = {Vector::Zero(1)};
        data.targets = {1.0};
        data.regularization = cfg.get_double("regularization", 1.0);
        theta0 = ControlPath::constant(net.steps, Vector::Zero(1));
    } else if (kind == "layer") {
        const long dim = cfg.get_int("dim", 3);
        if (dim < 1) throw ConfigError(cfg.source(), cfg.line_of("dim"), "dim", "must be at least 1");
        net.dynamics = std::make_shared<LayerDynamics>(static_cast<int>(dim));
        if (cfg.has("data")) {
            std::filesystem::path file = cfg.get_string("data");
            if (file.is_relative()) file = std::filesystem::path(cfg.base_dir()) / file;
            try {
                data = load_training_set(file.string());
            } catch (const InputError& e) {
                throw ConfigError(cfg.source(), cfg.line_of("data"), "data", e.what());
            }
            for (const auto& x : data.inputs) {
                if (x.size() != dim) throw ConfigError(cfg.source(), cfg.line_of("data"), "data", "input width differs from dim");
            }
        } else {
            // Seeded synthetic regression target y = sin(x₀) + ½x₁.
            const std::size_t count = positive_count(cfg, "samples", 16);
            std::mt19937_64 rng(seed);
            for (std::size_t i = 0; i < count; ++i) {
                Vector x(dim);
                for (long j = 0; j < dim; ++j) x(j) = -1.0 + 2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53;
                data.inputs.push_back(x);
                data.targets.push_back(std::sin(x(0)) + (dim > 1 ? 0.5 * x(1) : 0.0));
            }
        }
        data.regularization = cfg.get_double("regularization", 1e-3);
        const std::string weighting = cfg.get_string("weighting", "sum");
        if (weighting == "mean") {
            data.sample_weight = 1.0 / static_cast<double>(data.size());
        } else if (weighting != "sum") {
            throw ConfigError(cfg.source(), cfg.line_of("weighting"), "weighting", "expected sum or mean");
        }
        std::mt19937_64 rng(seed + 1);
        const int pd = net.dynamics->param_dim();
        Vector start(pd);
        for (int j = 0; j < pd; ++j) start(j) = 0.1 * standard_normal(rng);
        theta0 = ControlPath::constant(net.steps, start);
    } else {
        throw ConfigError(cfg.source(), cfg.line_of("problem"), "problem", "expected toy or layer");
    }
    if (data.regularization < 0.0) {
        throw ConfigError(cfg.source(), cfg.line_of("regularization"), "regularization", "must be non-negative");
    }
    TrainOptions opts;
    opts.epochs = positive_count(cfg, "epochs", 1000);
    opts.tol = positive_double(cfg, "tol", 1e-12);
    opts.msa.learning_rate = positive_double(cfg, "learning_rate", 0.1);
    opts.msa.workers = ctx.workers;
    const std::string mode = cfg.get_string("mode", "damped");
    if (mode == "damped") {
        opts.msa.mode = MsaMode::damped;
    } else if (mode == "full_argmin") {
        opts.msa.mode = MsaMode::full_argmin;
    } else {
        throw ConfigError(cfg.source(), cfg.line_of("mode"), "mode", "expected damped or full_argmin");
    }
    const TrainResult r = train(net, theta0, data, opts);

    ExperimentResult out;
    out.kind = "pmp";
    add_trace(out.trace, "cost", r.costs);
    Summary& s = out.summary;
    s.emplace_back("kind", "pmp");
    s.emplace_back("problem", kind);
    s.emplace_back("seed", std::to_string(seed));
    s.emplace_back("samples", std::to_string(data.size()));
    s.emplace_back("sample_weight", format_number(data.sample_weight));
    s.emplace_back("steps", std::to_string(net.steps));
    s.emplace_back("method", method);
    s.emplace_back("mode", mode);
    s.emplace_back("converged", flag(r.converged));
    s.emplace_back("stagnated", flag(r.stagnated));
    s.emplace_back("epochs", std::to_string(r.costs.empty() ? 0 : r.costs.size() - 1));
    s.emplace_back("rejected", std::to_string(r.rejected));
    s.emplace_back("initial_cost", format_number(r.costs.empty() ? NAN : r.costs.front()));
    s.emplace_back("final_cost", format_number(r.costs.empty() ? NAN : r.costs.back()));
    if (kind == "toy") {
        double mean = 0.0;
        for (const auto& t : r.theta.theta) mean += t(0);
        s.emplace_back("mean_theta", format_number(mean / static_cast<double>(r.theta.steps())));
    }
    return out;
}

// ---------------------------------------------------------------- sgd

const std::set<std::string> kSgdKeys = with_common(
    {"eta", "noise", "horizon", "step", "replicas", "x0", "candidates", "sigma", "sigma_samples"});

ExperimentResult run_sgd(const Config& cfg, const RunContext& ctx) {
    cfg.check_keys(kSgdKeys);
    const std::uint64_t seed = seed_of(cfg, ctx);
    const std::vector<double> x0_list = cfg.has("x0") ? cfg.get_list("x0") : std::vector<double>{1.0};
    const auto d = static_cast<Eigen::Index>(x0_list.size());
    const Vector x0 = Eigen::Map<const Vector>(x0_list.data(), d);
    const double noise = positive_double(cfg, "noise", 1.0);
    const StochasticObjective obj = StochasticObjective::quadratic(Vector::Zero(d), noise * Matrix::Identity(d, d));

    DiffusionSpec spec;
    spec.eta = positive_double(cfg, "eta", 0.1);
    spec.horizon = positive_double(cfg, "horizon", 1.0);
    spec.step = positive_double(cfg, "step", 1e-3 * spec.horizon);
    spec.replicas = positive_count(cfg, "replicas", 1000);
    spec.seed = seed;
    spec.workers = ctx.workers;
    spec.sigma_samples = positive_count(cfg, "sigma_samples", 1000);
    const std::string sigma_mode = cfg.get_string("sigma", "fixed");
    if (sigma_mode == "fixed") {
        spec.sigma = Matrix(noise * Matrix::Identity(d, d));
    } else if (sigma_mode != "estimated") {
        throw ConfigError(cfg.source(), cfg.line_of("sigma"), "sigma", "expected fixed or estimated");
    }
    const std::vector<double> candidates = cfg.has("candidates") ? cfg.get_list("candidates") : std::vector<double>{1.0};
    for (double u : candidates) {
        if (!(u > 0.0 && u <= 1.0)) {
            throw ConfigError(cfg.source(), cfg.line_of("candidates"), "candidates", "controls must lie in (0, 1]");
        }
    }
    const ScheduleSearchResult res = schedule_search(obj, x0, candidates, spec);

    ExperimentResult out;
    out.kind = "sgd";
    Summary& s = out.summary;
    s.emplace_back("kind", "sgd");
    s.emplace_back("seed", std::to_string(seed));
    s.emplace_back("dim", std::to_string(d));
    s.emplace_back("eta", format_number(spec.eta));
    s.emplace_back("noise", format_number(noise));
    s.emplace_back("horizon", format_number(spec.horizon));
    s.emplace_back("step", format_number(spec.step_size()));
    s.emplace_back("replicas", std::to_string(spec.replicas));
    s.emplace_back("sigma", sigma_mode);
    for (std::size_t i = 0; i < res.table.size(); ++i) {
        const ScheduleRow& row = res.table[i];
        const double u = row.control;
        out.trace.push_back({"u=" + format_number(u), i, row.variance.value, std::nullopt});
        // Ornstein-Uhlenbeck terminal variance of dX = -uX dt + uησ dB.
        const double ou = static_cast<double>(d) * u * spec.eta * spec.eta * noise * noise *
                          (1.0 - std::exp(-2.0 * u * spec.horizon)) / 2.0;
        const std::string p = "u=" + format_number(u) + ".";
        s.emplace_back(p + "variance", format_number(row.variance.value));
        s.emplace_back(p + "standard_error", format_number(row.variance.standard_error));
        s.emplace_back(p + "ou_prediction", format_number(ou));
    }
    s.emplace_back("best_control", format_number(res.table[res.best].control));
    return out;
}

}  // namespace

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v == 0.0 ? 0.0 : v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

void write_trace(std::ostream& out, const std::vector<TraceRow>& rows) {
    out << "run,iter,distance,ms\n";
    for (const auto& r : rows) {
        out << csv_field(r.run) << ',' << r.iter << ',' << format_number(r.distance) << ',';
        if (r.ms) out << format_number(*r.ms);
        out << '\n';
    }
}

void write_summary(std::ostream& out, const std::vector<std::pair<std::string, std::string>>& summary) {
    for (const auto& [k, v] : summary) out << k << " = " << v << '\n';
}

void write_outputs(const std::string& dir, const ExperimentResult& result) {
    std::filesystem::create_directories(dir);
    const auto path = std::filesystem::path(dir);
    const auto write = [](const std::filesystem::path& p, const auto& fn) {
        std::ofstream f(p, std::ios::binary);
        if (!f) throw InputError("cannot write " + p.string());
        fn(f);
        if (!f) throw InputError("write failed: " + p.string());
    };
    write(path / "trace.csv", [&](std::ostream& o) { write_trace(o, result.trace); });
    write(path / "summary.txt", [&](std::ostream& o) { write_summary(o, result.summary); });
    for (const auto& [name, rows] : result.extra_traces) {
        write(path / name, [&](std::ostream& o) { write_trace(o, rows); });
    }
}

ExperimentResult run_experiment(const Config& cfg, const RunContext& ctx) {
    const std::string kind = cfg.get_string("kind");
    if (kind == "riccati") return run_riccati(cfg, ctx);
    if (kind == "lambda") return run_lambda(cfg, ctx);
    if (kind == "transport") return run_transport(cfg, ctx);
    if (kind == "mdp") return run_mdp(cfg, ctx);
    if (kind == "pmp") return run_pmp(cfg, ctx);
    if (kind == "sgd") return run_sgd(cfg, ctx);
    throw ConfigError(cfg.source(), cfg.line_of("kind"), "kind",
                      "expected riccati, lambda, transport, mdp, pmp or sgd, got '" + kind + "'");
}

ConvergenceCertificate experiment_certificate(const Config& cfg, const RunContext& ctx) {
    const std::string kind = cfg.get_string("kind");
    const std::uint64_t seed = seed_of(cfg, ctx);
    if (kind == "riccati") {
        cfg.check_keys(kRiccatiKeys);
        LqProblem p = riccati_problem(cfg, seed);
        const auto [alphas, sweep] = riccati_alphas(cfg, p);
        if (sweep) {
            throw ConfigError(cfg.source(), 0, "alpha", "certify needs a single alpha or alpha_factor");
        }
        p.alpha = alphas.front();
        return compute_certificate(p);
    }
    if (kind == "lambda") {
        cfg.check_keys(kLambdaKeys);
        std::optional<LqProblem> lq;
        return lambda_problem(cfg, seed, lq).certificate();
    }
    throw ConfigError(cfg.source(), cfg.line_of("kind"), "kind", "certify supports riccati and lambda configs only");
}

void print_certificate(std::ostream& out, const ConvergenceCertificate& c) {
    out << "gamma = " << format_number(c.gamma) << '\n'
        << "b = " << format_number(c.b) << '\n'
        << "m_bound = " << format_number(c.m_bound) << '\n'
        << "bnb_norm = " << format_number(c.bnb_norm) << '\n'
        << "alpha = " << format_number(c.alpha) << '\n'
        << "alpha_threshold = " << format_number(c.alpha_threshold()) << '\n'
        << "beta = " << format_number(c.beta) << '\n'
        << "varpi = " << format_number(c.varpi) << '\n'
        << "nu = " << format_number(c.nu) << '\n'
        << "alpha_ok = " << flag(c.alpha_ok) << '\n'
        << "b_ok = " << flag(c.b_ok) << '\n'
        << "certificate = " << (c.passes() ? "pass" : "fail") << '\n';
}

}  // namespace ctrliter
