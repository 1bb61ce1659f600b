// ctrl-iter: runs experiment configs and prints convergence certificates.
//
// Exit codes: 0 ran (converged or diverged), 1 usage/config error,
// 2 certificate fails (certify only), 3 numerical abort.

#include "ctrliter/config.hpp"
#include "ctrliter/errors.hpp"
#include "ctrliter/experiments.hpp"
#include "ctrliter/parallel.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kCertificateFail = 2;
constexpr int kNumericalAbort = 3;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fixed-point solvers for discounted control problems"};
    app.require_subcommand(1);
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    app.add_option("--seed", seed, "Override the config seed")->expected(1);
    app.add_option("--out", out_dir, "Output directory (overrides the config 'out' key)");

    std::string run_path;
    auto* run = app.add_subcommand("run", "Run an experiment config");
    run->add_option("config", run_path, "Config file")->required();
    run->fallthrough();

    std::string certify_path;
    auto* certify = app.add_subcommand("certify", "Print the convergence certificate of a config");
    certify->add_option("config", certify_path, "Config file")->required();
    certify->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    ctrliter::RunContext ctx;
    ctx.seed = seed;
    ctx.workers = ctrliter::default_worker_count();

    try {
        if (*certify) {
            const auto cfg = ctrliter::Config::load(certify_path);
            const auto cert = ctrliter::experiment_certificate(cfg, ctx);
            ctrliter::print_certificate(std::cout, cert);
            return cert.passes() ? kOk : kCertificateFail;
        }
        const auto cfg = ctrliter::Config::load(run_path);
        const auto result = ctrliter::run_experiment(cfg, ctx);
        const std::string dir = !out_dir.empty() ? out_dir : cfg.get_string("out", "out");
        ctrliter::write_outputs(dir, result);
        std::cout << "wrote " << dir << "/trace.csv and " << dir << "/summary.txt\n";
        if (result.numerical_abort) {
            std::cerr << "ctrl-iter: a run stopped on a singular step; see summary.txt\n";
            return kNumericalAbort;
        }
        return kOk;
    } catch (const ctrliter::InputError& e) {
        std::cerr << "ctrl-iter: " << e.what() << '\n';
        return kUsage;
    } catch (const ctrliter::PreconditionError& e) {
        std::cerr << "ctrl-iter: " << e.what() << '\n';
        return kUsage;
    } catch (const ctrliter::StepError& e) {
        std::cerr << "ctrl-iter: numerical abort: " << e.what() << '\n';
        return kNumericalAbort;
    } catch (const ctrliter::DivergenceError& e) {
        std::cerr << "ctrl-iter: numerical abort: " << e.what() << '\n';
        return kNumericalAbort;
    } catch (const std::exception& e) {
        std::cerr << "ctrl-iter: internal error: " << e.what() << '\n';
        return kNumericalAbort;
    }
}
