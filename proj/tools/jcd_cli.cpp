// Command-line driver for the two-stage joint channel estimation and data
// recovery simulator: Monte-Carlo sweeps, theoretical MSE prediction, and a
// timing benchmark.
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "jcd/harness.hpp"
#include "jcd/replica.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::string& out_path, int workers,
            long long seed, const std::string& methods, bool timings) {
    auto cfg = jcd::harness::parse_config_file(config_path);
    if (workers >= 0) cfg.workers = workers;
    if (seed >= 0) cfg.base.seed = static_cast<std::uint64_t>(seed);
    if (timings) cfg.record_timings = true;
    if (!methods.empty()) {
        cfg.methods.clear();
        std::stringstream ss(methods);
        std::string m;
        while (std::getline(ss, m, ',')) cfg.methods.push_back(m);
    }
    const auto records = jcd::harness::run_sweep(cfg);
    jcd::harness::write_csv(out_path, records);
    int failed = 0;
    for (const auto& r : records) failed += r.failed;
    std::cout << "wrote " << records.size() << " rows to " << out_path;
    if (failed) std::cout << " (" << failed << " failed trials)";
    std::cout << '\n';
    return failed ? 2 : 0;
}

int cmd_replica(const std::string& config_path, const std::string& out_path) {
    auto cfg = jcd::harness::parse_config_file(config_path);
    const auto& sc = cfg.base;
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw jcd::ConfigError("cannot open output file: " + out_path);
    out << "snr_db,mse_h,mse_xd,nmse_h,nmse_xd,prop1_mse_h,prop1_mse_xd,converged,iterations\n";
    for (double snr : cfg.snr_list) {
        jcd::Scenario s = sc;
        s.snr_db = snr;
        jcd::replica::ReplicaParams rp;
        rp.alpha = double(s.antennas) / s.users;
        rp.beta_d = double(s.data_symbols) / s.users;
        rp.beta_p = double(s.pilot_symbols) / s.users;
        rp.n_users = s.users;
        rp.sigma_n2 = s.noise_variance();
        rp.sigma_x2 = s.sigma_x2;
        rp.lambda = double(s.max_paths()) / s.antennas;
        rp.sigma_h2 = s.antennas;
        const auto sol = jcd::replica::solve_fixed_point(rp);
        double p1_h = std::nan(""), p1_x = std::nan("");
        try {
            std::tie(p1_x, p1_h) = jcd::replica::proposition1_approx(rp);
        } catch (const jcd::NonPhysical&) {
            // approximation has no physical solution at this operating point
        }
        using jcd::harness::format_g9;
        out << format_g9(snr) << ',' << format_g9(sol.mse_h) << ',' << format_g9(sol.mse_xd)
            << ',' << format_g9(std::sqrt(sol.mse_h / rp.c_h())) << ','
            << format_g9(std::sqrt(sol.mse_xd / rp.c_x())) << ',' << format_g9(p1_h) << ','
            << format_g9(p1_x) << ',' << (sol.converged ? "1" : "0") << ',' << sol.iterations
            << '\n';
    }
    std::cout << "wrote predictions for " << cfg.snr_list.size() << " SNR points to " << out_path
              << '\n';
    return 0;
}

int cmd_bench(const std::string& config_path, int workers) {
    auto cfg = jcd::harness::parse_config_file(config_path);
    if (workers >= 0) cfg.workers = workers;
    cfg.record_timings = true;
    const auto records = jcd::harness::run_sweep(cfg);
    const auto report = jcd::harness::timing_report(records);
    std::cout << "method            median_ms   trials\n";
    for (const auto& row : report)
        std::printf("%-16s %10.3f %8d\n", row.method.c_str(), row.median_ms, row.count);

    const auto& s = cfg.base;
    const auto counts = jcd::replica::complexity_counts(
        s.antennas, s.users, s.data_symbols,
        (s.window_halfwidth2 + 1) * std::min(s.tracked_paths, s.max_paths()));
    std::cout << "\nper-iteration multiply counts (full method vs one reduced subproblem):\n"
              << "  full:    " << counts.mults_orig << " mults, " << counts.adds_orig << " adds\n"
              << "  reduced: " << counts.mults_jcd << " mults, " << counts.adds_jcd << " adds\n"
              << "  analytic ratio: "
              << double(counts.mults_orig) / double(counts.mults_jcd * s.users) << "x over "
              << s.users << " single-user subproblems\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"mmWave massive-MIMO joint channel estimation and data recovery simulator"};
    app.require_subcommand(1);

    std::string config_path, out_path, methods;
    int workers = -1;
    long long seed = -1;
    bool timings = false;

    auto* run = app.add_subcommand("run", "Monte-Carlo sweep to CSV");
    run->add_option("--config", config_path, "key = value config file")->required();
    run->add_option("--out", out_path, "output CSV path")->required();
    run->add_option("--workers", workers, "worker threads (0 = hardware concurrency)");
    run->add_option("--seed", seed, "override master seed");
    run->add_option("--methods", methods, "comma-separated method list");
    run->add_flag("--timings", timings, "record wall-clock columns (breaks byte-identity)");

    auto* replica = app.add_subcommand("replica", "theoretical MSE predictions to CSV");
    replica->add_option("--config", config_path, "key = value config file")->required();
    replica->add_option("--out", out_path, "output CSV path")->required();

    auto* bench = app.add_subcommand("bench", "timing report for the configured sweep");
    bench->add_option("--config", config_path, "key = value config file")->required();
    bench->add_option("--workers", workers, "worker threads (0 = hardware concurrency)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand(run)) return cmd_run(config_path, out_path, workers, seed, methods, timings);
        if (app.got_subcommand(replica)) return cmd_replica(config_path, out_path);
        if (app.got_subcommand(bench)) return cmd_bench(config_path, workers);
    } catch (const jcd::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
