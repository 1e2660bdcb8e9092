#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "jcd/channel.hpp"
#include "jcd/errors.hpp"
#include "jcd/pipeline.hpp"
#include "jcd/replica.hpp"
#include "jcd/rng.hpp"
#include "jcd/scenario.hpp"

namespace jcd::harness {

using Eigen::MatrixXcd;

/// Norm-ratio NMSE: ||est - truth|| / ||truth|| (Frobenius, not squared).
inline double nmse(const MatrixXcd& est, const MatrixXcd& truth) {
    if (est.rows() != truth.rows() || est.cols() != truth.cols())
        throw DimensionMismatch("nmse: shape mismatch");
    const double ref = truth.norm();
    if (ref == 0.0) throw ZeroReference("nmse: zero reference norm");
    return (est - truth).norm() / ref;
}

struct TrialRecord {
    std::uint64_t seed = 0;
    std::string method;
    double snr_db = 0;
    int trial = 0;
    std::optional<double> nmse_xd, nmse_h_full, nmse_h_part;
    std::optional<int> iterations;
    std::optional<double> wall_ms_total, wall_ms_stage1, wall_ms_stage2;
    std::optional<int> group_count, retained_rows;
    bool failed = false;
    std::string error;
};

inline const char* kCsvHeader =
    "seed,method,snr_db,trial,nmse_xd,nmse_h_full,nmse_h_part,iterations,"
    "wall_ms_total,wall_ms_stage1,wall_ms_stage2,group_count,retained_rows,status";

inline std::string format_g9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

inline std::string csv_row(const TrialRecord& r) {
    auto opt_d = [](const std::optional<double>& v) { return v ? format_g9(*v) : std::string(); };
    auto opt_i = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string(); };
    std::ostringstream os;
    os << r.seed << ',' << r.method << ',' << format_g9(r.snr_db) << ',' << r.trial << ','
       << opt_d(r.nmse_xd) << ',' << opt_d(r.nmse_h_full) << ',' << opt_d(r.nmse_h_part) << ','
       << opt_i(r.iterations) << ',' << opt_d(r.wall_ms_total) << ',' << opt_d(r.wall_ms_stage1)
       << ',' << opt_d(r.wall_ms_stage2) << ',' << opt_i(r.group_count) << ','
       << opt_i(r.retained_rows) << ',' << (r.failed ? "failed" : "ok");
    return os.str();
}

inline void write_csv(const std::string& path, const std::vector<TrialRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open output file: " + path);
    out << kCsvHeader << '\n';
    for (const auto& r : records) out << csv_row(r) << '\n';
}

struct SweepConfig {
    Scenario base;
    std::vector<double> snr_list;         // overrides base.snr_db per sweep point
    int trials = 50;
    std::vector<std::string> methods = {"ls", "pilot_amp", "original_df", "pf_jcd"};
    int workers = 0;                      // 0 -> hardware concurrency
    bool record_timings = false;          // timings break byte-identical CSV output
    double damping = bigamp::kDefaultDamping;
};

/// Flat key=value config. '#' starts a comment; snr_list/methods/paths are
/// comma-separated. Unknown keys are rejected.
inline SweepConfig parse_config(std::istream& in) {
    SweepConfig cfg;
    cfg.base.paths.clear();
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        if (trim(line).empty()) continue;
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }

    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto b = item.find_first_not_of(" \t");
            const auto e = item.find_last_not_of(" \t");
            if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
        }
        return out;
    };

    int paths_per_user = -1;
    for (const auto& [key, val] : kv) {
        try {
            if (key == "antennas") cfg.base.antennas = std::stoi(val);
            else if (key == "users") cfg.base.users = std::stoi(val);
            else if (key == "pilot_symbols") cfg.base.pilot_symbols = std::stoi(val);
            else if (key == "data_symbols") cfg.base.data_symbols = std::stoi(val);
            else if (key == "paths_per_user") paths_per_user = std::stoi(val);
            else if (key == "paths") {
                for (const auto& p : split(val)) cfg.base.paths.push_back(std::stoi(p));
            }
            else if (key == "sigma_x2") cfg.base.sigma_x2 = std::stod(val);
            else if (key == "tracked_paths") cfg.base.tracked_paths = std::stoi(val);
            else if (key == "window_extent") cfg.base.window_halfwidth2 = std::stoi(val);
            else if (key == "epsilon_fa") cfg.base.epsilon_fa = std::stod(val);
            else if (key == "stop_tol") cfg.base.stop_tol = std::stod(val);
            else if (key == "max_iters") cfg.base.max_iters = std::stoi(val);
            else if (key == "seed") cfg.base.seed = std::stoull(val);
            else if (key == "snr_db") cfg.base.snr_db = std::stod(val);
            else if (key == "snr_list") {
                for (const auto& s : split(val)) cfg.snr_list.push_back(std::stod(s));
            }
            else if (key == "trials") cfg.trials = std::stoi(val);
            else if (key == "methods") cfg.methods = split(val);
            else if (key == "workers") cfg.workers = std::stoi(val);
            else if (key == "timings") cfg.record_timings = (val == "1" || val == "true");
            else if (key == "damping") cfg.damping = std::stod(val);
            else throw ConfigError("unknown config key: " + key);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("config value for '" + key + "' is not parseable: " + val);
        }
    }
    if (paths_per_user > 0 && cfg.base.paths.empty())
        cfg.base.paths.assign(cfg.base.users, paths_per_user);
    if (cfg.base.paths.empty()) cfg.base.paths.assign(cfg.base.users, 3);
    if (cfg.snr_list.empty()) cfg.snr_list.push_back(cfg.base.snr_db);
    if (cfg.trials < 0) throw ConfigError("trials must be >= 0");
    try {
        cfg.base.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

inline SweepConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse_config(in);
}

namespace detail {

/// One generated (snr, trial) cell shared by every method.
struct TrialData {
    Scenario sc;
    channel::ChannelRealization chan;
    MatrixXcd x_d;
    pipeline::Observation obs;
};

inline TrialData make_trial(const Scenario& base, double snr_db, int snr_idx, int trial) {
    TrialData td;
    td.sc = base;
    td.sc.snr_db = snr_db;
    td.sc.seed = derive_seed(base.seed, static_cast<std::uint64_t>(snr_idx),
                             static_cast<std::uint64_t>(trial));
    Rng rng(td.sc.seed);
    td.chan = channel::sample_channel(td.sc, rng);
    auto [x_p, x_d] = channel::sample_frames(td.sc, rng);
    td.x_d = x_d;
    MatrixXcd x(td.sc.users, td.sc.total_symbols());
    x << x_p, x_d;
    td.obs.sigma_n2 = td.sc.noise_variance();
    td.obs.y = channel::observe(td.chan.angular, x, td.obs.sigma_n2, rng);
    td.obs.x_p = x_p;
    return td;
}

inline MatrixXcd restrict_rows(const MatrixXcd& h, const coarse::DecouplingPlan& plan) {
    MatrixXcd out = MatrixXcd::Zero(h.rows(), h.cols());
    for (const auto& rows : plan.group_rows)
        for (int r : rows) out.row(r) = h.row(r);
    return out;
}

inline TrialRecord run_method(const std::string& method, const TrialData& td,
                              const SweepConfig& cfg) {
    TrialRecord rec;
    rec.seed = td.sc.seed;
    rec.method = method;
    rec.snr_db = td.sc.snr_db;
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    };
    const MatrixXcd& h_true = td.chan.angular;

    if (method == "ls") {
        rec.nmse_h_full = nmse(pipeline::run_ls_baseline(td.obs), h_true);
    } else if (method == "pilot_amp") {
        auto est = pipeline::run_pilot_amp_baseline(td.obs, td.sc, cfg.damping);
        rec.nmse_h_full = nmse(est.h_hat, h_true);
        rec.iterations = est.iterations;
    } else if (method == "original_df") {
        auto est = pipeline::run_original_df(td.obs, td.sc, cfg.damping);
        rec.nmse_h_full = nmse(est.h_hat, h_true);
        rec.nmse_xd = nmse(est.x_d_hat, td.x_d);
        rec.iterations = est.iterations;
    } else if (method == "pf_jcd") {
        // groups solved sequentially here; trial-level parallelism is outside
        auto res = pipeline::run_pf_assisted_jcd(td.obs, td.sc, 1, cfg.damping);
        rec.nmse_h_full = nmse(res.h_hat_part, h_true);
        rec.nmse_h_part = nmse(res.h_hat_part, restrict_rows(h_true, res.plan));
        rec.nmse_xd = nmse(res.x_d_hat, td.x_d);
        rec.group_count = static_cast<int>(res.plan.groups.size());
        rec.retained_rows = res.plan.total_retained_rows();
        int iters = 0;
        for (const auto& g : res.per_group) iters = std::max(iters, g.iterations);
        rec.iterations = iters;
        if (cfg.record_timings) {
            rec.wall_ms_stage1 = res.timings.stage1_ms;
            rec.wall_ms_stage2 = res.timings.stage2_ms;
        }
    } else if (method == "replica_pred" || method == "prop1_pred") {
        replica::ReplicaParams rp;
        rp.alpha = double(td.sc.antennas) / td.sc.users;
        rp.beta_d = double(td.sc.data_symbols) / td.sc.users;
        rp.beta_p = double(td.sc.pilot_symbols) / td.sc.users;
        rp.n_users = td.sc.users;
        rp.sigma_n2 = td.sc.noise_variance();
        rp.sigma_x2 = td.sc.sigma_x2;
        rp.lambda = double(td.sc.max_paths()) / td.sc.antennas;
        rp.sigma_h2 = td.sc.antennas;
        double mse_xd, mse_h;
        if (method == "replica_pred") {
            auto sol = replica::solve_fixed_point(rp);
            mse_xd = sol.mse_xd;
            mse_h = sol.mse_h;
            rec.iterations = sol.iterations;
        } else {
            std::tie(mse_xd, mse_h) = replica::proposition1_approx(rp);
        }
        rec.nmse_xd = std::sqrt(mse_xd / rp.sigma_x2);
        rec.nmse_h_full = std::sqrt(mse_h / rp.c_h());
    } else {
        throw ConfigError("unknown method: " + method);
    }
    if (cfg.record_timings) rec.wall_ms_total = elapsed();
    return rec;
}

} // namespace detail

/// Runs the Monte-Carlo sweep. Channel, frames and noise are generated once per
/// (snr, trial) cell and shared across methods; cells run concurrently and the
/// row order (method, snr, trial) is independent of the worker count.
inline std::vector<TrialRecord> run_sweep(const SweepConfig& cfg) {
    const int n_snr = static_cast<int>(cfg.snr_list.size());
    const int cells = n_snr * cfg.trials;
    std::vector<std::vector<TrialRecord>> per_cell(cells);

    auto run_cell = [&](int cell) {
        const int snr_idx = cell / cfg.trials;
        const int trial = cell % cfg.trials;
        std::vector<TrialRecord>& out = per_cell[cell];
        try {
            const auto td = detail::make_trial(cfg.base, cfg.snr_list[snr_idx], snr_idx, trial);
            for (const auto& m : cfg.methods) {
                TrialRecord rec;
                try {
                    rec = detail::run_method(m, td, cfg);
                } catch (const std::exception& e) {
                    rec = TrialRecord{};
                    rec.seed = td.sc.seed;
                    rec.method = m;
                    rec.snr_db = td.sc.snr_db;
                    rec.failed = true;
                    rec.error = e.what();
                }
                rec.trial = trial;
                out.push_back(std::move(rec));
            }
        } catch (const std::exception& e) {
            for (const auto& m : cfg.methods) {
                TrialRecord rec;
                rec.method = m;
                rec.snr_db = cfg.snr_list[snr_idx];
                rec.trial = trial;
                rec.failed = true;
                rec.error = e.what();
                out.push_back(std::move(rec));
            }
        }
    };

    int workers = cfg.workers > 0 ? cfg.workers
                                  : static_cast<int>(std::thread::hardware_concurrency());
    if (workers < 1) workers = 1;
    if (workers == 1 || cells <= 1) {
        for (int c = 0; c < cells; ++c) run_cell(c);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < std::min(workers, cells); ++w)
            pool.emplace_back([&] {
                for (int c = next.fetch_add(1); c < cells; c = next.fetch_add(1)) run_cell(c);
            });
        for (auto& th : pool) th.join();
    }

    // deterministic (method, snr, trial) ordering
    std::vector<TrialRecord> records;
    records.reserve(static_cast<std::size_t>(cells) * cfg.methods.size());
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi)
        for (int cell = 0; cell < cells; ++cell)
            records.push_back(per_cell[cell][mi]);
    return records;
}

inline double median(std::vector<double> v) {
    if (v.empty()) return std::nan("");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct TimingSummary {
    std::string method;
    double median_ms = 0;
    int count = 0;
};

/// Median wall-clock per method plus measured and analytic speedup ratios.
/// Rows with no timing data are skipped.
inline std::vector<TimingSummary> timing_report(const std::vector<TrialRecord>& records) {
    std::map<std::string, std::vector<double>> by_method;
    for (const auto& r : records)
        if (!r.failed && r.wall_ms_total) by_method[r.method].push_back(*r.wall_ms_total);
    std::vector<TimingSummary> out;
    for (auto& [m, times] : by_method)
        out.push_back({m, median(times), static_cast<int>(times.size())});
    return out;
}

} // namespace jcd::harness
