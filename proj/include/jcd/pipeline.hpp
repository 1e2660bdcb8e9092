#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <chrono>
#include <future>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "jcd/bigamp.hpp"
#include "jcd/channel.hpp"
#include "jcd/coarse.hpp"
#include "jcd/errors.hpp"
#include "jcd/scenario.hpp"

namespace jcd::pipeline {

using Eigen::MatrixXcd;

/// What the receiver actually sees: the angular-domain observation (pilot phase
/// in the leading K_p columns), the known pilot symbols, and the noise level.
struct Observation {
    MatrixXcd y;          // M x K, angular domain
    MatrixXcd x_p;        // N x K_p
    double sigma_n2 = 0;

    int k_pilot() const { return static_cast<int>(x_p.cols()); }
    MatrixXcd pilot_phase() const { return y.leftCols(x_p.cols()); }
};

struct StageTimings {
    double stage1_ms = 0;
    double stage2_ms = 0;
    double total_ms = 0;
};

struct JcdResult {
    MatrixXcd h_hat_part;   // M x N, zero outside the retained angular rows
    MatrixXcd x_d_hat;      // N x K_d
    coarse::DecouplingPlan plan;
    std::vector<bigamp::Estimate> per_group;
    StageTimings timings;
};

namespace detail {

inline double ms_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
}

inline bigamp::Options solver_options(const Scenario& sc, double damping = bigamp::kDefaultDamping) {
    return {sc.stop_tol, sc.max_iters, damping};
}

inline bigamp::Estimate solve_subproblem(const MatrixXcd& y, const MatrixXcd& x_p,
                                         double sigma_n2, const Scenario& sc,
                                         std::uint64_t seed_tag, double damping) {
    bigamp::Priors priors;
    priors.sigma_x2 = sc.sigma_x2;
    priors.sigma_n2 = sigma_n2;
    priors.k_pilot = static_cast<int>(x_p.cols());
    priors.pilot_values = x_p;
    Rng rng(derive_seed(sc.seed, 0x50697065ULL, seed_tag));
    return bigamp::run(y, priors, solver_options(sc, damping), rng);
}

} // namespace detail

/// Stage 1: LS estimate on the pilot phase, NP-threshold denoising, top-path
/// tracking, window construction and BFS multi-user decoupling.
inline coarse::DecouplingPlan plan_from_pilots(const Observation& obs, const Scenario& sc) {
    const MatrixXcd h_ls = coarse::ls_estimate(obs.pilot_phase(), obs.x_p);
    const double eta =
        coarse::np_threshold(obs.sigma_n2, sc.epsilon_fa, obs.k_pilot(), sc.sigma_x2);
    const auto profile = coarse::denoise(h_ls, eta);
    const auto q = coarse::track_paths(profile.h_tilde, sc.tracked_paths);
    const auto windows = coarse::build_windows(q, sc.window_halfwidth2, sc.antennas);
    auto plan = coarse::decouple(windows);
    if (plan.total_retained_rows() == 0)
        throw EmptyPlan("Stage 1 tracked no angular windows");
    return plan;
}

/// Stage 2 with a given plan: per-group reduced EM-BiGAMP, solved concurrently,
/// merged deterministically by group id.
inline JcdResult run_with_plan(const Observation& obs, const Scenario& sc,
                               const coarse::DecouplingPlan& plan, int workers = 0,
                               double damping = bigamp::kDefaultDamping) {
    const auto t0 = std::chrono::steady_clock::now();
    const int n_groups = static_cast<int>(plan.groups.size());
    if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
    if (workers < 1) workers = 1;

    std::vector<bigamp::Estimate> results(n_groups);
    std::vector<std::string> failures(n_groups);

    auto solve_group = [&](int g) {
        const auto& users = plan.groups[g];
        const auto& rows = plan.group_rows[g];
        MatrixXcd y_g = coarse::decompose(obs.y, rows);
        MatrixXcd x_p_g(users.size(), obs.x_p.cols());
        for (std::size_t u = 0; u < users.size(); ++u)
            x_p_g.row(u) = obs.x_p.row(users[u]);
        try {
            results[g] = detail::solve_subproblem(y_g, x_p_g, obs.sigma_n2, sc, g, damping);
        } catch (const std::exception& e) {
            failures[g] = "group " + std::to_string(g) + ": " + e.what();
        }
    };

    if (workers == 1 || n_groups == 1) {
        for (int g = 0; g < n_groups; ++g) solve_group(g);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < std::min(workers, n_groups); ++w)
            pool.emplace_back([&] {
                for (int g = next.fetch_add(1); g < n_groups; g = next.fetch_add(1))
                    solve_group(g);
            });
        for (auto& th : pool) th.join();
    }
    for (const auto& f : failures)
        if (!f.empty()) throw std::runtime_error("stage 2 solver failed: " + f);

    JcdResult out;
    out.plan = plan;
    out.per_group = std::move(results);
    const int k_d = static_cast<int>(obs.y.cols()) - obs.k_pilot();
    out.h_hat_part = MatrixXcd::Zero(sc.antennas, sc.users);
    out.x_d_hat = MatrixXcd::Zero(sc.users, k_d);
    for (int g = 0; g < n_groups; ++g) {
        const auto& users = plan.groups[g];
        const auto& rows = plan.group_rows[g];
        const auto& est = out.per_group[g];
        for (std::size_t u = 0; u < users.size(); ++u) {
            for (std::size_t r = 0; r < rows.size(); ++r)
                out.h_hat_part(rows[r], users[u]) = est.h_hat(r, u);
            out.x_d_hat.row(users[u]) = est.x_d_hat.row(u);
        }
    }
    out.timings.stage2_ms = detail::ms_since(t0);
    out.timings.total_ms = out.timings.stage2_ms;
    return out;
}

/// The full two-stage PF-assisted method.
inline JcdResult run_pf_assisted_jcd(const Observation& obs, const Scenario& sc,
                                     int workers = 0, double damping = bigamp::kDefaultDamping) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto plan = plan_from_pilots(obs, sc);
    const double stage1_ms = detail::ms_since(t0);
    JcdResult out = run_with_plan(obs, sc, plan, workers, damping);
    out.timings.stage1_ms = stage1_ms;
    out.timings.total_ms = detail::ms_since(t0);
    return out;
}

/// Full-size EM-BiGAMP on the complete angular observation (the DF-based baseline).
inline bigamp::Estimate run_original_df(const Observation& obs, const Scenario& sc,
                                        double damping = bigamp::kDefaultDamping) {
    std::vector<int> all_rows(obs.y.rows());
    std::iota(all_rows.begin(), all_rows.end(), 0);
    MatrixXcd y = coarse::decompose(obs.y, all_rows);   // same code path as a group solve
    return detail::solve_subproblem(y, obs.x_p, obs.sigma_n2, sc, 0, damping);
}

/// Pilots-only LS estimate of H.
inline MatrixXcd run_ls_baseline(const Observation& obs) {
    return coarse::ls_estimate(obs.pilot_phase(), obs.x_p);
}

/// Pilots-only GAMP: every column pilot-masked, so the x-update branch is never
/// taken and the solver reduces to linear AMP estimating H alone.
inline bigamp::Estimate run_pilot_amp_baseline(const Observation& obs, const Scenario& sc,
                                               double damping = bigamp::kDefaultDamping) {
    return detail::solve_subproblem(obs.pilot_phase(), obs.x_p, obs.sigma_n2, sc, 0, damping);
}

} // namespace jcd::pipeline
