#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace jcd {

/// All experiment dimensions and algorithm knobs for one simulation setup.
struct Scenario {
    int antennas = 256;           // M, BS antenna count
    int users = 8;                // N
    int pilot_symbols = 16;       // K_p
    int data_symbols = 84;        // K_d
    std::vector<int> paths;       // L_n, per user
    double snr_db = 10.0;
    double sigma_x2 = 1.0;        // symbol power
    int tracked_paths = 4;        // M_track
    int window_halfwidth2 = 4;    // M_s (full window size is M_s + 1; must be even)
    double epsilon_fa = 1e-5;     // false-alarm probability of the path detector
    double stop_tol = 1e-4;       // delta, relative-residual stop rule
    int max_iters = 200;          // T_max
    std::uint64_t seed = 1;

    int total_symbols() const { return pilot_symbols + data_symbols; }

    int total_paths() const {
        return std::accumulate(paths.begin(), paths.end(), 0);
    }

    int max_paths() const {
        int m = 0;
        for (int l : paths) m = std::max(m, l);
        return m;
    }

    /// Per-element complex noise variance hitting the target SNR in
    /// expectation over channel and symbol draws:
    /// E||HX||^2 = sigma_x2 * K * M * sum_n L_n and ||N||^2 = M * K * sigma_n2.
    double noise_variance() const {
        return sigma_x2 * total_paths() / std::pow(10.0, snr_db / 10.0);
    }

    void validate() const {
        auto fail = [](const std::string& msg) { throw std::invalid_argument("Scenario: " + msg); };
        if (antennas < 1 || users < 1 || pilot_symbols < 1 || data_symbols < 0)
            fail("all counts must be >= 1 (data symbols >= 0)");
        if (static_cast<int>(paths.size()) != users)
            fail("paths must have one entry per user");
        for (int l : paths)
            if (l < 1) fail("every user needs at least one path");
        if (sigma_x2 <= 0) fail("sigma_x2 must be > 0");
        if (pilot_symbols < users) fail("need K_p >= N for row-full-rank pilots");
        if (tracked_paths < max_paths()) fail("M_track must cover the largest L_n");
        if (static_cast<long long>(window_halfwidth2 + 1) * tracked_paths * users > antennas)
            fail("(M_s+1) * M_track * N must not exceed M");
        if (epsilon_fa <= 0 || epsilon_fa >= 1) fail("epsilon_fa must lie in (0,1)");
        if (stop_tol <= 0) fail("stop tolerance must be > 0");
        if (max_iters < 1) fail("T_max must be >= 1");
    }

    static Scenario with_uniform_paths(int antennas, int users, int k_p, int k_d,
                                       int paths_per_user) {
        Scenario s;
        s.antennas = antennas;
        s.users = users;
        s.pilot_symbols = k_p;
        s.data_symbols = k_d;
        s.paths.assign(users, paths_per_user);
        return s;
    }
};

} // namespace jcd
