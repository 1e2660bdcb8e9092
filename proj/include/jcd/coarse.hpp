#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "jcd/errors.hpp"

namespace jcd::coarse {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;

/// LS channel estimate from the pilot phase: H_ls = Y_p X_p^H (X_p X_p^H)^{-1}.
inline MatrixXcd ls_estimate(const MatrixXcd& y_p, const MatrixXcd& x_p) {
    if (y_p.cols() != x_p.cols())
        throw DimensionMismatch("ls_estimate: Y_p and X_p must share the symbol axis");
    const MatrixXcd gram = x_p * x_p.adjoint();
    Eigen::JacobiSVD<MatrixXcd> svd(gram, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) <= 0 || sv(0) / sv(sv.size() - 1) > 1e12)
        throw SingularPilotGram("pilot Gram condition number exceeds 1e12");
    return y_p * x_p.adjoint() * svd.solve(MatrixXcd::Identity(gram.rows(), gram.cols()));
}

/// Neyman-Pearson path-detection threshold applied to |H_ls|^2. The paper's form:
/// eta = Phi_RD^{-1}(1 - eps) * Var{|N|^2} + E{|N|^2} with the Rayleigh CDF inverse
/// Phi_RD^{-1}(p) = sqrt(-2 ln(1-p)). The effective post-LS noise variance per
/// element with unitary-scaled pilots is sigma_eff2 = sigma_n2 / (K_p sigma_x2),
/// so E{|N|^2} = sigma_eff2 and Var{|N|^2} = sigma_eff2^2.
inline double np_threshold(double sigma_n2, double epsilon_fa, int k_p, double sigma_x2,
                           bool exponential_quantile = false) {
    const double sigma_eff2 = sigma_n2 / (k_p * sigma_x2);
    const double quantile = exponential_quantile
                                ? -std::log(epsilon_fa)                // P(Exp(1) > q) = eps
                                : std::sqrt(-2.0 * std::log(epsilon_fa));
    return exponential_quantile ? quantile * sigma_eff2
                                : quantile * sigma_eff2 * sigma_eff2 + sigma_eff2;
}

struct DenoisedProfile {
    MatrixXcd h_ls;     // M x N
    MatrixXd h_tilde;   // nonnegative denoised power matrix
    double eta_np = 0;
};

/// Spectral subtraction: h_tilde = |h_ls|^2 - eta above threshold, 0 at or below it.
inline DenoisedProfile denoise(const MatrixXcd& h_ls, double eta_np) {
    if (eta_np < 0) throw std::invalid_argument("denoise: threshold must be >= 0");
    DenoisedProfile out;
    out.h_ls = h_ls;
    out.eta_np = eta_np;
    out.h_tilde = (h_ls.array().abs2() > eta_np)
                      .select(h_ls.array().abs2() - eta_np, MatrixXd::Zero(h_ls.rows(), h_ls.cols()))
                      .matrix();
    return out;
}

/// Angular index of the r-th largest denoised value per user column,
/// ties broken toward the lowest index. q[user][rank].
inline std::vector<std::vector<int>> track_paths(const MatrixXd& h_tilde, int m_track) {
    if (m_track < 1) throw std::invalid_argument("track_paths: M_track must be >= 1");
    const int m = static_cast<int>(h_tilde.rows());
    const int n = static_cast<int>(h_tilde.cols());
    std::vector<std::vector<int>> q(n);
    std::vector<int> order(m);
    for (int j = 0; j < n; ++j) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return h_tilde(a, j) > h_tilde(b, j);
        });
        q[j].assign(order.begin(), order.begin() + std::min(m_track, m));
    }
    return q;
}

/// Circular window {q - M_s/2, ..., q + M_s/2} mod M, returned sorted.
inline std::vector<int> build_window(int q, int m_s, int m) {
    if (m_s % 2 != 0) throw InvalidWindow("M_s must be even so q +/- M_s/2 is integral");
    if (m_s + 1 > m) throw InvalidWindow("window size exceeds M");
    std::vector<int> w;
    w.reserve(m_s + 1);
    for (int d = -m_s / 2; d <= m_s / 2; ++d)
        w.push_back(((q + d) % m + m) % m);
    std::sort(w.begin(), w.end());
    return w;
}

/// Windows for every (user, rank) pair. windows[user][rank] is a sorted index set.
inline std::vector<std::vector<std::vector<int>>>
build_windows(const std::vector<std::vector<int>>& q, int m_s, int m) {
    std::vector<std::vector<std::vector<int>>> windows(q.size());
    for (std::size_t j = 0; j < q.size(); ++j)
        for (int idx : q[j])
            windows[j].push_back(build_window(idx, m_s, m));
    return windows;
}

struct DecouplingPlan {
    std::vector<std::vector<std::vector<int>>> windows;  // [user][rank] -> angular indices
    std::vector<std::vector<bool>> graph;                // N x N interference matrix
    std::vector<std::vector<int>> groups;                // user partition, ascending
    std::vector<std::vector<int>> group_rows;            // sorted dedup angular rows per group

    int total_retained_rows() const {
        int r = 0;
        for (const auto& g : group_rows) r += static_cast<int>(g.size());
        return r;
    }
};

/// Interference graph (edge = any overlap between two users' window unions) plus
/// BFS connected components. Groups and members are listed in ascending user order.
inline DecouplingPlan decouple(const std::vector<std::vector<std::vector<int>>>& windows) {
    const int n = static_cast<int>(windows.size());
    DecouplingPlan plan;
    plan.windows = windows;

    std::vector<std::vector<int>> unions(n);
    for (int j = 0; j < n; ++j) {
        for (const auto& w : windows[j])
            unions[j].insert(unions[j].end(), w.begin(), w.end());
        std::sort(unions[j].begin(), unions[j].end());
        unions[j].erase(std::unique(unions[j].begin(), unions[j].end()), unions[j].end());
    }

    auto overlaps = [](const std::vector<int>& a, const std::vector<int>& b) {
        std::size_t i = 0, j = 0;
        while (i < a.size() && j < b.size()) {
            if (a[i] == b[j]) return true;
            (a[i] < b[j]) ? ++i : ++j;
        }
        return false;
    };

    plan.graph.assign(n, std::vector<bool>(n, false));
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
            if (overlaps(unions[a], unions[b]))
                plan.graph[a][b] = plan.graph[b][a] = true;

    std::vector<bool> visited(n, false);
    for (int start = 0; start < n; ++start) {
        if (visited[start]) continue;
        std::vector<int> group;
        std::vector<int> queue{start};
        visited[start] = true;
        for (std::size_t head = 0; head < queue.size(); ++head) {
            int v = queue[head];
            group.push_back(v);
            for (int w = 0; w < n; ++w)
                if (plan.graph[v][w] && !visited[w]) {
                    visited[w] = true;
                    queue.push_back(w);
                }
        }
        std::sort(group.begin(), group.end());
        std::vector<int> rows;
        for (int u : group)
            rows.insert(rows.end(), unions[u].begin(), unions[u].end());
        std::sort(rows.begin(), rows.end());
        rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
        plan.groups.push_back(std::move(group));
        plan.group_rows.push_back(std::move(rows));
    }
    return plan;
}

/// Reduced analog combiner for one group: the selected rows of U^H.
inline MatrixXcd reduced_combiner(const MatrixXcd& u, const std::vector<int>& rows) {
    MatrixXcd f(rows.size(), u.rows());
    const MatrixXcd uh = u.adjoint();
    for (std::size_t i = 0; i < rows.size(); ++i)
        f.row(i) = uh.row(rows[i]);
    return f;
}

/// Row selection of the angular-domain observation (the action of the reduced
/// combiner on the uncombined receive signal).
inline MatrixXcd decompose(const MatrixXcd& y_angular, const std::vector<int>& rows) {
    MatrixXcd y(rows.size(), y_angular.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= y_angular.rows())
            throw DimensionMismatch("decompose: angular row index out of range");
        y.row(i) = y_angular.row(rows[i]);
    }
    return y;
}

} // namespace jcd::coarse
