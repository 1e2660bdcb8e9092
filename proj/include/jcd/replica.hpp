#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "jcd/errors.hpp"

namespace jcd::replica {

/// Large-system ratios and prior parameters of the fixed-point analysis.
struct ReplicaParams {
    double alpha = 1;     // M / N
    double beta_d = 1;    // K_d / N
    double beta_p = 1;    // K_p / N
    double n_users = 1;   // N, kept explicit for the sigma_n2 / N terms
    double sigma_n2 = 1;
    double sigma_x2 = 1;
    double lambda = 1;    // BG weight
    double sigma_h2 = 1;  // BG slab variance

    double c_h() const { return lambda * sigma_h2; }
    double c_x() const { return sigma_x2; }
};

struct ReplicaSolution {
    double q_h = 0, q_xd = 0, q_xp = 0;
    double qt_h = 0, qt_xd = 0, qt_xp = 0;
    double chi_p = 0, chi_d = 0;
    double mse_h = 0, mse_xd = 0;
    bool converged = false;
    int iterations = 0;
};

/// Gauss-Hermite nodes/weights for the physicists' weight exp(-x^2),
/// via the symmetric tridiagonal Jacobi matrix.
inline void gauss_hermite(int order, std::vector<double>& nodes, std::vector<double>& weights) {
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(order, order);
    for (int i = 1; i < order; ++i)
        j(i, i - 1) = j(i - 1, i) = std::sqrt(i / 2.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
    nodes.resize(order);
    weights.resize(order);
    const double total = std::sqrt(M_PI);
    for (int i = 0; i < order; ++i) {
        nodes[i] = es.eigenvalues()(i);
        const double v0 = es.eigenvectors()(0, i);
        weights[i] = total * v0 * v0;
    }
}

/// MMSE of a Gaussian scalar on the channel y = sqrt(qt) x + w, w ~ CN(0,1):
/// sigma_x2 / (1 + qt * sigma_x2).
inline double scalar_mse_gaussian(double qt, double sigma_x2) {
    if (qt < 0) throw std::invalid_argument("scalar_mse_gaussian: qt must be >= 0");
    return sigma_x2 / (1.0 + qt * sigma_x2);
}

/// Gauss-Legendre nodes/weights on [-1, 1], via the Jacobi matrix.
inline void gauss_legendre(int order, std::vector<double>& nodes, std::vector<double>& weights) {
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(order, order);
    for (int i = 1; i < order; ++i)
        j(i, i - 1) = j(i - 1, i) = i / std::sqrt(4.0 * i * i - 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
    nodes.resize(order);
    weights.resize(order);
    for (int i = 0; i < order; ++i) {
        nodes[i] = es.eigenvalues()(i);
        const double v0 = es.eigenvectors()(0, i);
        weights[i] = 2.0 * v0 * v0;
    }
}

namespace detail {

/// E_y{Var(h | y)} for the BG scalar channel. The spike-and-slab posterior
/// variance
///   Var(h | y) = a v_slab + a (1 - a) |m_slab|^2
/// is nonnegative termwise (no catastrophic cancellation) and depends on the
/// complex observation only through t = |y|^2, so the 2-D average reduces
/// exactly to 1-D integrals against the radial y-marginals
///   spike: t ~ Exp(1),   slab: t / s ~ Exp(1),  s = qt sigma_h2 + 1.
/// Both measures and the spike/slab log-odds sigmoid vary on t-scales >= 1,
/// so composite Gauss-Legendre on unit-width panels resolves everything; the
/// slab tail beyond the sigmoid, where Var(h|y) -> v_slab, is added in
/// closed form. (A product Gauss-Hermite rule in y cannot resolve the
/// sigmoid at large qt: under the slab scaling the transition ring narrows
/// like 1/s while the nodes stay O(1) apart.)
inline double bg_posterior_mse(double qt, double lambda, double sigma_h2, double panel_width) {
    const double s = qt * sigma_h2 + 1.0;       // variance of y under the slab
    const double slab_var = sigma_h2 / s;
    const double g2 = qt * sigma_h2 * sigma_h2 / (s * s);   // |m_slab|^2 = g2 t
    const double kappa = 1.0 - 1.0 / s;
    // log posterior odds spike:slab at t: e(t) = c - kappa t
    const double c = std::log((1.0 - lambda) / lambda) + std::log(s);
    const double t_star = kappa > 0.0 ? std::max(c / kappa, 0.0) : 0.0;

    auto posterior_var = [&](double t) {
        const double e = c - kappa * t;
        const double a = e > 700.0 ? 0.0 : (e < -700.0 ? 1.0 : 1.0 / (1.0 + std::exp(e)));
        return a * slab_var + a * (1.0 - a) * g2 * t;
    };

    std::vector<double> x, w;
    gauss_legendre(16, x, w);
    const double t_end = std::max(60.0, t_star + 60.0);
    const int n_panels = int(std::ceil(t_end / panel_width));
    double i_spike = 0.0, i_slab = 0.0;
    for (int k = 0; k < n_panels; ++k) {
        const double lo = k * panel_width;
        const double hi = std::min(lo + panel_width, t_end);
        const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double t = mid + half * x[i];
            const double f = half * w[i] * posterior_var(t);
            i_spike += f * std::exp(-t);
            i_slab += f * std::exp(-t / s) / s;
        }
    }
    // beyond t_end the sigmoid has saturated (a = 1, a(1-a) = 0): tails are
    // v_slab times the remaining measure
    i_spike += slab_var * std::exp(-t_end);
    i_slab += slab_var * std::exp(-t_end / s);
    return (1.0 - lambda) * i_spike + lambda * i_slab;
}

} // namespace detail

/// MMSE of a Bernoulli-Gaussian scalar on y = sqrt(qt) h + w, w ~ CN(0,1),
/// as the y-average of the posterior variance. Evaluated at two quadrature
/// resolutions as a convergence check.
inline double scalar_mse_bg(double qt, double lambda, double sigma_h2) {
    if (qt < 0 || lambda < 0 || lambda > 1)
        throw std::invalid_argument("scalar_mse_bg: need qt >= 0 and lambda in [0,1]");
    if (lambda == 0.0 || sigma_h2 == 0.0) return 0.0;
    if (qt == 0.0) return lambda * sigma_h2;
    if (lambda == 1.0) return scalar_mse_gaussian(qt, sigma_h2);
    const double coarse = detail::bg_posterior_mse(qt, lambda, sigma_h2, 1.0);
    const double fine = detail::bg_posterior_mse(qt, lambda, sigma_h2, 0.5);
    const double scale = std::max({coarse, fine, 1e-300});
    if (std::abs(fine - coarse) / scale > 1e-6)
        throw QuadratureUnstable("successive quadrature resolutions disagree");
    return fine;
}

/// Damped iteration of the order-parameter fixed-point equations. Negative
/// init arguments mean "start from the prior variances".
inline ReplicaSolution solve_fixed_point(const ReplicaParams& p, double mse_h_init = -1.0,
                                         double mse_xd_init = -1.0) {
    const double c_h = p.c_h();
    const double c_x = p.c_x();
    ReplicaSolution s;
    s.mse_h = (mse_h_init >= 0.0 && mse_h_init <= c_h) ? mse_h_init : c_h;
    s.mse_xd = (mse_xd_init >= 0.0 && mse_xd_init <= c_x) ? mse_xd_init : c_x;
    s.q_xp = c_x;
    const double damp = 0.5;
    const int max_iters = 1000;
    for (int it = 1; it <= max_iters; ++it) {
        s.iterations = it;
        s.q_h = c_h - s.mse_h;
        s.q_xd = c_x - s.mse_xd;
        s.chi_p = 1.0 / (p.sigma_n2 / p.n_users + c_x * c_h - s.q_xp * s.q_h);
        s.chi_d = 1.0 / (p.sigma_n2 / p.n_users + c_x * c_h - s.q_xd * s.q_h);
        s.qt_h = p.beta_d * s.q_xd * s.chi_d + p.beta_p * s.q_xp * s.chi_p;
        s.qt_xd = p.alpha * s.q_h * s.chi_d;
        s.qt_xp = p.alpha * s.q_h * s.chi_p;
        const double mse_h_new = scalar_mse_bg(std::max(s.qt_h, 0.0), p.lambda, p.sigma_h2);
        const double mse_xd_new = scalar_mse_gaussian(std::max(s.qt_xd, 0.0), p.sigma_x2);
        const double dh = std::abs(mse_h_new - s.mse_h) / std::max(s.mse_h, 1e-300);
        const double dx = std::abs(mse_xd_new - s.mse_xd) / std::max(s.mse_xd, 1e-300);
        s.mse_h = damp * mse_h_new + (1.0 - damp) * s.mse_h;
        s.mse_xd = damp * mse_xd_new + (1.0 - damp) * s.mse_xd;
        if (std::max(dh, dx) < 1e-10) {
            s.converged = true;
            break;
        }
    }
    s.q_h = c_h - s.mse_h;
    s.q_xd = c_x - s.mse_xd;
    return s;
}

/// Large-alpha/beta closed-form approximation: the coupled 2x2 system
/// mse_Xd = sigma_n2 / (AE_H - M mse_H), mse_H = sigma_n2 / (AE_Xd - K_d mse_Xd + AE_Xp).
inline std::pair<double, double> proposition1_approx(const ReplicaParams& p) {
    const double m = p.alpha * p.n_users;
    const double k_d = p.beta_d * p.n_users;
    const double k_p = p.beta_p * p.n_users;
    const double ae_h = m * p.lambda * p.sigma_h2;
    const double ae_xd = k_d * p.sigma_x2;
    const double ae_xp = k_p * p.sigma_x2;

    double mse_xd = 0.0, mse_h = 0.0;
    for (int it = 0; it < 500; ++it) {
        const double mse_xd_new = p.sigma_n2 / (ae_h - m * mse_h);
        const double mse_h_new = p.sigma_n2 / ((ae_xd - k_d * mse_xd_new) + ae_xp);
        const double change = std::max(std::abs(mse_xd_new - mse_xd), std::abs(mse_h_new - mse_h));
        mse_xd = mse_xd_new;
        mse_h = mse_h_new;
        if (mse_xd < 0 || mse_xd > p.sigma_x2 || mse_h < 0 || mse_h > p.c_h())
            throw NonPhysical("proposition1_approx: iterate left physical bounds");
        if (change < 1e-14 * std::max(mse_xd, mse_h)) break;
    }
    return {mse_xd, mse_h};
}

struct ComplexityCounts {
    std::uint64_t mults_orig, adds_orig, mults_jcd, adds_jcd;
};

/// Per-iteration operation counts of the full method and of one reduced
/// single-user subproblem with M_r retained rows.
inline ComplexityCounts complexity_counts(std::uint64_t m, std::uint64_t n, std::uint64_t k_d,
                                          std::uint64_t m_r) {
    ComplexityCounts c;
    c.mults_orig = 10 * m * n * k_d + 9 * m * k_d + 7 * n * k_d + 16 * m * n + n;
    c.adds_orig = 10 * m * n * k_d + 6 * m * k_d + 4 * n * k_d + 8 * m * n;
    c.mults_jcd = 19 * m_r * k_d + 16 * m_r + 7 * k_d + 1;
    c.adds_jcd = 16 * m_r * k_d + 8 * m_r + 4 * k_d;
    return c;
}

} // namespace jcd::replica
