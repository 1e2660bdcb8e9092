#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include "jcd/errors.hpp"
#include "jcd/rng.hpp"

namespace jcd::bigamp {

using Eigen::ArrayXXcd;
using Eigen::ArrayXXd;
using Eigen::MatrixXcd;
using Eigen::VectorXd;

inline constexpr double kVarFloor = 1e-12;
inline constexpr double kVarMax = 1e12;
inline constexpr double kGammaFloor = 1e-12;
inline constexpr double kLambdaInit = 0.05;

/// Prior specification for one bilinear subproblem Y = H X + N.
/// Columns 0..k_pilot-1 of X are known pilots; the rest are CN(0, sigma_x2) data.
/// H elements follow per-user Bernoulli-Gaussian priors with weight lambda_n and
/// slab variance gamma_n, re-estimated by EM when learn_hyperparams is set.
struct Priors {
    double sigma_x2 = 1.0;
    double sigma_n2 = 1.0;
    int k_pilot = 0;
    MatrixXcd pilot_values;          // N x k_pilot
    VectorXd lambda;                 // initial lambda_n, empty -> 0.05 everywhere
    VectorXd gamma;                  // initial gamma_n, empty -> energy-based init
    bool learn_hyperparams = true;
};

/// Default mean-damping factor. The undamped recursion (rho = 1) diverges for
/// the problem sizes this solver targets, so the shipped default blends
/// successive (h, x, s) estimates; rho stays configurable up to 1.
inline constexpr double kDefaultDamping = 0.5;

struct Options {
    double stop_tol = 1e-4;            // delta
    int max_iters = 200;               // T_max
    double damping = kDefaultDamping;  // rho in (0, 1]; 1.0 disables damping
};

struct State {
    ArrayXXcd x_hat;   // N x K
    ArrayXXd v_x;
    ArrayXXcd h_hat;   // M x N
    ArrayXXd v_h;
    ArrayXXcd s_hat;   // M x K
    ArrayXXd v_s;
    ArrayXXcd p_bar, p_hat, z_hat;
    ArrayXXd v_p_bar, v_p, v_z;
    ArrayXXcd r_hat;   // N x K (data columns meaningful)
    ArrayXXd v_r;
    ArrayXXcd q_hat;   // M x N
    ArrayXXd v_q;
    ArrayXXd alpha;    // M x N spike/slab posterior weights
    VectorXd lambda, gamma;
    int k_pilot = 0;
    int t = 0;
};

struct Estimate {
    MatrixXcd h_hat;          // M x N
    MatrixXcd x_d_hat;        // N x K_d
    VectorXd lambda_final, gamma_final;
    int iterations = 0;
    std::vector<double> residual_trace;
};

inline State init_state(const Priors& priors, int rows, int cols, Rng& /*rng*/) {
    const int n = static_cast<int>(priors.pilot_values.rows());
    State s;
    s.k_pilot = priors.k_pilot;
    s.x_hat = ArrayXXcd::Zero(n, cols);
    s.v_x = ArrayXXd::Ones(n, cols);
    if (priors.k_pilot > 0) {
        s.x_hat.leftCols(priors.k_pilot) = priors.pilot_values.array();
        s.v_x.leftCols(priors.k_pilot).setZero();
    }
    s.h_hat = ArrayXXcd::Zero(rows, n);
    s.v_h = ArrayXXd::Ones(rows, n);
    s.s_hat = ArrayXXcd::Zero(rows, cols);
    s.v_s = ArrayXXd::Zero(rows, cols);
    s.z_hat = ArrayXXcd::Zero(rows, cols);
    s.alpha = ArrayXXd::Zero(rows, n);
    s.lambda = priors.lambda.size() ? priors.lambda : VectorXd::Constant(n, kLambdaInit);
    s.gamma = priors.gamma;   // caller fills when empty (see run)
    s.t = 0;
    return s;
}

inline void check_finite(const ArrayXXd& v, const char* what, int t) {
    if (!v.allFinite())
        throw NumericalDivergence(std::string("non-finite ") + what, t);
}

/// Output-side half iteration: plain and Onsager-corrected moments of Z, the
/// z-posterior under the AWGN likelihood, and the scaled residual messages.
inline void output_step(State& s, const MatrixXcd& y, double sigma_n2) {
    const ArrayXXd h_abs2 = s.h_hat.abs2();
    const ArrayXXd x_abs2 = s.x_hat.abs2();

    s.v_p_bar = (h_abs2.matrix() * s.v_x.matrix() + s.v_h.matrix() * x_abs2.matrix()).array();
    s.p_bar = (s.h_hat.matrix() * s.x_hat.matrix()).array();
    s.v_p = s.v_p_bar + (s.v_h.matrix() * s.v_x.matrix()).array();
    s.p_hat = s.p_bar - s.s_hat * s.v_p_bar;

    s.v_p = s.v_p.cwiseMax(kVarFloor).cwiseMin(kVarMax);
    check_finite(s.v_p, "v_p", s.t);
    if ((s.v_p <= 0.0).any())
        throw NumericalDivergence("nonpositive v_p after clamping", s.t);

    s.z_hat = (y.array() * s.v_p + s.p_hat * sigma_n2) / (s.v_p + sigma_n2);
    s.v_z = s.v_p * sigma_n2 / (s.v_p + sigma_n2);
    s.v_s = (1.0 / s.v_p - s.v_z / s.v_p.square()).cwiseMax(0.0).cwiseMin(kVarMax);
    s.s_hat = (s.z_hat - s.p_hat) / s.v_p;
}

/// Input-side half iteration: pseudo-channel moments r (data columns only,
/// pilots are known) and q (all channel entries).
inline void input_step(State& s) {
    const ArrayXXd h_abs2 = s.h_hat.abs2();
    const ArrayXXd x_abs2 = s.x_hat.abs2();
    const int cols = static_cast<int>(s.x_hat.cols());

    if (s.k_pilot < cols) {
        const ArrayXXd denom_r = (h_abs2.matrix().transpose() * s.v_s.matrix()).array();
        s.v_r = (1.0 / denom_r.cwiseMax(1.0 / kVarMax)).cwiseMin(kVarMax);
        check_finite(s.v_r, "v_r", s.t);
        const ArrayXXd cross_r = (s.v_h.matrix().transpose() * s.v_s.matrix()).array();
        const ArrayXXcd corr_r = (s.h_hat.matrix().adjoint() * s.s_hat.matrix()).array();
        s.r_hat = s.x_hat * (1.0 - s.v_r * cross_r) + s.v_r * corr_r;
    } else {
        s.v_r.resize(s.x_hat.rows(), cols);
        s.r_hat.resize(s.x_hat.rows(), cols);
    }

    const ArrayXXd denom_q = (s.v_s.matrix() * x_abs2.matrix().transpose()).array();
    s.v_q = (1.0 / denom_q.cwiseMax(1.0 / kVarMax)).cwiseMin(kVarMax);
    check_finite(s.v_q, "v_q", s.t);
    const ArrayXXd cross_q = (s.v_s.matrix() * s.v_x.matrix().transpose()).array();
    const ArrayXXcd corr_q = (s.s_hat.matrix() * s.x_hat.matrix().adjoint()).array();
    s.q_hat = s.h_hat * (1.0 - s.v_q * cross_q) + s.v_q * corr_q;
}

/// Gaussian posterior of the data symbols on the pseudo-channel r.
inline void denoise_x(State& s, double sigma_x2) {
    const int cols = static_cast<int>(s.x_hat.cols());
    if (s.k_pilot >= cols) return;
    const int kd = cols - s.k_pilot;
    auto r = s.r_hat.rightCols(kd);
    auto vr = s.v_r.rightCols(kd);
    s.x_hat.rightCols(kd) = r * sigma_x2 / (vr + sigma_x2);
    s.v_x.rightCols(kd) = (vr * sigma_x2 / (vr + sigma_x2)).cwiseMax(0.0);
}

/// Spike-and-slab posterior weight for one channel coefficient:
/// alpha = (1 + (1-lambda)/lambda * CN(0; q, v_q) / CN(0; q, gamma + v_q))^{-1},
/// evaluated in the log domain with circular complex Gaussian densities.
inline double spike_slab_weight(std::complex<double> q, double v_q, double lambda, double gamma) {
    if (lambda >= 1.0) return 1.0;
    if (lambda <= 0.0) return 0.0;
    const double log_ratio = std::log((gamma + v_q) / v_q) +
                             std::norm(q) * (1.0 / (gamma + v_q) - 1.0 / v_q);
    const double e = std::log((1.0 - lambda) / lambda) + log_ratio;
    if (e > 700.0) return 0.0;
    return 1.0 / (1.0 + std::exp(e));
}

/// Bernoulli-Gaussian posterior of the channel coefficients on q.
inline void denoise_h(State& s) {
    const int rows = static_cast<int>(s.h_hat.rows());
    const int n = static_cast<int>(s.h_hat.cols());
    for (int j = 0; j < n; ++j) {
        const double lambda = s.lambda(j);
        const double gamma = s.gamma(j);
        for (int i = 0; i < rows; ++i) {
            const double vq = std::max(s.v_q(i, j), kVarFloor);
            if (gamma <= kGammaFloor || lambda <= 0.0) {
                s.alpha(i, j) = 0.0;
                s.h_hat(i, j) = 0.0;
                s.v_h(i, j) = 0.0;
                continue;
            }
            const double a = spike_slab_weight(s.q_hat(i, j), vq, lambda, gamma);
            const std::complex<double> slab_mean = s.q_hat(i, j) * gamma / (vq + gamma);
            const double slab_var = vq * gamma / (vq + gamma);
            s.alpha(i, j) = a;
            s.h_hat(i, j) = a * slab_mean;
            s.v_h(i, j) =
                std::max(a * (std::norm(slab_mean) + slab_var) - std::norm(s.h_hat(i, j)), 0.0);
        }
    }
}

/// EM re-estimation of the BG hyperparameters from the current posterior.
inline void em_update(State& s) {
    const int rows = static_cast<int>(s.h_hat.rows());
    const int n = static_cast<int>(s.h_hat.cols());
    for (int j = 0; j < n; ++j) {
        const double lambda = std::clamp(s.alpha.col(j).mean(), 0.0, 1.0);
        s.lambda(j) = lambda;
        if (lambda <= 0.0) continue;   // degenerate: keep previous gamma
        double acc = 0.0;
        for (int i = 0; i < rows; ++i)
            acc += s.v_h(i, j) + std::norm(s.h_hat(i, j));
        s.gamma(j) = std::max(acc / (lambda * rows), kGammaFloor);
    }
}

/// Full EM-BiGAMP loop on Y = H X + N until the relative-residual rule
/// ||Z^(t) - Z^(t-1)|| <= delta ||Z^(t)|| fires or T_max is hit. The residual
/// is taken on the product estimate Z^(t) = H^(t) X^(t); the z-posterior is
/// unusable as a stop statistic because it collapses onto Y as sigma_n2 -> 0.
inline Estimate run(const MatrixXcd& y, const Priors& priors, const Options& opt, Rng& rng) {
    const int rows = static_cast<int>(y.rows());
    const int cols = static_cast<int>(y.cols());
    if (priors.k_pilot > cols)
        throw DimensionMismatch("bigamp::run: more pilot columns than observations");
    if (priors.k_pilot > 0 && priors.pilot_values.cols() != priors.k_pilot)
        throw DimensionMismatch("bigamp::run: pilot_values shape mismatch");

    State s = init_state(priors, rows, cols, rng);
    if (s.gamma.size() == 0) {
        // The prior slab variance is unknown up front; seed it from the
        // observed energy budget split across users and active taps.
        const double e = (y.squaredNorm() / (rows * cols) - priors.sigma_n2);
        const double n_users = static_cast<double>(s.x_hat.rows());
        s.gamma = VectorXd::Constant(
            s.x_hat.rows(),
            std::max(e / (kLambdaInit * n_users * priors.sigma_x2), 1.0));
    }

    Estimate est;
    ArrayXXcd z_prev = ArrayXXcd::Zero(rows, cols);
    ArrayXXcd h_prev = s.h_hat, x_prev = s.x_hat, s_prev = s.s_hat;

    for (int t = 1; t <= opt.max_iters; ++t) {
        s.t = t;
        output_step(s, y, priors.sigma_n2);
        input_step(s);
        denoise_x(s, priors.sigma_x2);
        denoise_h(s);
        if (priors.learn_hyperparams) em_update(s);

        if (opt.damping < 1.0) {
            const double rho = opt.damping;
            s.h_hat = rho * s.h_hat + (1.0 - rho) * h_prev;
            s.x_hat = rho * s.x_hat + (1.0 - rho) * x_prev;
            s.s_hat = rho * s.s_hat + (1.0 - rho) * s_prev;
            h_prev = s.h_hat;
            x_prev = s.x_hat;
            s_prev = s.s_hat;
        }

        const ArrayXXcd z_cur = (s.h_hat.matrix() * s.x_hat.matrix()).array();
        const double z_norm = std::sqrt(z_cur.abs2().sum());
        const double diff = std::sqrt((z_cur - z_prev).abs2().sum());
        est.residual_trace.push_back(z_norm > 0 ? diff / z_norm
                                                : (diff > 0 ? std::numeric_limits<double>::infinity()
                                                            : 0.0));
        est.iterations = t;
        z_prev = z_cur;
        if (diff <= opt.stop_tol * z_norm) break;
    }

    est.h_hat = s.h_hat.matrix();
    est.x_d_hat = s.x_hat.rightCols(cols - priors.k_pilot).matrix();
    est.lambda_final = s.lambda;
    est.gamma_final = s.gamma;
    return est;
}

} // namespace jcd::bigamp
