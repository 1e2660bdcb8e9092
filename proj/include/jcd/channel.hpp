#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <utility>
#include <vector>

#include "jcd/errors.hpp"
#include "jcd/rng.hpp"
#include "jcd/scenario.hpp"

namespace jcd::channel {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;
using cxd = std::complex<double>;

/// ULA steering vector, half-wavelength spacing: element m is exp(-j*m*pi*sin(theta)).
inline VectorXcd steering_vector(double theta, int antennas) {
    VectorXcd a(antennas);
    const double omega = M_PI * std::sin(theta);
    for (int m = 0; m < antennas; ++m)
        a(m) = std::polar(1.0, -omega * m);
    return a;
}

/// Normalized M-point DFT matrix. Column k is (1/sqrt(M)) * a_M(theta_k) with the
/// grid placed on spatial frequency, sin(theta_k) = 2k/M, so that U is unitary.
inline MatrixXcd dft_matrix(int antennas) {
    MatrixXcd u(antennas, antennas);
    const double step = 2.0 * M_PI / antennas;
    for (int k = 0; k < antennas; ++k)
        for (int m = 0; m < antennas; ++m)
            u(m, k) = std::polar(1.0 / std::sqrt(double(antennas)), -step * m * k);
    return u;
}

struct Path {
    double theta;   // AoA in [0, pi)
    cxd beta;       // complex gain
};

struct ChannelRealization {
    std::vector<std::vector<Path>> paths;   // per user
    MatrixXcd spatial;                      // G, M x N
    MatrixXcd angular;                      // H = U^H G, M x N
};

/// Draws one S-V realization: AoAs uniform on [0, pi), gains CN(0,1).
/// A user is redrawn until its strongest path clears the 3 dB floor,
/// measured after the DFT array gain: M * |beta_max|^2 * sigma_x2 / sigma_n2 >= 2.
inline ChannelRealization sample_channel(const Scenario& sc, Rng& rng) {
    sc.validate();
    const int m = sc.antennas;
    const double sigma_n2 = sc.noise_variance();
    const double floor_lin = std::pow(10.0, 3.0 / 10.0);
    constexpr int kResampleCap = 1000;

    const MatrixXcd u = dft_matrix(m);
    ChannelRealization out;
    out.paths.resize(sc.users);
    out.spatial = MatrixXcd::Zero(m, sc.users);

    for (int n = 0; n < sc.users; ++n) {
        bool accepted = false;
        for (int attempt = 0; attempt < kResampleCap && !accepted; ++attempt) {
            std::vector<Path> ps(sc.paths[n]);
            double strongest = 0.0;
            for (auto& p : ps) {
                p.theta = M_PI * uniform_unit(rng);
                if (p.theta >= M_PI) p.theta = 0.0;
                p.beta = complex_normal(rng);
                strongest = std::max(strongest, std::norm(p.beta));
            }
            if (m * strongest * sc.sigma_x2 / sigma_n2 >= floor_lin) {
                out.paths[n] = std::move(ps);
                accepted = true;
            }
        }
        if (!accepted)
            throw ResampleExhausted("strongest-path SNR floor unmet for user " +
                                    std::to_string(n));
        VectorXcd col = VectorXcd::Zero(m);
        for (const auto& p : out.paths[n])
            col += p.beta * steering_vector(p.theta, m);
        out.spatial.col(n) = col;
    }
    out.angular = u.adjoint() * out.spatial;
    return out;
}

/// Deterministic pilot block: N rows of the K_p-point unitary DFT, scaled so every
/// element has power sigma_x2. Then X_p X_p^H = K_p * sigma_x2 * I.
inline MatrixXcd pilot_matrix(int users, int k_p, double sigma_x2) {
    MatrixXcd xp(users, k_p);
    const double amp = std::sqrt(sigma_x2);
    const double step = 2.0 * M_PI / k_p;
    for (int n = 0; n < users; ++n)
        for (int k = 0; k < k_p; ++k)
            xp(n, k) = std::polar(amp, -step * n * k);
    return xp;
}

/// Pilot block plus i.i.d. CN(0, sigma_x2) Gaussian-codebook data block.
inline std::pair<MatrixXcd, MatrixXcd> sample_frames(const Scenario& sc, Rng& rng) {
    MatrixXcd xp = pilot_matrix(sc.users, sc.pilot_symbols, sc.sigma_x2);
    MatrixXcd xd(sc.users, sc.data_symbols);
    for (int n = 0; n < sc.users; ++n)
        for (int k = 0; k < sc.data_symbols; ++k)
            xd(n, k) = complex_normal(rng, sc.sigma_x2);
    return {std::move(xp), std::move(xd)};
}

/// Y = H X + N with i.i.d. CN(0, sigma_n2) noise.
inline MatrixXcd observe(const MatrixXcd& h, const MatrixXcd& x, double sigma_n2, Rng& rng) {
    if (h.cols() != x.rows())
        throw DimensionMismatch("observe: H columns must match X rows");
    MatrixXcd y = h * x;
    if (sigma_n2 > 0) {
        for (Eigen::Index j = 0; j < y.cols(); ++j)
            for (Eigen::Index i = 0; i < y.rows(); ++i)
                y(i, j) += complex_normal(rng, sigma_n2);
    }
    return y;
}

} // namespace jcd::channel
