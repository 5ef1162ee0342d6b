#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "cvae/rng.hpp"

namespace cvae {

struct Gauss1D {
    double mean = 0.0;
    double logvar = 0.0;
};

struct DiagGaussian {
    std::vector<double> mean;
    std::vector<double> logvar;

    DiagGaussian() = default;
    DiagGaussian(std::vector<double> m, std::vector<double> lv)
        : mean(std::move(m)), logvar(std::move(lv)) {
        if (mean.size() != logvar.size())
            throw std::invalid_argument("diag gaussian: length mismatch");
    }
    std::size_t dim() const { return mean.size(); }
    Gauss1D component(std::size_t i) const { return {mean[i], logvar[i]}; }
};

// Uniformly weighted mixture of 1-D Gaussians.
struct GaussianMixture {
    std::vector<Gauss1D> components;

    std::size_t size() const { return components.size(); }
};

inline double kl_gauss1(const Gauss1D& q, const Gauss1D& p) {
    double dm = q.mean - p.mean;
    return 0.5 * ((p.logvar - q.logvar) +
                  (std::exp(q.logvar) + dm * dm) * std::exp(-p.logvar) - 1.0);
}

// Analytic KL(q || p) between diagonal Gaussians; additive over dimensions.
inline double kl_diag(const DiagGaussian& q, const DiagGaussian& p) {
    if (q.dim() != p.dim())
        throw std::invalid_argument("kl_diag: dimension mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < q.dim(); ++i)
        acc += kl_gauss1(q.component(i), p.component(i));
    return acc;
}

// z_i = mu_i + exp(logvar_i / 2) * eps_i
inline std::vector<double> reparam_sample(const DiagGaussian& q,
                                          const std::vector<double>& eps) {
    if (eps.size() != q.dim())
        throw std::invalid_argument("reparam: eps length mismatch");
    std::vector<double> z(q.dim());
    for (std::size_t i = 0; i < z.size(); ++i)
        z[i] = q.mean[i] + std::exp(0.5 * q.logvar[i]) * eps[i];
    return z;
}

inline double log_pdf(const Gauss1D& g, double z) {
    double d = z - g.mean;
    return -0.5 * std::log(2.0 * M_PI) - 0.5 * g.logvar -
           0.5 * d * d * std::exp(-g.logvar);
}

// log of the uniformly weighted mixture density, via log-sum-exp.
inline double log_pdf_mixture(const GaussianMixture& m, double z) {
    if (m.size() == 0) throw std::invalid_argument("mixture: empty");
    double mx = -1e300;
    for (const auto& c : m.components) mx = std::max(mx, log_pdf(c, z));
    double sum = 0.0;
    for (const auto& c : m.components) sum += std::exp(log_pdf(c, z) - mx);
    return mx + std::log(sum) - std::log((double)m.size());
}

struct McEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

// Monte-Carlo estimate of KL(q || m) with samples drawn from q via the
// reparametrisation trick.
inline McEstimate kl_mc_mixture(const Gauss1D& q, const GaussianMixture& m,
                                int n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("kl_mc: need n >= 1");
    double sigma = std::exp(0.5 * q.logvar);
    double acc = 0.0, acc2 = 0.0;
    for (int s = 0; s < n; ++s) {
        double z = q.mean + sigma * rng.normal();
        double v = log_pdf(q, z) - log_pdf_mixture(m, z);
        acc += v;
        acc2 += v * v;
    }
    McEstimate e;
    e.value = acc / n;
    double var = std::max(0.0, acc2 / n - e.value * e.value);
    e.std_error = n > 1 ? std::sqrt(var / (n - 1)) : 0.0;
    return e;
}

}  // namespace cvae
