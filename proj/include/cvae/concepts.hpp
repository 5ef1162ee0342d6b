#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cvae/gaussian.hpp"
#include "cvae/rng.hpp"

namespace cvae::concepts {

struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NormalizationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Product of interval-box domains with the Lebesgue measure. Factors are
// kept so concepts over single factors can be composed into products.
class ConceptualSpace {
   public:
    // one entry per factor; each factor is a box given by per-dimension bounds
    explicit ConceptualSpace(
        std::vector<std::vector<std::pair<double, double>>> factors)
        : factors_(std::move(factors)) {
        for (const auto& f : factors_) {
            if (f.empty()) throw DomainError("space: empty factor");
            for (auto [lo, hi] : f)
                if (!(lo < hi)) throw DomainError("space: degenerate interval");
            dim_ += (int)f.size();
        }
        if (factors_.empty()) throw DomainError("space: no factors");
    }

    static ConceptualSpace box(std::vector<std::pair<double, double>> bounds) {
        std::vector<std::vector<std::pair<double, double>>> f;
        for (auto b : bounds) f.push_back({b});
        return ConceptualSpace(std::move(f));
    }

    int dim() const { return dim_; }
    std::size_t factor_count() const { return factors_.size(); }
    const std::vector<std::pair<double, double>>& factor(std::size_t i) const {
        return factors_[i];
    }

    std::vector<std::pair<double, double>> bounds() const {
        std::vector<std::pair<double, double>> b;
        for (const auto& f : factors_)
            for (auto p : f) b.push_back(p);
        return b;
    }

    bool contains(std::span<const double> z) const {
        if ((int)z.size() != dim_) return false;
        int i = 0;
        for (const auto& f : factors_)
            for (auto [lo, hi] : f) {
                if (z[i] < lo || z[i] > hi) return false;
                ++i;
            }
        return true;
    }

    std::vector<double> sample(Rng& rng) const {
        std::vector<double> z;
        z.reserve(dim_);
        for (const auto& f : factors_)
            for (auto [lo, hi] : f) z.push_back(rng.uniform(lo, hi));
        return z;
    }

   private:
    std::vector<std::vector<std::pair<double, double>>> factors_;
    int dim_ = 0;
};

enum class ConceptTag { Crisp, Gaussian, Product, PointwiseProduct, Custom };

class FuzzyConcept;
using ConceptPtr = std::shared_ptr<const FuzzyConcept>;

// Measurable function Z -> [0,1], log-concave by contract. Immutable after
// construction; safe to share across threads.
class FuzzyConcept {
   public:
    FuzzyConcept(ConceptTag tag, ConceptualSpace space)
        : tag_(tag), space_(std::move(space)) {}
    virtual ~FuzzyConcept() = default;

    ConceptTag tag() const { return tag_; }
    const ConceptualSpace& space() const { return space_; }
    int dim() const { return space_.dim(); }

    double operator()(std::span<const double> z) const {
        if (!space_.contains(z))
            throw DomainError("eval: point outside the conceptual space");
        return eval_unchecked(z);
    }

    virtual double eval_unchecked(std::span<const double> z) const = 0;

    // Analytic normalization constant when one exists.
    virtual std::optional<double> analytic_kappa() const { return std::nullopt; }

   private:
    ConceptTag tag_;
    ConceptualSpace space_;
};

inline double eval_concept(const FuzzyConcept& c, std::span<const double> z) {
    return c(z);
}

// ---- crisp concepts ----------------------------------------------------

class CrispBoxConcept final : public FuzzyConcept {
   public:
    CrispBoxConcept(ConceptualSpace space,
                    std::vector<std::pair<double, double>> region)
        : FuzzyConcept(ConceptTag::Crisp, std::move(space)),
          region_(std::move(region)) {
        if ((int)region_.size() != dim())
            throw DomainError("crisp: region dimension mismatch");
    }

    double eval_unchecked(std::span<const double> z) const override {
        for (std::size_t i = 0; i < region_.size(); ++i)
            if (z[i] < region_[i].first || z[i] > region_[i].second) return 0.0;
        return 1.0;
    }

    std::optional<double> analytic_kappa() const override {
        double v = 1.0;
        for (auto [lo, hi] : region_) v *= hi - lo;
        return v;
    }

    const std::vector<std::pair<double, double>>& region() const { return region_; }

   private:
    std::vector<std::pair<double, double>> region_;
};

class CrispPredicateConcept final : public FuzzyConcept {
   public:
    CrispPredicateConcept(ConceptualSpace space,
                          std::function<bool(std::span<const double>)> pred)
        : FuzzyConcept(ConceptTag::Crisp, std::move(space)), pred_(std::move(pred)) {}

    double eval_unchecked(std::span<const double> z) const override {
        return pred_(z) ? 1.0 : 0.0;
    }

   private:
    std::function<bool(std::span<const double>)> pred_;
};

inline ConceptPtr crisp_indicator(ConceptualSpace space,
                                  std::vector<std::pair<double, double>> region) {
    return std::make_shared<CrispBoxConcept>(std::move(space), std::move(region));
}

// Predicate-based region; convexity is spot-checked on sampled member
// midpoints and the constructor rejects detected violations.
inline ConceptPtr crisp_indicator(ConceptualSpace space,
                                  std::function<bool(std::span<const double>)> pred,
                                  Rng& rng, int n_checks = 2000) {
    std::vector<std::vector<double>> members;
    for (int i = 0; i < n_checks && (int)members.size() < 256; ++i) {
        auto z = space.sample(rng);
        if (pred(z)) members.push_back(std::move(z));
    }
    for (int i = 0; i + 1 < (int)members.size(); ++i) {
        const auto& a = members[i];
        const auto& b = members[i + 1];
        std::vector<double> mid(a.size());
        for (std::size_t j = 0; j < a.size(); ++j) mid[j] = 0.5 * (a[j] + b[j]);
        if (!pred(mid))
            throw DomainError("crisp: region failed sampled convexity check");
    }
    return std::make_shared<CrispPredicateConcept>(std::move(space), std::move(pred));
}

// ---- gaussian concepts -------------------------------------------------

// Unnormalised Gaussian: c(z) = exp(-1/2 (z-mu)^T Sigma^-1 (z-mu)), peak 1.
class GaussianConcept final : public FuzzyConcept {
   public:
    // diagonal covariance
    GaussianConcept(ConceptualSpace space, std::vector<double> mu,
                    std::vector<double> var_diag)
        : FuzzyConcept(ConceptTag::Gaussian, std::move(space)),
          mu_(std::move(mu)),
          var_diag_(std::move(var_diag)) {
        if ((int)mu_.size() != dim() || mu_.size() != var_diag_.size())
            throw DomainError("gaussian: dimension mismatch");
        for (double v : var_diag_)
            if (!(v > 0.0)) throw DomainError("gaussian: variance must be positive");
    }

    // full symmetric positive-definite covariance (row-major dim x dim)
    GaussianConcept(ConceptualSpace space, std::vector<double> mu,
                    std::vector<std::vector<double>> cov)
        : FuzzyConcept(ConceptTag::Gaussian, std::move(space)), mu_(std::move(mu)) {
        int n = dim();
        if ((int)mu_.size() != n || (int)cov.size() != n)
            throw DomainError("gaussian: dimension mismatch");
        cov_inv_ = invert_spd(cov, det_);
    }

    bool diagonal() const { return !var_diag_.empty(); }
    const std::vector<double>& mean() const { return mu_; }
    const std::vector<double>& variances() const { return var_diag_; }

    double eval_unchecked(std::span<const double> z) const override {
        double q = 0.0;
        int n = dim();
        if (diagonal()) {
            for (int i = 0; i < n; ++i) {
                double d = z[i] - mu_[i];
                q += d * d / var_diag_[i];
            }
        } else {
            std::vector<double> d(n);
            for (int i = 0; i < n; ++i) d[i] = z[i] - mu_[i];
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) q += d[i] * cov_inv_[i][j] * d[j];
        }
        return std::exp(-0.5 * q);
    }

    std::optional<double> analytic_kappa() const override {
        int n = dim();
        if (diagonal()) {
            double k = 1.0;
            for (double v : var_diag_) k *= 2.0 * M_PI * v;
            return std::sqrt(k);
        }
        return std::sqrt(std::pow(2.0 * M_PI, n) * det_);
    }

   private:
    std::vector<double> mu_;
    std::vector<double> var_diag_;                 // diagonal form
    std::vector<std::vector<double>> cov_inv_;     // full form
    double det_ = 0.0;

    static std::vector<std::vector<double>> invert_spd(
        std::vector<std::vector<double>> a, double& det) {
        int n = (int)a.size();
        // Cholesky a = L L^T
        std::vector<std::vector<double>> L(n, std::vector<double>(n, 0.0));
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j <= i; ++j) {
                double s = a[i][j];
                for (int k = 0; k < j; ++k) s -= L[i][k] * L[j][k];
                if (i == j) {
                    if (s <= 0.0)
                        throw DomainError("gaussian: covariance not positive definite");
                    L[i][i] = std::sqrt(s);
                } else {
                    L[i][j] = s / L[j][j];
                }
            }
        }
        det = 1.0;
        for (int i = 0; i < n; ++i) det *= L[i][i] * L[i][i];
        // invert via forward/back substitution on identity columns
        std::vector<std::vector<double>> inv(n, std::vector<double>(n, 0.0));
        for (int col = 0; col < n; ++col) {
            std::vector<double> y(n, 0.0);
            for (int i = 0; i < n; ++i) {
                double s = (i == col) ? 1.0 : 0.0;
                for (int k = 0; k < i; ++k) s -= L[i][k] * y[k];
                y[i] = s / L[i][i];
            }
            for (int i = n - 1; i >= 0; --i) {
                double s = y[i];
                for (int k = i + 1; k < n; ++k) s -= L[k][i] * inv[k][col];
                inv[i][col] = s / L[i][i];
            }
        }
        return inv;
    }
};

inline ConceptPtr gaussian_concept(ConceptualSpace space, std::vector<double> mu,
                                   std::vector<double> var_diag) {
    return std::make_shared<GaussianConcept>(std::move(space), std::move(mu),
                                             std::move(var_diag));
}

inline ConceptPtr gaussian_concept_full(ConceptualSpace space,
                                        std::vector<double> mu,
                                        std::vector<std::vector<double>> cov) {
    return std::make_shared<GaussianConcept>(std::move(space), std::move(mu),
                                             std::move(cov));
}

// ---- composition -------------------------------------------------------

// c(z_1..z_n) = prod c_i(z_i) over the product space (Lemma-style product).
class ProductConcept final : public FuzzyConcept {
   public:
    ProductConcept(ConceptualSpace space, std::vector<ConceptPtr> parts)
        : FuzzyConcept(ConceptTag::Product, std::move(space)),
          parts_(std::move(parts)) {
        if (parts_.size() != this->space().factor_count())
            throw DomainError("product: one concept per factor required");
        int off = 0;
        for (std::size_t i = 0; i < parts_.size(); ++i) {
            int fd = (int)this->space().factor(i).size();
            if (parts_[i]->dim() != fd)
                throw DomainError("product: factor dimension mismatch");
            offsets_.push_back(off);
            off += fd;
        }
    }

    double eval_unchecked(std::span<const double> z) const override {
        double v = 1.0;
        for (std::size_t i = 0; i < parts_.size(); ++i) {
            int fd = parts_[i]->dim();
            v *= parts_[i]->eval_unchecked(z.subspan(offsets_[i], fd));
            if (v == 0.0) return 0.0;
        }
        return v;
    }

    std::optional<double> analytic_kappa() const override {
        double k = 1.0;
        for (const auto& p : parts_) {
            auto pk = p->analytic_kappa();
            if (!pk) return std::nullopt;
            k *= *pk;
        }
        return k;
    }

    const std::vector<ConceptPtr>& parts() const { return parts_; }

   private:
    std::vector<ConceptPtr> parts_;
    std::vector<int> offsets_;
};

inline ConceptPtr product_concept(ConceptualSpace space,
                                  std::vector<ConceptPtr> parts) {
    return std::make_shared<ProductConcept>(std::move(space), std::move(parts));
}

// (a.b)(z) = a(z) * b(z) over one shared space (the copying-dot composition).
class PointwiseProductConcept final : public FuzzyConcept {
   public:
    PointwiseProductConcept(ConceptPtr a, ConceptPtr b)
        : FuzzyConcept(ConceptTag::PointwiseProduct, a->space()),
          a_(std::move(a)),
          b_(std::move(b)) {
        if (a_->dim() != b_->dim())
            throw DomainError("pointwise product: space mismatch");
    }

    double eval_unchecked(std::span<const double> z) const override {
        return a_->eval_unchecked(z) * b_->eval_unchecked(z);
    }

   private:
    ConceptPtr a_, b_;
};

inline ConceptPtr pointwise_product(ConceptPtr a, ConceptPtr b) {
    return std::make_shared<PointwiseProductConcept>(std::move(a), std::move(b));
}

class CustomConcept final : public FuzzyConcept {
   public:
    CustomConcept(ConceptualSpace space,
                  std::function<double(std::span<const double>)> f)
        : FuzzyConcept(ConceptTag::Custom, std::move(space)), f_(std::move(f)) {}

    double eval_unchecked(std::span<const double> z) const override {
        return f_(z);
    }

   private:
    std::function<double(std::span<const double>)> f_;
};

inline ConceptPtr custom_concept(ConceptualSpace space,
                                 std::function<double(std::span<const double>)> f) {
    return std::make_shared<CustomConcept>(std::move(space), std::move(f));
}

// ---- quadrature --------------------------------------------------------

namespace detail {

// 16-point Gauss-Legendre nodes/weights on [-1,1] (symmetric half listed).
inline const std::array<double, 8> kGlNodes = {
    0.0950125098376374, 0.2816035507792589, 0.4580167776572274,
    0.6178762444026438, 0.7554044083550030, 0.8656312023878318,
    0.9445750230732326, 0.9894009349916499};
inline const std::array<double, 8> kGlWeights = {
    0.1894506104550685, 0.1826034150449236, 0.1691565193950025,
    0.1495959888165767, 0.1246289712555339, 0.0951585116824928,
    0.0622535239386479, 0.0271524594117541};

inline void gl_panel(double lo, double hi, std::vector<double>& xs,
                     std::vector<double>& ws) {
    double c = 0.5 * (lo + hi), h = 0.5 * (hi - lo);
    for (int i = 0; i < 8; ++i) {
        xs.push_back(c - h * kGlNodes[i]);
        ws.push_back(h * kGlWeights[i]);
        xs.push_back(c + h * kGlNodes[i]);
        ws.push_back(h * kGlWeights[i]);
    }
}

inline double integrate_fixed(const std::function<double(std::span<const double>)>& f,
                              const std::vector<std::pair<double, double>>& box,
                              int panels) {
    int nd = (int)box.size();
    std::vector<std::vector<double>> xs(nd), ws(nd);
    for (int d = 0; d < nd; ++d) {
        double lo = box[d].first, hi = box[d].second;
        for (int p = 0; p < panels; ++p)
            gl_panel(lo + (hi - lo) * p / panels, lo + (hi - lo) * (p + 1) / panels,
                     xs[d], ws[d]);
    }
    std::vector<std::size_t> idx(nd, 0);
    std::vector<double> z(nd);
    double acc = 0.0;
    while (true) {
        double w = 1.0;
        for (int d = 0; d < nd; ++d) {
            z[d] = xs[d][idx[d]];
            w *= ws[d][idx[d]];
        }
        acc += w * f(z);
        int d = 0;
        for (; d < nd; ++d) {
            if (++idx[d] < xs[d].size()) break;
            idx[d] = 0;
        }
        if (d == nd) break;
    }
    return acc;
}

}  // namespace detail

// Adaptive tensor-product quadrature over an interval box; refines until two
// successive resolutions agree to rel_tol.
inline double integrate_box(const std::function<double(std::span<const double>)>& f,
                            const std::vector<std::pair<double, double>>& box,
                            double rel_tol = 1e-8, int max_panels = 64) {
    double prev = detail::integrate_fixed(f, box, 1);
    for (int panels = 2; panels <= max_panels; panels *= 2) {
        double cur = detail::integrate_fixed(f, box, panels);
        if (std::abs(cur - prev) <= rel_tol * std::max(1.0, std::abs(cur)))
            return cur;
        prev = cur;
    }
    return prev;
}

// ---- normalization -----------------------------------------------------

struct Density {
    std::function<double(std::span<const double>)> pdf;
    double kappa = 0.0;
};

// p(z|c) = c(z) / kappa with kappa = integral of c over the space.
inline Density normalize_density(const ConceptPtr& c) {
    double kappa;
    if (auto k = c->analytic_kappa()) {
        kappa = *k;
    } else {
        kappa = integrate_box(
            [&](std::span<const double> z) { return c->eval_unchecked(z); },
            c->space().bounds());
    }
    if (!(kappa > 0.0) || !std::isfinite(kappa))
        throw NormalizationError("normalize: kappa zero or divergent");
    return {[c, kappa](std::span<const double> z) {
                return c->eval_unchecked(z) / kappa;
            },
            kappa};
}

// ---- factored concept density (one 1-D Gaussian per domain) ------------

using PriorTable = std::array<std::vector<Gauss1D>, 4>;

// p(z|c) = prod_i p(z_i | c_i), each factor a 1-D normal density.
inline std::function<double(std::span<const double>)> factored_density(
    const std::array<int, 4>& labels, const PriorTable& priors) {
    std::array<Gauss1D, 4> gs;
    for (int d = 0; d < 4; ++d) {
        if (labels[d] < 0 || labels[d] >= (int)priors[d].size())
            throw DomainError("factored_density: unknown label index");
        gs[d] = priors[d][labels[d]];
    }
    return [gs](std::span<const double> z) {
        double acc = 0.0;
        for (int d = 0; d < 4; ++d) acc += log_pdf(gs[d], z[d]);
        return std::exp(acc);
    };
}

// ---- rainbow concept ---------------------------------------------------

// Full-covariance 2-D Gaussian over (position, colour) whose ridge passes
// through the anchor points; ridge variance is 10x the cross-ridge variance.
inline ConceptPtr rainbow_concept(ConceptualSpace space,
                                  const std::vector<std::array<double, 2>>& anchors,
                                  double ridge_ratio = 10.0) {
    if (space.dim() != 2) throw DomainError("rainbow: need a 2-D space");
    if (anchors.size() < 2) throw DomainError("rainbow: need at least 2 anchors");
    double mx = 0.0, my = 0.0;
    for (auto& a : anchors) {
        mx += a[0];
        my += a[1];
    }
    mx /= anchors.size();
    my /= anchors.size();
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (auto& a : anchors) {
        double dx = a[0] - mx, dy = a[1] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    sxx /= anchors.size();
    sxy /= anchors.size();
    syy /= anchors.size();
    // eigen-decomposition of the 2x2 anchor scatter
    double tr = sxx + syy, det = sxx * syy - sxy * sxy;
    double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
    double l1 = tr / 2.0 + disc;  // ridge variance scale
    double l2 = tr / 2.0 - disc;
    if (l1 <= 1e-12) throw DomainError("rainbow: degenerate anchors");
    if (l2 > 0.1 * l1)
        throw DomainError("rainbow: anchors are not close to collinear");
    // principal direction
    double ux, uy;
    if (std::abs(sxy) > 1e-14) {
        ux = l1 - syy;
        uy = sxy;
    } else {
        ux = sxx >= syy ? 1.0 : 0.0;
        uy = sxx >= syy ? 0.0 : 1.0;
    }
    double norm = std::hypot(ux, uy);
    ux /= norm;
    uy /= norm;
    double ridge_var = 2.0 * l1;  // anchors sit well inside one ridge sigma
    double cross_var = ridge_var / ridge_ratio;
    // Sigma = ridge_var * uu^T + cross_var * vv^T with v ⟂ u
    double vx = -uy, vy = ux;
    std::vector<std::vector<double>> cov = {
        {ridge_var * ux * ux + cross_var * vx * vx,
         ridge_var * ux * uy + cross_var * vx * vy},
        {ridge_var * ux * uy + cross_var * vx * vy,
         ridge_var * uy * uy + cross_var * vy * vy}};
    return gaussian_concept_full(std::move(space), {mx, my}, std::move(cov));
}

// ---- log-concavity check -----------------------------------------------

struct LogConcavityResult {
    bool pass = true;
    std::vector<double> z, z_prime;
    double p = 0.0;
    double violation = 0.0;
};

// Samples (z, z', p) triples and tests
// c(p z + (1-p) z') >= c(z)^p c(z')^(1-p) up to a small slack.
inline LogConcavityResult check_log_concave(const FuzzyConcept& c,
                                            const ConceptualSpace& space,
                                            int n_triples, Rng& rng,
                                            double slack = 1e-9) {
    if (n_triples < 1) throw DomainError("log-concavity: need n_triples >= 1");
    LogConcavityResult res;
    std::vector<double> mid(space.dim());
    for (int t = 0; t < n_triples; ++t) {
        auto z = space.sample(rng);
        auto zp = space.sample(rng);
        double p = rng.uniform(0.0, 1.0);
        for (int i = 0; i < space.dim(); ++i) mid[i] = p * z[i] + (1.0 - p) * zp[i];
        double lhs = c.eval_unchecked(mid);
        double rhs =
            std::pow(c.eval_unchecked(z), p) * std::pow(c.eval_unchecked(zp), 1.0 - p);
        if (lhs + slack < rhs) {
            res.pass = false;
            res.z = z;
            res.z_prime = zp;
            res.p = p;
            res.violation = rhs - lhs;
            return res;
        }
    }
    return res;
}

}  // namespace cvae::concepts
