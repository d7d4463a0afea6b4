#ifndef BUNDLECHOICE_KERNELS_HPP
#define BUNDLECHOICE_KERNELS_HPP

#include "error.hpp"
#include "rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>

namespace bundlechoice {

// ---------------------------------------------------------------------------
// Standard normal helpers
// ---------------------------------------------------------------------------

[[nodiscard]] inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/// Upper tail 1 - Phi(x), accurate for large positive x.
[[nodiscard]] inline double normal_ccdf(double x) {
    return 0.5 * std::erfc(x / std::numbers::sqrt2);
}

[[nodiscard]] inline double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

/// Inverse of the upper tail: returns x with normal_ccdf(x) == q.
[[nodiscard]] inline double normal_ccdf_inv(double q) {
    return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * q);
}

[[nodiscard]] inline double normal_quantile(double p) {
    return -normal_ccdf_inv(p);
}

namespace detail {

constexpr double kTailSwitch = 3.0;
constexpr long kMaxRejections = 10'000'000;

[[noreturn]] inline void tn_give_up(double a, double b) {
    throw NumericError("truncated normal: cannot place a draw in (" + std::to_string(a) + ", " +
                       std::to_string(b) + ") at working precision");
}

// Exponential rejection for x > a (a > 0), optionally capped at b.
inline double tn_exponential_tail(double a, double b, RngStream& rng) {
    const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
    for (long k = 0; k < kMaxRejections; ++k) {
        const double z = a + rng.exponential() / rate;
        const double d = z - rate;
        if (z < b && rng.uniform() <= std::exp(-0.5 * d * d)) return z;
    }
    tn_give_up(a, b);
}

// Uniform proposal on (a, b); efficient whenever the density varies little
// across the interval.
inline double tn_uniform_rejection(double a, double b, RngStream& rng) {
    double mode_sq = 0.0;
    if (a > 0.0) mode_sq = a * a;
    else if (b < 0.0) mode_sq = b * b;
    for (long k = 0; k < kMaxRejections; ++k) {
        const double x = a + (b - a) * rng.uniform();
        if (rng.uniform() <= std::exp(0.5 * (mode_sq - x * x))) return x;
    }
    tn_give_up(a, b);
}

inline double tn_standard(double a, double b, RngStream& rng) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (a == -inf && b == inf) return rng.normal();
    if (a == -inf || b <= 0.0) {
        return -tn_standard(-b, -a, rng);
    }
    if (b == inf) {
        if (a > kTailSwitch) return tn_exponential_tail(a, inf, rng);
        return normal_ccdf_inv(rng.uniform() * normal_ccdf(a));
    }
    // Finite interval.
    const double width = b - a;
    const double reach = std::max(std::abs(a), std::abs(b));
    if (width * reach <= 1.0) return tn_uniform_rejection(a, b, rng);
    if (a > kTailSwitch) return tn_exponential_tail(a, b, rng);
    if (a >= 0.0) {
        const double qa = normal_ccdf(a);
        const double qb = normal_ccdf(b);
        if (!(qa > qb)) return tn_uniform_rejection(a, b, rng);
        return normal_ccdf_inv(qb + rng.uniform() * (qa - qb));
    }
    const double pa = normal_cdf(a);
    const double pb = normal_cdf(b);
    if (!(pb > pa)) return tn_uniform_rejection(a, b, rng);
    return normal_quantile(pa + rng.uniform() * (pb - pa));
}

} // namespace detail

/// Draw from N(mean, sd^2) restricted to (lower, upper). Either bound may be
/// infinite. Central intervals use the inverse CDF; far one-sided tails use
/// exponential rejection; narrow intervals use uniform rejection. The result
/// always lies strictly inside the bounds.
inline double draw_truncated_normal(double mean, double sd, double lower, double upper,
                                    RngStream& rng) {
    if (!(sd > 0.0) || !std::isfinite(sd) || !std::isfinite(mean)) {
        throw NumericError("truncated normal: mean and sd must be finite with sd > 0");
    }
    if (std::isnan(lower) || std::isnan(upper) || !(lower < upper)) {
        throw NumericError("truncated normal: requires lower < upper");
    }
    const double a = (lower - mean) / sd;
    const double b = (upper - mean) / sd;
    double x = mean + sd * detail::tn_standard(a, b, rng);
    if (x <= lower) x = std::nextafter(lower, upper);
    if (x >= upper) x = std::nextafter(upper, lower);
    if (!(x > lower && x < upper)) detail::tn_give_up(lower, upper);
    return x;
}

// ---------------------------------------------------------------------------
// Gamma family
// ---------------------------------------------------------------------------

/// Gamma(shape, rate = 1) by Marsaglia-Tsang.
inline double draw_gamma(double shape, RngStream& rng) {
    if (!(shape > 0.0) || !std::isfinite(shape)) throw DomainError("gamma: shape must be positive");
    if (shape < 1.0) {
        const double g = draw_gamma(shape + 1.0, rng);
        return g * std::pow(rng.uniform(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = 0.0;
        double v = 0.0;
        do {
            x = rng.normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.uniform();
        if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
}

inline double draw_chi_square(double df, RngStream& rng) { return 2.0 * draw_gamma(0.5 * df, rng); }

// ---------------------------------------------------------------------------
// Generalized inverse Gaussian
// ---------------------------------------------------------------------------

namespace detail {

inline double gig_mode(double lambda, double omega) {
    if (lambda >= 1.0) return (std::sqrt((lambda - 1.0) * (lambda - 1.0) + omega * omega) + (lambda - 1.0)) / omega;
    return omega / (std::sqrt((1.0 - lambda) * (1.0 - lambda) + omega * omega) + (1.0 - lambda));
}

// Ratio-of-uniforms without mode shift (Hoermann & Leydold 2014, Alg. 1).
inline double gig_rou_noshift(double lambda, double omega, RngStream& rng) {
    const double t = 0.5 * (lambda - 1.0);
    const double s = 0.25 * omega;
    const double xm = gig_mode(lambda, omega);
    const double nc = t * std::log(xm) - s * (xm + 1.0 / xm);
    const double ym = ((lambda + 1.0) + std::sqrt((lambda + 1.0) * (lambda + 1.0) + omega * omega)) / omega;
    const double um = std::exp(0.5 * (lambda + 1.0) * std::log(ym) - s * (ym + 1.0 / ym) - nc);
    for (long k = 0; k < kMaxRejections; ++k) {
        const double u = um * rng.uniform();
        const double v = rng.uniform();
        const double x = u / v;
        if (std::log(v) <= t * std::log(x) - s * (x + 1.0 / x) - nc) return x;
    }
    throw NumericError("GIG: ratio-of-uniforms did not accept");
}

// Ratio-of-uniforms with mode shift (Alg. 3), for lambda > 2 or omega > 3.
inline double gig_rou_shift(double lambda, double omega, RngStream& rng) {
    const double t = 0.5 * (lambda - 1.0);
    const double s = 0.25 * omega;
    const double xm = gig_mode(lambda, omega);
    const double nc = t * std::log(xm) - s * (xm + 1.0 / xm);
    const double a = -(2.0 * (lambda + 1.0) / omega + xm);
    const double b = (2.0 * (lambda - 1.0) * xm / omega - 1.0);
    const double c = xm;
    const double p = b - a * a / 3.0;
    const double q = (2.0 * a * a * a) / 27.0 - (a * b) / 3.0 + c;
    const double fi = std::acos(-q / (2.0 * std::sqrt(-(p * p * p) / 27.0)));
    const double fak = 2.0 * std::sqrt(-p / 3.0);
    const double y1 = fak * std::cos(fi / 3.0) - a / 3.0;
    const double y2 = fak * std::cos(fi / 3.0 + 4.0 / 3.0 * std::numbers::pi) - a / 3.0;
    const double uplus = (y1 - xm) * std::exp(t * std::log(y1) - s * (y1 + 1.0 / y1) - nc);
    const double uminus = (y2 - xm) * std::exp(t * std::log(y2) - s * (y2 + 1.0 / y2) - nc);
    for (long k = 0; k < kMaxRejections; ++k) {
        const double u = uminus + rng.uniform() * (uplus - uminus);
        const double v = rng.uniform();
        const double x = u / v + xm;
        if (x <= 0.0) continue;
        if (std::log(v) <= t * std::log(x) - s * (x + 1.0 / x) - nc) return x;
    }
    throw NumericError("GIG: shifted ratio-of-uniforms did not accept");
}

// Rejection from a piecewise dominating density for 0 <= lambda < 1 and
// small omega, where the density is not T-concave (Alg. 2).
inline double gig_concave_free(double lambda, double omega, RngStream& rng) {
    const double xm = gig_mode(lambda, omega);
    const double x0 = omega / (1.0 - lambda);
    const double k0 = std::exp((lambda - 1.0) * std::log(xm) - 0.5 * omega * (xm + 1.0 / xm));
    double area[3];
    area[0] = k0 * x0;
    double k1 = 0.0;
    double k2 = 0.0;
    if (x0 >= 2.0 / omega) {
        k1 = 0.0;
        area[1] = 0.0;
        k2 = std::pow(x0, lambda - 1.0);
        area[2] = k2 * 2.0 * std::exp(-omega * x0 / 2.0) / omega;
    } else {
        k1 = std::exp(-omega);
        area[1] = (lambda == 0.0) ? k1 * std::log(2.0 / (omega * omega))
                                  : k1 / lambda * (std::pow(2.0 / omega, lambda) - std::pow(x0, lambda));
        k2 = std::pow(2.0 / omega, lambda - 1.0);
        area[2] = k2 * 2.0 * std::exp(-1.0) / omega;
    }
    const double total = area[0] + area[1] + area[2];
    for (long k = 0; k < kMaxRejections; ++k) {
        double v = total * rng.uniform();
        double x = 0.0;
        double hx = 0.0;
        if (v <= area[0]) {
            x = x0 * v / area[0];
            hx = k0;
        } else if ((v -= area[0]) <= area[1]) {
            if (lambda == 0.0) {
                x = omega * std::exp(std::exp(omega) * v);
                hx = k1 / x;
            } else {
                x = std::pow(std::pow(x0, lambda) + (lambda / k1 * v), 1.0 / lambda);
                hx = k1 * std::pow(x, lambda - 1.0);
            }
        } else {
            v -= area[1];
            const double start = std::max(x0, 2.0 / omega);
            x = -2.0 / omega * std::log(std::exp(-omega / 2.0 * start) - omega / (2.0 * k2) * v);
            hx = k2 * std::exp(-omega / 2.0 * x);
        }
        const double u = rng.uniform() * hx;
        if (std::log(u) <= (lambda - 1.0) * std::log(x) - omega / 2.0 * (x + 1.0 / x)) return x;
    }
    throw NumericError("GIG: piecewise rejection did not accept");
}

} // namespace detail

/// GIG(p, a, b) with density proportional to x^(p-1) exp(-(a x + b / x) / 2).
/// The boundary families a = 0 (p < 0, inverse gamma) and b = 0 (p > 0,
/// gamma) are accepted.
inline double draw_gig(double p, double a, double b, RngStream& rng) {
    if (!std::isfinite(p) || !std::isfinite(a) || !std::isfinite(b) || a < 0.0 || b < 0.0) {
        throw DomainError("GIG: parameters must be finite with a >= 0 and b >= 0");
    }
    if (b == 0.0) {
        if (!(p > 0.0) || !(a > 0.0)) throw DomainError("GIG: b = 0 requires p > 0 and a > 0");
        return draw_gamma(p, rng) * 2.0 / a;
    }
    if (a == 0.0) {
        if (!(p < 0.0)) throw DomainError("GIG: a = 0 requires p < 0 and b > 0");
        return b / (2.0 * draw_gamma(-p, rng));
    }
    const double lambda = std::abs(p);
    const double omega = std::sqrt(a * b);
    const double scale = std::sqrt(b / a);
    double x = 0.0;
    if (lambda > 2.0 || omega > 3.0) {
        x = detail::gig_rou_shift(lambda, omega, rng);
    } else if (lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2) {
        x = detail::gig_rou_noshift(lambda, omega, rng);
    } else {
        x = detail::gig_concave_free(lambda, omega, rng);
    }
    return p < 0.0 ? scale / x : scale * x;
}

// ---------------------------------------------------------------------------
// Gaussian posteriors in precision form
// ---------------------------------------------------------------------------

/// Cholesky factor of a posterior precision, with the one-shot jitter policy:
/// on failure add 1e-10 * mean(diag) to the diagonal once, then give up.
class PrecisionFactor {
public:
    PrecisionFactor() = default;
    explicit PrecisionFactor(const Eigen::MatrixXd& precision, const std::string& what = "precision") {
        llt_.compute(precision);
        if (llt_.info() != Eigen::Success) {
            Eigen::MatrixXd jittered = precision;
            const double bump = 1e-10 * precision.diagonal().mean();
            jittered.diagonal().array() += bump;
            llt_.compute(jittered);
            jittered_ = true;
            if (llt_.info() != Eigen::Success || !std::isfinite(bump)) {
                throw NumericError(what + ": Cholesky factorization failed after jitter (matrix of size " +
                                   std::to_string(precision.rows()) + " is not positive definite)");
            }
        }
    }

    [[nodiscard]] Eigen::Index size() const { return llt_.matrixL().rows(); }
    [[nodiscard]] bool jittered() const noexcept { return jittered_; }

    [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const { return llt_.solve(rhs); }

    /// mean + L^{-T} z with z ~ N(0, I): a draw from N(Q^{-1} linear, Q^{-1}).
    [[nodiscard]] Eigen::VectorXd draw(const Eigen::VectorXd& linear, RngStream& rng,
                                       Eigen::VectorXd* mean_out = nullptr) const {
        Eigen::VectorXd mean = llt_.solve(linear);
        Eigen::VectorXd z(mean.size());
        for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = rng.normal();
        Eigen::VectorXd noise = llt_.matrixU().solve(z);
        if (mean_out != nullptr) *mean_out = mean;
        return mean + noise;
    }

    [[nodiscard]] Eigen::MatrixXd covariance() const {
        const auto n = size();
        return llt_.solve(Eigen::MatrixXd::Identity(n, n));
    }

private:
    Eigen::LLT<Eigen::MatrixXd> llt_;
    bool jittered_ = false;
};

struct GaussianDraw {
    Eigen::VectorXd draw;
    Eigen::VectorXd mean;
};

/// One draw from N(m, V) with V = (XtX + P0)^{-1} and m = V (Xty + P0 m0).
inline GaussianDraw draw_gaussian_posterior(const Eigen::MatrixXd& xtx, const Eigen::VectorXd& xty,
                                            const Eigen::VectorXd& prior_mean,
                                            const Eigen::MatrixXd& prior_precision, RngStream& rng) {
    const Eigen::MatrixXd precision = xtx + prior_precision;
    const Eigen::VectorXd linear = xty + prior_precision * prior_mean;
    PrecisionFactor factor(precision, "gaussian posterior");
    GaussianDraw out;
    out.draw = factor.draw(linear, rng, &out.mean);
    return out;
}

/// Sigma ~ inverse-Wishart(df, scale): density proportional to
/// |Sigma|^{-(df+p+1)/2} exp(-tr(scale Sigma^{-1}) / 2). Bartlett construction.
inline Eigen::MatrixXd draw_inverse_wishart(double df, const Eigen::MatrixXd& scale, RngStream& rng) {
    const auto p = scale.rows();
    if (!(df > static_cast<double>(p) - 1.0)) throw DomainError("inverse-Wishart: df must exceed dim - 1");
    const Eigen::MatrixXd scale_inv = PrecisionFactor(scale, "inverse-Wishart scale").covariance();
    Eigen::LLT<Eigen::MatrixXd> llt(scale_inv);
    const Eigen::MatrixXd chol = llt.matrixL();
    Eigen::MatrixXd bartlett = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
        bartlett(i, i) = std::sqrt(draw_chi_square(df - static_cast<double>(i), rng));
        for (Eigen::Index j = 0; j < i; ++j) bartlett(i, j) = rng.normal();
    }
    const Eigen::MatrixXd root = chol * bartlett;
    const Eigen::MatrixXd wishart = root * root.transpose();
    return PrecisionFactor(wishart, "Wishart draw").covariance();
}

} // namespace bundlechoice

#endif // BUNDLECHOICE_KERNELS_HPP
