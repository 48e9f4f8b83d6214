#ifndef RMLHMM_EVALUATION_HPP_INCLUDED
#define RMLHMM_EVALUATION_HPP_INCLUDED

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "parallel.hpp"
#include "filter.hpp"
#include "model.hpp"
#include "params.hpp"
#include "rml.hpp"
#include "rng.hpp"

namespace rmlhmm
{
// Statistics helpers ------------------------------------------------------------

/// Mean and batch-means standard error of a dependent series.
struct BatchMeans
{
    double mean    = 0.0;
    double std_err = 0.0;
};

inline BatchMeans batch_means(std::span<const double> xs, std::size_t n_batches = 20)
{
    BatchMeans out;
    if (xs.empty())
        return out;
    double total = 0.0;
    for (double x : xs)
        total += x;
    out.mean = total / static_cast<double>(xs.size());

    std::size_t b    = std::min(n_batches, xs.size());
    std::size_t size = xs.size() / b;
    if (b < 2)
        return out;
    std::vector<double> means(b, 0.0);
    for (std::size_t i = 0; i < b; ++i)
    {
        double s = 0.0;
        for (std::size_t j = i * size; j < (i + 1) * size; ++j)
            s += xs[j];
        means[i] = s / static_cast<double>(size);
    }
    double mbar = 0.0;
    for (double m : means)
        mbar += m;
    mbar /= static_cast<double>(b);
    double var = 0.0;
    for (double m : means)
        var += (m - mbar) * (m - mbar);
    var /= static_cast<double>(b - 1);
    out.std_err = std::sqrt(var / static_cast<double>(b));
    return out;
}

/// Ordinary least squares y ≈ intercept + slope·x.
struct LineFit
{
    double slope     = 0.0;
    double intercept = 0.0;
    double r2        = 0.0;
    std::size_t n    = 0;
};

inline LineFit fit_line(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2)
        throw ValidationError("line fit needs at least two paired points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0))
        throw ValidationError("line fit needs at least two distinct abscissae");
    LineFit f;
    f.slope     = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2        = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    f.n         = x.size();
    return f;
}

// Likelihood and gradient estimators ----------------------------------------

/// f̂(θ): mean φ increment after burn-in on data from the true model.
struct LikelihoodEstimate
{
    double value        = 0.0;
    std::size_t n_used  = 0;
    std::size_t burnin  = 0;
    double std_err      = 0.0;
    std::uint64_t stream = 0; // fingerprint of the observations consumed
};

/// ∇̂f(θ): mean score increment after burn-in at frozen θ, V₀ = 0.
struct GradEstimate
{
    Vector value;
    std::size_t n_used = 0;
    std::size_t burnin = 0;
    Vector std_err;
    std::uint64_t stream = 0;
};

/// 10% of n, at least 1000, and always leaving one retained step.
inline std::size_t default_burnin(std::size_t n)
{
    std::size_t b = std::max<std::size_t>(n / 10, 1000);
    return n > 0 ? std::min(b, n - 1) : 0;
}

namespace detail
{
    inline void check_run_lengths(std::size_t n, std::size_t burnin, std::size_t size)
    {
        if (!(n > burnin))
            throw ValidationError("estimator needs n > burnin");
        if (size != n)
            throw ValidationError("observation stream length does not match n");
    }
} // namespace detail

template <RFamily Fam>
LikelihoodEstimate estimate_loglik(const Fam& family, const Vector& theta, std::span<const Observation> ys,
                                   std::size_t burnin, std::size_t n_batches = 20)
{
    detail::check_run_lengths(ys.size(), burnin, ys.size());
    FrozenFilter<Fam> filt(family, theta);
    std::vector<double> incs;
    incs.reserve(ys.size() - burnin);
    for (std::size_t i = 0; i < ys.size(); ++i)
    {
        double p = filt.advance_filter(ys[i]);
        if (i >= burnin)
            incs.push_back(p);
    }
    auto bm = batch_means(incs, n_batches);
    return {bm.mean, ys.size(), burnin, bm.std_err, fingerprint(std::vector<Observation>(ys.begin(), ys.end()))};
}

/// Samples n observations from the true model (stream "trajectory" of `seed`).
template <RFamily Fam>
LikelihoodEstimate estimate_loglik(const Fam& family, const Vector& theta, const TrueModel& model, std::size_t n,
                                   std::size_t burnin, std::uint64_t seed)
{
    detail::check_run_lengths(n, burnin, n);
    auto ys = sample_trajectory(model, n, seed).observation_values();
    return estimate_loglik(family, theta, std::span<const Observation>(ys), burnin);
}

template <RFamily Fam>
GradEstimate estimate_grad(const Fam& family, const Vector& theta, std::span<const Observation> ys,
                           std::size_t burnin, std::size_t n_batches = 20)
{
    detail::check_run_lengths(ys.size(), burnin, ys.size());
    const auto d = static_cast<Eigen::Index>(family.dim());
    FrozenFilter<Fam> filt(family, theta);
    std::vector<std::vector<double>> incs(static_cast<std::size_t>(d));
    for (auto& v : incs)
        v.reserve(ys.size() - burnin);
    for (std::size_t i = 0; i < ys.size(); ++i)
    {
        auto inc = filt.advance(ys[i]);
        if (i >= burnin)
            for (Eigen::Index k = 0; k < d; ++k)
                incs[static_cast<std::size_t>(k)].push_back(inc.score[k]);
    }
    GradEstimate g;
    g.value.resize(d);
    g.std_err.resize(d);
    for (Eigen::Index k = 0; k < d; ++k)
    {
        auto bm      = batch_means(incs[static_cast<std::size_t>(k)], n_batches);
        g.value[k]   = bm.mean;
        g.std_err[k] = bm.std_err;
    }
    g.n_used = ys.size();
    g.burnin = burnin;
    g.stream = fingerprint(std::vector<Observation>(ys.begin(), ys.end()));
    return g;
}

template <RFamily Fam>
GradEstimate estimate_grad(const Fam& family, const Vector& theta, const TrueModel& model, std::size_t n,
                           std::size_t burnin, std::uint64_t seed)
{
    detail::check_run_lengths(n, burnin, n);
    auto ys = sample_trajectory(model, n, seed).observation_values();
    return estimate_grad(family, theta, std::span<const Observation>(ys), burnin);
}

// Finite differences -----------------------------------------------------------

/// Central differences (f(θ + h e_k) - f(θ - h e_k)) / 2h of a scalar function.
template <typename Fn>
Vector central_difference(Fn&& f, const Vector& theta, double h)
{
    if (!(h > 0.0))
        throw ValidationError("finite-difference step must be > 0");
    Vector g(theta.size());
    for (Eigen::Index k = 0; k < theta.size(); ++k)
    {
        Vector tp = theta, tm = theta;
        tp[k] += h;
        tm[k] -= h;
        g[k] = (f(tp) - f(tm)) / (2.0 * h);
    }
    return g;
}

/// Central differences of a vector- or matrix-valued function; entry k is the partial along e_k.
template <typename Fn>
auto central_difference_tensor(Fn&& f, const Vector& theta, double h)
{
    using R = std::decay_t<decltype(f(theta))>;
    std::vector<R> out;
    out.reserve(static_cast<std::size_t>(theta.size()));
    for (Eigen::Index k = 0; k < theta.size(); ++k)
    {
        Vector tp = theta, tm = theta;
        tp[k] += h;
        tm[k] -= h;
        out.push_back(((f(tp) - f(tm)) / (2.0 * h)).eval());
    }
    return out;
}

/// Finite-difference gradient of f̂ under common random numbers.
struct FdGradient
{
    Vector value;
    Vector std_err; // batch-means error of the differenced increments
    std::vector<std::uint64_t> streams; // one fingerprint per evaluation (2·d_θ)
};

/// Every f̂ evaluation at θ ± h e_k consumes the same observation stream `ys`.
template <RFamily Fam>
FdGradient fd_grad(const Fam& family, const Vector& theta, std::span<const Observation> ys, std::size_t burnin,
                   double h, std::size_t n_batches = 20)
{
    if (!(h > 0.0))
        throw ValidationError("finite-difference step must be > 0");
    detail::check_run_lengths(ys.size(), burnin, ys.size());
    const auto d = theta.size();
    FdGradient out;
    out.value.resize(d);
    out.std_err.resize(d);
    const std::uint64_t fp = fingerprint(std::vector<Observation>(ys.begin(), ys.end()));
    for (Eigen::Index k = 0; k < d; ++k)
    {
        Vector tp = theta, tm = theta;
        tp[k] += h;
        tm[k] -= h;
        FrozenFilter<Fam> fp_filt(family, tp), fm_filt(family, tm);
        std::vector<double> diffs;
        diffs.reserve(ys.size() - burnin);
        for (std::size_t i = 0; i < ys.size(); ++i)
        {
            double a = fp_filt.advance_filter(ys[i]);
            double b = fm_filt.advance_filter(ys[i]);
            if (i >= burnin)
                diffs.push_back((a - b) / (2.0 * h));
        }
        auto bm       = batch_means(diffs, n_batches);
        out.value[k]  = bm.mean;
        out.std_err[k] = bm.std_err;
        out.streams.push_back(fp);
        out.streams.push_back(fp);
    }
    return out;
}

template <RFamily Fam>
FdGradient fd_grad(const Fam& family, const Vector& theta, const TrueModel& model, std::size_t n, std::size_t burnin,
                   std::uint64_t seed, double h)
{
    detail::check_run_lengths(n, burnin, n);
    auto ys = sample_trajectory(model, n, seed).observation_values();
    return fd_grad(family, theta, std::span<const Observation>(ys), burnin, h);
}

// Forgetting -------------------------------------------------------------------

/// Gaps g_k = ‖G^{0:k}(u1) - G^{0:k}(u2)‖, k = 1..n, and the fitted log-gap slope.
struct ForgettingResult
{
    std::vector<double> gaps;
    double slope     = 0.0;
    double intercept = 0.0;

    /// exp(slope): the fitted per-step contraction factor.
    double rate() const { return std::exp(slope); }
};

inline constexpr double forgetting_gap_floor = 1e-15;

template <RFamily Fam>
ForgettingResult forgetting_probe(const Fam& family, const Vector& theta, const FilterState& u1,
                                  const FilterState& u2, std::span<const Observation> ys)
{
    detail::check_filter_input(u1.u, family.n_states());
    detail::check_filter_input(u2.u, family.n_states());
    if (ys.size() < 2)
        throw ValidationError("forgetting probe needs at least two observations");
    ForgettingResult out;
    out.gaps.reserve(ys.size());
    Vector a = u1.u, b = u2.u;
    std::vector<double> ks, logs;
    for (std::size_t i = 0; i < ys.size(); ++i)
    {
        a = detail::evaluate_kernel(family, theta, a, ys[i], false).G;
        b = detail::evaluate_kernel(family, theta, b, ys[i], false).G;
        double g = (a - b).norm();
        out.gaps.push_back(g);
        ks.push_back(static_cast<double>(i + 1));
        logs.push_back(std::log(std::max(g, forgetting_gap_floor)));
    }
    auto fit      = fit_line(ks, logs);
    out.slope     = fit.slope;
    out.intercept = fit.intercept;
    return out;
}

template <RFamily Fam>
ForgettingResult forgetting_probe(const Fam& family, const Vector& theta, const TrueModel& model,
                                  const FilterState& u1, const FilterState& u2, std::size_t n, std::uint64_t seed)
{
    auto ys = sample_trajectory(model, n, seed).observation_values();
    return forgetting_probe(family, theta, u1, u2, std::span<const Observation>(ys));
}

// Convergence-rate fitting -----------------------------------------------------

/// Exponents r̂, p̂, q̂ implied by a Lojasiewicz exponent μ and schedule exponent r.
struct RateExponents
{
    double r_hat;
    double p_hat;
    double q_hat;
};

inline RateExponents rate_exponents(double mu, double r)
{
    constexpr double inf = std::numeric_limits<double>::infinity();
    RateExponents e;
    e.r_hat = mu < 2.0 ? 1.0 / (2.0 - mu) : inf;
    e.p_hat = mu * std::min(r, e.r_hat);
    e.q_hat = std::min((e.p_hat - 1.0) / 2.0, r - 1.0);
    return e;
}

struct RateCheckpoint
{
    std::size_t n;
    GradEstimate grad;
};

/// Slopes of log‖∇̂f(θ_n)‖² and log‖θ_n − θ_final‖ against log γ_n.
struct RateFit
{
    bool degenerate = false; // every checkpoint gradient was inside its noise floor
    double slope     = 0.0;  // gradient slope (compare with −p̂)
    double intercept = 0.0;
    double r2        = 0.0;
    std::optional<double> theta_slope; // compare with −q̂
    std::size_t n_lo = 0;
    std::size_t n_hi = 0;
    std::size_t n_points = 0;
    double r_max     = 0.0;
};

/// Fits over checkpoints with n in [n_lo, n_hi]; each checkpoint's n must be a trace record.
inline RateFit rate_fit(const RmlTrace& trace, std::span<const RateCheckpoint> checkpoints, std::size_t n_lo,
                        std::size_t n_hi)
{
    if (!(n_lo < n_hi))
        throw ValidationError("rate fit window needs n_lo < n_hi");
    RateFit out;
    out.n_lo  = n_lo;
    out.n_hi  = n_hi;
    out.r_max = trace.schedule.r_max();

    const Vector& theta_final = trace.final_state.theta.size() ? trace.final_state.theta : trace.records.back().theta;
    std::vector<double> lg, lgrad, lg_theta, ltheta;
    bool any_signal = false;
    for (const auto& cp : checkpoints)
    {
        if (cp.n < n_lo || cp.n > n_hi)
            continue;
        auto it = std::find_if(trace.records.begin(), trace.records.end(), [&](const auto& r) { return r.n == cp.n; });
        if (it == trace.records.end())
            throw ValidationError("checkpoint n=" + std::to_string(cp.n) + " is not a trace record");
        double g2 = cp.grad.value.squaredNorm();
        double noise = cp.grad.std_err.size() ? cp.grad.std_err.squaredNorm() : 0.0;
        if (g2 > noise)
            any_signal = true;
        if (!(g2 > 0.0))
            continue;
        lg.push_back(std::log(it->gamma));
        lgrad.push_back(std::log(g2));
        double dt = (it->theta - theta_final).norm();
        if (dt > 0.0)
        {
            lg_theta.push_back(std::log(it->gamma));
            ltheta.push_back(std::log(dt));
        }
    }
    out.n_points = lg.size();
    if (out.n_points < 5)
        throw ValidationError("rate fit needs at least 5 checkpoints in the window");
    if (!any_signal)
    {
        out.degenerate = true;
        return out;
    }
    auto fit      = fit_line(lg, lgrad);
    out.slope     = fit.slope;
    out.intercept = fit.intercept;
    out.r2        = fit.r2;
    if (lg_theta.size() >= 2)
        out.theta_slope = fit_line(lg_theta, ltheta).slope;
    return out;
}

// Lojasiewicz exponent probe ---------------------------------------------------

/// Fit of log|Δf| = log M + μ log‖∇f‖ over points in a ball; diagnostic only.
struct LojasiewiczResult
{
    bool inconclusive = true;
    double mu     = 0.0;
    double log_m  = 0.0;
    double r2     = 0.0;
    std::size_t n_pairs = 0;
};

inline constexpr double lojasiewicz_min_r2 = 0.8;

/// One sampled point: f difference and gradient norm, with their noise levels.
struct LojasiewiczSample
{
    double delta_f;
    double delta_f_err;
    double grad_norm;
    double grad_err;
};

/// Fits the pairs; samples whose |Δf| or ‖∇f‖ sit inside 2× their noise are dropped.
inline LojasiewiczResult lojasiewicz_fit(std::span<const LojasiewiczSample> samples)
{
    std::vector<double> lx, ly;
    for (const auto& s : samples)
    {
        double df = std::abs(s.delta_f);
        if (!(df > 2.0 * s.delta_f_err) || !(s.grad_norm > 2.0 * s.grad_err) || !(df > 0.0) || !(s.grad_norm > 0.0))
            continue;
        lx.push_back(std::log(s.grad_norm));
        ly.push_back(std::log(df));
    }
    LojasiewiczResult out;
    out.n_pairs = lx.size();
    if (lx.size() < 3)
        return out;
    LineFit fit;
    try
    {
        fit = fit_line(lx, ly);
    }
    catch (const ValidationError&)
    {
        return out;
    }
    out.mu           = fit.slope;
    out.log_m        = fit.intercept;
    out.r2           = fit.r2;
    out.inconclusive = fit.r2 < lojasiewicz_min_r2;
    return out;
}

/// Uniform draw from the Euclidean ball of `radius` around `center`.
inline Vector sample_ball(const Vector& center, double radius, Rng& rng)
{
    Vector dir(center.size());
    for (Eigen::Index i = 0; i < dir.size(); ++i)
        dir[i] = rng.normal();
    double norm = dir.norm();
    double rho  = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(center.size()));
    return center + dir * (rho / norm);
}

/// Generic probe: `value(θ)` returns (f, err) and `grad(θ)` returns (∇f, per-coordinate err).
template <typename ValueFn, typename GradFn>
LojasiewiczResult lojasiewicz_probe(const Vector& center, double radius, std::size_t n_samples, Rng rng,
                                    ValueFn&& value, GradFn&& grad)
{
    if (!(radius > 0.0) || n_samples < 3)
        throw ValidationError("lojasiewicz probe needs radius > 0 and at least 3 samples");
    auto [f0, f0_err] = value(center);
    std::vector<LojasiewiczSample> samples;
    samples.reserve(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i)
    {
        Vector t          = sample_ball(center, radius, rng);
        auto [f1, f1_err] = value(t);
        auto [g, g_err]   = grad(t);
        samples.push_back({f1 - f0, std::hypot(f0_err, f1_err), g.norm(), Vector(g_err).norm()});
    }
    return lojasiewicz_fit(samples);
}

/// Paired-increment estimate of f̂(θa) − f̂(θb) on one stream (common random numbers).
template <RFamily Fam>
BatchMeans loglik_difference(const Fam& family, const Vector& theta_a, const Vector& theta_b,
                             std::span<const Observation> ys, std::size_t burnin, std::size_t n_batches = 20)
{
    detail::check_run_lengths(ys.size(), burnin, ys.size());
    FrozenFilter<Fam> fa(family, theta_a), fb(family, theta_b);
    std::vector<double> diffs;
    diffs.reserve(ys.size() - burnin);
    for (std::size_t i = 0; i < ys.size(); ++i)
    {
        double a = fa.advance_filter(ys[i]);
        double b = fb.advance_filter(ys[i]);
        if (i >= burnin)
            diffs.push_back(a - b);
    }
    return batch_means(diffs, n_batches);
}

/// HMM probe around θ̂: every Δf and ∇̂f uses the same stream `ys`. Points are
/// projected onto `box` when one is given. Samples are evaluated in parallel.
template <RFamilyWithDomain Fam>
LojasiewiczResult lojasiewicz_probe(const Fam& family, const Vector& theta_hat, std::span<const Observation> ys,
                                    std::size_t burnin, double radius, std::size_t n_samples, Rng rng,
                                    const ParamBox* box)
{
    if (!(radius > 0.0) || n_samples < 3)
        throw ValidationError("lojasiewicz probe needs radius > 0 and at least 3 samples");
    std::vector<Vector> points;
    points.reserve(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i)
    {
        Vector t = sample_ball(theta_hat, radius, rng);
        t        = box ? family.project(t, *box) : family.renormalize(t);
        family.check_domain(t);
        points.push_back(std::move(t));
    }
    auto samples = parallel_map<LojasiewiczSample>(n_samples, [&](std::size_t i) {
        auto df = loglik_difference(family, points[i], theta_hat, ys, burnin);
        auto g  = estimate_grad(family, points[i], ys, burnin);
        return LojasiewiczSample{df.mean, df.std_err, g.value.norm(), g.std_err.norm()};
    });
    return lojasiewicz_fit(samples);
}

} // namespace rmlhmm

#endif // RMLHMM_EVALUATION_HPP_INCLUDED
