#ifndef RMLHMM_TEST_SUPPORT_HPP_INCLUDED
#define RMLHMM_TEST_SUPPORT_HPP_INCLUDED

// Shared fixtures: the standard 2-state model, random parameters per kind and
// tolerance helpers for finite-difference comparisons.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <rmlhmm/rmlhmm.hpp>

namespace rmlhmm::testing
{
/// p = [[0.9,0.1],[0.1,0.9]], q = [[0.8,0.2],[0.2,0.8]] in the exponential parameterization.
inline Vector standard_theta()
{
    Vector t(8);
    t << std::log(0.9), std::log(0.1), std::log(0.1), std::log(0.9), std::log(0.8), std::log(0.2), std::log(0.2),
        std::log(0.8);
    return t;
}

inline Family standard_family() { return Family::discrete(Kind::DiscreteExponential, 2, 2); }

inline TrueModel standard_model()
{
    auto f = standard_family();
    return f.true_model(f.wrap(standard_theta()));
}

/// Mixture catalog with every component positive on [-3, 3].
inline std::vector<std::vector<Component>> test_components(std::size_t n_states)
{
    std::vector<std::vector<Component>> comps;
    for (std::size_t x = 0; x < n_states; ++x)
    {
        double shift = static_cast<double>(x) - 0.5 * static_cast<double>(n_states - 1);
        comps.push_back({Component::gaussian(shift, 0.8 + 0.1 * static_cast<double>(x)), Component::uniform(-3.0, 3.0),
                         Component::truncated_exponential(1.0 + 0.5 * static_cast<double>(x), -3.0, 3.0)});
    }
    return comps;
}

inline Family make_family(Kind kind, std::size_t nx = 2, std::size_t nobs = 3)
{
    switch (kind)
    {
    case Kind::MixtureWeights:
        return Family::mixture(nx, test_components(nx));
    case Kind::GaussianObs:
        return Family::gaussian(nx, 1e-3);
    default:
        return Family::discrete(kind, nx, nobs);
    }
}

inline Vector random_simplex(Rng& rng, Eigen::Index n, double floor = 0.05)
{
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v[i] = floor + rng.uniform();
    return v / v.sum();
}

/// A random interior point of Θ for the family.
inline Vector random_theta(const Family& f, Rng& rng)
{
    const auto n  = static_cast<Eigen::Index>(f.n_states());
    const auto nb = static_cast<Eigen::Index>(f.n_obs());
    Vector t(static_cast<Eigen::Index>(f.dim()));
    switch (f.kind())
    {
    case Kind::DiscreteNatural:
        for (Eigen::Index x = 0; x < n; ++x)
            t.segment(x * n, n) = random_simplex(rng, n);
        for (Eigen::Index x = 0; x < n; ++x)
            t.segment(n * n + x * nb, nb) = random_simplex(rng, nb);
        break;
    case Kind::DiscreteTrigonometric:
        for (Eigen::Index i = 0; i < t.size(); ++i)
            t[i] = rng.uniform(0.2, std::numbers::pi / 2 - 0.2);
        break;
    case Kind::DiscreteExponential:
        for (Eigen::Index i = 0; i < t.size(); ++i)
            t[i] = rng.uniform(-2.0, 2.0);
        break;
    case Kind::MixtureWeights:
        for (Eigen::Index i = 0; i < n * n; ++i)
            t[i] = rng.uniform(-2.0, 2.0);
        for (Eigen::Index x = 0; x < n; ++x)
            t.segment(n * n + x * nb, nb) = random_simplex(rng, nb);
        break;
    case Kind::GaussianObs:
        for (Eigen::Index i = 0; i < n * n; ++i)
            t[i] = rng.uniform(-2.0, 2.0);
        for (Eigen::Index x = 0; x < n; ++x)
        {
            t[n * n + x]     = 0.5 + 1.0 * static_cast<double>(x) + 0.8 * rng.uniform(); // separated precisions
            t[n * n + n + x] = rng.uniform(-2.0, 2.0);
        }
        break;
    }
    return t;
}

inline Observation random_observation(const Family& f, Rng& rng)
{
    if (is_discrete(f.kind()))
        return static_cast<Observation>(rng.categorical(Vector::Ones(static_cast<Eigen::Index>(f.n_obs()))));
    if (f.kind() == Kind::GaussianObs)
        return 1.5 * rng.normal();
    return rng.uniform(-2.9, 2.9);
}

inline std::vector<Observation> random_observations(const Family& f, Rng& rng, std::size_t n)
{
    std::vector<Observation> ys(n);
    for (auto& y : ys)
        y = random_observation(f, rng);
    return ys;
}

/// max |a - b| / max(1, |a|, |b|) over entries.
template <typename A, typename B>
double max_rel_error(const A& a, const B& b)
{
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i)
    {
        double x = a.reshaped()[i], y = b.reshaped()[i];
        worst    = std::max(worst, std::abs(x - y) / std::max({1.0, std::abs(x), std::abs(y)}));
    }
    return worst;
}

/// The true-scale R matrix.
inline Matrix r_unscaled(const Family& f, const Vector& theta, Observation y)
{
    auto r = f.r_matrix(theta, y);
    return r.entries * std::exp(r.log_scale);
}

/// A synthetic RFamily with a fixed R that does not depend on θ.
struct FixedR
{
    Matrix r;
    std::size_t d = 1;

    std::size_t n_states() const { return static_cast<std::size_t>(r.rows()); }
    std::size_t dim() const { return d; }
    RMatrix r_eval(const Vector&, Observation y, RGradient* g) const
    {
        if (g)
        {
            g->partials.assign(d, Matrix::Zero(r.rows(), r.cols()));
            g->log_scale = 0.0;
        }
        return {r, 0.0, y};
    }
    Vector project(const Vector& t, const ParamBox& box) const { return t.cwiseMax(box.lower).cwiseMin(box.upper); }
    Vector renormalize(const Vector& t) const { return t; }
    void check_domain(const Vector&) const {}
    void validate_box(const ParamBox&) const {}
};

inline const std::vector<Kind>& gradient_kinds()
{
    static const std::vector<Kind> kinds{Kind::DiscreteExponential, Kind::DiscreteTrigonometric, Kind::MixtureWeights,
                                         Kind::GaussianObs};
    return kinds;
}

inline const std::vector<Kind>& all_kinds()
{
    static const std::vector<Kind> kinds{Kind::DiscreteNatural, Kind::DiscreteExponential,
                                         Kind::DiscreteTrigonometric, Kind::MixtureWeights, Kind::GaussianObs};
    return kinds;
}

} // namespace rmlhmm::testing

#endif // RMLHMM_TEST_SUPPORT_HPP_INCLUDED
