#ifndef RMLHMM_FILTER_HPP_INCLUDED
#define RMLHMM_FILTER_HPP_INCLUDED

#include <cmath>
#include <concepts>
#include <span>
#include <sstream>
#include <utility>

#include "errors.hpp"
#include "format.hpp"
#include "model.hpp"
#include "params.hpp"

namespace rmlhmm
{
/// Anything that can evaluate R_θ(y) (up to a positive scale) and its θ-gradient.
template <typename F>
concept RFamily = requires(const F& f, const Vector& theta, Observation y, RGradient* g) {
    { f.n_states() } -> std::convertible_to<std::size_t>;
    { f.dim() } -> std::convertible_to<std::size_t>;
    { f.r_eval(theta, y, g) } -> std::same_as<RMatrix>;
};

/// Prediction filter U: a point on the N_x-simplex.
struct FilterState
{
    Vector u;

    static FilterState uniform(std::size_t n)
    {
        return {Vector::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n))};
    }
};

/// Tangent filter V: d_θ × N_x, row k = ∂U/∂θ_k. Rows sum to zero.
struct FilterDerivative
{
    Matrix v;

    static FilterDerivative zero(std::size_t d, std::size_t n)
    {
        return {Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n))};
    }
};

/// F_θ(u, V, y), length d_θ.
using ScoreIncrement = Vector;

/// Normalizer floor below which the filter is declared degenerate (after scaling).
inline constexpr double degeneracy_floor = 1e-300;

/// Everything one observation contributes, from a single R evaluation.
///
/// Orientation follows the row-vector convention of the tangent recursion:
/// grad_theta_G is d_θ × N_x (row k = ∂G/∂θ_k) and grad_u_G(j, i) = ∂G_i/∂u_j,
/// so that H = grad_theta_G + V·grad_u_G and F = grad_theta_phi + V·grad_u_phi.
struct KernelEval
{
    double phi = 0.0;
    Vector G;
    Vector grad_theta_phi;
    Vector grad_u_phi;
    Matrix grad_theta_G;
    Matrix grad_u_G;
};

namespace detail
{
    [[noreturn]] inline void throw_degenerate(const Vector& theta, Observation y, double s)
    {
        std::ostringstream msg;
        msg << "filter degeneracy: normalizer " << s << " below floor at y=" << format_double(y) << ", theta=[";
        for (Eigen::Index i = 0; i < theta.size(); ++i)
            msg << (i ? "," : "") << format_double(theta[i]);
        msg << "]";
        throw DegeneracyError(msg.str());
    }

    /// Closed-form evaluation. `u` may be any nonzero vector of the nonnegative
    /// cone; G is homogeneous of degree 0 in it.
    template <RFamily Fam>
    KernelEval evaluate_kernel(const Fam& family, const Vector& theta, const Vector& u, Observation y, bool with_grads)
    {
        RGradient dr;
        RMatrix r = family.r_eval(theta, y, with_grads ? &dr : nullptr);

        KernelEval k;
        Vector ru = r.entries * u;
        double s  = ru.sum();
        if (!(s > degeneracy_floor) || !std::isfinite(s))
            throw_degenerate(theta, y, s);
        k.phi = std::log(s) + r.log_scale;
        k.G   = ru / s;
        if (!with_grads)
            return k;

        const Eigen::Index n = r.entries.rows();
        const auto d         = static_cast<Eigen::Index>(dr.partials.size());
        Vector colsum        = r.entries.colwise().sum().transpose(); // Rᵀe
        k.grad_u_phi         = colsum / s;
        // ∂G_i/∂u_j = (R_ij - G_i (Rᵀe)_j)/s, stored transposed
        k.grad_u_G = (r.entries.transpose() - colsum * k.G.transpose()) / s;

        k.grad_theta_phi.resize(d);
        k.grad_theta_G.resize(d, n);
        for (Eigen::Index j = 0; j < d; ++j)
        {
            Vector dru            = dr.partials[static_cast<std::size_t>(j)] * u;
            double ds             = dru.sum();
            k.grad_theta_phi[j]   = ds / s;
            k.grad_theta_G.row(j) = ((dru - k.G * ds) / s).transpose();
        }
        return k;
    }

    inline void check_filter_input(const Vector& u, std::size_t n)
    {
        if (static_cast<std::size_t>(u.size()) != n)
            throw ValidationError("filter state has the wrong length");
        if (!validate_simplex(u, 1e-9))
            throw ValidationError("filter state is not on the probability simplex");
    }

    /// Re-centre each row to sum exactly to zero.
    inline void recenter_rows(Matrix& v)
    {
        if (v.cols() == 0)
            return;
        v.colwise() -= v.rowwise().mean();
    }
} // namespace detail

/// φ_θ(u, y) = log(eᵀR_θ(y)u).
template <RFamily Fam>
double phi(const Fam& family, const Vector& theta, const FilterState& state, Observation y)
{
    detail::check_filter_input(state.u, family.n_states());
    return detail::evaluate_kernel(family, theta, state.u, y, false).phi;
}

/// G_θ(u, y) = R_θ(y)u / eᵀR_θ(y)u.
template <RFamily Fam>
FilterState filter_step(const Fam& family, const Vector& theta, const FilterState& state, Observation y)
{
    detail::check_filter_input(state.u, family.n_states());
    return {detail::evaluate_kernel(family, theta, state.u, y, false).G};
}

/// (∇_θφ, ∇_uφ).
template <RFamily Fam>
std::pair<Vector, Vector> phi_partials(const Fam& family, const Vector& theta, const FilterState& state, Observation y)
{
    detail::check_filter_input(state.u, family.n_states());
    auto k = detail::evaluate_kernel(family, theta, state.u, y, true);
    return {std::move(k.grad_theta_phi), std::move(k.grad_u_phi)};
}

/// (∇_θG as d_θ × N_x, ∇_uG as N_x × N_x with (j, i) = ∂G_i/∂u_j).
template <RFamily Fam>
std::pair<Matrix, Matrix> filter_partials(const Fam& family, const Vector& theta, const FilterState& state,
                                          Observation y)
{
    detail::check_filter_input(state.u, family.n_states());
    auto k = detail::evaluate_kernel(family, theta, state.u, y, true);
    return {std::move(k.grad_theta_G), std::move(k.grad_u_G)};
}

/// H_θ(u, V, y) = ∇_θG + V∇_uG, rows re-centred to sum to zero.
template <RFamily Fam>
FilterDerivative derivative_step(const Fam& family, const Vector& theta, const FilterState& state,
                                 const FilterDerivative& deriv, Observation y)
{
    detail::check_filter_input(state.u, family.n_states());
    auto k     = detail::evaluate_kernel(family, theta, state.u, y, true);
    Matrix out = k.grad_theta_G + deriv.v * k.grad_u_G;
    detail::recenter_rows(out);
    return {std::move(out)};
}

/// F_θ(u, V, y) = ∇_θφ + V∇_uφ.
template <RFamily Fam>
ScoreIncrement score_increment(const Fam& family, const Vector& theta, const FilterState& state,
                               const FilterDerivative& deriv, Observation y)
{
    detail::check_filter_input(state.u, family.n_states());
    auto k = detail::evaluate_kernel(family, theta, state.u, y, true);
    return k.grad_theta_phi + deriv.v * k.grad_u_phi;
}

/// Filter and tangent filter run at a frozen θ. Each advance() consumes one
/// observation and returns the φ and F increments evaluated before the update.
template <RFamily Fam>
class FrozenFilter
{
public:
    FrozenFilter(const Fam& family, Vector theta, FilterState u0, FilterDerivative v0)
        : family_(&family), theta_(std::move(theta)), u_(std::move(u0)), v_(std::move(v0))
    {
        detail::check_filter_input(u_.u, family.n_states());
    }

    FrozenFilter(const Fam& family, Vector theta)
        : FrozenFilter(family, theta, FilterState::uniform(family.n_states()),
                       FilterDerivative::zero(family.dim(), family.n_states()))
    {
    }

    struct Increment
    {
        double phi;
        ScoreIncrement score;
    };

    /// Filter only; returns the φ increment.
    double advance_filter(Observation y)
    {
        auto k = detail::evaluate_kernel(*family_, theta_, u_.u, y, false);
        u_.u   = std::move(k.G);
        return k.phi;
    }

    Increment advance(Observation y)
    {
        auto k = detail::evaluate_kernel(*family_, theta_, u_.u, y, true);
        Increment inc{k.phi, k.grad_theta_phi + v_.v * k.grad_u_phi};
        v_.v = k.grad_theta_G + v_.v * k.grad_u_G;
        detail::recenter_rows(v_.v);
        u_.u = std::move(k.G);
        return inc;
    }

    const FilterState& state() const { return u_; }
    const FilterDerivative& derivative() const { return v_; }

private:
    const Fam* family_;
    Vector theta_;
    FilterState u_;
    FilterDerivative v_;
};

/// G^{0:n}_θ(u, y_{1:n}).
template <RFamily Fam>
FilterState filter_path(const Fam& family, const Vector& theta, FilterState u, std::span<const Observation> ys)
{
    detail::check_filter_input(u.u, family.n_states());
    for (Observation y : ys)
        u.u = detail::evaluate_kernel(family, theta, u.u, y, false).G;
    return u;
}

/// Σ_i φ_θ(G^{0:i}(u), y_{i+1}) over the path.
template <RFamily Fam>
double path_loglik(const Fam& family, const Vector& theta, FilterState u, std::span<const Observation> ys)
{
    detail::check_filter_input(u.u, family.n_states());
    double total = 0.0;
    for (Observation y : ys)
    {
        auto k = detail::evaluate_kernel(family, theta, u.u, y, false);
        total += k.phi;
        u.u = std::move(k.G);
    }
    return total;
}

} // namespace rmlhmm

#endif // RMLHMM_FILTER_HPP_INCLUDED
