#ifndef RMLHMM_PARAMS_HPP_INCLUDED
#define RMLHMM_PARAMS_HPP_INCLUDED

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "densities.hpp"
#include "errors.hpp"
#include "model.hpp"
#include "rng.hpp"

namespace rmlhmm
{
enum class Kind
{
    DiscreteNatural,
    DiscreteExponential,
    DiscreteTrigonometric,
    MixtureWeights,
    GaussianObs
};

inline std::string to_string(Kind k)
{
    switch (k)
    {
    case Kind::DiscreteNatural:
        return "natural";
    case Kind::DiscreteExponential:
        return "exponential";
    case Kind::DiscreteTrigonometric:
        return "trigonometric";
    case Kind::MixtureWeights:
        return "mixture";
    case Kind::GaussianObs:
        return "gaussian";
    }
    return "?";
}

inline Kind kind_from_string(const std::string& s)
{
    for (Kind k : {Kind::DiscreteNatural, Kind::DiscreteExponential, Kind::DiscreteTrigonometric, Kind::MixtureWeights,
                   Kind::GaussianObs})
        if (to_string(k) == s)
            return k;
    throw ValidationError("unknown parameterization kind '" + s + "'");
}

inline bool is_discrete(Kind k)
{
    return k == Kind::DiscreteNatural || k == Kind::DiscreteExponential || k == Kind::DiscreteTrigonometric;
}

/// N_x plus N_y (discrete kinds) or N_β (mixture); n_obs is unused for GaussianObs.
struct Dims
{
    std::size_t n_states = 2;
    std::size_t n_obs    = 0;

    friend bool operator==(const Dims&, const Dims&) = default;
};

/// Flat parameter θ with its parameterization tag.
///
/// Layout (row-major blocks, 0-based):
///  - transition block α(x, x') at x·N_x + x' for every kind; it drives a softmax
///    for Exponential, Mixture and Gaussian kinds, stick-breaking angles for
///    Trigonometric and raw probabilities for Natural.
///  - discrete kinds: β(x, y) at N_x² + x·N_y + y
///  - mixture:        β(x, k) at N_x² + x·N_β + k
///  - gaussian:       λ_x at N_x² + x, μ_x at N_x² + N_x + x
struct ParamVector
{
    Kind kind = Kind::DiscreteExponential;
    Dims dims;
    Vector values;
};

/// Compact box Q = Π[lower_k, upper_k] inside Θ.
struct ParamBox
{
    Vector lower;
    Vector upper;

    bool contains(const Vector& theta) const
    {
        return theta.size() == lower.size() && (theta.array() >= lower.array()).all() &&
               (theta.array() <= upper.array()).all();
    }
};

/// R_θ(y) up to a positive factor: the true matrix is exp(log_scale)·entries.
/// Entry (i, j) is q_θ(y|i)·p_θ(i|j), i.e. destination row, source column.
struct RMatrix
{
    Matrix entries;
    double log_scale = 0.0;
    Observation y    = 0.0;
};

/// ∂R_θ(y)/∂θ_k for k < d_θ, carrying the same scale factor as the matching RMatrix.
struct RGradient
{
    std::vector<Matrix> partials;
    double log_scale = 0.0;
};

namespace detail
{
    enum class RowMap
    {
        Identity,
        Softmax,
        Stick
    };

    // Maps a row of raw coordinates to a probability row, optionally with the
    // Jacobian jac(j, m) = ∂p_j/∂row_m.
    inline Vector row_probs(RowMap map, const Vector& row, Matrix* jac)
    {
        const Eigen::Index n = row.size();
        Vector p(n);
        switch (map)
        {
        case RowMap::Identity:
            p = row;
            if (jac)
                *jac = Matrix::Identity(n, n);
            break;
        case RowMap::Softmax:
        {
            double m = row.maxCoeff();
            p        = (row.array() - m).exp();
            p /= p.sum();
            if (jac)
                *jac = Matrix(p.asDiagonal()) - p * p.transpose();
            break;
        }
        case RowMap::Stick:
        {
            // p_j = cos²a_j Π_{l<j} sin²a_l for j < n-1, p_{n-1} = Π_{l<n-1} sin²a_l.
            Vector c2 = row.array().cos().square();
            Vector s2 = row.array().sin().square();
            Vector dc2 = -2.0 * (row.array().sin() * row.array().cos()); // d(cos²)/da
            Vector ds2 = -dc2;                                           // d(sin²)/da
            for (Eigen::Index j = 0; j < n; ++j)
            {
                double v = (j < n - 1) ? c2[j] : 1.0;
                for (Eigen::Index l = 0; l < std::min(j, n - 1); ++l)
                    v *= s2[l];
                p[j] = v;
            }
            if (jac)
            {
                jac->setZero(n, n);
                for (Eigen::Index j = 0; j < n; ++j)
                {
                    Eigen::Index factors = std::min(j, n - 1);
                    for (Eigen::Index m = 0; m <= std::min(j, n - 2); ++m)
                    {
                        double v = (m == j) ? dc2[m] : ((j < n - 1) ? c2[j] : 1.0);
                        for (Eigen::Index l = 0; l < factors; ++l)
                            v *= (l == m) ? ds2[l] : s2[l];
                        (*jac)(j, m) = v;
                    }
                }
            }
            break;
        }
        }
        return p;
    }

    // Euclidean projection of v onto {x : lo ≤ x ≤ hi, Σx = 1}; assumes Σlo ≤ 1 ≤ Σhi.
    inline Vector project_box_simplex(const Vector& v, const Vector& lo, const Vector& hi)
    {
        if ((v.array() >= lo.array()).all() && (v.array() <= hi.array()).all() && std::abs(v.sum() - 1.0) <= 1e-15)
            return v;
        auto mass = [&](double tau) { return (v.array() - tau).max(lo.array()).min(hi.array()).sum(); };
        double a = (v - hi).minCoeff() - 1.0; // mass(a) = Σhi ≥ 1
        double b = (v - lo).maxCoeff() + 1.0; // mass(b) = Σlo ≤ 1
        for (int it = 0; it < 200 && b - a > 1e-17 * (1.0 + std::abs(a) + std::abs(b)); ++it)
        {
            double mid = 0.5 * (a + b);
            if (mass(mid) > 1.0)
                a = mid;
            else
                b = mid;
        }
        Vector x = (v.array() - 0.5 * (a + b)).max(lo.array()).min(hi.array());
        // distribute the residual over the free coordinates
        double resid = 1.0 - x.sum();
        std::vector<Eigen::Index> free;
        for (Eigen::Index i = 0; i < x.size(); ++i)
            if (x[i] > lo[i] && x[i] < hi[i])
                free.push_back(i);
        if (!free.empty())
            for (auto i : free)
                x[i] = std::clamp(x[i] + resid / static_cast<double>(free.size()), lo[i], hi[i]);
        return x;
    }
} // namespace detail

/// A parameterized candidate model family θ ↦ (p_θ, q_θ, R_θ) with exact first derivatives.
///
/// Evaluation of R and its gradient is unchecked so that finite-difference
/// oracles may step slightly off the constraint manifold of the Natural and
/// Mixture kinds; the public probability accessors validate the domain first.
class Family
{
public:
    static Family discrete(Kind kind, std::size_t n_states, std::size_t n_symbols)
    {
        if (!is_discrete(kind))
            throw ValidationError("discrete() needs a discrete kind");
        if (n_symbols < 1)
            throw ValidationError("discrete family needs at least one symbol");
        return Family(kind, n_states, n_symbols, {}, 0.0);
    }

    /// `components[x][k]` is f_k(·|x); only the weights β are estimated.
    static Family mixture(std::size_t n_states, std::vector<std::vector<Component>> components)
    {
        if (components.size() != n_states || components.empty() || components[0].empty())
            throw ValidationError("mixture family needs a component list per state");
        std::size_t nb = components[0].size();
        for (const auto& row : components)
        {
            if (row.size() != nb)
                throw ValidationError("every state needs the same number of mixture components");
            for (const auto& c : row)
                c.validate();
        }
        return Family(Kind::MixtureWeights, n_states, nb, std::move(components), 0.0);
    }

    /// `separation` is the minimum pairwise gap between precisions.
    static Family gaussian(std::size_t n_states, double separation = 1e-3)
    {
        if (!(separation > 0.0))
            throw ValidationError("gaussian precision separation must be > 0");
        return Family(Kind::GaussianObs, n_states, 0, {}, separation);
    }

    Kind kind() const { return kind_; }
    Dims dims() const { return {nx_, nobs_}; }
    std::size_t n_states() const { return nx_; }
    std::size_t n_obs() const { return nobs_; }
    double separation() const { return sep_; }
    const std::vector<std::vector<Component>>& components() const { return components_; }

    std::size_t dim() const
    {
        std::size_t d = nx_ * nx_;
        return kind_ == Kind::GaussianObs ? d + 2 * nx_ : d + nx_ * nobs_;
    }

    std::size_t obs_offset() const { return nx_ * nx_; }

    ParamVector wrap(Vector values) const
    {
        if (static_cast<std::size_t>(values.size()) != dim())
            throw ValidationError("parameter vector has length " + std::to_string(values.size()) + ", expected " +
                                  std::to_string(dim()));
        return {kind_, dims(), std::move(values)};
    }

    /// Throws ValidationError if `theta` was built for a different family.
    const Vector& unwrap(const ParamVector& theta) const
    {
        if (theta.kind != kind_ || !(theta.dims == dims()) || static_cast<std::size_t>(theta.values.size()) != dim())
            throw ValidationError("parameter vector does not match the family (" + to_string(kind_) + ")");
        return theta.values;
    }

    /// Throws DomainError unless θ ∈ Θ.
    void check_domain(const Vector& theta) const
    {
        if (static_cast<std::size_t>(theta.size()) != dim())
            throw DomainError("parameter vector has the wrong length");
        if (!theta.allFinite())
            throw DomainError("parameter vector has non-finite entries");
        const Eigen::Index n = static_cast<Eigen::Index>(nx_);
        auto check_prob_rows = [&](Eigen::Index offset, Eigen::Index rows, Eigen::Index cols, const char* what) {
            for (Eigen::Index r = 0; r < rows; ++r)
            {
                auto row = theta.segment(offset + r * cols, cols);
                if ((row.array() <= 0.0).any() || (cols > 1 && (row.array() >= 1.0).any()))
                    throw DomainError(std::string(what) + " row " + std::to_string(r + 1) + " has entries outside (0,1)");
                if (std::abs(row.sum() - 1.0) > 1e-9)
                    throw DomainError(std::string(what) + " row " + std::to_string(r + 1) + " does not sum to 1");
            }
        };
        switch (kind_)
        {
        case Kind::DiscreteNatural:
            check_prob_rows(0, n, n, "transition");
            check_prob_rows(n * n, n, static_cast<Eigen::Index>(nobs_), "emission");
            break;
        case Kind::DiscreteTrigonometric:
            for (Eigen::Index i = 0; i < theta.size(); ++i)
                if (!(theta[i] > 0.0 && theta[i] < std::numbers::pi / 2))
                    throw DomainError("trigonometric angle " + std::to_string(i) + " outside (0, pi/2)");
            break;
        case Kind::MixtureWeights:
            check_prob_rows(n * n, n, static_cast<Eigen::Index>(nobs_), "mixture weight");
            break;
        case Kind::GaussianObs:
        {
            auto lam = theta.segment(n * n, n);
            for (Eigen::Index i = 0; i < n; ++i)
            {
                if (!(lam[i] > 0.0))
                    throw DomainError("gaussian precision " + std::to_string(i + 1) + " must be > 0");
                for (Eigen::Index j = 0; j < i; ++j)
                    if (std::abs(lam[i] - lam[j]) < sep_ * (1.0 - 1e-9))
                        throw DomainError("gaussian precisions " + std::to_string(j + 1) + " and " +
                                          std::to_string(i + 1) + " closer than the separation " +
                                          std::to_string(sep_));
            }
            break;
        }
        case Kind::DiscreteExponential:
            break;
        }
    }

    bool in_domain(const Vector& theta) const
    {
        try
        {
            check_domain(theta);
            return true;
        }
        catch (const DomainError&)
        {
            return false;
        }
    }

    // Transition probabilities ------------------------------------------------

    /// p_θ(x'|x) as a row-stochastic matrix (row = from-state x).
    Matrix transition_probs(const ParamVector& theta) const
    {
        const Vector& t = unwrap(theta);
        check_domain(t);
        return transition_unchecked(t, nullptr);
    }

    /// grad[k](x, x') = ∂p_θ(x'|x)/∂θ_k.
    std::vector<Matrix> transition_grad(const ParamVector& theta) const
    {
        const Vector& t = unwrap(theta);
        check_domain(t);
        std::vector<Matrix> grad;
        transition_unchecked(t, &grad);
        return grad;
    }

    // Observation densities ---------------------------------------------------

    /// (q_θ(y|x))_x.
    Vector obs_density(const ParamVector& theta, Observation y) const
    {
        const Vector& t = unwrap(theta);
        check_domain(t);
        double log_scale = 0.0;
        Vector q         = obs_unchecked(t, y, nullptr, log_scale);
        return q * std::exp(log_scale);
    }

    /// Row k holds ∂q_θ(y|x)/∂θ_k over x.
    Matrix obs_density_grad(const ParamVector& theta, Observation y) const
    {
        const Vector& t = unwrap(theta);
        check_domain(t);
        double log_scale = 0.0;
        Matrix grad;
        obs_unchecked(t, y, &grad, log_scale);
        return grad * std::exp(log_scale);
    }

    // R matrix ----------------------------------------------------------------

    RMatrix r_matrix(const Vector& theta, Observation y) const { return r_eval(theta, y, nullptr); }

    RMatrix r_matrix(const ParamVector& theta, Observation y) const { return r_eval(unwrap(theta), y, nullptr); }

    /// R and ∂R/∂θ from one evaluation; both carry the same log_scale.
    RMatrix r_eval(const Vector& theta, Observation y, RGradient* grad) const
    {
        std::vector<Matrix> dp;
        Matrix p = transition_unchecked(theta, grad ? &dp : nullptr);
        double log_scale = 0.0;
        Matrix dq;
        Vector q = obs_unchecked(theta, y, grad ? &dq : nullptr, log_scale);

        RMatrix r{q.asDiagonal() * p.transpose(), log_scale, y};
        if (grad)
        {
            const std::size_t d = dim();
            grad->log_scale     = log_scale;
            grad->partials.assign(d, Matrix::Zero(static_cast<Eigen::Index>(nx_), static_cast<Eigen::Index>(nx_)));
            for (std::size_t k = 0; k < d; ++k)
            {
                Matrix& g = grad->partials[k];
                if (k < obs_offset())
                    g.noalias() = q.asDiagonal() * dp[k].transpose();
                else
                    g.noalias() = dq.row(static_cast<Eigen::Index>(k)).transpose().asDiagonal() * p.transpose();
            }
        }
        return r;
    }

    RGradient r_matrix_grad(const Vector& theta, Observation y) const
    {
        RGradient g;
        r_eval(theta, y, &g);
        return g;
    }

    /// Unchecked p_θ (and gradient) on the analytic extension of the parameterization.
    Matrix transition_probs_unchecked(const Vector& theta, std::vector<Matrix>* grad = nullptr) const
    {
        return transition_unchecked(theta, grad);
    }

    /// Unchecked, unscaled q_θ(y|·) (and d × N_x gradient).
    Vector obs_density_unchecked(const Vector& theta, Observation y, Matrix* grad = nullptr) const
    {
        double log_scale = 0.0;
        Vector q         = obs_unchecked(theta, y, grad, log_scale);
        if (grad)
            *grad *= std::exp(log_scale);
        return q * std::exp(log_scale);
    }

    // Boxes and projection ----------------------------------------------------

    /// Throws ValidationError unless the box is a valid compact subset of Θ.
    void validate_box(const ParamBox& box) const
    {
        const auto d = static_cast<Eigen::Index>(dim());
        if (box.lower.size() != d || box.upper.size() != d)
            throw ValidationError("box has the wrong dimension");
        for (Eigen::Index i = 0; i < d; ++i)
            if (!(box.lower[i] < box.upper[i]) || !std::isfinite(box.lower[i]) || !std::isfinite(box.upper[i]))
                throw ValidationError("box coordinate " + std::to_string(i) + " needs finite lower < upper");

        const Eigen::Index n = static_cast<Eigen::Index>(nx_);
        auto check_prob_block = [&](Eigen::Index offset, Eigen::Index rows, Eigen::Index cols, const char* what) {
            for (Eigen::Index r = 0; r < rows; ++r)
            {
                auto lo = box.lower.segment(offset + r * cols, cols);
                auto hi = box.upper.segment(offset + r * cols, cols);
                if ((lo.array() <= 0.0).any() || (cols > 1 && (hi.array() >= 1.0).any()))
                    throw ValidationError(std::string(what) + " box row " + std::to_string(r + 1) +
                                          " must lie inside (0,1)");
                if (!(lo.sum() < 1.0 && hi.sum() > 1.0) && cols > 1)
                    throw ValidationError(std::string(what) + " box row " + std::to_string(r + 1) +
                                          " does not intersect the simplex interior");
            }
        };
        switch (kind_)
        {
        case Kind::DiscreteNatural:
            check_prob_block(0, n, n, "transition");
            check_prob_block(n * n, n, static_cast<Eigen::Index>(nobs_), "emission");
            break;
        case Kind::DiscreteTrigonometric:
            if ((box.lower.array() <= 0.0).any() || (box.upper.array() >= std::numbers::pi / 2).any())
                throw ValidationError("trigonometric box must lie inside (0, pi/2)");
            break;
        case Kind::MixtureWeights:
            check_prob_block(n * n, n, static_cast<Eigen::Index>(nobs_), "mixture weight");
            break;
        case Kind::GaussianObs:
        {
            if ((box.lower.segment(n * n, n).array() <= 0.0).any())
                throw ValidationError("gaussian precision box must be strictly positive");
            Vector probe = project(box.lower, box);
            if (!box.contains(probe) || !in_domain(probe))
                throw ValidationError("gaussian precision box cannot hold pairwise separated precisions");
            break;
        }
        case Kind::DiscreteExponential:
            break;
        }
    }

    /// Clamp onto the box, then restore the kind's side constraints inside it:
    /// probability rows are projected onto box ∩ simplex, gaussian precisions
    /// are pushed apart to the configured separation. Idempotent.
    Vector project(const Vector& theta, const ParamBox& box) const
    {
        Vector t             = theta.cwiseMax(box.lower).cwiseMin(box.upper);
        const Eigen::Index n = static_cast<Eigen::Index>(nx_);
        auto simplex_rows    = [&](Eigen::Index offset, Eigen::Index rows, Eigen::Index cols) {
            if (cols < 2)
                return;
            for (Eigen::Index r = 0; r < rows; ++r)
            {
                Eigen::Index o = offset + r * cols;
                t.segment(o, cols) = detail::project_box_simplex(theta.segment(o, cols), box.lower.segment(o, cols),
                                                                 box.upper.segment(o, cols));
            }
        };
        switch (kind_)
        {
        case Kind::DiscreteNatural:
            simplex_rows(0, n, n);
            simplex_rows(n * n, n, static_cast<Eigen::Index>(nobs_));
            break;
        case Kind::MixtureWeights:
            simplex_rows(n * n, n, static_cast<Eigen::Index>(nobs_));
            break;
        case Kind::GaussianObs:
            separate_precisions(t, box);
            break;
        default:
            break;
        }
        return t;
    }

    ParamVector project(const ParamVector& theta, const ParamBox& box) const { return wrap(project(unwrap(theta), box)); }

    /// Side-constraint repair without a box (simplex renormalization of probability rows).
    Vector renormalize(const Vector& theta) const
    {
        if (kind_ != Kind::DiscreteNatural && kind_ != Kind::MixtureWeights)
            return theta;
        ParamBox unit{Vector::Constant(theta.size(), -std::numeric_limits<double>::max()),
                      Vector::Constant(theta.size(), std::numeric_limits<double>::max())};
        const Eigen::Index n = static_cast<Eigen::Index>(nx_);
        Eigen::Index first   = kind_ == Kind::DiscreteNatural ? 0 : n * n;
        unit.lower.tail(theta.size() - first).setZero();
        unit.upper.tail(theta.size() - first).setOnes();
        return project(theta, unit);
    }

    /// Uniform draw in the box followed by projection.
    Vector sample_in_box(const ParamBox& box, Rng& rng) const
    {
        Vector t(box.lower.size());
        for (Eigen::Index i = 0; i < t.size(); ++i)
            t[i] = rng.uniform(box.lower[i], box.upper[i]);
        return project(t, box);
    }

    /// Default compact box for the kind.
    ParamBox default_box() const
    {
        const auto d         = static_cast<Eigen::Index>(dim());
        const Eigen::Index n = static_cast<Eigen::Index>(nx_);
        ParamBox box{Vector::Constant(d, -5.0), Vector::Constant(d, 5.0)};
        switch (kind_)
        {
        case Kind::DiscreteNatural:
            box.lower.setConstant(0.01);
            box.upper.setConstant(0.99);
            break;
        case Kind::DiscreteTrigonometric:
            box.lower.setConstant(0.05);
            box.upper.setConstant(std::numbers::pi / 2 - 0.05);
            break;
        case Kind::MixtureWeights:
            box.lower.tail(d - n * n).setConstant(0.01);
            box.upper.tail(d - n * n).setConstant(0.99);
            break;
        case Kind::GaussianObs:
            box.lower.segment(n * n, n).setConstant(0.05);
            box.upper.segment(n * n, n).setConstant(20.0);
            box.lower.tail(n).setConstant(-10.0);
            box.upper.tail(n).setConstant(10.0);
            break;
        case Kind::DiscreteExponential:
            break;
        }
        return box;
    }

    /// The generative HMM with parameters θ. An empty `initial` selects the stationary law.
    TrueModel true_model(const ParamVector& theta, Vector initial = {}) const
    {
        const Vector& t = unwrap(theta);
        check_domain(t);
        TrueModel m;
        m.transition = transition_unchecked(t, nullptr);
        m.initial    = initial.size() == 0 ? stationary_distribution(m.transition) : std::move(initial);
        const Eigen::Index n = static_cast<Eigen::Index>(nx_);
        switch (kind_)
        {
        case Kind::GaussianObs:
            m.emitter = GaussianEmitter{t.segment(n * n, n), t.tail(n)};
            break;
        case Kind::MixtureWeights:
            m.emitter = MixtureEmitter{
                t.tail(n * static_cast<Eigen::Index>(nobs_)).reshaped<Eigen::RowMajor>(n, static_cast<Eigen::Index>(nobs_)),
                components_};
            break;
        default:
        {
            Matrix probs(n, static_cast<Eigen::Index>(nobs_));
            for (std::size_t x = 0; x < nx_; ++x)
                probs.row(static_cast<Eigen::Index>(x)) =
                    detail::row_probs(obs_map(), obs_row(t, x), nullptr).transpose();
            m.emitter = DiscreteEmitter{probs};
            break;
        }
        }
        m.validate();
        return m;
    }

private:
    Family(Kind kind, std::size_t nx, std::size_t nobs, std::vector<std::vector<Component>> comps, double sep)
        : kind_(kind), nx_(StateSpace(nx).n_states), nobs_(nobs), components_(std::move(comps)), sep_(sep)
    {
    }

    detail::RowMap transition_map() const
    {
        switch (kind_)
        {
        case Kind::DiscreteNatural:
            return detail::RowMap::Identity;
        case Kind::DiscreteTrigonometric:
            return detail::RowMap::Stick;
        default:
            return detail::RowMap::Softmax;
        }
    }

    detail::RowMap obs_map() const
    {
        switch (kind_)
        {
        case Kind::DiscreteNatural:
            return detail::RowMap::Identity;
        case Kind::DiscreteTrigonometric:
            return detail::RowMap::Stick;
        default:
            return detail::RowMap::Softmax;
        }
    }

    Vector obs_row(const Vector& t, std::size_t x) const
    {
        return t.segment(static_cast<Eigen::Index>(obs_offset() + x * nobs_), static_cast<Eigen::Index>(nobs_));
    }

    Matrix transition_unchecked(const Vector& t, std::vector<Matrix>* grad) const
    {
        const auto n = static_cast<Eigen::Index>(nx_);
        Matrix p(n, n);
        if (grad)
            grad->assign(dim(), Matrix::Zero(n, n));
        Matrix jac;
        for (Eigen::Index x = 0; x < n; ++x)
        {
            Vector row = t.segment(x * n, n);
            p.row(x)   = detail::row_probs(transition_map(), row, grad ? &jac : nullptr).transpose();
            if (grad)
                for (Eigen::Index m = 0; m < n; ++m)
                    (*grad)[static_cast<std::size_t>(x * n + m)].row(x) = jac.col(m).transpose();
        }
        return p;
    }

    // Returns q scaled by exp(-log_scale) so that its largest entry is 1 (when positive).
    // grad, when given, is d × N_x with the same scaling.
    Vector obs_unchecked(const Vector& t, Observation y, Matrix* grad, double& log_scale) const
    {
        const auto n = static_cast<Eigen::Index>(nx_);
        Vector q(n);
        if (grad)
            grad->setZero(static_cast<Eigen::Index>(dim()), n);
        log_scale = 0.0;
        switch (kind_)
        {
        case Kind::GaussianObs:
        {
            auto lam = t.segment(n * n, n);
            auto mu  = t.tail(n);
            Vector logq(n);
            for (Eigen::Index x = 0; x < n; ++x)
            {
                double dy = y - mu[x];
                logq[x]   = 0.5 * std::log(lam[x] / std::numbers::pi) - lam[x] * dy * dy;
            }
            log_scale = logq.maxCoeff();
            q         = (logq.array() - log_scale).exp();
            if (grad)
                for (Eigen::Index x = 0; x < n; ++x)
                {
                    double dy                  = y - mu[x];
                    (*grad)(n * n + x, x)      = q[x] * (0.5 / lam[x] - dy * dy);
                    (*grad)(n * n + n + x, x)  = q[x] * 2.0 * lam[x] * dy;
                }
            break;
        }
        case Kind::MixtureWeights:
        {
            const auto nb = static_cast<Eigen::Index>(nobs_);
            Matrix f(n, nb);
            for (Eigen::Index x = 0; x < n; ++x)
                for (Eigen::Index k = 0; k < nb; ++k)
                    f(x, k) = components_[static_cast<std::size_t>(x)][static_cast<std::size_t>(k)].density(y);
            for (Eigen::Index x = 0; x < n; ++x)
                q[x] = t.segment(n * n + x * nb, nb).dot(f.row(x).transpose());
            double m = q.maxCoeff();
            if (m > 0.0)
            {
                log_scale = std::log(m);
                q /= m;
                f /= m;
            }
            if (grad)
                for (Eigen::Index x = 0; x < n; ++x)
                    for (Eigen::Index k = 0; k < nb; ++k)
                        (*grad)(n * n + x * nb + k, x) = f(x, k);
            break;
        }
        default:
        {
            const auto ny = static_cast<Eigen::Index>(nobs_);
            auto sym      = static_cast<Eigen::Index>(y);
            if (static_cast<Observation>(sym) != y || sym < 0 || sym >= ny)
                throw ValidationError("observation " + std::to_string(y) + " is not a symbol in 0.." +
                                      std::to_string(ny - 1));
            Matrix jac;
            for (Eigen::Index x = 0; x < n; ++x)
            {
                Vector row = obs_row(t, static_cast<std::size_t>(x));
                Vector pr  = detail::row_probs(obs_map(), row, grad ? &jac : nullptr);
                q[x]       = pr[sym];
                if (grad)
                    for (Eigen::Index m = 0; m < ny; ++m)
                        (*grad)(n * n + x * ny + m, x) = jac(sym, m);
            }
            double m = q.maxCoeff();
            if (m > 0.0)
            {
                log_scale = std::log(m);
                q /= m;
                if (grad)
                    *grad /= m;
            }
            break;
        }
        }
        return q;
    }

    void separate_precisions(Vector& t, const ParamBox& box) const
    {
        const auto n = static_cast<Eigen::Index>(nx_);
        const auto o = n * n;
        std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return t[o + a] < t[o + b]; });
        for (std::size_t i = 1; i < order.size(); ++i)
        {
            auto cur = o + order[i], prev = o + order[i - 1];
            t[cur] = std::max(t[cur], t[prev] + sep_);
        }
        for (std::size_t i = order.size(); i-- > 0;)
        {
            auto cur = o + order[i];
            t[cur]   = std::min(t[cur], box.upper[cur]);
            if (i + 1 < order.size())
                t[cur] = std::min(t[cur], t[o + order[i + 1]] - sep_);
        }
    }

    Kind kind_;
    std::size_t nx_;
    std::size_t nobs_;
    std::vector<std::vector<Component>> components_;
    double sep_;
};

} // namespace rmlhmm

#endif // RMLHMM_PARAMS_HPP_INCLUDED
