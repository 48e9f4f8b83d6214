#ifndef RMLHMM_MODEL_HPP_INCLUDED
#define RMLHMM_MODEL_HPP_INCLUDED

#include <cmath>
#include <cstdint>
#include <cstring>
#include <numbers>
#include <ostream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "densities.hpp"
#include "errors.hpp"
#include "format.hpp"
#include "rng.hpp"

namespace rmlhmm
{
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Observations are passed through the filter as doubles; discrete symbols are
/// carried as exact small integers (0-based).
using Observation = double;

/// True iff every entry is ≥ -tol and the entries sum to 1 within tol.
template <typename Vec>
bool validate_simplex(const Vec& u, double tol)
{
    double sum = 0.0;
    for (Eigen::Index i = 0; i < u.size(); ++i)
    {
        if (!(u[i] >= -tol))
            return false;
        sum += u[i];
    }
    return std::abs(sum - 1.0) <= tol;
}

struct StateSpace
{
    std::size_t n_states = 2;

    explicit StateSpace(std::size_t n) : n_states(n)
    {
        if (n < 2)
            throw ValidationError("state space needs at least 2 states, got " + std::to_string(n));
    }
};

/// Row-stochastic check used by every model constructor; names the offending row.
inline void check_stochastic_rows(const Matrix& m, const std::string& what, double tol = 1e-12)
{
    for (Eigen::Index i = 0; i < m.rows(); ++i)
    {
        if (!validate_simplex(m.row(i), tol) || (m.row(i).array() < 0.0).any())
            throw ValidationError(what + " row " + std::to_string(i + 1) + " is not a probability vector");
    }
}

// Emitters ------------------------------------------------------------------

/// Discrete emitter: probs(x, y) = Q(y|x), symbols 0..N_y-1.
struct DiscreteEmitter
{
    Matrix probs;

    std::size_t n_symbols() const { return static_cast<std::size_t>(probs.cols()); }
    double density(std::size_t x, Observation y) const { return probs(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)); }
    void validate(std::size_t n_states) const
    {
        if (static_cast<std::size_t>(probs.rows()) != n_states || probs.cols() < 1)
            throw ValidationError("emission matrix shape does not match the state space");
        check_stochastic_rows(probs, "emission");
    }
};

/// Gaussian emitter in precision form: q(y|x) = sqrt(λ_x/π)·exp(-λ_x(y-μ_x)²).
struct GaussianEmitter
{
    Vector precisions;
    Vector means;

    double density(std::size_t x, Observation y) const
    {
        double l = precisions[static_cast<Eigen::Index>(x)];
        double d = y - means[static_cast<Eigen::Index>(x)];
        return std::sqrt(l / std::numbers::pi) * std::exp(-l * d * d);
    }
    void validate(std::size_t n_states) const
    {
        if (static_cast<std::size_t>(precisions.size()) != n_states || static_cast<std::size_t>(means.size()) != n_states)
            throw ValidationError("gaussian emitter needs one precision and one mean per state");
        for (Eigen::Index i = 0; i < precisions.size(); ++i)
            if (!(precisions[i] > 0.0))
                throw ValidationError("gaussian precision of state " + std::to_string(i + 1) + " must be > 0");
    }
};

/// Mixture emitter: q(y|x) = Σ_k weights(x,k)·components[x][k](y).
struct MixtureEmitter
{
    Matrix weights;
    std::vector<std::vector<Component>> components;

    double density(std::size_t x, Observation y) const
    {
        double q = 0.0;
        for (std::size_t k = 0; k < components[x].size(); ++k)
            q += weights(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(k)) * components[x][k].density(y);
        return q;
    }
    void validate(std::size_t n_states) const
    {
        if (static_cast<std::size_t>(weights.rows()) != n_states || components.size() != n_states)
            throw ValidationError("mixture emitter shape does not match the state space");
        for (std::size_t x = 0; x < n_states; ++x)
        {
            if (components[x].size() != static_cast<std::size_t>(weights.cols()))
                throw ValidationError("mixture state " + std::to_string(x + 1) + " has a component/weight count mismatch");
            for (const auto& c : components[x])
                c.validate();
        }
        check_stochastic_rows(weights, "mixture weight");
    }
};

using Emitter = std::variant<DiscreteEmitter, GaussianEmitter, MixtureEmitter>;

inline bool is_discrete(const Emitter& e) { return std::holds_alternative<DiscreteEmitter>(e); }

/// Generative HMM producing the data stream {Y_n}.
struct TrueModel
{
    Matrix transition;
    Emitter emitter;
    Vector initial;

    std::size_t n_states() const { return static_cast<std::size_t>(transition.rows()); }

    void validate() const
    {
        StateSpace space(static_cast<std::size_t>(transition.rows()));
        if (transition.cols() != transition.rows())
            throw ValidationError("transition matrix must be square");
        check_stochastic_rows(transition, "transition");
        if (static_cast<std::size_t>(initial.size()) != space.n_states || !validate_simplex(initial, 1e-12) ||
            (initial.array() < 0.0).any())
            throw ValidationError("initial distribution is not a probability vector over the states");
        std::visit([&](const auto& e) { e.validate(space.n_states); }, emitter);
    }

    double density(std::size_t x, Observation y) const
    {
        return std::visit([&](const auto& e) { return e.density(x, y); }, emitter);
    }

    Observation sample_observation(std::size_t x, Rng& rng) const
    {
        return std::visit(
            [&](const auto& e) -> Observation {
                using E = std::decay_t<decltype(e)>;
                if constexpr (std::is_same_v<E, DiscreteEmitter>)
                    return static_cast<Observation>(rng.categorical(e.probs.row(static_cast<Eigen::Index>(x))));
                else if constexpr (std::is_same_v<E, GaussianEmitter>)
                    return e.means[static_cast<Eigen::Index>(x)] +
                           rng.normal() / std::sqrt(2.0 * e.precisions[static_cast<Eigen::Index>(x)]);
                else
                {
                    std::size_t k = rng.categorical(e.weights.row(static_cast<Eigen::Index>(x)));
                    return e.components[x][k].sample(rng);
                }
            },
            emitter);
    }
};

/// Sample path (X_1..X_n, Y_1..Y_n). States and symbols are 0-based in memory;
/// the CSV export shifts both to 1-based.
struct Trajectory
{
    std::vector<std::uint32_t> states;
    std::variant<std::vector<std::int32_t>, std::vector<double>> observations;
    std::uint64_t seed = 0;

    std::size_t size() const { return states.size(); }

    bool discrete() const { return std::holds_alternative<std::vector<std::int32_t>>(observations); }

    Observation observation(std::size_t i) const
    {
        if (discrete())
            return static_cast<Observation>(std::get<std::vector<std::int32_t>>(observations)[i]);
        return std::get<std::vector<double>>(observations)[i];
    }

    std::vector<Observation> observation_values() const
    {
        std::vector<Observation> out(size());
        for (std::size_t i = 0; i < size(); ++i)
            out[i] = observation(i);
        return out;
    }
};

/// FNV-style fingerprint of an observation stream; equal streams give equal fingerprints.
inline std::uint64_t fingerprint(const std::vector<Observation>& ys)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double y : ys)
    {
        std::uint64_t bits;
        std::memcpy(&bits, &y, sizeof bits);
        h = detail::mix64(h ^ bits);
    }
    return h;
}

inline Trajectory sample_trajectory(const TrueModel& model, std::size_t n, Rng rng)
{
    if (n < 1)
        throw ValidationError("trajectory length must be at least 1");
    model.validate();

    Trajectory traj;
    traj.states.resize(n);
    bool discrete = is_discrete(model.emitter);
    std::vector<std::int32_t> ys_int;
    std::vector<double> ys_real;
    if (discrete)
        ys_int.resize(n);
    else
        ys_real.resize(n);

    std::size_t x = rng.categorical(model.initial);
    for (std::size_t k = 0; k < n; ++k)
    {
        if (k > 0)
            x = rng.categorical(model.transition.row(static_cast<Eigen::Index>(x)));
        traj.states[k] = static_cast<std::uint32_t>(x);
        Observation y = model.sample_observation(x, rng);
        if (discrete)
            ys_int[k] = static_cast<std::int32_t>(y);
        else
            ys_real[k] = y;
    }
    if (discrete)
        traj.observations = std::move(ys_int);
    else
        traj.observations = std::move(ys_real);
    return traj;
}

/// Stream label "trajectory" under `seed`.
inline Trajectory sample_trajectory(const TrueModel& model, std::size_t n, std::uint64_t seed)
{
    Trajectory t = sample_trajectory(model, n, Rng::stream(seed, "trajectory"));
    t.seed       = seed;
    return t;
}

/// True iff some power P^k, k ≤ N², is entrywise positive (irreducible and aperiodic).
inline bool is_primitive(const Matrix& transition)
{
    const Eigen::Index n = transition.rows();
    using Pattern        = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;
    Pattern base         = (transition.array() > 0.0).cast<int>();
    Pattern power        = base;
    for (Eigen::Index k = 1; k <= n * n; ++k)
    {
        if ((power.array() > 0).all())
            return true;
        power = ((power * base).array() > 0).cast<int>();
    }
    return false;
}

/// Stationary law π with πᵀP = πᵀ. Throws ValidationError for chains that are
/// not geometrically ergodic (no strictly positive power up to N²).
inline Vector stationary_distribution(const Matrix& transition)
{
    if (transition.rows() != transition.cols() || transition.rows() < 1)
        throw ValidationError("transition matrix must be square");
    check_stochastic_rows(transition, "transition");
    if (!is_primitive(transition))
        throw ValidationError("transition matrix is reducible or periodic: chain is not geometrically ergodic");

    const Eigen::Index n = transition.rows();
    // (Pᵀ - I)π = 0 with the last equation replaced by Σπ = 1.
    Matrix a = transition.transpose() - Matrix::Identity(n, n);
    a.row(n - 1).setOnes();
    Vector rhs = Vector::Zero(n);
    rhs[n - 1] = 1.0;
    Vector pi  = a.fullPivLu().solve(rhs);
    for (int it = 0; it < 4; ++it)
        pi = (transition.transpose() * pi).eval();
    pi = pi.cwiseMax(0.0);
    return pi / pi.sum();
}

/// CSV with header "n,x,y"; n and x are 1-based, discrete y is a 1-based symbol.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj)
{
    os << "n,x,y\n";
    for (std::size_t i = 0; i < traj.size(); ++i)
    {
        os << (i + 1) << ',' << (traj.states[i] + 1) << ',';
        if (traj.discrete())
            os << (std::get<std::vector<std::int32_t>>(traj.observations)[i] + 1);
        else
            os << format_double(std::get<std::vector<double>>(traj.observations)[i]);
        os << '\n';
    }
}

} // namespace rmlhmm

#endif // RMLHMM_MODEL_HPP_INCLUDED
