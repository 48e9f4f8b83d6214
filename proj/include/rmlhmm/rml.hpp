#ifndef RMLHMM_RML_HPP_INCLUDED
#define RMLHMM_RML_HPP_INCLUDED

#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "errors.hpp"
#include "filter.hpp"
#include "format.hpp"
#include "model.hpp"
#include "params.hpp"

namespace rmlhmm
{
/// An RFamily that also knows its parameter domain and box projection.
template <typename F>
concept RFamilyWithDomain = RFamily<F> && requires(const F& f, const Vector& theta, const ParamBox& box) {
    { f.project(theta, box) } -> std::convertible_to<Vector>;
    { f.renormalize(theta) } -> std::convertible_to<Vector>;
    f.check_domain(theta);
    f.validate_box(box);
};

/// α_n = a / (n + n₀ + 1)^κ.
struct StepSchedule
{
    double a            = 0.5;
    double kappa        = 0.9;
    std::size_t offset  = 10;

    void validate() const
    {
        if (!(a > 0.0))
            throw ValidationError("step schedule scale a must be > 0");
        if (!(kappa > 0.75 && kappa <= 1.0))
            throw ValidationError("step schedule exponent kappa must lie in (3/4, 1]");
    }

    /// Largest r with Σ α_n² γ_n^{2r} < ∞ (supremum; infinite for κ = 1).
    double r_max() const
    {
        if (kappa >= 1.0)
            return std::numeric_limits<double>::infinity();
        return (2.0 * kappa - 1.0) / (2.0 * (1.0 - kappa));
    }
};

inline double step_size(const StepSchedule& s, std::size_t n)
{
    return s.a / std::pow(static_cast<double>(n + s.offset + 1), s.kappa);
}

/// (n, θ_n, U_n, V_n, γ_n).
struct RmlState
{
    std::size_t n = 0;
    Vector theta;
    FilterState u;
    FilterDerivative v;
    double gamma = 1.0;

    /// n = 0, γ = 1, U uniform, V = 0.
    template <RFamily Fam>
    static RmlState initial(const Fam& family, Vector theta0)
    {
        return {0, std::move(theta0), FilterState::uniform(family.n_states()),
                FilterDerivative::zero(family.dim(), family.n_states()), 1.0};
    }
};

/// Side output of one recursion step.
struct StepInfo
{
    double alpha     = 0.0;
    double f_inc     = 0.0; // φ_{θ_n}(U_n, y)
    double grad_norm = 0.0; // ‖F_{θ_n}(U_n, V_n, y)‖
};

/// One step of the recursive maximum likelihood recursion, in this order:
///  1. F = F_{θ_n}(U_n, V_n, y)
///  2. θ_{n+1} = θ_n + α_n F, projected onto `box` when given
///  3. U_{n+1} = G_{θ_{n+1}}(U_n, y)
///  4. V_{n+1} = H_{θ_{n+1}}(U_n, V_n, y)
///  5. γ_{n+1} = γ_n + α_n
///
/// Without a box, probability-row kinds are renormalized and any θ_{n+1}
/// outside Θ raises DomainError.
template <RFamilyWithDomain Fam>
RmlState rml_step(const Fam& family, const RmlState& state, Observation y, const StepSchedule& schedule,
                  const ParamBox* box, StepInfo* info = nullptr)
{
    const double alpha = step_size(schedule, state.n);

    auto before = detail::evaluate_kernel(family, state.theta, state.u.u, y, true);
    Vector score = before.grad_theta_phi + state.v.v * before.grad_u_phi;

    RmlState next;
    next.theta = state.theta + alpha * score;
    if (box)
        next.theta = family.project(next.theta, *box);
    else
    {
        next.theta = family.renormalize(next.theta);
        family.check_domain(next.theta);
    }

    auto after = detail::evaluate_kernel(family, next.theta, state.u.u, y, true);
    next.u.u   = std::move(after.G);
    next.v.v   = after.grad_theta_G + state.v.v * after.grad_u_G;
    detail::recenter_rows(next.v.v);
    next.gamma = state.gamma + alpha;
    next.n     = state.n + 1;

    if (info)
        *info = {alpha, before.phi, score.norm()};
    return next;
}

struct TraceRecord
{
    std::size_t n;
    double gamma;
    double alpha;
    double f_inc;
    double grad_norm;
    Vector theta;
};

/// Thinned per-step records with strictly increasing n.
struct RmlTrace
{
    std::vector<TraceRecord> records;
    RmlState final_state;
    StepSchedule schedule;

    /// First record with n ≥ `n`, or the last record.
    const TraceRecord& at_or_after(std::size_t n) const
    {
        for (const auto& r : records)
            if (r.n >= n)
                return r;
        return records.back();
    }
};

/// Runs the recursion along `ys`, recording every `thin`-th step and the last one.
template <RFamilyWithDomain Fam>
RmlTrace run_rml(const Fam& family, RmlState state, std::span<const Observation> ys, const StepSchedule& schedule,
                 const ParamBox* box, std::size_t thin)
{
    if (ys.empty())
        throw ValidationError("run_rml needs at least one observation");
    if (thin < 1)
        throw ValidationError("thinning stride must be at least 1");
    detail::check_filter_input(state.u.u, family.n_states());
    if (box)
    {
        family.validate_box(*box);
        state.theta = family.project(state.theta, *box);
    }
    family.check_domain(state.theta);

    RmlTrace trace;
    trace.schedule = schedule;
    trace.records.reserve(ys.size() / thin + 2);
    StepInfo info;
    for (std::size_t i = 0; i < ys.size(); ++i)
    {
        state = rml_step(family, state, ys[i], schedule, box, &info);
        if (state.n % thin == 0 || i + 1 == ys.size())
            trace.records.push_back({state.n, state.gamma, info.alpha, info.f_inc, info.grad_norm, state.theta});
    }
    trace.final_state = std::move(state);
    return trace;
}

/// Samples n_steps observations from `model` (stream "trajectory" of `seed`) and runs the recursion.
template <RFamilyWithDomain Fam>
RmlTrace run_rml(const Fam& family, const TrueModel& model, RmlState state, const StepSchedule& schedule,
                 std::size_t n_steps, const ParamBox* box, std::size_t thin, std::uint64_t seed)
{
    if (n_steps < 1)
        throw ValidationError("run_rml needs n_steps >= 1");
    schedule.validate();
    auto ys = sample_trajectory(model, n_steps, seed).observation_values();
    return run_rml(family, std::move(state), std::span<const Observation>(ys), schedule, box, thin);
}

/// Trace CSV: n,gamma,alpha,f_inc,grad_inc_norm,theta_0..theta_{d-1}.
inline void write_trace_csv(std::ostream& os, const RmlTrace& trace)
{
    os << "n,gamma,alpha,f_inc,grad_inc_norm";
    std::size_t d = trace.records.empty() ? 0 : static_cast<std::size_t>(trace.records.front().theta.size());
    for (std::size_t k = 0; k < d; ++k)
        os << ",theta_" << k;
    os << '\n';
    for (const auto& r : trace.records)
    {
        os << r.n << ',' << format_double(r.gamma) << ',' << format_double(r.alpha) << ',' << format_double(r.f_inc)
           << ',' << format_double(r.grad_norm);
        for (Eigen::Index k = 0; k < r.theta.size(); ++k)
            os << ',' << format_double(r.theta[k]);
        os << '\n';
    }
}

} // namespace rmlhmm

#endif // RMLHMM_RML_HPP_INCLUDED
