#ifndef RMLHMM_HARNESS_HPP_INCLUDED
#define RMLHMM_HARNESS_HPP_INCLUDED

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "config.hpp"
#include "evaluation.hpp"
#include "format.hpp"
#include "parallel.hpp"
#include "rml.hpp"

namespace rmlhmm::harness
{
namespace fs = std::filesystem;

inline std::ofstream open_output(const fs::path& dir, const std::string& name)
{
    fs::create_directories(dir);
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot write " + (dir / name).string());
    return out;
}

inline void write_theta_header(std::ostream& os, Eigen::Index d)
{
    for (Eigen::Index k = 0; k < d; ++k)
        os << ",theta_" << k;
}

inline void write_theta(std::ostream& os, const Vector& theta)
{
    for (Eigen::Index k = 0; k < theta.size(); ++k)
        os << ',' << format_double(theta[k]);
}

/// Estimator report: operation,component,theta_0..,value,std_err,n,seed.
inline void write_estimator_header(std::ostream& os, Eigen::Index d)
{
    os << "operation,component";
    write_theta_header(os, d);
    os << ",value,std_err,n,seed\n";
}

inline void write_estimator_row(std::ostream& os, const std::string& op, const std::string& component,
                                const Vector& theta, double value, double std_err, std::size_t n, std::uint64_t seed)
{
    os << op << ',' << component;
    write_theta(os, theta);
    os << ',' << format_double(value) << ',' << format_double(std_err) << ',' << n << ',' << seed << '\n';
}

inline std::vector<Observation> estimator_stream(const ExperimentConfig& c)
{
    return sample_trajectory(c.true_model, c.est_n, Rng::stream(c.seed, "evaluation")).observation_values();
}

// Commands ---------------------------------------------------------------------
// Each writes only into `out`; `log` receives a human-readable summary.

inline void cmd_simulate(const ExperimentConfig& c, const fs::path& out, std::ostream& log)
{
    auto traj = sample_trajectory(c.true_model, c.simulate_steps, c.seed);
    auto file = open_output(out, "trajectory.csv");
    write_trajectory_csv(file, traj);
    log << "simulate: wrote " << traj.size() << " steps to " << (out / "trajectory.csv").string() << '\n';
}

inline RmlTrace run_configured_rml(const ExperimentConfig& c)
{
    return run_rml(c.family, c.true_model, RmlState::initial(c.family, c.initial_theta()), c.schedule, c.run_steps,
                   c.box_ptr(), c.thin, c.seed);
}

inline void cmd_run_rml(const ExperimentConfig& c, const fs::path& out, std::ostream& log)
{
    auto t0    = std::chrono::steady_clock::now();
    auto trace = run_configured_rml(c);
    auto ys    = estimator_stream(c);
    auto grad  = estimate_grad(c.family, trace.final_state.theta, std::span<const Observation>(ys), c.est_burnin);
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    {
        auto file = open_output(out, "trace.csv");
        write_trace_csv(file, trace);
    }
    auto file = open_output(out, "run_summary.csv");
    file << "n,gamma,grad_norm,grad_std_err";
    write_theta_header(file, trace.final_state.theta.size());
    file << '\n'
         << trace.final_state.n << ',' << format_double(trace.final_state.gamma) << ','
         << format_double(grad.value.norm()) << ',' << format_double(grad.std_err.norm());
    write_theta(file, trace.final_state.theta);
    file << '\n';

    log << "run-rml: " << trace.final_state.n << " steps, gamma=" << format_double(trace.final_state.gamma)
        << ", |grad f|=" << format_double(grad.value.norm()) << " (se " << format_double(grad.std_err.norm())
        << "), wall " << wall << " s\n  theta =";
    for (Eigen::Index k = 0; k < trace.final_state.theta.size(); ++k)
        log << ' ' << format_double(trace.final_state.theta[k]);
    log << '\n';
}

inline void cmd_eval_f(const ExperimentConfig& c, const fs::path& out, std::ostream& log)
{
    auto ys  = estimator_stream(c);
    auto est = estimate_loglik(c.family, c.eval_theta, std::span<const Observation>(ys), c.est_burnin);
    auto file = open_output(out, "eval_f.csv");
    write_estimator_header(file, c.eval_theta.size());
    write_estimator_row(file, "eval-f", "f", c.eval_theta, est.value, est.std_err, c.est_n, c.seed);
    log << "eval-f: f = " << format_double(est.value) << " +- " << format_double(est.std_err) << '\n';
}

inline void cmd_eval_grad(const ExperimentConfig& c, const fs::path& out, std::ostream& log)
{
    auto ys  = estimator_stream(c);
    auto est = estimate_grad(c.family, c.eval_theta, std::span<const Observation>(ys), c.est_burnin);
    auto file = open_output(out, "eval_grad.csv");
    write_estimator_header(file, c.eval_theta.size());
    for (Eigen::Index k = 0; k < est.value.size(); ++k)
        write_estimator_row(file, "eval-grad", std::to_string(k), c.eval_theta, est.value[k], est.std_err[k], c.est_n,
                            c.seed);
    log << "eval-grad: |grad f| = " << format_double(est.value.norm()) << '\n';
}

inline void cmd_fd_grad(const ExperimentConfig& c, const fs::path& out, std::ostream& log)
{
    auto ys  = estimator_stream(c);
    auto est = fd_grad(c.family, c.eval_theta, std::span<const Observation>(ys), c.est_burnin, c.fd_h);
    auto file = open_output(out, "fd_grad.csv");
    write_estimator_header(file, c.eval_theta.size());
    for (Eigen::Index k = 0; k < est.value.size(); ++k)
        write_estimator_row(file, "fd-grad", std::to_string(k), c.eval_theta, est.value[k], est.std_err[k], c.est_n,
                            c.seed);
    log << "fd-grad: |grad f| = " << format_double(est.value.norm()) << " (h=" << c.fd_h << ")\n";
}

inline void cmd_forgetting(const ExperimentConfig& c, const fs::path& out, std::ostream& log)
{
    auto ys  = sample_trajectory(c.true_model, c.forget_n, Rng::stream(c.seed, "forgetting")).observation_values();
    auto res = forgetting_probe(c.family, c.eval_theta, c.forget_u1, c.forget_u2, std::span<const Observation>(ys));
    {
        auto file = open_output(out, "forgetting.csv");
        file << "n,gap\n";
        for (std::size_t i = 0; i < res.gaps.size(); ++i)
            file << (i + 1) << ',' << format_double(res.gaps[i]) << '\n';
    }
    auto file = open_output(out, "forgetting_summary.csv");
    file << "slope,intercept,rate\n"
         << format_double(res.slope) << ',' << format_double(res.intercept) << ',' << format_double(res.rate()) << '\n';
    log << "forgetting: log-gap slope " << format_double(res.slope) << ", gap at n=" << res.gaps.size() << " is "
        << format_double(res.gaps.back()) << '\n';
}

/// Checkpoint steps geometrically spaced over [lo, hi], snapped to trace records.
inline std::vector<std::size_t> checkpoint_steps(const RmlTrace& trace, std::size_t lo, std::size_t hi,
                                                 std::size_t count)
{
    std::vector<std::size_t> steps;
    double ratio = std::pow(static_cast<double>(hi) / static_cast<double>(lo), 1.0 / static_cast<double>(count - 1));
    for (std::size_t i = 0; i < count; ++i)
    {
        auto target = static_cast<std::size_t>(std::llround(static_cast<double>(lo) * std::pow(ratio, i)));
        std::size_t n = trace.at_or_after(std::min(target, hi)).n;
        if (n > hi)
            continue;
        if (steps.empty() || steps.back() != n)
            steps.push_back(n);
    }
    return steps;
}

/// Frozen-θ gradient at each checkpoint; all checkpoints share one evaluation stream.
inline std::vector<RateCheckpoint> gradient_checkpoints(const ExperimentConfig& c, const RmlTrace& trace,
                                                        const std::vector<std::size_t>& steps)
{
    auto ys = estimator_stream(c);
    return parallel_map<RateCheckpoint>(steps.size(), [&](std::size_t i) {
        const auto& rec = trace.at_or_after(steps[i]);
        return RateCheckpoint{rec.n, estimate_grad(c.family, rec.theta, std::span<const Observation>(ys), c.est_burnin)};
    });
}

inline void cmd_rate_fit(const ExperimentConfig& c, const fs::path& out, std::ostream& log)
{
    auto trace = run_configured_rml(c);
    auto steps = checkpoint_steps(trace, c.rate_lo, c.rate_hi, c.rate_checkpoints);
    auto cps   = gradient_checkpoints(c, trace, steps);
    auto fit   = rate_fit(trace, cps, c.rate_lo, c.rate_hi);
    {
        auto file = open_output(out, "rate_checkpoints.csv");
        file << "n,gamma,grad_sq,grad_sq_noise,theta_dist\n";
        for (const auto& cp : cps)
        {
            const auto& rec = trace.at_or_after(cp.n);
            file << cp.n << ',' << format_double(rec.gamma) << ',' << format_double(cp.grad.value.squaredNorm()) << ','
                 << format_double(cp.grad.std_err.squaredNorm()) << ','
                 << format_double((rec.theta - trace.final_state.theta).norm()) << '\n';
        }
    }
    auto file = open_output(out, "rate_fit.csv");
    file << "degenerate,grad_slope,intercept,r2,theta_slope,n_lo,n_hi,points,r_max\n"
         << (fit.degenerate ? 1 : 0) << ',' << format_double(fit.slope) << ',' << format_double(fit.intercept) << ','
         << format_double(fit.r2) << ',' << (fit.theta_slope ? format_double(*fit.theta_slope) : std::string("nan"))
         << ',' << fit.n_lo << ',' << fit.n_hi << ',' << fit.n_points << ',' << format_double(fit.r_max) << '\n';
    if (fit.degenerate)
        log << "rate-fit: every checkpoint gradient is inside its noise floor; slopes omitted\n";
    else
        log << "rate-fit: slope of log|grad f|^2 vs log gamma = " << format_double(fit.slope) << " (r_max "
            << format_double(fit.r_max) << ")\n";
}

inline void cmd_loja_probe(const ExperimentConfig& c, const fs::path& out, std::ostream& log)
{
    Vector center = c.loja_center ? *c.loja_center : run_configured_rml(c).final_state.theta;
    auto ys       = estimator_stream(c);
    auto res      = lojasiewicz_probe(c.family, center, std::span<const Observation>(ys), c.est_burnin, c.loja_radius,
                                      c.loja_samples, Rng::stream(c.seed, "lojasiewicz"), c.box_ptr());
    auto file = open_output(out, "loja_probe.csv");
    file << "inconclusive,mu,log_m,r2,pairs";
    write_theta_header(file, center.size());
    file << '\n'
         << (res.inconclusive ? 1 : 0) << ',' << format_double(res.mu) << ',' << format_double(res.log_m) << ','
         << format_double(res.r2) << ',' << res.n_pairs;
    write_theta(file, center);
    file << '\n';
    if (res.inconclusive)
        log << "loja-probe: inconclusive (r2 " << format_double(res.r2) << ", " << res.n_pairs << " usable pairs)\n";
    else
        log << "loja-probe: mu = " << format_double(res.mu) << " (r2 " << format_double(res.r2) << ")\n";
}

} // namespace rmlhmm::harness

#endif // RMLHMM_HARNESS_HPP_INCLUDED
