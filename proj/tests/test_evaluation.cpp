#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace rmlhmm;
namespace t = rmlhmm::testing;

namespace
{
std::vector<Observation> standard_stream(std::size_t n, std::uint64_t seed)
{
    return sample_trajectory(t::standard_model(), n, seed).observation_values();
}

// Trace whose records sit at the given steps with the given γ and θ.
RmlTrace synthetic_trace(const std::vector<double>& gammas, const std::vector<Vector>& thetas, Vector final_theta)
{
    RmlTrace tr;
    for (std::size_t i = 0; i < gammas.size(); ++i)
        tr.records.push_back({(i + 1) * 10, gammas[i], 0.0, 0.0, 0.0, thetas[i]});
    tr.final_state.theta = std::move(final_theta);
    tr.schedule          = {1.0, 0.9, 0};
    return tr;
}

RateCheckpoint checkpoint(std::size_t n, Vector grad, Vector err)
{
    GradEstimate g;
    g.value   = std::move(grad);
    g.std_err = std::move(err);
    return {n, g};
}
} // namespace

TEST(Statistics, BatchMeansAndLineFit)
{
    std::vector<double> flat(1000, 2.5);
    auto bm = batch_means(flat);
    EXPECT_DOUBLE_EQ(bm.mean, 2.5);
    EXPECT_DOUBLE_EQ(bm.std_err, 0.0);

    // batch means of an i.i.d. uniform series estimate sd/√n
    Rng rng(1);
    std::vector<double> xs(200000);
    for (auto& x : xs)
        x = rng.uniform();
    bm = batch_means(xs);
    EXPECT_NEAR(bm.std_err, std::sqrt(1.0 / 12.0 / 200000.0), 0.4 * std::sqrt(1.0 / 12.0 / 200000.0));

    std::vector<double> x{1, 2, 3, 4}, y{3, 5, 7, 9};
    auto fit = fit_line(x, y);
    EXPECT_NEAR(fit.slope, 2.0, 1e-15);
    EXPECT_NEAR(fit.intercept, 1.0, 1e-14);
    EXPECT_NEAR(fit.r2, 1.0, 1e-15);
    std::vector<double> one{1.0};
    EXPECT_THROW(fit_line(one, one), ValidationError);
}

TEST(Statistics, DefaultBurnin)
{
    EXPECT_EQ(default_burnin(100000), 10000u);
    EXPECT_EQ(default_burnin(5000), 1000u);
    EXPECT_EQ(default_burnin(500), 499u);
}

TEST(EstimateLoglik, UniformModelEntropy)
{
    auto f     = Family::discrete(Kind::DiscreteExponential, 2, 2);
    auto model = f.true_model(f.wrap(Vector::Zero(8)));
    auto est   = estimate_loglik(f, Vector::Zero(8), model, 20000, 2000, 5);
    EXPECT_NEAR(est.value, -std::log(2.0), std::max(3.0 * est.std_err, 1e-12));
    EXPECT_EQ(est.n_used, 20000u);
    EXPECT_EQ(est.burnin, 2000u);
}

TEST(EstimateLoglik, SingleRetainedIncrement)
{
    auto f    = t::standard_family();
    Vector th = t::standard_theta();
    th[1] += 0.4;
    auto ys  = standard_stream(101, 2);
    auto est = estimate_loglik(f, th, std::span<const Observation>(ys), 100);
    FrozenFilter<Family> filt(f, th);
    double last = 0.0;
    for (auto y : ys)
        last = filt.advance_filter(y);
    EXPECT_EQ(est.value, last);
    EXPECT_THROW(estimate_loglik(f, th, std::span<const Observation>(ys), 101), ValidationError);
}

TEST(EstimateLoglik, ReproducibleAcrossSeeds)
{
    auto f = t::standard_family();
    auto a = estimate_loglik(f, t::standard_theta(), t::standard_model(), 100000, 10000, 11);
    auto b = estimate_loglik(f, t::standard_theta(), t::standard_model(), 100000, 10000, 12);
    EXPECT_NE(a.stream, b.stream);
    EXPECT_LT(std::abs(a.value - b.value), 3.0 * std::hypot(a.std_err, b.std_err));
    // long-run reference for this model
    EXPECT_NEAR(a.value, -0.6314, 3.0 * a.std_err + 1e-3);
}

TEST(EstimateGrad, FlatLikelihoodIsZero)
{
    auto f     = Family::discrete(Kind::DiscreteExponential, 2, 2);
    auto model = t::standard_model();
    auto g     = estimate_grad(f, Vector::Zero(8), model, 20000, 2000, 3);
    for (Eigen::Index k = 0; k < 8; ++k)
        EXPECT_LE(std::abs(g.value[k]), std::max(3.0 * g.std_err[k], 1e-14));
}

TEST(EstimateGrad, AgreesWithFiniteDifferencesPerKind)
{
    Rng rng(21);
    for (Kind k : t::gradient_kinds())
        for (int s = 0; s < 10; ++s)
        {
            auto f     = t::make_family(k, 2, 3);
            auto model = f.true_model(f.wrap(t::random_theta(f, rng)));
            Vector th  = t::random_theta(f, rng);
            auto ys    = sample_trajectory(model, 20000, 100 + static_cast<std::uint64_t>(s)).observation_values();
            std::span<const Observation> span(ys);
            auto g  = estimate_grad(f, th, span, 2000);
            auto fd = fd_grad(f, th, span, 2000, 1e-4);
            for (Eigen::Index c = 0; c < th.size(); ++c)
                EXPECT_LE(std::abs(g.value[c] - fd.value[c]),
                          std::max(1e-2, 3.0 * std::hypot(g.std_err[c], fd.std_err[c])))
                    << to_string(k) << " sample " << s << " coordinate " << c;
        }
}

TEST(EstimateGrad, VanishesAtScannedMaximum)
{
    // one-parameter family θ(s) = θ_true + s·e_0, scanned on a common stream
    auto f    = t::standard_family();
    auto ys   = standard_stream(200000, 31);
    std::span<const Observation> span(ys);
    const std::size_t burnin = 20000;
    auto at = [&](double s) {
        Vector th = t::standard_theta();
        th[0] += s;
        return th;
    };
    std::vector<double> grid, vals;
    for (int i = -12; i <= 12; ++i)
    {
        grid.push_back(0.05 * i);
        vals.push_back(estimate_loglik(f, at(grid.back()), span, burnin).value);
    }
    auto best = static_cast<std::size_t>(std::max_element(vals.begin(), vals.end()) - vals.begin());
    ASSERT_GT(best, 0u);
    ASSERT_LT(best + 1, vals.size());
    // vertex of the parabola through the three best grid points
    double h = 0.05, fm = vals[best - 1], f0 = vals[best], fp = vals[best + 1];
    double s_star = grid[best] + 0.5 * h * (fm - fp) / (fm - 2.0 * f0 + fp);
    auto g        = estimate_grad(f, at(s_star), span, burnin);
    EXPECT_LE(std::abs(g.value[0]), 3.0 * g.std_err[0]) << "s* = " << s_star;
}

TEST(FdGrad, QuadraticStubIsExact)
{
    Matrix a(3, 3);
    a << 2, 0.5, 0, 0.5, 1, 0.2, 0, 0.2, 3;
    Vector b(3);
    b << 1, -2, 0.5;
    auto f    = [&](const Vector& x) { return -0.5 * x.dot(a * x) + b.dot(x); };
    Vector x0 = Vector::LinSpaced(3, -1.0, 1.0);
    Vector g  = central_difference(f, x0, 1e-3);
    EXPECT_LT((g - (b - a * x0)).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_THROW(central_difference(f, x0, 0.0), ValidationError);
}

TEST(FdGrad, CommonRandomNumbers)
{
    auto f  = t::standard_family();
    auto ys = standard_stream(5000, 4);
    auto fd = fd_grad(f, t::standard_theta(), std::span<const Observation>(ys), 1000, 1e-4);
    ASSERT_EQ(fd.streams.size(), 16u);
    for (auto s : fd.streams)
        EXPECT_EQ(s, fingerprint(ys));

    auto via_model = fd_grad(f, t::standard_theta(), t::standard_model(), 5000, 1000, 4, 1e-4);
    EXPECT_EQ(via_model.value, fd.value);
}

TEST(RateFit, RecoversExactPowerLaws)
{
    std::vector<double> gammas;
    std::vector<Vector> thetas;
    std::vector<RateCheckpoint> grad_law, const_law;
    Vector final_theta = Vector::Zero(2);
    for (int i = 0; i < 12; ++i)
    {
        double gamma = std::pow(1.7, i) + 1.0;
        gammas.push_back(gamma);
        Vector th(2);
        th << std::pow(gamma, -0.5), 0.0;
        thetas.push_back(th);
        std::size_t n = static_cast<std::size_t>(i + 1) * 10;
        grad_law.push_back(checkpoint(n, Eigen::Vector2d(0.6 / gamma, 0.8 / gamma), Vector::Zero(2)));
        const_law.push_back(checkpoint(n, Eigen::Vector2d(0.3, 0.1), Vector::Zero(2)));
    }
    auto tr  = synthetic_trace(gammas, thetas, final_theta);
    auto fit = rate_fit(tr, grad_law, 10, 120);
    ASSERT_FALSE(fit.degenerate);
    EXPECT_NEAR(fit.slope, -2.0, 1e-6);
    EXPECT_NEAR(fit.r2, 1.0, 1e-12);
    ASSERT_TRUE(fit.theta_slope.has_value());
    EXPECT_NEAR(*fit.theta_slope, -0.5, 1e-6);
    EXPECT_DOUBLE_EQ(fit.r_max, 4.0);
    EXPECT_EQ(fit.n_points, 12u);

    EXPECT_NEAR(rate_fit(tr, const_law, 10, 120).slope, 0.0, 1e-12);

    // window restriction
    EXPECT_EQ(rate_fit(tr, grad_law, 30, 90).n_points, 7u);
    EXPECT_THROW(rate_fit(tr, grad_law, 10, 40), ValidationError);
}

TEST(RateFit, NoiseFloorFlagsDegenerateWindow)
{
    std::vector<double> gammas;
    std::vector<Vector> thetas;
    std::vector<RateCheckpoint> cps;
    for (int i = 0; i < 6; ++i)
    {
        gammas.push_back(2.0 + i);
        thetas.push_back(Vector::Constant(1, 1.0 / (i + 1)));
        cps.push_back(checkpoint(static_cast<std::size_t>(i + 1) * 10, Vector::Constant(1, 1e-3),
                                 Vector::Constant(1, 1e-2)));
    }
    auto fit = rate_fit(synthetic_trace(gammas, thetas, Vector::Zero(1)), cps, 10, 60);
    EXPECT_TRUE(fit.degenerate);
}

TEST(RateExponents, Formulas)
{
    auto e = rate_exponents(2.0, 1.5);
    EXPECT_TRUE(std::isinf(e.r_hat));
    EXPECT_DOUBLE_EQ(e.p_hat, 3.0);
    EXPECT_DOUBLE_EQ(e.q_hat, 0.5);
    e = rate_exponents(1.5, 4.0);
    EXPECT_DOUBLE_EQ(e.r_hat, 2.0);
    EXPECT_DOUBLE_EQ(e.p_hat, 3.0);
    EXPECT_DOUBLE_EQ(e.q_hat, 1.0);
}

TEST(Lojasiewicz, QuadraticStub)
{
    auto value = [](const Vector& x) { return std::pair<double, double>{-x.squaredNorm(), 0.0}; };
    auto grad  = [](const Vector& x) { return std::pair<Vector, Vector>{-2.0 * x, Vector::Zero(x.size())}; };
    auto res   = lojasiewicz_probe(Vector::Zero(2), 1.0, 30, Rng(7), value, grad);
    ASSERT_FALSE(res.inconclusive);
    EXPECT_NEAR(res.mu, 2.0, 0.1);
}

TEST(Lojasiewicz, ThreeHalvesPowerStub)
{
    auto value = [](const Vector& x) { return std::pair<double, double>{-std::pow(std::abs(x[0]), 1.5), 0.0}; };
    auto grad  = [](const Vector& x) {
        double g = -1.5 * std::sqrt(std::abs(x[0])) * (x[0] > 0 ? 1.0 : -1.0);
        return std::pair<Vector, Vector>{Vector::Constant(1, g), Vector::Zero(1)};
    };
    auto res = lojasiewicz_probe(Vector::Zero(1), 1.0, 30, Rng(8), value, grad);
    ASSERT_FALSE(res.inconclusive);
    EXPECT_NEAR(res.mu, 3.0, 0.2);
}

TEST(Lojasiewicz, NoiseDominatedIsInconclusive)
{
    auto value = [](const Vector& x) { return std::pair<double, double>{-x.squaredNorm(), 10.0}; };
    auto grad  = [](const Vector& x) { return std::pair<Vector, Vector>{-2.0 * x, Vector::Zero(x.size())}; };
    auto res   = lojasiewicz_probe(Vector::Zero(2), 1.0, 30, Rng(9), value, grad);
    EXPECT_TRUE(res.inconclusive);
}

TEST(Lojasiewicz, HmmProbeIsInRangeOrInconclusive)
{
    auto f   = t::standard_family();
    auto ys  = standard_stream(30000, 10);
    auto box = f.default_box();
    auto res = lojasiewicz_probe(f, t::standard_theta(), std::span<const Observation>(ys), 3000, 0.3, 12, Rng(10), &box);
    if (!res.inconclusive)
    {
        EXPECT_GT(res.mu, 1.0);
        EXPECT_LE(res.mu, 2.0 + 0.3);
    }
    SUCCEED() << "mu=" << res.mu << " r2=" << res.r2 << " inconclusive=" << res.inconclusive;
}

TEST(Forgetting, RandomInstancesContract)
{
    Rng rng(12);
    for (int s = 0; s < 20; ++s)
    {
        Kind k     = t::all_kinds()[static_cast<std::size_t>(s) % t::all_kinds().size()];
        auto f     = t::make_family(k, 2 + static_cast<std::size_t>(s % 2), 3);
        Vector th  = t::random_theta(f, rng);
        auto model = f.true_model(f.wrap(th));
        FilterState u1{Vector::Unit(static_cast<Eigen::Index>(f.n_states()), 0)};
        FilterState u2{Vector::Unit(static_cast<Eigen::Index>(f.n_states()), 1)};
        auto res = forgetting_probe(f, th, model, u1, u2, 50, 200 + static_cast<std::uint64_t>(s));
        EXPECT_LT(res.slope, 0.0) << to_string(k) << " instance " << s;
    }
}
