#include <sstream>

#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace rmlhmm;
namespace t = rmlhmm::testing;

TEST(StepSize, Examples)
{
    EXPECT_DOUBLE_EQ(step_size({1.0, 0.9, 0}, 0), 1.0);
    EXPECT_DOUBLE_EQ(step_size({1.0, 1.0, 0}, 9), 0.1);
    StepSchedule s{0.5, 0.9, 10};
    for (std::size_t n = 0; n < 1000; ++n)
    {
        EXPECT_GT(step_size(s, n), 0.0);
        EXPECT_LT(step_size(s, n + 1), step_size(s, n));
    }
}

TEST(StepSize, ScheduleValidation)
{
    EXPECT_THROW((StepSchedule{0.0, 0.9, 0}.validate()), ValidationError);
    EXPECT_THROW((StepSchedule{1.0, 0.7, 0}.validate()), ValidationError);
    EXPECT_THROW((StepSchedule{1.0, 1.1, 0}.validate()), ValidationError);
    EXPECT_NO_THROW((StepSchedule{1.0, 1.0, 0}.validate()));
    EXPECT_DOUBLE_EQ((StepSchedule{1.0, 0.9, 0}.r_max()), 4.0);
    EXPECT_TRUE(std::isinf(StepSchedule{1.0, 1.0, 0}.r_max()));
}

TEST(StepSize, WeightedSquareSumIsCauchy)
{
    // Σ α_n² γ_n^{2r} with r = 2 < r_max = 4 for κ = 0.9
    StepSchedule s{0.1, 0.9, 0};
    const double r = 2.0;
    double gamma = 1.0, sum = 0.0, last_inc = 0.0, sum_at_half = 0.0;
    const std::size_t n_max = 1000000;
    for (std::size_t n = 0; n < n_max; ++n)
    {
        double a = step_size(s, n);
        last_inc = a * a * std::pow(gamma, 2.0 * r);
        sum += last_inc;
        gamma += a;
        if (n + 1 == n_max / 2)
            sum_at_half = sum;
    }
    EXPECT_LT(last_inc, 1e-6);
    EXPECT_LT(sum - sum_at_half, 1e-3 * sum);
}

TEST(RmlStep, OrderingMatchesHandComputation)
{
    Rng rng(1);
    for (Kind k : t::all_kinds())
    {
        auto f   = t::make_family(k, 3, 3);
        auto box = f.default_box();
        StepSchedule sched{0.7, 0.9, 3};
        RmlState st = RmlState::initial(f, f.project(t::random_theta(f, rng), box));
        for (auto y : t::random_observations(f, rng, 20))
            st = rml_step(f, st, y, sched, &box);

        Observation y = t::random_observation(f, rng);
        double alpha  = step_size(sched, st.n);
        Vector score  = score_increment(f, st.theta, st.u, st.v, y);
        Vector theta1 = f.project(Vector(st.theta + alpha * score), box);
        auto u1       = filter_step(f, theta1, st.u, y);
        auto v1       = derivative_step(f, theta1, st.u, st.v, y);

        StepInfo info;
        auto next = rml_step(f, st, y, sched, &box, &info);
        EXPECT_EQ(next.n, st.n + 1);
        EXPECT_EQ(next.theta, theta1) << to_string(k);
        EXPECT_LT((next.u.u - u1.u).cwiseAbs().maxCoeff(), 1e-15);
        EXPECT_LT((next.v.v - v1.v).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_DOUBLE_EQ(next.gamma, st.gamma + alpha);
        EXPECT_DOUBLE_EQ(info.alpha, alpha);
        EXPECT_DOUBLE_EQ(info.grad_norm, score.norm());
        EXPECT_DOUBLE_EQ(info.f_inc, phi(f, st.theta, st.u, y));
    }
}

TEST(RmlStep, ZeroScoreLeavesThetaAndFilters)
{
    Matrix r(2, 2);
    r << 0.6, 0.1, 0.3, 0.9;
    t::FixedR flat{r, 3};
    StepSchedule sched{1.0, 0.9, 0};
    RmlState st = RmlState::initial(flat, Vector::Constant(3, 0.4));
    FilterState u = st.u;
    for (int i = 0; i < 10; ++i)
    {
        st = rml_step(flat, st, 0.0, sched, nullptr);
        u  = filter_step(flat, st.theta, u, 0.0);
        EXPECT_EQ(st.theta, Vector::Constant(3, 0.4));
        EXPECT_LT((st.u.u - u.u).cwiseAbs().maxCoeff(), 1e-15);
    }
}

TEST(RmlStep, ZeroStepFreezesTheta)
{
    auto f = t::standard_family();
    Vector th = t::standard_theta();
    th[0] += 0.3;
    StepSchedule frozen{0.0, 0.9, 0}; // test-only degenerate schedule
    RmlState st = RmlState::initial(f, th);
    FrozenFilter<Family> filt(f, th);
    auto ys = sample_trajectory(t::standard_model(), 300, 4).observation_values();
    for (auto y : ys)
    {
        st = rml_step(f, st, y, frozen, nullptr);
        filt.advance(y);
    }
    EXPECT_EQ(st.theta, th);
    EXPECT_DOUBLE_EQ(st.gamma, 1.0);
    EXPECT_LT((st.u.u - filt.state().u).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((st.v.v - filt.derivative().v).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RmlStep, LeavingDomainWithoutBoxIsAnError)
{
    auto g = Family::gaussian(2, 1e-3);
    Vector th(8);
    th << 0, 0, 0, 0, 1.0, 2.0, 0.0, 0.0;
    RmlState st = RmlState::initial(g, th);
    // an outlier drives ∂f/∂λ strongly negative; a huge step overshoots λ < 0
    EXPECT_THROW(rml_step(g, st, 50.0, StepSchedule{1e3, 1.0, 0}, nullptr), DomainError);
}

TEST(RunRml, SingleStepTrace)
{
    auto f = t::standard_family();
    auto box = f.default_box();
    StepSchedule sched{0.5, 0.9, 10};
    auto model = t::standard_model();
    auto init  = RmlState::initial(f, Vector::Zero(8));
    auto trace = run_rml(f, model, init, sched, 1, &box, 100, 42);
    ASSERT_EQ(trace.records.size(), 1u);
    auto y    = sample_trajectory(model, 1, 42).observation(0);
    auto hand = rml_step(f, init, y, sched, &box);
    EXPECT_EQ(trace.records.back().theta, hand.theta);
    EXPECT_EQ(trace.final_state.gamma, hand.gamma);
    EXPECT_EQ(trace.records.back().n, 1u);
}

TEST(RunRml, DeterministicAndThinned)
{
    auto f = t::standard_family();
    auto box = f.default_box();
    StepSchedule sched{0.5, 0.9, 10};
    auto run = [&] { return run_rml(f, t::standard_model(), RmlState::initial(f, Vector::Zero(8)), sched, 2500, &box, 100, 9); };
    auto a = run(), b = run();
    ASSERT_EQ(a.records.size(), 25u);
    ASSERT_EQ(a.records.size(), b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i)
    {
        EXPECT_EQ(a.records[i].n, 100 * (i + 1));
        EXPECT_EQ(a.records[i].theta, b.records[i].theta);
        EXPECT_EQ(a.records[i].gamma, b.records[i].gamma);
    }
    std::ostringstream sa, sb;
    write_trace_csv(sa, a);
    write_trace_csv(sb, b);
    EXPECT_EQ(sa.str(), sb.str());
    EXPECT_EQ(sa.str().substr(0, sa.str().find('\n')), "n,gamma,alpha,f_inc,grad_inc_norm,theta_0,theta_1,theta_2,"
                                                      "theta_3,theta_4,theta_5,theta_6,theta_7");
}

TEST(RunRml, GammaIsOnePlusStepSum)
{
    auto f = t::standard_family();
    StepSchedule sched{0.5, 0.9, 10};
    auto trace = run_rml(f, t::standard_model(), RmlState::initial(f, Vector::Zero(8)), sched, 1000, nullptr, 1, 3);
    double gamma = 1.0;
    for (std::size_t i = 0; i < trace.records.size(); ++i)
    {
        gamma += step_size(sched, i);
        EXPECT_NEAR(trace.records[i].gamma, gamma, 1e-12);
        EXPECT_DOUBLE_EQ(trace.records[i].alpha, step_size(sched, i));
    }
}

TEST(RunRml, ProjectionKeepsIteratesInBox)
{
    Rng rng(5);
    for (Kind k : t::all_kinds())
    {
        auto f   = t::make_family(k, 2, 3);
        auto box = f.default_box();
        auto model = f.true_model(f.wrap(f.project(t::random_theta(f, rng), box)));
        auto trace = run_rml(f, model, RmlState::initial(f, f.sample_in_box(box, rng)), StepSchedule{5.0, 0.8, 0}, 3000,
                             &box, 1, 6);
        for (const auto& r : trace.records)
        {
            ASSERT_TRUE(box.contains(r.theta)) << to_string(k) << " at n=" << r.n;
            ASSERT_TRUE(f.in_domain(r.theta)) << to_string(k) << " at n=" << r.n;
            ASSERT_TRUE(validate_simplex(trace.final_state.u.u, 1e-9));
        }
    }
}

TEST(RunRml, GaussianModelReachesTrueLikelihood)
{
    auto g = Family::gaussian(2, 1e-3);
    Vector truth(8);
    truth << std::log(0.9), std::log(0.1), std::log(0.1), std::log(0.9), 1.0, 1.5, -1.0, 1.0;
    auto model = g.true_model(g.wrap(truth));

    ParamBox box{Vector::Constant(8, -3.0), Vector::Constant(8, 3.0)};
    box.lower.segment(4, 2).setConstant(0.2);
    box.upper.segment(4, 2).setConstant(5.0);
    Vector theta0(8);
    theta0 << 0, 0, 0, 0, 0.7, 0.9, -0.3, 0.4;
    auto trace = run_rml(g, model, RmlState::initial(g, theta0), StepSchedule{2.0, 0.9, 10}, 200000, &box, 1000, 17);

    auto ys      = sample_trajectory(model, 100000, Rng::stream(17, "evaluation")).observation_values();
    auto f_final = estimate_loglik(g, trace.final_state.theta, std::span<const Observation>(ys), 10000);
    auto f_true  = estimate_loglik(g, truth, std::span<const Observation>(ys), 10000);
    EXPECT_GE(f_final.value, f_true.value - 0.01)
        << "final theta " << trace.final_state.theta.transpose();
}
