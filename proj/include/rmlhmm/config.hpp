#ifndef RMLHMM_CONFIG_HPP_INCLUDED
#define RMLHMM_CONFIG_HPP_INCLUDED

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "evaluation.hpp"
#include "model.hpp"
#include "params.hpp"
#include "rml.hpp"

namespace rmlhmm
{
/// Experiment description loaded from a JSON file (schema in configs/SCHEMA.md).
/// Everything is cross-checked against the library's preconditions at load time.
struct ExperimentConfig
{
    std::uint64_t seed = 1;

    Family true_family = Family::discrete(Kind::DiscreteExponential, 2, 2);
    Vector true_theta;
    TrueModel true_model;

    Family family = Family::discrete(Kind::DiscreteExponential, 2, 2);
    ParamBox box;
    bool projection = true;
    std::optional<Vector> theta0;

    StepSchedule schedule;
    std::size_t run_steps = 100000;
    std::size_t thin      = 100;

    std::size_t simulate_steps = 1000;

    std::size_t est_n      = 100000;
    std::size_t est_burnin = 10000;
    double fd_h            = 1e-4;
    Vector eval_theta;

    std::size_t forget_n = 50;
    FilterState forget_u1;
    FilterState forget_u2;

    std::size_t rate_checkpoints = 11;
    std::size_t rate_lo          = 1000;
    std::size_t rate_hi          = 100000;

    double loja_radius       = 0.1;
    std::size_t loja_samples = 20;
    std::optional<Vector> loja_center;

    /// θ₀ from the config, or a uniform draw in the box from stream "theta0".
    Vector initial_theta() const
    {
        if (theta0)
            return *theta0;
        Rng rng = Rng::stream(seed, "theta0");
        return family.sample_in_box(box, rng);
    }

    const ParamBox* box_ptr() const { return projection ? &box : nullptr; }
};

namespace detail
{
    using json = nlohmann::json;

    class ConfigReader
    {
    public:
        explicit ConfigReader(const json& root) : root_(root) {}

        const json* find(const std::string& path) const
        {
            const json* node = &root_;
            std::size_t start = 0;
            while (start <= path.size())
            {
                std::size_t dot = path.find('.', start);
                std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
                if (!node->is_object() || !node->contains(key))
                    return nullptr;
                node = &(*node)[key];
                if (dot == std::string::npos)
                    break;
                start = dot + 1;
            }
            return node;
        }

        const json& require(const std::string& path) const
        {
            const json* node = find(path);
            if (!node)
                fail(path, "missing required field");
            return *node;
        }

        [[noreturn]] static void fail(const std::string& path, const std::string& what)
        {
            throw ValidationError("config field '" + path + "': " + what);
        }

        template <typename T>
        T get(const std::string& path, T fallback) const
        {
            const json* node = find(path);
            return node ? as<T>(*node, path) : fallback;
        }

        template <typename T>
        T get(const std::string& path) const
        {
            return as<T>(require(path), path);
        }

        template <typename T>
        static T as(const json& node, const std::string& path)
        {
            try
            {
                if constexpr (std::is_same_v<T, bool>)
                {
                    if (!node.is_boolean())
                        fail(path, "expected true or false");
                }
                else if constexpr (std::is_unsigned_v<T>)
                {
                    if (!node.is_number_unsigned() && !(node.is_number_integer() && node.get<long long>() >= 0))
                        fail(path, "expected a non-negative integer");
                }
                else if constexpr (std::is_floating_point_v<T>)
                {
                    if (!node.is_number())
                        fail(path, "expected a number");
                }
                else if constexpr (std::is_same_v<T, std::string>)
                {
                    if (!node.is_string())
                        fail(path, "expected a string");
                }
                return node.get<T>();
            }
            catch (const json::exception& e)
            {
                fail(path, e.what());
            }
        }

        static Vector vector(const json& node, const std::string& path, std::optional<Eigen::Index> size = {})
        {
            if (node.is_number() && size)
                return Vector::Constant(*size, node.get<double>());
            if (!node.is_array())
                fail(path, "expected an array of numbers");
            Vector v(static_cast<Eigen::Index>(node.size()));
            for (std::size_t i = 0; i < node.size(); ++i)
            {
                if (!node[i].is_number())
                    fail(path + "[" + std::to_string(i) + "]", "expected a number");
                v[static_cast<Eigen::Index>(i)] = node[i].get<double>();
            }
            if (size && v.size() != *size)
                fail(path, "expected " + std::to_string(*size) + " entries, got " + std::to_string(v.size()));
            return v;
        }

        Vector vector(const std::string& path, std::optional<Eigen::Index> size = {}) const
        {
            return vector(require(path), path, size);
        }

    private:
        const json& root_;
    };

    inline Component parse_component(const json& node, const std::string& path)
    {
        if (!node.is_object())
            ConfigReader::fail(path, "expected a component object");
        ConfigReader r(node);
        auto shape = r.get<std::string>("shape");
        try
        {
            Component c;
            if (shape == "gaussian")
                c = Component::gaussian(r.get<double>("mean"), r.get<double>("sd"));
            else if (shape == "uniform")
                c = Component::uniform(r.get<double>("lo"), r.get<double>("hi"));
            else if (shape == "truncated_exponential")
                c = Component::truncated_exponential(r.get<double>("rate"), r.get<double>("lo"), r.get<double>("hi"));
            else
                ConfigReader::fail(path + ".shape", "unknown shape '" + shape + "'");
            c.validate();
            return c;
        }
        catch (const ValidationError& e)
        {
            ConfigReader::fail(path, e.what());
        }
    }

    inline Family parse_family(const ConfigReader& r, const std::string& path)
    {
        Kind kind;
        try
        {
            kind = kind_from_string(r.get<std::string>(path + ".kind"));
        }
        catch (const ValidationError& e)
        {
            if (std::string(e.what()).find("config field") == 0)
                throw;
            ConfigReader::fail(path + ".kind", e.what());
        }
        auto n_states = r.get<std::size_t>(path + ".n_states");
        if (n_states < 2)
            ConfigReader::fail(path + ".n_states", "need at least 2 states");
        switch (kind)
        {
        case Kind::MixtureWeights:
        {
            const json& comps = r.require(path + ".components");
            if (!comps.is_array() || comps.size() != n_states)
                ConfigReader::fail(path + ".components", "expected one component list per state");
            std::vector<std::vector<Component>> all(n_states);
            for (std::size_t x = 0; x < n_states; ++x)
            {
                std::string p = path + ".components[" + std::to_string(x) + "]";
                if (!comps[x].is_array() || comps[x].empty())
                    ConfigReader::fail(p, "expected a non-empty component list");
                for (std::size_t k = 0; k < comps[x].size(); ++k)
                    all[x].push_back(parse_component(comps[x][k], p + "[" + std::to_string(k) + "]"));
                if (all[x].size() != all[0].size())
                    ConfigReader::fail(p, "every state needs the same number of components");
            }
            return Family::mixture(n_states, std::move(all));
        }
        case Kind::GaussianObs:
        {
            double sep = r.get<double>(path + ".separation", 1e-3);
            if (!(sep > 0.0))
                ConfigReader::fail(path + ".separation", "must be > 0");
            return Family::gaussian(n_states, sep);
        }
        default:
        {
            auto n_symbols = r.get<std::size_t>(path + ".n_symbols");
            if (n_symbols < 1)
                ConfigReader::fail(path + ".n_symbols", "need at least 1 symbol");
            return Family::discrete(kind, n_states, n_symbols);
        }
        }
    }

    template <typename Fn>
    auto with_field(const std::string& path, Fn&& fn)
    {
        try
        {
            return fn();
        }
        catch (const ValidationError& e)
        {
            if (std::string(e.what()).find("config field") == 0)
                throw;
            ConfigReader::fail(path, e.what());
        }
        catch (const DomainError& e)
        {
            ConfigReader::fail(path, e.what());
        }
    }

    inline FilterState parse_filter_state(const ConfigReader& r, const std::string& path, const FilterState& fallback,
                                          std::size_t n)
    {
        if (!r.find(path))
            return fallback;
        Vector u = r.vector(path, static_cast<Eigen::Index>(n));
        if (!validate_simplex(u, 1e-9))
            ConfigReader::fail(path, "not a probability vector");
        return {u};
    }
} // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& root)
{
    using detail::ConfigReader;
    if (!root.is_object())
        throw ValidationError("config: top level must be an object");
    ConfigReader r(root);
    ExperimentConfig c;

    c.seed = r.get<std::uint64_t>("seed", 1);

    c.true_family = detail::parse_family(r, "true_model.family");
    const auto d_true = static_cast<Eigen::Index>(c.true_family.dim());
    c.true_theta      = r.vector("true_model.theta", d_true);
    detail::with_field("true_model.theta", [&] { c.true_family.check_domain(c.true_theta); return 0; });
    Vector initial;
    if (r.find("true_model.initial"))
        initial = r.vector("true_model.initial", static_cast<Eigen::Index>(c.true_family.n_states()));
    c.true_model = detail::with_field("true_model", [&] {
        return c.true_family.true_model(c.true_family.wrap(c.true_theta), initial);
    });

    c.family = r.find("candidate.family") ? detail::parse_family(r, "candidate.family") : c.true_family;
    if (c.family.n_states() < 2)
        ConfigReader::fail("candidate.family.n_states", "need at least 2 states");
    if (is_discrete(c.family.kind()) != is_discrete(c.true_model.emitter))
        ConfigReader::fail("candidate.family.kind", "observation type does not match the true model");
    if (is_discrete(c.family.kind()))
    {
        auto ny = std::get<DiscreteEmitter>(c.true_model.emitter).n_symbols();
        if (c.family.n_obs() != ny)
            ConfigReader::fail("candidate.family.n_symbols", "does not match the true model's symbol count");
    }
    const auto d = static_cast<Eigen::Index>(c.family.dim());

    c.box = c.family.default_box();
    if (r.find("candidate.box.lower"))
        c.box.lower = r.vector("candidate.box.lower", d);
    if (r.find("candidate.box.upper"))
        c.box.upper = r.vector("candidate.box.upper", d);
    detail::with_field("candidate.box", [&] { c.family.validate_box(c.box); return 0; });
    c.projection = r.get<bool>("candidate.projection", true);
    if (r.find("candidate.theta0"))
    {
        Vector t0 = r.vector("candidate.theta0", d);
        detail::with_field("candidate.theta0", [&] { c.family.check_domain(t0); return 0; });
        c.theta0 = t0;
    }

    c.schedule.a      = r.get<double>("schedule.a", c.schedule.a);
    c.schedule.kappa  = r.get<double>("schedule.kappa", c.schedule.kappa);
    c.schedule.offset = r.get<std::size_t>("schedule.offset", c.schedule.offset);
    detail::with_field("schedule", [&] { c.schedule.validate(); return 0; });

    c.run_steps = r.get<std::size_t>("run.steps", c.run_steps);
    c.thin      = r.get<std::size_t>("run.thin", c.thin);
    if (c.run_steps < 1)
        ConfigReader::fail("run.steps", "must be >= 1");
    if (c.thin < 1)
        ConfigReader::fail("run.thin", "must be >= 1");

    c.simulate_steps = r.get<std::size_t>("simulate.steps", c.simulate_steps);
    if (c.simulate_steps < 1)
        ConfigReader::fail("simulate.steps", "must be >= 1");

    c.est_n      = r.get<std::size_t>("estimator.n", c.est_n);
    c.est_burnin = r.get<std::size_t>("estimator.burnin", default_burnin(c.est_n));
    c.fd_h       = r.get<double>("estimator.h", c.fd_h);
    if (!(c.est_n > c.est_burnin))
        ConfigReader::fail("estimator.burnin", "must be smaller than estimator.n");
    if (!(c.fd_h > 0.0))
        ConfigReader::fail("estimator.h", "must be > 0");
    if (r.find("estimator.theta"))
        c.eval_theta = r.vector("estimator.theta", d);
    else if (c.family.kind() == c.true_family.kind() && c.family.dims() == c.true_family.dims())
        c.eval_theta = c.true_theta;
    else
        ConfigReader::fail("estimator.theta", "missing required field (candidate family differs from the true model)");
    detail::with_field("estimator.theta", [&] { c.family.check_domain(c.eval_theta); return 0; });

    const std::size_t nx = c.family.n_states();
    FilterState e1{Vector::Unit(static_cast<Eigen::Index>(nx), 0)};
    FilterState e2{Vector::Unit(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(nx - 1))};
    c.forget_n  = r.get<std::size_t>("forgetting.n", c.forget_n);
    c.forget_u1 = detail::parse_filter_state(r, "forgetting.u1", e1, nx);
    c.forget_u2 = detail::parse_filter_state(r, "forgetting.u2", e2, nx);
    if (c.forget_n < 2)
        ConfigReader::fail("forgetting.n", "must be >= 2");

    c.rate_checkpoints = r.get<std::size_t>("rate_fit.checkpoints", c.rate_checkpoints);
    c.rate_hi          = r.get<std::size_t>("rate_fit.window_hi", c.run_steps);
    c.rate_lo          = r.get<std::size_t>("rate_fit.window_lo", std::max<std::size_t>(1, c.rate_hi / 100));
    if (c.rate_checkpoints < 5)
        ConfigReader::fail("rate_fit.checkpoints", "must be >= 5");
    if (!(c.rate_lo < c.rate_hi) || c.rate_hi > c.run_steps)
        ConfigReader::fail("rate_fit.window_lo", "need window_lo < window_hi <= run.steps");

    c.loja_radius  = r.get<double>("loja.radius", c.loja_radius);
    c.loja_samples = r.get<std::size_t>("loja.samples", c.loja_samples);
    if (!(c.loja_radius > 0.0))
        ConfigReader::fail("loja.radius", "must be > 0");
    if (c.loja_samples < 3)
        ConfigReader::fail("loja.samples", "must be >= 3");
    if (r.find("loja.theta_hat"))
    {
        Vector t = r.vector("loja.theta_hat", d);
        detail::with_field("loja.theta_hat", [&] { c.family.check_domain(t); return 0; });
        c.loja_center = t;
    }
    return c;
}

/// Parses a config file; JSON syntax errors report the byte offset.
inline ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ValidationError("cannot open config file '" + path + "'");
    nlohmann::json root;
    try
    {
        root = nlohmann::json::parse(in);
    }
    catch (const nlohmann::json::parse_error& e)
    {
        throw ValidationError("config '" + path + "': " + e.what());
    }
    return parse_config(root);
}

} // namespace rmlhmm

#endif // RMLHMM_CONFIG_HPP_INCLUDED
