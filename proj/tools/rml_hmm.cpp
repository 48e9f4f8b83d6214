// rml_hmm: command-line front end for recursive maximum likelihood experiments.
//
// Exit status: 0 success, 2 configuration error, 3 runtime degeneracy.

#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include <rmlhmm/harness.hpp>

namespace
{
constexpr int exit_config     = 2;
constexpr int exit_degenerate = 3;

using Command = std::function<void(const rmlhmm::ExperimentConfig&, const std::filesystem::path&, std::ostream&)>;

const std::map<std::string, std::pair<Command, std::string>>& commands()
{
    namespace h = rmlhmm::harness;
    static const std::map<std::string, std::pair<Command, std::string>> table{
        {"simulate", {h::cmd_simulate, "Sample a trajectory from the true model"}},
        {"run-rml", {h::cmd_run_rml, "Run the recursive maximum likelihood recursion"}},
        {"eval-f", {h::cmd_eval_f, "Monte-Carlo estimate of the asymptotic log-likelihood"}},
        {"eval-grad", {h::cmd_eval_grad, "Frozen-parameter estimate of its gradient"}},
        {"fd-grad", {h::cmd_fd_grad, "Finite-difference gradient with common random numbers"}},
        {"forgetting", {h::cmd_forgetting, "Filter forgetting probe"}},
        {"rate-fit", {h::cmd_rate_fit, "Convergence-rate fit over an RML run"}},
        {"loja-probe", {h::cmd_loja_probe, "Lojasiewicz exponent diagnostic"}},
    };
    return table;
}
} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Recursive maximum likelihood for hidden Markov models"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    std::size_t thin = 0;

    std::string selected;
    for (const auto& [name, entry] : commands())
    {
        auto* sub = app.add_subcommand(name, entry.second);
        sub->add_option("--config", config_path, "Experiment config (JSON)")->required();
        sub->add_option("--seed", seed, "Master seed (overrides the config)");
        sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
        sub->add_option("--thin", thin, "Trace thinning stride (overrides the config)")->check(CLI::PositiveNumber);
        sub->callback([&selected, n = name] { selected = n; });
    }

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp& e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError& e)
    {
        app.exit(e);
        return exit_config;
    }

    try
    {
        auto config = rmlhmm::load_config(config_path);
        for (auto* sub : app.get_subcommands())
        {
            if (sub->count("--seed"))
                config.seed = seed;
            if (sub->count("--thin"))
                config.thin = thin;
        }
        commands().at(selected).first(config, out_dir, std::cout);
    }
    catch (const rmlhmm::ValidationError& e)
    {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    }
    catch (const rmlhmm::DegeneracyError& e)
    {
        std::cerr << "runtime degeneracy: " << e.what() << '\n';
        return exit_degenerate;
    }
    catch (const rmlhmm::DomainError& e)
    {
        std::cerr << "runtime degeneracy: " << e.what() << '\n';
        return exit_degenerate;
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
