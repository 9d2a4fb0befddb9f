// relucert: certify / train / verify / sweep.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "relucert.hpp"

namespace {

using relucert::ExperimentConfig;

std::optional<ExperimentConfig> load_config(const std::string& path, std::optional<std::uint64_t> seed) {
    try {
        ExperimentConfig cfg =
            relucert::load_file(path, [](std::istream& is) { return relucert::parse_config(is); });
        if (seed) cfg.seed = *seed;
        return cfg;
    } catch (const std::exception& e) {
        std::cerr << path << ": " << e.what() << '\n';
        return std::nullopt;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Convergence certificates for deep ReLU networks trained by gradient descent"};
    app.require_subcommand(1);

    std::string config_path, out;
    std::optional<std::uint64_t> seed;
    std::size_t trials = 100;
    std::string suite = "lemma1";

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "experiment config file")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "override the config seed");
        sub->add_option("--out", out, "output directory (else $" + std::string(relucert::kOutputEnvVar) +
                                          ", else the config's output key)");
    };

    CLI::App* certify = app.add_subcommand("certify", "evaluate the convergence certificate at initialization");
    add_common(certify);
    CLI::App* train = app.add_subcommand("train", "run audited gradient descent and write a trace");
    add_common(train);
    CLI::App* sweep = app.add_subcommand("sweep", "certificate and convergence rates over a (samples, width) grid");
    add_common(sweep);
    CLI::App* verify = app.add_subcommand("verify", "randomized checks of the structural inequalities");
    verify->add_option("--suite", suite, "ntk, lemma1 or descent")
        ->check(CLI::IsMember({"ntk", "lemma1", "descent"}));
    verify->add_option("--trials", trials, "number of random networks");
    verify->add_option("--seed", seed, "master seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : relucert::kExitUsage;
    }

    if (verify->parsed()) return relucert::cmd_verify(suite, trials, seed.value_or(0), std::cout, std::cerr);

    const auto cfg = load_config(config_path, seed);
    if (!cfg) return relucert::kExitUsage;
    if (certify->parsed())
        return relucert::cmd_certify(*cfg, std::cout, std::cerr, relucert::resolve_output_dir(out, *cfg, ""));
    if (train->parsed())
        return relucert::cmd_train(*cfg, std::cout, std::cerr, relucert::resolve_output_dir(out, *cfg, "relucert-out"));
    return relucert::cmd_sweep(*cfg, std::cout, std::cerr, relucert::resolve_output_dir(out, *cfg, "relucert-out"));
}
