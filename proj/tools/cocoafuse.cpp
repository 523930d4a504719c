#include <CLI11.hpp>

#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>

#include "cocoafuse/commands.hpp"

int main(int argc, char** argv) {
    using namespace cocoafuse;
    CLI::App app{"Bayesian mixture, blend and fusion of Gaussian experts"};
    app.require_subcommand(1);

    CommandOptions opts;
    std::uint64_t seed = 0;
    std::function<int(const CommandOptions&)> run;

    const auto add = [&](const char* name, const char* help, int (*fn)(const CommandOptions&)) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opts.config_path, "JSON config file")->required()->check(CLI::ExistingFile);
        sub->add_option("--output", opts.output, "output directory")->required();
        sub->add_option("--seed", seed, "overrides the config seed");
        sub->add_flag("--force", opts.force, "replace a non-empty output directory");
        if (std::string(name) == "fit")
            sub->add_flag("--allow-nonconverged", opts.allow_nonconverged, "exit 0 even when R-hat is high");
        sub->callback([&, fn, sub] {
            if (sub->count("--seed") > 0) opts.seed = seed;
            run = fn;
        });
    };
    add("simulate", "generate a synthetic train/test pair", cmd_simulate);
    add("fit", "sample the posterior", cmd_fit);
    add("evaluate", "score a fit on held-out data", cmd_evaluate);
    add("tune", "empirical-Bayes prior tuning", cmd_tune);
    add("select", "pick a model from fitted trials", cmd_select);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        return run(opts);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
}
