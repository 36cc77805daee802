#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "gsde/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Mean-field G-SDE experiment runner"};
    std::string config;
    std::optional<std::string> output;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    app.add_option("--config", config, "Experiment config (JSON)")->required();
    app.add_option("--output", output, "Output directory (overrides the config)");
    app.add_option("--seed", seed, "Random seed (overrides solver.seed)");
    app.add_option("--threads", threads, "Worker threads (default: hardware concurrency)")->check(CLI::PositiveNumber);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    gsde::experiment::Overrides ov{output, seed, threads};
    return gsde::experiment::run(config, ov, std::cerr);
}
