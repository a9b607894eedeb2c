#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "hdivmm/cli.hpp"

namespace {

void configure_logging() {
    spdlog::set_level(spdlog::level::warn);
    const char* env = std::getenv("HDIV_MINIMAX_LOG");
    if (!env) return;
    const std::string v = env;
    if (v == "error") spdlog::set_level(spdlog::level::err);
    else if (v == "info") spdlog::set_level(spdlog::level::info);
    else if (v == "debug") spdlog::set_level(spdlog::level::debug);
    else spdlog::warn("HDIV_MINIMAX_LOG={} not recognised, expected error, info or debug", v);
}

} // namespace

int main(int argc, char** argv) {
    configure_logging();

    CLI::App app{"Guaranteed (minimax) estimation for mixed finite element elliptic problems", "hdiv-minimax"};
    app.set_version_flag("--version", hdivmm::kVersion);
    app.require_subcommand(1);

    std::string config;
    hdivmm::RunOverrides overrides;
    std::string out;
    std::uint64_t seed = 0;
    int threads = 1;

    const char* names[] = {"forward", "estimate", "reconstruct", "estimate-rhs", "converge", "montecarlo"};
    const char* help[] = {"solve the forward mixed problem",
                          "minimax estimate of a functional of (j, phi)",
                          "reconstruct (j, phi) and f from observations",
                          "minimax estimate of a functional of f",
                          "refinement study of forward errors and estimates",
                          "Monte Carlo check of the guaranteed error"};
    for (int i = 0; i < 6; ++i) {
        CLI::App* sub = app.add_subcommand(names[i], help[i]);
        sub->add_option("--config", config, "JSON run config")->required();
        sub->add_option("--out", out, "output directory");
        sub->add_option("--seed", seed, "random seed");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    CLI::App* sub = app.get_subcommands().front();
    if (sub->count("--out")) overrides.out = out;
    if (sub->count("--seed")) overrides.seed = seed;
    if (sub->count("--threads")) overrides.threads = threads;
    const auto command = hdivmm::parse_command(sub->get_name());
    return hdivmm::run(*command, config, overrides);
}
