// Experiment driver. Exit codes: 0 all checks passed, 2 bad config or
// arguments, 3 run finished without resolving (longer horizon needed),
// 4 a verification check failed. Output files are written atomically and
// depend only on the config (and seed), byte for byte.

#include <cstdint>
#include <exception>
#include <iostream>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "spherealign/errors.hpp"

namespace {

struct SubState {
    std::string config;
    std::string out = ".";
    std::uint64_t seed = 0;
    bool quiet = false;
    CLI::Option* seed_opt = nullptr;
    int (*fn)(const spherealign::cli::CommonArgs&) = nullptr;
};

int dispatch(const SubState& st) {
    spherealign::cli::CommonArgs args;
    args.config_path = st.config;
    args.out_dir = st.out;
    args.quiet = st.quiet;
    if (st.seed_opt->count() > 0) args.seed = st.seed;
    try {
        return st.fn(args);
    } catch (const spherealign::cli::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const spherealign::InconclusiveError& e) {
        std::cerr << "inconclusive: " << e.what() << "\n";
        return 3;
    } catch (const spherealign::NonConvergenceError& e) {
        std::cerr << "inconclusive: " << e.what() << "\n";
        return 3;
    } catch (const spherealign::DegenerateFieldError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"alignment dynamics experiments on the sphere"};
    app.require_subcommand(1);

    std::map<const CLI::App*, std::shared_ptr<SubState>> states;
    const auto add = [&](const char* name, const char* desc,
                         int (*fn)(const spherealign::cli::CommonArgs&)) {
        CLI::App* sub = app.add_subcommand(name, desc);
        auto st = std::make_shared<SubState>();
        st->fn = fn;
        sub->add_option("--config", st->config, "JSON experiment description")->required();
        sub->add_option("--out", st->out, "output directory (default: current)");
        st->seed_opt = sub->add_option("--seed", st->seed, "override the config seed");
        sub->add_flag("--quiet", st->quiet, "suppress the summary line");
        states.emplace(sub, std::move(st));
    };

    add("particles", "integrate a finite particle system and audit its limit",
        spherealign::cli::run_particles);
    add("vback", "reconstruct the backward trajectory of a recorded field",
        spherealign::cli::run_vback);
    add("kinetic", "solve the axisymmetric kinetic ODE and check decay envelopes",
        spherealign::cli::run_kinetic);
    add("slowdecay", "verify prescribed slow decay of the alignment deficit",
        spherealign::cli::run_slowdecay);
    add("measure", "evolve a sampled measure and audit its two-atom weak limit",
        spherealign::cli::run_measure);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    return dispatch(*states.at(app.get_subcommands().front()));
}
