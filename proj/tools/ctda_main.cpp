#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "ctda/harness.hpp"
#include "verify/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitVerification = 3;
constexpr int kExitIo = 4;

struct CommonArgs {
    std::string config_path;
    int jobs = 1;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config JSON")->required();
    cmd->add_option("--jobs", args.jobs, "parallel runs for sweeps")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", args.seed, "override all seeds in the config")->each([&](const std::string&) {
        args.seed_set = true;
    });
}

ctda::ExperimentConfig load_config(const CommonArgs& args) {
    auto cfg = ctda::ExperimentConfig::load(args.config_path);
    if (args.seed_set) ctda::apply_seed_override(cfg, args.seed);
    return cfg;
}

int run_verify_command(const CommonArgs& args) {
    const auto cfg = load_config(args);
    const std::uint64_t seed = args.seed_set ? args.seed : cfg.train.seed;
    const auto report = ctda::verify::run_all(seed);

    std::filesystem::create_directories(cfg.outputs / "verify");
    ctda::verify::write_report(report, cfg.outputs / "verify" / "report.json");

    for (const auto& c : report.checks)
        std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << ": measured " << c.measured << " (tolerance "
                  << c.tolerance << ") - " << c.details << "\n";
    if (!report.all_pass()) {
        std::cerr << "verification failed; see " << (cfg.outputs / "verify" / "report.json") << "\n";
        return kExitVerification;
    }
    std::cout << "all checks passed\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ctda: contrastive losses, discrepancy estimators and the synthetic patch laboratory"};
    app.require_subcommand(1);

    CommonArgs generate_args, train_args, sweep_args, verify_args, report_args;
    auto* cmd_generate = app.add_subcommand("generate", "generate the synthetic patch dataset");
    add_common(cmd_generate, generate_args);
    auto* cmd_train = app.add_subcommand("train", "train one strategy on the generated dataset");
    add_common(cmd_train, train_args);
    auto* cmd_sweep = app.add_subcommand("sweep-tau", "one training run per temperature, then correlations");
    add_common(cmd_sweep, sweep_args);
    auto* cmd_verify = app.add_subcommand("verify", "run the property suite and emit a pass/fail report");
    add_common(cmd_verify, verify_args);
    auto* cmd_report = app.add_subcommand("report", "emit CSV tables and SVG plots from existing runs");
    add_common(cmd_report, report_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (cmd_generate->parsed()) return ctda::run_generate(load_config(generate_args));
        if (cmd_train->parsed()) return ctda::run_train(load_config(train_args));
        if (cmd_sweep->parsed()) return ctda::run_sweep_tau(load_config(sweep_args), sweep_args.jobs);
        if (cmd_verify->parsed()) return run_verify_command(verify_args);
        if (cmd_report->parsed()) return ctda::run_report(load_config(report_args));
    } catch (const ctda::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ctda::VerificationFailure& e) {
        std::cerr << "verification failure: " << e.what() << "\n";
        return kExitVerification;
    } catch (const ctda::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitOk;
}
