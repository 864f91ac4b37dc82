#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctda/synthgen.hpp"
#include "ctda/trainer.hpp"

namespace ctda {

// CLI exit codes: 0 ok, 2 config error, 3 verification failure, 4 I/O error.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct VerificationFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DatasetConfig {
    int n_patches = 999;
    DatasetMode mode = DatasetMode::Mixed;
    std::uint64_t split_seed = 0;
};

struct SweepConfig {
    std::vector<double> tau_grid = {0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 3.5, 5.0};
};

struct ExperimentConfig {
    GeneratorConfig generator;
    LutParams lut;
    DatasetConfig dataset;
    TrainConfig train;
    SweepConfig sweep;
    std::filesystem::path outputs = "runs/default";

    // Strict parse: unknown keys are rejected at every nesting level. The
    // CTDA_OUT environment variable, when set, re-roots a relative outputs
    // path.
    static ExperimentConfig load(const std::filesystem::path& path);
    std::filesystem::path dataset_dir() const { return outputs / "dataset"; }
};

// Override applied by the CLI --seed flag: reseeds generator, dataset split
// and training in one stroke.
void apply_seed_override(ExperimentConfig& config, std::uint64_t seed);

int run_generate(const ExperimentConfig& config);
int run_train(const ExperimentConfig& config);
int run_sweep_tau(const ExperimentConfig& config, int jobs);
int run_report(const ExperimentConfig& config);

std::filesystem::path run_dir(const ExperimentConfig& config, Strategy strategy);
std::filesystem::path sweep_dir(const ExperimentConfig& config, double tau);

// Correlation table emitted by the tau sweep.
const std::vector<std::string>& correlation_csv_header();

}  // namespace ctda
