#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ltf/autoencoder.hpp"
#include "ltf/classifier.hpp"
#include "ltf/denoiser.hpp"
#include "ltf/diffusion.hpp"
#include "ltf/guidance.hpp"
#include "ltf/mining.hpp"

namespace ltf {

struct DatasetConfig {
    std::string kind = "default_benchmark";  // or "files"
    std::size_t val_per_class = 100;
    std::string train_csv, train_sidecar, val_csv, val_sidecar;
};

struct ScheduleConfig {
    int T = 100;
    double beta_start = 1e-4;
    double beta_end = 0.35;
    double eta = 0.0;
    int sample_steps = 50;
};

struct GenerateConfig {
    std::size_t n = 200;
    long cls = 0;  // -1 generates for every class
};

struct SelectWeightConfig {
    std::size_t n_per_cell = 40;
    std::vector<std::size_t> classes;  // empty = all classes
};

struct RunConfig {
    std::uint64_t seed = 1;
    int threads = 1;
    std::string out = "runs/out";

    DatasetConfig dataset;
    std::size_t d_model = 64;
    std::size_t trunk_layers = 3;
    std::size_t heads = 5;

    ClassifierTrainConfig classifier_training;
    AutoencoderConfig autoencoder;
    AeTrainConfig autoencoder_training;
    DenoiserConfig denoiser;  // d_z/C/T filled from context at build time
    DiffusionTrainConfig diffusion_training;
    ScheduleConfig schedule;

    SignalConfig signal;
    GuidanceConfig guidance;

    MiningSchedule mining_schedule;
    double mining_finetune_lr = 0.005;
    std::size_t mining_batch = 64;
    std::size_t mining_select_n_per_cell = 40;
    bool mining_reselect_each_round = false;

    GenerateConfig generate;
    SelectWeightConfig select_weight;
};

RunConfig default_run_config();

// Strict parse: unknown keys, type mismatches, and constraint violations are
// all collected and thrown together as a ConfigError.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string run_config_json(const RunConfig& cfg);

}  // namespace ltf
