#pragma once

#include <string>

#include "dited/eval.hpp"

namespace dited {

// Flat key=value run configuration ('#' comments). Unknown keys are
// rejected; defaults follow the model's standard hyperparameters
// (beta 0.02, tau 0.07, N 12, l 1, S 35, T 16, lr 0.002, wd 0.01).
struct RunConfig {
    ModelConfig model;

    double beta = 0.02;
    double tau = 0.07;
    ClsMode mode = ClsMode::ce;

    double lr = 0.002;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t horizon = 0;

    int64_t epochs = 30;
    int64_t cls_epochs = 30;
    int64_t batch = 16;
    uint64_t seed = 1;

    int64_t steps_a = 100;
    int64_t steps_b = 100;
    double lr_theta = 0.002;
    double lr_omega = 0.002;
    double lr_psi = 0.002;

    SynthSpec synth;

    int64_t way = 5;
    int64_t k = 1;
    int64_t trials = 200;
    ZMode z_mode = ZMode::mean;
    int64_t mc_samples = 1;

    OptimConfig optim_config() const;
    ElboOptions elbo_options() const;
    ClsOptions cls_options() const;
    AdaptConfig adapt_config() const;
    HarnessConfig harness_config() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_text(const RunConfig& rc);

// Binary model checkpoint: "DITEDCKP", version, length-prefixed config text,
// tensor directory (name, dtype tag f64=1/f32=2, rank, dims u64 LE, raw LE
// payload), trailing CRC32 of everything before it. f64 round-trips
// bit-exactly; f32 is a lossy export.
void save_checkpoint(const std::string& path, const ModelParams& params, bool as_f32 = false);
ModelParams load_checkpoint(const std::string& path);

// Binary dataset: "DITEDDAT", version, config summary, role tag, class list,
// then per record {label u32, T x Dx f32 LE features, optional ground-truth
// latents}. Features must stay strictly inside (0,1).
void save_dataset(const std::string& path, const Dataset& data);
Dataset load_dataset(const std::string& path);

std::string model_config_to_text(const ModelConfig& cfg);
ModelConfig model_config_from_text(const std::string& text);

}  // namespace dited
