#pragma once

#include <iosfwd>
#include <map>

#include "dited/synth.hpp"
#include "dited/train.hpp"

namespace dited {

enum class ZMode : uint8_t { mean = 0, sample = 1 };

struct EvalOptions {
    ClsMode mode = ClsMode::ce;
    ZMode z_mode = ZMode::mean;  // posterior mean at inference by default
    int64_t mc_samples = 1;      // logit averaging when sampling
    uint64_t seed = 0;
};

struct EvalResult {
    double top1 = 0.0;  // pooled correct / n_query
    std::map<int32_t, double> per_class;
    int64_t n_query = 0;
    double ep_mean = 0.0;  // episode accuracies, mean +- std
    double ep_std = 0.0;
    std::vector<double> per_episode;
};

// Frozen-pipeline predictions. class_ids selects the codebook rows in nce
// mode. In ce mode a non-empty ce_restrict limits the argmax to those head
// classes (frozen base head scored on an episode's class subset); the
// returned label is the position within the restriction.
std::vector<int32_t> predict_labels(const ModelParams& params,
                                    const std::vector<FeatureSequence>& queries,
                                    const std::vector<int32_t>& class_ids, const EvalOptions& opt,
                                    const std::vector<int32_t>& ce_restrict = {});

// Evaluate fixed params over episodes (no adaptation).
EvalResult evaluate(const Dataset& data, const std::vector<Episode>& episodes,
                    const ModelParams& params, const EvalOptions& opt);

struct EpisodicAdaptOptions {
    ElboOptions elbo;
    ClsOptions cls;
    AdaptConfig adapt;
    OptimConfig optim;
    uint64_t seed = 0;
};

// Adapt from the pretrained params on each episode's support set, then
// evaluate its query set. Episodes run independently (parallelized; results
// are reduced in episode order with per-episode rng substreams).
EvalResult episodic_adapt_eval(const Dataset& data, const std::vector<Episode>& episodes,
                               const ModelParams& pretrained, const EpisodicAdaptOptions& aopt,
                               const EvalOptions& eopt);

// ---------------------------------------------------------------------------
// harness

struct HarnessConfig {
    SynthSpec synth;
    ModelConfig model;  // full-model template; arms derive their variants
    double beta = 0.02;
    ClsOptions cls;
    OptimConfig optim;
    int64_t epochs = 30;
    int64_t cls_epochs = 30;
    int64_t batch = 16;
    AdaptConfig adapt;
    int64_t way = 5;
    int64_t k = 1;
    int64_t trials = 200;
    ZMode z_mode = ZMode::mean;
    int64_t mc_samples = 1;
    uint64_t seed = 7;
};

struct AblationArm {
    std::string name;
    EvalResult result;
    int64_t wins = 0, losses = 0, ties = 0;  // paired against the full model
    double sign_p = 1.0;                     // one-sided sign test
};

struct AblationGrid {
    std::vector<AblationArm> arms;  // fixed row order, full model last
    uint64_t episode_hash = 0;      // identical across arms by construction
};

extern const std::vector<std::string> kAblationArmOrder;

AblationGrid run_ablation(const HarnessConfig& hc, std::ostream* progress);

struct SweepRow {
    std::string axis;
    int64_t value = 0;
    EvalResult result;
};

// One axis varied at a time over N in {4,8,12,16}, l in {1,2,3},
// S in {10,20,35,50}; the other axes stay at their defaults.
std::vector<SweepRow> sweep_hyperparams(const HarnessConfig& hc, std::ostream* progress);

// One-sided sign test: P[Bin(wins+losses, 1/2) >= wins].
double sign_test_p(int64_t wins, int64_t losses);

// ---------------------------------------------------------------------------
// transferability diagnostic

struct LatentRanges {
    Tensor z_lo, z_hi;  // (N)
    Tensor u_lo, u_hi;  // (Du)
};

LatentRanges pooled_latent_ranges(const ModelParams& a, const Dataset& da, const ModelParams& b,
                                  const Dataset& db, int64_t max_seqs = 64);

// RMS discrepancy between the two models' recovered noise on shared random
// probe inputs, normalized by the pooled noise standard deviation.
double transition_agreement(const ModelParams& a, const ModelParams& b, const LatentRanges& ranges,
                            int64_t probes, uint64_t seed);

// Copy of params with one group freshly re-initialized (disagreement yardstick).
ModelParams reinit_group(const ModelParams& params, const std::string& group, uint64_t seed);

}  // namespace dited
