#pragma once

#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dited/objectives.hpp"

namespace dited {

struct OptimConfig {
    double lr = 0.002;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    int64_t horizon = 0;  // cosine annealing horizon in steps; 0 = set by the stage
    std::map<std::string, double> group_lr;  // per-group base-lr overrides
};

// AdamW with decoupled weight decay and cosine-annealed learning rate
// lr(step) = 0.5 * lr0 * (1 + cos(pi * step / horizon)), clamped to 0 past
// the horizon. Frozen parameter groups are left bit-identical.
class AdamW {
public:
    explicit AdamW(OptimConfig cfg);

    void step(ModelParams& params, const GradientMap& grads,
              const std::map<std::string, int>& leaf_ids);

    double current_lr() const;  // schedule value for the upcoming step
    int64_t step_count() const { return step_count_; }

private:
    struct Moments {
        std::vector<double> m, v;
    };
    OptimConfig cfg_;
    std::map<std::string, Moments> state_;
    int64_t step_count_ = 0;
};

enum class Stage : uint8_t {
    pretrain_dynamics,
    train_classifier,
    adapt_representation,
    adapt_classifier,
};

const char* stage_name(Stage s);

// Stage -> trainable groups is fixed; anything else is a construction error.
struct TrainPlan {
    Stage stage;
    std::set<std::string> trainable;
    int64_t epochs = 0;
    int64_t batch = 16;
    uint64_t seed = 0;
    bool monotone_guard = true;  // enforce the smoothed-loss contract in stage 1

    static TrainPlan make(Stage stage, int64_t epochs, int64_t batch, uint64_t seed);
    static const std::set<std::string>& canonical_groups(Stage stage);
};

struct ClsOptions {
    ClsMode mode = ClsMode::ce;
    double tau = 0.07;
};

struct AdaptConfig {
    int64_t steps_a = 100;
    int64_t steps_b = 100;
    double lr_theta = 0.002;
    double lr_omega = 0.002;
    double lr_psi = 0.002;
    bool skip_phase_a = false;       // representation frozen, classifier only
    bool finetune_dynamics = false;  // phase A also updates phi and gamma
};

struct AdaptReport {
    int64_t tuned_param_count = 0;
};

// Stage 1: fit {omega, theta, phi, gamma} to the ELBO. The epoch-smoothed
// total (window 5) must be non-increasing after epoch 5 or the run fails.
ModelParams pretrain_stage1(const std::vector<FeatureSequence>& data, const ModelConfig& cfg,
                            const ElboOptions& elbo_opt, const OptimConfig& optim,
                            const TrainPlan& plan, std::ostream* log);

// Stage 2: train {psi} on latents drawn through the frozen encoder pipeline.
ModelParams train_classifier_stage2(const std::vector<FeatureSequence>& data, ModelParams params,
                                    const ClsOptions& cls, const OptimConfig& optim,
                                    const TrainPlan& plan, std::ostream* log);

// Few-shot adaptation: phase A updates {omega, theta} by the ELBO on the
// support set, phase B updates {psi} by the classification loss. In ce mode
// the classifier head is re-initialized for the episode's label set
// (class_ids gives the dataset-local id per episode label, used by nce).
ModelParams adapt(const std::vector<FeatureSequence>& support, const ModelParams& pretrained,
                  const std::vector<int32_t>& class_ids, const ElboOptions& elbo_opt,
                  const ClsOptions& cls, const AdaptConfig& acfg, const OptimConfig& optim,
                  uint64_t seed, AdaptReport* report, std::ostream* log);

// Episode codebook rows for nce mode, one unit vector per dataset-local id.
Tensor codebook_for_classes(const std::vector<int32_t>& class_ids, int64_t De);

// Classifier logits/embedding input: per-sequence flattened latents.
Tensor flatten_latents(Graph* g, const ModelConfig& cfg, const Tensor& z_rows, int64_t batch);

}  // namespace dited
