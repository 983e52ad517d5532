#pragma once

#include <optional>
#include <vector>

#include "dited/model.hpp"

namespace dited {

// One observed sequence: features strictly inside (0,1) plus a class index.
struct FeatureSequence {
    Tensor x;  // (T x Dx)
    int32_t label = 0;
};

struct LossReport {
    double total = 0.0;
    double recon = 0.0;
    double kld = 0.0;
    std::optional<double> cls;
    std::vector<std::pair<double, double>> per_frame;  // (recon_t, kld_t), batch-averaged
};

struct ElboOptions {
    double beta = 0.02;
    bool decoder_bypass = false;            // test hook: x_hat := x
    const std::vector<Tensor>* pinned_noise = nullptr;  // per-sequence (T x N) noise
    bool collect_per_frame = false;
};

// Single-sample ELBO over a batch: recon summed over features, averaged over
// frames and sequences; KL term estimated at the sampled latents. Returns the
// tracked total (buildable for backward when g is non-null).
Tensor elbo_loss(Graph* g, const ModelConfig& cfg, const ParamMap& P,
                 const std::vector<const FeatureSequence*>& batch, Rng& rng,
                 const ElboOptions& opt, LossReport* report);

// -log softmax(logits)[y]
Tensor ce_loss(Graph* g, const Tensor& logits, int32_t y);

// Batched cross entropy, mean over rows.
Tensor ce_loss_rows(Graph* g, const Tensor& logits, const std::vector<int32_t>& labels);

// InfoNCE over cosine similarities against a unit-norm codebook.
Tensor nce_loss(Graph* g, const Tensor& embeddings, const std::vector<int32_t>& labels,
                const Tensor& codebook, double tau);

}  // namespace dited
