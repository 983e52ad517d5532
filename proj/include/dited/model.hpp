#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>

#include "dited/rng.hpp"
#include "dited/tape.hpp"

namespace dited {

enum class ClsMode : uint8_t { ce = 0, nce = 1 };

// Architecture hyperparameters plus the structural switches used by the
// ablation arms. Everything here is persisted in checkpoints.
struct ModelConfig {
    int64_t Dx = 1024;  // observed feature dimension
    int64_t Du = 128;   // domain embedding dimension
    int64_t N = 12;     // latent dimension
    int64_t l = 1;      // max time lag
    int64_t S = 35;     // latent domains (gating mixture size)
    int64_t T = 16;     // frames per sequence
    int64_t H = 256;    // hidden width
    int64_t C = 10;     // classes
    int64_t De = 1024;  // class-embedding dimension (nce mode)
    ClsMode cls_mode = ClsMode::ce;

    bool use_domain_encoder = true;
    bool use_transition = true;
    bool tie_parents = false;       // per-frame prior: parent window := current frame
    bool conditional_noise = true;  // noise prior conditioned on u (else standard normal)

    int64_t encoder_in() const { return Dx + (use_domain_encoder ? Du : 0); }
    int64_t cond_dim() const { return l * N + (use_domain_encoder ? Du : 0); }
    int64_t cls_out() const { return cls_mode == ClsMode::ce ? C : De; }
    bool has_noise_head() const {
        return use_transition && conditional_noise && use_domain_encoder;
    }
    void validate() const;
    bool same_architecture(const ModelConfig& other) const;
};

using ParamMap = std::map<std::string, Tensor>;

inline std::string group_of(const std::string& name) { return name.substr(0, name.find('/')); }

// All trainable tensors, keyed "group/..." with group one of
// omega | theta | phi | gamma | psi. Frozen groups are bound as constants
// and skipped by the optimizer.
struct ModelParams {
    ModelConfig config;
    ParamMap tensors;
    std::set<std::string> frozen_groups;

    static ModelParams init(const ModelConfig& cfg, uint64_t seed);

    bool has_group(const std::string& g) const;
    int64_t group_size(const std::string& g) const;
    std::set<std::string> groups() const;
    uint64_t group_hash(const std::string& g) const;  // bit-level fingerprint
};

struct BoundParams {
    ParamMap t;                            // tracked (trainable) or plain (frozen) tensors
    std::map<std::string, int> leaf_ids;   // name -> tape node, trainable only
};

BoundParams bind_params(Graph& g, const ModelParams& p);

struct DomainTrajectory {
    Tensor u;      // (T*B x Du), frame-major rows t*B + b
    Tensor gates;  // (T*B x S), rows sum to 1
};

struct PosteriorStats {
    Tensor mu;     // (T*B x N)
    Tensor sigma;  // (T*B x N), >= 1e-4
};

// All model ops run on frame-major row blocks (row = t*batch + b); a single
// sequence is the batch=1 case. g may be null for untracked forward passes.

DomainTrajectory domain_encode(Graph* g, const ModelConfig& cfg, const ParamMap& P,
                               const Tensor& x, int64_t batch = 1);

PosteriorStats encode_posterior(Graph* g, const ModelConfig& cfg, const ParamMap& P,
                                const Tensor& x, const Tensor* u);

Tensor sample_latent(Graph* g, const PosteriorStats& stats, Rng& rng);
Tensor sample_latent_with(Graph* g, const PosteriorStats& stats, const Tensor& noise);

Tensor decode_logits(Graph* g, const ModelConfig& cfg, const ParamMap& P, const Tensor& z);
Tensor decode(Graph* g, const ModelConfig& cfg, const ParamMap& P, const Tensor& z);

// Inverse dynamics at frame t of a single sequence: noise recovered from
// z_t given the lagged window and u_t, plus the log |d eps / d z| term.
std::pair<Tensor, Tensor> inverse_transition(Graph* g, const ModelConfig& cfg, const ParamMap& P,
                                             const Tensor& z, const Tensor* u, int64_t t);

// Per-frame log prior of a single sequence -> shape (T).
Tensor transition_log_prior(Graph* g, const ModelConfig& cfg, const ParamMap& P, const Tensor& z,
                            const Tensor* u);

// Batched per-row log prior -> (T*B x 1), aligned with z's rows.
Tensor transition_log_prior_rows(Graph* g, const ModelConfig& cfg, const ParamMap& P,
                                 const Tensor& z, const Tensor* u, int64_t batch);

// Diagonal-Gaussian log density of z under (mu, sigma), summed per row -> (R x 1).
Tensor gaussian_log_density_rows(Graph* g, const Tensor& z, const Tensor& mu, const Tensor& sigma);

Tensor classify(Graph* g, const ModelConfig& cfg, const ParamMap& P, const Tensor& z);
Tensor classify_rows(Graph* g, const ModelConfig& cfg, const ParamMap& P, const Tensor& z_flat);

// Fixed unit-norm class codes standing in for text embeddings; a pure
// function of (C, De) so checkpoints never need to store it.
Tensor nce_codebook(int64_t C, int64_t De);

int argmax_index(const double* v, int64_t n);  // ties break to the lowest index

Tensor detach(const Tensor& t);

}  // namespace dited
