#pragma once

#include <optional>
#include <vector>

#include "dited/objectives.hpp"

namespace dited {

enum class Role : uint8_t { base = 0, novel = 1 };

// Ground-truth generative system: per-class latent dynamics shared by both
// roles (the invariant part), role-specific emission (the variant part).
//   z_t = tanh(M_c z_{t-1} + m_c) + noise_scale * eps,   eps ~ N(0, I)
//   x_t = sigmoid(E_d z_t + e_d)
struct SynthSpec {
    int64_t Nstar = 4;   // true latent dimension
    int64_t Dx = 32;     // observation dimension
    int64_t T = 16;
    int64_t c_base = 10;
    int64_t c_novel = 5;
    int64_t base_per_class = 40;
    int64_t novel_per_class = 8;
    double noise_scale = 0.1;
    double shift_magnitude = 0.0;  // distance between base and novel emissions
    bool shift_noise = false;      // optional mode: also perturb noise statistics
    uint64_t seed = 1;

    int64_t total_classes() const { return c_base + c_novel; }
    void validate() const;
};

struct SeqRecord {
    FeatureSequence seq;            // label is dataset-local
    std::optional<Tensor> z_true;   // (T x Nstar), diagnostics only
};

struct Dataset {
    Role role = Role::base;
    int64_t Dx = 0;
    int64_t T = 0;
    int64_t Nstar = 0;
    std::vector<int32_t> class_ids;  // dataset-local label -> global class id
    std::vector<SeqRecord> records;

    int64_t num_classes() const { return static_cast<int64_t>(class_ids.size()); }
    std::vector<FeatureSequence> sequences() const;
    std::vector<size_t> indices_of_class(int32_t local_label) const;
};

struct Emission {
    Tensor E;  // (Dx x Nstar)
    Tensor e;  // (Dx)
    double noise_scale = 0.1;
};

// All static parameters are derived from the spec's seed; the dynamics pool
// never depends on the role, only the emission does.
class SynthSystem {
public:
    explicit SynthSystem(const SynthSpec& spec);

    const SynthSpec& spec() const { return spec_; }
    const Tensor& class_matrix(int64_t global_class) const;  // M_c
    const Tensor& class_offset(int64_t global_class) const;  // m_c
    Emission emission(Role role) const;

    Dataset generate(Role role, int64_t count_per_class) const;
    Dataset generate(Role role) const;  // spec's per-role default counts

    // Deterministic single sequence for a fixed initial state (test hook).
    Tensor rollout_latents(int64_t global_class, const Tensor& z0, double noise_scale,
                           Rng* noise_rng) const;

private:
    SynthSpec spec_;
    std::vector<Tensor> M_, m_;  // per global class
    Emission base_, novel_;
};

struct Episode {
    std::vector<size_t> support;      // record indices into the dataset
    std::vector<size_t> query;
    std::vector<int32_t> class_ids;   // episode label -> dataset-local label
    int64_t way = 0;
    int64_t k = 0;

    // Episode-label sequences built on the fly from the dataset.
    std::vector<FeatureSequence> support_sequences(const Dataset& d) const;
    std::vector<FeatureSequence> query_sequences(const Dataset& d) const;
};

// 5-way style: each trial draws `way` classes without replacement, k support
// items per class, the remainder of those classes as query. All-way
// (way == num classes): one split covering every class.
std::vector<Episode> make_episodes(const Dataset& d, int64_t way, int64_t k, int64_t trials,
                                   uint64_t seed);

}  // namespace dited
