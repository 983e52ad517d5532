#include "dited/synth.hpp"

#include <algorithm>
#include <cmath>

namespace dited {

namespace {

// Emission scale: logits spread a few units so features occupy the whole
// (0,1) range with partial saturation (appearance is sharply class-coupled).
constexpr double kEmitScale = 8.0;
constexpr double kEmitBiasStd = 0.5;
constexpr double kDynScale = 0.9;
constexpr double kDynOffsetStd = 1.0;
constexpr double kFeatureClamp = 1e-6;

Tensor gaussian_tensor(Shape shape, double std_dev, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = std_dev * rng.normal();
    return t;
}

int32_t episode_label(const std::vector<int32_t>& class_ids, int32_t local) {
    for (size_t i = 0; i < class_ids.size(); ++i)
        if (class_ids[i] == local) return static_cast<int32_t>(i);
    throw DitedError("episode: label not in episode class set");
}

}  // namespace

void SynthSpec::validate() const {
    if (Nstar < 1 || Dx < 1 || T < 2 || c_base < 1 || c_novel < 1)
        throw DitedError("synth: bad dimensions");
    if (noise_scale <= 0.0) throw DitedError("synth: noise_scale must be > 0");
    if (shift_magnitude < 0.0) throw DitedError("synth: shift_magnitude must be >= 0");
    if (base_per_class < 1 || novel_per_class < 1) throw DitedError("synth: bad sample counts");
}

SynthSystem::SynthSystem(const SynthSpec& spec) : spec_(spec) {
    spec_.validate();
    const double dyn_std = kDynScale / std::sqrt(static_cast<double>(spec_.Nstar));
    M_.reserve(static_cast<size_t>(spec_.total_classes()));
    m_.reserve(static_cast<size_t>(spec_.total_classes()));
    for (int64_t c = 0; c < spec_.total_classes(); ++c) {
        Rng rng = substream(spec_.seed, 0xD1, static_cast<uint64_t>(c));
        M_.push_back(gaussian_tensor({spec_.Nstar, spec_.Nstar}, dyn_std, rng));
        m_.push_back(gaussian_tensor({spec_.Nstar}, kDynOffsetStd, rng));
    }

    const double emit_std = kEmitScale / std::sqrt(static_cast<double>(spec_.Nstar));
    Rng erng = substream(spec_.seed, 0xE5);
    base_.E = gaussian_tensor({spec_.Dx, spec_.Nstar}, emit_std, erng);
    base_.e = gaussian_tensor({spec_.Dx}, kEmitBiasStd, erng);
    base_.noise_scale = spec_.noise_scale;

    // novel emission: base displaced along a seeded random direction whose
    // entries follow the same law as the emission itself, so shift 1.0 means
    // an appearance change comparable to the appearance scale
    Rng srng = substream(spec_.seed, 0x5F);
    novel_.E = base_.E;
    novel_.e = base_.e;
    const Tensor dE = gaussian_tensor({spec_.Dx, spec_.Nstar}, emit_std, srng);
    const Tensor de = gaussian_tensor({spec_.Dx}, kEmitBiasStd, srng);
    for (int64_t i = 0; i < dE.numel(); ++i) novel_.E.at(i) += spec_.shift_magnitude * dE.at(i);
    for (int64_t i = 0; i < de.numel(); ++i) novel_.e.at(i) += spec_.shift_magnitude * de.at(i);
    novel_.noise_scale = spec_.noise_scale;
    if (spec_.shift_noise)
        novel_.noise_scale = spec_.noise_scale * (1.0 + 0.5 * spec_.shift_magnitude);
}

const Tensor& SynthSystem::class_matrix(int64_t c) const { return M_.at(static_cast<size_t>(c)); }
const Tensor& SynthSystem::class_offset(int64_t c) const { return m_.at(static_cast<size_t>(c)); }

Emission SynthSystem::emission(Role role) const { return role == Role::base ? base_ : novel_; }

Tensor SynthSystem::rollout_latents(int64_t global_class, const Tensor& z0, double noise_scale,
                                    Rng* noise_rng) const {
    const Tensor& M = class_matrix(global_class);
    const Tensor& m = class_offset(global_class);
    const int64_t n = spec_.Nstar;
    Tensor out = Tensor::zeros({spec_.T, n});
    std::vector<double> cur(z0.data);
    for (int64_t t = 0; t < spec_.T; ++t) {
        std::vector<double> next(static_cast<size_t>(n), 0.0);
        for (int64_t i = 0; i < n; ++i) {
            double acc = m.at(i);
            for (int64_t j = 0; j < n; ++j) acc += M.at2(i, j) * cur[static_cast<size_t>(j)];
            next[static_cast<size_t>(i)] = std::tanh(acc);
            if (noise_rng) next[static_cast<size_t>(i)] += noise_scale * noise_rng->normal();
        }
        cur = next;
        for (int64_t i = 0; i < n; ++i) out.at2(t, i) = cur[static_cast<size_t>(i)];
    }
    return out;
}

Dataset SynthSystem::generate(Role role) const {
    return generate(role, role == Role::base ? spec_.base_per_class : spec_.novel_per_class);
}

Dataset SynthSystem::generate(Role role, int64_t count_per_class) const {
    Dataset d;
    d.role = role;
    d.Dx = spec_.Dx;
    d.T = spec_.T;
    d.Nstar = spec_.Nstar;
    const Emission em = emission(role);
    const int64_t classes = role == Role::base ? spec_.c_base : spec_.c_novel;
    const int64_t global0 = role == Role::base ? 0 : spec_.c_base;

    for (int64_t local = 0; local < classes; ++local) d.class_ids.push_back(
        static_cast<int32_t>(global0 + local));

    const uint64_t role_tag = role == Role::base ? 0xB0 : 0xB1;
    for (int64_t local = 0; local < classes; ++local) {
        const int64_t global = global0 + local;
        for (int64_t i = 0; i < count_per_class; ++i) {
            Rng rng = substream(spec_.seed, role_tag, static_cast<uint64_t>(global),
                                static_cast<uint64_t>(i));
            Tensor z0 = Tensor::zeros({spec_.Nstar});
            for (int64_t j = 0; j < spec_.Nstar; ++j) z0.at(j) = 0.5 * rng.normal();
            const Tensor z = rollout_latents(global, z0, em.noise_scale, &rng);

            Tensor x = Tensor::zeros({spec_.T, spec_.Dx});
            for (int64_t t = 0; t < spec_.T; ++t)
                for (int64_t dix = 0; dix < spec_.Dx; ++dix) {
                    double logit = em.e.at(dix);
                    for (int64_t j = 0; j < spec_.Nstar; ++j)
                        logit += em.E.at2(dix, j) * z.at2(t, j);
                    double v = 1.0 / (1.0 + std::exp(-logit));
                    v = std::min(1.0 - kFeatureClamp, std::max(kFeatureClamp, v));
                    x.at2(t, dix) = v;
                }

            SeqRecord rec;
            rec.seq.x = std::move(x);
            rec.seq.label = static_cast<int32_t>(local);
            rec.z_true = z;
            d.records.push_back(std::move(rec));
        }
    }
    return d;
}

std::vector<FeatureSequence> Dataset::sequences() const {
    std::vector<FeatureSequence> out;
    out.reserve(records.size());
    for (const SeqRecord& r : records) out.push_back(r.seq);
    return out;
}

std::vector<size_t> Dataset::indices_of_class(int32_t local_label) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < records.size(); ++i)
        if (records[i].seq.label == local_label) out.push_back(i);
    return out;
}

std::vector<FeatureSequence> Episode::support_sequences(const Dataset& d) const {
    std::vector<FeatureSequence> out;
    out.reserve(support.size());
    for (size_t idx : support) {
        FeatureSequence s = d.records[idx].seq;
        s.label = episode_label(class_ids, s.label);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<FeatureSequence> Episode::query_sequences(const Dataset& d) const {
    std::vector<FeatureSequence> out;
    out.reserve(query.size());
    for (size_t idx : query) {
        FeatureSequence s = d.records[idx].seq;
        s.label = episode_label(class_ids, s.label);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Episode> make_episodes(const Dataset& d, int64_t way, int64_t k, int64_t trials,
                                   uint64_t seed) {
    const int64_t classes = d.num_classes();
    if (way < 1 || way > classes)
        throw DitedError("episodes: way " + std::to_string(way) + " out of range (classes=" +
                         std::to_string(classes) + ")");
    for (int32_t c = 0; c < classes; ++c) {
        const auto idx = d.indices_of_class(c);
        if (static_cast<int64_t>(idx.size()) < k + 1)
            throw DitedError("episodes: class " + std::to_string(c) + " has " +
                             std::to_string(idx.size()) + " samples, need k+1=" +
                             std::to_string(k + 1));
    }

    std::vector<Episode> out;
    out.reserve(static_cast<size_t>(trials));
    for (int64_t tr = 0; tr < trials; ++tr) {
        Rng rng = substream(seed, 0xEA, static_cast<uint64_t>(tr));
        std::vector<int32_t> pool(static_cast<size_t>(classes));
        for (int32_t c = 0; c < classes; ++c) pool[static_cast<size_t>(c)] = c;
        for (int64_t i = 0; i < way; ++i) {
            const size_t j =
                static_cast<size_t>(i) +
                static_cast<size_t>(rng.next_u64() % static_cast<uint64_t>(classes - i));
            std::swap(pool[static_cast<size_t>(i)], pool[j]);
        }
        Episode ep;
        ep.way = way;
        ep.k = k;
        ep.class_ids.assign(pool.begin(), pool.begin() + way);
        std::sort(ep.class_ids.begin(), ep.class_ids.end());

        for (int32_t c : ep.class_ids) {
            std::vector<size_t> idx = d.indices_of_class(c);
            for (size_t i = idx.size(); i > 1; --i) {
                const size_t j = static_cast<size_t>(rng.next_u64() % i);
                std::swap(idx[i - 1], idx[j]);
            }
            for (size_t i = 0; i < idx.size(); ++i) {
                if (i < static_cast<size_t>(k))
                    ep.support.push_back(idx[i]);
                else
                    ep.query.push_back(idx[i]);
            }
        }
        out.push_back(std::move(ep));
    }
    return out;
}

}  // namespace dited
