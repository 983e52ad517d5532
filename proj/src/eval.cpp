#include "dited/eval.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "dited/parallel.hpp"

namespace dited {

using namespace ops;

const std::vector<std::string> kAblationArmOrder = {
    "no-transition", "no-domain-encoder", "no-temporal", "full-finetune", "full",
};

namespace {

struct Tally {
    int64_t correct = 0, total = 0;
    std::map<int32_t, std::pair<int64_t, int64_t>> per_class;  // local id -> (correct, total)
    double accuracy() const {
        return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
    }
};

EvalResult assemble(const std::vector<Tally>& episodes) {
    EvalResult r;
    int64_t correct = 0;
    std::map<int32_t, std::pair<int64_t, int64_t>> per_class;
    double sum = 0.0, sum2 = 0.0;
    for (const Tally& t : episodes) {
        correct += t.correct;
        r.n_query += t.total;
        const double a = t.accuracy();
        r.per_episode.push_back(a);
        sum += a;
        sum2 += a * a;
        for (const auto& [c, p] : t.per_class) {
            per_class[c].first += p.first;
            per_class[c].second += p.second;
        }
    }
    r.top1 = r.n_query == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(r.n_query);
    for (const auto& [c, p] : per_class)
        r.per_class[c] = p.second == 0
                             ? 0.0
                             : static_cast<double>(p.first) / static_cast<double>(p.second);
    const double n = static_cast<double>(episodes.size());
    if (n > 0) {
        r.ep_mean = sum / n;
        const double var = std::max(0.0, sum2 / n - r.ep_mean * r.ep_mean);
        r.ep_std = std::sqrt(var);
    }
    return r;
}

uint64_t fnv_step(uint64_t h, uint64_t v) {
    for (int k = 0; k < 8; ++k) h = (h ^ ((v >> (8 * k)) & 0xff)) * 1099511628211ULL;
    return h;
}

uint64_t episodes_hash(const std::vector<Episode>& eps) {
    uint64_t h = 1469598103934665603ULL;
    for (const Episode& ep : eps) {
        for (size_t i : ep.support) h = fnv_step(h, i);
        for (size_t i : ep.query) h = fnv_step(h, i);
        for (int32_t c : ep.class_ids) h = fnv_step(h, static_cast<uint64_t>(c));
    }
    return h;
}

std::vector<int32_t> global_ids(const Dataset& d, const Episode& ep) {
    std::vector<int32_t> out;
    out.reserve(ep.class_ids.size());
    for (int32_t local : ep.class_ids) out.push_back(d.class_ids[static_cast<size_t>(local)]);
    return out;
}

Tally tally_episode(const Episode& ep, const std::vector<int32_t>& preds,
                    const std::vector<FeatureSequence>& queries) {
    Tally t;
    for (size_t i = 0; i < queries.size(); ++i) {
        const int32_t truth = queries[i].label;
        const int32_t local = ep.class_ids[static_cast<size_t>(truth)];
        ++t.total;
        ++t.per_class[local].second;
        if (preds[i] == truth) {
            ++t.correct;
            ++t.per_class[local].first;
        }
    }
    return t;
}

ModelConfig arm_config(const ModelConfig& full, const std::string& arm) {
    ModelConfig cfg = full;
    if (arm == "no-transition") {
        cfg.use_transition = false;
        cfg.use_domain_encoder = false;
    } else if (arm == "no-domain-encoder") {
        cfg.use_domain_encoder = false;
    } else if (arm == "no-temporal") {
        cfg.tie_parents = true;
    }
    // "full", "full-finetune" and "frozen-probe" share the full architecture
    return cfg;
}

struct TrainedArm {
    std::string config_key;
    ModelParams params;
};

ModelParams train_base_model(const HarnessConfig& hc, const ModelConfig& cfg,
                             const std::vector<FeatureSequence>& base_seqs,
                             std::ostream* progress) {
    ElboOptions elbo;
    elbo.beta = hc.beta;
    ModelParams p = pretrain_stage1(base_seqs, cfg, elbo, hc.optim,
                                    TrainPlan::make(Stage::pretrain_dynamics, hc.epochs, hc.batch,
                                                    hc.seed),
                                    progress);
    p = train_classifier_stage2(base_seqs, std::move(p), hc.cls, hc.optim,
                                TrainPlan::make(Stage::train_classifier, hc.cls_epochs, hc.batch,
                                                hc.seed),
                                progress);
    return p;
}

std::string config_key(const ModelConfig& c) {
    return std::to_string(c.use_transition) + std::to_string(c.use_domain_encoder) +
           std::to_string(c.tie_parents);
}

}  // namespace

std::vector<int32_t> predict_labels(const ModelParams& params,
                                    const std::vector<FeatureSequence>& queries,
                                    const std::vector<int32_t>& class_ids, const EvalOptions& opt,
                                    const std::vector<int32_t>& ce_restrict) {
    const ModelConfig& cfg = params.config;
    Tensor codebook;
    if (opt.mode == ClsMode::nce) {
        if (class_ids.empty()) throw DitedError("predict: nce mode needs class ids");
        codebook = codebook_for_classes(class_ids, cfg.De);
    }

    std::vector<int32_t> preds(queries.size(), 0);
    for (size_t qi = 0; qi < queries.size(); ++qi) {
        const Tensor& x = queries[qi].x;
        const Tensor* u = nullptr;
        DomainTrajectory traj;
        if (cfg.use_domain_encoder) {
            traj = domain_encode(nullptr, cfg, params.tensors, x, 1);
            u = &traj.u;
        }
        const PosteriorStats stats = encode_posterior(nullptr, cfg, params.tensors, x, u);

        const int64_t draws = opt.z_mode == ZMode::sample ? std::max<int64_t>(1, opt.mc_samples) : 1;
        std::vector<double> acc;
        Rng rng = substream(opt.seed, 0xE7, static_cast<uint64_t>(qi));
        for (int64_t s = 0; s < draws; ++s) {
            const Tensor z = opt.z_mode == ZMode::sample
                                 ? sample_latent(nullptr, stats, rng)
                                 : stats.mu;
            const Tensor out =
                classify_rows(nullptr, cfg, params.tensors, flatten_latents(nullptr, cfg, z, 1));
            if (acc.empty()) acc.assign(out.data.begin(), out.data.end());
            else
                for (size_t i = 0; i < acc.size(); ++i) acc[i] += out.data[i];
        }
        for (double& v : acc) v /= static_cast<double>(draws);

        if (opt.mode == ClsMode::ce) {
            if (ce_restrict.empty()) {
                preds[qi] = argmax_index(acc.data(), static_cast<int64_t>(acc.size()));
            } else {
                int best = 0;
                for (size_t i = 1; i < ce_restrict.size(); ++i)
                    if (acc[static_cast<size_t>(ce_restrict[i])] >
                        acc[static_cast<size_t>(ce_restrict[static_cast<size_t>(best)])])
                        best = static_cast<int>(i);
                preds[qi] = best;
            }
        } else {
            double n2 = 0.0;
            for (double v : acc) n2 += v * v;
            if (n2 <= 0.0) throw DitedError("predict: zero-norm embedding");
            const double inv = 1.0 / std::sqrt(n2);
            std::vector<double> sims(static_cast<size_t>(codebook.rows()), 0.0);
            for (int64_t c = 0; c < codebook.rows(); ++c) {
                double dot = 0.0;
                for (int64_t j = 0; j < codebook.cols(); ++j)
                    dot += acc[static_cast<size_t>(j)] * codebook.at2(c, j);
                sims[static_cast<size_t>(c)] = dot * inv;
            }
            preds[qi] = argmax_index(sims.data(), static_cast<int64_t>(sims.size()));
        }
    }
    return preds;
}

EvalResult evaluate(const Dataset& data, const std::vector<Episode>& episodes,
                    const ModelParams& params, const EvalOptions& opt) {
    if (episodes.empty()) throw DitedError("evaluate: no episodes");
    std::vector<Tally> tallies(episodes.size());
    parallel_for(
        static_cast<int64_t>(episodes.size()),
        [&](int64_t i) {
            const Episode& ep = episodes[static_cast<size_t>(i)];
            const auto queries = ep.query_sequences(data);
            if (queries.empty()) throw DitedError("evaluate: empty query set");
            EvalOptions o = opt;
            o.seed = splitmix64(opt.seed ^ static_cast<uint64_t>(i));
            // a frozen base head is scored on the episode's class subset
            const std::vector<int32_t> restrict_ids =
                params.config.C != ep.way ? ep.class_ids : std::vector<int32_t>{};
            const auto preds =
                predict_labels(params, queries, global_ids(data, ep), o, restrict_ids);
            tallies[static_cast<size_t>(i)] = tally_episode(ep, preds, queries);
        },
        1);
    return assemble(tallies);
}

EvalResult episodic_adapt_eval(const Dataset& data, const std::vector<Episode>& episodes,
                               const ModelParams& pretrained, const EpisodicAdaptOptions& aopt,
                               const EvalOptions& eopt) {
    if (episodes.empty()) throw DitedError("episodic eval: no episodes");
    std::vector<Tally> tallies(episodes.size());
    parallel_for(
        static_cast<int64_t>(episodes.size()),
        [&](int64_t i) {
            const Episode& ep = episodes[static_cast<size_t>(i)];
            const auto support = ep.support_sequences(data);
            const auto queries = ep.query_sequences(data);
            if (queries.empty()) throw DitedError("episodic eval: empty query set");
            const auto ids = global_ids(data, ep);
            const uint64_t ep_seed = splitmix64(splitmix64(aopt.seed ^ 0xEEULL) ^
                                                static_cast<uint64_t>(i));
            const ModelParams adapted = adapt(support, pretrained, ids, aopt.elbo, aopt.cls,
                                              aopt.adapt, aopt.optim, ep_seed, nullptr, nullptr);
            EvalOptions o = eopt;
            o.seed = splitmix64(ep_seed ^ 0x51ULL);
            const auto preds = predict_labels(adapted, queries, ids, o);
            tallies[static_cast<size_t>(i)] = tally_episode(ep, preds, queries);
        },
        1);
    return assemble(tallies);
}

double sign_test_p(int64_t wins, int64_t losses) {
    const int64_t n = wins + losses;
    if (n == 0) return 1.0;
    double p = 0.0;
    for (int64_t k = wins; k <= n; ++k) {
        const double logc = std::lgamma(static_cast<double>(n) + 1.0) -
                            std::lgamma(static_cast<double>(k) + 1.0) -
                            std::lgamma(static_cast<double>(n - k) + 1.0);
        p += std::exp(logc - static_cast<double>(n) * std::log(2.0));
    }
    return std::min(1.0, p);
}

AblationGrid run_ablation(const HarnessConfig& hc, std::ostream* progress) {
    SynthSystem sys(hc.synth);
    const Dataset base = sys.generate(Role::base);
    const Dataset novel = sys.generate(Role::novel);
    const auto base_seqs = base.sequences();

    ModelConfig full_cfg = hc.model;
    full_cfg.Dx = hc.synth.Dx;
    full_cfg.T = hc.synth.T;
    full_cfg.C = hc.synth.c_base;
    full_cfg.cls_mode = hc.cls.mode;
    full_cfg.use_domain_encoder = true;
    full_cfg.use_transition = true;
    full_cfg.tie_parents = false;

    // distinct architectures are pretrained once and shared between arms
    std::vector<TrainedArm> trained;
    auto params_for = [&](const std::string& arm) -> const ModelParams& {
        const ModelConfig cfg = arm_config(full_cfg, arm);
        const std::string key = config_key(cfg);
        for (const TrainedArm& t : trained)
            if (t.config_key == key) return t.params;
        if (progress) (*progress) << "[ablate] training base model for arm " << arm << "\n";
        trained.push_back(TrainedArm{key, train_base_model(hc, cfg, base_seqs, nullptr)});
        return trained.back().params;
    };

    const auto episodes = make_episodes(novel, hc.way, hc.k, hc.trials, hc.seed ^ 0xE9A0);

    EvalOptions eopt;
    eopt.mode = hc.cls.mode;
    eopt.z_mode = hc.z_mode;
    eopt.mc_samples = hc.mc_samples;

    auto run_arm = [&](const std::string& arm) {
        EpisodicAdaptOptions aopt;
        aopt.elbo.beta = hc.beta;
        aopt.cls = hc.cls;
        aopt.adapt = hc.adapt;
        aopt.adapt.finetune_dynamics = arm == "full-finetune";
        aopt.adapt.skip_phase_a = arm == "frozen-probe";
        aopt.optim = hc.optim;
        aopt.seed = hc.seed;  // identical episode seeds across arms
        if (progress) (*progress) << "[ablate] evaluating arm " << arm << "\n";
        return episodic_adapt_eval(novel, episodes, params_for(arm), aopt, eopt);
    };

    AblationGrid grid;
    grid.episode_hash = episodes_hash(episodes);
    for (const std::string& arm : kAblationArmOrder) {
        AblationArm a;
        a.name = arm;
        a.result = run_arm(arm);
        grid.arms.push_back(std::move(a));
    }
    {
        AblationArm probe;
        probe.name = "frozen-probe";
        probe.result = run_arm("frozen-probe");
        grid.arms.push_back(std::move(probe));
    }

    const EvalResult* full = nullptr;
    for (const AblationArm& a : grid.arms)
        if (a.name == "full") full = &a.result;
    for (AblationArm& a : grid.arms) {
        if (a.name == "full") continue;
        for (size_t e = 0; e < full->per_episode.size(); ++e) {
            const double d = full->per_episode[e] - a.result.per_episode[e];
            if (d > 0)
                ++a.wins;
            else if (d < 0)
                ++a.losses;
            else
                ++a.ties;
        }
        a.sign_p = sign_test_p(a.wins, a.losses);
    }
    return grid;
}

std::vector<SweepRow> sweep_hyperparams(const HarnessConfig& hc, std::ostream* progress) {
    SynthSystem sys(hc.synth);
    const Dataset base = sys.generate(Role::base);
    const Dataset novel = sys.generate(Role::novel);
    const auto base_seqs = base.sequences();
    const auto episodes = make_episodes(novel, hc.way, hc.k, hc.trials, hc.seed ^ 0xE9A0);

    EvalOptions eopt;
    eopt.mode = hc.cls.mode;
    eopt.z_mode = hc.z_mode;
    eopt.mc_samples = hc.mc_samples;

    const std::vector<std::pair<std::string, std::vector<int64_t>>> axes = {
        {"N", {4, 8, 12, 16}},
        {"l", {1, 2, 3}},
        {"S", {10, 20, 35, 50}},
    };

    std::vector<SweepRow> rows;
    for (const auto& [axis, values] : axes) {
        for (int64_t v : values) {
            ModelConfig cfg = hc.model;
            cfg.Dx = hc.synth.Dx;
            cfg.T = hc.synth.T;
            cfg.C = hc.synth.c_base;
            cfg.cls_mode = hc.cls.mode;
            if (axis == "N") cfg.N = v;
            if (axis == "l") cfg.l = v;
            if (axis == "S") cfg.S = v;
            if (progress) (*progress) << "[sweep] " << axis << "=" << v << "\n";

            const ModelParams params = train_base_model(hc, cfg, base_seqs, nullptr);
            EpisodicAdaptOptions aopt;
            aopt.elbo.beta = hc.beta;
            aopt.cls = hc.cls;
            aopt.adapt = hc.adapt;
            aopt.optim = hc.optim;
            aopt.seed = hc.seed;
            SweepRow row;
            row.axis = axis;
            row.value = v;
            row.result = episodic_adapt_eval(novel, episodes, params, aopt, eopt);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

LatentRanges pooled_latent_ranges(const ModelParams& a, const Dataset& da, const ModelParams& b,
                                  const Dataset& db, int64_t max_seqs) {
    const ModelConfig& cfg = a.config;
    LatentRanges r;
    r.z_lo = Tensor::full({cfg.N}, 1e30);
    r.z_hi = Tensor::full({cfg.N}, -1e30);
    const int64_t du = cfg.use_domain_encoder ? cfg.Du : 1;
    r.u_lo = Tensor::full({du}, 1e30);
    r.u_hi = Tensor::full({du}, -1e30);

    auto scan = [&](const ModelParams& p, const Dataset& d) {
        const int64_t step = std::max<int64_t>(
            1, static_cast<int64_t>(d.records.size()) / std::max<int64_t>(1, max_seqs));
        for (size_t i = 0; i < d.records.size(); i += static_cast<size_t>(step)) {
            const Tensor& x = d.records[i].seq.x;
            const Tensor* u = nullptr;
            DomainTrajectory traj;
            if (p.config.use_domain_encoder) {
                traj = domain_encode(nullptr, p.config, p.tensors, x, 1);
                u = &traj.u;
            }
            const PosteriorStats st = encode_posterior(nullptr, p.config, p.tensors, x, u);
            for (int64_t t = 0; t < st.mu.rows(); ++t)
                for (int64_t n = 0; n < cfg.N; ++n) {
                    r.z_lo.at(n) = std::min(r.z_lo.at(n), st.mu.at2(t, n));
                    r.z_hi.at(n) = std::max(r.z_hi.at(n), st.mu.at2(t, n));
                }
            if (u)
                for (int64_t t = 0; t < u->rows(); ++t)
                    for (int64_t j = 0; j < cfg.Du; ++j) {
                        r.u_lo.at(j) = std::min(r.u_lo.at(j), u->at2(t, j));
                        r.u_hi.at(j) = std::max(r.u_hi.at(j), u->at2(t, j));
                    }
        }
    };
    scan(a, da);
    scan(b, db);
    if (!cfg.use_domain_encoder) {
        r.u_lo = Tensor::zeros({1});
        r.u_hi = Tensor::zeros({1});
    }
    return r;
}

double transition_agreement(const ModelParams& a, const ModelParams& b, const LatentRanges& ranges,
                            int64_t probes, uint64_t seed) {
    if (!a.config.same_architecture(b.config))
        throw DitedError("transition_agreement: model configs differ");
    const ModelConfig& cfg = a.config;
    if (!cfg.use_transition) throw DitedError("transition_agreement: models have no transition");

    double sum_d2 = 0.0, sum = 0.0, sum2 = 0.0;
    const int64_t count = probes * cfg.N;
    for (int64_t p = 0; p < probes; ++p) {
        Rng rng = substream(seed, 0xA6, static_cast<uint64_t>(p));
        Tensor z = Tensor::zeros({cfg.l + 1, cfg.N});
        for (int64_t t = 0; t <= cfg.l; ++t)
            for (int64_t n = 0; n < cfg.N; ++n)
                z.at2(t, n) = rng.uniform(ranges.z_lo.at(n), ranges.z_hi.at(n));
        Tensor u;
        const Tensor* up = nullptr;
        if (cfg.use_domain_encoder) {
            u = Tensor::zeros({cfg.l + 1, cfg.Du});
            for (int64_t j = 0; j < cfg.Du; ++j) {
                const double v = rng.uniform(ranges.u_lo.at(j), ranges.u_hi.at(j));
                for (int64_t t = 0; t <= cfg.l; ++t) u.at2(t, j) = v;
            }
            up = &u;
        }
        ModelConfig probe_cfg = cfg;
        probe_cfg.T = cfg.l + 1;
        const auto [ea, lda] = inverse_transition(nullptr, probe_cfg, a.tensors, z, up, cfg.l);
        const auto [eb, ldb] = inverse_transition(nullptr, probe_cfg, b.tensors, z, up, cfg.l);
        (void)lda;
        (void)ldb;
        for (int64_t n = 0; n < cfg.N; ++n) {
            const double d = ea.at(n) - eb.at(n);
            sum_d2 += d * d;
            sum += ea.at(n) + eb.at(n);
            sum2 += ea.at(n) * ea.at(n) + eb.at(n) * eb.at(n);
        }
    }
    const double mean = sum / static_cast<double>(2 * count);
    const double var = std::max(0.0, sum2 / static_cast<double>(2 * count) - mean * mean);
    const double pooled_std = std::sqrt(var);
    const double rms = std::sqrt(sum_d2 / static_cast<double>(count));
    return pooled_std > 0.0 ? rms / pooled_std : 0.0;
}

ModelParams reinit_group(const ModelParams& params, const std::string& group, uint64_t seed) {
    ModelParams out = params;
    const ModelParams fresh = ModelParams::init(params.config, seed);
    for (const auto& [name, t] : fresh.tensors)
        if (group_of(name) == group) out.tensors[name] = t;
    return out;
}

}  // namespace dited
