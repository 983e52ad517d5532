#include "dited/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace dited {

using namespace ops;

namespace {

void emit_log(std::ostream* os, Stage stage, int64_t epoch, double total, double recon, double kld,
              const std::optional<double>& cls, double lr) {
    if (!os) return;
    (*os) << stage_name(stage) << '\t' << epoch << '\t' << total << '\t' << recon << '\t' << kld
          << '\t';
    if (cls)
        (*os) << *cls;
    else
        (*os) << '-';
    (*os) << '\t' << lr << '\n';
}

std::vector<size_t> shuffled_indices(size_t n, Rng& rng) {
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    for (size_t i = n; i > 1; --i) {
        const size_t j = static_cast<size_t>(rng.next_u64() % i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

std::set<std::string> existing(const std::set<std::string>& wanted, const ModelParams& p) {
    std::set<std::string> out;
    for (const std::string& g : wanted)
        if (p.has_group(g)) out.insert(g);
    return out;
}

void freeze_all_but(ModelParams& p, const std::set<std::string>& trainable) {
    p.frozen_groups.clear();
    for (const std::string& g : p.groups())
        if (!trainable.count(g)) p.frozen_groups.insert(g);
}

// One optimizer step on the classification loss of a batch.
double classifier_step(ModelParams& params, const std::vector<const FeatureSequence*>& batch,
                       const ClsOptions& cls, const std::vector<int32_t>& class_ids, AdamW& opt,
                       Rng& rng) {
    const ModelConfig& cfg = params.config;
    const int64_t B = static_cast<int64_t>(batch.size());
    Tensor X = Tensor::zeros({cfg.T * B, cfg.Dx});
    std::vector<int32_t> labels(static_cast<size_t>(B));
    for (int64_t b = 0; b < B; ++b) {
        const FeatureSequence& s = *batch[static_cast<size_t>(b)];
        labels[static_cast<size_t>(b)] = s.label;
        for (int64_t t = 0; t < cfg.T; ++t)
            for (int64_t d = 0; d < cfg.Dx; ++d) X.at2(t * B + b, d) = s.x.at2(t, d);
    }

    Graph g;
    BoundParams bp = bind_params(g, params);
    const Tensor* u = nullptr;
    DomainTrajectory traj;
    if (cfg.use_domain_encoder) {
        traj = domain_encode(&g, cfg, bp.t, X, B);
        u = &traj.u;
    }
    const PosteriorStats stats = encode_posterior(&g, cfg, bp.t, X, u);
    const Tensor z = sample_latent(&g, stats, rng);
    const Tensor flat = flatten_latents(&g, cfg, z, B);
    const Tensor out = classify_rows(&g, cfg, bp.t, flat);

    Tensor loss;
    if (cls.mode == ClsMode::ce) {
        loss = ce_loss_rows(&g, out, labels);
    } else {
        std::vector<int32_t> ids = class_ids;
        if (ids.empty()) {
            ids.resize(static_cast<size_t>(cfg.C));
            std::iota(ids.begin(), ids.end(), 0);
        }
        loss = nce_loss(&g, out, labels, codebook_for_classes(ids, cfg.De), cls.tau);
    }
    const double value = loss.scalar_value();
    GradientMap grads = g.backward(loss);
    opt.step(params, grads, bp.leaf_ids);
    return value;
}

}  // namespace

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::pretrain_dynamics: return "pretrain-dynamics";
        case Stage::train_classifier: return "train-classifier";
        case Stage::adapt_representation: return "adapt-representation";
        case Stage::adapt_classifier: return "adapt-classifier";
    }
    return "?";
}

const std::set<std::string>& TrainPlan::canonical_groups(Stage stage) {
    static const std::set<std::string> pretrain{"omega", "theta", "phi", "gamma"};
    static const std::set<std::string> classifier{"psi"};
    static const std::set<std::string> adapt_repr{"omega", "theta"};
    switch (stage) {
        case Stage::pretrain_dynamics: return pretrain;
        case Stage::train_classifier: return classifier;
        case Stage::adapt_representation: return adapt_repr;
        case Stage::adapt_classifier: return classifier;
    }
    throw DitedError("train plan: unknown stage");
}

TrainPlan TrainPlan::make(Stage stage, int64_t epochs, int64_t batch, uint64_t seed) {
    if (epochs < 0 || batch < 1) throw DitedError("train plan: bad epochs/batch");
    TrainPlan p;
    p.stage = stage;
    p.trainable = canonical_groups(stage);
    p.epochs = epochs;
    p.batch = batch;
    p.seed = seed;
    return p;
}

AdamW::AdamW(OptimConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.horizon < 1) throw DitedError("adamw: horizon must be >= 1");
}

double AdamW::current_lr() const {
    if (step_count_ >= cfg_.horizon) return 0.0;
    const double frac = static_cast<double>(step_count_) / static_cast<double>(cfg_.horizon);
    return 0.5 * (1.0 + std::cos(3.141592653589793 * frac));
}

void AdamW::step(ModelParams& params, const GradientMap& grads,
                 const std::map<std::string, int>& leaf_ids) {
    const double sched = current_lr();
    const int64_t t = step_count_ + 1;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));

    for (auto& [name, p] : params.tensors) {
        const std::string group = group_of(name);
        if (params.frozen_groups.count(group)) continue;
        auto it = leaf_ids.find(name);
        if (it == leaf_ids.end())
            throw DitedError("adamw: missing gradient for unfrozen parameter " + name);
        const Tensor& grad = grads.at_node(it->second);

        double base_lr = cfg_.lr;
        if (auto lr_it = cfg_.group_lr.find(group); lr_it != cfg_.group_lr.end())
            base_lr = lr_it->second;
        const double lr = base_lr * sched;

        Moments& mom = state_[name];
        if (mom.m.empty()) {
            mom.m.assign(static_cast<size_t>(p.numel()), 0.0);
            mom.v.assign(static_cast<size_t>(p.numel()), 0.0);
        }
        for (int64_t i = 0; i < p.numel(); ++i) {
            const double gi = grad.at(i);
            mom.m[static_cast<size_t>(i)] = cfg_.beta1 * mom.m[static_cast<size_t>(i)] +
                                            (1.0 - cfg_.beta1) * gi;
            mom.v[static_cast<size_t>(i)] = cfg_.beta2 * mom.v[static_cast<size_t>(i)] +
                                            (1.0 - cfg_.beta2) * gi * gi;
            const double mhat = mom.m[static_cast<size_t>(i)] / bc1;
            const double vhat = mom.v[static_cast<size_t>(i)] / bc2;
            double x = p.at(i);
            x -= lr * cfg_.weight_decay * x;  // decoupled decay
            x -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            p.at(i) = x;
        }
    }
    ++step_count_;
}

ModelParams pretrain_stage1(const std::vector<FeatureSequence>& data, const ModelConfig& cfg,
                            const ElboOptions& elbo_opt, const OptimConfig& optim,
                            const TrainPlan& plan, std::ostream* log) {
    if (plan.stage != Stage::pretrain_dynamics)
        throw DitedError("pretrain_stage1: wrong stage in plan");
    if (data.empty()) throw DitedError("pretrain_stage1: empty dataset");

    ModelParams params = ModelParams::init(cfg, plan.seed);
    freeze_all_but(params, existing(plan.trainable, params));

    const int64_t steps_per_epoch =
        (static_cast<int64_t>(data.size()) + plan.batch - 1) / plan.batch;
    OptimConfig ocfg = optim;
    if (ocfg.horizon == 0) ocfg.horizon = std::max<int64_t>(1, plan.epochs * steps_per_epoch);
    AdamW opt(ocfg);

    std::vector<double> epoch_totals;
    for (int64_t epoch = 1; epoch <= plan.epochs; ++epoch) {
        Rng shuffle_rng = substream(plan.seed, 0xE0, static_cast<uint64_t>(epoch));
        const std::vector<size_t> order = shuffled_indices(data.size(), shuffle_rng);

        double sum_total = 0.0, sum_recon = 0.0, sum_kld = 0.0, last_lr = 0.0;
        int64_t steps = 0;
        for (size_t off = 0; off < order.size(); off += static_cast<size_t>(plan.batch)) {
            std::vector<const FeatureSequence*> batch;
            for (size_t i = off; i < std::min(order.size(), off + static_cast<size_t>(plan.batch));
                 ++i)
                batch.push_back(&data[order[i]]);

            Rng noise_rng =
                substream(plan.seed, 0xA1, static_cast<uint64_t>(epoch), static_cast<uint64_t>(off));
            Graph g;
            BoundParams bp = bind_params(g, params);
            LossReport rep;
            const Tensor loss = elbo_loss(&g, cfg, bp.t, batch, noise_rng, elbo_opt, &rep);
            last_lr = opt.current_lr() * ocfg.lr;
            GradientMap grads = g.backward(loss);
            opt.step(params, grads, bp.leaf_ids);

            sum_total += rep.total;
            sum_recon += rep.recon;
            sum_kld += rep.kld;
            ++steps;
        }
        const double et = sum_total / static_cast<double>(steps);
        emit_log(log, Stage::pretrain_dynamics, epoch, et, sum_recon / static_cast<double>(steps),
                 sum_kld / static_cast<double>(steps), std::nullopt, last_lr);
        epoch_totals.push_back(et);

        // window-5 smoothed loss must not increase once the window is full
        if (plan.monotone_guard && epoch >= 6) {
            const auto smooth = [&](int64_t end) {
                double s = 0.0;
                for (int64_t e = end - 5; e < end; ++e) s += epoch_totals[static_cast<size_t>(e)];
                return s / 5.0;
            };
            const double cur = smooth(epoch);
            const double prev = smooth(epoch - 1);
            if (cur > prev * (1.0 + 1e-12) + 1e-12)
                throw DitedError("pretrain_stage1: smoothed loss increased at epoch " +
                                 std::to_string(epoch) + " (" + std::to_string(prev) + " -> " +
                                 std::to_string(cur) + ")");
        }
    }
    params.frozen_groups.clear();
    return params;
}

ModelParams train_classifier_stage2(const std::vector<FeatureSequence>& data, ModelParams params,
                                    const ClsOptions& cls, const OptimConfig& optim,
                                    const TrainPlan& plan, std::ostream* log) {
    if (plan.stage != Stage::train_classifier)
        throw DitedError("train_classifier_stage2: wrong stage in plan");
    if (data.empty()) throw DitedError("train_classifier_stage2: empty dataset");
    if (params.config.cls_mode != cls.mode)
        throw DitedError("train_classifier_stage2: loss mode does not match the model head");

    freeze_all_but(params, existing(plan.trainable, params));
    const int64_t steps_per_epoch =
        (static_cast<int64_t>(data.size()) + plan.batch - 1) / plan.batch;
    OptimConfig ocfg = optim;
    if (ocfg.horizon == 0) ocfg.horizon = std::max<int64_t>(1, plan.epochs * steps_per_epoch);
    AdamW opt(ocfg);

    for (int64_t epoch = 1; epoch <= plan.epochs; ++epoch) {
        Rng shuffle_rng = substream(plan.seed, 0xE2, static_cast<uint64_t>(epoch));
        const std::vector<size_t> order = shuffled_indices(data.size(), shuffle_rng);
        double sum_cls = 0.0, last_lr = 0.0;
        int64_t steps = 0;
        for (size_t off = 0; off < order.size(); off += static_cast<size_t>(plan.batch)) {
            std::vector<const FeatureSequence*> batch;
            for (size_t i = off; i < std::min(order.size(), off + static_cast<size_t>(plan.batch));
                 ++i)
                batch.push_back(&data[order[i]]);
            Rng noise_rng =
                substream(plan.seed, 0xA2, static_cast<uint64_t>(epoch), static_cast<uint64_t>(off));
            last_lr = opt.current_lr() * ocfg.lr;
            sum_cls += classifier_step(params, batch, cls, {}, opt, noise_rng);
            ++steps;
        }
        emit_log(log, Stage::train_classifier, epoch, sum_cls / static_cast<double>(steps), 0.0,
                 0.0, sum_cls / static_cast<double>(steps), last_lr);
    }
    params.frozen_groups.clear();
    return params;
}

Tensor codebook_for_classes(const std::vector<int32_t>& class_ids, int64_t De) {
    Tensor book = Tensor::zeros({static_cast<int64_t>(class_ids.size()), De});
    const Tensor full = nce_codebook(
        1 + *std::max_element(class_ids.begin(), class_ids.end()), De);
    for (size_t i = 0; i < class_ids.size(); ++i)
        for (int64_t j = 0; j < De; ++j)
            book.at2(static_cast<int64_t>(i), j) = full.at2(class_ids[i], j);
    return book;
}

Tensor flatten_latents(Graph* g, const ModelConfig& cfg, const Tensor& z_rows, int64_t batch) {
    std::vector<Tensor> rows;
    rows.reserve(static_cast<size_t>(batch));
    for (int64_t b = 0; b < batch; ++b) {
        std::vector<Tensor> frames;
        frames.reserve(static_cast<size_t>(cfg.T));
        for (int64_t t = 0; t < cfg.T; ++t) frames.push_back(slice(g, z_rows, 0, t * batch + b, 1));
        rows.push_back(frames.size() == 1 ? frames[0] : concat(g, frames, 1));
    }
    return rows.size() == 1 ? rows[0] : concat(g, rows, 0);
}

ModelParams adapt(const std::vector<FeatureSequence>& support, const ModelParams& pretrained,
                  const std::vector<int32_t>& class_ids, const ElboOptions& elbo_opt,
                  const ClsOptions& cls, const AdaptConfig& acfg, const OptimConfig& optim,
                  uint64_t seed, AdaptReport* report, std::ostream* log) {
    if (support.empty()) throw DitedError("adapt: empty support set");
    if (class_ids.empty()) throw DitedError("adapt: empty class list");

    ModelParams params = pretrained;
    const int64_t way = static_cast<int64_t>(class_ids.size());

    if (cls.mode == ClsMode::ce && params.config.C != way) {
        // disjoint label set: fresh output head sized for the episode,
        // hidden classifier layers carried over
        params.config.C = way;
        Rng head_rng = substream(seed, hash_name("psi-head"));
        const double bound = std::sqrt(6.0 / static_cast<double>(params.config.H + way));
        Tensor w2 = Tensor::zeros({params.config.H, way});
        for (int64_t i = 0; i < w2.numel(); ++i) w2.at(i) = head_rng.uniform(-bound, bound);
        params.tensors["psi/cls/w2"] = std::move(w2);
        params.tensors["psi/cls/b2"] = Tensor::zeros({way});
    }
    if (params.config.cls_mode != cls.mode)
        throw DitedError("adapt: loss mode does not match the model head");

    std::set<std::string> tuned;

    if (!acfg.skip_phase_a) {
        std::set<std::string> groups = TrainPlan::canonical_groups(Stage::adapt_representation);
        if (acfg.finetune_dynamics) {
            groups.insert("phi");
            groups.insert("gamma");
        }
        const std::set<std::string> trainable = existing(groups, params);
        tuned.insert(trainable.begin(), trainable.end());
        freeze_all_but(params, trainable);

        OptimConfig ocfg = optim;
        ocfg.horizon = std::max<int64_t>(1, acfg.steps_a);
        ocfg.group_lr["omega"] = acfg.lr_omega;
        ocfg.group_lr["theta"] = acfg.lr_theta;
        AdamW opt(ocfg);
        std::vector<const FeatureSequence*> batch;
        for (const FeatureSequence& s : support) batch.push_back(&s);
        for (int64_t step = 0; step < acfg.steps_a; ++step) {
            Rng noise_rng = substream(seed, 0xA3, static_cast<uint64_t>(step));
            Graph g;
            BoundParams bp = bind_params(g, params);
            LossReport rep;
            const Tensor loss = elbo_loss(&g, params.config, bp.t, batch, noise_rng, elbo_opt, &rep);
            const double lr = opt.current_lr() * ocfg.lr;
            GradientMap grads = g.backward(loss);
            opt.step(params, grads, bp.leaf_ids);
            if (log && (step + 1) % 25 == 0)
                emit_log(log, Stage::adapt_representation, step + 1, rep.total, rep.recon, rep.kld,
                         std::nullopt, lr);
        }
    }

    {
        const std::set<std::string> trainable =
            existing(TrainPlan::canonical_groups(Stage::adapt_classifier), params);
        tuned.insert(trainable.begin(), trainable.end());
        freeze_all_but(params, trainable);

        OptimConfig ocfg = optim;
        ocfg.horizon = std::max<int64_t>(1, acfg.steps_b);
        ocfg.group_lr["psi"] = acfg.lr_psi;
        AdamW opt(ocfg);
        std::vector<const FeatureSequence*> batch;
        for (const FeatureSequence& s : support) batch.push_back(&s);
        for (int64_t step = 0; step < acfg.steps_b; ++step) {
            Rng noise_rng = substream(seed, 0xA4, static_cast<uint64_t>(step));
            const double lr = opt.current_lr() * ocfg.lr;
            const double cl = classifier_step(params, batch, cls, class_ids, opt, noise_rng);
            if (log && (step + 1) % 25 == 0)
                emit_log(log, Stage::adapt_classifier, step + 1, cl, 0.0, 0.0, cl, lr);
        }
    }

    if (report) {
        report->tuned_param_count = 0;
        for (const std::string& gname : tuned) report->tuned_param_count += params.group_size(gname);
    }
    params.frozen_groups.clear();
    return params;
}

}  // namespace dited
