#include <doctest.h>

#include <cmath>

#include "dited/eval.hpp"

using namespace dited;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.Dx = 8;
    cfg.Du = 3;
    cfg.N = 4;
    cfg.l = 1;
    cfg.S = 2;
    cfg.T = 4;
    cfg.H = 8;
    cfg.C = 5;
    cfg.De = 6;
    return cfg;
}

// dataset whose class id is written into feature column c (0.9 vs 0.1)
Dataset labeled_columns_dataset(const ModelConfig& cfg, int64_t per_class, uint64_t seed) {
    Dataset d;
    d.role = Role::novel;
    d.Dx = cfg.Dx;
    d.T = cfg.T;
    d.Nstar = 1;
    for (int32_t c = 0; c < cfg.C; ++c) d.class_ids.push_back(c);
    for (int32_t c = 0; c < cfg.C; ++c)
        for (int64_t i = 0; i < per_class; ++i) {
            Rng rng = substream(seed, static_cast<uint64_t>(c), static_cast<uint64_t>(i));
            SeqRecord rec;
            rec.seq.label = c;
            rec.seq.x = Tensor::full({cfg.T, cfg.Dx}, 0.1);
            for (int64_t t = 0; t < cfg.T; ++t) {
                rec.seq.x.at2(t, c) = 0.9;
                for (int64_t j = 0; j < cfg.Dx; ++j)
                    rec.seq.x.at2(t, j) = std::min(
                        0.95, std::max(0.05, rec.seq.x.at2(t, j) + 0.01 * rng.normal()));
            }
            d.records.push_back(std::move(rec));
        }
    return d;
}

void set_identity(Tensor& t) {
    for (double& v : t.data) v = 0.0;
    const int64_t n = std::min(t.rows(), t.cols());
    for (int64_t i = 0; i < n; ++i) t.at2(i, i) = 1.0;
}

// Hand-built pipeline that reads the label back out of the features:
// mu copies x's first N columns, the classifier head sums latent column c
// over frames into logit c. A perfect predictor on labeled_columns_dataset.
ModelParams oracle_params(const ModelConfig& cfg) {
    ModelParams p = ModelParams::init(cfg, 0);
    for (auto& [name, t] : p.tensors)
        for (double& v : t.data) v = 0.0;

    set_identity(p.tensors.at("omega/enc/w0"));  // (Dx+Du x H): keeps x's first H dims
    set_identity(p.tensors.at("omega/enc/w1"));
    set_identity(p.tensors.at("omega/enc/w2"));  // mu = first N feature columns

    set_identity(p.tensors.at("gamma/dec/w0"));
    set_identity(p.tensors.at("gamma/dec/w1"));
    set_identity(p.tensors.at("gamma/dec/w2"));

    Tensor& w0 = p.tensors.at("psi/cls/w0");  // (T*N x H): h_n = sum_t z_{t,n}
    for (int64_t t = 0; t < cfg.T; ++t)
        for (int64_t n = 0; n < cfg.N && n < cfg.H; ++n) w0.at2(t * cfg.N + n, n) = 1.0;
    set_identity(p.tensors.at("psi/cls/w1"));
    set_identity(p.tensors.at("psi/cls/w2"));  // logit_c = h_c
    return p;
}

}  // namespace

TEST_CASE("evaluate: a constant predictor scores exactly 1/way on balanced queries") {
    const ModelConfig cfg = tiny_config();
    ModelParams p = ModelParams::init(cfg, 1);
    for (auto& [name, t] : p.tensors)
        if (group_of(name) == "psi")
            for (double& v : t.data) v = 0.0;  // equal logits -> always class 0

    const Dataset d = labeled_columns_dataset(cfg, 4, 2);
    const auto eps = make_episodes(d, 5, 1, 6, 3);
    EvalOptions opt;
    const EvalResult r = evaluate(d, eps, p, opt);
    CHECK(r.top1 == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(r.ep_mean == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(r.ep_std <= 1e-8);
    // per-class accuracies weighted by counts reproduce top1 (balanced here)
    double weighted = 0.0;
    for (const auto& [c, acc] : r.per_class) weighted += acc;
    CHECK(weighted / static_cast<double>(r.per_class.size()) ==
          doctest::Approx(r.top1).epsilon(1e-12));
}

TEST_CASE("evaluate: an oracle pipeline scores 1.0") {
    ModelConfig cfg = tiny_config();
    cfg.N = 5;  // the oracle needs one latent column per class
    const ModelParams p = oracle_params(cfg);
    const Dataset d = labeled_columns_dataset(cfg, 4, 4);
    const auto eps = make_episodes(d, 5, 1, 4, 5);
    EvalOptions opt;
    const EvalResult r = evaluate(d, eps, p, opt);
    CHECK(r.top1 == doctest::Approx(1.0));
    CHECK(r.n_query == 4 * 15);
}

TEST_CASE("evaluate: random logits on a 5-way balanced query land near chance") {
    ModelConfig cfg = tiny_config();
    const ModelParams p = ModelParams::init(cfg, 97);  // random head, never trained
    // class-independent random features: logits are independent of the labels
    Dataset d;
    d.role = Role::novel;
    d.Dx = cfg.Dx;
    d.T = cfg.T;
    d.Nstar = 1;
    for (int32_t c = 0; c < 5; ++c) d.class_ids.push_back(c);
    for (int64_t i = 0; i < 75; ++i) {
        Rng rng = substream(7, static_cast<uint64_t>(i));
        SeqRecord rec;
        rec.seq.label = static_cast<int32_t>(i % 5);
        rec.seq.x = Tensor::zeros({cfg.T, cfg.Dx});
        for (int64_t j = 0; j < rec.seq.x.numel(); ++j) rec.seq.x.at(j) = rng.uniform(0.05, 0.95);
        d.records.push_back(std::move(rec));
    }
    // 5-way, k=1 -> 14 query per class, 70 per episode, 15 trials -> 1050 queries
    const auto eps = make_episodes(d, 5, 1, 15, 8);
    EvalOptions opt;
    const EvalResult r = evaluate(d, eps, p, opt);
    CHECK(r.n_query == 1050);
    CHECK(r.top1 >= 0.16);
    CHECK(r.top1 <= 0.24);
}

TEST_CASE("evaluate: deterministic for fixed params and episodes") {
    const ModelConfig cfg = tiny_config();
    const ModelParams p = ModelParams::init(cfg, 9);
    const Dataset d = labeled_columns_dataset(cfg, 3, 10);
    const auto eps = make_episodes(d, 3, 1, 8, 11);
    EvalOptions opt;
    const EvalResult a = evaluate(d, eps, p, opt);
    const EvalResult b = evaluate(d, eps, p, opt);
    CHECK(a.top1 == b.top1);
    CHECK(a.per_episode == b.per_episode);
}

TEST_CASE("evaluate: empty inputs are rejected") {
    const ModelConfig cfg = tiny_config();
    const ModelParams p = ModelParams::init(cfg, 12);
    const Dataset d = labeled_columns_dataset(cfg, 3, 13);
    CHECK_THROWS_AS(evaluate(d, {}, p, EvalOptions{}), DitedError);
    Episode ep;
    ep.way = 2;
    ep.k = 1;
    ep.class_ids = {0, 1};
    ep.support = {0, 3};
    CHECK_THROWS_AS(evaluate(d, {ep}, p, EvalOptions{}), DitedError);
}

TEST_CASE("sign test: exact binomial tails") {
    CHECK(sign_test_p(8, 2) == doctest::Approx(56.0 / 1024.0).epsilon(1e-12));
    CHECK(sign_test_p(9, 1) == doctest::Approx(11.0 / 1024.0).epsilon(1e-12));
    CHECK(sign_test_p(0, 0) == doctest::Approx(1.0));
    CHECK(sign_test_p(10, 10) > 0.5);
    CHECK(sign_test_p(150, 50) < 1e-10);
}

TEST_CASE("transition agreement: zero for identical models, positive after re-randomizing phi") {
    ModelConfig cfg = tiny_config();
    const ModelParams a = ModelParams::init(cfg, 14);
    LatentRanges ranges;
    ranges.z_lo = Tensor::full({cfg.N}, -2.0);
    ranges.z_hi = Tensor::full({cfg.N}, 2.0);
    ranges.u_lo = Tensor::full({cfg.Du}, -1.0);
    ranges.u_hi = Tensor::full({cfg.Du}, 1.0);

    CHECK(transition_agreement(a, a, ranges, 500, 15) == 0.0);

    const ModelParams b = reinit_group(a, "phi", 999);
    const double d = transition_agreement(a, b, ranges, 500, 15);
    CHECK(d > 0.0);

    ModelConfig other = cfg;
    other.N = cfg.N + 1;
    const ModelParams c = ModelParams::init(other, 16);
    CHECK_THROWS_AS(transition_agreement(a, c, ranges, 10, 17), DitedError);
}

TEST_CASE("pooled latent ranges cover both models' posteriors") {
    const ModelConfig cfg = tiny_config();
    const ModelParams a = ModelParams::init(cfg, 18);
    const ModelParams b = ModelParams::init(cfg, 19);
    const Dataset d = labeled_columns_dataset(cfg, 3, 20);
    const LatentRanges r = pooled_latent_ranges(a, d, b, d, 8);
    for (int64_t n = 0; n < cfg.N; ++n) CHECK(r.z_lo.at(n) <= r.z_hi.at(n));
    for (int64_t j = 0; j < cfg.Du; ++j) CHECK(r.u_lo.at(j) <= r.u_hi.at(j));
}

TEST_CASE("reinit_group touches exactly the requested group") {
    const ModelConfig cfg = tiny_config();
    const ModelParams a = ModelParams::init(cfg, 21);
    const ModelParams b = reinit_group(a, "phi", 22);
    CHECK(a.group_hash("phi") != b.group_hash("phi"));
    for (const char* g : {"omega", "theta", "gamma", "psi"})
        CHECK(a.group_hash(g) == b.group_hash(g));
}
