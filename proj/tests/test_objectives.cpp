#include <doctest.h>

#include <cmath>

#include "dited/checks.hpp"
#include "dited/objectives.hpp"

using namespace dited;
using namespace dited::ops;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.Dx = 5;
    cfg.Du = 3;
    cfg.N = 3;
    cfg.l = 1;
    cfg.S = 2;
    cfg.T = 4;
    cfg.H = 8;
    cfg.C = 2;
    cfg.De = 4;
    return cfg;
}

std::vector<FeatureSequence> make_batch(const ModelConfig& cfg, int64_t count, uint64_t seed,
                                        double lo = 0.05, double hi = 0.95) {
    std::vector<FeatureSequence> out;
    for (int64_t b = 0; b < count; ++b) {
        Rng rng = substream(seed, static_cast<uint64_t>(b));
        FeatureSequence s;
        s.x = Tensor::zeros({cfg.T, cfg.Dx});
        for (int64_t i = 0; i < s.x.numel(); ++i) s.x.at(i) = rng.uniform(lo, hi);
        s.label = static_cast<int32_t>(b % cfg.C);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<const FeatureSequence*> ptrs(const std::vector<FeatureSequence>& v) {
    std::vector<const FeatureSequence*> out;
    for (const FeatureSequence& s : v) out.push_back(&s);
    return out;
}

void zero_group(ModelParams& p, const std::string& group) {
    for (auto& [name, t] : p.tensors)
        if (group_of(name) == group)
            for (double& v : t.data) v = 0.0;
}

}  // namespace

TEST_CASE("elbo: beta=0 gives total equal to recon exactly") {
    const ModelConfig cfg = tiny_config();
    const ModelParams p = ModelParams::init(cfg, 1);
    const auto batch = make_batch(cfg, 3, 2);
    ElboOptions opt;
    opt.beta = 0.0;
    Rng rng(3);
    LossReport rep;
    elbo_loss(nullptr, cfg, p.tensors, ptrs(batch), rng, opt, &rep);
    CHECK(rep.total == rep.recon);
}

TEST_CASE("elbo: report composes total = recon + beta*kld and per-frame values") {
    const ModelConfig cfg = tiny_config();
    const ModelParams p = ModelParams::init(cfg, 4);
    const auto batch = make_batch(cfg, 2, 5);
    ElboOptions opt;
    opt.beta = 0.02;
    opt.collect_per_frame = true;
    Rng rng(6);
    LossReport rep;
    elbo_loss(nullptr, cfg, p.tensors, ptrs(batch), rng, opt, &rep);
    CHECK(rep.total == doctest::Approx(rep.recon + 0.02 * rep.kld).epsilon(1e-14));
    REQUIRE(rep.per_frame.size() == static_cast<size_t>(cfg.T));
    double mean_recon = 0.0, mean_kld = 0.0;
    for (const auto& [r, k] : rep.per_frame) {
        mean_recon += r;
        mean_kld += k;
    }
    CHECK(mean_recon / static_cast<double>(cfg.T) == doctest::Approx(rep.recon).epsilon(1e-12));
    CHECK(mean_kld / static_cast<double>(cfg.T) == doctest::Approx(rep.kld).epsilon(1e-12));
    CHECK(std::isfinite(rep.total));
}

TEST_CASE("elbo: matched posterior and prior give a near-zero KL estimate (10^4 samples)") {
    ModelConfig cfg = tiny_config();
    ModelParams p = ModelParams::init(cfg, 7);
    zero_group(p, "phi");    // identity flow, standard-normal noise
    zero_group(p, "omega");  // mu = 0
    // sigma head bias set so softplus(b) + 1e-4 == 1
    Tensor& b2 = p.tensors.at("omega/enc/b2");
    const double b = std::log(std::exp(1.0 - 1e-4) - 1.0);
    for (int64_t n = 0; n < cfg.N; ++n) b2.at(cfg.N + n) = b;

    const auto batch = make_batch(cfg, 25, 8);
    ElboOptions opt;
    opt.beta = 1.0;
    double acc = 0.0;
    const int reps = 100;  // 25 seqs * 4 frames * 100 reps = 10^4 frame samples
    for (int r = 0; r < reps; ++r) {
        Rng rng = substream(9, static_cast<uint64_t>(r));
        LossReport rep;
        elbo_loss(nullptr, cfg, p.tensors, ptrs(batch), rng, opt, &rep);
        acc += rep.kld;
    }
    CHECK(std::abs(acc / reps) <= 0.02);
}

TEST_CASE("elbo: decoder bypass hits the entropy floor (Dx*ln2 at x=0.5)") {
    const ModelConfig cfg = tiny_config();
    const ModelParams p = ModelParams::init(cfg, 10);
    std::vector<FeatureSequence> batch(1);
    batch[0].x = Tensor::full({cfg.T, cfg.Dx}, 0.5);
    ElboOptions opt;
    opt.beta = 0.0;
    opt.decoder_bypass = true;
    Rng rng(11);
    LossReport rep;
    elbo_loss(nullptr, cfg, p.tensors, ptrs(batch), rng, opt, &rep);
    CHECK(rep.recon ==
          doctest::Approx(static_cast<double>(cfg.Dx) * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("elbo: recon never beats the entropy floor of the targets") {
    const ModelConfig cfg = tiny_config();
    const auto batch = make_batch(cfg, 3, 12);
    ElboOptions opt;
    opt.beta = 0.0;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        const ModelParams p = ModelParams::init(cfg, 100 + seed);
        Rng r1(13), r2(13);
        LossReport rep, floor_rep;
        elbo_loss(nullptr, cfg, p.tensors, ptrs(batch), r1, opt, &rep);
        ElboOptions bypass = opt;
        bypass.decoder_bypass = true;
        elbo_loss(nullptr, cfg, p.tensors, ptrs(batch), r2, bypass, &floor_rep);
        CHECK(rep.recon >= floor_rep.recon);
    }
}

TEST_CASE("elbo: rejects features outside (0,1) and empty batches") {
    const ModelConfig cfg = tiny_config();
    const ModelParams p = ModelParams::init(cfg, 14);
    std::vector<FeatureSequence> batch(1);
    batch[0].x = Tensor::full({cfg.T, cfg.Dx}, 0.5);
    batch[0].x.at(3) = 1.0;
    ElboOptions opt;
    Rng rng(15);
    CHECK_THROWS_WITH_AS(elbo_loss(nullptr, cfg, p.tensors, ptrs(batch), rng, opt, nullptr),
                         doctest::Contains("outside (0,1)"), DitedError);
    std::vector<const FeatureSequence*> empty;
    CHECK_THROWS_AS(elbo_loss(nullptr, cfg, p.tensors, empty, rng, opt, nullptr), DitedError);
}

TEST_CASE("elbo: total is affine in beta with slope kld under pinned noise") {
    const ModelConfig cfg = tiny_config();
    const ModelParams p = ModelParams::init(cfg, 16);
    const auto batch = make_batch(cfg, 2, 17);
    std::vector<Tensor> noise;
    Rng nr(18);
    for (size_t i = 0; i < batch.size(); ++i) {
        Tensor n = Tensor::zeros({cfg.T, cfg.N});
        for (int64_t j = 0; j < n.numel(); ++j) n.at(j) = nr.normal();
        noise.push_back(std::move(n));
    }
    Rng unused(0);
    double totals[3], klds[3], recons[3];
    const double betas[3] = {0.0, 0.5, 1.0};
    for (int i = 0; i < 3; ++i) {
        ElboOptions opt;
        opt.beta = betas[i];
        opt.pinned_noise = &noise;
        LossReport rep;
        elbo_loss(nullptr, cfg, p.tensors, ptrs(batch), unused, opt, &rep);
        totals[i] = rep.total;
        klds[i] = rep.kld;
        recons[i] = rep.recon;
    }
    CHECK(klds[0] == klds[1]);
    CHECK(klds[1] == klds[2]);
    CHECK(recons[0] == recons[1]);
    CHECK(totals[1] - totals[0] == doctest::Approx(0.5 * klds[0]).epsilon(1e-12));
    CHECK(totals[2] - totals[0] == doctest::Approx(klds[0]).epsilon(1e-12));
}

TEST_CASE("elbo: gradients for omega, theta, phi, gamma match finite differences at 1e-4") {
    const ModelConfig cfg = tiny_config();
    const ModelParams params = ModelParams::init(cfg, 19);
    const auto batch = make_batch(cfg, 2, 20);
    std::vector<Tensor> noise;
    Rng nr(21);
    for (size_t i = 0; i < batch.size(); ++i) {
        Tensor n = Tensor::zeros({cfg.T, cfg.N});
        for (int64_t j = 0; j < n.numel(); ++j) n.at(j) = nr.normal();
        noise.push_back(std::move(n));
    }
    std::vector<std::string> names;
    std::vector<Tensor> values;
    for (const auto& [name, t] : params.tensors) {
        if (group_of(name) == "psi") continue;
        names.push_back(name);
        values.push_back(t);
    }
    ElboOptions opt;
    opt.beta = 0.02;
    opt.pinned_noise = &noise;
    const auto f = [&](Graph& g, const std::vector<Tensor>& tracked) {
        ParamMap pm = params.tensors;
        for (size_t i = 0; i < names.size(); ++i) pm[names[i]] = tracked[i];
        Rng unused(0);
        return elbo_loss(&g, cfg, pm, ptrs(batch), unused, opt, nullptr);
    };
    const FdReport rep = finite_diff_check(f, values, 1e-5, 1e-4, names);
    CHECK(rep.pass);
    CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("ce_loss: closed forms") {
    const Tensor uniform = Tensor::row({0.3, 0.3, 0.3, 0.3});
    CHECK(ce_loss(nullptr, uniform, 1).at(0) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    const Tensor confident = Tensor::row({100.0, 0.0, 0.0});
    CHECK(ce_loss(nullptr, confident, 0).at(0) == doctest::Approx(0.0).epsilon(1e-9));

    const Tensor abc = Tensor::row({1.0, 2.0, 3.0});
    CHECK(ce_loss(nullptr, abc, 2).at(0) == doctest::Approx(0.40761).epsilon(1e-4));

    CHECK_THROWS_AS(ce_loss(nullptr, abc, 3), DitedError);
    CHECK_THROWS_AS(ce_loss(nullptr, abc, -1), DitedError);
}

TEST_CASE("ce_loss: nonnegative and decreasing in the true logit") {
    Rng rng(22);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor logits = Tensor::zeros({1, 5});
        for (int64_t i = 0; i < 5; ++i) logits.at(i) = rng.uniform(-3.0, 3.0);
        const int32_t y = static_cast<int32_t>(rng.next_u64() % 5);
        const double l0 = ce_loss(nullptr, logits, y).at(0);
        CHECK(l0 >= 0.0);
        logits.at(y) += 0.5;
        const double l1 = ce_loss(nullptr, logits, y).at(0);
        CHECK(l1 < l0);
    }
}

TEST_CASE("ce_loss: gradient through the classifier matches finite differences") {
    Rng rng(23);
    Tensor x = Tensor::zeros({1, 6});
    for (int64_t i = 0; i < 6; ++i) x.at(i) = rng.uniform(-1.0, 1.0);
    const auto f = [&](Graph& g, const std::vector<Tensor>& p) {
        const Tensor logits = linear(&g, x, p[0], p[1]);
        return ce_loss(&g, logits, 2);
    };
    Tensor w = Tensor::zeros({6, 4}), b = Tensor::zeros({4});
    for (int64_t i = 0; i < w.numel(); ++i) w.at(i) = rng.uniform(-1.0, 1.0);
    for (int64_t i = 0; i < b.numel(); ++i) b.at(i) = rng.uniform(-0.5, 0.5);
    const FdReport rep = finite_diff_check(f, {w, b}, 1e-5, 1e-5);
    CHECK(rep.pass);
}

TEST_CASE("nce_loss: closed forms") {
    // two orthogonal unit codes, embedding equal to its class code
    Tensor codebook = Tensor::zeros({2, 4});
    codebook.at2(0, 0) = 1.0;
    codebook.at2(1, 1) = 1.0;
    Tensor emb = Tensor::zeros({1, 4});
    emb.at2(0, 0) = 1.0;
    const double loss = nce_loss(nullptr, emb, {0}, codebook, 1.0).at(0);
    const double e = std::exp(1.0);
    CHECK(loss == doctest::Approx(-std::log(e / (e + 1.0))).epsilon(1e-12));
    CHECK(loss == doctest::Approx(0.3133).epsilon(1e-3));

    // equal similarities to every code -> ln C
    Tensor basis = Tensor::zeros({3, 3});
    for (int64_t i = 0; i < 3; ++i) basis.at2(i, i) = 1.0;
    Tensor mid = Tensor::full({1, 3}, 0.5);
    CHECK(nce_loss(nullptr, mid, {1}, basis, 0.7).at(0) ==
          doctest::Approx(std::log(3.0)).epsilon(1e-12));

    // tau -> 0 with a unique argmax at the true class drives the loss to zero
    Tensor emb2 = Tensor::zeros({1, 4});
    emb2.at2(0, 0) = 0.9;
    emb2.at2(0, 1) = 0.1;
    CHECK(nce_loss(nullptr, emb2, {0}, codebook, 1e-3).at(0) ==
          doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("nce_loss: rejects bad inputs") {
    Tensor codebook = Tensor::zeros({2, 4});
    codebook.at2(0, 0) = 1.0;
    codebook.at2(1, 1) = 1.0;
    const Tensor zero = Tensor::zeros({1, 4});
    CHECK_THROWS_WITH_AS(nce_loss(nullptr, zero, {0}, codebook, 1.0),
                         doctest::Contains("zero-norm"), DitedError);
    Tensor emb = Tensor::zeros({1, 4});
    emb.at2(0, 0) = 1.0;
    CHECK_THROWS_AS(nce_loss(nullptr, emb, {0}, codebook, 0.0), DitedError);
    Tensor bad = codebook;
    bad.at2(0, 0) = 2.0;
    CHECK_THROWS_AS(nce_loss(nullptr, emb, {0}, bad, 1.0), DitedError);
}

TEST_CASE("nce_loss: nonnegative and decreasing in the true-class similarity") {
    Tensor codebook = Tensor::zeros({3, 6});
    for (int64_t i = 0; i < 3; ++i) codebook.at2(i, i) = 1.0;
    Rng rng(24);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor emb = Tensor::zeros({1, 6});
        for (int64_t i = 0; i < 6; ++i) emb.at(i) = rng.uniform(-1.0, 1.0);
        emb.at(5) += 2.0;  // keep the norm well away from zero
        const double l0 = nce_loss(nullptr, emb, {1}, codebook, 0.5).at(0);
        CHECK(l0 >= 0.0);
        // move the embedding toward its class code: similarity rises
        Tensor closer = emb;
        for (int64_t i = 0; i < 6; ++i)
            closer.at(i) = 0.8 * emb.at(i) + 0.6 * codebook.at2(1, i);
        const double l1 = nce_loss(nullptr, closer, {1}, codebook, 0.5).at(0);
        CHECK(l1 < l0);
    }
}
