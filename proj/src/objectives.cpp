#include "dited/objectives.hpp"

#include <cmath>

namespace dited {

using namespace ops;

namespace {

double entropy_bce(double p) {
    // BCE(p, p): the floor attained by a perfect reconstruction
    return -(p * std::log(p) + (1.0 - p) * std::log1p(-p));
}

Tensor transpose_plain(const Tensor& t) {
    Tensor out = Tensor::zeros({t.cols(), t.rows()});
    for (int64_t i = 0; i < t.rows(); ++i)
        for (int64_t j = 0; j < t.cols(); ++j) out.at2(j, i) = t.at2(i, j);
    return out;
}

}  // namespace

Tensor elbo_loss(Graph* g, const ModelConfig& cfg, const ParamMap& P,
                 const std::vector<const FeatureSequence*>& batch, Rng& rng,
                 const ElboOptions& opt, LossReport* report) {
    if (batch.empty()) throw DitedError("elbo: empty batch");
    if (opt.beta < 0.0) throw DitedError("elbo: beta must be >= 0");
    const int64_t B = static_cast<int64_t>(batch.size());
    const int64_t T = cfg.T, Dx = cfg.Dx;

    // frame-major stacking: row t*B + b
    Tensor X = Tensor::zeros({T * B, Dx});
    for (int64_t b = 0; b < B; ++b) {
        const Tensor& x = batch[static_cast<size_t>(b)]->x;
        if (x.rank() != 2 || x.rows() != T || x.cols() != Dx)
            throw DitedError("elbo: sequence shape " + shape_str(x.shape) + ", expected (" +
                             std::to_string(T) + "x" + std::to_string(Dx) + ")");
        for (int64_t t = 0; t < T; ++t)
            for (int64_t d = 0; d < Dx; ++d) {
                const double v = x.at2(t, d);
                if (!(v > 0.0 && v < 1.0))
                    throw DitedError("elbo: feature value " + std::to_string(v) +
                                     " outside (0,1)");
                X.at2(t * B + b, d) = v;
            }
    }

    DomainTrajectory traj;
    const Tensor* u = nullptr;
    if (cfg.use_domain_encoder) {
        traj = domain_encode(g, cfg, P, X, B);
        u = &traj.u;
    }
    const PosteriorStats stats = encode_posterior(g, cfg, P, X, u);

    Tensor noise = Tensor::zeros({T * B, cfg.N});
    if (opt.pinned_noise) {
        if (static_cast<int64_t>(opt.pinned_noise->size()) != B)
            throw DitedError("elbo: pinned noise count != batch size");
        for (int64_t b = 0; b < B; ++b)
            for (int64_t t = 0; t < T; ++t)
                for (int64_t n = 0; n < cfg.N; ++n)
                    noise.at2(t * B + b, n) = (*opt.pinned_noise)[static_cast<size_t>(b)].at2(t, n);
    } else {
        for (int64_t b = 0; b < B; ++b)
            for (int64_t t = 0; t < T; ++t)
                for (int64_t n = 0; n < cfg.N; ++n) noise.at2(t * B + b, n) = rng.normal();
    }
    const Tensor z = sample_latent_with(g, stats, noise);

    // reconstruction from pre-sigmoid logits: BCE(p, sigmoid(a)) =
    // p*softplus(-a) + (1-p)*softplus(a), stable for any logit
    Tensor bce;
    if (opt.decoder_bypass) {
        bce = Tensor::zeros({T * B, Dx});
        for (int64_t i = 0; i < bce.numel(); ++i) bce.at(i) = entropy_bce(X.at(i));
    } else {
        Tensor one_minus = Tensor::zeros(X.shape);
        for (int64_t i = 0; i < X.numel(); ++i) one_minus.at(i) = 1.0 - X.at(i);
        const Tensor a = decode_logits(g, cfg, P, z);
        bce = add(g, mul(g, softplus(g, neg(g, a)), X), mul(g, softplus(g, a), one_minus));
    }
    const double inv_tb = 1.0 / static_cast<double>(T * B);
    const Tensor recon = scale(g, sum(g, bce), inv_tb);

    const Tensor logq_rows = gaussian_log_density_rows(g, z, stats.mu, stats.sigma);
    const Tensor logp_rows = transition_log_prior_rows(g, cfg, P, z, u, B);
    const Tensor kl_rows = sub(g, logq_rows, logp_rows);
    const Tensor kld = scale(g, sum(g, kl_rows), inv_tb);

    const Tensor total = add(g, recon, scale(g, kld, opt.beta));
    if (!total.all_finite() || !recon.all_finite() || !kld.all_finite())
        throw DitedError("elbo: non-finite loss");

    if (report) {
        report->recon = recon.at(0);
        report->kld = kld.at(0);
        report->total = total.at(0);
        report->cls.reset();
        report->per_frame.clear();
        if (opt.collect_per_frame) {
            for (int64_t t = 0; t < T; ++t) {
                double r = 0.0, k = 0.0;
                for (int64_t b = 0; b < B; ++b) {
                    for (int64_t d = 0; d < Dx; ++d) r += bce.at2(t * B + b, d);
                    k += kl_rows.at(t * B + b);
                }
                report->per_frame.emplace_back(r / static_cast<double>(B),
                                               k / static_cast<double>(B));
            }
        }
    }
    return total;
}

Tensor ce_loss(Graph* g, const Tensor& logits, int32_t y) {
    Tensor row = logits;
    if (row.rank() == 1) row = reshape(g, row, {1, row.numel()});
    if (row.rank() != 2 || row.rows() != 1)
        throw DitedError("ce_loss: expected a single logit row, got " + shape_str(logits.shape));
    return ce_loss_rows(g, row, {y});
}

Tensor ce_loss_rows(Graph* g, const Tensor& logits, const std::vector<int32_t>& labels) {
    if (logits.rank() != 2 || logits.rows() != static_cast<int64_t>(labels.size()))
        throw DitedError("ce_loss: logits " + shape_str(logits.shape) + " vs " +
                         std::to_string(labels.size()) + " labels");
    const int64_t C = logits.cols();
    for (int32_t y : labels)
        if (y < 0 || y >= C)
            throw DitedError("ce_loss: class index " + std::to_string(y) + " out of range [0," +
                             std::to_string(C) + ")");
    const Tensor p = softmax(g, logits);
    std::vector<Tensor> picks;
    picks.reserve(labels.size());
    for (size_t i = 0; i < labels.size(); ++i)
        picks.push_back(slice(g, slice(g, p, 0, static_cast<int64_t>(i), 1), 1, labels[i], 1));
    const Tensor picked = picks.size() == 1 ? picks[0] : concat(g, picks, 0);
    return mean(g, neg(g, ops::log(g, picked)));
}

Tensor nce_loss(Graph* g, const Tensor& embeddings, const std::vector<int32_t>& labels,
                const Tensor& codebook, double tau) {
    if (tau <= 0.0) throw DitedError("nce_loss: tau must be > 0");
    if (embeddings.rank() != 2 || embeddings.cols() != codebook.cols())
        throw DitedError("nce_loss: embeddings " + shape_str(embeddings.shape) +
                         " vs codebook " + shape_str(codebook.shape));
    for (int64_t c = 0; c < codebook.rows(); ++c) {
        double n2 = 0.0;
        for (int64_t j = 0; j < codebook.cols(); ++j) n2 += codebook.at2(c, j) * codebook.at2(c, j);
        if (std::abs(n2 - 1.0) > 1e-6)
            throw DitedError("nce_loss: codebook row " + std::to_string(c) + " is not unit norm");
    }
    const Tensor sq_norm = matmul(g, square(g, embeddings),
                                  Tensor::full({embeddings.cols(), 1}, 1.0));
    for (int64_t i = 0; i < sq_norm.numel(); ++i)
        if (sq_norm.at(i) <= 0.0) throw DitedError("nce_loss: zero-norm embedding");
    const Tensor norm = ops::sqrt(g, sq_norm);
    const Tensor sims = matmul(g, embeddings, transpose_plain(codebook));
    const Tensor cos = div(g, sims, norm);
    return ce_loss_rows(g, scale(g, cos, 1.0 / tau), labels);
}

}  // namespace dited
