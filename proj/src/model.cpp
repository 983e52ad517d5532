#include "dited/model.hpp"

#include <cmath>
#include <cstring>

namespace dited {

using namespace ops;

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * log(2*pi)
constexpr double kResidualBound = 0.9;              // |dg/dz| <= 0.9 * a_n
constexpr uint64_t kCodebookSeed = 0xD17EDC0DEULL;

Tensor xavier(Shape shape, int64_t fan_in, int64_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t = Tensor::zeros(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.uniform(-bound, bound);
    return t;
}

void init_tensor(ParamMap& m, uint64_t seed, const std::string& name, Shape shape,
                 int64_t fan_in, int64_t fan_out) {
    Rng rng = substream(seed, hash_name(name.c_str()));
    m[name] = xavier(std::move(shape), fan_in, fan_out, rng);
}

void init_zeros(ParamMap& m, const std::string& name, Shape shape) {
    m[name] = Tensor::zeros(std::move(shape));
}

const Tensor& req(const ParamMap& P, const std::string& name) {
    auto it = P.find(name);
    if (it == P.end()) throw DitedError("model: missing parameter " + name);
    return it->second;
}

// ones column (n x 1) used to row-sum via matmul
Tensor ones_col(int64_t n) { return Tensor::full({n, 1}, 1.0); }

Tensor row_sum(Graph* g, const Tensor& x) { return matmul(g, x, ones_col(x.cols())); }

struct FlowBlock {
    Tensor eps;          // (R x N)
    Tensor logdet_rows;  // (R x 1)
};

// Monotone residual inverse map, vectorized over rows:
//   eps = a .* z + 0.9 a .* tanh(w(c)) .* tanh(z + m(c)),  a = exp(log_scale)
// The slope a + dg/dz stays in [0.1 a, 1.9 a], so the map is invertible in z
// and the log-determinant has the closed form summed below.
FlowBlock flow_apply(Graph* g, const ParamMap& P, const Tensor& zc, const Tensor& cond) {
    const Tensor trunk =
        leaky_relu(g, linear(g, cond, req(P, "phi/trans/w0"), req(P, "phi/trans/b0")));
    const Tensor m = linear(g, trunk, req(P, "phi/trans/wm"), req(P, "phi/trans/bm"));
    const Tensor w = linear(g, trunk, req(P, "phi/trans/ww"), req(P, "phi/trans/bw"));
    const Tensor a = ops::exp(g, req(P, "phi/trans/log_scale"));

    const Tensor t1 = ops::tanh(g, add(g, zc, m));
    const Tensor wmod = ops::tanh(g, w);

    FlowBlock out;
    out.eps = add(g, mul(g, zc, a),
                  mul(g, mul(g, t1, wmod), scale(g, a, kResidualBound)));
    // d eps / d z = a .* (1 + 0.9 tanh(w) (1 - t1^2))
    const Tensor bump = add_scalar(
        g, scale(g, mul(g, wmod, add_scalar(g, neg(g, square(g, t1)), 1.0)), kResidualBound), 1.0);
    out.logdet_rows = row_sum(g, ops::log(g, mul(g, bump, a)));
    return out;
}

// log N(x; mean, var = exp(logvar)) summed per row -> (R x 1)
Tensor normal_log_density_rows(Graph* g, const Tensor& x, const Tensor& mean,
                               const Tensor& logvar) {
    const Tensor d = sub(g, x, mean);
    const Tensor quad = scale(g, mul(g, square(g, d), ops::exp(g, neg(g, logvar))), -0.5);
    const Tensor per = add_scalar(g, sub(g, quad, scale(g, logvar, 0.5)), -kHalfLog2Pi);
    return row_sum(g, per);
}

// standard normal case, no parameters
Tensor std_normal_log_density_rows(Graph* g, const Tensor& x) {
    return row_sum(g, add_scalar(g, scale(g, square(g, x), -0.5), -kHalfLog2Pi));
}

// conditioning vector rows for frames [l, T): [z_{t-1} | ... | z_{t-l} | u_t]
Tensor build_cond(Graph* g, const ModelConfig& cfg, const Tensor& z, const Tensor* u,
                  int64_t batch) {
    std::vector<Tensor> frames;
    const int64_t t0 = cfg.tie_parents ? 0 : cfg.l;
    for (int64_t t = t0; t < cfg.T; ++t) {
        std::vector<Tensor> parts;
        for (int64_t j = 1; j <= cfg.l; ++j) {
            if (cfg.tie_parents) {
                // parent window replaced by the current frame's values
                parts.push_back(detach(slice(g, z, 0, t * batch, batch)));
            } else {
                parts.push_back(slice(g, z, 0, (t - j) * batch, batch));
            }
        }
        if (cfg.use_domain_encoder) {
            if (!u) throw DitedError("transition: domain trajectory required");
            parts.push_back(slice(g, *u, 0, t * batch, batch));
        }
        frames.push_back(parts.size() == 1 ? parts[0] : concat(g, parts, 1));
    }
    return frames.size() == 1 ? frames[0] : concat(g, frames, 0);
}

}  // namespace

void ModelConfig::validate() const {
    auto pos = [](int64_t v, const char* name) {
        if (v < 1) throw DitedError(std::string("config: ") + name + " must be >= 1");
    };
    pos(Dx, "Dx");
    pos(N, "N");
    pos(l, "l");
    pos(T, "T");
    pos(H, "H");
    pos(C, "C");
    pos(De, "De");
    if (use_domain_encoder) {
        pos(Du, "Du");
        pos(S, "S");
    }
    if (l >= T) throw DitedError("config: need l < T");
}

bool ModelConfig::same_architecture(const ModelConfig& o) const {
    return Dx == o.Dx && Du == o.Du && N == o.N && l == o.l && S == o.S && T == o.T && H == o.H &&
           C == o.C && De == o.De && cls_mode == o.cls_mode &&
           use_domain_encoder == o.use_domain_encoder && use_transition == o.use_transition &&
           tie_parents == o.tie_parents && conditional_noise == o.conditional_noise;
}

ModelParams ModelParams::init(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    ModelParams p;
    p.config = cfg;
    ParamMap& m = p.tensors;

    const int64_t ein = cfg.encoder_in();
    init_tensor(m, seed, "omega/enc/w0", {ein, cfg.H}, ein, cfg.H);
    init_zeros(m, "omega/enc/b0", {cfg.H});
    init_tensor(m, seed, "omega/enc/w1", {cfg.H, cfg.H}, cfg.H, cfg.H);
    init_zeros(m, "omega/enc/b1", {cfg.H});
    init_tensor(m, seed, "omega/enc/w2", {cfg.H, 2 * cfg.N}, cfg.H, 2 * cfg.N);
    init_zeros(m, "omega/enc/b2", {2 * cfg.N});

    if (cfg.use_domain_encoder) {
        init_tensor(m, seed, "theta/gate/w", {cfg.Dx, cfg.S}, cfg.Dx, cfg.S);
        init_zeros(m, "theta/gate/b", {cfg.S});
        // one Du x Dx map per latent domain, stored as column blocks
        init_tensor(m, seed, "theta/mix/w", {cfg.Dx, cfg.S * cfg.Du}, cfg.Dx, cfg.Du);
        init_tensor(m, seed, "theta/gru/w_ih", {cfg.Du, 3 * cfg.Du}, cfg.Du, 3 * cfg.Du);
        init_tensor(m, seed, "theta/gru/w_hh", {cfg.Du, 3 * cfg.Du}, cfg.Du, 3 * cfg.Du);
        init_zeros(m, "theta/gru/b_ih", {3 * cfg.Du});
        init_zeros(m, "theta/gru/b_hh", {3 * cfg.Du});
    }

    if (cfg.use_transition) {
        const int64_t cd = cfg.cond_dim();
        init_tensor(m, seed, "phi/trans/w0", {cd, cfg.H}, cd, cfg.H);
        init_zeros(m, "phi/trans/b0", {cfg.H});
        init_tensor(m, seed, "phi/trans/wm", {cfg.H, cfg.N}, cfg.H, cfg.N);
        init_zeros(m, "phi/trans/bm", {cfg.N});
        init_tensor(m, seed, "phi/trans/ww", {cfg.H, cfg.N}, cfg.H, cfg.N);
        init_zeros(m, "phi/trans/bw", {cfg.N});
        init_zeros(m, "phi/trans/log_scale", {cfg.N});
        if (cfg.has_noise_head()) {
            init_tensor(m, seed, "phi/noise/w0", {cfg.Du, cfg.H}, cfg.Du, cfg.H);
            init_zeros(m, "phi/noise/b0", {cfg.H});
            init_tensor(m, seed, "phi/noise/w1", {cfg.H, 2 * cfg.N}, cfg.H, 2 * cfg.N);
            init_zeros(m, "phi/noise/b1", {2 * cfg.N});
        }
    }

    init_tensor(m, seed, "gamma/dec/w0", {cfg.N, cfg.H}, cfg.N, cfg.H);
    init_zeros(m, "gamma/dec/b0", {cfg.H});
    init_tensor(m, seed, "gamma/dec/w1", {cfg.H, cfg.H}, cfg.H, cfg.H);
    init_zeros(m, "gamma/dec/b1", {cfg.H});
    init_tensor(m, seed, "gamma/dec/w2", {cfg.H, cfg.Dx}, cfg.H, cfg.Dx);
    init_zeros(m, "gamma/dec/b2", {cfg.Dx});

    const int64_t cout = cfg.cls_out();
    init_tensor(m, seed, "psi/cls/w0", {cfg.T * cfg.N, cfg.H}, cfg.T * cfg.N, cfg.H);
    init_zeros(m, "psi/cls/b0", {cfg.H});
    init_tensor(m, seed, "psi/cls/w1", {cfg.H, cfg.H}, cfg.H, cfg.H);
    init_zeros(m, "psi/cls/b1", {cfg.H});
    init_tensor(m, seed, "psi/cls/w2", {cfg.H, cout}, cfg.H, cout);
    init_zeros(m, "psi/cls/b2", {cout});
    return p;
}

bool ModelParams::has_group(const std::string& g) const {
    auto it = tensors.lower_bound(g + "/");
    return it != tensors.end() && group_of(it->first) == g;
}

int64_t ModelParams::group_size(const std::string& g) const {
    int64_t n = 0;
    for (const auto& [name, t] : tensors)
        if (group_of(name) == g) n += t.numel();
    return n;
}

std::set<std::string> ModelParams::groups() const {
    std::set<std::string> out;
    for (const auto& [name, t] : tensors) out.insert(group_of(name));
    return out;
}

uint64_t ModelParams::group_hash(const std::string& g) const {
    uint64_t h = 1469598103934665603ULL;
    for (const auto& [name, t] : tensors) {
        if (group_of(name) != g) continue;
        for (char c : name) h = (h ^ static_cast<uint8_t>(c)) * 1099511628211ULL;
        for (double v : t.data) {
            uint64_t bits;
            static_assert(sizeof(bits) == sizeof(v));
            std::memcpy(&bits, &v, sizeof(bits));
            for (int k = 0; k < 8; ++k) h = (h ^ ((bits >> (8 * k)) & 0xff)) * 1099511628211ULL;
        }
    }
    return h;
}

BoundParams bind_params(Graph& g, const ModelParams& p) {
    BoundParams out;
    for (const auto& [name, t] : p.tensors) {
        if (p.frozen_groups.count(group_of(name))) {
            out.t[name] = t;
        } else {
            Tensor leaf = g.leaf(t);
            out.leaf_ids[name] = leaf.node;
            out.t[name] = std::move(leaf);
        }
    }
    return out;
}

Tensor detach(const Tensor& t) {
    Tensor out = t;
    out.node = -1;
    return out;
}

DomainTrajectory domain_encode(Graph* g, const ModelConfig& cfg, const ParamMap& P,
                               const Tensor& x, int64_t batch) {
    if (!cfg.use_domain_encoder) throw DitedError("domain_encode: model has no domain encoder");
    if (x.rank() != 2 || x.cols() != cfg.Dx || x.rows() != cfg.T * batch)
        throw DitedError("domain_encode: expected (" + std::to_string(cfg.T * batch) + "x" +
                         std::to_string(cfg.Dx) + "), got " + shape_str(x.shape));

    DomainTrajectory traj;
    traj.gates = softmax(g, linear(g, x, req(P, "theta/gate/w"), req(P, "theta/gate/b")));
    const Tensor xm = matmul(g, x, req(P, "theta/mix/w"));

    Tensor mixed;  // (T*B x Du), gate-weighted sum of the per-domain maps
    for (int64_t s = 0; s < cfg.S; ++s) {
        Tensor term = mul(g, slice(g, xm, 1, s * cfg.Du, cfg.Du), slice(g, traj.gates, 1, s, 1));
        mixed = s == 0 ? term : add(g, mixed, term);
    }

    const Tensor& w_ih = req(P, "theta/gru/w_ih");
    const Tensor& w_hh = req(P, "theta/gru/w_hh");
    const Tensor& b_ih = req(P, "theta/gru/b_ih");
    const Tensor& b_hh = req(P, "theta/gru/b_hh");
    const int64_t Du = cfg.Du;

    Tensor h = Tensor::zeros({batch, Du});
    std::vector<Tensor> states;
    states.reserve(static_cast<size_t>(cfg.T));
    for (int64_t t = 0; t < cfg.T; ++t) {
        const Tensor xt = slice(g, mixed, 0, t * batch, batch);
        const Tensor gi = linear(g, xt, w_ih, b_ih);
        const Tensor gh = linear(g, h, w_hh, b_hh);
        const Tensor r = sigmoid(g, add(g, slice(g, gi, 1, 0, Du), slice(g, gh, 1, 0, Du)));
        const Tensor zg = sigmoid(g, add(g, slice(g, gi, 1, Du, Du), slice(g, gh, 1, Du, Du)));
        const Tensor n =
            ops::tanh(g, add(g, slice(g, gi, 1, 2 * Du, Du), mul(g, r, slice(g, gh, 1, 2 * Du, Du))));
        h = add(g, sub(g, n, mul(g, zg, n)), mul(g, zg, h));
        states.push_back(h);
    }
    traj.u = states.size() == 1 ? states[0] : concat(g, states, 0);
    return traj;
}

PosteriorStats encode_posterior(Graph* g, const ModelConfig& cfg, const ParamMap& P,
                                const Tensor& x, const Tensor* u) {
    Tensor in = x;
    if (cfg.use_domain_encoder) {
        if (!u) throw DitedError("encode_posterior: domain trajectory required");
        in = concat(g, {x, *u}, 1);
    }
    Tensor h = leaky_relu(g, linear(g, in, req(P, "omega/enc/w0"), req(P, "omega/enc/b0")));
    h = leaky_relu(g, linear(g, h, req(P, "omega/enc/w1"), req(P, "omega/enc/b1")));
    const Tensor out = linear(g, h, req(P, "omega/enc/w2"), req(P, "omega/enc/b2"));
    PosteriorStats st;
    st.mu = slice(g, out, 1, 0, cfg.N);
    st.sigma = add_scalar(g, softplus(g, slice(g, out, 1, cfg.N, cfg.N)), 1e-4);
    return st;
}

Tensor sample_latent(Graph* g, const PosteriorStats& stats, Rng& rng) {
    Tensor noise = Tensor::zeros(stats.mu.shape);
    for (int64_t i = 0; i < noise.numel(); ++i) noise.at(i) = rng.normal();
    return sample_latent_with(g, stats, noise);
}

Tensor sample_latent_with(Graph* g, const PosteriorStats& stats, const Tensor& noise) {
    // gradient flows through mu and sigma only; noise stays a constant
    return add(g, stats.mu, mul(g, stats.sigma, detach(noise)));
}

Tensor decode_logits(Graph* g, const ModelConfig& cfg, const ParamMap& P, const Tensor& z) {
    (void)cfg;
    Tensor h = leaky_relu(g, linear(g, z, req(P, "gamma/dec/w0"), req(P, "gamma/dec/b0")));
    h = leaky_relu(g, linear(g, h, req(P, "gamma/dec/w1"), req(P, "gamma/dec/b1")));
    return linear(g, h, req(P, "gamma/dec/w2"), req(P, "gamma/dec/b2"));
}

Tensor decode(Graph* g, const ModelConfig& cfg, const ParamMap& P, const Tensor& z) {
    return sigmoid(g, decode_logits(g, cfg, P, z));
}

std::pair<Tensor, Tensor> inverse_transition(Graph* g, const ModelConfig& cfg, const ParamMap& P,
                                             const Tensor& z, const Tensor* u, int64_t t) {
    if (!cfg.use_transition) throw DitedError("inverse_transition: model has no transition");
    if (t < cfg.l)
        throw DitedError("inverse_transition: frame " + std::to_string(t) +
                         " has no full parent window (l=" + std::to_string(cfg.l) + ")");
    const Tensor zc = slice(g, z, 0, t, 1);
    std::vector<Tensor> parts;
    for (int64_t j = 1; j <= cfg.l; ++j) parts.push_back(slice(g, z, 0, t - j, 1));
    if (cfg.use_domain_encoder) {
        if (!u) throw DitedError("inverse_transition: domain trajectory required");
        parts.push_back(slice(g, *u, 0, t, 1));
    }
    const Tensor cond = parts.size() == 1 ? parts[0] : concat(g, parts, 1);
    FlowBlock fb = flow_apply(g, P, zc, cond);
    return {reshape(g, fb.eps, {cfg.N}), reshape(g, fb.logdet_rows, {1})};
}

Tensor transition_log_prior_rows(Graph* g, const ModelConfig& cfg, const ParamMap& P,
                                 const Tensor& z, const Tensor* u, int64_t batch) {
    if (z.rank() != 2 || z.cols() != cfg.N || z.rows() != cfg.T * batch)
        throw DitedError("transition_log_prior: bad z shape " + shape_str(z.shape));

    if (!cfg.use_transition) {
        return std_normal_log_density_rows(g, z);  // standard-normal prior at every frame
    }

    const int64_t t0 = cfg.tie_parents ? 0 : cfg.l;
    std::vector<Tensor> parts;
    if (t0 > 0) {
        // frames without a full parent window fall back to a standard normal
        parts.push_back(std_normal_log_density_rows(g, slice(g, z, 0, 0, t0 * batch)));
    }

    const Tensor zc = slice(g, z, 0, t0 * batch, (cfg.T - t0) * batch);
    const Tensor cond = build_cond(g, cfg, z, u, batch);
    FlowBlock fb = flow_apply(g, P, zc, cond);

    Tensor noise_ld;
    if (cfg.has_noise_head()) {
        const Tensor un = slice(g, *u, 0, t0 * batch, (cfg.T - t0) * batch);
        const Tensor hh =
            leaky_relu(g, linear(g, un, req(P, "phi/noise/w0"), req(P, "phi/noise/b0")));
        const Tensor mv = linear(g, hh, req(P, "phi/noise/w1"), req(P, "phi/noise/b1"));
        noise_ld = normal_log_density_rows(g, fb.eps, slice(g, mv, 1, 0, cfg.N),
                                           slice(g, mv, 1, cfg.N, cfg.N));
    } else {
        noise_ld = std_normal_log_density_rows(g, fb.eps);
    }
    parts.push_back(add(g, noise_ld, fb.logdet_rows));
    return parts.size() == 1 ? parts[0] : concat(g, parts, 0);
}

Tensor transition_log_prior(Graph* g, const ModelConfig& cfg, const ParamMap& P, const Tensor& z,
                            const Tensor* u) {
    return reshape(g, transition_log_prior_rows(g, cfg, P, z, u, 1), {cfg.T});
}

Tensor gaussian_log_density_rows(Graph* g, const Tensor& z, const Tensor& mu, const Tensor& sigma) {
    const Tensor d = div(g, sub(g, z, mu), sigma);
    const Tensor per =
        sub(g, add_scalar(g, scale(g, square(g, d), -0.5), -kHalfLog2Pi), ops::log(g, sigma));
    return row_sum(g, per);
}

Tensor classify_rows(Graph* g, const ModelConfig& cfg, const ParamMap& P, const Tensor& z_flat) {
    if (z_flat.rank() != 2 || z_flat.cols() != cfg.T * cfg.N)
        throw DitedError("classify: expected (batch x " + std::to_string(cfg.T * cfg.N) +
                         "), got " + shape_str(z_flat.shape));
    Tensor h = leaky_relu(g, linear(g, z_flat, req(P, "psi/cls/w0"), req(P, "psi/cls/b0")));
    h = leaky_relu(g, linear(g, h, req(P, "psi/cls/w1"), req(P, "psi/cls/b1")));
    return linear(g, h, req(P, "psi/cls/w2"), req(P, "psi/cls/b2"));
}

Tensor classify(Graph* g, const ModelConfig& cfg, const ParamMap& P, const Tensor& z) {
    return classify_rows(g, cfg, P, reshape(g, z, {1, cfg.T * cfg.N}));
}

Tensor nce_codebook(int64_t C, int64_t De) {
    Tensor book = Tensor::zeros({C, De});
    for (int64_t c = 0; c < C; ++c) {
        Rng rng = substream(kCodebookSeed, static_cast<uint64_t>(c));
        double norm2 = 0.0;
        for (int64_t j = 0; j < De; ++j) {
            const double v = rng.normal();
            book.at2(c, j) = v;
            norm2 += v * v;
        }
        const double inv = 1.0 / std::sqrt(norm2);
        for (int64_t j = 0; j < De; ++j) book.at2(c, j) *= inv;
    }
    return book;
}

int argmax_index(const double* v, int64_t n) {
    int best = 0;
    for (int64_t i = 1; i < n; ++i)
        if (v[i] > v[best]) best = static_cast<int>(i);
    return best;
}

}  // namespace dited
