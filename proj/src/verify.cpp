#include "dited/verify.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dited/checks.hpp"
#include "dited/io.hpp"
#include "dited/kernels.hpp"
#include "dited/objectives.hpp"

namespace dited {

namespace oracle {

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.assign(static_cast<size_t>(n), 0.0);
    weights.assign(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        // Newton iteration from the Chebyshev estimate
        double x = std::cos(3.141592653589793 * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
            }
            pp = n * (x * p0 - p1) / (x * x - 1.0);
            const double dx = p0 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        nodes[static_cast<size_t>(i)] = -x;
        nodes[static_cast<size_t>(n - 1 - i)] = x;
        const double w = 2.0 / ((1.0 - x * x) * pp * pp);
        weights[static_cast<size_t>(i)] = w;
        weights[static_cast<size_t>(n - 1 - i)] = w;
    }
}

double quadrature_normalization(const ModelConfig& cfg, const ParamMap& P, const Tensor& z_window,
                                const Tensor* u, int nodes_per_axis) {
    if (cfg.N != 3) throw DitedError("quadrature oracle: built for N=3");
    std::vector<double> gx, gw;
    gauss_legendre(nodes_per_axis, gx, gw);
    const double half = 6.0;  // [-6, 6] per axis

    Tensor z = z_window;
    const int64_t t = cfg.l;
    double integral = 0.0;
    for (int i0 = 0; i0 < nodes_per_axis; ++i0)
        for (int i1 = 0; i1 < nodes_per_axis; ++i1)
            for (int i2 = 0; i2 < nodes_per_axis; ++i2) {
                z.at2(t, 0) = half * gx[static_cast<size_t>(i0)];
                z.at2(t, 1) = half * gx[static_cast<size_t>(i1)];
                z.at2(t, 2) = half * gx[static_cast<size_t>(i2)];
                const Tensor lp = transition_log_prior(nullptr, cfg, P, z, u);
                integral += gw[static_cast<size_t>(i0)] * gw[static_cast<size_t>(i1)] *
                            gw[static_cast<size_t>(i2)] * std::exp(lp.at(t));
            }
    return integral * half * half * half;
}

double log_abs_det(std::vector<std::vector<double>> m) {
    const size_t n = m.size();
    double logdet = 0.0;
    for (size_t col = 0; col < n; ++col) {
        size_t piv = col;
        for (size_t r = col + 1; r < n; ++r)
            if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
        if (m[piv][col] == 0.0) return -std::numeric_limits<double>::infinity();
        std::swap(m[piv], m[col]);
        logdet += std::log(std::abs(m[col][col]));
        for (size_t r = col + 1; r < n; ++r) {
            const double f = m[r][col] / m[col][col];
            for (size_t c = col; c < n; ++c) m[r][c] -= f * m[col][c];
        }
    }
    return logdet;
}

JacobianCheck jacobian_factorization_check(const ModelConfig& cfg, const ParamMap& P,
                                           const Tensor& z_window, const Tensor* u, double step) {
    const int64_t t = cfg.l;
    const int64_t N = cfg.N;
    const auto [eps0, logdet] = inverse_transition(nullptr, cfg, P, z_window, u, t);

    std::vector<std::vector<double>> jac(static_cast<size_t>(N),
                                         std::vector<double>(static_cast<size_t>(N), 0.0));
    JacobianCheck out;
    out.min_diag_slope = 1e300;
    for (int64_t j = 0; j < N; ++j) {
        Tensor zp = z_window, zm = z_window;
        zp.at2(t, j) += step;
        zm.at2(t, j) -= step;
        const Tensor ep = inverse_transition(nullptr, cfg, P, zp, u, t).first;
        const Tensor em = inverse_transition(nullptr, cfg, P, zm, u, t).first;
        for (int64_t i = 0; i < N; ++i) {
            jac[static_cast<size_t>(i)][static_cast<size_t>(j)] =
                (ep.at(i) - em.at(i)) / (2.0 * step);
            if (i != j)
                out.max_offdiag =
                    std::max(out.max_offdiag,
                             std::abs(jac[static_cast<size_t>(i)][static_cast<size_t>(j)]));
        }
    }
    for (int64_t i = 0; i < N; ++i)
        out.min_diag_slope =
            std::min(out.min_diag_slope, jac[static_cast<size_t>(i)][static_cast<size_t>(i)]);

    const double logdet_fd = log_abs_det(jac);
    out.logdet_err = std::abs(logdet_fd - logdet.at(0));

    // brute-force density: independent plain-loop evaluation of the noise
    // head plus the full finite-difference Jacobian determinant
    double noise_lp = 0.0;
    if (cfg.has_noise_head()) {
        const Tensor& w0 = P.at("phi/noise/w0");
        const Tensor& b0 = P.at("phi/noise/b0");
        const Tensor& w1 = P.at("phi/noise/w1");
        const Tensor& b1 = P.at("phi/noise/b1");
        std::vector<double> h(static_cast<size_t>(cfg.H), 0.0);
        for (int64_t q = 0; q < cfg.H; ++q) {
            double acc = b0.at(q);
            for (int64_t j = 0; j < cfg.Du; ++j) acc += u->at2(t, j) * w0.at2(j, q);
            h[static_cast<size_t>(q)] = acc >= 0.0 ? acc : 0.01 * acc;
        }
        for (int64_t n = 0; n < N; ++n) {
            double mn = b1.at(n), vn = b1.at(N + n);
            for (int64_t q = 0; q < cfg.H; ++q) {
                mn += h[static_cast<size_t>(q)] * w1.at2(q, n);
                vn += h[static_cast<size_t>(q)] * w1.at2(q, N + n);
            }
            const double d = eps0.at(n) - mn;
            noise_lp += -0.5 * d * d / std::exp(vn) - 0.5 * vn - 0.9189385332046727;
        }
    } else {
        for (int64_t n = 0; n < N; ++n)
            noise_lp += -0.5 * eps0.at(n) * eps0.at(n) - 0.9189385332046727;
    }
    const double brute = noise_lp + logdet_fd;

    ModelConfig short_cfg = cfg;
    short_cfg.T = z_window.rows();
    const Tensor lp = transition_log_prior(nullptr, short_cfg, P, z_window, u);
    out.density_err = std::abs(lp.at(t) - brute);
    return out;
}

Tensor matmul_reference(const Tensor& a, const Tensor& b) {
    Tensor c = Tensor::zeros({a.rows(), b.cols()});
    matmul_serial(a.data.data(), b.data.data(), c.data.data(), a.rows(), a.cols(), b.cols());
    return c;
}

}  // namespace oracle

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

std::vector<FeatureSequence> tiny_batch(const ModelConfig& cfg, int64_t count, uint64_t seed) {
    std::vector<FeatureSequence> out;
    for (int64_t b = 0; b < count; ++b) {
        Rng rng = substream(seed, 0xDA, static_cast<uint64_t>(b));
        FeatureSequence s;
        s.x = Tensor::zeros({cfg.T, cfg.Dx});
        for (int64_t i = 0; i < s.x.numel(); ++i) s.x.at(i) = rng.uniform(0.05, 0.95);
        s.label = static_cast<int32_t>(b % cfg.C);
        out.push_back(std::move(s));
    }
    return out;
}

VerifyItem check_matmul_reference() {
    VerifyItem item{"matmul-vs-triple-loop", true, ""};
    Rng rng(42);
    for (int trial = 0; trial < 8 && item.pass; ++trial) {
        const int64_t m = 1 + static_cast<int64_t>(rng.next_u64() % 32);
        const int64_t k = 1 + static_cast<int64_t>(rng.next_u64() % 32);
        const int64_t n = 1 + static_cast<int64_t>(rng.next_u64() % 32);
        Tensor a = Tensor::zeros({m, k}), b = Tensor::zeros({k, n});
        for (int64_t i = 0; i < a.numel(); ++i)
            a.at(i) = static_cast<double>(static_cast<int64_t>(rng.next_u64() % 17) - 8);
        for (int64_t i = 0; i < b.numel(); ++i)
            b.at(i) = static_cast<double>(static_cast<int64_t>(rng.next_u64() % 17) - 8);
        const Tensor c = ops::matmul(nullptr, a, b);
        const Tensor ref = oracle::matmul_reference(a, b);
        for (int64_t i = 0; i < c.numel(); ++i)
            if (c.at(i) != ref.at(i)) {
                item.pass = false;
                item.detail = "mismatch vs reference";
            }
    }
    return item;
}

VerifyItem check_elbo_gradient() {
    VerifyItem item{"elbo-gradient-fd", false, ""};
    const ModelConfig cfg = tiny_config();
    const ModelParams params = ModelParams::init(cfg, 11);
    const auto batch = tiny_batch(cfg, 2, 12);

    std::vector<Tensor> noise;
    Rng nrng(13);
    for (size_t b = 0; b < batch.size(); ++b) {
        Tensor n = Tensor::zeros({cfg.T, cfg.N});
        for (int64_t i = 0; i < n.numel(); ++i) n.at(i) = nrng.normal();
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
        std::vector<const FeatureSequence*> bp;
        for (const FeatureSequence& s : batch) bp.push_back(&s);
        Rng unused(0);
        return elbo_loss(&g, cfg, pm, bp, unused, opt, nullptr);
    };

    const FdReport rep = finite_diff_check(f, values, 1e-5, 1e-4, names);
    item.pass = rep.pass;
    std::ostringstream ss;
    ss << "max rel err " << rep.max_rel_err;
    item.detail = ss.str();
    return item;
}

VerifyItem check_jacobian() {
    VerifyItem item{"jacobian-factorization", true, ""};
    double worst_logdet = 0.0, worst_density = 0.0, worst_offdiag = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        ModelConfig cfg = tiny_config();
        cfg.N = 3 + trial % 4;  // N in 3..6
        cfg.T = cfg.l + 1;
        const ModelParams params = ModelParams::init(cfg, 100 + static_cast<uint64_t>(trial));
        Rng rng = substream(77, static_cast<uint64_t>(trial));
        Tensor z = Tensor::zeros({cfg.T, cfg.N});
        for (int64_t i = 0; i < z.numel(); ++i) z.at(i) = 2.0 * rng.normal();
        Tensor u = Tensor::zeros({cfg.T, cfg.Du});
        for (int64_t i = 0; i < u.numel(); ++i) u.at(i) = rng.normal();
        const auto chk = oracle::jacobian_factorization_check(cfg, params.tensors, z, &u, 1e-5);
        worst_logdet = std::max(worst_logdet, chk.logdet_err);
        worst_density = std::max(worst_density, chk.density_err);
        worst_offdiag = std::max(worst_offdiag, chk.max_offdiag);
        if (chk.min_diag_slope <= 0.0) item.pass = false;
    }
    if (worst_logdet > 1e-5 || worst_density > 1e-5 || worst_offdiag != 0.0) item.pass = false;
    std::ostringstream ss;
    ss << "logdet err " << worst_logdet << ", density err " << worst_density << ", offdiag "
       << worst_offdiag;
    item.detail = ss.str();
    return item;
}

VerifyItem check_quadrature() {
    VerifyItem item{"prior-normalization", true, ""};
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        ModelConfig cfg = tiny_config();
        cfg.N = 3;
        cfg.T = cfg.l + 1;
        const ModelParams params = ModelParams::init(cfg, 500 + static_cast<uint64_t>(trial));
        Rng rng = substream(88, static_cast<uint64_t>(trial));
        Tensor z = Tensor::zeros({cfg.T, cfg.N});
        for (int64_t i = 0; i < z.numel(); ++i) z.at(i) = rng.normal();
        Tensor u = Tensor::zeros({cfg.T, cfg.Du});
        for (int64_t i = 0; i < u.numel(); ++i) u.at(i) = 0.5 * rng.normal();
        const double integral =
            oracle::quadrature_normalization(cfg, params.tensors, z, &u, 32);
        worst = std::max(worst, std::abs(integral - 1.0));
    }
    item.pass = worst <= 0.02;
    std::ostringstream ss;
    ss << "max |integral - 1| = " << worst;
    item.detail = ss.str();
    return item;
}

VerifyItem check_checkpoint(const std::string& tmp_dir) {
    VerifyItem item{"checkpoint-round-trip", true, ""};
    const ModelConfig cfg = tiny_config();
    const ModelParams params = ModelParams::init(cfg, 21);
    const std::string p1 = tmp_dir + "/verify_ckpt_a.bin";
    const std::string p2 = tmp_dir + "/verify_ckpt_b.bin";
    save_checkpoint(p1, params);
    const ModelParams loaded = load_checkpoint(p1);
    for (const auto& [name, t] : params.tensors) {
        const Tensor& lt = loaded.tensors.at(name);
        if (lt.shape != t.shape || lt.data != t.data) {
            item.pass = false;
            item.detail = "round-trip mismatch at " + name;
            return item;
        }
    }
    save_checkpoint(p2, loaded);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::ostringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    if (s1.str() != s2.str()) {
        item.pass = false;
        item.detail = "save-load-save not byte identical";
        return item;
    }

    // flip one payload byte: load must fail the CRC check
    std::string bytes = s1.str();
    bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x20);
    {
        std::ofstream out(p2, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    bool rejected = false;
    try {
        load_checkpoint(p2);
    } catch (const DitedError& e) {
        rejected = std::string(e.what()).find("CRC") != std::string::npos;
    }
    if (!rejected) {
        item.pass = false;
        item.detail = "corrupted checkpoint not rejected";
        return item;
    }
    std::remove(p1.c_str());
    std::remove(p2.c_str());
    item.detail = "bit-exact, corruption rejected";
    return item;
}

VerifyItem check_primitive_gradients() {
    VerifyItem item{"primitive-gradients-fd", true, ""};
    double worst = 0.0;
    Rng rng(3);

    // representative composite touching every primitive family
    const auto f = [](Graph& g, const std::vector<Tensor>& p) {
        using namespace ops;
        const Tensor& a = p[0];
        const Tensor& b = p[1];
        const Tensor& c = p[2];
        Tensor h = matmul(&g, a, b);
        h = leaky_relu(&g, h);
        h = add(&g, h, c);
        Tensor s = softmax(&g, h);
        Tensor m1 = mul(&g, ops::tanh(&g, h), sigmoid(&g, h));
        Tensor d = div(&g, ops::exp(&g, scale(&g, h, 0.3)),
                       add_scalar(&g, square(&g, h), 1.0));
        Tensor lg = ops::log(&g, add_scalar(&g, ops::sqrt(&g, softplus(&g, h)), 0.5));
        Tensor cat = concat(&g, {s, m1, d, lg}, 1);
        Tensor sl = slice(&g, cat, 1, 1, 5);
        Tensor r = reshape(&g, sl, {sl.numel()});
        return add(&g, mean(&g, square(&g, r)), sum(&g, neg(&g, sub(&g, m1, d))));
    };

    for (int trial = 0; trial < 5; ++trial) {
        Tensor a = Tensor::zeros({3, 4}), b = Tensor::zeros({4, 2}), c = Tensor::zeros({2});
        for (int64_t i = 0; i < a.numel(); ++i) a.at(i) = rng.uniform(-1.5, 1.5);
        for (int64_t i = 0; i < b.numel(); ++i) b.at(i) = rng.uniform(-1.5, 1.5);
        for (int64_t i = 0; i < c.numel(); ++i) c.at(i) = rng.uniform(-1.5, 1.5);
        const FdReport rep = finite_diff_check(f, {a, b, c}, 1e-5, 1e-5);
        worst = std::max(worst, rep.max_rel_err);
        if (!rep.pass) item.pass = false;
    }
    std::ostringstream ss;
    ss << "max rel err " << worst;
    item.detail = ss.str();
    return item;
}

}  // namespace

std::vector<VerifyItem> run_verification(const std::string& tmp_dir) {
    std::vector<VerifyItem> items;
    items.push_back(check_matmul_reference());
    items.push_back(check_primitive_gradients());
    items.push_back(check_elbo_gradient());
    items.push_back(check_jacobian());
    items.push_back(check_quadrature());
    items.push_back(check_checkpoint(tmp_dir));
    return items;
}

}  // namespace dited
