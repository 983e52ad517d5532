#include "dited/io.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace dited {

namespace {

constexpr char kCkptMagic[8] = {'D', 'I', 'T', 'E', 'D', 'C', 'K', 'P'};
constexpr char kDataMagic[8] = {'D', 'I', 'T', 'E', 'D', 'D', 'A', 'T'};
constexpr uint32_t kCkptVersion = 1;
constexpr uint32_t kDataVersion = 1;

// --- little-endian buffer encoding -----------------------------------------

void put_u8(std::string& b, uint8_t v) { b.push_back(static_cast<char>(v)); }

void put_u32(std::string& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& b, uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& b, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(b, bits);
}

void put_f32(std::string& b, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(b, bits);
}

void put_str(std::string& b, const std::string& s) {
    put_u32(b, static_cast<uint32_t>(s.size()));
    b.append(s);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    std::string what;

    Reader(const std::string& b, std::string w) : buf(b), what(std::move(w)) {}

    void need(size_t n) const {
        if (pos + n > buf.size()) throw DitedError(what + ": truncated file");
    }
    uint8_t u8() {
        need(1);
        return static_cast<uint8_t>(buf[pos++]);
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
        return v;
    }
    double f64() {
        const uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    float f32() {
        const uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string str() {
        const uint32_t n = u32();
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
    void expect_end() const {
        if (pos != buf.size()) throw DitedError(what + ": trailing bytes");
    }
};

void atomic_write(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DitedError("io: cannot open " + tmp + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DitedError("io: write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw DitedError("io: rename to " + path + " failed");
}

std::string read_file(const std::string& path, const std::string& what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DitedError(what + ": cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

uint32_t crc_of(const std::string& b) {
    uLong c = crc32(0L, Z_NULL, 0);
    c = crc32(c, reinterpret_cast<const Bytef*>(b.data()), static_cast<uInt>(b.size()));
    return static_cast<uint32_t>(c);
}

// --- key=value text ---------------------------------------------------------

using KvMap = std::map<std::string, std::string>;

KvMap parse_kv(const std::string& text, const std::string& what) {
    KvMap out;
    std::istringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        size_t a = line.find_first_not_of(" \t\r");
        if (a == std::string::npos) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw DitedError(what + ": line " + std::to_string(lineno) + " is not key = value");
        auto trim = [](std::string s) {
            const size_t x = s.find_first_not_of(" \t\r");
            const size_t y = s.find_last_not_of(" \t\r");
            return x == std::string::npos ? std::string() : s.substr(x, y - x + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw DitedError(what + ": empty key or value on line " + std::to_string(lineno));
        if (!out.emplace(key, val).second)
            throw DitedError(what + ": duplicate key " + key);
    }
    return out;
}

int64_t to_i64(const std::string& v, const std::string& key) {
    try {
        size_t idx = 0;
        const int64_t r = std::stoll(v, &idx);
        if (idx != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (...) {
        throw DitedError("config: bad integer for " + key + ": " + v);
    }
}

uint64_t to_u64(const std::string& v, const std::string& key) {
    try {
        size_t idx = 0;
        const uint64_t r = std::stoull(v, &idx);
        if (idx != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (...) {
        throw DitedError("config: bad integer for " + key + ": " + v);
    }
}

double to_f64(const std::string& v, const std::string& key) {
    try {
        size_t idx = 0;
        const double r = std::stod(v, &idx);
        if (idx != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (...) {
        throw DitedError("config: bad number for " + key + ": " + v);
    }
}

bool to_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw DitedError("config: bad bool for " + key + ": " + v);
}

}  // namespace

// --- ModelConfig text --------------------------------------------------------

std::string model_config_to_text(const ModelConfig& cfg) {
    std::ostringstream ss;
    ss << "Dx=" << cfg.Dx << "\nDu=" << cfg.Du << "\nN=" << cfg.N << "\nl=" << cfg.l
       << "\nS=" << cfg.S << "\nT=" << cfg.T << "\nH=" << cfg.H << "\nC=" << cfg.C
       << "\nDe=" << cfg.De << "\ncls_mode=" << (cfg.cls_mode == ClsMode::ce ? "ce" : "nce")
       << "\nuse_domain_encoder=" << (cfg.use_domain_encoder ? 1 : 0)
       << "\nuse_transition=" << (cfg.use_transition ? 1 : 0)
       << "\ntie_parents=" << (cfg.tie_parents ? 1 : 0)
       << "\nconditional_noise=" << (cfg.conditional_noise ? 1 : 0) << "\n";
    return ss.str();
}

ModelConfig model_config_from_text(const std::string& text) {
    const KvMap kv = parse_kv(text, "model config");
    ModelConfig cfg;
    for (const auto& [key, val] : kv) {
        if (key == "Dx") cfg.Dx = to_i64(val, key);
        else if (key == "Du") cfg.Du = to_i64(val, key);
        else if (key == "N") cfg.N = to_i64(val, key);
        else if (key == "l") cfg.l = to_i64(val, key);
        else if (key == "S") cfg.S = to_i64(val, key);
        else if (key == "T") cfg.T = to_i64(val, key);
        else if (key == "H") cfg.H = to_i64(val, key);
        else if (key == "C") cfg.C = to_i64(val, key);
        else if (key == "De") cfg.De = to_i64(val, key);
        else if (key == "cls_mode") {
            if (val == "ce") cfg.cls_mode = ClsMode::ce;
            else if (val == "nce") cfg.cls_mode = ClsMode::nce;
            else throw DitedError("model config: bad cls_mode " + val);
        } else if (key == "use_domain_encoder") cfg.use_domain_encoder = to_bool(val, key);
        else if (key == "use_transition") cfg.use_transition = to_bool(val, key);
        else if (key == "tie_parents") cfg.tie_parents = to_bool(val, key);
        else if (key == "conditional_noise") cfg.conditional_noise = to_bool(val, key);
        else throw DitedError("model config: unknown key " + key);
    }
    cfg.validate();
    return cfg;
}

// --- RunConfig ----------------------------------------------------------------

RunConfig parse_run_config(const std::string& text) {
    const KvMap kv = parse_kv(text, "config");
    RunConfig rc;
    for (const auto& [key, val] : kv) {
        if (key == "model.Dx") rc.model.Dx = to_i64(val, key);
        else if (key == "model.Du") rc.model.Du = to_i64(val, key);
        else if (key == "model.N") rc.model.N = to_i64(val, key);
        else if (key == "model.l") rc.model.l = to_i64(val, key);
        else if (key == "model.S") rc.model.S = to_i64(val, key);
        else if (key == "model.T") rc.model.T = to_i64(val, key);
        else if (key == "model.H") rc.model.H = to_i64(val, key);
        else if (key == "model.C") rc.model.C = to_i64(val, key);
        else if (key == "model.De") rc.model.De = to_i64(val, key);
        else if (key == "model.noise_prior") {
            if (val == "conditional") rc.model.conditional_noise = true;
            else if (val == "standard") rc.model.conditional_noise = false;
            else throw DitedError("config: model.noise_prior must be conditional|standard");
        } else if (key == "loss.beta") rc.beta = to_f64(val, key);
        else if (key == "loss.tau") rc.tau = to_f64(val, key);
        else if (key == "loss.mode") {
            if (val == "ce") rc.mode = ClsMode::ce;
            else if (val == "nce") rc.mode = ClsMode::nce;
            else throw DitedError("config: loss.mode must be ce|nce");
        } else if (key == "optim.lr") rc.lr = to_f64(val, key);
        else if (key == "optim.weight_decay") rc.weight_decay = to_f64(val, key);
        else if (key == "optim.betas") {
            const size_t comma = val.find(',');
            if (comma == std::string::npos)
                throw DitedError("config: optim.betas needs two comma-separated values");
            rc.beta1 = to_f64(val.substr(0, comma), key);
            rc.beta2 = to_f64(val.substr(comma + 1), key);
        } else if (key == "optim.eps") rc.eps = to_f64(val, key);
        else if (key == "optim.horizon") rc.horizon = to_i64(val, key);
        else if (key == "train.epochs") rc.epochs = to_i64(val, key);
        else if (key == "train.cls_epochs") rc.cls_epochs = to_i64(val, key);
        else if (key == "train.batch") rc.batch = to_i64(val, key);
        else if (key == "train.seed") rc.seed = to_u64(val, key);
        else if (key == "adapt.steps_a") rc.steps_a = to_i64(val, key);
        else if (key == "adapt.steps_b") rc.steps_b = to_i64(val, key);
        else if (key == "adapt.lr_theta") rc.lr_theta = to_f64(val, key);
        else if (key == "adapt.lr_omega") rc.lr_omega = to_f64(val, key);
        else if (key == "adapt.lr_psi") rc.lr_psi = to_f64(val, key);
        else if (key == "synth.Nstar") rc.synth.Nstar = to_i64(val, key);
        else if (key == "synth.Dx") rc.synth.Dx = to_i64(val, key);
        else if (key == "synth.T") rc.synth.T = to_i64(val, key);
        else if (key == "synth.c_base") rc.synth.c_base = to_i64(val, key);
        else if (key == "synth.c_novel") rc.synth.c_novel = to_i64(val, key);
        else if (key == "synth.base_per_class") rc.synth.base_per_class = to_i64(val, key);
        else if (key == "synth.novel_per_class") rc.synth.novel_per_class = to_i64(val, key);
        else if (key == "synth.noise_scale") rc.synth.noise_scale = to_f64(val, key);
        else if (key == "synth.shift_magnitude") rc.synth.shift_magnitude = to_f64(val, key);
        else if (key == "synth.shift_noise") rc.synth.shift_noise = to_bool(val, key);
        else if (key == "synth.seed") rc.synth.seed = to_u64(val, key);
        else if (key == "eval.way") rc.way = to_i64(val, key);
        else if (key == "eval.k") rc.k = to_i64(val, key);
        else if (key == "eval.trials") rc.trials = to_i64(val, key);
        else if (key == "eval.z_mode") {
            if (val == "mean") rc.z_mode = ZMode::mean;
            else if (val == "sample") rc.z_mode = ZMode::sample;
            else throw DitedError("config: eval.z_mode must be mean|sample");
        } else if (key == "eval.mc_samples") rc.mc_samples = to_i64(val, key);
        else throw DitedError("config: unknown key " + key);
    }
    rc.model.validate();
    rc.synth.validate();
    if (rc.beta < 0.0) throw DitedError("config: loss.beta must be >= 0");
    if (rc.tau <= 0.0) throw DitedError("config: loss.tau must be > 0");
    return rc;
}

RunConfig load_run_config(const std::string& path) {
    return parse_run_config(read_file(path, "config"));
}

std::string run_config_to_text(const RunConfig& rc) {
    std::ostringstream ss;
    ss.precision(17);
    ss << "model.Dx = " << rc.model.Dx << "\nmodel.Du = " << rc.model.Du
       << "\nmodel.N = " << rc.model.N << "\nmodel.l = " << rc.model.l
       << "\nmodel.S = " << rc.model.S << "\nmodel.T = " << rc.model.T
       << "\nmodel.H = " << rc.model.H << "\nmodel.C = " << rc.model.C
       << "\nmodel.De = " << rc.model.De
       << "\nmodel.noise_prior = " << (rc.model.conditional_noise ? "conditional" : "standard")
       << "\nloss.beta = " << rc.beta << "\nloss.tau = " << rc.tau
       << "\nloss.mode = " << (rc.mode == ClsMode::ce ? "ce" : "nce") << "\noptim.lr = " << rc.lr
       << "\noptim.weight_decay = " << rc.weight_decay << "\noptim.betas = " << rc.beta1 << ","
       << rc.beta2 << "\noptim.eps = " << rc.eps << "\noptim.horizon = " << rc.horizon
       << "\ntrain.epochs = " << rc.epochs << "\ntrain.cls_epochs = " << rc.cls_epochs
       << "\ntrain.batch = " << rc.batch << "\ntrain.seed = " << rc.seed
       << "\nadapt.steps_a = " << rc.steps_a << "\nadapt.steps_b = " << rc.steps_b
       << "\nadapt.lr_theta = " << rc.lr_theta << "\nadapt.lr_omega = " << rc.lr_omega
       << "\nadapt.lr_psi = " << rc.lr_psi << "\nsynth.Nstar = " << rc.synth.Nstar
       << "\nsynth.Dx = " << rc.synth.Dx << "\nsynth.T = " << rc.synth.T
       << "\nsynth.c_base = " << rc.synth.c_base << "\nsynth.c_novel = " << rc.synth.c_novel
       << "\nsynth.base_per_class = " << rc.synth.base_per_class
       << "\nsynth.novel_per_class = " << rc.synth.novel_per_class
       << "\nsynth.noise_scale = " << rc.synth.noise_scale
       << "\nsynth.shift_magnitude = " << rc.synth.shift_magnitude
       << "\nsynth.shift_noise = " << (rc.synth.shift_noise ? "true" : "false")
       << "\nsynth.seed = " << rc.synth.seed << "\neval.way = " << rc.way
       << "\neval.k = " << rc.k << "\neval.trials = " << rc.trials
       << "\neval.z_mode = " << (rc.z_mode == ZMode::mean ? "mean" : "sample")
       << "\neval.mc_samples = " << rc.mc_samples << "\n";
    return ss.str();
}

OptimConfig RunConfig::optim_config() const {
    OptimConfig oc;
    oc.lr = lr;
    oc.beta1 = beta1;
    oc.beta2 = beta2;
    oc.eps = eps;
    oc.weight_decay = weight_decay;
    oc.horizon = horizon;
    return oc;
}

ElboOptions RunConfig::elbo_options() const {
    ElboOptions eo;
    eo.beta = beta;
    return eo;
}

ClsOptions RunConfig::cls_options() const {
    ClsOptions co;
    co.mode = mode;
    co.tau = tau;
    return co;
}

AdaptConfig RunConfig::adapt_config() const {
    AdaptConfig ac;
    ac.steps_a = steps_a;
    ac.steps_b = steps_b;
    ac.lr_theta = lr_theta;
    ac.lr_omega = lr_omega;
    ac.lr_psi = lr_psi;
    return ac;
}

HarnessConfig RunConfig::harness_config() const {
    HarnessConfig hc;
    hc.synth = synth;
    hc.model = model;
    hc.model.cls_mode = mode;
    hc.beta = beta;
    hc.cls = cls_options();
    hc.optim = optim_config();
    hc.epochs = epochs;
    hc.cls_epochs = cls_epochs;
    hc.batch = batch;
    hc.adapt = adapt_config();
    hc.way = way;
    hc.k = k;
    hc.trials = trials;
    hc.z_mode = z_mode;
    hc.mc_samples = mc_samples;
    hc.seed = seed;
    return hc;
}

// --- checkpoint ----------------------------------------------------------------

void save_checkpoint(const std::string& path, const ModelParams& params, bool as_f32) {
    std::string b;
    b.append(kCkptMagic, sizeof(kCkptMagic));
    put_u32(b, kCkptVersion);
    put_str(b, model_config_to_text(params.config));
    put_u64(b, params.tensors.size());
    for (const auto& [name, t] : params.tensors) {  // std::map: canonical name order
        put_str(b, name);
        put_u8(b, as_f32 ? 2 : 1);
        put_u8(b, static_cast<uint8_t>(t.rank()));
        for (int64_t d : t.shape) put_u64(b, static_cast<uint64_t>(d));
        if (as_f32)
            for (double v : t.data) put_f32(b, static_cast<float>(v));
        else
            for (double v : t.data) put_f64(b, v);
    }
    put_u32(b, crc_of(b));
    atomic_write(path, b);
}

ModelParams load_checkpoint(const std::string& path) {
    const std::string b = read_file(path, "checkpoint");
    if (b.size() < sizeof(kCkptMagic) + 8) throw DitedError("checkpoint: truncated file");
    if (std::memcmp(b.data(), kCkptMagic, sizeof(kCkptMagic)) != 0)
        throw DitedError("checkpoint: bad magic");
    const uint32_t stored_crc = static_cast<uint8_t>(b[b.size() - 4]) << 0 |
                                static_cast<uint8_t>(b[b.size() - 3]) << 8 |
                                static_cast<uint8_t>(b[b.size() - 2]) << 16 |
                                static_cast<uint8_t>(b[b.size() - 1]) << 24;
    const std::string body = b.substr(0, b.size() - 4);
    if (crc_of(body) != stored_crc) throw DitedError("checkpoint: CRC mismatch");

    Reader r(body, "checkpoint");
    r.pos = sizeof(kCkptMagic);
    const uint32_t version = r.u32();
    if (version != kCkptVersion)
        throw DitedError("checkpoint: unsupported version " + std::to_string(version));

    ModelParams params;
    params.config = model_config_from_text(r.str());
    const uint64_t count = r.u64();
    for (uint64_t i = 0; i < count; ++i) {
        const std::string name = r.str();
        const uint8_t dtype = r.u8();
        if (dtype != 1 && dtype != 2)
            throw DitedError("checkpoint: unknown dtype tag " + std::to_string(dtype));
        const uint8_t rank = r.u8();
        Shape shape;
        for (uint8_t d = 0; d < rank; ++d) shape.push_back(static_cast<int64_t>(r.u64()));
        Tensor t = Tensor::zeros(shape);
        for (int64_t j = 0; j < t.numel(); ++j)
            t.at(j) = dtype == 1 ? r.f64() : static_cast<double>(r.f32());
        params.tensors[name] = std::move(t);
    }
    r.expect_end();
    return params;
}

// --- dataset --------------------------------------------------------------------

void save_dataset(const std::string& path, const Dataset& data) {
    std::string b;
    b.append(kDataMagic, sizeof(kDataMagic));
    put_u32(b, kDataVersion);
    {
        std::ostringstream ss;
        ss << "Dx=" << data.Dx << "\nT=" << data.T << "\nNstar=" << data.Nstar << "\n";
        put_str(b, ss.str());
    }
    put_u8(b, data.role == Role::base ? 0 : 1);
    put_u32(b, static_cast<uint32_t>(data.class_ids.size()));
    for (int32_t c : data.class_ids) put_u32(b, static_cast<uint32_t>(c));
    put_u64(b, data.records.size());
    for (const SeqRecord& rec : data.records) {
        put_u32(b, static_cast<uint32_t>(rec.seq.label));
        for (double v : rec.seq.x.data) put_f32(b, static_cast<float>(v));
        if (rec.z_true) {
            put_u8(b, 1);
            for (double v : rec.z_true->data) put_f32(b, static_cast<float>(v));
        } else {
            put_u8(b, 0);
        }
    }
    atomic_write(path, b);
}

Dataset load_dataset(const std::string& path) {
    const std::string b = read_file(path, "dataset");
    Reader r(b, "dataset");
    r.need(sizeof(kDataMagic));
    if (std::memcmp(b.data(), kDataMagic, sizeof(kDataMagic)) != 0)
        throw DitedError("dataset: bad magic");
    r.pos = sizeof(kDataMagic);
    const uint32_t version = r.u32();
    if (version != kDataVersion)
        throw DitedError("dataset: unsupported version " + std::to_string(version));

    Dataset d;
    const KvMap kv = parse_kv(r.str(), "dataset header");
    d.Dx = to_i64(kv.at("Dx"), "Dx");
    d.T = to_i64(kv.at("T"), "T");
    d.Nstar = to_i64(kv.at("Nstar"), "Nstar");
    d.role = r.u8() == 0 ? Role::base : Role::novel;
    const uint32_t classes = r.u32();
    for (uint32_t i = 0; i < classes; ++i) d.class_ids.push_back(static_cast<int32_t>(r.u32()));
    const uint64_t count = r.u64();
    for (uint64_t i = 0; i < count; ++i) {
        SeqRecord rec;
        rec.seq.label = static_cast<int32_t>(r.u32());
        if (rec.seq.label < 0 || rec.seq.label >= static_cast<int32_t>(classes))
            throw DitedError("dataset: label out of range");
        rec.seq.x = Tensor::zeros({d.T, d.Dx});
        for (int64_t j = 0; j < rec.seq.x.numel(); ++j) {
            const double v = static_cast<double>(r.f32());
            if (!(v > 0.0 && v < 1.0)) throw DitedError("dataset: feature outside (0,1)");
            rec.seq.x.at(j) = v;
        }
        if (r.u8() == 1) {
            Tensor z = Tensor::zeros({d.T, d.Nstar});
            for (int64_t j = 0; j < z.numel(); ++j) z.at(j) = static_cast<double>(r.f32());
            rec.z_true = std::move(z);
        }
        d.records.push_back(std::move(rec));
    }
    r.expect_end();
    return d;
}

}  // namespace dited
