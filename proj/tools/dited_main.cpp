#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "dited/io.hpp"
#include "dited/verify.hpp"

namespace {

using namespace dited;

ModelConfig model_config_for_dataset(const RunConfig& rc, const Dataset& ds) {
    ModelConfig cfg = rc.model;
    cfg.Dx = ds.Dx;
    cfg.T = ds.T;
    cfg.C = ds.num_classes();
    cfg.cls_mode = rc.mode;
    cfg.validate();
    return cfg;
}

void write_text_atomic(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw DitedError("cannot open " + tmp);
        out << text;
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw DitedError("rename to " + path + " failed");
}

int cmd_gen_data(const std::string& config, const std::string& role_str, const std::string& out,
                 int64_t count) {
    const RunConfig rc = load_run_config(config);
    Role role;
    if (role_str == "base")
        role = Role::base;
    else if (role_str == "novel")
        role = Role::novel;
    else
        throw DitedError("gen-data: role must be base|novel");
    const SynthSystem sys(rc.synth);
    const Dataset ds = count > 0 ? sys.generate(role, count) : sys.generate(role);
    save_dataset(out, ds);
    std::cout << "wrote " << ds.records.size() << " sequences (" << ds.num_classes()
              << " classes) to " << out << "\n";
    return 0;
}

int cmd_pretrain(const std::string& config, const std::string& data, const std::string& out) {
    const RunConfig rc = load_run_config(config);
    const Dataset ds = load_dataset(data);
    const ModelConfig cfg = model_config_for_dataset(rc, ds);
    const TrainPlan plan = TrainPlan::make(Stage::pretrain_dynamics, rc.epochs, rc.batch, rc.seed);
    const ModelParams params =
        pretrain_stage1(ds.sequences(), cfg, rc.elbo_options(), rc.optim_config(), plan, &std::cout);
    save_checkpoint(out, params);
    std::cout << "wrote checkpoint " << out << "\n";
    return 0;
}

int cmd_tune_classifier(const std::string& config, const std::string& data,
                        const std::string& ckpt, const std::string& out) {
    const RunConfig rc = load_run_config(config);
    const Dataset ds = load_dataset(data);
    ModelParams params = load_checkpoint(ckpt);
    const TrainPlan plan =
        TrainPlan::make(Stage::train_classifier, rc.cls_epochs, rc.batch, rc.seed);
    params = train_classifier_stage2(ds.sequences(), std::move(params), rc.cls_options(),
                                     rc.optim_config(), plan, &std::cout);
    save_checkpoint(out, params);
    std::cout << "wrote checkpoint " << out << "\n";
    return 0;
}

int cmd_adapt(const std::string& config, const std::string& support_path, const std::string& ckpt,
              const std::string& out, bool skip_phase_a, bool finetune_dynamics) {
    const RunConfig rc = load_run_config(config);
    const Dataset ds = load_dataset(support_path);
    const ModelParams pretrained = load_checkpoint(ckpt);
    AdaptConfig acfg = rc.adapt_config();
    acfg.skip_phase_a = skip_phase_a;
    acfg.finetune_dynamics = finetune_dynamics;
    AdaptReport report;
    const ModelParams adapted =
        adapt(ds.sequences(), pretrained, ds.class_ids, rc.elbo_options(), rc.cls_options(), acfg,
              rc.optim_config(), rc.seed, &report, &std::cout);
    save_checkpoint(out, adapted);
    std::cout << "tuned parameters\t" << report.tuned_param_count << "\n";
    std::cout << "wrote checkpoint " << out << "\n";
    return 0;
}

void print_eval(std::ostream& os, int64_t way, int64_t k, int64_t trials, const EvalResult& r) {
    os << "way\tk\ttrials\ttop1\tep_mean\tep_std\tn_query\n";
    os << way << '\t' << k << '\t' << trials << '\t' << r.top1 << '\t' << r.ep_mean << '\t'
       << r.ep_std << '\t' << r.n_query << "\n";
}

int cmd_eval(const std::string& config, const std::string& data, const std::string& ckpt,
             int64_t way, int64_t k, int64_t trials, bool do_adapt, const std::string& out) {
    const RunConfig rc = load_run_config(config);
    const Dataset ds = load_dataset(data);
    const ModelParams params = load_checkpoint(ckpt);
    if (way == 0) way = rc.way;
    if (way < 0) way = ds.num_classes();  // all-way
    if (k == 0) k = rc.k;
    if (trials == 0) trials = rc.trials;
    const auto episodes = make_episodes(ds, way, k, trials, rc.seed ^ 0xE9A0);

    EvalOptions eopt;
    eopt.mode = rc.mode;
    eopt.z_mode = rc.z_mode;
    eopt.mc_samples = rc.mc_samples;
    eopt.seed = rc.seed;

    EvalResult r;
    if (do_adapt) {
        EpisodicAdaptOptions aopt;
        aopt.elbo = rc.elbo_options();
        aopt.cls = rc.cls_options();
        aopt.adapt = rc.adapt_config();
        aopt.optim = rc.optim_config();
        aopt.seed = rc.seed;
        r = episodic_adapt_eval(ds, episodes, params, aopt, eopt);
    } else {
        r = evaluate(ds, episodes, params, eopt);
    }
    std::ostringstream ss;
    ss.precision(6);
    print_eval(ss, way, k, trials, r);
    std::cout << ss.str();
    if (!out.empty()) write_text_atomic(out, ss.str());
    return 0;
}

int cmd_ablate(const std::string& config, const std::string& out) {
    const RunConfig rc = load_run_config(config);
    const AblationGrid grid = run_ablation(rc.harness_config(), &std::cerr);
    std::ostringstream ss;
    ss.precision(6);
    ss << "arm\ttop1\tep_mean\tep_std\twins\tlosses\tties\tsign_p\tepisode_hash\n";
    for (const AblationArm& a : grid.arms)
        ss << a.name << '\t' << a.result.top1 << '\t' << a.result.ep_mean << '\t' << a.result.ep_std
           << '\t' << a.wins << '\t' << a.losses << '\t' << a.ties << '\t' << a.sign_p << '\t'
           << grid.episode_hash << "\n";
    write_text_atomic(out, ss.str());
    std::cout << ss.str();
    return 0;
}

int cmd_sweep(const std::string& config, const std::string& out) {
    const RunConfig rc = load_run_config(config);
    const auto rows = sweep_hyperparams(rc.harness_config(), &std::cerr);
    std::ostringstream ss;
    ss.precision(6);
    ss << "axis\tvalue\ttop1\tep_mean\tep_std\n";
    for (const SweepRow& r : rows)
        ss << r.axis << '\t' << r.value << '\t' << r.result.top1 << '\t' << r.result.ep_mean << '\t'
           << r.result.ep_std << "\n";
    write_text_atomic(out, ss.str());
    std::cout << ss.str();
    return 0;
}

int cmd_agreement(const std::string& ckpt_a, const std::string& ckpt_b, const std::string& data_a,
                  const std::string& data_b, int64_t probes, uint64_t seed) {
    const ModelParams a = load_checkpoint(ckpt_a);
    const ModelParams b = load_checkpoint(ckpt_b);
    const Dataset da = load_dataset(data_a);
    const Dataset db = load_dataset(data_b);
    const LatentRanges ranges = pooled_latent_ranges(a, da, b, db);
    const double agree = transition_agreement(a, b, ranges, probes, seed);
    const ModelParams rerand = reinit_group(a, "phi", splitmix64(seed ^ 0xF1));
    const double baseline = transition_agreement(a, rerand, ranges, probes, seed);
    std::cout << "metric\tvalue\n";
    std::cout << "normalized_disagreement\t" << agree << "\n";
    std::cout << "rerandomized_baseline\t" << baseline << "\n";
    std::cout << "transferable\t" << (agree < baseline ? "yes" : "no") << "\n";
    return agree < baseline ? 0 : 1;
}

int cmd_report(const std::string& in) {
    std::ifstream f(in);
    if (!f) throw DitedError("report: cannot open " + in);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, '\t')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    if (rows.empty()) throw DitedError("report: empty file");

    // ablation tables are re-ordered into the fixed arm order
    if (!rows[0].empty() && rows[0][0] == "arm") {
        std::vector<std::vector<std::string>> ordered;
        for (const std::string& arm : kAblationArmOrder)
            for (size_t i = 1; i < rows.size(); ++i)
                if (rows[i][0] == arm) ordered.push_back(rows[i]);
        for (size_t i = 1; i < rows.size(); ++i) {
            bool known = false;
            for (const std::string& arm : kAblationArmOrder) known = known || rows[i][0] == arm;
            if (!known) ordered.push_back(rows[i]);
        }
        std::vector<std::vector<std::string>> out;
        out.push_back(rows[0]);
        out.insert(out.end(), ordered.begin(), ordered.end());
        rows = std::move(out);
    }

    std::vector<size_t> width(rows[0].size(), 0);
    for (const auto& r : rows)
        for (size_t c = 0; c < r.size() && c < width.size(); ++c)
            width[c] = std::max(width[c], r[c].size());
    for (const auto& r : rows) {
        for (size_t c = 0; c < r.size(); ++c) {
            std::cout << r[c];
            if (c + 1 < r.size())
                std::cout << std::string(width[c] - r[c].size() + 2, ' ');
        }
        std::cout << "\n";
    }
    return 0;
}

int cmd_verify(const std::string& tmp_dir) {
    const auto items = run_verification(tmp_dir);
    bool all = true;
    for (const VerifyItem& it : items) {
        std::cout << (it.pass ? "PASS" : "FAIL") << ' ' << it.name;
        if (!it.detail.empty()) std::cout << " (" << it.detail << ")";
        std::cout << "\n";
        all = all && it.pass;
    }
    return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DITeD: domain-invariant temporal dynamics at desk scale"};
    app.require_subcommand(1);

    std::string config, data, ckpt, ckpt_b, out, role, support, in_path;
    std::string tmp_dir = ".";
    std::string data_b;
    int64_t count = 0, way = 0, k = 0, trials = 0, probes = 10000;
    uint64_t seed = 7;
    bool skip_phase_a = false, finetune_dynamics = false, do_adapt = false;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset file");
    gen->add_option("--config", config)->required();
    gen->add_option("--role", role)->required();
    gen->add_option("--out", out)->required();
    gen->add_option("--count", count, "samples per class (default from config)");

    auto* pre = app.add_subcommand("pretrain", "stage-1 dynamics pretraining");
    pre->add_option("--config", config)->required();
    pre->add_option("--data", data)->required();
    pre->add_option("--out", out)->required();

    auto* tune = app.add_subcommand("tune-classifier", "stage-2 classifier training");
    tune->add_option("--config", config)->required();
    tune->add_option("--data", data)->required();
    tune->add_option("--ckpt", ckpt)->required();
    tune->add_option("--out", out)->required();

    auto* ad = app.add_subcommand("adapt", "few-shot adaptation on a support set");
    ad->add_option("--config", config)->required();
    ad->add_option("--support", support)->required();
    ad->add_option("--ckpt", ckpt)->required();
    ad->add_option("--out", out)->required();
    ad->add_flag("--skip-phase-a", skip_phase_a, "classifier-only adaptation");
    ad->add_flag("--finetune-dynamics", finetune_dynamics, "also update phi and gamma");

    auto* ev = app.add_subcommand("eval", "episodic evaluation");
    ev->add_option("--config", config)->required();
    ev->add_option("--data", data)->required();
    ev->add_option("--ckpt", ckpt)->required();
    ev->add_option("--way", way, "episode way (-1 = all classes)");
    ev->add_option("--k", k);
    ev->add_option("--trials", trials);
    ev->add_flag("--adapt", do_adapt, "adapt per episode before evaluating");
    ev->add_option("--out", out, "also write the table to a file");

    auto* ab = app.add_subcommand("ablate", "run the ablation grid");
    ab->add_option("--config", config)->required();
    ab->add_option("--out", out)->required();

    auto* sw = app.add_subcommand("sweep", "hyperparameter sensitivity grid");
    sw->add_option("--config", config)->required();
    sw->add_option("--out", out)->required();

    auto* ag = app.add_subcommand("agreement", "transition transferability diagnostic");
    ag->add_option("--ckpt-a", ckpt)->required();
    ag->add_option("--ckpt-b", ckpt_b)->required();
    ag->add_option("--data-a", data)->required();
    ag->add_option("--data-b", data_b)->required();
    ag->add_option("--probes", probes);
    ag->add_option("--seed", seed);

    auto* rep = app.add_subcommand("report", "render a result table");
    rep->add_option("--in", in_path)->required();

    auto* ver = app.add_subcommand("verify", "run the oracle suite");
    ver->add_option("--tmp", tmp_dir, "scratch directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(config, role, out, count);
        if (pre->parsed()) return cmd_pretrain(config, data, out);
        if (tune->parsed()) return cmd_tune_classifier(config, data, ckpt, out);
        if (ad->parsed()) return cmd_adapt(config, support, ckpt, out, skip_phase_a,
                                           finetune_dynamics);
        if (ev->parsed()) return cmd_eval(config, data, ckpt, way, k, trials, do_adapt, out);
        if (ab->parsed()) return cmd_ablate(config, out);
        if (sw->parsed()) return cmd_sweep(config, out);
        if (ag->parsed()) return cmd_agreement(ckpt, ckpt_b, data, data_b, probes, seed);
        if (rep->parsed()) return cmd_report(in_path);
        if (ver->parsed()) return cmd_verify(tmp_dir);
    } catch (const DitedError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
