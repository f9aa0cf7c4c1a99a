// Command-line driver for the whole pipeline:
//
//   was gen-data   seeded stochastic block model -> dataset directory
//   was pretrain   dataset -> teacher bank (one entry per task)
//   was distill    dataset + bank -> student checkpoints, metrics JSON, traces
//   was ablate     dataset + bank -> strategy comparison CSV
//   was eval       dataset + checkpoint -> accuracy JSON on stdout
//
// Every subcommand takes --config pointing at an experiment JSON; flags
// override the file and the WAS_SEED environment variable overrides both.
// Exit codes: 0 ok, 2 usage or configuration problem, 1 runtime failure.

#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "was/checkpoint.hpp"
#include "was/distill.hpp"
#include "was/experiment_config.hpp"
#include "was/metrics_io.hpp"
#include "was/tasks.hpp"

namespace {

using namespace was;

void apply_seed_env(RunConfig& cfg) {
    const char* env = std::getenv("WAS_SEED");
    if (!env) return;
    if (*env == '\0' || *env == '-') throw config_error(std::string("WAS_SEED must be an unsigned integer, got '") + env + "'");
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (errno != 0 || end == env || *end != '\0')
        throw config_error(std::string("WAS_SEED must be an unsigned integer, got '") + env + "'");
    cfg.seed = v;
}

std::vector<TaskKind> parse_task_list(const std::string& csv) {
    std::vector<TaskKind> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) throw config_error("tasks: empty entry in '" + csv + "'");
        out.push_back(task_from_name(tok));
    }
    if (out.empty()) throw config_error("tasks: empty list");
    return out;
}

const std::vector<TaskKind> kAllTasks = {TaskKind::DGI, TaskKind::CLU, TaskKind::PAR, TaskKind::PAIRSIM,
                                         TaskKind::PAIRDIS};

// Flag-over-config plumbing shared by the subcommands. Each flag writes into
// this struct; apply() copies only the flags the user actually passed.
struct HyperFlags {
    CLI::App* sub = nullptr;
    double alpha = 0, tau_kd = 0, tau_gumbel = 0, m = 0, lr = 0, weight_decay = 0;
    int epochs = 0, pretrain_epochs = 0, hidden = 0;
    std::uint64_t seed = 0;
    int clu_k = 0, par_parts = 0, pairdis_max_hop = 0, pair_budget_factor = 0;

    bool set(const char* name) const {
        const CLI::Option* o = sub->get_option_no_throw(name);
        return o && o->count() > 0;
    }

    void attach_common(CLI::App* s) {
        sub = s;
        s->add_option("--seed", seed, "master seed (WAS_SEED env overrides)");
        s->add_option("--hidden", hidden, "encoder width");
        s->add_option("--lr", lr, "Adam learning rate");
        s->add_option("--weight-decay", weight_decay, "Adam weight decay");
    }
    void attach_pretrain(CLI::App* s) {
        attach_common(s);
        s->add_option("--pretrain-epochs", pretrain_epochs, "pre-training epochs (also the probe budget)");
        s->add_option("--clu-k", clu_k, "k-means clusters for clu");
        s->add_option("--par-parts", par_parts, "regions for par");
        s->add_option("--pairdis-max-hop", pairdis_max_hop, "distance classes for pairdis");
        s->add_option("--pair-budget-factor", pair_budget_factor, "sampled pairs per epoch = factor * n");
    }
    void attach_distill(CLI::App* s) {
        attach_common(s);
        s->add_option("--alpha", alpha, "weight of the distillation term");
        s->add_option("--tau-kd", tau_kd, "distillation temperature");
        s->add_option("--tau-gumbel", tau_gumbel, "Gumbel-sigmoid temperature");
        s->add_option("--m", m, "momentum rate of the siamese body");
        s->add_option("--epochs", epochs, "fine-tuning epochs");
    }

    void apply(RunConfig& cfg) const {
        if (set("--alpha")) cfg.alpha = alpha;
        if (set("--tau-kd")) cfg.tau_kd = tau_kd;
        if (set("--tau-gumbel")) cfg.tau_gumbel = tau_gumbel;
        if (set("--m")) cfg.m = m;
        if (set("--lr")) cfg.lr = lr;
        if (set("--weight-decay")) cfg.weight_decay = weight_decay;
        if (set("--epochs")) cfg.epochs = epochs;
        if (set("--pretrain-epochs")) cfg.pretrain_epochs = pretrain_epochs;
        if (set("--hidden")) cfg.hidden = hidden;
        if (set("--seed")) cfg.seed = seed;
        if (set("--clu-k")) cfg.clu_k = clu_k;
        if (set("--par-parts")) cfg.par_parts = par_parts;
        if (set("--pairdis-max-hop")) cfg.pairdis_max_hop = pairdis_max_hop;
        if (set("--pair-budget-factor")) cfg.pair_budget_factor = pair_budget_factor;
    }
};

ExperimentConfig base_config(const std::string& path) {
    return path.empty() ? ExperimentConfig{} : load_experiment_config(path);
}

Graph load_graph(const ExperimentConfig& exp, const char* cmd) {
    if (exp.dataset.empty()) throw config_error(std::string(cmd) + ": need --data (or 'dataset' in config)");
    return load_dataset(exp.dataset);
}

void require_out(const ExperimentConfig& exp, const char* cmd) {
    if (exp.out.empty()) throw config_error(std::string(cmd) + ": need --out (or 'out' in config)");
}

std::ofstream open_out_file(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw config_error("cannot write " + path);
    return f;
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataArgs {
    std::string config, out;
    SbmSpec sbm;
    std::uint64_t seed = 0;
    CLI::App* sub = nullptr;

    void attach(CLI::App& app) {
        sub = app.add_subcommand("gen-data", "generate a seeded stochastic block model dataset");
        sub->add_option("--config", config, "experiment config JSON");
        sub->add_option("--n", sbm.n, "node count");
        sub->add_option("--classes", sbm.classes, "class count");
        sub->add_option("--p-in", sbm.p_in, "intra-class edge probability");
        sub->add_option("--p-out", sbm.p_out, "inter-class edge probability");
        sub->add_option("--feat-dim", sbm.feat_dim, "feature dimension");
        sub->add_option("--noise", sbm.noise, "feature noise level");
        sub->add_option("--seed", seed, "generator seed (WAS_SEED env overrides)");
        sub->add_option("--out", out, "output directory");
        sub->callback([this] { run(); });
    }

    void run() const {
        ExperimentConfig exp = base_config(config);
        if (sub->count("--n")) exp.sbm.n = sbm.n;
        if (sub->count("--classes")) exp.sbm.classes = sbm.classes;
        if (sub->count("--p-in")) exp.sbm.p_in = sbm.p_in;
        if (sub->count("--p-out")) exp.sbm.p_out = sbm.p_out;
        if (sub->count("--feat-dim")) exp.sbm.feat_dim = sbm.feat_dim;
        if (sub->count("--noise")) exp.sbm.noise = sbm.noise;
        if (sub->count("--seed")) exp.run.seed = seed;
        if (sub->count("--out")) exp.out = out;
        apply_seed_env(exp.run);
        require_out(exp, "gen-data");
        Graph g = generate_sbm(exp.sbm.n, exp.sbm.classes, exp.sbm.p_in, exp.sbm.p_out, exp.sbm.feat_dim,
                               exp.sbm.noise, exp.run.seed);
        save_dataset(g, exp.out);
        std::printf("wrote %s: n=%d classes=%d edges=%zu seed=%llu\n", exp.out.c_str(), g.n, g.classes,
                    g.edges.size(), static_cast<unsigned long long>(exp.run.seed));
    }
};

// ---------------------------------------------------------------------------
// pretrain

struct PretrainArgs {
    std::string config, data, tasks_csv, out;
    int jobs = 1;
    HyperFlags hyper;
    CLI::App* sub = nullptr;

    void attach(CLI::App& app) {
        sub = app.add_subcommand("pretrain", "pre-train one teacher per task and freeze the bank");
        sub->add_option("--config", config, "experiment config JSON");
        sub->add_option("--data", data, "dataset directory from gen-data");
        sub->add_option("--tasks", tasks_csv, "comma-separated tasks (default: dgi,clu,par,pairsim,pairdis)");
        sub->add_option("--out", out, "bank output directory");
        sub->add_option("--jobs", jobs, "worker threads (merge order is by teacher index)");
        hyper.attach_pretrain(sub);
        sub->callback([this] { run(); });
    }

    void run() const {
        ExperimentConfig exp = base_config(config);
        if (sub->count("--data")) exp.dataset = data;
        if (sub->count("--out")) exp.out = out;
        if (sub->count("--jobs")) exp.jobs = jobs;
        if (sub->count("--tasks")) exp.tasks = parse_task_list(tasks_csv);
        hyper.apply(exp.run);
        apply_seed_env(exp.run);
        require_out(exp, "pretrain");
        if (exp.jobs < 1) throw config_error("pretrain: jobs must be >= 1");
        exp.run.validate();
        const std::vector<TaskKind>& tasks = exp.tasks.empty() ? kAllTasks : exp.tasks;

        Graph g = load_graph(exp, "pretrain");
        Tensor ahat = normalize_adjacency(g);
        const std::vector<TeacherArtifacts> arts = pretrain_teachers(g, ahat, tasks, exp.run, exp.jobs);

        nlohmann::json echo = run_config_json(exp.run);
        echo["tasks"] = nlohmann::json::array();
        for (TaskKind t : tasks) echo["tasks"].push_back(task_name(t));
        save_bank(exp.out, arts, echo);

        std::printf("%-10s %10s %11s\n", "task", "probe_val", "probe_test");
        for (const auto& a : arts)
            std::printf("%-10s %10.4f %11.4f\n", task_name(a.task), a.probe_val_acc, a.probe_test_acc);
        std::printf("bank %s: %zu teachers, hash %s\n", exp.out.c_str(), arts.size(),
                    hash_hex(make_bank(arts).hash()).c_str());
    }
};

// ---------------------------------------------------------------------------
// distill

struct DistillArgs {
    std::string config, data, bank, strategy, out;
    int repeat = 1;
    HyperFlags hyper;
    CLI::App* sub = nullptr;

    void attach(CLI::App& app) {
        sub = app.add_subcommand("distill", "fine-tune a student against a frozen teacher bank");
        sub->add_option("--config", config, "experiment config JSON");
        sub->add_option("--data", data, "dataset directory");
        sub->add_option("--bank", bank, "teacher bank directory from pretrain");
        sub->add_option("--strategy", strategy,
                        "was | average | random | all | topk<k> | was-no-mlp | was-no-reweigh");
        sub->add_option("--repeat", repeat, "number of seeds (seed, seed+1, ...)");
        sub->add_option("--out", out, "output directory");
        hyper.attach_distill(sub);
        sub->callback([this] { run(); });
    }

    void run() const {
        ExperimentConfig exp = base_config(config);
        if (sub->count("--data")) exp.dataset = data;
        if (sub->count("--bank")) exp.bank = bank;
        if (sub->count("--strategy")) exp.strategy = strategy;
        if (sub->count("--repeat")) exp.repeat = repeat;
        if (sub->count("--out")) exp.out = out;
        hyper.apply(exp.run);
        apply_seed_env(exp.run);
        require_out(exp, "distill");
        if (exp.bank.empty()) throw config_error("distill: need --bank (or 'bank' in config)");
        if (exp.repeat < 1) throw config_error("distill: repeat must be >= 1");
        const Strategy strat = parse_strategy(exp.strategy);

        Graph g = load_graph(exp, "distill");
        Tensor ahat = normalize_adjacency(g);
        const TeacherBank tbank = make_bank(load_bank(exp.bank));
        std::filesystem::create_directories(exp.out);

        std::vector<std::uint64_t> seeds;
        std::vector<RunMetrics> runs;
        for (int r = 0; r < exp.repeat; ++r) {
            RunConfig cfg = exp.run;
            cfg.seed = exp.run.seed + static_cast<std::uint64_t>(r);
            RunResult res = run_was(g, ahat, tbank, cfg, strat);
            seeds.push_back(cfg.seed);
            runs.push_back(res.metrics);

            const std::string tag = "seed" + std::to_string(cfg.seed);
            auto tf = open_out_file(exp.out + "/trace_" + tag + ".csv");
            trace_to_csv(res.trace, tf);

            nlohmann::json echo = run_config_json(cfg);
            echo["strategy"] = strategy_name(strat);
            echo["bank_hash"] = hash_hex(tbank.hash());
            save_checkpoint(exp.out + "/student_" + tag + ".json",
                            {{"enc.w1", res.student.enc.w1},
                             {"enc.w2", res.student.enc.w2},
                             {"head.w", res.student.head.w},
                             {"head.b", res.student.head.b}},
                            echo);

            std::printf("seed %llu: test_acc %.4f val_acc %.4f best_epoch %d avg_selected %.3f top1 %.3f\n",
                        static_cast<unsigned long long>(cfg.seed), res.metrics.test_acc, res.metrics.val_acc,
                        res.metrics.best_epoch, res.metrics.avg_selected, res.metrics.top1_selected_ratio);
        }

        const nlohmann::json report =
            metrics_report(strategy_name(strat), seeds, runs, tbank.hash(), tbank.K(), g.classes);
        auto mf = open_out_file(exp.out + "/metrics.json");
        mf << report.dump(1) << "\n";
        std::printf("%s: test_acc %.4f +- %.4f over %d seed(s), wrote %s/metrics.json\n",
                    strategy_name(strat).c_str(), report["aggregate"]["test_acc"]["mean"].get<double>(),
                    report["aggregate"]["test_acc"]["std"].get<double>(), exp.repeat, exp.out.c_str());
    }
};

// ---------------------------------------------------------------------------
// ablate

struct AblateArgs {
    std::string config, data, bank, out;
    int repeat = 1;
    HyperFlags hyper;
    CLI::App* sub = nullptr;

    void attach(CLI::App& app) {
        sub = app.add_subcommand("ablate", "run every strategy on the same bank and seeds");
        sub->add_option("--config", config, "experiment config JSON");
        sub->add_option("--data", data, "dataset directory");
        sub->add_option("--bank", bank, "teacher bank directory");
        sub->add_option("--repeat", repeat, "number of seeds per strategy");
        sub->add_option("--out", out, "output directory for ablate.csv");
        hyper.attach_distill(sub);
        sub->callback([this] { run(); });
    }

    void run() const {
        ExperimentConfig exp = base_config(config);
        if (sub->count("--data")) exp.dataset = data;
        if (sub->count("--bank")) exp.bank = bank;
        if (sub->count("--repeat")) exp.repeat = repeat;
        if (sub->count("--out")) exp.out = out;
        hyper.apply(exp.run);
        apply_seed_env(exp.run);
        require_out(exp, "ablate");
        if (exp.bank.empty()) throw config_error("ablate: need --bank (or 'bank' in config)");
        if (exp.repeat < 1) throw config_error("ablate: repeat must be >= 1");

        Graph g = load_graph(exp, "ablate");
        Tensor ahat = normalize_adjacency(g);
        const TeacherBank tbank = make_bank(load_bank(exp.bank));

        // topk uses 3 of 5 teachers in the standard pool, clamped for tiny banks
        std::vector<Strategy> strategies = {parse_strategy("was"),
                                            parse_strategy("average"),
                                            parse_strategy("random"),
                                            parse_strategy("all"),
                                            parse_strategy("topk" + std::to_string(std::min(3, tbank.K()))),
                                            parse_strategy("was-no-mlp"),
                                            parse_strategy("was-no-reweigh")};

        const std::string header =
            "strategy,mean_test_acc,std_test_acc,mean_val_acc,std_val_acc,mean_avg_selected,mean_top1_ratio,bank_hash";
        std::vector<std::string> rows;
        for (const Strategy& strat : strategies) {
            std::vector<double> test, val, avg, top1;
            for (int r = 0; r < exp.repeat; ++r) {
                RunConfig cfg = exp.run;
                cfg.seed = exp.run.seed + static_cast<std::uint64_t>(r);
                const RunMetrics m = run_was(g, ahat, tbank, cfg, strat).metrics;
                test.push_back(m.test_acc);
                val.push_back(m.val_acc);
                avg.push_back(m.avg_selected);
                top1.push_back(m.top1_selected_ratio);
            }
            const MeanStd t = mean_std(test), v = mean_std(val);
            char buf[256];
            std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%s", strategy_name(strat).c_str(),
                          t.mean, t.std, v.mean, v.std, mean_std(avg).mean, mean_std(top1).mean,
                          hash_hex(tbank.hash()).c_str());
            rows.emplace_back(buf);
            std::printf("%s\n", buf);
        }

        std::filesystem::create_directories(exp.out);
        auto f = open_out_file(exp.out + "/ablate.csv");
        f << header << "\n";
        for (const auto& row : rows) f << row << "\n";
        std::printf("wrote %s/ablate.csv\n", exp.out.c_str());
    }
};

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::string config, data, student;
    CLI::App* sub = nullptr;

    void attach(CLI::App& app) {
        sub = app.add_subcommand("eval", "report checkpoint accuracy on a dataset");
        sub->add_option("--config", config, "experiment config JSON");
        sub->add_option("--data", data, "dataset directory");
        sub->add_option("--student", student, "student checkpoint JSON")->required();
        sub->callback([this] { run(); });
    }

    void run() const {
        ExperimentConfig exp = base_config(config);
        if (sub->count("--data")) exp.dataset = data;
        Graph g = load_graph(exp, "eval");
        Tensor ahat = normalize_adjacency(g);

        const Checkpoint ck = load_checkpoint(student);
        auto need = [&](const char* key) -> const Tensor& {
            auto it = ck.params.find(key);
            if (it == ck.params.end()) throw config_error("checkpoint " + student + ": missing parameter " + key);
            return it->second;
        };
        StudentModel s;
        s.enc = EncoderParams{need("enc.w1"), need("enc.w2")};
        s.head = HeadParams{need("head.w"), need("head.b")};

        const Tensor probs = predict(encode(ahat, g.features, s.enc), s.head, 1.0);
        nlohmann::json j = {{"train_acc", masked_accuracy(probs, g.labels, g.train_mask)},
                            {"val_acc", masked_accuracy(probs, g.labels, g.val_mask)},
                            {"test_acc", masked_accuracy(probs, g.labels, g.test_mask)}};
        std::printf("%s\n", j.dump().c_str());
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-teacher distillation with per-instance teacher weighing and selection"};
    app.require_subcommand(1);

    GenDataArgs gen;
    PretrainArgs pre;
    DistillArgs dis;
    AblateArgs abl;
    EvalArgs ev;
    gen.attach(app);
    pre.attach(app);
    dis.attach(app);
    abl.attach(app);
    ev.attach(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // help/version stay 0, usage problems map to 2
    } catch (const was::config_error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
