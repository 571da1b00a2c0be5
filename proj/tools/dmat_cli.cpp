// dmat: filter -> train -> evaluate command-line driver.

#include "dmat/pipeline.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>

using namespace dmat;

namespace {

// Options shared by every subcommand that builds a RunConfig.
struct RunOptions {
    std::string config_file, preset, mode, tasks, data_dir, dataset, features, edges, labels, out;
    std::optional<std::size_t> gen_synthetic;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> sets;
    bool record_runtime = false;
    bool no_cache = false;

    void add_to(CLI::App* app, bool with_tasks) {
        app->add_option("--config", config_file, "key=value config file");
        app->add_option("--preset", preset, "named hyper-parameter preset (e.g. cora)");
        app->add_option("--mode", mode, "dmt, dmat or dmat-i");
        if (with_tasks) app->add_option("--tasks", tasks, "comma list of cluster,classify,linkpred,theory,bench");
        app->add_option("--data-dir", data_dir, "dataset root (default $DMAT_DATA_DIR or ./data)");
        app->add_option("--dataset", dataset, "dataset name under the data root");
        app->add_option("--features", features, "feature matrix file");
        app->add_option("--edges", edges, "edge list file");
        app->add_option("--labels", labels, "label file");
        app->add_option("--gen-synthetic", gen_synthetic, "use a generated graph with this many nodes");
        app->add_option("--out", out, "output directory");
        app->add_option("--seed", seed, "global seed");
        app->add_option("--set", sets, "key=value override (repeatable)");
        app->add_flag("--record-runtime", record_runtime, "store wall times in reports");
        app->add_flag("--no-cache", no_cache, "always recompute filtered features");
    }

    RunConfig build(const std::string& forced_tasks = "") const {
        RunConfig cfg;
        if (const char* env = std::getenv("DMAT_DATA_DIR")) cfg.data_dir = env;
        Settings s;
        if (!config_file.empty()) s = read_config_file(config_file);
        auto push = [&](const char* k, const std::string& v) {
            if (!v.empty()) s.emplace_back(k, v);
        };
        push("preset", preset);
        push("mode", mode);
        push("tasks", forced_tasks.empty() ? tasks : forced_tasks);
        push("data_dir", data_dir);
        push("dataset", dataset);
        push("features", features);
        push("edges", edges);
        push("labels", labels);
        push("out", out);
        if (gen_synthetic) push("gen_synthetic", std::to_string(*gen_synthetic));
        if (seed) push("seed", std::to_string(*seed));
        if (record_runtime) push("record_runtime", "true");
        if (no_cache) push("cache", "false");
        for (const auto& kv : sets) s.push_back(parse_setting(kv));
        apply_settings(cfg, s);
        if (!preset.empty() && dataset.empty() && features.empty()) cfg.dataset = preset;
        return cfg;
    }
};

void write_report(const std::string& path, const std::string& task, const std::string& dataset, std::uint64_t seed,
                  const std::string& key, Json metrics) {
    MetricsReport r{task, dataset, hex64(fnv1a(key)), seed, std::move(metrics), std::nullopt};
    pipeline_detail::log_metrics(std::cout, task, r.metrics);
    if (!path.empty()) write_json(path, r.to_json());
}

std::string args_key(int argc, char** argv) {
    std::string k;
    for (int i = 1; i < argc; ++i) k += std::string(argv[i]) + '\n';
    return k;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Attributed-graph embedding with filtered features and tuplet losses"};
    app.require_subcommand(1);

    // filter
    auto* filter = app.add_subcommand("filter", "smooth node features with the GPR filter");
    std::string f_features, f_edges, f_out;
    FilterConfig fcfg;
    std::optional<double> f_rmax;
    std::optional<std::size_t> f_hops;
    filter->add_option("--features", f_features, "feature matrix")->required();
    filter->add_option("--edges", f_edges, "edge list")->required();
    filter->add_option("--out", f_out, "output matrix (.txt for text, else GFM8)")->required();
    filter->add_option("--alpha", fcfg.alpha, "teleport probability");
    filter->add_option("--rrz", fcfg.rrz, "degree exponent r");
    filter->add_option("--r-max", f_rmax, "push threshold (exact filter when absent)");
    filter->add_option("--max-hops", f_hops, "hop count (default from residual mass 1e-7)");
    filter->add_flag("--row-normalize", fcfg.row_normalize, "L1-normalize feature rows first");

    // train
    auto* trainc = app.add_subcommand("train", "train the encoder on smoothed features");
    RunOptions t_opts;
    std::string t_input, t_emb, t_ckpt;
    trainc->add_option("--input", t_input, "smoothed feature matrix")->required();
    trainc->add_option("--out-embedding", t_emb, "embedding output (GFM8)")->required();
    trainc->add_option("--checkpoint", t_ckpt, "checkpoint output (DMTC)");
    t_opts.add_to(trainc, false);

    // eval-cluster
    auto* evc = app.add_subcommand("eval-cluster", "k-means clustering metrics of an embedding");
    std::string c_emb, c_labels, c_edges, c_out, c_name = "custom";
    std::optional<int> c_k;
    std::size_t c_restarts = 10;
    std::uint64_t c_seed = 0;
    evc->add_option("--embedding", c_emb, "embedding matrix")->required();
    evc->add_option("--labels", c_labels, "ground-truth labels");
    evc->add_option("--edges", c_edges, "edge list for modularity / conductance");
    evc->add_option("--k", c_k, "cluster count (default: number of classes)");
    evc->add_option("--restarts", c_restarts, "k-means restarts");
    evc->add_option("--seed", c_seed, "seed");
    evc->add_option("--dataset", c_name, "dataset name for the report");
    evc->add_option("--out", c_out, "MetricsReport JSON path");

    // eval-classify
    auto* evl = app.add_subcommand("eval-classify", "linear-probe node classification");
    std::string l_emb, l_labels, l_out, l_name = "custom";
    std::uint64_t l_seed = 0;
    ClassifierProtocol proto;
    evl->add_option("--embedding", l_emb, "embedding matrix")->required();
    evl->add_option("--labels", l_labels, "labels")->required();
    evl->add_option("--seed", l_seed, "seed");
    evl->add_option("--train-frac", proto.train_frac, "per-class train fraction");
    evl->add_option("--val-frac", proto.val_frac, "per-class validation fraction");
    evl->add_option("--epochs", proto.epochs, "gradient steps");
    evl->add_option("--dataset", l_name, "dataset name for the report");
    evl->add_option("--out", l_out, "MetricsReport JSON path");

    // eval-linkpred
    auto* evp = app.add_subcommand("eval-linkpred", "edge split, retrain on the train graph, score held-out pairs");
    RunOptions p_opts;
    p_opts.add_to(evp, false);

    // theory-check
    auto* th = app.add_subcommand("theory-check", "lemma / bound checks and tau0, hardness statistics");
    std::size_t th_trials = 1000, th_batch = 512;
    double th_tau = 1.0;
    std::uint64_t th_seed = 0;
    std::string th_emb, th_labels, th_features, th_smoothed, th_out, th_hist_dir;
    th->add_option("--trials", th_trials, "randomized lemma trials");
    th->add_option("--tau", th_tau, "temperature");
    th->add_option("--seed", th_seed, "seed");
    th->add_option("--batch-size", th_batch, "batch size for tau0 batch peers");
    th->add_option("--embedding", th_emb, "embedding for tau0 and hardness");
    th->add_option("--labels", th_labels, "labels for tau0 and hardness");
    th->add_option("--features", th_features, "raw features for hardness");
    th->add_option("--smoothed", th_smoothed, "smoothed features for hardness");
    th->add_option("--hist-dir", th_hist_dir, "directory for hardness CSV files");
    th->add_option("--out", th_out, "MetricsReport JSON path");

    // gen-synthetic
    auto* gen = app.add_subcommand("gen-synthetic", "write a skewed synthetic attributed graph");
    std::size_t g_n = 0, g_ef = 20, g_d = 1000;
    std::uint64_t g_seed = 0;
    std::string g_out;
    gen->add_option("--n", g_n, "node count")->required();
    gen->add_option("--edge-factor", g_ef, "edges per node");
    gen->add_option("--d", g_d, "feature dimension");
    gen->add_option("--seed", g_seed, "seed");
    gen->add_option("--out-dir", g_out, "output directory (features.gfm, edges.txt)")->required();

    // bench
    auto* bench = app.add_subcommand("bench", "filter and per-batch timing on synthetic graphs");
    RunOptions b_opts;
    b_opts.add_to(bench, false);

    // run
    auto* runc = app.add_subcommand("run", "full pipeline for the requested tasks");
    RunOptions r_opts;
    r_opts.add_to(runc, true);

    CLI11_PARSE(app, argc, argv);

    try {
        if (filter->parsed()) {
            fcfg.r_max = f_rmax;
            fcfg.max_hops = f_hops;
            const auto g = load_graph(f_features, f_edges);
            const auto sf = propagate(g, fcfg);
            if (std::filesystem::path(f_out).extension() == ".txt") write_matrix_text(f_out, sf.matrix);
            else save_smoothed(f_out, sf);
            std::cout << "stage=filter n_nodes=" << g.n_nodes << " hops=" << fcfg.hops() << " out=" << f_out << '\n';
        } else if (trainc->parsed()) {
            const RunConfig cfg = t_opts.build("cluster");
            const Matrix x = read_matrix(t_input);
            std::optional<Labels> y;
            if (cfg.labels_path) y = read_labels(*cfg.labels_path);
            const auto res = pipeline_detail::trained(cfg, x, y, "train", std::cout);
            write_matrix_binary(t_emb, res.embedding);
            if (!t_ckpt.empty()) save_checkpoint(t_ckpt, res.params, res.optim);
        } else if (evc->parsed()) {
            const Matrix z = read_matrix(c_emb);
            std::optional<Labels> y;
            if (!c_labels.empty()) y = read_labels(c_labels);
            std::optional<AttributedGraph> g;
            if (!c_edges.empty()) g = make_graph(Matrix::Zero(z.rows(), 0), read_edge_list(c_edges), y);
            int k = c_k.value_or(0);
            if (!c_k && y) k = *std::max_element(y->begin(), y->end()) + 1;
            if (k < 1) throw ConfigError("eval-cluster: pass --k or --labels");
            const auto km = kmeans(z, k, c_restarts, 300, c_seed);
            const auto m = clustering_metrics(km.assignments, y, g ? &*g : nullptr);
            Json j{{"n_clusters", k}};
            if (y) {
                j["accuracy"] = m.accuracy;
                j["nmi"] = m.nmi;
                j["ari"] = m.ari;
                j["macro_f1"] = m.macro_f1;
            }
            if (g) {
                j["modularity"] = m.modularity;
                j["conductance"] = m.conductance;
            }
            j["inertia"] = km.inertia;
            write_report(c_out, "cluster", c_name, c_seed, args_key(argc, argv), j);
        } else if (evl->parsed()) {
            const Matrix z = read_matrix(l_emb);
            const auto r = fit_linear_classifier(z, read_labels(l_labels), l_seed, proto);
            write_report(l_out, "classify", l_name, l_seed, args_key(argc, argv),
                         {{"test_accuracy", r.test_accuracy}, {"val_accuracy", r.val_accuracy}, {"best_epoch", r.best_epoch}});
        } else if (evp->parsed()) {
            run(p_opts.build("linkpred"));
        } else if (th->parsed()) {
            Json j;
            SyntheticTupletSource four;
            four.n_classes = 4;
            four.dim = 16;
            four.seed = th_seed;
            const auto l1 = check_lemma1(four, th_trials, th_tau);
            j["lemma1"] = {{"trials", l1.trials}, {"violations", l1.violations}, {"max_violation", l1.max_violation}};
            SyntheticTupletSource two;
            two.seed = th_seed;
            for (auto [m, q] : std::vector<std::pair<std::size_t, std::size_t>>{{8, 8}, {32, 32}, {8, 64}}) {
                const auto b = theorem1_synthetic_check(two, m, q);
                j["theorem1_" + std::to_string(m) + "_" + std::to_string(q)] = {
                    {"tau0_median", b.tau0.median}, {"bound", b.bound}, {"observed_mean_diff", b.observed_mean_diff}};
            }
            if (!th_labels.empty()) {
                const Labels y = read_labels(th_labels);
                if (!th_emb.empty()) {
                    Tau0Options to;
                    to.batch_size = th_batch;
                    to.temperature = th_tau;
                    to.seed = th_seed;
                    const auto tau = tau0_estimate(read_matrix(th_emb), y, to);
                    j["tau0"] = {{"q1", tau.q.q1}, {"median", tau.q.median}, {"q3", tau.q.q3}, {"n_unstable", tau.n_unstable}};
                }
                const std::pair<const char*, std::string*> srcs[] = {
                    {"raw", &th_features}, {"smoothed", &th_smoothed}, {"embedding", &th_emb}};
                for (const auto& [name, path] : srcs) {
                    if (path->empty()) continue;
                    HistogramOptions ho;
                    ho.seed = th_seed;
                    const auto h = hardness_histogram(read_matrix(*path), y, ho);
                    j["hardness_" + std::string(name)] = pipeline_detail::histogram_bands(h);
                    if (!th_hist_dir.empty()) {
                        std::filesystem::create_directories(th_hist_dir);
                        write_histogram_csv(th_hist_dir + "/hardness_" + name + ".csv", h);
                    }
                }
            }
            write_report(th_out, "theory", "synthetic", th_seed, args_key(argc, argv), j);
        } else if (gen->parsed()) {
            const auto g = gen_synthetic(g_n, g_ef, g_d, g_seed);
            std::filesystem::create_directories(g_out);
            write_matrix_binary(g_out + "/features.gfm", g.features, MatrixFormat::gfm1);
            write_edge_list(g_out + "/edges.txt", g);
            std::cout << "stage=gen-synthetic n_nodes=" << g.n_nodes << " n_edges=" << g.n_edges() << '\n';
        } else if (bench->parsed()) {
            run(b_opts.build("bench"));
        } else if (runc->parsed()) {
            run(r_opts.build());
        }
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
