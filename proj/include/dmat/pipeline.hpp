#pragma once

#include "dmat/error.hpp"
#include "dmat/eval/classify.hpp"
#include "dmat/eval/cluster.hpp"
#include "dmat/eval/linkpred.hpp"
#include "dmat/filter.hpp"
#include "dmat/graph.hpp"
#include "dmat/io.hpp"
#include "dmat/presets.hpp"
#include "dmat/report.hpp"
#include "dmat/theory.hpp"
#include "dmat/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace dmat {

inline const std::vector<std::string>& known_tasks() {
    static const std::vector<std::string> t{"cluster", "classify", "linkpred", "theory", "bench"};
    return t;
}

struct RunConfig {
    std::string dataset = "custom";
    std::optional<std::string> preset;
    std::string data_dir = "data";
    std::optional<std::string> features_path, edges_path, labels_path;
    std::optional<std::size_t> gen_synthetic;
    std::size_t edge_factor = 20;
    std::size_t d_in = 1000;

    FilterConfig filter;
    TrainConfig train;
    std::vector<std::string> tasks;
    std::string out_dir = "out";
    // Filtered-feature cache; <out_dir>/cache when empty.
    std::string cache_dir;
    std::uint64_t seed = 0;

    std::optional<int> n_clusters;
    std::size_t kmeans_restarts = 10;
    ClassifierProtocol classify;
    double link_val_frac = 0.05;
    double link_test_frac = 0.10;
    std::size_t theory_trials = 1000;
    std::size_t bench_steps = 20;
    std::vector<std::size_t> bench_sizes;

    bool record_runtime = false;
    bool use_cache = true;

    void validate() const {
        if (tasks.empty()) throw ConfigError("task list is empty");
        for (const auto& t : tasks)
            if (std::find(known_tasks().begin(), known_tasks().end(), t) == known_tasks().end())
                throw ConfigError("unknown task '" + t + "'");
        filter.validate();
        train.validate();
        if (kmeans_restarts < 1) throw ConfigError("kmeans_restarts must be >= 1");
        if (bench_steps < 1) throw ConfigError("bench_steps must be >= 1");
    }

    bool wants(const std::string& t) const { return std::find(tasks.begin(), tasks.end(), t) != tasks.end(); }
};

namespace config_detail {

inline double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw ConfigError("key '" + key + "': cannot parse '" + v + "' as a number");
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const unsigned long long u = std::stoull(v, &pos);
        if (pos == v.size() && v.find('-') == std::string::npos) return static_cast<std::size_t>(u);
    } catch (const std::exception&) {
    }
    throw ConfigError("key '" + key + "': cannot parse '" + v + "' as a count");
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep))
        if (!cur.empty()) out.push_back(cur);
    return out;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace config_detail

inline void apply_preset(RunConfig& cfg, const Preset& p) {
    cfg.preset = std::string(p.name);
    cfg.dataset = std::string(p.name);
    cfg.train.learning_rate = p.learning_rate;
    cfg.train.architecture = {p.architecture[0], p.architecture[1]};
    cfg.train.temperature = p.tau;
    cfg.train.n_epochs = p.n_epochs;
    cfg.train.mask_fraction = p.mask_fraction;
    cfg.train.n_view = p.view_num;
    cfg.train.weight_decay = p.weight_decay;
    cfg.train.batch_size = p.batch_size;
    cfg.filter.alpha = p.alpha;
    cfg.filter.r_max = p.r_max;
    cfg.filter.rrz = p.rrz;
}

// One key=value setting. Keys match the flat config file format.
inline void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    using namespace config_detail;
    auto& t = cfg.train;
    auto& f = cfg.filter;
    if (key == "preset") apply_preset(cfg, find_preset(value));
    else if (key == "dataset") cfg.dataset = value;
    else if (key == "data_dir") cfg.data_dir = value;
    else if (key == "features") cfg.features_path = value;
    else if (key == "edges") cfg.edges_path = value;
    else if (key == "labels") cfg.labels_path = value;
    else if (key == "gen_synthetic") cfg.gen_synthetic = to_size(key, value);
    else if (key == "edge_factor") cfg.edge_factor = to_size(key, value);
    else if (key == "d_in") cfg.d_in = to_size(key, value);
    else if (key == "mode") t.mode = parse_mode(value);
    else if (key == "tasks") cfg.tasks = split(value, ',');
    else if (key == "out") cfg.out_dir = value;
    else if (key == "cache_dir") cfg.cache_dir = value;
    else if (key == "seed") cfg.seed = to_size(key, value);
    else if (key == "learning_rate") t.learning_rate = to_double(key, value);
    else if (key == "architecture") {
        t.architecture.clear();
        for (const auto& part : split(value, '-')) t.architecture.push_back(to_size(key, part));
    } else if (key == "tau") t.temperature = to_double(key, value);
    else if (key == "n_epochs") t.n_epochs = to_size(key, value);
    else if (key == "mask_fraction") t.mask_fraction = to_double(key, value);
    else if (key == "view_num") t.n_view = to_size(key, value);
    else if (key == "weight_decay") t.weight_decay = to_double(key, value);
    else if (key == "batch_size") t.batch_size = to_size(key, value);
    else if (key == "alpha") f.alpha = to_double(key, value);
    else if (key == "r_max") {
        if (value == "none") f.r_max.reset();
        else f.r_max = to_double(key, value);
    } else if (key == "rrz") f.rrz = to_double(key, value);
    else if (key == "max_hops") {
        f.residual_mass_eps.reset();
        f.max_hops = to_size(key, value);
    } else if (key == "residual_mass_eps") {
        f.max_hops.reset();
        f.residual_mass_eps = to_double(key, value);
    } else if (key == "row_normalize") f.row_normalize = to_bool(key, value);
    else if (key == "n_clusters") cfg.n_clusters = static_cast<int>(to_size(key, value));
    else if (key == "kmeans_restarts") cfg.kmeans_restarts = to_size(key, value);
    else if (key == "classify_train_frac") cfg.classify.train_frac = to_double(key, value);
    else if (key == "classify_val_frac") cfg.classify.val_frac = to_double(key, value);
    else if (key == "classify_epochs") cfg.classify.epochs = to_size(key, value);
    else if (key == "classify_lr") cfg.classify.learning_rate = to_double(key, value);
    else if (key == "classify_wd") cfg.classify.weight_decay = to_double(key, value);
    else if (key == "link_val_frac") cfg.link_val_frac = to_double(key, value);
    else if (key == "link_test_frac") cfg.link_test_frac = to_double(key, value);
    else if (key == "theory_trials") cfg.theory_trials = to_size(key, value);
    else if (key == "bench_steps") cfg.bench_steps = to_size(key, value);
    else if (key == "bench_sizes") {
        cfg.bench_sizes.clear();
        for (const auto& part : split(value, ',')) cfg.bench_sizes.push_back(to_size(key, part));
    } else if (key == "record_runtime") cfg.record_runtime = to_bool(key, value);
    else if (key == "cache") cfg.use_cache = to_bool(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
}

using Settings = std::vector<std::pair<std::string, std::string>>;

// A preset, if any, is applied before the other settings so that explicit
// keys override it regardless of their position.
inline void apply_settings(RunConfig& cfg, const Settings& s) {
    for (const auto& [k, v] : s)
        if (k == "preset") set_key(cfg, k, v);
    for (const auto& [k, v] : s)
        if (k != "preset") set_key(cfg, k, v);
}

inline std::pair<std::string, std::string> parse_setting(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + text + "'");
    return {config_detail::trim(text.substr(0, eq)), config_detail::trim(text.substr(eq + 1))};
}

// Flat key=value file; '#' starts a comment line.
inline Settings read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    Settings s;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = config_detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.find('=') == std::string::npos) throw ParseError(path, lineno, "expected key=value");
        s.push_back(parse_setting(t));
    }
    return s;
}

// Canonical listing of every field that influences numbers in a report.
inline std::string canonical_config(const RunConfig& c) {
    using io_detail::format_double;
    std::ostringstream o;
    auto opt_d = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("none"); };
    o << "dataset=" << c.dataset << '\n';
    o << "features=" << c.features_path.value_or("") << '\n';
    o << "edges=" << c.edges_path.value_or("") << '\n';
    o << "labels=" << c.labels_path.value_or("") << '\n';
    o << "gen_synthetic=" << (c.gen_synthetic ? std::to_string(*c.gen_synthetic) : "none") << '\n';
    o << "edge_factor=" << c.edge_factor << "\nd_in=" << c.d_in << '\n';
    o << "alpha=" << format_double(c.filter.alpha) << "\nrrz=" << format_double(c.filter.rrz) << '\n';
    o << "hops=" << c.filter.hops() << "\nr_max=" << opt_d(c.filter.r_max) << '\n';
    o << "row_normalize=" << c.filter.row_normalize << '\n';
    const auto& t = c.train;
    o << "mode=" << mode_name(t.mode) << "\nlearning_rate=" << format_double(t.learning_rate) << '\n';
    o << "weight_decay=" << format_double(t.weight_decay) << "\nbatch_size=" << t.batch_size << '\n';
    o << "n_epochs=" << t.n_epochs << "\ntau=" << format_double(t.temperature) << '\n';
    o << "mask_fraction=" << format_double(t.mask_fraction) << "\nview_num=" << t.n_view << '\n';
    o << "architecture=";
    for (auto a : t.architecture) o << a << '-';
    o << "\nseed=" << c.seed << '\n';
    o << "n_clusters=" << (c.n_clusters ? std::to_string(*c.n_clusters) : "auto") << '\n';
    o << "kmeans_restarts=" << c.kmeans_restarts << '\n';
    o << "classify=" << format_double(c.classify.train_frac) << ',' << format_double(c.classify.val_frac) << ','
      << c.classify.epochs << ',' << format_double(c.classify.learning_rate) << ','
      << format_double(c.classify.weight_decay) << '\n';
    o << "link=" << format_double(c.link_val_frac) << ',' << format_double(c.link_test_frac) << '\n';
    o << "theory_trials=" << c.theory_trials << "\nbench_steps=" << c.bench_steps << "\nbench_sizes=";
    for (auto n : c.bench_sizes) o << n << ',';
    o << '\n';
    return o.str();
}

inline std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string config_hash(const RunConfig& c) { return hex64(fnv1a(canonical_config(c))); }

// Content hash of a graph plus the filter settings, used as the cache key.
inline std::string filter_cache_key(const AttributedGraph& g, const FilterConfig& f) {
    std::uint64_t h = fnv1a(std::string_view(reinterpret_cast<const char*>(g.features.data()),
                                             static_cast<std::size_t>(g.features.size()) * sizeof(double)));
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(g.csr_offsets.data()),
                               g.csr_offsets.size() * sizeof(std::size_t)),
              h);
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(g.csr_targets.data()), g.csr_targets.size() * sizeof(NodeId)),
              h);
    std::ostringstream o;
    o << io_detail::format_double(f.alpha) << ',' << io_detail::format_double(f.rrz) << ',' << f.hops() << ','
      << (f.r_max ? io_detail::format_double(*f.r_max) : "exact") << ',' << f.row_normalize;
    return hex64(fnv1a(o.str(), h));
}

class StageError : public Error {
public:
    StageError(std::string stage, const std::string& msg) : Error("stage " + stage + ": " + msg), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

struct RunArtifacts {
    std::vector<std::string> reports;
    std::string manifest;
};

namespace pipeline_detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <typename Fn>
auto staged(const std::string& stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

inline std::string first_existing(const std::filesystem::path& dir, std::initializer_list<const char*> names) {
    for (const char* n : names)
        if (std::filesystem::exists(dir / n)) return (dir / n).string();
    return "";
}

struct DataPaths {
    std::string features, edges;
    std::optional<std::string> labels;
};

inline DataPaths resolve_paths(const RunConfig& c) {
    const std::filesystem::path dir = std::filesystem::path(c.data_dir) / c.dataset;
    DataPaths p;
    p.features = c.features_path.value_or(first_existing(dir, {"features.txt", "features.gfm", "features.bin"}));
    p.edges = c.edges_path.value_or(first_existing(dir, {"edges.txt"}));
    if (c.labels_path) {
        p.labels = c.labels_path;
    } else {
        const auto l = first_existing(dir, {"labels.txt"});
        if (!l.empty()) p.labels = l;
    }
    if (p.features.empty() || p.edges.empty())
        throw IoError("dataset '" + c.dataset + "': no features/edges files under " + dir.string());
    return p;
}

inline AttributedGraph load_data(const RunConfig& c) {
    if (c.gen_synthetic) return gen_synthetic(*c.gen_synthetic, c.edge_factor, c.d_in, c.seed);
    const auto p = resolve_paths(c);
    return load_graph(p.features, p.edges, p.labels);
}

inline Matrix filtered(const RunConfig& c, const AttributedGraph& g, std::ostream& log) {
    namespace fs = std::filesystem;
    const std::string key = filter_cache_key(g, c.filter);
    const fs::path dir = c.cache_dir.empty() ? fs::path(c.out_dir) / "cache" : fs::path(c.cache_dir);
    const fs::path path = dir / ("filtered_" + key + ".gfm8");
    if (c.use_cache && fs::exists(path)) {
        try {
            Matrix m = read_matrix_binary(path.string());
            if (m.rows() == g.features.rows() && m.cols() == g.features.cols()) {
                log << "stage=filter cache=hit key=" << key << '\n';
                return m;
            }
        } catch (const Error&) {
        }
    }
    Matrix m = propagate(g, c.filter).matrix;
    log << "stage=filter cache=miss key=" << key << " hops=" << c.filter.hops() << '\n';
    if (c.use_cache) {
        fs::create_directories(path.parent_path());
        write_matrix_binary(path.string(), m);
    }
    return m;
}

inline TrainConfig train_config(const RunConfig& c, const std::optional<Labels>& labels) {
    TrainConfig t = c.train;
    t.seed = c.seed;
    if (t.mode != Mode::dmat_i && labels && !t.label_mask) {
        // Supervised modes learn only from the classification train split.
        const auto split = stratified_split(*labels, c.classify.train_frac, c.classify.val_frac, c.seed);
        std::vector<bool> mask(labels->size(), false);
        for (auto i : split.train) mask[i] = true;
        t.label_mask = std::move(mask);
    }
    return t;
}

inline TrainResult trained(const RunConfig& c, const Matrix& x, const std::optional<Labels>& labels,
                           const std::string& tag, std::ostream& log) {
    return train(x, labels, train_config(c, labels), [&](std::size_t epoch, double loss) {
        log << "stage=" << tag << " epoch=" << epoch + 1 << " metric=loss value=" << io_detail::format_double(loss) << '\n';
    });
}

inline void log_metrics(std::ostream& log, const std::string& task, const Json& m, const std::string& prefix = "") {
    for (auto it = m.begin(); it != m.end(); ++it) {
        if (it->is_object()) log_metrics(log, task, *it, prefix + it.key() + ".");
        else if (it->is_number()) log << "task=" << task << " metric=" << prefix << it.key() << " value=" << it->dump() << '\n';
    }
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return quantile_sorted(v, 0.5);
}

inline Json histogram_bands(const Histogram& h) {
    Json j;
    j["mass_025_050"] = h.mass_between(0.25, 0.5);
    j["mass_above_050"] = h.mass_between(0.5, 1.0);
    j["n_pairs"] = h.n_pairs;
    j["sampled"] = h.sampled;
    return j;
}

}  // namespace pipeline_detail

struct BenchRow {
    std::size_t n_nodes = 0, n_edges = 0, steps = 0;
    double filter_s = 0, per_batch_ms = 0, epoch_s = 0;
};

// Filter time plus the median optimizer-step time over `bench_steps` steps.
// epoch_s is that median times the number of batches in one epoch.
inline BenchRow bench_one(const RunConfig& c, std::size_t n, std::ostream& log) {
    using namespace pipeline_detail;
    const auto g = gen_synthetic(n, c.edge_factor, c.d_in, c.seed);
    const auto t0 = Clock::now();
    Matrix x = propagate(g, c.filter).matrix;
    BenchRow r;
    r.filter_s = seconds_since(t0);
    r.n_nodes = n;
    r.n_edges = g.n_edges();
    TrainConfig t = c.train;
    t.mode = Mode::dmat_i;
    t.seed = c.seed;
    t.n_epochs = 1;
    t.max_steps = c.bench_steps;
    t.emit_embedding = false;
    const auto res = train(x, std::nullopt, t);
    r.steps = res.n_steps;
    r.per_batch_ms = 1000.0 * median(res.step_seconds);
    r.epoch_s = r.per_batch_ms / 1000.0 * static_cast<double>((n + t.batch_size - 1) / t.batch_size);
    log << "stage=bench n_nodes=" << n << " n_edges=" << r.n_edges << " filter_s=" << r.filter_s
        << " per_batch_ms=" << r.per_batch_ms << " epoch_s=" << r.epoch_s << '\n';
    return r;
}

inline void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "n_nodes,filter_s,per_batch_ms,epoch_s\n";
    for (const auto& r : rows)
        out << r.n_nodes << ',' << io_detail::format_double(r.filter_s) << ',' << io_detail::format_double(r.per_batch_ms)
            << ',' << io_detail::format_double(r.epoch_s) << '\n';
}

// Executes the requested tasks and writes metrics_<task>.json files plus
// manifest.json under out_dir.
inline RunArtifacts run(const RunConfig& cfg, std::ostream& log = std::cout) {
    using namespace pipeline_detail;
    namespace fs = std::filesystem;
    staged("config", [&] {
        cfg.validate();
        return 0;
    });
    fs::create_directories(cfg.out_dir);
    const fs::path out(cfg.out_dir);
    const std::string hash = config_hash(cfg);
    RunArtifacts art;
    Json manifest;
    manifest["config_hash"] = hash;
    manifest["seed"] = cfg.seed;
    manifest["tasks"] = cfg.tasks;
    manifest["config"] = Json::object();
    {
        std::istringstream lines(canonical_config(cfg));
        std::string line;
        while (std::getline(lines, line)) {
            const auto eq = line.find('=');
            manifest["config"][line.substr(0, eq)] = line.substr(eq + 1);
        }
    }
    manifest["artifacts"] = Json::object();
    manifest["loss_trace"] = Json::object();
    Json timings = Json::object();

    auto emit = [&](const std::string& task, Json metrics, double runtime) {
        MetricsReport r{task, cfg.dataset, hash, cfg.seed, std::move(metrics), std::nullopt};
        if (cfg.record_runtime) r.runtime_s = runtime;
        const std::string path = (out / ("metrics_" + task + ".json")).string();
        write_json(path, r.to_json());
        log_metrics(log, task, r.metrics);
        art.reports.push_back(path);
        manifest["artifacts"]["metrics_" + task] = "metrics_" + task + ".json";
    };

    const bool needs_graph = cfg.wants("cluster") || cfg.wants("classify") || cfg.wants("theory") || cfg.wants("linkpred");
    std::optional<AttributedGraph> g;
    if (needs_graph) {
        const auto t0 = Clock::now();
        g = staged("load", [&] { return load_data(cfg); });
        log << "stage=load dataset=" << cfg.dataset << " n_nodes=" << g->n_nodes << " n_edges=" << g->n_edges()
            << " d=" << g->feature_dim() << '\n';
        timings["load_s"] = seconds_since(t0);
    }

    const bool needs_full = cfg.wants("cluster") || cfg.wants("classify") || cfg.wants("theory");
    std::optional<Matrix> smoothed;
    std::optional<TrainResult> model;
    if (needs_full) {
        auto t0 = Clock::now();
        smoothed = staged("filter", [&] { return filtered(cfg, *g, log); });
        timings["filter_s"] = seconds_since(t0);
        t0 = Clock::now();
        model = staged("train", [&] { return trained(cfg, *smoothed, g->labels, "train", log); });
        timings["train_s"] = seconds_since(t0);
        staged("train", [&] {
            write_matrix_binary((out / "embedding.gfm8").string(), model->embedding);
            save_checkpoint((out / "encoder.dmtc").string(), model->params, model->optim);
            return 0;
        });
        manifest["artifacts"]["embedding"] = "embedding.gfm8";
        manifest["artifacts"]["checkpoint"] = "encoder.dmtc";
        manifest["loss_trace"]["full"] = model->loss_trace;
    }

    if (cfg.wants("cluster")) {
        const auto t0 = Clock::now();
        Json m = staged("cluster", [&] {
            int k = cfg.n_clusters.value_or(g->n_classes);
            if (k < 1) throw ConfigError("cluster: set n_clusters or provide labels");
            const auto km = kmeans(model->embedding, k, cfg.kmeans_restarts, 300, cfg.seed);
            const auto cm = clustering_metrics(km.assignments, g->labels, &*g);
            Json j;
            j["n_clusters"] = k;
            if (g->labels) {
                j["accuracy"] = cm.accuracy;
                j["nmi"] = cm.nmi;
                j["ari"] = cm.ari;
                j["macro_f1"] = cm.macro_f1;
            }
            j["modularity"] = cm.modularity;
            j["conductance"] = cm.conductance;
            j["inertia"] = km.inertia;
            return j;
        });
        emit("cluster", std::move(m), seconds_since(t0));
    }

    if (cfg.wants("classify")) {
        const auto t0 = Clock::now();
        Json m = staged("classify", [&] {
            if (!g->labels) throw ConfigError("classify: labels required");
            const auto r = fit_linear_classifier(model->embedding, *g->labels, cfg.seed, cfg.classify);
            Json j;
            j["test_accuracy"] = r.test_accuracy;
            j["val_accuracy"] = r.val_accuracy;
            j["best_epoch"] = r.best_epoch;
            return j;
        });
        emit("classify", std::move(m), seconds_since(t0));
    }

    if (cfg.wants("linkpred")) {
        const auto t0 = Clock::now();
        Json m = staged("linkpred", [&] {
            const auto split = split_edges(*g, cfg.link_val_frac, cfg.link_test_frac, cfg.seed);
            const Matrix x = filtered(cfg, split.train, log);
            const auto res = trained(cfg, x, split.train.labels, "linkpred-train", log);
            manifest["loss_trace"]["linkpred"] = res.loss_trace;
            const auto test = link_prediction_eval(res.embedding, split, false);
            Json j;
            j["auc"] = test.auc;
            j["ap"] = test.ap;
            if (!split.val_pairs.empty()) {
                const auto val = link_prediction_eval(res.embedding, split, true);
                j["val_auc"] = val.auc;
                j["val_ap"] = val.ap;
            }
            j["n_test_pairs"] = split.test_pairs.size();
            return j;
        });
        emit("linkpred", std::move(m), seconds_since(t0));
    }

    if (cfg.wants("theory")) {
        const auto t0 = Clock::now();
        Json m = staged("theory", [&] {
            Json j;
            SyntheticTupletSource four;
            four.n_classes = 4;
            four.dim = 16;
            four.seed = cfg.seed;
            const auto l1 = check_lemma1(four, cfg.theory_trials, cfg.train.temperature);
            j["lemma1"] = {{"trials", l1.trials}, {"violations", l1.violations}, {"max_violation", l1.max_violation}};

            SyntheticTupletSource two;
            two.seed = cfg.seed;
            Json t1 = Json::array();
            for (auto [mm, qq] : std::vector<std::pair<std::size_t, std::size_t>>{{8, 8}, {32, 32}, {8, 64}}) {
                const auto b = theorem1_synthetic_check(two, mm, qq);
                t1.push_back({{"m", b.m},
                              {"q", b.q},
                              {"tau0_q1", b.tau0.q1},
                              {"tau0_median", b.tau0.median},
                              {"tau0_q3", b.tau0.q3},
                              {"tau_minus", b.tau_minus},
                              {"bound", b.bound},
                              {"observed_mean_diff", b.observed_mean_diff},
                              {"per_sample_exceed_fraction", b.per_sample_exceed_fraction},
                              {"lambda", b.constants.lambda},
                              {"gamma", b.constants.gamma}});
            }
            j["theorem1_synthetic"] = t1;
            const std::size_t mq = 2 * cfg.train.batch_size - 2;
            const auto c2 = theorem2_constants(mq, 0);
            j["theorem2"] = {{"m_plus_q", mq}, {"lambda", c2.lambda}, {"gamma", c2.gamma}};

            if (g->labels) {
                Tau0Options to;
                to.batch_size = cfg.train.batch_size;
                to.temperature = cfg.train.temperature;
                to.seed = cfg.seed;
                const auto tau = tau0_estimate(model->embedding, *g->labels, to);
                j["tau0"] = {{"q1", tau.q.q1}, {"median", tau.q.median}, {"q3", tau.q.q3}, {"n_unstable", tau.n_unstable}};
                HistogramOptions ho;
                ho.seed = cfg.seed;
                Json hj;
                const std::pair<const char*, const Matrix*> sources[] = {
                    {"raw", &g->features}, {"smoothed", &*smoothed}, {"embedding", &model->embedding}};
                for (const auto& [name, mat] : sources) {
                    const auto h = hardness_histogram(*mat, *g->labels, ho);
                    const std::string file = std::string("hardness_") + name + ".csv";
                    write_histogram_csv((out / file).string(), h);
                    manifest["artifacts"][std::string("hardness_") + name] = file;
                    hj[name] = histogram_bands(h);
                }
                j["hardness"] = hj;
            }
            return j;
        });
        emit("theory", std::move(m), seconds_since(t0));
    }

    if (cfg.wants("bench")) {
        const auto t0 = Clock::now();
        Json m = staged("bench", [&] {
            std::vector<std::size_t> sizes = cfg.bench_sizes;
            if (sizes.empty() && cfg.gen_synthetic) sizes.push_back(*cfg.gen_synthetic);
            if (sizes.empty()) throw ConfigError("bench: set bench_sizes or gen_synthetic");
            std::vector<BenchRow> rows;
            for (auto n : sizes) rows.push_back(bench_one(cfg, n, log));
            write_bench_csv((out / "bench.csv").string(), rows);
            manifest["artifacts"]["bench"] = "bench.csv";
            // Timings live in bench.csv; the report keeps only deterministic
            // fields unless runtimes are requested.
            Json j;
            Json list = Json::array();
            for (const auto& r : rows) {
                Json e{{"n_nodes", r.n_nodes}, {"n_edges", r.n_edges}, {"steps", r.steps}};
                if (cfg.record_runtime) {
                    e["filter_s"] = r.filter_s;
                    e["per_batch_ms"] = r.per_batch_ms;
                    e["epoch_s"] = r.epoch_s;
                }
                list.push_back(e);
            }
            j["graphs"] = list;
            return j;
        });
        emit("bench", std::move(m), seconds_since(t0));
    }

    if (cfg.record_runtime) manifest["timings"] = timings;
    art.manifest = (out / "manifest.json").string();
    write_json(art.manifest, manifest);
    return art;
}

}  // namespace dmat
