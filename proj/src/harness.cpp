#include "ctda/harness.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "ctda/analysis.hpp"
#include "ctda/csv.hpp"
#include "ctda/svg.hpp"
#include "json.hpp"

namespace ctda {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::vector<std::string>& allowed, const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        bool known = false;
        for (const auto& a : allowed)
            if (key == a) known = true;
        if (!known) throw ConfigError("config: unknown key \"" + key + "\" in " + where);
    }
}

template <typename T>
void maybe(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) obj.at(key).get_to(out);
}

void parse_pair(const json& obj, const char* key, double out[2]) {
    if (!obj.contains(key)) return;
    const auto& arr = obj.at(key);
    if (!arr.is_array() || arr.size() != 2) throw ConfigError(std::string("config: ") + key + " must be [lo, hi]");
    arr[0].get_to(out[0]);
    arr[1].get_to(out[1]);
}

void parse_pair(const json& obj, const char* key, int out[2]) {
    if (!obj.contains(key)) return;
    const auto& arr = obj.at(key);
    if (!arr.is_array() || arr.size() != 2) throw ConfigError(std::string("config: ") + key + " must be [lo, hi]");
    arr[0].get_to(out[0]);
    arr[1].get_to(out[1]);
}

GeneratorConfig parse_generator(const json& obj) {
    reject_unknown_keys(obj,
                        {"patch_size", "beta_range", "mass_radius_range", "mass_intensity_range", "calc_count_range",
                         "calc_area_side_range", "calc_intensity_range", "seed"},
                        "generator");
    GeneratorConfig g;
    maybe(obj, "patch_size", g.patch_size);
    parse_pair(obj, "beta_range", g.beta_range);
    parse_pair(obj, "mass_radius_range", g.mass_radius_range);
    parse_pair(obj, "mass_intensity_range", g.mass_intensity_range);
    parse_pair(obj, "calc_count_range", g.calc_count_range);
    parse_pair(obj, "calc_area_side_range", g.calc_area_side_range);
    parse_pair(obj, "calc_intensity_range", g.calc_intensity_range);
    maybe(obj, "seed", g.seed);
    return g;
}

TemperatureSchedule parse_temperature(const json& obj) {
    reject_unknown_keys(obj, {"kind", "start", "hold_epochs", "decay_epochs", "end"}, "train.temperature");
    TemperatureSchedule t;
    std::string kind = "constant";
    maybe(obj, "kind", kind);
    if (kind == "constant")
        t.kind = TemperatureSchedule::Kind::Constant;
    else if (kind == "staged")
        t.kind = TemperatureSchedule::Kind::Staged;
    else
        throw ConfigError("config: temperature kind must be constant or staged");
    maybe(obj, "start", t.start);
    maybe(obj, "hold_epochs", t.hold_epochs);
    maybe(obj, "decay_epochs", t.decay_epochs);
    maybe(obj, "end", t.end_value);
    return t;
}

TrainConfig parse_train(const json& obj) {
    reject_unknown_keys(obj,
                        {"strategy", "epochs", "lcp_epochs", "base_lr", "weight_decay", "cosine_period", "batch_size",
                         "temperature", "seed", "pool_side", "hidden_dim", "embed_dim", "val_fraction",
                         "test_fraction", "analysis_per_cell", "augment"},
                        "train");
    TrainConfig t;
    if (obj.contains("strategy")) t.strategy = strategy_from_string(obj.at("strategy").get<std::string>());
    maybe(obj, "epochs", t.epochs);
    maybe(obj, "lcp_epochs", t.lcp_epochs);
    maybe(obj, "base_lr", t.base_lr);
    maybe(obj, "weight_decay", t.weight_decay);
    maybe(obj, "cosine_period", t.cosine_period);
    maybe(obj, "batch_size", t.batch_size);
    if (obj.contains("temperature")) t.temperature = parse_temperature(obj.at("temperature"));
    maybe(obj, "seed", t.seed);
    maybe(obj, "pool_side", t.pool_side);
    maybe(obj, "hidden_dim", t.hidden_dim);
    maybe(obj, "embed_dim", t.embed_dim);
    maybe(obj, "val_fraction", t.val_fraction);
    maybe(obj, "test_fraction", t.test_fraction);
    maybe(obj, "analysis_per_cell", t.analysis_per_cell);
    maybe(obj, "augment", t.augment_train);
    return t;
}

}  // namespace

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config: invalid JSON in " + path.string() + ": " + e.what());
    }

    try {
        reject_unknown_keys(doc, {"generator", "lut", "dataset", "train", "sweep", "outputs"}, "config root");

        ExperimentConfig cfg;
        if (doc.contains("generator")) cfg.generator = parse_generator(doc.at("generator"));
        if (doc.contains("lut")) {
            reject_unknown_keys(doc.at("lut"), {"center", "width"}, "lut");
            maybe(doc.at("lut"), "center", cfg.lut.center);
            maybe(doc.at("lut"), "width", cfg.lut.width);
        }
        if (doc.contains("dataset")) {
            const auto& d = doc.at("dataset");
            reject_unknown_keys(d, {"n_patches", "mode", "split_seed"}, "dataset");
            maybe(d, "n_patches", cfg.dataset.n_patches);
            if (d.contains("mode")) cfg.dataset.mode = mode_from_string(d.at("mode").get<std::string>());
            maybe(d, "split_seed", cfg.dataset.split_seed);
        }
        if (doc.contains("train")) cfg.train = parse_train(doc.at("train"));
        if (doc.contains("sweep")) {
            const auto& s = doc.at("sweep");
            reject_unknown_keys(s, {"tau_grid"}, "sweep");
            if (s.contains("tau_grid")) {
                cfg.sweep.tau_grid = s.at("tau_grid").get<std::vector<double>>();
                if (cfg.sweep.tau_grid.empty()) throw ConfigError("config: sweep.tau_grid must be nonempty");
                for (double t : cfg.sweep.tau_grid)
                    if (!(t > 0.0)) throw ConfigError("config: sweep temperatures must be positive");
            }
        }
        if (doc.contains("outputs")) cfg.outputs = doc.at("outputs").get<std::string>();

        if (const char* root = std::getenv("CTDA_OUT"); root && cfg.outputs.is_relative())
            cfg.outputs = std::filesystem::path(root) / cfg.outputs;

        try {
            cfg.generator.validate();
            cfg.lut.validate();
            cfg.train.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
        return cfg;
    } catch (const json::exception& e) {
        throw ConfigError("config: schema violation in " + path.string() + ": " + e.what());
    }
}

void apply_seed_override(ExperimentConfig& config, std::uint64_t seed) {
    config.generator.seed = seed;
    config.dataset.split_seed = splitmix64(seed ^ 0x1dULL);
    config.train.seed = splitmix64(seed ^ 0x2dULL);
}

std::filesystem::path run_dir(const ExperimentConfig& config, Strategy strategy) {
    return config.outputs / "runs" / to_string(strategy);
}

std::filesystem::path sweep_dir(const ExperimentConfig& config, double tau) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "tau_%g", tau);
    return config.outputs / "sweep" / buf;
}

int run_generate(const ExperimentConfig& config) {
    try {
        std::filesystem::create_directories(config.dataset_dir());
        generate_dataset(config.generator, config.lut, config.dataset.n_patches, config.dataset.mode,
                         config.dataset.split_seed, config.dataset_dir());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return 0;
}

namespace {

void write_metrics_json(const std::filesystem::path& path, const TrainOutput& result, const EvalMetrics& metrics,
                        const TrainConfig& cfg, long param_count) {
    json doc{{"strategy", to_string(cfg.strategy)},
             {"best_epoch", result.best_epoch},
             {"best_val_auc_ovo", result.best_val_auc_ovo},
             {"parameter_count", param_count},
             {"test",
              {{"accuracy", metrics.accuracy},
               {"auc_ovo", metrics.auc_ovo},
               {"auc_ovr", metrics.auc_ovr},
               {"cmmd_sq", metrics.cmmd_sq},
               {"dcmmd_sq", metrics.dcmmd_sq}}}};
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string());
    out << doc.dump(2) << "\n";
}

TrainOutput train_once(const ExperimentConfig& config, const TrainConfig& train_cfg,
                       const std::filesystem::path& out_dir, EvalMetrics* metrics_out) {
    Manifest manifest;
    try {
        manifest = read_manifest(config.dataset_dir());
    } catch (const std::exception& e) {
        throw IoError(std::string("train: dataset not available: ") + e.what());
    }

    std::filesystem::create_directories(out_dir);
    const DataSplits splits = prepare_splits(manifest, config.dataset_dir(), train_cfg);
    TrainOutput result = train(train_cfg, splits);
    const EvalMetrics metrics = evaluate(result.feature_map, result.head, splits.test, splits.n_classes);

    result.log.save(out_dir / "log.csv");
    save_checkpoint(out_dir / "checkpoint.bin", result.feature_map, result.head);
    write_metrics_json(out_dir / "metrics.json", result, metrics, train_cfg, result.feature_map.parameter_count());
    if (metrics_out) *metrics_out = metrics;
    return result;
}

}  // namespace

int run_train(const ExperimentConfig& config) {
    try {
        train_once(config, config.train, run_dir(config, config.train.strategy), nullptr);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return 0;
}

const std::vector<std::string>& correlation_csv_header() {
    static const std::vector<std::string> header = {"tau", "rho_cmmd", "rho_a", "rho_b", "rho_c"};
    return header;
}

int run_sweep_tau(const ExperimentConfig& config, int jobs) {
    if (config.sweep.tau_grid.empty()) throw ConfigError("sweep: empty tau grid");
    try {
        read_manifest(config.dataset_dir());
    } catch (const std::exception& e) {
        throw IoError(std::string("sweep: dataset not available: ") + e.what());
    }

    // One supervised-contrastive training run per grid point; runs are
    // independent and own their output directories.
    const auto& grid = config.sweep.tau_grid;
    std::vector<std::string> errors(grid.size());
    std::atomic<std::size_t> next{0};

    auto worker = [&]() {
        for (;;) {
            const std::size_t idx = next.fetch_add(1);
            if (idx >= grid.size()) return;
            try {
                TrainConfig cfg = config.train;
                cfg.strategy = Strategy::SupContrLCP;
                cfg.temperature.kind = TemperatureSchedule::Kind::Constant;
                cfg.temperature.start = grid[idx];
                train_once(config, cfg, sweep_dir(config, grid[idx]), nullptr);
            } catch (const std::exception& e) {
                errors[idx] = e.what();
            }
        }
    };

    const int n_workers = std::max(1, std::min<int>(jobs, static_cast<int>(grid.size())));
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (!errors[i].empty()) throw IoError("sweep: run at tau " + CsvWriter::format_double(grid[i]) + " failed: " + errors[i]);

    // correlations of term derivatives with the tau-scaled loss derivative,
    // over the feature-training epochs
    std::filesystem::create_directories(config.outputs / "sweep");
    CsvWriter corr(config.outputs / "sweep" / "correlation.csv", correlation_csv_header());
    LinePlot plot;
    plot.title = "Derivative correlation vs temperature";
    plot.x_label = "tau";
    plot.y_label = "pearson rho";
    plot.log_x = true;
    PlotSeries s_cmmd{"cmmd", {}, {}}, s_a{"term A", {}, {}}, s_b{"term B", {}, {}}, s_c{"term C", {}, {}};

    for (double tau : grid) {
        const ExperimentLog log = ExperimentLog::load(sweep_dir(config, tau) / "log.csv");
        std::vector<double> loss, cmmd, a, b, c;
        for (const auto& row : log.rows) {
            if (row.phase != "supcon") continue;
            loss.push_back(row.analysis_loss);
            cmmd.push_back(row.cmmd_sq);
            a.push_back(row.term_a);
            b.push_back(row.term_b);
            c.push_back(row.term_c);
        }
        const double r_cmmd = derivative_correlation(cmmd, loss, tau);
        const double r_a = derivative_correlation(a, loss, tau);
        const double r_b = derivative_correlation(b, loss, tau);
        const double r_c = derivative_correlation(c, loss, tau);
        corr.write_row({CsvWriter::format_double(tau), CsvWriter::format_double(r_cmmd),
                        CsvWriter::format_double(r_a), CsvWriter::format_double(r_b),
                        CsvWriter::format_double(r_c)});
        s_cmmd.x.push_back(tau);
        s_cmmd.y.push_back(r_cmmd);
        s_a.x.push_back(tau);
        s_a.y.push_back(r_a);
        s_b.x.push_back(tau);
        s_b.y.push_back(r_b);
        s_c.x.push_back(tau);
        s_c.y.push_back(r_c);
    }
    corr.close();
    plot.series = {s_cmmd, s_a, s_b, s_c};
    plot.save(config.outputs / "sweep" / "correlation.svg");
    return 0;
}

int run_report(const ExperimentConfig& config) {
    namespace fs = std::filesystem;
    const fs::path report = config.outputs / "report";
    fs::create_directories(report);
    bool produced_anything = false;

    // decomposition term evolution from any available run logs
    static const std::vector<std::string> kTermHeader = {"epoch",  "analysis_loss", "cmmd_sq", "term_a",
                                                         "term_b", "term_c",        "residual"};
    for (Strategy strategy : {Strategy::CE, Strategy::SupContrLCP, Strategy::SupContrCE}) {
        const fs::path log_path = run_dir(config, strategy) / "log.csv";
        if (!fs::exists(log_path)) continue;
        const ExperimentLog log = ExperimentLog::load(log_path);
        const std::string name = std::string("terms_") + to_string(strategy);

        CsvWriter csv(report / (name + ".csv"), kTermHeader);
        LinePlot plot;
        plot.title = std::string("Decomposition terms (") + to_string(strategy) + ")";
        plot.x_label = "epoch";
        plot.y_label = "value";
        PlotSeries s_loss{"loss", {}, {}}, s_cmmd{"cmmd^2", {}, {}}, s_a{"term A", {}, {}}, s_b{"term B", {}, {}},
            s_c{"term C", {}, {}};
        for (const auto& r : log.rows) {
            csv.write_row({std::to_string(r.epoch), CsvWriter::format_double(r.analysis_loss),
                           CsvWriter::format_double(r.cmmd_sq), CsvWriter::format_double(r.term_a),
                           CsvWriter::format_double(r.term_b), CsvWriter::format_double(r.term_c),
                           CsvWriter::format_double(r.residual)});
            const double e = r.epoch;
            s_loss.x.push_back(e);
            s_loss.y.push_back(r.analysis_loss);
            s_cmmd.x.push_back(e);
            s_cmmd.y.push_back(r.cmmd_sq);
            s_a.x.push_back(e);
            s_a.y.push_back(r.term_a);
            s_b.x.push_back(e);
            s_b.y.push_back(r.term_b);
            s_c.x.push_back(e);
            s_c.y.push_back(r.term_c);
        }
        csv.close();
        plot.series = {s_loss, s_cmmd, s_a, s_b, s_c};
        plot.save(report / (name + ".svg"));
        produced_anything = true;
    }

    // strategy comparison from metrics.json files
    {
        std::vector<std::vector<std::string>> rows;
        for (Strategy strategy : {Strategy::CE, Strategy::SupContrLCP, Strategy::SupContrCE}) {
            const fs::path metrics_path = run_dir(config, strategy) / "metrics.json";
            if (!fs::exists(metrics_path)) continue;
            std::ifstream in(metrics_path);
            const auto doc = nlohmann::json::parse(in);
            const auto& test = doc.at("test");
            rows.push_back({doc.at("strategy").get<std::string>(), std::to_string(doc.at("best_epoch").get<int>()),
                            CsvWriter::format_double(doc.at("best_val_auc_ovo").get<double>()),
                            CsvWriter::format_double(test.at("accuracy").get<double>()),
                            CsvWriter::format_double(test.at("auc_ovo").get<double>()),
                            CsvWriter::format_double(test.at("auc_ovr").get<double>()),
                            CsvWriter::format_double(test.at("cmmd_sq").get<double>()),
                            CsvWriter::format_double(test.at("dcmmd_sq").get<double>())});
        }
        if (!rows.empty()) {
            CsvWriter csv(report / "strategy_comparison.csv",
                          {"strategy", "best_epoch", "best_val_auc_ovo", "test_accuracy", "test_auc_ovo",
                           "test_auc_ovr", "test_cmmd_sq", "test_dcmmd_sq"});
            for (const auto& r : rows) csv.write_row(r);
            csv.close();
            produced_anything = true;
        }
    }

    // mirror of the sweep correlation plot, if a sweep ran
    if (fs::exists(config.outputs / "sweep" / "correlation.csv")) {
        fs::copy_file(config.outputs / "sweep" / "correlation.csv", report / "correlation.csv",
                      fs::copy_options::overwrite_existing);
        fs::copy_file(config.outputs / "sweep" / "correlation.svg", report / "correlation.svg",
                      fs::copy_options::overwrite_existing);
        produced_anything = true;
    }

    if (!produced_anything)
        throw IoError("report: nothing to report under " + config.outputs.string() + " (run train or sweep-tau first)");
    return 0;
}

}  // namespace ctda
