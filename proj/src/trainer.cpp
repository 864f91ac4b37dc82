#include "ctda/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

#include "ctda/analysis.hpp"
#include "ctda/csv.hpp"
#include "ctda/discrepancy.hpp"
#include "ctda/png_io.hpp"

namespace ctda {

std::vector<double> featurize(const std::vector<double>& pixels, int side, int target_side) {
    if (target_side <= 0 || side % target_side != 0)
        throw std::invalid_argument("featurize: target_side must divide the patch side");
    const int block = side / target_side;
    const int d = target_side * target_side;

    std::vector<double> out(d, 0.0);
    for (int by = 0; by < target_side; ++by)
        for (int bx = 0; bx < target_side; ++bx) {
            double s = 0.0;
            for (int y = 0; y < block; ++y) {
                const double* row = pixels.data() + static_cast<std::size_t>(by * block + y) * side + bx * block;
                for (int x = 0; x < block; ++x) s += row[x];
            }
            out[static_cast<std::size_t>(by) * target_side + bx] = s / (static_cast<double>(block) * block);
        }

    double mean = 0.0;
    for (double v : out) mean += v;
    mean /= d;
    double var = 0.0;
    for (double v : out) var += (v - mean) * (v - mean);
    var /= d;
    if (var < 1e-8) {
        std::fill(out.begin(), out.end(), 0.0);
        return out;
    }
    const double inv = 1.0 / std::sqrt(var);
    for (auto& v : out) v = (v - mean) * inv;
    return out;
}

std::vector<double> featurize(const Patch& patch, int target_side) {
    return featurize(patch.pixels, patch.side, target_side);
}

FeatureMap FeatureMap::init(int input_dim, int hidden_dim, int embed_dim, std::uint64_t seed) {
    FeatureMap fm;
    fm.input_dim = input_dim;
    fm.hidden_dim = hidden_dim;
    fm.embed_dim = embed_dim;
    fm.w1 = Mat(hidden_dim, input_dim);
    fm.b1.assign(hidden_dim, 0.0);
    fm.w2 = Mat(embed_dim, hidden_dim);
    fm.b2.assign(embed_dim, 0.0);

    RandomStream rng(seed);
    const double s1 = std::sqrt(6.0 / input_dim);  // rectifier fan-in scaling
    for (auto& v : fm.w1.a) v = rng.uniform(-s1, s1);
    const double s2 = std::sqrt(6.0 / (hidden_dim + embed_dim));
    for (auto& v : fm.w2.a) v = rng.uniform(-s2, s2);
    // small nonzero biases keep rectifiers alive and the pre-norm activation
    // away from the exact zero where the norm head is non-differentiable
    for (auto& v : fm.b1) v = 0.01;
    for (auto& v : fm.b2) v = rng.uniform(-0.1, 0.1);
    return fm;
}

long FeatureMap::parameter_count() const {
    return static_cast<long>(w1.a.size()) + static_cast<long>(b1.size()) + static_cast<long>(w2.a.size()) +
           static_cast<long>(b2.size());
}

Mat feature_forward(const FeatureMap& fm, const Mat& inputs, ForwardCache* cache) {
    if (inputs.cols != fm.input_dim) throw std::invalid_argument("feature_forward: input dimension mismatch");
    Mat h_pre = affine_forward(inputs, fm.w1, fm.b1);
    Mat h = h_pre;
    for (auto& v : h.a) v = v > 0.0 ? v : 0.0;
    Mat a = affine_forward(h, fm.w2, fm.b2);

    const int n = inputs.rows;
    std::vector<double> norms(n, 0.0);
    Mat z = a;
    for (int i = 0; i < n; ++i) {
        const double norm = std::max(std::sqrt(dot(a.row(i), a.row(i))), FeatureMap::kNormFloor);
        norms[i] = norm;
        for (int c = 0; c < fm.embed_dim; ++c) z(i, c) = a(i, c) / norm;
    }

    if (cache) {
        cache->inputs = inputs;
        cache->h_pre = std::move(h_pre);
        cache->h = std::move(h);
        cache->a = std::move(a);
        cache->norms = std::move(norms);
        cache->z = z;
    }
    return z;
}

FeatureMapGrads feature_backward(const FeatureMap& fm, const ForwardCache& cache, const Mat& grad_z) {
    const int n = cache.inputs.rows;

    // unit-norm head: ga = (gz - (gz . z) z) / norm, or gz / floor if clamped
    Mat ga(n, fm.embed_dim);
    for (int i = 0; i < n; ++i) {
        const double norm = cache.norms[i];
        if (norm > FeatureMap::kNormFloor) {
            double proj = 0.0;
            for (int c = 0; c < fm.embed_dim; ++c) proj += grad_z(i, c) * cache.z(i, c);
            for (int c = 0; c < fm.embed_dim; ++c) ga(i, c) = (grad_z(i, c) - proj * cache.z(i, c)) / norm;
        } else {
            for (int c = 0; c < fm.embed_dim; ++c) ga(i, c) = grad_z(i, c) / FeatureMap::kNormFloor;
        }
    }

    FeatureMapGrads g;
    g.w2 = Mat(fm.embed_dim, fm.hidden_dim);
    g.b2.assign(fm.embed_dim, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < fm.embed_dim; ++j) {
            const double gv = ga(i, j);
            if (gv == 0.0) continue;
            g.b2[j] += gv;
            for (int t = 0; t < fm.hidden_dim; ++t) g.w2(j, t) += gv * cache.h(i, t);
        }

    Mat gh_pre(n, fm.hidden_dim);
    for (int i = 0; i < n; ++i)
        for (int t = 0; t < fm.hidden_dim; ++t) {
            if (cache.h_pre(i, t) <= 0.0) continue;
            double s = 0.0;
            for (int j = 0; j < fm.embed_dim; ++j) s += ga(i, j) * fm.w2(j, t);
            gh_pre(i, t) = s;
        }

    g.w1 = Mat(fm.hidden_dim, fm.input_dim);
    g.b1.assign(fm.hidden_dim, 0.0);
    for (int i = 0; i < n; ++i)
        for (int t = 0; t < fm.hidden_dim; ++t) {
            const double gv = gh_pre(i, t);
            if (gv == 0.0) continue;
            g.b1[t] += gv;
            for (int c = 0; c < fm.input_dim; ++c) g.w1(t, c) += gv * cache.inputs(i, c);
        }
    return g;
}

LinearHead LinearHead::init(int embed_dim, int n_classes, std::uint64_t seed) {
    LinearHead head;
    head.w = Mat(n_classes, embed_dim);
    head.b.assign(n_classes, 0.0);
    RandomStream rng(seed);
    const double s = std::sqrt(6.0 / (embed_dim + n_classes));
    for (auto& v : head.w.a) v = rng.uniform(-s, s);
    return head;
}

HeadGrads head_backward(const LinearHead& head, const Mat& z, const Mat& grad_logits) {
    const int n = z.rows;
    const int k = head.w.rows;
    const int m = head.w.cols;

    HeadGrads g;
    g.w = Mat(k, m);
    g.b.assign(k, 0.0);
    g.z = Mat(n, m);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < k; ++c) {
            const double gv = grad_logits(i, c);
            if (gv == 0.0) continue;
            g.b[c] += gv;
            for (int t = 0; t < m; ++t) {
                g.w(c, t) += gv * z(i, t);
                g.z(i, t) += gv * head.w(c, t);
            }
        }
    return g;
}

double cosine_lr(double base_lr, int epoch, int period) {
    const int e = epoch % period;
    return base_lr * (1.0 + std::cos(3.14159265358979323846 * static_cast<double>(e) / period)) / 2.0;
}

double TemperatureSchedule::at(int epoch) const {
    if (kind == Kind::Constant) return start;
    if (epoch < hold_epochs) return start;
    const int into = epoch - hold_epochs;
    if (into >= decay_epochs) return end_value;
    const double f = static_cast<double>(into) / decay_epochs;
    return start + (end_value - start) * f;
}

void TemperatureSchedule::validate() const {
    if (!(start > 0.0)) throw std::invalid_argument("TemperatureSchedule: start must be positive");
    if (kind == Kind::Staged) {
        if (!(end_value > 0.0)) throw std::invalid_argument("TemperatureSchedule: end value must be positive");
        if (hold_epochs < 0 || decay_epochs <= 0)
            throw std::invalid_argument("TemperatureSchedule: bad staged epochs");
    }
}

const char* to_string(Strategy s) {
    switch (s) {
        case Strategy::CE: return "CE";
        case Strategy::SupContrLCP: return "SupContrLCP";
        case Strategy::SupContrCE: return "SupContrCE";
    }
    return "?";
}

Strategy strategy_from_string(const std::string& s) {
    if (s == "CE") return Strategy::CE;
    if (s == "SupContrLCP") return Strategy::SupContrLCP;
    if (s == "SupContrCE") return Strategy::SupContrCE;
    throw std::invalid_argument("unknown strategy: " + s);
}

void TrainConfig::validate() const {
    if (epochs < 1 || lcp_epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (cosine_period < 1) throw std::invalid_argument("TrainConfig: cosine_period must be >= 1");
    if (batch_size < 2) throw std::invalid_argument("TrainConfig: batch_size too small");
    if (pool_side < 1 || hidden_dim < 1 || embed_dim < 1) throw std::invalid_argument("TrainConfig: bad dims");
    if (!(val_fraction > 0.0 && test_fraction > 0.0 && val_fraction + test_fraction < 1.0))
        throw std::invalid_argument("TrainConfig: bad split fractions");
    if (analysis_per_cell < 2) throw std::invalid_argument("TrainConfig: analysis_per_cell must be >= 2");
    temperature.validate();
}

DataSplits prepare_splits(const Manifest& manifest, const std::filesystem::path& dataset_dir,
                          const TrainConfig& config) {
    config.validate();
    if (manifest.records.empty()) throw std::runtime_error("prepare_splits: dataset has no records");

    std::map<std::uint64_t, std::vector<int>> by_base;
    for (int r = 0; r < static_cast<int>(manifest.records.size()); ++r)
        by_base[manifest.records[r].base_index].push_back(r);

    // stratified case-level split: fractions applied per class
    std::map<int, std::vector<std::uint64_t>> bases_by_class;
    for (const auto& [base, record_ids] : by_base)
        bases_by_class[static_cast<int>(manifest.records[record_ids.front()].label)].push_back(base);

    RandomStream split_rng(splitmix64(config.seed ^ 0x59117ULL));
    enum { kTrain, kVal, kTest };
    std::map<std::uint64_t, int> assignment;
    for (auto& [cls, bases] : bases_by_class) {
        split_rng.shuffle(bases.begin(), bases.end());
        const int n_bases = static_cast<int>(bases.size());
        const int n_test = std::max(1, static_cast<int>(std::lround(config.test_fraction * n_bases)));
        const int n_val = std::max(1, static_cast<int>(std::lround(config.val_fraction * n_bases)));
        if (n_test + n_val >= n_bases)
            throw std::runtime_error("prepare_splits: class " + std::to_string(cls) + " too small for the split");
        for (int i = 0; i < n_bases; ++i)
            assignment[bases[i]] = i < n_test ? kTest : (i < n_test + n_val ? kVal : kTrain);
    }

    struct PendingSample {
        std::vector<double> pixels;
        int cls;
        int dom;
        std::uint64_t base;
    };
    std::vector<PendingSample> pending[3];

    const int side = manifest.generator.patch_size;
    static const AugmentOp kTrainOps[] = {AugmentOp::FlipHorizontal, AugmentOp::FlipVertical, AugmentOp::Rotate90,
                                          AugmentOp::Rotate180,      AugmentOp::Rotate270};
    for (const auto& [base, record_ids] : by_base) {
        const int split = assignment[base];
        if (split != kTest) {
            for (int r : record_ids) {
                const auto& rec = manifest.records[r];
                auto pixels = read_gray16_png(dataset_dir / rec.file, side);
                if (split == kTrain && config.augment_train) {
                    for (AugmentOp op : kTrainOps)
                        pending[kTrain].push_back(PendingSample{augment_pixels(pixels, side, op),
                                                                static_cast<int>(rec.label),
                                                                static_cast<int>(rec.domain), base});
                }
                pending[split].push_back(PendingSample{std::move(pixels), static_cast<int>(rec.label),
                                                       static_cast<int>(rec.domain), base});
            }
            continue;
        }
        // test split: both domain versions of the base patch
        bool have[2] = {false, false};
        for (int r : record_ids) {
            const auto& rec = manifest.records[r];
            have[static_cast<int>(rec.domain)] = true;
            pending[kTest].push_back(PendingSample{read_gray16_png(dataset_dir / rec.file, side),
                                                   static_cast<int>(rec.label), static_cast<int>(rec.domain), base});
        }
        for (int d = 0; d < 2; ++d) {
            if (have[d]) continue;
            DatasetRecord ghost = manifest.records[record_ids.front()];
            ghost.domain = static_cast<DomainTag>(d);
            pending[kTest].push_back(
                PendingSample{regenerate_record(manifest, ghost), static_cast<int>(ghost.label), d, base});
        }
    }

    DataSplits splits;
    SampleSet* sets[3] = {&splits.train, &splits.val, &splits.test};
    const int input_dim = config.pool_side * config.pool_side;
    for (int s = 0; s < 3; ++s) {
        auto& set = *sets[s];
        const int n = static_cast<int>(pending[s].size());
        set.inputs = Mat(n, input_dim);
        set.class_labels.resize(n);
        set.domain_labels.resize(n);
        set.base_index.resize(n);
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i) {
            const auto feat = featurize(pending[s][i].pixels, side, config.pool_side);
            std::copy(feat.begin(), feat.end(), set.inputs.row(i).begin());
        }
        for (int i = 0; i < n; ++i) {
            set.class_labels[i] = pending[s][i].cls;
            set.domain_labels[i] = pending[s][i].dom;
            set.base_index[i] = pending[s][i].base;
        }
    }

    int k = 0;
    for (const auto& rec : manifest.records) k = std::max(k, static_cast<int>(rec.label) + 1);
    splits.n_classes = k;
    return splits;
}

BalancedBatchSampler::BalancedBatchSampler(const SampleSet& data, int n_classes, int batch_size) {
    const int n_cells = n_classes * 2;
    if (batch_size % n_cells != 0)
        throw std::invalid_argument("BalancedBatchSampler: batch_size must be divisible by classes x domains");
    per_cell_ = batch_size / n_cells;

    cells_.assign(n_cells, {});
    for (int i = 0; i < data.size(); ++i)
        cells_[data.class_labels[i] * 2 + data.domain_labels[i]].push_back(i);
    for (const auto& cell : cells_)
        if (cell.empty()) throw std::invalid_argument("BalancedBatchSampler: empty (class, domain) cell");

    cursor_.assign(n_cells, 0);
    batches_per_epoch_ = std::max(1, (data.size() + batch_size - 1) / batch_size);
}

void BalancedBatchSampler::start_epoch(RandomStream& rng) {
    for (auto& cell : cells_) rng.shuffle(cell.begin(), cell.end());
    std::fill(cursor_.begin(), cursor_.end(), 0);
}

std::vector<int> BalancedBatchSampler::next_batch() {
    std::vector<int> batch;
    batch.reserve(cells_.size() * per_cell_);
    for (std::size_t c = 0; c < cells_.size(); ++c) {
        for (int t = 0; t < per_cell_; ++t) {
            batch.push_back(cells_[c][cursor_[c] % cells_[c].size()]);
            ++cursor_[c];
        }
    }
    return batch;
}

const std::vector<std::string>& ExperimentLog::csv_header() {
    static const std::vector<std::string> header = {
        "epoch",  "phase",   "lr",      "tau",    "train_loss", "val_loss", "val_auc_ovo",
        "analysis_loss", "cmmd_sq", "dcmmd_sq", "term_a", "term_b", "term_c", "residual"};
    return header;
}

void ExperimentLog::save(const std::filesystem::path& path) const {
    CsvWriter w(path, csv_header());
    for (const auto& r : rows) {
        w.write_row({std::to_string(r.epoch), r.phase, CsvWriter::format_double(r.lr),
                     CsvWriter::format_double(r.tau), CsvWriter::format_double(r.train_loss),
                     CsvWriter::format_double(r.val_loss), CsvWriter::format_double(r.val_auc_ovo),
                     CsvWriter::format_double(r.analysis_loss), CsvWriter::format_double(r.cmmd_sq),
                     CsvWriter::format_double(r.dcmmd_sq), CsvWriter::format_double(r.term_a),
                     CsvWriter::format_double(r.term_b), CsvWriter::format_double(r.term_c),
                     CsvWriter::format_double(r.residual)});
    }
    w.close();
}

ExperimentLog ExperimentLog::load(const std::filesystem::path& path) {
    const CsvTable table = read_csv(path, csv_header());
    ExperimentLog log;
    for (const auto& cells : table.rows) {
        LogRow r;
        r.epoch = std::stoi(cells[0]);
        r.phase = cells[1];
        r.lr = std::stod(cells[2]);
        r.tau = std::stod(cells[3]);
        r.train_loss = std::stod(cells[4]);
        r.val_loss = std::stod(cells[5]);
        r.val_auc_ovo = std::stod(cells[6]);
        r.analysis_loss = std::stod(cells[7]);
        r.cmmd_sq = std::stod(cells[8]);
        r.dcmmd_sq = std::stod(cells[9]);
        r.term_a = std::stod(cells[10]);
        r.term_b = std::stod(cells[11]);
        r.term_c = std::stod(cells[12]);
        r.residual = std::stod(cells[13]);
        log.rows.push_back(std::move(r));
    }
    return log;
}

SupConGradResult supcon_gradients(const FeatureMap& fm, const Mat& inputs, const std::vector<int>& labels,
                                  double tau) {
    ForwardCache cache;
    feature_forward(fm, inputs, &cache);
    const LossResult loss = sup_contrastive(cache.z, labels, tau);
    SupConGradResult out;
    out.loss = loss.value;
    out.fm = feature_backward(fm, cache, loss.grad_z);
    return out;
}

CeGradResult ce_gradients(const FeatureMap& fm, const LinearHead& head, const Mat& inputs,
                          const std::vector<int>& labels) {
    ForwardCache cache;
    feature_forward(fm, inputs, &cache);
    const Mat logits = head.logits(cache.z);
    const LossResult ce = cross_entropy(logits, labels);
    const HeadGrads hg = head_backward(head, cache.z, ce.grad_z);

    CeGradResult out;
    out.loss = ce.value;
    out.fm = feature_backward(fm, cache, hg.z);
    out.head_w = hg.w;
    out.head_b = hg.b;
    return out;
}

namespace {

void sgd_step_mat(Mat& param, const Mat& grad, double lr, double weight_decay) {
    for (std::size_t i = 0; i < param.a.size(); ++i) param.a[i] -= lr * (grad.a[i] + weight_decay * param.a[i]);
}

void sgd_step_vec(std::vector<double>& param, const std::vector<double>& grad, double lr) {
    for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
}

Mat gather_rows(const Mat& src, const std::vector<int>& ids) {
    Mat out(static_cast<int>(ids.size()), src.cols);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto from = src.row(ids[i]);
        std::copy(from.begin(), from.end(), out.row(static_cast<int>(i)).begin());
    }
    return out;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& src, const std::vector<int>& ids) {
    std::vector<T> out(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) out[i] = src[ids[i]];
    return out;
}

// Fixed balanced analysis subset of the training data, one per run; every
// epoch's decomposition row is computed on it.
std::vector<int> pick_analysis_ids(const SampleSet& train, int n_classes, int per_cell_cap, std::uint64_t seed) {
    std::vector<std::vector<int>> cells(static_cast<std::size_t>(n_classes) * 2);
    for (int i = 0; i < train.size(); ++i)
        cells[train.class_labels[i] * 2 + train.domain_labels[i]].push_back(i);

    int cell_min = train.size();
    for (const auto& cell : cells) cell_min = std::min(cell_min, static_cast<int>(cell.size()));
    if (cell_min < 2)
        throw std::runtime_error("train: a (class, domain) cell has fewer than 2 training samples");
    const int take = std::min(cell_min, per_cell_cap);

    RandomStream rng(splitmix64(seed ^ 0xaa11be57ULL));
    std::vector<int> ids;
    for (auto& cell : cells) {
        rng.shuffle(cell.begin(), cell.end());
        ids.insert(ids.end(), cell.begin(), cell.begin() + take);
    }
    return ids;
}

struct PhasePlan {
    const char* name;
    int epochs;
    bool update_feature_map;
    bool update_head;
    bool supcon_objective;
};

}  // namespace

TrainOutput train(const TrainConfig& config, const DataSplits& data) {
    config.validate();
    const int k = data.n_classes;
    if (k < 2) throw std::invalid_argument("train: need at least two classes");
    if (config.batch_size % (k * 2) != 0)
        throw std::invalid_argument("train: batch_size must be divisible by classes x domains");
    if (data.train.size() == 0 || data.val.size() == 0) throw std::invalid_argument("train: empty split");

    const int input_dim = data.train.inputs.cols;
    FeatureMap fm = FeatureMap::init(input_dim, config.hidden_dim, config.embed_dim, splitmix64(config.seed));
    LinearHead head = LinearHead::init(config.embed_dim, k, splitmix64(config.seed ^ 0x4ead0beefULL));

    std::vector<PhasePlan> phases;
    switch (config.strategy) {
        case Strategy::CE:
            phases.push_back({"ce", config.epochs, true, true, false});
            break;
        case Strategy::SupContrLCP:
            phases.push_back({"supcon", config.epochs, true, false, true});
            phases.push_back({"lcp", config.lcp_epochs, false, true, false});
            break;
        case Strategy::SupContrCE:
            phases.push_back({"supcon", config.epochs, true, false, true});
            phases.push_back({"lcp", config.lcp_epochs, false, true, false});
            phases.push_back({"ce", config.epochs, true, true, false});
            break;
    }

    const std::vector<int> analysis_ids =
        pick_analysis_ids(data.train, k, config.analysis_per_cell, config.seed);
    const Mat analysis_inputs = gather_rows(data.train.inputs, analysis_ids);
    const std::vector<int> analysis_cls = gather(data.train.class_labels, analysis_ids);
    const std::vector<int> analysis_dom = gather(data.train.domain_labels, analysis_ids);

    BalancedBatchSampler sampler(data.train, k, config.batch_size);
    RandomStream epoch_rng(splitmix64(config.seed ^ 0x0e90c45ULL));

    // the validation contrastive loss drops singleton classes (no positive
    // pair exists for them)
    std::vector<int> val_loss_ids;
    {
        std::vector<int> counts(k, 0);
        for (int c : data.val.class_labels) ++counts[c];
        for (int i = 0; i < data.val.size(); ++i)
            if (counts[data.val.class_labels[i]] >= 2) val_loss_ids.push_back(i);
        if (val_loss_ids.size() < 2) throw std::invalid_argument("train: validation split has no positive pairs");
    }
    const Mat val_inputs = gather_rows(data.val.inputs, val_loss_ids);
    const std::vector<int> val_cls = gather(data.val.class_labels, val_loss_ids);

    TrainOutput out;
    out.log.rows.reserve(64);

    int global_epoch = 0;
    for (const auto& phase : phases) {
        // track the phase-best parameters; they seed the next phase
        double best_metric = -1e300;
        FeatureMap best_fm = fm;
        LinearHead best_head = head;
        int best_epoch = global_epoch;

        for (int e = 0; e < phase.epochs; ++e, ++global_epoch) {
            const double lr = cosine_lr(config.base_lr, e, config.cosine_period);
            const double tau = config.temperature.at(e);

            sampler.start_epoch(epoch_rng);
            double loss_sum = 0.0;
            for (int b = 0; b < sampler.batches_per_epoch(); ++b) {
                const std::vector<int> ids = sampler.next_batch();
                const Mat xb = gather_rows(data.train.inputs, ids);
                const std::vector<int> yb = gather(data.train.class_labels, ids);

                double batch_loss;
                if (phase.supcon_objective) {
                    const SupConGradResult g = supcon_gradients(fm, xb, yb, tau);
                    batch_loss = g.loss;
                    if (phase.update_feature_map) {
                        sgd_step_mat(fm.w1, g.fm.w1, lr, config.weight_decay);
                        sgd_step_vec(fm.b1, g.fm.b1, lr);
                        sgd_step_mat(fm.w2, g.fm.w2, lr, config.weight_decay);
                        sgd_step_vec(fm.b2, g.fm.b2, lr);
                    }
                } else if (phase.update_feature_map) {
                    const CeGradResult g = ce_gradients(fm, head, xb, yb);
                    batch_loss = g.loss;
                    sgd_step_mat(fm.w1, g.fm.w1, lr, config.weight_decay);
                    sgd_step_vec(fm.b1, g.fm.b1, lr);
                    sgd_step_mat(fm.w2, g.fm.w2, lr, config.weight_decay);
                    sgd_step_vec(fm.b2, g.fm.b2, lr);
                    sgd_step_mat(head.w, g.head_w, lr, config.weight_decay);
                    sgd_step_vec(head.b, g.head_b, lr);
                } else {
                    // head only (linear classification protocol)
                    const Mat z = feature_forward(fm, xb);
                    const Mat logits = head.logits(z);
                    const LossResult ce = cross_entropy(logits, yb);
                    const HeadGrads hg = head_backward(head, z, ce.grad_z);
                    batch_loss = ce.value;
                    sgd_step_mat(head.w, hg.w, lr, config.weight_decay);
                    sgd_step_vec(head.b, hg.b, lr);
                }
                if (!std::isfinite(batch_loss))
                    throw std::runtime_error("train: loss diverged (non-finite) in phase " + std::string(phase.name) +
                                             " epoch " + std::to_string(global_epoch));
                loss_sum += batch_loss;
            }

            LogRow row;
            row.epoch = global_epoch;
            row.phase = phase.name;
            row.lr = lr;
            row.tau = tau;
            row.train_loss = loss_sum / sampler.batches_per_epoch();

            // epoch-end analysis on the fixed balanced subset
            EmbeddingBatch analysis;
            analysis.z = feature_forward(fm, analysis_inputs);
            analysis.class_labels = analysis_cls;
            analysis.domain_labels = analysis_dom;
            const DecompositionRecord rec = decompose(analysis, tau, LossKind::SupContrastive);
            row.analysis_loss = rec.loss;
            row.cmmd_sq = rec.cmmd_quarter * 4.0;
            row.term_a = rec.term_a;
            row.term_b = rec.term_b;
            row.term_c = rec.term_c;
            row.residual = rec.residual;
            row.dcmmd_sq = dcmmd_sq(analysis);

            // validation
            const Mat z_val = feature_forward(fm, data.val.inputs);
            const Mat val_scores = softmax_rows(head.logits(z_val));
            row.val_auc_ovo = auc_ovo(val_scores, data.val.class_labels, k);
            if (phase.supcon_objective)
                row.val_loss = sup_contrastive(feature_forward(fm, val_inputs), val_cls, tau).value;
            else
                row.val_loss = cross_entropy(head.logits(z_val), data.val.class_labels).value;

            const double metric = phase.supcon_objective ? -row.val_loss : row.val_auc_ovo;
            if (metric > best_metric) {
                best_metric = metric;
                best_fm = fm;
                best_head = head;
                best_epoch = global_epoch;
            }

            out.log.rows.push_back(std::move(row));
        }

        // contrastive practice trains the encoder for its full schedule; the
        // best-validation rollback applies to the classifier phases
        if (!phase.supcon_objective) {
            fm = best_fm;
            head = best_head;
            out.best_epoch = best_epoch;
            out.best_val_auc_ovo = best_metric;
        }
    }

    out.feature_map = std::move(fm);
    out.head = std::move(head);
    return out;
}

Mat softmax_rows(const Mat& logits) {
    Mat out(logits.rows, logits.cols);
    for (int i = 0; i < logits.rows; ++i) {
        double mx = logits(i, 0);
        for (int c = 1; c < logits.cols; ++c) mx = std::max(mx, logits(i, c));
        double sum = 0.0;
        for (int c = 0; c < logits.cols; ++c) {
            out(i, c) = std::exp(logits(i, c) - mx);
            sum += out(i, c);
        }
        for (int c = 0; c < logits.cols; ++c) out(i, c) /= sum;
    }
    return out;
}

double auc_binary(const std::vector<double>& scores, const std::vector<int>& is_positive) {
    const int n = static_cast<int>(scores.size());
    long n_pos = 0;
    for (int p : is_positive) n_pos += p;
    const long n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("auc_binary: need both classes present");

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] < scores[b]; });

    // average ranks over tie runs
    std::vector<double> rank(n, 0.0);
    int i = 0;
    while (i < n) {
        int j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + j) / 2.0 + 1.0;
        for (int t = i; t <= j; ++t) rank[order[t]] = avg;
        i = j + 1;
    }

    double rank_sum = 0.0;
    for (int t = 0; t < n; ++t)
        if (is_positive[t]) rank_sum += rank[t];
    const double u = rank_sum - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
    return u / (static_cast<double>(n_pos) * n_neg);
}

double auc_ovo(const Mat& scores, const std::vector<int>& labels, int n_classes) {
    double total = 0.0;
    int pairs = 0;
    for (int a = 0; a < n_classes; ++a) {
        for (int b = a + 1; b < n_classes; ++b) {
            std::vector<double> sa, sb;
            std::vector<int> pa, pb;
            for (int i = 0; i < scores.rows; ++i) {
                if (labels[i] != a && labels[i] != b) continue;
                sa.push_back(scores(i, a));
                pa.push_back(labels[i] == a ? 1 : 0);
                sb.push_back(scores(i, b));
                pb.push_back(labels[i] == b ? 1 : 0);
            }
            total += 0.5 * (auc_binary(sa, pa) + auc_binary(sb, pb));
            ++pairs;
        }
    }
    return total / pairs;
}

double auc_ovr(const Mat& scores, const std::vector<int>& labels, int n_classes) {
    double total = 0.0;
    for (int c = 0; c < n_classes; ++c) {
        std::vector<double> s(scores.rows);
        std::vector<int> p(scores.rows);
        for (int i = 0; i < scores.rows; ++i) {
            s[i] = scores(i, c);
            p[i] = labels[i] == c ? 1 : 0;
        }
        total += auc_binary(s, p);
    }
    return total / n_classes;
}

EvalMetrics evaluate(const FeatureMap& fm, const LinearHead& head, const SampleSet& test, int n_classes) {
    if (test.size() == 0) throw std::invalid_argument("evaluate: empty test set");
    std::vector<int> class_seen(n_classes, 0);
    for (int y : test.class_labels) class_seen.at(y) = 1;
    for (int c = 0; c < n_classes; ++c)
        if (!class_seen[c]) throw std::invalid_argument("evaluate: class " + std::to_string(c) + " absent from test set");

    // both domain versions of every base patch must be present
    std::map<std::uint64_t, int> domains_seen;
    for (int i = 0; i < test.size(); ++i) domains_seen[test.base_index[i]] |= 1 << test.domain_labels[i];
    for (const auto& [base, mask] : domains_seen)
        if (mask != 3)
            throw std::invalid_argument("evaluate: test set is missing a domain version of base patch " +
                                        std::to_string(base));

    const Mat z = feature_forward(fm, test.inputs);
    const Mat logits = head.logits(z);
    const Mat scores = softmax_rows(logits);

    EvalMetrics metrics;
    long correct = 0;
    for (int i = 0; i < test.size(); ++i) {
        int arg = 0;
        for (int c = 1; c < n_classes; ++c)
            if (scores(i, c) > scores(i, arg)) arg = c;
        if (arg == test.class_labels[i]) ++correct;
    }
    metrics.accuracy = static_cast<double>(correct) / test.size();
    metrics.auc_ovo = auc_ovo(scores, test.class_labels, n_classes);
    metrics.auc_ovr = auc_ovr(scores, test.class_labels, n_classes);

    EmbeddingBatch batch;
    batch.z = z;
    batch.class_labels = test.class_labels;
    batch.domain_labels = test.domain_labels;
    metrics.cmmd_sq = cmmd_sq(batch);
    metrics.dcmmd_sq = dcmmd_sq(batch);
    return metrics;
}

namespace {

constexpr char kMagic[4] = {'C', 'T', 'D', 'A'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_u32(std::ofstream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
std::uint32_t read_u32(std::ifstream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
void write_block(std::ofstream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}
void read_block(std::ifstream& in, std::vector<double>& v) {
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const FeatureMap& fm, const LinearHead& head) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
    out.write(kMagic, 4);
    write_u32(out, kCheckpointVersion);
    write_u32(out, static_cast<std::uint32_t>(fm.input_dim));
    write_u32(out, static_cast<std::uint32_t>(fm.hidden_dim));
    write_u32(out, static_cast<std::uint32_t>(fm.embed_dim));
    write_u32(out, static_cast<std::uint32_t>(head.w.rows));
    write_block(out, fm.w1.a);
    write_block(out, fm.b1);
    write_block(out, fm.w2.a);
    write_block(out, fm.b2);
    write_block(out, head.w.a);
    write_block(out, head.b);
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

void load_checkpoint(const std::filesystem::path& path, FeatureMap& fm, LinearHead& head) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("load_checkpoint: bad magic");
    if (read_u32(in) != kCheckpointVersion) throw std::runtime_error("load_checkpoint: unsupported version");
    const int input_dim = static_cast<int>(read_u32(in));
    const int hidden_dim = static_cast<int>(read_u32(in));
    const int embed_dim = static_cast<int>(read_u32(in));
    const int n_classes = static_cast<int>(read_u32(in));

    fm.input_dim = input_dim;
    fm.hidden_dim = hidden_dim;
    fm.embed_dim = embed_dim;
    fm.w1 = Mat(hidden_dim, input_dim);
    fm.b1.assign(hidden_dim, 0.0);
    fm.w2 = Mat(embed_dim, hidden_dim);
    fm.b2.assign(embed_dim, 0.0);
    head.w = Mat(n_classes, embed_dim);
    head.b.assign(n_classes, 0.0);

    read_block(in, fm.w1.a);
    read_block(in, fm.b1);
    read_block(in, fm.w2.a);
    read_block(in, fm.b2);
    read_block(in, head.w.a);
    read_block(in, head.b);
    if (!in) throw std::runtime_error("load_checkpoint: truncated checkpoint " + path.string());
}

}  // namespace ctda
