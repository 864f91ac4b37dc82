#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ctda/kernels.hpp"
#include "ctda/losses.hpp"
#include "ctda/mat.hpp"
#include "ctda/rng.hpp"
#include "ctda/synthgen.hpp"

namespace ctda {

// Block-average pooling to target_side x target_side followed by per-image
// standardization (variance floor 1e-8; degenerate images map to zeros).
std::vector<double> featurize(const std::vector<double>& pixels, int side, int target_side);
std::vector<double> featurize(const Patch& patch, int target_side);

// Two affine layers with a rectifier between, ending in row-wise unit
// normalization (norm floored at 1e-8).
struct FeatureMap {
    int input_dim = 0;
    int hidden_dim = 0;
    int embed_dim = 0;
    Mat w1;                  // hidden x input
    std::vector<double> b1;  // hidden
    Mat w2;                  // embed x hidden
    std::vector<double> b2;  // embed

    static FeatureMap init(int input_dim, int hidden_dim, int embed_dim, std::uint64_t seed);
    long parameter_count() const;

    static constexpr double kNormFloor = 1e-8;
};

struct ForwardCache {
    Mat inputs;
    Mat h_pre;
    Mat h;
    Mat a;
    std::vector<double> norms;
    Mat z;
};

// Returns unit-norm embeddings (n x embed_dim); fills the cache when given.
Mat feature_forward(const FeatureMap& fm, const Mat& inputs, ForwardCache* cache = nullptr);

struct FeatureMapGrads {
    Mat w1;
    std::vector<double> b1;
    Mat w2;
    std::vector<double> b2;
};

// Backpropagates a gradient w.r.t. the unit-norm embeddings through the
// normalization head and both layers.
FeatureMapGrads feature_backward(const FeatureMap& fm, const ForwardCache& cache, const Mat& grad_z);

struct LinearHead {
    Mat w;                  // classes x embed
    std::vector<double> b;  // classes

    static LinearHead init(int embed_dim, int n_classes, std::uint64_t seed);
    Mat logits(const Mat& z) const { return affine_forward(z, w, b); }
};

struct HeadGrads {
    Mat w;
    std::vector<double> b;
    Mat z;  // gradient passed down to the embeddings
};

HeadGrads head_backward(const LinearHead& head, const Mat& z, const Mat& grad_logits);

// lr(epoch) = base * (1 + cos(pi * (epoch mod T) / T)) / 2
double cosine_lr(double base_lr, int epoch, int period);

struct TemperatureSchedule {
    enum class Kind { Constant, Staged };
    Kind kind = Kind::Constant;
    double start = 0.5;
    int hold_epochs = 0;
    int decay_epochs = 0;
    double end_value = 0.1;

    double at(int epoch) const;
    void validate() const;
};

enum class Strategy { CE, SupContrLCP, SupContrCE };
const char* to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

struct TrainConfig {
    Strategy strategy = Strategy::SupContrLCP;
    int epochs = 100;
    int lcp_epochs = 20;
    double base_lr = 1e-3;
    double weight_decay = 1e-4;
    int cosine_period = 4;
    int batch_size = 30;
    TemperatureSchedule temperature;
    std::uint64_t seed = 0;
    int pool_side = 16;
    int hidden_dim = 128;
    int embed_dim = 32;
    double val_fraction = 0.15;
    double test_fraction = 0.15;
    int analysis_per_cell = 16;
    bool augment_train = false;  // flip/rotation expansion of the training split

    void validate() const;
};

struct SampleSet {
    Mat inputs;
    std::vector<int> class_labels;
    std::vector<int> domain_labels;
    std::vector<std::uint64_t> base_index;

    int size() const { return inputs.rows; }
};

struct DataSplits {
    SampleSet train;
    SampleSet val;
    SampleSet test;  // both domain versions of every held-out base patch
    int n_classes = 0;
};

// Case-level split of a generated dataset: base patches are partitioned into
// train/val/test; the test set gets both domain versions of each base patch
// (the missing one is re-synthesized from the manifest for mixed datasets).
DataSplits prepare_splits(const Manifest& manifest, const std::filesystem::path& dataset_dir,
                          const TrainConfig& config);

// Emits batches with exactly batch_size/(K*2) samples per (class, domain)
// cell, cycling through each cell (short cells are oversampled).
class BalancedBatchSampler {
  public:
    BalancedBatchSampler(const SampleSet& data, int n_classes, int batch_size);

    int batches_per_epoch() const { return batches_per_epoch_; }
    void start_epoch(RandomStream& rng);
    std::vector<int> next_batch();

  private:
    std::vector<std::vector<int>> cells_;
    std::vector<std::size_t> cursor_;
    int per_cell_ = 0;
    int batches_per_epoch_ = 0;
};

struct LogRow {
    int epoch = 0;
    std::string phase;
    double lr = 0.0;
    double tau = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_auc_ovo = 0.0;
    double analysis_loss = 0.0;
    double cmmd_sq = 0.0;
    double dcmmd_sq = 0.0;
    double term_a = 0.0;
    double term_b = 0.0;
    double term_c = 0.0;
    double residual = 0.0;
};

struct ExperimentLog {
    std::vector<LogRow> rows;

    static const std::vector<std::string>& csv_header();
    void save(const std::filesystem::path& path) const;
    static ExperimentLog load(const std::filesystem::path& path);
};

struct TrainOutput {
    FeatureMap feature_map;
    LinearHead head;
    ExperimentLog log;
    int best_epoch = 0;
    double best_val_auc_ovo = 0.0;
};

TrainOutput train(const TrainConfig& config, const DataSplits& data);

struct EvalMetrics {
    double accuracy = 0.0;
    double auc_ovo = 0.0;
    double auc_ovr = 0.0;
    double cmmd_sq = 0.0;
    double dcmmd_sq = 0.0;
};

// Multiclass metrics over softmax scores plus discrepancies of the test
// embeddings. The test set must contain both domains of every base patch and
// at least one sample of every class.
EvalMetrics evaluate(const FeatureMap& fm, const LinearHead& head, const SampleSet& test, int n_classes);

// Rank-based AUC with average ranks on ties.
double auc_binary(const std::vector<double>& scores, const std::vector<int>& is_positive);
double auc_ovo(const Mat& scores, const std::vector<int>& labels, int n_classes);
double auc_ovr(const Mat& scores, const std::vector<int>& labels, int n_classes);

Mat softmax_rows(const Mat& logits);

// Little-endian binary checkpoint: magic, dims, row-major f64 blocks.
void save_checkpoint(const std::filesystem::path& path, const FeatureMap& fm, const LinearHead& head);
void load_checkpoint(const std::filesystem::path& path, FeatureMap& fm, LinearHead& head);

// Shared by the trainer and the gradient tests.
struct SupConGradResult {
    double loss = 0.0;
    FeatureMapGrads fm;
};
SupConGradResult supcon_gradients(const FeatureMap& fm, const Mat& inputs, const std::vector<int>& labels,
                                  double tau);

struct CeGradResult {
    double loss = 0.0;
    FeatureMapGrads fm;
    Mat head_w;
    std::vector<double> head_b;
};
CeGradResult ce_gradients(const FeatureMap& fm, const LinearHead& head, const Mat& inputs,
                          const std::vector<int>& labels);

}  // namespace ctda
