#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pyag/checkpoint.hpp"
#include "pyag/config.hpp"
#include "pyag/datakit.hpp"
#include "pyag/losses.hpp"
#include "pyag/metrics.hpp"
#include "pyag/model.hpp"

namespace pyag {

/// A preprocessed image ready for the network, with its supervision and optional dense truth.
struct PreparedSample {
    std::string subject;
    int index = 0;
    Tensor image;  // 1×ch×H×W
    std::optional<Grid<std::int32_t>> supervision;
    std::optional<Grid<std::int32_t>> truth;
};

/// Per-subject normalization plus crop/pad, following `data` settings.
std::vector<PreparedSample> prepare_samples(const std::vector<datakit::Sample>& samples, const DataConfig& data);

std::vector<PreparedSample> select_subjects(const std::vector<PreparedSample>& all,
                                            const std::vector<std::string>& ids);

struct PreparedSplits {
    datakit::DatasetSplit ids;
    std::vector<PreparedSample> train, val, test;
    int num_classes = 0;
};

/// Loads `data.dir`, splits subjects by `data.split_seed`/`data.fractions` and prepares each part.
PreparedSplits load_splits(const DataConfig& data, int num_classes = 0);

struct StepRecord {
    int step = 0;
    losses::LossBreakdown loss;
};

struct ValidationRecord {
    int step = 0;
    double mean_foreground_dice = 0;
};

struct TrainResult {
    std::filesystem::path best_checkpoint;
    std::filesystem::path last_checkpoint;
    std::vector<StepRecord> steps;
    std::vector<ValidationRecord> validations;
    double best_val_dice = -1;
    int ratio_violations = 0;
};

struct TrainOptions {
    std::filesystem::path out_dir;
    std::optional<std::filesystem::path> resume_from;
    // Called after every optimizer step; return false to stop early (the "last" checkpoint
    // is still written).
    std::function<bool(const StepRecord&)> on_step;
};

/// Adam on L = L_PCE + a·L_reg, regularizer chosen by config.method (pce_only has a ≡ 0).
/// Writes `log.csv`, `summary.json`, `best.ckpt` (by validation mean foreground Dice) and
/// `last.ckpt` under out_dir. Deterministic for a given config.
TrainResult train(const TrainConfig& config, const std::vector<PreparedSample>& train_set,
                  const std::vector<PreparedSample>& val_set, const TrainOptions& options);

/// Indices of the training batch used at a given step: seeded per-epoch shuffles, the
/// short final batch of an epoch kept.
std::vector<std::size_t> batch_indices(std::size_t dataset_size, int batch_size, std::uint64_t seed, std::int64_t step);

/// Raises if the self-consistency gradient reaches any depth-0 head parameter. Leaves the
/// model's parameters, gradients and running statistics as they were.
void check_gradient_routing(UNet& model, const Tensor& probe, const losses::LossConfig& loss);

Tensor stack_images(const std::vector<PreparedSample>& samples, const std::vector<std::size_t>& idx);

Grid<std::int32_t> argmax_classes(const Tensor& probs, int b);

/// Argmax decode of the final prediction, then the per-class report.
metrics::MetricsReport evaluate(UNet& model, const std::vector<PreparedSample>& samples);
metrics::MetricsReport evaluate(const std::filesystem::path& checkpoint, const std::vector<PreparedSample>& samples);

struct PredictOptions {
    bool write_aux = false;
};

struct PredictOutcome {
    std::vector<std::filesystem::path> written;
    std::vector<std::string> errors;  // per-file failures; the batch continues past them
};

/// Writes `<out>/<subject>/pred_<k>.png` (and `aux<d>_<k>.png` when requested).
PredictOutcome predict(const std::filesystem::path& checkpoint, const std::vector<PreparedSample>& samples,
                       const std::filesystem::path& out_dir, const PredictOptions& options = {});

std::string loss_csv_header(int depth);
std::string loss_csv_row(const StepRecord& r, int depth);

}  // namespace pyag
