#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "granet/dataset.hpp"
#include "granet/ini.hpp"
#include "granet/metrics.hpp"
#include "granet/network.hpp"

namespace granet::train {

using ad::Tensor;

struct TrainConfig {
    double lr0 = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t batch_size = 4;
    double decay_factor = 0.7;
    std::size_t decay_step_epochs = 100;
    std::size_t max_epochs = 1000;
    std::vector<double> class_weights;  // empty: unweighted
    std::uint64_t seed = 1;

    void validate() const;
    void write_to(IniDocument& doc, const std::string& section = "train") const;
    static TrainConfig read_from(const IniDocument& doc, const std::string& section = "train");
};

// lr0 * decay_factor ^ floor(epoch / decay_step_epochs), epoch counted from 0.
double lr_schedule(std::size_t epoch, const TrainConfig& config);

// Mean over points of -w[y] log softmax(scores)[y].
Tensor cross_entropy_loss(const Tensor& scores, std::span<const std::size_t> labels,
                          std::span<const double> class_weights = {});

// Inverse-frequency weights normalized to mean 1 over the classes present.
std::vector<double> inverse_frequency_weights(const data::BlockSet& set, std::size_t class_count);

struct OptimizerState {
    std::vector<std::vector<double>> m, v;
    std::uint64_t step = 0;
};

// Bias-corrected Adam update from the gradients held by `params`.
void adam_step(std::span<const Tensor> params, OptimizerState& state, const TrainConfig& config, double lr);

struct EvalResult {
    double loss = 0.0;
    metrics::ConfusionMatrix confusion;
    metrics::MetricsReport report;
};

// Inference-mode pass over a labeled block set; metrics count each block's
// leading `scored` points.
EvalResult validate(const net::GraNetModel& model, const data::BlockSet& set,
                    std::span<const double> class_weights = {});

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_oa = 0.0;
    bool checkpoint_saved = false;
};

std::string format_log_line(const EpochRecord& r);

struct TrainOptions {
    std::optional<std::filesystem::path> checkpoint_path;  // best-validation checkpoint
    std::optional<std::filesystem::path> log_path;
    // Called after each epoch; returning false ends training.
    std::function<bool(const EpochRecord&)> on_epoch;
    // Called with the permutation of block indices used for each epoch.
    std::function<void(std::size_t epoch, const std::vector<std::size_t>&)> on_order;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    std::size_t checkpoints_saved = 0;
    double best_val_loss = 0.0;
};

// Epoch loop: seeded shuffle, batches of batch_size blocks, Adam, then a
// validation pass (on `val`, or on the training blocks when `val` is empty).
TrainResult train(net::GraNetModel& model, const data::BlockSet& train_set, const data::BlockSet& val,
                  const TrainConfig& config, const TrainOptions& options = {});

} // namespace granet::train
