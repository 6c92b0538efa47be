#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "ggnet/checkpoint.hpp"
#include "ggnet/decoder.hpp"
#include "ggnet/evaluator.hpp"
#include "ggnet/losses.hpp"
#include "ggnet/synth.hpp"

namespace ggnet {

struct TrainConfig {
    // model
    int channels = 16;
    int actpoints = 25;
    int stride = 4;
    bool gaze1 = true;
    bool gaze2 = true;
    bool hna = true;
    bool apm = true;  // false: one regressor shared by all verbs
    std::string weight_activation = "raw";
    // optimisation
    double lr = 1.5e-4;
    int batch_size = 8;
    int epochs = 30;
    int decay_epoch = 22;
    double decay_factor = 0.1;
    std::uint64_t seed = 1;
    double val_fraction = 0.1;
    // loss
    double lambda1 = 0.1;
    double lambda2 = 0.1;
    double alpha = 2;
    double beta = 7;
    double gamma = 4;
    double min_overlap = 0.7;
    // decoding
    int topk = 100;
    std::string match_norm = "l1";

    /// Clears gaze2 when gaze1 is off and checks ranges.
    void normalize();
    [[nodiscard]] ModelConfig model_config(int verbs, int objects, int height, int width) const;
    [[nodiscard]] LossConfig loss_config() const;
    [[nodiscard]] DecoderConfig decoder_config() const;
    /// Learning rate in effect during `epoch` (0-based).
    [[nodiscard]] double lr_at(int epoch) const { return epoch >= decay_epoch ? lr * decay_factor : lr; }
};

/// Unknown keys are ConfigError.
TrainConfig parse_train_config(std::istream& is);
TrainConfig load_train_config(const std::filesystem::path& path);
void write_train_config(std::ostream& os, const TrainConfig& cfg);

/// Worker threads for per-image work: GGNET_THREADS when set, else the
/// hardware concurrency. Results never depend on this value.
int worker_threads();

/// Runs fn(i) for i in [0, count) across up to `threads` workers.
void parallel_for(int count, int threads, const std::function<void(int)>& fn);

/// Loss and flattened parameter gradient for one image.
struct ImageGradient {
    LossTerms terms;
    VectorX<float> grad;
};

ImageGradient image_gradient(const Sample& s, const ModelParams<float>& p, const ModelConfig& mc,
                             const HoiCategoryTable& table, const LossConfig& lc);

/// Decoded triplets for every sample, keyed by sample id.
TripletMap predict(const std::vector<Sample>& samples, const ModelParams<float>& p, const ModelConfig& mc,
                   const HoiCategoryTable& table, const DecoderConfig& dc, int threads = 1);

AnnotationMap ground_truth(const std::vector<Sample>& samples);

struct EpochLog {
    int epoch = 0;
    double lr = 0;
    double train_loss = 0;
    double val_map = 0;
    std::size_t skipped_steps = 0;
};

struct TrainResult {
    Checkpoint best;  // parameters at the best validation epoch
    int best_epoch = -1;
    double best_val_map = 0;
    std::vector<EpochLog> log;
    std::size_t skipped_steps = 0;
    Metrics test_metrics;  // DT and KO metrics of `best` on the test split
};

/// Splits train into (train, val) with `val_fraction` held out, seeded.
std::pair<std::vector<Sample>, std::vector<Sample>> split_validation(const std::vector<Sample>& train, double fraction,
                                                                     std::uint64_t seed);

using EpochCallback = std::function<void(const EpochLog&)>;

/// Trains on ds.train and evaluates the best checkpoint on ds.test.
TrainResult train(const Dataset& ds, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Writes checkpoint.ggt/.manifest, config.txt, train_log.txt, metrics.txt and metrics.json.
void save_training(const std::filesystem::path& out_dir, const TrainConfig& cfg, const TrainResult& r);

} // namespace ggnet
