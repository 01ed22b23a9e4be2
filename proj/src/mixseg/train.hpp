#pragma once

#include <memory>

#include "mixseg/checkpoint.hpp"
#include "mixseg/data.hpp"
#include "mixseg/metrics.hpp"

namespace mixseg {

// Index-addressable sample source; patch datasets materialize lazily so half
// a million 48x48 windows never live in memory at once.
class Dataset {
public:
    virtual ~Dataset() = default;
    virtual std::size_t size() const = 0;
    virtual Sample get(std::size_t index) const = 0;
};

class VectorDataset : public Dataset {
public:
    explicit VectorDataset(std::vector<Sample> samples) : samples_(std::move(samples)) {}
    std::size_t size() const override { return samples_.size(); }
    Sample get(std::size_t index) const override { return samples_.at(index); }

private:
    std::vector<Sample> samples_;
};

class PatchDataset : public Dataset {
public:
    PatchDataset(std::shared_ptr<const std::vector<Sample>> sources, std::vector<PatchRef> refs,
                 std::int64_t patch_size)
        : sources_(std::move(sources)), refs_(std::move(refs)), patch_size_(patch_size) {}
    std::size_t size() const override { return refs_.size(); }
    Sample get(std::size_t index) const override {
        return materialize_patch(*sources_, refs_.at(index), patch_size_);
    }

private:
    std::shared_ptr<const std::vector<Sample>> sources_;
    std::vector<PatchRef> refs_;
    std::int64_t patch_size_;
};

struct TrainConfig {
    int epochs = 50;
    int batch_size = 4;
    double lr = 1e-3;
    std::uint64_t seed = 42;
    bool augment = true;
    AugmentOptions aug{};
    ChannelStats stats;  // applied after augmentation; empty means identity
    double threshold = 0.5;
    std::string out_dir = "out";
    bool verbose = true;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0;
    double lr = 0;
    MetricsReport val;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    int best_epoch = -1;
    double best_val_f1 = -1.0;
    std::string best_path;
    std::string last_path;
    std::string history_path;
};

// Assembles (b,h,w,c)/(b,h,w,1) batch tensors from dataset indices, with
// per-index augmentation streams and optional normalization.
std::pair<TensorPtr<float>, TensorPtr<float>> assemble_batch(
    const Dataset& data, const std::vector<std::size_t>& indices, bool augment,
    const AugmentOptions& aug, const ChannelStats& stats, std::uint64_t stream_key);

// Eval-mode forward over a dataset, tallying confusion counts at `threshold`.
ConfusionCounts evaluate_dataset(Network<float>& net, const Dataset& data, int batch_size,
                                 double threshold, const ChannelStats& stats);

// Epoch loop per the training protocol: shuffled mini-batches, BCE + Adam,
// plateau schedule on the epoch training loss, history CSV, best-val-F1 and
// last-epoch checkpoints. `resume` restores parameters, optimizer, schedule,
// epoch counter, and RNG stream before continuing up to cfg.epochs.
TrainResult train(Network<float>& net, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, const Checkpoint* resume = nullptr);

}  // namespace mixseg
