#include "mixseg/train.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mixseg/ops.hpp"

namespace mixseg {

namespace {

Sample prepare_sample(Sample s, bool do_augment, const AugmentOptions& aug, const ChannelStats& stats,
                      std::uint64_t sample_seed) {
    if (do_augment) {
        Rng rng(sample_seed);
        s = augment(s, rng, aug);
    }
    if (!stats.mean.empty()) {
        s = normalize(s, stats);
    }
    return s;
}

std::string fmt_epoch_row(const EpochRecord& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6g,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f", r.epoch,
                  r.train_loss, r.lr, r.val.ac, r.val.se, r.val.sp, r.val.pc, r.val.f1, r.val.js);
    return buf;
}

}  // namespace

std::pair<TensorPtr<float>, TensorPtr<float>> assemble_batch(
    const Dataset& data, const std::vector<std::size_t>& indices, bool do_augment,
    const AugmentOptions& aug, const ChannelStats& stats, std::uint64_t stream_key) {
    if (indices.empty()) {
        throw DataError("assemble_batch: empty index list");
    }
    const auto b = static_cast<std::int64_t>(indices.size());
    std::vector<Sample> prepared(indices.size());
    parallel_for(b, [&](std::int64_t i) {
        prepared[static_cast<std::size_t>(i)] =
            prepare_sample(data.get(indices[static_cast<std::size_t>(i)]), do_augment, aug, stats,
                           mix_seed(stream_key, indices[static_cast<std::size_t>(i)], 0x5eedULL));
    });
    const std::int64_t h = prepared[0].height();
    const std::int64_t w = prepared[0].width();
    const std::int64_t c = prepared[0].channels();
    auto images = make_zeros<float>({b, h, w, c});
    auto masks = make_zeros<float>({b, h, w, 1});
    for (std::int64_t i = 0; i < b; ++i) {
        const auto& s = prepared[static_cast<std::size_t>(i)];
        if (s.height() != h || s.width() != w || s.channels() != c) {
            throw ShapeError("assemble_batch: sample " + s.source_id + " has shape " +
                             shape_str(s.image.shape) + ", batch expects " +
                             shape_str({h, w, c}));
        }
        std::memcpy(images->data.data() + i * h * w * c, s.image.data.data(),
                    sizeof(float) * static_cast<std::size_t>(h * w * c));
        std::memcpy(masks->data.data() + i * h * w, s.mask.data.data(),
                    sizeof(float) * static_cast<std::size_t>(h * w));
    }
    return {images, masks};
}

ConfusionCounts evaluate_dataset(Network<float>& net, const Dataset& data, int batch_size,
                                 double threshold, const ChannelStats& stats) {
    ConfusionCounts counts;
    std::vector<std::size_t> batch;
    for (std::size_t i = 0; i < data.size(); i += static_cast<std::size_t>(batch_size)) {
        batch.clear();
        for (std::size_t j = i; j < std::min(data.size(), i + static_cast<std::size_t>(batch_size));
             ++j) {
            batch.push_back(j);
        }
        auto [images, masks] = assemble_batch(data, batch, false, {}, stats, 0);
        Tape<float> tape(false);
        auto probs = net.forward(tape, images, false);
        counts += confusion_counts(binarize(*probs, threshold), *masks);
    }
    return counts;
}

TrainResult train(Network<float>& net, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, const Checkpoint* resume) {
    if (cfg.epochs < 1 || cfg.batch_size < 1) {
        throw ConfigError("train: epochs and batch_size must be >= 1");
    }
    if (cfg.lr <= 0) {
        throw ConfigError("train: lr must be positive");
    }
    if (train_set.size() == 0 || val_set.size() == 0) {
        throw DataError("train: training and validation sets must be non-empty");
    }
    std::filesystem::create_directories(cfg.out_dir);

    AdamOptimizer<float> opt;
    PlateauSchedule sched;
    sched.lr = cfg.lr;
    Rng master(cfg.seed);
    int start_epoch = 0;

    if (resume) {
        restore_network(*resume, net);
        restore_optimizer(*resume, net, opt);
        restore_schedule(*resume, sched);
        master.deserialize(resume->rng_state);
        start_epoch = resume->epoch;
    } else {
        opt.bind(net.named_params());
    }

    TrainResult result;
    result.best_path = cfg.out_dir + "/checkpoint.best.mixseg";
    result.last_path = cfg.out_dir + "/checkpoint.last.mixseg";
    result.history_path = cfg.out_dir + "/history.csv";

    std::ofstream history(result.history_path,
                          start_epoch == 0 ? std::ios::trunc : std::ios::app);
    if (!history) {
        throw DataError("cannot write history file " + result.history_path);
    }
    if (start_epoch == 0) {
        history << "epoch,train_loss,lr,val_AC,val_SE,val_SP,val_PC,val_F1,val_JS\n";
    }

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const std::uint64_t epoch_key = master.next_u64();

        // Deterministic in-place shuffle from the per-epoch stream.
        Rng shuffle_rng(mix_seed(epoch_key, 0x0ddULL));
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.below(i))]);
        }

        opt.lr = sched.lr;
        double loss_sum = 0.0;
        std::int64_t batches = 0;
        std::vector<std::size_t> batch;
        for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(cfg.batch_size)) {
            batch.assign(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() +
                             static_cast<std::ptrdiff_t>(
                                 std::min(order.size(), i + static_cast<std::size_t>(cfg.batch_size))));
            auto [images, masks] = assemble_batch(train_set, batch, cfg.augment, cfg.aug, cfg.stats,
                                                  epoch_key);
            Tape<float> tape;
            auto probs = net.forward(tape, images, true);
            auto loss = bce_loss(tape, probs, masks);
            const double loss_value = static_cast<double>(loss->data[0]);
            if (!std::isfinite(loss_value)) {
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                                   "; last good checkpoint retained at " + result.last_path);
            }
            tape.backward(loss);
            opt.step();
            loss_sum += loss_value;
            batches += 1;
        }
        const double train_loss = loss_sum / static_cast<double>(batches);

        auto counts = evaluate_dataset(net, val_set, cfg.batch_size, cfg.threshold, cfg.stats);
        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.train_loss = train_loss;
        rec.lr = sched.lr;  // the rate this epoch actually used
        rec.val = compute_metrics(counts);
        sched.update(train_loss);
        result.history.push_back(rec);
        history << fmt_epoch_row(rec) << "\n";
        history.flush();

        auto ckpt = snapshot(net, &opt, &sched, epoch + 1, master.serialize());
        save_checkpoint(ckpt, result.last_path);
        if (rec.val.f1 > result.best_val_f1) {
            result.best_val_f1 = rec.val.f1;
            result.best_epoch = rec.epoch;
            save_checkpoint(ckpt, result.best_path);
        }
        if (cfg.verbose) {
            std::printf("epoch %d/%d  train_loss %.6f  lr %.6g  val_F1 %.4f\n", rec.epoch, cfg.epochs,
                        rec.train_loss, rec.lr, rec.val.f1);
            std::fflush(stdout);
        }
    }
    return result;
}

}  // namespace mixseg
