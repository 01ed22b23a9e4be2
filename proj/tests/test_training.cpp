#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mixseg/gradcheck.hpp"
#include "mixseg/ops.hpp"
#include "mixseg/train.hpp"
#include "support/test_util.hpp"

using namespace mixseg;
namespace fs = std::filesystem;

namespace {

fs::path make_temp_dir(const std::string& tag) {
    auto dir = fs::temp_directory_path() / ("mixseg_train_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Sample blob_sample(std::int64_t h, std::int64_t w, Rng& rng) {
    Sample s;
    s.image = Tensor<float>::zeros({h, w, 1});
    s.mask = Tensor<float>::zeros({h, w, 1});
    const std::int64_t cy = 3 + static_cast<std::int64_t>(rng.below(h - 6));
    const std::int64_t cx = 3 + static_cast<std::int64_t>(rng.below(w - 6));
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            const double d = std::hypot(double(y - cy), double(x - cx));
            s.image.data[static_cast<std::size_t>(y * w + x)] =
                static_cast<float>(std::exp(-d / 3.0) + 0.05 * rng.uniform());
            s.mask.data[static_cast<std::size_t>(y * w + x)] = d < 4.0 ? 1.0f : 0.0f;
        }
    }
    s.source_id = "blob" + std::to_string(rng.next_u64() % 1000);
    return s;
}

std::vector<Sample> blob_set(int n, std::int64_t side, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Sample> out;
    for (int i = 0; i < n; ++i) out.push_back(blob_sample(side, side, rng));
    return out;
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("adam: zero gradients leave parameters unchanged and bump the step") {
    auto p = make_tensor<double>({3}, {1.0, -2.0, 0.5}, true);
    p->ensure_grad();
    AdamOptimizer<double> opt;
    opt.bind({{"p", p}});
    opt.step();
    CHECK(p->data == std::vector<double>{1.0, -2.0, 0.5});
    CHECK(opt.step_count() == 1);
}

TEST_CASE("adam: bias-corrected first step moves by about -lr") {
    auto p = make_tensor<double>({1}, {0.0}, true);
    p->ensure_grad();
    p->grad[0] = 1.0;
    AdamOptimizer<double> opt;
    opt.lr = 0.001;
    opt.bind({{"p", p}});
    opt.step();
    CHECK(p->data[0] == doctest::Approx(-0.001).epsilon(1e-6));
    // Gradients are cleared after the step.
    CHECK(p->grad[0] == 0.0);
}

TEST_CASE("adam: non-finite gradient aborts naming the tensor") {
    auto p = make_tensor<double>({2}, {0.0, 0.0}, true);
    p->ensure_grad();
    p->grad[1] = std::numeric_limits<double>::quiet_NaN();
    AdamOptimizer<double> opt;
    opt.bind({{"conv.weight", p}});
    CHECK_THROWS_WITH_AS(opt.step(), doctest::Contains("conv.weight"), NumericError);
}

TEST_CASE("adam: identical seeds give identical trajectories") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        auto p = testutil::rand_tensor<double>({8}, rng, -1, 1, true);
        AdamOptimizer<double> opt;
        opt.bind({{"p", p}});
        for (int step = 0; step < 5; ++step) {
            Tape<double> tape;
            auto loss = sum(tape, mul(tape, p, p));
            tape.backward(loss);
            opt.step();
        }
        return p->data;
    };
    CHECK(run(7) == run(7));
}

TEST_CASE("adam: analytic-gradient step equals finite-difference-gradient step") {
    // 10-parameter toy model: loss = sum_i w_i * p_i^2 at 64-bit.
    Rng rng(11);
    auto weights = std::make_shared<std::vector<double>>(10);
    for (auto& w : *weights) w = rng.uniform(0.5, 2.0);
    auto p_analytic = testutil::rand_tensor<double>({10}, rng, -1, 1, true);
    auto p_fd = make_tensor<double>({10}, p_analytic->data, true);

    {
        Tape<double> tape;
        auto loss = weighted_sum(tape, mul(tape, p_analytic, p_analytic), weights);
        tape.backward(loss);
    }
    auto fd = finite_difference_grad<double>(
        [&](const Tensor<double>& t) {
            double acc = 0;
            for (std::size_t i = 0; i < t.data.size(); ++i) {
                acc += (*weights)[i] * t.data[i] * t.data[i];
            }
            return acc;
        },
        *p_fd);
    p_fd->ensure_grad();
    p_fd->grad = fd.data;

    AdamOptimizer<double> opt_a, opt_b;
    opt_a.bind({{"p", p_analytic}});
    opt_b.bind({{"p", p_fd}});
    opt_a.step();
    opt_b.step();
    for (std::size_t i = 0; i < 10; ++i) {
        const double denom = std::max(1.0, std::abs(p_analytic->data[i]));
        CHECK(std::abs(p_analytic->data[i] - p_fd->data[i]) / denom < 1e-3);
    }
}

TEST_CASE("plateau: strictly decreasing losses keep the rate") {
    PlateauSchedule sched;
    sched.lr = 0.001;
    for (int e = 0; e < 30; ++e) {
        sched.update(1.0 - 0.01 * e);
    }
    CHECK(sched.lr == 0.001);
    CHECK(sched.epochs_since_improvement == 0);
}

TEST_CASE("plateau: ten consecutive non-improving epochs divide the rate by 10") {
    PlateauSchedule sched;
    sched.lr = 0.001;
    sched.update(0.5);  // establishes the best
    int drops = 0;
    for (int e = 0; e < 10; ++e) {
        if (sched.update(0.5)) ++drops;
    }
    CHECK(drops == 1);
    CHECK(sched.lr == doctest::Approx(0.0001).epsilon(1e-12));
    CHECK(sched.epochs_since_improvement == 0);
}

TEST_CASE("plateau: nine flat epochs then improvement reset the counter") {
    PlateauSchedule sched;
    sched.lr = 0.001;
    sched.update(0.5);
    for (int e = 0; e < 9; ++e) sched.update(0.5);
    CHECK(sched.epochs_since_improvement == 9);
    sched.update(0.4);
    CHECK(sched.lr == 0.001);
    CHECK(sched.epochs_since_improvement == 0);
}

TEST_CASE("plateau: rate sequence is non-increasing with exact x0.1 drops") {
    Rng rng(13);
    PlateauSchedule sched;
    sched.lr = 0.001;
    double prev = sched.lr;
    for (int e = 0; e < 60; ++e) {
        sched.update(rng.uniform(0.4, 0.6));
        CHECK(sched.lr <= prev);
        if (sched.lr != prev) {
            CHECK(sched.lr == doctest::Approx(prev * 0.1).epsilon(1e-12));
        }
        prev = sched.lr;
    }
}

TEST_CASE("checkpoint: save/load round trip reproduces forward bit-exactly") {
    auto dir = make_temp_dir("roundtrip");
    Network<float> net({Variant::unet, true, 2, 4, 1, 1, {1, 3}}, 21);
    Rng rng(22);
    auto x = testutil::rand_tensor<float>({1, 8, 8, 1}, rng, 0, 1);

    // Perturb the BN running stats so buffers must round trip too.
    {
        Tape<float> tape(false);
        net.forward(tape, x, true);
    }
    Tape<float> t1(false);
    auto before = net.forward(t1, x, false);

    auto ckpt = snapshot(net, nullptr, nullptr, 3, Rng(1).serialize());
    const auto path = (dir / "ck.mixseg").string();
    save_checkpoint(ckpt, path);
    auto loaded = load_checkpoint(path);
    CHECK(loaded.epoch == 3);

    Network<float> fresh({Variant::unet, true, 2, 4, 1, 1, {1, 3}}, 999);
    restore_network(loaded, fresh);
    Tape<float> t2(false);
    auto after = fresh.forward(t2, x, false);
    CHECK(before->data == after->data);
    fs::remove_all(dir);
}

TEST_CASE("checkpoint: corrupt magic and truncation are structured errors") {
    auto dir = make_temp_dir("corrupt");
    Network<float> net({Variant::unet, false, 2, 4, 1, 1}, 23);
    const auto path = (dir / "ck.mixseg").string();
    save_checkpoint(snapshot(net, nullptr, nullptr, 1, Rng(1).serialize()), path);

    auto bytes = file_bytes(path);
    {
        auto bad = bytes;
        bad[0] = 'X';
        std::ofstream out(path, std::ios::binary);
        out.write(bad.data(), static_cast<std::streamsize>(bad.size()));
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("magic"), DataError);
    {
        std::ofstream out(path, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
    fs::remove_all(dir);
}

TEST_CASE("checkpoint: spec mismatch on load-into-network is a config error") {
    auto dir = make_temp_dir("specmismatch");
    Network<float> net({Variant::unet, false, 2, 4, 1, 1}, 25);
    const auto path = (dir / "ck.mixseg").string();
    save_checkpoint(snapshot(net, nullptr, nullptr, 1, Rng(1).serialize()), path);
    auto ckpt = load_checkpoint(path);
    Network<float> other({Variant::unet, false, 3, 4, 1, 1}, 25);
    CHECK_THROWS_AS(restore_network(ckpt, other), ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("checkpoint: schedule counter survives the round trip") {
    auto dir = make_temp_dir("sched");
    Network<float> net({Variant::unet, false, 2, 4, 1, 1}, 27);
    PlateauSchedule sched;
    sched.lr = 0.0001;
    sched.best_loss = 0.123456789;
    sched.epochs_since_improvement = 7;
    const auto path = (dir / "ck.mixseg").string();
    save_checkpoint(snapshot(net, nullptr, &sched, 5, Rng(9).serialize()), path);
    PlateauSchedule restored;
    restore_schedule(load_checkpoint(path), restored);
    CHECK(restored.lr == 0.0001);
    CHECK(restored.best_loss == 0.123456789);
    CHECK(restored.epochs_since_improvement == 7);
    fs::remove_all(dir);
}

TEST_CASE("train: one-epoch smoke run writes history and checkpoints") {
    auto dir = make_temp_dir("smoke");
    auto samples = blob_set(4, 16, 31);
    VectorDataset data(samples);
    VectorDataset val(blob_set(2, 16, 32));
    Network<float> net({Variant::unet, false, 2, 4, 1, 1}, 33);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    cfg.seed = 5;
    cfg.augment = false;
    cfg.out_dir = dir.string();
    cfg.verbose = false;
    auto result = train(net, data, val, cfg);
    CHECK(result.history.size() == 1);
    CHECK(fs::exists(result.last_path));
    CHECK(fs::exists(result.best_path));
    auto hist = file_bytes(result.history_path);
    CHECK(hist.rfind("epoch,train_loss,lr,val_AC,val_SE,val_SP,val_PC,val_F1,val_JS\n", 0) == 0);
    CHECK(std::count(hist.begin(), hist.end(), '\n') == 2);
    CHECK_NOTHROW(load_checkpoint(result.last_path));
    fs::remove_all(dir);
}

TEST_CASE("train: loss decreases on a tiny overfit task") {
    auto dir = make_temp_dir("overfit");
    auto samples = blob_set(2, 16, 41);
    VectorDataset data(samples);
    Network<float> net({Variant::unet, false, 2, 8, 1, 1}, 43);
    TrainConfig cfg;
    cfg.epochs = 12;
    cfg.batch_size = 2;
    cfg.seed = 44;
    cfg.augment = false;
    cfg.out_dir = dir.string();
    cfg.verbose = false;
    auto result = train(net, data, data, cfg);
    REQUIRE(result.history.size() == 12);
    CHECK(result.history.back().train_loss < result.history.front().train_loss);
    fs::remove_all(dir);
}

TEST_CASE("train: same seed produces byte-identical history and checkpoints") {
    auto dir_a = make_temp_dir("det_a");
    auto dir_b = make_temp_dir("det_b");
    auto samples = blob_set(4, 16, 51);
    auto run = [&](const fs::path& dir) {
        VectorDataset data(samples);
        Network<float> net({Variant::unet, true, 2, 4, 1, 1, {1, 3}}, 52);
        TrainConfig cfg;
        cfg.epochs = 2;
        cfg.batch_size = 2;
        cfg.seed = 53;
        cfg.augment = true;
        cfg.out_dir = dir.string();
        cfg.verbose = false;
        return train(net, data, data, cfg);
    };
    auto a = run(dir_a);
    auto b = run(dir_b);
    CHECK(file_bytes(a.history_path) == file_bytes(b.history_path));
    CHECK(file_bytes(a.last_path) == file_bytes(b.last_path));
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("train: resuming from a checkpoint matches the uninterrupted run") {
    auto samples = blob_set(4, 16, 61);
    auto make_net = [] { return Network<float>({Variant::unet, false, 2, 4, 1, 1}, 62); };
    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.seed = 63;
    cfg.augment = true;
    cfg.verbose = false;

    auto dir_full = make_temp_dir("resume_full");
    auto full_net = make_net();
    cfg.epochs = 2;
    cfg.out_dir = dir_full.string();
    auto full = train(full_net, VectorDataset(samples), VectorDataset(samples), cfg);

    auto dir_split = make_temp_dir("resume_split");
    auto split_net = make_net();
    cfg.epochs = 1;
    cfg.out_dir = dir_split.string();
    train(split_net, VectorDataset(samples), VectorDataset(samples), cfg);
    auto ckpt = load_checkpoint(dir_split.string() + "/checkpoint.last.mixseg");
    auto resumed_net = Network<float>({Variant::unet, false, 2, 4, 1, 1}, 999);
    cfg.epochs = 2;
    auto resumed = train(resumed_net, VectorDataset(samples), VectorDataset(samples), cfg, &ckpt);
    CHECK(resumed.history.size() == 1);  // one additional epoch

    CHECK(file_bytes(full.history_path) == file_bytes(dir_split.string() + "/history.csv"));
    CHECK(file_bytes(full.last_path) == file_bytes(dir_split.string() + "/checkpoint.last.mixseg"));
    fs::remove_all(dir_full);
    fs::remove_all(dir_split);
}

TEST_CASE("train: configuration and data errors") {
    auto samples = blob_set(2, 16, 71);
    Network<float> net({Variant::unet, false, 2, 4, 1, 1}, 72);
    TrainConfig cfg;
    cfg.epochs = 0;
    CHECK_THROWS_AS(train(net, VectorDataset(samples), VectorDataset(samples), cfg), ConfigError);
    cfg.epochs = 1;
    CHECK_THROWS_AS(train(net, VectorDataset({}), VectorDataset(samples), cfg), DataError);
}
