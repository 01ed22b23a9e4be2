#pragma once

#include "mixseg/network.hpp"
#include "mixseg/optim.hpp"

namespace mixseg {

// On-disk training snapshot. Layout: magic "MIXSEG01", a length-prefixed
// key=value header (architecture spec, epoch, RNG state, schedule/optimizer
// scalars), then a tensor table of (name, shape, raw little-endian float32).
// The table carries parameters, Adam moments (opt.m/ opt.v/ prefixes) and BN
// running stats (buf/ prefix), so a round trip is bit-exact.
struct Checkpoint {
    int version = 1;
    ArchitectureSpec spec;
    int epoch = 0;
    std::string rng_state;
    double sched_lr = 1e-3;
    double sched_best = 0;
    int sched_since = 0;
    std::int64_t adam_steps = 0;
    std::vector<std::pair<std::string, Tensor<float>>> tensors;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint snapshot(Network<float>& net, AdamOptimizer<float>* opt, const PlateauSchedule* sched,
                    int epoch, const std::string& rng_state);

// Loads parameters and buffers into a network built from the same spec;
// throws ConfigError when the checkpoint's spec disagrees.
void restore_network(const Checkpoint& ckpt, Network<float>& net);

// Rebinds the optimizer to the network's parameters and restores moments.
void restore_optimizer(const Checkpoint& ckpt, Network<float>& net, AdamOptimizer<float>& opt);

void restore_schedule(const Checkpoint& ckpt, PlateauSchedule& sched);

}  // namespace mixseg
