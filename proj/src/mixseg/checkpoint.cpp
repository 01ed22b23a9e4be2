#include "mixseg/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>

namespace mixseg {

namespace {

constexpr char kMagic[8] = {'M', 'I', 'X', 'S', 'E', 'G', '0', '1'};
constexpr int kVersion = 1;

std::string hex_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

double parse_hex_double(const std::string& s) {
    return std::strtod(s.c_str(), nullptr);
}

std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v[i]);
    }
    return s;
}

std::vector<int> parse_ints(const std::string& s) {
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        const auto comma = s.find(',', pos);
        const auto token = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        out.push_back(std::stoi(token));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

template <class T>
void write_raw(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_raw(std::istream& in, const std::string& path) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) {
        throw DataError("truncated checkpoint file " + path);
    }
    return value;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write checkpoint " + path);
    }
    out.write(kMagic, sizeof(kMagic));

    std::string header;
    header += "version=" + std::to_string(ckpt.version) + "\n";
    header += "variant=" + std::string(variant_name(ckpt.spec.variant)) + "\n";
    header += "mix=" + std::to_string(ckpt.spec.mix ? 1 : 0) + "\n";
    header += "depth=" + std::to_string(ckpt.spec.depth) + "\n";
    header += "base_width=" + std::to_string(ckpt.spec.base_width) + "\n";
    header += "in_channels=" + std::to_string(ckpt.spec.in_channels) + "\n";
    header += "out_channels=" + std::to_string(ckpt.spec.out_channels) + "\n";
    header += "kernel_sizes=" + join_ints(ckpt.spec.kernel_sizes) + "\n";
    header += "t=" + std::to_string(ckpt.spec.steps) + "\n";
    header += "epoch=" + std::to_string(ckpt.epoch) + "\n";
    header += "adam_steps=" + std::to_string(ckpt.adam_steps) + "\n";
    header += "sched_lr=" + hex_double(ckpt.sched_lr) + "\n";
    header += "sched_best=" + hex_double(ckpt.sched_best) + "\n";
    header += "sched_since=" + std::to_string(ckpt.sched_since) + "\n";
    header += "rng=" + ckpt.rng_state + "\n";
    write_raw(out, static_cast<std::uint32_t>(header.size()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));

    write_raw(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, tensor] : ckpt.tensors) {
        write_raw(out, static_cast<std::uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_raw(out, static_cast<std::uint8_t>(tensor.shape.size()));
        for (auto d : tensor.shape) {
            write_raw(out, static_cast<std::uint32_t>(d));
        }
        out.write(reinterpret_cast<const char*>(tensor.data.data()),
                  static_cast<std::streamsize>(tensor.data.size() * sizeof(float)));
    }
    if (!out) {
        throw DataError("failed writing checkpoint " + path);
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot read checkpoint " + path);
    }
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw DataError("not a checkpoint file (bad magic): " + path);
    }
    const auto header_len = read_raw<std::uint32_t>(in, path);
    std::string header(header_len, '\0');
    in.read(header.data(), header_len);
    if (!in) {
        throw DataError("truncated checkpoint header in " + path);
    }

    std::map<std::string, std::string> kv;
    std::size_t pos = 0;
    while (pos < header.size()) {
        auto nl = header.find('\n', pos);
        if (nl == std::string::npos) nl = header.size();
        const std::string line = header.substr(pos, nl - pos);
        pos = nl + 1;
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw DataError("malformed checkpoint header line: " + line);
        }
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto require = [&](const char* key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) {
            throw DataError("checkpoint header missing key '" + std::string(key) + "'");
        }
        return it->second;
    };

    Checkpoint ckpt;
    ckpt.version = std::stoi(require("version"));
    if (ckpt.version != kVersion) {
        throw DataError("unsupported checkpoint version " + std::to_string(ckpt.version) +
                        " (expected " + std::to_string(kVersion) + ")");
    }
    ckpt.spec.variant = variant_from_string(require("variant"));
    ckpt.spec.mix = require("mix") == "1";
    ckpt.spec.depth = std::stoi(require("depth"));
    ckpt.spec.base_width = std::stoi(require("base_width"));
    ckpt.spec.in_channels = std::stoi(require("in_channels"));
    ckpt.spec.out_channels = std::stoi(require("out_channels"));
    ckpt.spec.kernel_sizes = parse_ints(require("kernel_sizes"));
    ckpt.spec.steps = std::stoi(require("t"));
    ckpt.epoch = std::stoi(require("epoch"));
    ckpt.adam_steps = std::stoll(require("adam_steps"));
    ckpt.sched_lr = parse_hex_double(require("sched_lr"));
    ckpt.sched_best = parse_hex_double(require("sched_best"));
    ckpt.sched_since = std::stoi(require("sched_since"));
    ckpt.rng_state = require("rng");

    const auto count = read_raw<std::uint32_t>(in, path);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = read_raw<std::uint16_t>(in, path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto rank = read_raw<std::uint8_t>(in, path);
        Shape shape;
        for (std::uint8_t d = 0; d < rank; ++d) {
            shape.push_back(static_cast<std::int64_t>(read_raw<std::uint32_t>(in, path)));
        }
        const auto numel = shape_numel(shape);
        std::vector<float> data(static_cast<std::size_t>(numel));
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(float)));
        if (!in) {
            throw DataError("truncated tensor table in " + path);
        }
        ckpt.tensors.emplace_back(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
    }
    return ckpt;
}

Checkpoint snapshot(Network<float>& net, AdamOptimizer<float>* opt, const PlateauSchedule* sched,
                    int epoch, const std::string& rng_state) {
    Checkpoint ckpt;
    ckpt.spec = net.spec();
    ckpt.epoch = epoch;
    ckpt.rng_state = rng_state;
    if (sched) {
        ckpt.sched_lr = sched->lr;
        ckpt.sched_best = sched->best_loss;
        ckpt.sched_since = sched->epochs_since_improvement;
    }
    net.visit_params([&](const std::string& name, TensorPtr<float>& p) {
        ckpt.tensors.emplace_back(name, Tensor<float>(p->shape, p->data));
    });
    net.visit_buffers([&](const std::string& name, std::vector<float>& buf) {
        ckpt.tensors.emplace_back("buf/" + name,
                                  Tensor<float>({static_cast<std::int64_t>(buf.size())}, buf));
    });
    if (opt) {
        ckpt.adam_steps = opt->step_count();
        const auto& params = opt->params();
        for (std::size_t i = 0; i < params.size(); ++i) {
            ckpt.tensors.emplace_back(
                "opt.m/" + params[i].first,
                Tensor<float>(params[i].second->shape, opt->first_moment(i)));
            ckpt.tensors.emplace_back(
                "opt.v/" + params[i].first,
                Tensor<float>(params[i].second->shape, opt->second_moment(i)));
        }
    }
    return ckpt;
}

namespace {

const Tensor<float>* find_tensor(const Checkpoint& ckpt, const std::string& name) {
    for (const auto& [n, t] : ckpt.tensors) {
        if (n == name) return &t;
    }
    return nullptr;
}

void check_spec_match(const ArchitectureSpec& a, const ArchitectureSpec& b) {
    if (a.variant != b.variant || a.mix != b.mix || a.depth != b.depth ||
        a.base_width != b.base_width || a.in_channels != b.in_channels ||
        a.out_channels != b.out_channels || a.steps != b.steps ||
        (a.mix && a.kernel_sizes != b.kernel_sizes)) {
        throw ConfigError("checkpoint architecture (" + a.display_name() + ", depth " +
                          std::to_string(a.depth) + ", width " + std::to_string(a.base_width) +
                          ") does not match the configured network (" + b.display_name() +
                          ", depth " + std::to_string(b.depth) + ", width " +
                          std::to_string(b.base_width) + ")");
    }
}

}  // namespace

void restore_network(const Checkpoint& ckpt, Network<float>& net) {
    check_spec_match(ckpt.spec, net.spec());
    net.visit_params([&](const std::string& name, TensorPtr<float>& p) {
        const auto* t = find_tensor(ckpt, name);
        if (!t) {
            throw DataError("checkpoint missing parameter " + name);
        }
        if (t->shape != p->shape) {
            throw DataError("checkpoint parameter " + name + " has shape " + shape_str(t->shape) +
                            ", expected " + shape_str(p->shape));
        }
        p->data = t->data;
        p->grad.clear();
    });
    net.visit_buffers([&](const std::string& name, std::vector<float>& buf) {
        const auto* t = find_tensor(ckpt, "buf/" + name);
        if (!t) {
            throw DataError("checkpoint missing buffer " + name);
        }
        buf = t->data;
    });
}

void restore_optimizer(const Checkpoint& ckpt, Network<float>& net, AdamOptimizer<float>& opt) {
    opt.bind(net.named_params());
    opt.set_step_count(ckpt.adam_steps);
    const auto& params = opt.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto* m = find_tensor(ckpt, "opt.m/" + params[i].first);
        const auto* v = find_tensor(ckpt, "opt.v/" + params[i].first);
        if (!m || !v) {
            throw DataError("checkpoint missing optimizer state for " + params[i].first);
        }
        opt.first_moment(i) = m->data;
        opt.second_moment(i) = v->data;
    }
}

void restore_schedule(const Checkpoint& ckpt, PlateauSchedule& sched) {
    sched.lr = ckpt.sched_lr;
    sched.best_loss = ckpt.sched_best;
    sched.epochs_since_improvement = ckpt.sched_since;
}

}  // namespace mixseg
