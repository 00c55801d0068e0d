#include "r2o/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace r2o {

namespace {

constexpr char kMagic[8] = {'R', '2', 'O', 'C', 'K', 'P', 'T', '1'};

struct NamedTensor {
    std::string name;
    Tensor* tensor;
};

// Fixed serialization order; loading matches by position and verifies
// names, which keeps round trips byte-exact.
std::vector<NamedTensor> registry(NetworkPair& pair, OptimizerState& opt) {
    std::vector<NamedTensor> out;
    auto theta = pair.online_params();
    for (auto& p : theta) out.push_back({p.name, p.value});
    for (auto& p : pair.target_params()) out.push_back({p.name, p.value});
    for (auto& s : pair.online_stats()) out.push_back({s.name, s.value});
    for (auto& s : pair.target_stats()) out.push_back({s.name, s.value});
    if (opt.momentum.size() != theta.size())
        throw std::invalid_argument("checkpoint: optimizer state does not match the online parameters");
    for (std::size_t i = 0; i < theta.size(); ++i)
        out.push_back({"momentum." + theta[i].name, &opt.momentum[i]});
    return out;
}

template <typename T>
void put(std::string& buf, T v) {
    char raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    buf.append(raw, sizeof(T));
}

template <typename T>
T take(const std::string& buf, std::size_t& off, const std::string& path) {
    if (off + sizeof(T) > buf.size())
        throw std::runtime_error("malformed checkpoint '" + path + "': truncated at offset " +
                                 std::to_string(off));
    T v;
    std::memcpy(&v, buf.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint '" + path + "'");
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

CheckpointMeta parse_header(const std::string& buf, std::size_t& off, const std::string& path) {
    if (buf.size() < 8 || std::memcmp(buf.data(), kMagic, 8) != 0)
        throw std::runtime_error("malformed checkpoint '" + path + "': bad magic");
    off = 8;
    CheckpointMeta meta;
    meta.version = take<std::uint32_t>(buf, off, path);
    if (meta.version != 1)
        throw std::runtime_error("checkpoint '" + path + "': unsupported version " +
                                 std::to_string(meta.version));
    meta.epoch = static_cast<int>(take<std::uint32_t>(buf, off, path));
    meta.step = static_cast<long>(take<std::uint64_t>(buf, off, path));
    meta.config_hash = take<std::uint64_t>(buf, off, path);
    meta.base_seed = take<std::uint64_t>(buf, off, path);
    return meta;
}

}  // namespace

void save_checkpoint(const std::string& path, NetworkPair& pair, const OptimizerState& opt,
                     const CheckpointMeta& meta) {
    auto& opt_mut = const_cast<OptimizerState&>(opt);
    const auto tensors = registry(pair, opt_mut);

    std::string buf;
    buf.append(kMagic, 8);
    put<std::uint32_t>(buf, meta.version);
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(meta.epoch));
    put<std::uint64_t>(buf, static_cast<std::uint64_t>(meta.step));
    put<std::uint64_t>(buf, meta.config_hash);
    put<std::uint64_t>(buf, meta.base_seed);
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(tensors.size()));
    for (const NamedTensor& nt : tensors) {
        put<std::uint16_t>(buf, static_cast<std::uint16_t>(nt.name.size()));
        buf.append(nt.name);
        put<std::uint32_t>(buf, static_cast<std::uint32_t>(nt.tensor->rank()));
        for (int d = 0; d < nt.tensor->rank(); ++d)
            put<std::uint32_t>(buf, static_cast<std::uint32_t>(nt.tensor->dim(d)));
        const char* raw = reinterpret_cast<const char*>(nt.tensor->data());
        buf.append(raw, nt.tensor->size() * sizeof(double));
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open checkpoint '" + path + "' for writing");
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("short write to checkpoint '" + path + "'");
}

CheckpointMeta load_checkpoint(const std::string& path, NetworkPair& pair, OptimizerState& opt,
                               std::uint64_t expected_config_hash, bool force) {
    const std::string buf = read_file(path);
    std::size_t off = 0;
    const CheckpointMeta meta = parse_header(buf, off, path);
    if (!force && meta.config_hash != expected_config_hash)
        throw std::runtime_error("checkpoint '" + path +
                                 "': config hash mismatch (pass force to override)");

    const auto tensors = registry(pair, opt);
    const std::uint32_t count = take<std::uint32_t>(buf, off, path);
    if (count != tensors.size())
        throw std::runtime_error("checkpoint '" + path + "': expected " +
                                 std::to_string(tensors.size()) + " tensors, found " +
                                 std::to_string(count));
    for (const NamedTensor& nt : tensors) {
        const std::uint16_t name_len = take<std::uint16_t>(buf, off, path);
        if (off + name_len > buf.size())
            throw std::runtime_error("malformed checkpoint '" + path + "': truncated name");
        const std::string name(buf.data() + off, name_len);
        off += name_len;
        if (name != nt.name)
            throw std::runtime_error("checkpoint '" + path + "': tensor order mismatch, expected '" +
                                     nt.name + "', found '" + name + "'");
        const std::uint32_t rank = take<std::uint32_t>(buf, off, path);
        if (rank != static_cast<std::uint32_t>(nt.tensor->rank()))
            throw std::runtime_error("checkpoint '" + path + "': rank mismatch for " + name);
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint32_t dim = take<std::uint32_t>(buf, off, path);
            if (dim != static_cast<std::uint32_t>(nt.tensor->dim(static_cast<int>(d))))
                throw std::runtime_error("checkpoint '" + path + "': shape mismatch for " + name);
            numel *= dim;
        }
        if (off + numel * sizeof(double) > buf.size())
            throw std::runtime_error("malformed checkpoint '" + path + "': truncated data for " + name);
        std::memcpy(nt.tensor->data(), buf.data() + off, numel * sizeof(double));
        off += numel * sizeof(double);
    }
    if (off != buf.size())
        throw std::runtime_error("malformed checkpoint '" + path + "': trailing bytes");
    opt.step = meta.step;
    return meta;
}

CheckpointMeta peek_checkpoint(const std::string& path) {
    const std::string buf = read_file(path);
    std::size_t off = 0;
    return parse_header(buf, off, path);
}

}  // namespace r2o
