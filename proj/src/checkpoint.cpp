#include "paon/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace paon {

static_assert(sizeof(float) == 4, "checkpoint format assumes 32-bit floats");

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

constexpr char kMagic[5] = {'P', 'A', 'O', 'N', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    std::string section = "header";

    void need(size_t n) {
        if (pos + n > buf.size())
            throw IoError("corrupt checkpoint: truncated in " + section);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string bytes(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

void put_entry(std::string& out, const TensorEntry& e) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put_u32(out, static_cast<std::uint32_t>(e.shape.n));
    put_u32(out, static_cast<std::uint32_t>(e.shape.c));
    put_u32(out, static_cast<std::uint32_t>(e.shape.h));
    put_u32(out, static_cast<std::uint32_t>(e.shape.w));
    for (float v : e.data) put_f32(out, v);
}

TensorEntry read_entry(Reader& r) {
    TensorEntry e;
    const std::uint32_t name_len = r.u32();
    if (name_len > 4096) throw IoError("corrupt checkpoint: bad name length in " + r.section);
    e.name = r.bytes(name_len);
    e.shape.n = static_cast<int>(r.u32());
    e.shape.c = static_cast<int>(r.u32());
    e.shape.h = static_cast<int>(r.u32());
    e.shape.w = static_cast<int>(r.u32());
    const std::int64_t numel = e.shape.numel();
    if (numel < 0 || numel > (1LL << 31))
        throw IoError("corrupt checkpoint: bad shape in " + r.section);
    e.data.resize(static_cast<size_t>(numel));
    r.need(static_cast<size_t>(numel) * 4);
    for (auto& v : e.data) v = r.f32();
    return e;
}

}  // namespace

std::int64_t Checkpoint::trainer_iter() const {
    for (const auto& e : opt_state)
        if (e.name == "trainer.iter" && !e.data.empty())
            return static_cast<std::int64_t>(e.data[0]);
    return 0;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::string out;
    out.append(kMagic, 5);
    put_u32(out, kVersion);
    put_u64(out, ckpt.config_json.size());
    out += ckpt.config_json;
    put_u64(out, fnv1a64(ckpt.config_json));
    put_u32(out, static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& e : ckpt.params) put_entry(out, e);
    put_u32(out, static_cast<std::uint32_t>(ckpt.opt_state.size()));
    for (const auto& e : ckpt.opt_state) put_entry(out, e);
    put_f32(out, ckpt.best_val_psnr);

    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw IoError("cannot write " + tmp);
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!f) throw IoError("write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r{buf};
    r.section = "header";
    const std::string magic = r.bytes(5);
    if (std::memcmp(magic.data(), kMagic, 5) != 0)
        throw IoError("corrupt checkpoint: bad magic in header (" + path + ")");
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));

    Checkpoint ckpt;
    r.section = "config";
    const std::uint64_t clen = r.u64();
    if (clen > buf.size()) throw IoError("corrupt checkpoint: bad config length");
    ckpt.config_json = r.bytes(static_cast<size_t>(clen));
    const std::uint64_t hash = r.u64();
    if (hash != fnv1a64(ckpt.config_json))
        throw IoError("corrupt checkpoint: config hash mismatch in " + path);

    r.section = "param table";
    const std::uint32_t np = r.u32();
    for (std::uint32_t i = 0; i < np; ++i) ckpt.params.push_back(read_entry(r));
    r.section = "optimizer state table";
    const std::uint32_t ns = r.u32();
    for (std::uint32_t i = 0; i < ns; ++i) ckpt.opt_state.push_back(read_entry(r));
    r.section = "trailer";
    ckpt.best_val_psnr = r.f32();
    return ckpt;
}

Checkpoint make_checkpoint(const SrNetwork& net, const Optimizer* opt,
                           float best_val_psnr, std::int64_t iter,
                           const std::string& config_json) {
    Checkpoint ckpt;
    ckpt.config_json = config_json;
    ckpt.best_val_psnr = best_val_psnr;
    for (const auto& p : net.params())
        ckpt.params.push_back({p.name, p.tensor.shape(), p.tensor.vec()});
    if (opt) {
        for (const auto& e : opt->state_entries(net.params()))
            ckpt.opt_state.push_back({e.name, e.tensor.shape(), e.tensor.vec()});
    }
    TensorEntry it{"trainer.iter", Shape(1, 1, 1, 1), {static_cast<float>(iter)}};
    ckpt.opt_state.push_back(std::move(it));
    return ckpt;
}

std::int64_t load_into(SrNetwork& net, Optimizer* opt, const Checkpoint& ckpt) {
    auto& params = net.params();
    if (ckpt.params.size() != params.size())
        throw ConfigError("checkpoint holds " + std::to_string(ckpt.params.size()) +
                          " parameters, network expects " + std::to_string(params.size()));
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& e = ckpt.params[i];
        if (e.name != params[i].name)
            throw ConfigError("checkpoint parameter '" + e.name +
                              "' does not match network parameter '" + params[i].name + "'");
        if (e.shape != params[i].tensor.shape())
            throw ConfigError("checkpoint parameter '" + e.name + "' has shape " +
                              e.shape.str() + ", expected " + params[i].tensor.shape().str());
        params[i].tensor.vec() = e.data;
    }
    if (opt) {
        std::vector<std::pair<std::string, std::vector<float>>> entries;
        for (const auto& e : ckpt.opt_state)
            entries.push_back({e.name, e.data});
        opt->load_state(params, entries);
    }
    return ckpt.trainer_iter();
}

}  // namespace paon
