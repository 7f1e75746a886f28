#include "sdil/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace sdil::harness {

using diff::Parameter;
using diff::Tensor;

std::uint32_t crc32(const unsigned char* data, std::size_t len, std::uint32_t seed) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t c = seed ^ 0xffffffffu;
    for (std::size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xffu] ^ (c >> 8);
    return c ^ 0xffffffffu;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    put_u32(out, static_cast<std::uint32_t>(v));
    put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw ParseError("checkpoint '" + path + "' is truncated");
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

std::uint64_t get_u64(std::istream& in, const std::string& path) {
    const std::uint64_t lo = get_u32(in, path);
    const std::uint64_t hi = get_u32(in, path);
    return lo | hi << 32;
}

struct RecordWriter {
    std::ostream& out;
    std::uint32_t crc = 0;

    void tensor(const std::string& name, const float* data, std::vector<int> dims) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<std::uint32_t>(dims.size()));
        std::size_t n = 1;
        for (int d : dims) {
            put_u32(out, static_cast<std::uint32_t>(d));
            n *= static_cast<std::size_t>(d);
        }
        out.write(reinterpret_cast<const char*>(data),
                  static_cast<std::streamsize>(n * sizeof(float)));
        crc = crc32(reinterpret_cast<const unsigned char*>(data), n * sizeof(float), crc);
    }

    void floats(const std::string& name, const std::vector<float>& v) {
        tensor(name, v.data(), {static_cast<int>(v.size())});
    }
};

struct RawRecord {
    std::string name;
    std::vector<int> dims;
    std::vector<float> data;
};

} // namespace

void save_checkpoint(policy::PolicyStack& model, const discovery::OptimalityTable* table,
                     const RunConfig& config, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    out.write("SDIL", 4);
    put_u32(out, kCheckpointVersion);
    put_u64(out, config.seed);
    const std::string echo = config.to_string();
    put_u32(out, static_cast<std::uint32_t>(echo.size()));
    out.write(echo.data(), static_cast<std::streamsize>(echo.size()));

    RecordWriter w{out};
    for (Parameter* p : model.all_params())
        w.tensor(p->name, p->value.data(), p->value.shape());
    w.floats("stats.p_clean", model.p_clean);
    w.floats("stats.p_noisy", model.p_noisy);
    w.floats("stats.s_pref", model.s_pref);
    w.floats("stats.s_qual", model.s_qual);
    w.floats("stats.s_op", model.s_op);
    if (table != nullptr && !table->transition_score.empty()) {
        w.floats("table.scores", table->transition_score);
        w.floats("table.refresh_epoch", {static_cast<float>(table->refresh_epoch)});
    }
    put_u32(out, w.crc);
    if (!out) throw ParseError("write failed for '" + path + "'");
}

CheckpointBundle load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw ParseError("cannot open checkpoint '" + path + "'");
    const std::streamoff file_size = in.tellg();
    in.seekg(0);
    if (file_size < 16) throw ParseError("checkpoint '" + path + "' is truncated");

    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "SDIL", 4) != 0)
        throw ParseError("checkpoint '" + path + "': bad magic");
    const std::uint32_t version = get_u32(in, path);
    if (version != kCheckpointVersion)
        throw ParseError("checkpoint '" + path + "': unsupported version " +
                         std::to_string(version));
    const std::uint64_t seed = get_u64(in, path);
    const std::uint32_t echo_len = get_u32(in, path);
    if (static_cast<std::streamoff>(echo_len) > file_size)
        throw ParseError("checkpoint '" + path + "' is truncated");
    std::string echo(echo_len, '\0');
    if (!in.read(echo.data(), echo_len)) throw ParseError("checkpoint '" + path + "' is truncated");

    std::vector<RawRecord> records;
    std::uint32_t crc = 0;
    while (in.tellg() < file_size - 4) {
        RawRecord rec;
        const std::uint32_t name_len = get_u32(in, path);
        if (name_len > 4096) throw ParseError("checkpoint '" + path + "': corrupt record");
        rec.name.resize(name_len);
        if (!in.read(rec.name.data(), name_len))
            throw ParseError("checkpoint '" + path + "' is truncated");
        const std::uint32_t rank = get_u32(in, path);
        if (rank > 2) throw ParseError("checkpoint '" + path + "': corrupt rank");
        std::size_t n = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint32_t dim = get_u32(in, path);
            rec.dims.push_back(static_cast<int>(dim));
            n *= dim;
        }
        if (n > (1u << 28)) throw ParseError("checkpoint '" + path + "': corrupt dims");
        rec.data.resize(n);
        if (!in.read(reinterpret_cast<char*>(rec.data.data()),
                     static_cast<std::streamsize>(n * sizeof(float))))
            throw ParseError("checkpoint '" + path + "' is truncated");
        crc = crc32(reinterpret_cast<const unsigned char*>(rec.data.data()),
                    n * sizeof(float), crc);
        records.push_back(std::move(rec));
    }
    if (in.tellg() != file_size - 4)
        throw ParseError("checkpoint '" + path + "' is truncated");
    if (get_u32(in, path) != crc)
        throw ParseError("checkpoint '" + path + "': payload checksum mismatch");

    CheckpointBundle bundle;
    bundle.seed = seed;
    bundle.config = RunConfig::from_string(echo, path + "#config");
    bundle.model = std::make_unique<policy::PolicyStack>(bundle.config.model_config(),
                                                         bundle.config.seed);

    auto find = [&records, &path](const std::string& name) -> const RawRecord& {
        for (const RawRecord& r : records)
            if (r.name == name) return r;
        throw ParseError("checkpoint '" + path + "': missing tensor '" + name + "'");
    };

    for (Parameter* p : bundle.model->all_params()) {
        const RawRecord& rec = find(p->name);
        if (rec.dims != p->value.shape())
            throw ParseError("checkpoint '" + path + "': shape mismatch for '" + p->name + "'");
        std::copy(rec.data.begin(), rec.data.end(), p->value.data());
    }
    auto load_stats = [&find](const std::string& name, std::vector<float>& dst) {
        const RawRecord& rec = find(name);
        dst = rec.data;
    };
    load_stats("stats.p_clean", bundle.model->p_clean);
    load_stats("stats.p_noisy", bundle.model->p_noisy);
    load_stats("stats.s_pref", bundle.model->s_pref);
    load_stats("stats.s_qual", bundle.model->s_qual);
    load_stats("stats.s_op", bundle.model->s_op);

    bundle.table.p_clean = bundle.model->p_clean;
    bundle.table.p_noisy = bundle.model->p_noisy;
    bundle.table.s_pref = bundle.model->s_pref;
    bundle.table.s_qual = bundle.model->s_qual;
    bundle.table.s_op = bundle.model->s_op;
    for (const RawRecord& r : records) {
        if (r.name == "table.scores") bundle.table.transition_score = r.data;
        if (r.name == "table.refresh_epoch" && !r.data.empty())
            bundle.table.refresh_epoch = static_cast<int>(r.data[0]);
    }
    return bundle;
}

} // namespace sdil::harness
