#include "maskdiff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "maskdiff/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace maskdiff {

namespace {

constexpr char kMagic[4] = {'M', 'D', 'C', 'P'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& out, uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void put_u8(std::ostream& out, uint8_t v) { out.write(reinterpret_cast<const char*>(&v), 1); }

uint32_t get_u32(std::istream& in) {
    uint32_t v;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
uint64_t get_u64(std::istream& in) {
    uint64_t v;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
uint8_t get_u8(std::istream& in) {
    uint8_t v;
    in.read(reinterpret_cast<char*>(&v), 1);
    return v;
}

void put_tensor(std::ostream& out, const Tensor& t) {
    put_u32(out, static_cast<uint32_t>(t.rows));
    put_u32(out, static_cast<uint32_t>(t.cols));
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
}

Tensor get_tensor(std::istream& in) {
    const uint32_t r = get_u32(in);
    const uint32_t c = get_u32(in);
    if (!in || r > 1u << 20 || c > 1u << 20) throw IoError("checkpoint: bad tensor shape");
    Tensor t(static_cast<int>(r), static_cast<int>(c));
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    return t;
}

void put_string(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
    const uint32_t n = get_u32(in);
    if (!in || n > 4096) throw IoError("checkpoint: bad string length");
    std::string s(n, '\0');
    in.read(s.data(), n);
    return s;
}

}  // namespace

void save_checkpoint(const DenoiserModel& model, const OptimizerState* opt,
                     const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    const ModelConfig& c = model.cfg;
    put_u32(out, static_cast<uint32_t>(c.vocab));
    put_u32(out, static_cast<uint32_t>(c.seq_len));
    put_u32(out, static_cast<uint32_t>(c.hidden));
    put_u32(out, static_cast<uint32_t>(c.blocks));
    put_u32(out, static_cast<uint32_t>(c.steps));
    put_u8(out, c.time_embed ? 1 : 0);
    put_u8(out, c.fusion == FusionMode::Concat ? 1 : 0);
    put_u8(out, c.has_sc ? 1 : 0);
    put_u64(out, model.trained_tokens);
    put_u64(out, model.trained_steps);
    put_u32(out, static_cast<uint32_t>(model.params.count()));
    for (size_t i = 0; i < model.params.count(); ++i) {
        put_string(out, model.params.names[i]);
        put_tensor(out, model.params.tensors[i]);
    }
    put_u8(out, opt ? 1 : 0);
    if (opt) {
        put_u64(out, opt->step);
        for (size_t i = 0; i < model.params.count(); ++i) {
            put_tensor(out, opt->m[i]);
            put_tensor(out, opt->v[i]);
        }
    }
    if (!out) throw IoError("write failed for '" + path + "'");

    std::ofstream man(path + ".manifest.txt");
    if (!man) throw IoError("cannot write manifest for '" + path + "'");
    man << "maskdiff checkpoint v" << kVersion << '\n'
        << "vocab " << c.vocab << "\nseq_len " << c.seq_len << "\nhidden " << c.hidden
        << "\nblocks " << c.blocks << "\nsteps " << c.steps << "\ntime_embed "
        << (c.time_embed ? 1 : 0) << "\nfusion " << fusion_name(c.fusion) << "\nhas_sc "
        << (c.has_sc ? 1 : 0) << "\ntrained_tokens " << model.trained_tokens
        << "\ntrained_steps " << model.trained_steps << "\noptimizer_state "
        << (opt ? 1 : 0) << '\n';
    for (size_t i = 0; i < model.params.count(); ++i) {
        man << "tensor " << model.params.names[i] << ' ' << model.params.tensors[i].rows
            << 'x' << model.params.tensors[i].cols << '\n';
    }
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw IoError(path + ": not a maskdiff checkpoint");
    }
    const uint32_t version = get_u32(in);
    if (version != kVersion) {
        throw IoError(path + ": unsupported checkpoint version " + std::to_string(version));
    }
    LoadedCheckpoint lc;
    ModelConfig& c = lc.model.cfg;
    c.vocab = static_cast<int>(get_u32(in));
    c.seq_len = static_cast<int>(get_u32(in));
    c.hidden = static_cast<int>(get_u32(in));
    c.blocks = static_cast<int>(get_u32(in));
    c.steps = static_cast<int>(get_u32(in));
    c.time_embed = get_u8(in) != 0;
    c.fusion = get_u8(in) != 0 ? FusionMode::Concat : FusionMode::Add;
    c.has_sc = get_u8(in) != 0;
    lc.model.trained_tokens = get_u64(in);
    lc.model.trained_steps = get_u64(in);
    const uint32_t n_params = get_u32(in);
    if (!in || n_params > 4096) throw IoError(path + ": bad parameter count");
    for (uint32_t i = 0; i < n_params; ++i) {
        std::string name = get_string(in);
        lc.model.params.add(std::move(name), get_tensor(in));
    }
    lc.has_opt = get_u8(in) != 0;
    if (lc.has_opt) {
        lc.opt.step = get_u64(in);
        for (uint32_t i = 0; i < n_params; ++i) {
            lc.opt.m.push_back(get_tensor(in));
            lc.opt.v.push_back(get_tensor(in));
        }
    }
    if (!in) throw IoError(path + ": truncated checkpoint");
    c.validate();
    return lc;
}

}  // namespace maskdiff
