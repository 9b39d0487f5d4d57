#include "augdiff/denoiser.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "augdiff/common.hpp"
#include "augdiff/rng.hpp"

using nlohmann::json;

namespace augdiff {

namespace {

constexpr char kDaeMagic[4] = {'A', 'U', 'G', 'D'};

Tensor xavier_uniform(size_t rows, size_t cols, Rng& rng) {
    double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Tensor t(rows, cols);
    for (size_t i = 0; i < t.numel(); ++i) {
        t[i] = (2.0 * rng.next_double() - 1.0) * bound;
    }
    return t;
}

}  // namespace

std::vector<Tensor*> DenoiserParams::parameters() {
    std::vector<Tensor*> out = {&w_in, &b_in, &w_time, &b_time, &cond_table};
    for (auto& blk : blocks) {
        out.push_back(&blk.w1);
        out.push_back(&blk.b1);
        out.push_back(&blk.w2);
        out.push_back(&blk.b2);
    }
    out.push_back(&w_out);
    out.push_back(&b_out);
    return out;
}

std::vector<const Tensor*> DenoiserParams::parameters() const {
    auto mut = const_cast<DenoiserParams*>(this)->parameters();
    return std::vector<const Tensor*>(mut.begin(), mut.end());
}

std::vector<std::string> DenoiserParams::parameter_names() const {
    std::vector<std::string> names = {"w_in", "b_in", "w_time", "b_time", "cond_table"};
    for (size_t l = 0; l < blocks.size(); ++l) {
        std::string base = "block" + std::to_string(l) + ".";
        names.push_back(base + "w1");
        names.push_back(base + "b1");
        names.push_back(base + "w2");
        names.push_back(base + "b2");
    }
    names.push_back("w_out");
    names.push_back("b_out");
    return names;
}

DenoiserParams init_denoiser(const DenoiserConfig& cfg, uint64_t seed) {
    if (cfg.dim < 1 || cfg.depth < 1 || cfg.width < 1 || cfg.embed < 2 ||
        cfg.embed % 2 != 0) {
        throw std::invalid_argument("init_denoiser: bad architecture config");
    }
    Rng rng(mix_seed({seed, static_cast<uint64_t>(StreamKind::Init)}));
    const size_t d = static_cast<size_t>(cfg.dim);
    const size_t h = static_cast<size_t>(cfg.width);
    const size_t e = static_cast<size_t>(cfg.embed);

    DenoiserParams p;
    p.cfg = cfg;
    p.w_in = xavier_uniform(h, d, rng);
    p.b_in = Tensor(1, h);
    p.w_time = xavier_uniform(e, e, rng);
    p.b_time = Tensor(1, e);
    p.cond_table = xavier_uniform(kNumConditions, e, rng);
    p.blocks.resize(static_cast<size_t>(cfg.depth));
    for (auto& blk : p.blocks) {
        blk.w1 = xavier_uniform(h, h + 2 * e, rng);
        blk.b1 = Tensor(1, h);
        blk.w2 = xavier_uniform(h, h, rng);
        blk.b2 = Tensor(1, h);
    }
    p.w_out = Tensor(d, h);
    p.b_out = Tensor(1, d);
    return p;
}

Tensor time_embedding(int t, int dim) {
    if (dim < 2 || dim % 2 != 0) {
        throw std::invalid_argument("time_embedding: dim must be even and >= 2");
    }
    if (t < 0) throw std::invalid_argument("time_embedding: t must be >= 0");
    Tensor out(1, static_cast<size_t>(dim));
    const int half = dim / 2;
    for (int k = 0; k < half; ++k) {
        double omega = std::pow(10000.0, -2.0 * k / static_cast<double>(dim));
        out[static_cast<size_t>(2 * k)] = std::sin(t * omega);
        out[static_cast<size_t>(2 * k + 1)] = std::cos(t * omega);
    }
    return out;
}

Tensor time_embedding_rows(const std::vector<int>& ts, int dim) {
    Tensor out(ts.size(), static_cast<size_t>(dim));
    for (size_t r = 0; r < ts.size(); ++r) {
        Tensor row = time_embedding(ts[r], dim);
        for (size_t c = 0; c < row.numel(); ++c) out.at(r, c) = row[c];
    }
    return out;
}

DenoiserTapeParams register_denoiser(Tape& tape, const DenoiserParams& p) {
    DenoiserTapeParams reg;
    for (const Tensor* t : p.parameters()) {
        reg.ids.push_back(tape.param(*t));
    }
    return reg;
}

int denoiser_forward(Tape& tape, const DenoiserTapeParams& reg, const DenoiserConfig& cfg,
                     int zt_node, const std::vector<int>& t_rows,
                     const std::vector<int>& y_rows) {
    const Tensor& zt = tape.value(zt_node);
    if (zt.cols() != static_cast<size_t>(cfg.dim)) {
        throw std::invalid_argument("denoiser_forward: feature dimension mismatch");
    }
    if (t_rows.size() != zt.rows() || y_rows.size() != zt.rows()) {
        throw std::invalid_argument("denoiser_forward: one (t, y) per row required");
    }
    std::vector<size_t> cond_rows(y_rows.size());
    for (size_t i = 0; i < y_rows.size(); ++i) {
        if (y_rows[i] < 0 || y_rows[i] >= kNumConditions) {
            throw std::invalid_argument("denoiser_forward: condition id out of range");
        }
        cond_rows[i] = cfg.conditional ? static_cast<size_t>(y_rows[i]) : 0u;
    }

    // parameter ids in declared order
    size_t pi = 0;
    const int w_in = reg.ids[pi++];
    const int b_in = reg.ids[pi++];
    const int w_time = reg.ids[pi++];
    const int b_time = reg.ids[pi++];
    const int cond_table = reg.ids[pi++];

    const int sinusoid = tape.input(time_embedding_rows(t_rows, cfg.embed));
    const int temb = tape.add(tape.matmul(sinusoid, w_time, false, true), b_time);
    const int cemb = tape.gather_rows(cond_table, cond_rows);

    int h = tape.add(tape.matmul(zt_node, w_in, false, true), b_in);
    for (int l = 0; l < cfg.depth; ++l) {
        const int w1 = reg.ids[pi++];
        const int b1 = reg.ids[pi++];
        const int w2 = reg.ids[pi++];
        const int b2 = reg.ids[pi++];
        int x = tape.concat_cols(tape.concat_cols(h, temb), cemb);
        int u = tape.tanh(tape.add(tape.matmul(x, w1, false, true), b1));
        int blk = tape.add(tape.matmul(u, w2, false, true), b2);
        h = tape.add(h, blk);
    }
    const int w_out = reg.ids[pi++];
    const int b_out = reg.ids[pi++];
    return tape.add(tape.matmul(h, w_out, false, true), b_out);
}

Tensor denoise_predict_batch(const DenoiserParams& p, const Tensor& zt_rows, int t,
                             const std::vector<int>& y_rows,
                             uint64_t* instance_eval_count) {
    if (t < 1) throw std::invalid_argument("denoise_predict_batch: t must be >= 1");
    Tape tape;
    DenoiserTapeParams reg = register_denoiser(tape, p);
    int zt = tape.input(zt_rows);
    std::vector<int> t_rows(zt_rows.rows(), t);
    int out = denoiser_forward(tape, reg, p.cfg, zt, t_rows, y_rows);
    if (instance_eval_count) *instance_eval_count += zt_rows.rows();
    return tape.value(out);
}

Tensor denoise_predict(const DenoiserParams& p, const Tensor& z_t, int t, int y) {
    if (z_t.rows() != 1) {
        throw std::invalid_argument("denoise_predict: expected a single 1 x D row");
    }
    return denoise_predict_batch(p, z_t, t, {y});
}

void save_dae_checkpoint(const std::string& path, const DaeModel& model) {
    const DenoiserParams& p = model.params;
    json header;
    header["version"] = 1;
    header["dim"] = p.cfg.dim;
    header["depth"] = p.cfg.depth;
    header["width"] = p.cfg.width;
    header["embed"] = p.cfg.embed;
    header["conditional"] = p.cfg.conditional;
    header["schedule"] = {{"type", "cosine"}, {"T", model.schedule.T}, {"s", model.schedule.cosine_s}};
    header["mean"] = std::vector<double>(model.stand.mean.data(),
                                         model.stand.mean.data() + model.stand.mean.numel());
    header["std"] = std::vector<double>(model.stand.stdev.data(),
                                        model.stand.stdev.data() + model.stand.stdev.numel());
    auto tensors = p.parameters();
    auto names = p.parameter_names();
    header["tensors"] = json::array();
    for (size_t i = 0; i < tensors.size(); ++i) {
        header["tensors"].push_back({{"name", names[i]},
                                     {"rows", tensors[i]->rows()},
                                     {"cols", tensors[i]->cols()}});
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open for writing: " + path);
    out.write(kDaeMagic, 4);
    std::string hs = header.dump();
    uint32_t version = 1, hlen = static_cast<uint32_t>(hs.size());
    unsigned char v[4] = {static_cast<unsigned char>(version & 0xff),
                          static_cast<unsigned char>((version >> 8) & 0xff),
                          static_cast<unsigned char>((version >> 16) & 0xff),
                          static_cast<unsigned char>((version >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(v), 4);
    unsigned char l[4] = {static_cast<unsigned char>(hlen & 0xff),
                          static_cast<unsigned char>((hlen >> 8) & 0xff),
                          static_cast<unsigned char>((hlen >> 16) & 0xff),
                          static_cast<unsigned char>((hlen >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(l), 4);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const Tensor* t : tensors) {
        std::vector<float> buf(t->numel());
        for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>((*t)[i]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * 4));
    }
    if (!out) throw io_error("write failed: " + path);
}

DaeModel load_dae_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw missing_artifact_error("DAE checkpoint not found: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kDaeMagic, 4) != 0) {
        throw format_error("bad DAE checkpoint magic: " + path);
    }
    unsigned char raw[4];
    in.read(reinterpret_cast<char*>(raw), 4);
    if (!in) throw io_error("truncated DAE checkpoint: " + path);
    uint32_t version = raw[0] | (raw[1] << 8) | (raw[2] << 16) | (raw[3] << 24);
    if (version != 1) throw format_error("unsupported DAE checkpoint version");
    in.read(reinterpret_cast<char*>(raw), 4);
    if (!in) throw io_error("truncated DAE checkpoint: " + path);
    uint32_t hlen = raw[0] | (raw[1] << 8) | (raw[2] << 16) | (raw[3] << 24);
    std::string hs(hlen, '\0');
    in.read(hs.data(), hlen);
    if (!in) throw io_error("truncated DAE checkpoint header: " + path);
    json header;
    try {
        header = json::parse(hs);
    } catch (const json::exception& e) {
        throw format_error("DAE header parse error: " + std::string(e.what()));
    }

    DaeModel model;
    DenoiserConfig cfg;
    cfg.dim = header.at("dim").get<int>();
    cfg.depth = header.at("depth").get<int>();
    cfg.width = header.at("width").get<int>();
    cfg.embed = header.at("embed").get<int>();
    cfg.conditional = header.at("conditional").get<bool>();
    model.schedule = make_cosine_schedule(header.at("schedule").at("T").get<int>(),
                                          header.at("schedule").at("s").get<double>());
    auto mean = header.at("mean").get<std::vector<double>>();
    auto stdev = header.at("std").get<std::vector<double>>();
    model.stand.mean = Tensor::row(mean);
    model.stand.stdev = Tensor::row(stdev);

    model.params = init_denoiser(cfg, 0);  // shapes only; payload overwrites
    auto tensors = model.params.parameters();
    auto names = model.params.parameter_names();
    const auto& decl = header.at("tensors");
    if (decl.size() != tensors.size()) {
        throw format_error("DAE checkpoint tensor list mismatch");
    }
    for (size_t i = 0; i < tensors.size(); ++i) {
        if (decl[i].at("name").get<std::string>() != names[i] ||
            decl[i].at("rows").get<size_t>() != tensors[i]->rows() ||
            decl[i].at("cols").get<size_t>() != tensors[i]->cols()) {
            throw format_error("DAE checkpoint tensor header mismatch: " + names[i]);
        }
        std::vector<float> buf(tensors[i]->numel());
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * 4));
        if (!in) throw io_error("truncated DAE checkpoint payload: " + path);
        for (size_t j = 0; j < buf.size(); ++j) (*tensors[i])[j] = buf[j];
    }
    return model;
}

}  // namespace augdiff
