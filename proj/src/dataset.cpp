#include "augdiff/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "augdiff/common.hpp"
#include "augdiff/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace augdiff {

namespace {

constexpr char kBagMagic[4] = {'A', 'U', 'G', 'B'};

void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw io_error("truncated file while reading " + what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void write_bag_file(const std::string& path, const Tensor& features) {
    if (features.rows() == 0 || features.cols() == 0) {
        throw std::invalid_argument("write_bag_file: empty bag");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open for writing: " + path);
    out.write(kBagMagic, 4);
    write_u32(out, 1u);
    write_u32(out, static_cast<uint32_t>(features.rows()));
    write_u32(out, static_cast<uint32_t>(features.cols()));
    std::vector<float> buf(features.numel());
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(features[i]);
    static_assert(sizeof(float) == 4);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * 4));
    if (!out) throw io_error("write failed: " + path);
}

Tensor read_bag_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw missing_artifact_error("bag file not found: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kBagMagic, 4) != 0) {
        throw format_error("bad bag magic: " + path);
    }
    uint32_t version = read_u32(in, "bag version");
    if (version != 1) throw format_error("unsupported bag version: " + path);
    uint32_t n = read_u32(in, "bag N");
    uint32_t d = read_u32(in, "bag D");
    if (n == 0 || d == 0) throw format_error("empty bag rejected: " + path);
    std::vector<float> buf(static_cast<size_t>(n) * d);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * 4));
    if (!in) throw io_error("truncated bag payload: " + path);
    Tensor t(n, d);
    for (size_t i = 0; i < buf.size(); ++i) t[i] = static_cast<double>(buf[i]);
    return t;
}

void write_manifest(const std::string& path, const BagManifest& m) {
    json j;
    j["version"] = m.version;
    j["dim"] = m.dim;
    j["bags"] = json::array();
    for (const auto& r : m.bags) {
        j["bags"].push_back({{"id", r.id}, {"label", r.label}, {"file", r.file}, {"n", r.n}});
    }
    std::ofstream out(path);
    if (!out) throw io_error("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

BagManifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw missing_artifact_error("manifest not found: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw format_error("manifest parse error: " + std::string(e.what()));
    }
    BagManifest m;
    try {
        m.version = j.at("version").get<int>();
        m.dim = j.at("dim").get<int>();
        for (const auto& b : j.at("bags")) {
            BagManifest::Record r;
            r.id = b.at("id").get<std::string>();
            r.label = b.at("label").get<int>();
            r.file = b.at("file").get<std::string>();
            r.n = b.at("n").get<int>();
            m.bags.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw format_error("manifest schema error: " + std::string(e.what()));
    }
    if (m.version != 1) throw format_error("unsupported manifest version");
    std::set<std::string> ids;
    for (const auto& r : m.bags) {
        if (!ids.insert(r.id).second) {
            throw format_error("duplicate bag id in manifest: " + r.id);
        }
    }
    return m;
}

std::vector<Bag> load_bags(const std::string& manifest_path,
                           const std::vector<std::string>* subset_ids) {
    BagManifest m = read_manifest(manifest_path);
    fs::path dir = fs::path(manifest_path).parent_path();
    std::optional<std::set<std::string>> want;
    if (subset_ids) want.emplace(subset_ids->begin(), subset_ids->end());
    std::vector<Bag> bags;
    for (const auto& r : m.bags) {
        if (want && !want->count(r.id)) continue;
        Bag b;
        b.id = r.id;
        b.label = r.label;
        b.features = read_bag_file((dir / r.file).string());
        if (b.features.rows() != static_cast<size_t>(r.n) ||
            b.features.cols() != static_cast<size_t>(m.dim)) {
            throw format_error("bag file does not match manifest record: " + r.id);
        }
        bags.push_back(std::move(b));
    }
    if (want && bags.size() != want->size()) {
        throw std::invalid_argument("load_bags: subset contains unknown bag ids");
    }
    return bags;
}

Standardizer standardizer_fit(const Tensor& features) {
    if (features.rows() < 2) {
        throw std::invalid_argument("standardizer_fit: need at least 2 vectors");
    }
    const size_t n = features.rows();
    const size_t d = features.cols();
    Standardizer s;
    s.mean = Tensor(1, d);
    s.stdev = Tensor(1, d);
    for (size_t c = 0; c < d; ++c) {
        double m = 0.0;
        for (size_t r = 0; r < n; ++r) m += features.at(r, c);
        m /= static_cast<double>(n);
        double var = 0.0;
        for (size_t r = 0; r < n; ++r) {
            double dlt = features.at(r, c) - m;
            var += dlt * dlt;
        }
        var /= static_cast<double>(n);
        s.mean[c] = m;
        s.stdev[c] = std::max(std::sqrt(var), 1e-6);
    }
    return s;
}

Tensor standardize(const Tensor& features, const Standardizer& s) {
    if (features.cols() != s.mean.cols()) {
        throw std::invalid_argument("standardize: dimension mismatch");
    }
    Tensor out(features.rows(), features.cols());
    for (size_t r = 0; r < features.rows(); ++r) {
        for (size_t c = 0; c < features.cols(); ++c) {
            out.at(r, c) = (features.at(r, c) - s.mean[c]) / s.stdev[c];
        }
    }
    return out;
}

Tensor destandardize(const Tensor& features, const Standardizer& s) {
    if (features.cols() != s.mean.cols()) {
        throw std::invalid_argument("destandardize: dimension mismatch");
    }
    Tensor out(features.rows(), features.cols());
    for (size_t r = 0; r < features.rows(); ++r) {
        for (size_t c = 0; c < features.cols(); ++c) {
            out.at(r, c) = features.at(r, c) * s.stdev[c] + s.mean[c];
        }
    }
    return out;
}

Splits make_splits(const BagManifest& manifest, const SplitPlan& plan) {
    // group ids by label, shuffle each group, then deal round-robin so every
    // fold keeps the label mix
    std::map<int, std::vector<std::string>> by_label;
    for (const auto& r : manifest.bags) by_label[r.label].push_back(r.id);

    Rng rng(mix_seed({plan.seed, static_cast<uint64_t>(StreamKind::Shuffle)}));
    for (auto& [label, ids] : by_label) {
        for (size_t i = ids.size(); i > 1; --i) {
            size_t j = rng.next_below(i);
            std::swap(ids[i - 1], ids[j]);
        }
    }

    Splits out;
    out.type = plan.type;
    if (plan.type == SplitPlan::Type::KFold) {
        if (plan.k < 2) throw std::invalid_argument("make_splits: k must be >= 2");
        for (const auto& [label, ids] : by_label) {
            if (ids.size() < static_cast<size_t>(plan.k)) {
                throw std::invalid_argument("make_splits: fewer bags than folds for a class");
            }
        }
        out.folds.assign(static_cast<size_t>(plan.k), {});
        size_t cursor = 0;
        for (const auto& [label, ids] : by_label) {
            for (const auto& id : ids) {
                out.folds[cursor % static_cast<size_t>(plan.k)].push_back(id);
                ++cursor;
            }
        }
    } else {
        if (plan.train_frac <= 0 || plan.val_frac < 0 ||
            plan.train_frac + plan.val_frac >= 1.0) {
            throw std::invalid_argument("make_splits: bad fractions");
        }
        out.folds.assign(3, {});
        for (const auto& [label, ids] : by_label) {
            size_t n = ids.size();
            size_t n_train = static_cast<size_t>(std::llround(plan.train_frac * n));
            size_t n_val = static_cast<size_t>(std::llround(plan.val_frac * n));
            if (n_train + n_val > n) n_val = n - n_train;
            for (size_t i = 0; i < n; ++i) {
                size_t fold = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
                out.folds[fold].push_back(ids[i]);
            }
        }
    }
    for (auto& fold : out.folds) std::sort(fold.begin(), fold.end());
    return out;
}

void write_splits(const std::string& path, const Splits& s) {
    json j;
    j["type"] = s.type == SplitPlan::Type::KFold ? "kfold" : "fixed";
    j["folds"] = s.folds;
    std::ofstream out(path);
    if (!out) throw io_error("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

Splits read_splits(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw missing_artifact_error("splits file not found: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw format_error("splits parse error: " + std::string(e.what()));
    }
    Splits s;
    std::string type = j.at("type").get<std::string>();
    s.type = type == "kfold" ? SplitPlan::Type::KFold : SplitPlan::Type::Fixed;
    s.folds = j.at("folds").get<std::vector<std::vector<std::string>>>();
    return s;
}

}  // namespace augdiff
