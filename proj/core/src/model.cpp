#include "cabcnn/model.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cabcnn {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'C', 'A', 'B', 'C', 'N', 'N', '0', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_u64_le(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) {
        b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    }
    os.write(b, 8);
}

std::uint64_t read_u64_le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) {
        throw IoError("truncated checkpoint: unexpected end of file");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    }
    return v;
}

std::string hash_hex(std::uint64_t h) {
    std::ostringstream os;
    os << std::hex << std::setfill('0') << std::setw(16) << h;
    return os.str();
}

}  // namespace

ModelConfig ModelConfig::defaults() {
    ModelConfig cfg;
    cfg.conv_stages = {{16, 4, 4, 2, 0.15},
                       {32, 4, 4, 2, 0.15},
                       {32, 10, 10, 5, 0.10},
                       {128, 10, 10, 5, 0.0}};
    return cfg;
}

void ModelConfig::validate() const {
    if (conv_stages.empty()) {
        throw ConfigError("model config needs at least one conv stage");
    }
    for (const ConvStage& s : conv_stages) {
        if (s.filters <= 0 || s.kernel <= 0 || s.pool_size <= 0 || s.pool_stride <= 0) {
            throw ConfigError("conv stage counts must be positive");
        }
        if (s.dropout < 0.0 || s.dropout >= 1.0) {
            throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(s.dropout));
        }
    }
    if (feature_dim != conv_stages.back().filters) {
        throw ConfigError("feature_dim " + std::to_string(feature_dim) +
                          " must equal the last conv stage's filter count " +
                          std::to_string(conv_stages.back().filters));
    }
    if (n_classifiers < 1) {
        throw ConfigError("n_classifiers must be >= 1");
    }
    if (n_classes < 2) {
        throw ConfigError("n_classes must be >= 2");
    }
    if (bn_epsilon <= 0.0) {
        throw ConfigError("bn_epsilon must be positive");
    }
    if (bn_momentum < 0.0 || bn_momentum >= 1.0) {
        throw ConfigError("bn_momentum must be in [0,1)");
    }
}

std::string ModelConfig::to_json() const {
    json stages = json::array();
    for (const ConvStage& s : conv_stages) {
        stages.push_back({s.filters, s.kernel, s.pool_size, s.pool_stride, s.dropout});
    }
    json j = {{"conv_stages", stages},
              {"feature_dim", feature_dim},
              {"n_classifiers", n_classifiers},
              {"n_classes", n_classes},
              {"bn_momentum", bn_momentum},
              {"bn_epsilon", bn_epsilon},
              {"seed", seed}};
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid model config JSON: ") + e.what());
    }
    ModelConfig cfg;
    try {
        cfg.conv_stages.clear();
        for (const json& row : j.at("conv_stages")) {
            ConvStage s;
            s.filters = row.at(0).get<std::int64_t>();
            s.kernel = row.at(1).get<std::int64_t>();
            s.pool_size = row.at(2).get<std::int64_t>();
            s.pool_stride = row.at(3).get<std::int64_t>();
            s.dropout = row.at(4).get<double>();
            cfg.conv_stages.push_back(s);
        }
        cfg.feature_dim = j.at("feature_dim").get<std::int64_t>();
        cfg.n_classifiers = j.at("n_classifiers").get<std::int64_t>();
        cfg.n_classes = j.at("n_classes").get<std::int64_t>();
        cfg.bn_momentum = j.at("bn_momentum").get<double>();
        cfg.bn_epsilon = j.at("bn_epsilon").get<double>();
        cfg.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model config JSON missing or bad field: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::uint64_t ModelConfig::hash() const {
    const std::string s = to_json();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Model Model::build(const ModelConfig& cfg) {
    cfg.validate();
    Model m;
    m.config = cfg;
    Rng rng(cfg.seed);
    std::int64_t in_ch = 1;
    for (const ConvStage& s : cfg.conv_stages) {
        m.convs.emplace_back(in_ch, s.filters, s.kernel);
        m.convs.back().init(rng);
        m.pools.push_back(MaxPool1D{s.pool_size, s.pool_stride});
        in_ch = s.filters;
    }
    m.bn = BatchNorm1D(cfg.feature_dim, cfg.bn_momentum, cfg.bn_epsilon);
    m.acb = ACB(cfg.feature_dim, cfg.n_classifiers, cfg.n_classes);
    m.acb.init(rng);
    for (NamedParam& p : m.parameters()) {
        p.tensor->require_grad();
    }
    return m;
}

std::int64_t Model::out_timesteps(std::int64_t l) const {
    std::int64_t p = l;
    for (const MaxPool1D& pool : pools) {
        p = MaxPool1D::out_len(p, pool.stride);
    }
    return p;
}

Tensor Model::distill(const Tensor& x, bool training, std::uint64_t drop_seed,
                      DistillCtx* ctx) const {
    if (x.rank() != 2 || x.shape[0] != 1) {
        throw ShapeError("distill: expected [1,L] waveform, got " + shape_str(x.shape));
    }
    if (ctx) {
        ctx->stages.resize(convs.size());
    }
    Tensor cur = x;
    for (std::size_t i = 0; i < convs.size(); ++i) {
        DistillCtx::Stage* st = ctx ? &ctx->stages[i] : nullptr;
        Tensor z = convs[i].forward(cur, st ? &st->conv : nullptr);
        if (st) {
            st->conv_out = z;
        }
        const Tensor h = relu(z);
        const Tensor pooled = pools[i].forward(h, st ? &st->pool : nullptr);
        const double rate = config.conv_stages[i].dropout;
        cur = dropout_forward(pooled, rate, training, mix_seed(drop_seed, i),
                              st ? &st->drop_keep : nullptr);
    }
    return cur;
}

Tensor Model::distill_backward(const DistillCtx& ctx, const Tensor& g_features) {
    Tensor g = g_features;
    for (std::size_t i = convs.size(); i-- > 0;) {
        const DistillCtx::Stage& st = ctx.stages[i];
        const double rate = config.conv_stages[i].dropout;
        if (rate > 0.0) {
            g = dropout_backward(st.drop_keep, rate, g);
        }
        g = pools[i].backward(st.pool, g);
        g = relu_backward(st.conv_out, g);
        g = convs[i].backward(st.conv, g);
    }
    return g;
}

Tensor Model::forward(const Tensor& x, bool training, std::uint64_t drop_seed) {
    if (x.rank() != 2 || x.shape[0] != 1) {
        throw ShapeError("forward: expected [1,L] waveform, got " + shape_str(x.shape));
    }
    if (x.shape[1] < kMinInputLen) {
        throw DataError("input length " + std::to_string(x.shape[1]) +
                        " is below the minimum of " + std::to_string(kMinInputLen) + " samples");
    }
    const Tensor feat = distill(x, training, drop_seed, nullptr);
    const std::int64_t c = feat.shape[0];
    const std::int64_t p = feat.shape[1];
    Tensor batched({1, c, p});
    batched.data = feat.data;
    const Tensor normed = bn.forward(batched, nullptr, training);
    Tensor flat({c, p});
    flat.data = normed.data;
    return acb.forward_sequence(features_to_sequence(flat), nullptr);
}

std::vector<NamedParam> Model::parameters() {
    std::vector<NamedParam> out;
    for (std::size_t i = 0; i < convs.size(); ++i) {
        const std::string base = "conv" + std::to_string(i);
        out.push_back({base + ".weight", &convs[i].weight});
        out.push_back({base + ".bias", &convs[i].bias});
    }
    out.push_back({"bn.gamma", &bn.gamma});
    out.push_back({"bn.beta", &bn.beta});
    auto add_mlp = [&out](const std::string& base, SoftmaxMlp& mlp) {
        out.push_back({base + ".d1.weight", &mlp.d1.weight});
        out.push_back({base + ".d1.bias", &mlp.d1.bias});
        out.push_back({base + ".d2.weight", &mlp.d2.weight});
        out.push_back({base + ".d2.bias", &mlp.d2.bias});
        out.push_back({base + ".head.weight", &mlp.head.weight});
        out.push_back({base + ".head.bias", &mlp.head.bias});
    };
    for (std::size_t i = 0; i < acb.classifiers.size(); ++i) {
        add_mlp("acb.cls" + std::to_string(i), acb.classifiers[i]);
    }
    add_mlp("acb.attn", acb.attention);
    return out;
}

std::vector<NamedParam> Model::state_tensors() {
    std::vector<NamedParam> out = parameters();
    out.push_back({"bn.running_mean", &bn.running_mean});
    out.push_back({"bn.running_var", &bn.running_var});
    return out;
}

std::int64_t Model::count_parameters() {
    std::int64_t total = 0;
    for (const NamedParam& p : parameters()) {
        total += p.tensor->size();
    }
    return total;
}

void Model::save(const std::string& path, const std::string& meta_json) {
    json meta;
    try {
        meta = json::parse(meta_json);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("checkpoint meta must be valid JSON: ") + e.what());
    }
    const std::vector<NamedParam> tensors = state_tensors();
    json table = json::array();
    for (const NamedParam& p : tensors) {
        table.push_back({{"name", p.name}, {"shape", p.tensor->shape}});
    }
    const json header = {{"version", kCheckpointVersion},
                         {"config", json::parse(config.to_json())},
                         {"config_hash", hash_hex(config.hash())},
                         {"tensors", table},
                         {"meta", meta}};
    const std::string header_str = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw IoError("cannot open checkpoint for writing: " + path);
    }
    os.write(kMagic, 8);
    write_u64_le(os, header_str.size());
    os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const NamedParam& p : tensors) {
        for (double v : p.tensor->data) {
            write_u64_le(os, std::bit_cast<std::uint64_t>(v));
        }
    }
    if (!os) {
        throw IoError("failed writing checkpoint: " + path);
    }
}

Model Model::load(const std::string& path, std::string* meta_json) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("cannot open checkpoint: " + path);
    }
    char magic[8];
    is.read(magic, 8);
    if (!is || std::string(magic, 8) != std::string(kMagic, 8)) {
        throw IoError("not a checkpoint file (bad magic): " + path);
    }
    const std::uint64_t header_len = read_u64_le(is);
    if (header_len == 0 || header_len > (1ULL << 24)) {
        throw IoError("corrupt checkpoint header length");
    }
    std::string header_str(header_len, '\0');
    is.read(header_str.data(), static_cast<std::streamsize>(header_len));
    if (!is) {
        throw IoError("truncated checkpoint: header cut short");
    }
    json header;
    try {
        header = json::parse(header_str);
    } catch (const json::exception&) {
        throw IoError("corrupt checkpoint header (bad JSON)");
    }
    if (!header.contains("version") || header["version"].get<std::uint32_t>() != kCheckpointVersion) {
        throw IoError("unsupported checkpoint version");
    }
    const ModelConfig cfg = ModelConfig::from_json(header.at("config").dump());
    if (header.at("config_hash").get<std::string>() != hash_hex(cfg.hash())) {
        throw IoError("checkpoint config hash mismatch (file does not match its config)");
    }
    Model m = build(cfg);
    const std::vector<NamedParam> tensors = m.state_tensors();
    const json& table = header.at("tensors");
    if (table.size() != tensors.size()) {
        throw IoError("checkpoint tensor table does not match this architecture");
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (table[i].at("name").get<std::string>() != tensors[i].name ||
            table[i].at("shape").get<std::vector<std::int64_t>>() != tensors[i].tensor->shape) {
            throw IoError("checkpoint tensor mismatch at '" + tensors[i].name + "'");
        }
        for (double& v : tensors[i].tensor->data) {
            v = std::bit_cast<double>(read_u64_le(is));
        }
    }
    is.peek();
    if (!is.eof()) {
        throw IoError("checkpoint has trailing bytes");
    }
    if (meta_json) {
        *meta_json = header.contains("meta") ? header["meta"].dump() : "{}";
    }
    return m;
}

Tensor features_to_sequence(const Tensor& features) {
    if (features.rank() != 2) {
        throw ShapeError("features_to_sequence expects [C,p], got " + shape_str(features.shape));
    }
    const std::int64_t c = features.shape[0];
    const std::int64_t p = features.shape[1];
    Tensor seq({p, c});
    for (std::int64_t i = 0; i < c; ++i) {
        for (std::int64_t t = 0; t < p; ++t) {
            seq.at(t, i) = features.at(i, t);
        }
    }
    return seq;
}

Tensor sequence_to_features(const Tensor& seq) {
    if (seq.rank() != 2) {
        throw ShapeError("sequence_to_features expects [p,C], got " + shape_str(seq.shape));
    }
    const std::int64_t p = seq.shape[0];
    const std::int64_t c = seq.shape[1];
    Tensor features({c, p});
    for (std::int64_t t = 0; t < p; ++t) {
        for (std::int64_t i = 0; i < c; ++i) {
            features.at(i, t) = seq.at(t, i);
        }
    }
    return features;
}

}  // namespace cabcnn
