#include "granet/network.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "granet/error.hpp"
#include "granet/ops.hpp"

namespace granet::net {

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

std::string join_widths(const std::array<std::size_t, kEncoderLevels>& w) {
    std::string s;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(w[i]);
    }
    return s;
}

std::array<std::size_t, kEncoderLevels> parse_widths(const std::string& text) {
    std::array<std::size_t, kEncoderLevels> w{};
    std::stringstream ss(text);
    std::string item;
    std::size_t n = 0;
    while (std::getline(ss, item, ',')) {
        if (n == kEncoderLevels) throw ConfigError("encoder_widths needs exactly 3 values");
        const long long v = parse_int_value("encoder_widths", item);
        if (v <= 0) throw ConfigError("encoder_widths must be positive");
        w[n++] = static_cast<std::size_t>(v);
    }
    if (n != kEncoderLevels) throw ConfigError("encoder_widths needs exactly 3 values");
    return w;
}

std::size_t read_size(const IniDocument& doc, const std::string& section, const std::string& key,
                      std::size_t fallback) {
    auto v = doc.get(section, key);
    if (!v) return fallback;
    const long long n = parse_int_value(key, *v);
    if (n < 0) throw ConfigError(key + " must not be negative");
    return static_cast<std::size_t>(n);
}

bool read_bool(const IniDocument& doc, const std::string& section, const std::string& key, bool fallback) {
    auto v = doc.get(section, key);
    return v ? parse_bool_value(key, *v) : fallback;
}

} // namespace

void NetworkConfig::validate() const {
    if (class_count < 2) throw ConfigError("class_count must be at least 2");
    if (input_width != 5) throw ConfigError("input_width must be 5 (x, y, z, intensity, return number)");
    if (k == 0) throw ConfigError("k must be positive");
    if (points_per_block == 0) throw ConfigError("points_per_block must be positive");
    if (decimation < 2) throw ConfigError("decimation must be at least 2");
    if (lift_width == 0) throw ConfigError("lift_width must be positive");
    for (std::size_t i = 0; i < kEncoderLevels; ++i) {
        if (encoder_widths[i] == 0) throw ConfigError("encoder_widths must be positive");
        if (i > 0 && encoder_widths[i] <= encoder_widths[i - 1]) {
            throw ConfigError("encoder_widths must be strictly increasing");
        }
    }
    if (interpolation_k != 1 && interpolation_k != 3) throw ConfigError("interpolation_k must be 1 or 3");
    if (gra_reduction == 0) throw ConfigError("gra_reduction must be positive");
    if (!losda.sde && !losda.dfe) throw ConfigError("LoSDA needs at least one of sde or dfe enabled");
}

std::array<std::size_t, kEncoderLevels + 1> NetworkConfig::level_sizes() const {
    std::array<std::size_t, kEncoderLevels + 1> n{};
    n[0] = points_per_block;
    for (std::size_t l = 1; l <= kEncoderLevels; ++l) n[l] = ceil_div(n[l - 1], decimation);
    return n;
}

NetworkConfig NetworkConfig::miniature() {
    NetworkConfig c;
    c.points_per_block = 64;
    c.k = 4;
    c.encoder_widths = {8, 16, 32};
    c.lift_width = 8;
    // The deepest level holds a single point, where batch statistics are
    // undefined.
    c.batch_norm = false;
    return c;
}

void NetworkConfig::write_to(IniDocument& doc, const std::string& s) const {
    doc.set(s, "class_count", std::to_string(class_count));
    doc.set(s, "input_width", std::to_string(input_width));
    doc.set(s, "k", std::to_string(k));
    doc.set(s, "points_per_block", std::to_string(points_per_block));
    doc.set(s, "decimation", std::to_string(decimation));
    doc.set(s, "encoder_widths", join_widths(encoder_widths));
    doc.set(s, "lift_width", std::to_string(lift_width));
    doc.set(s, "gra_mode", gra::to_string(gra_mode));
    doc.set(s, "gra_reduction", std::to_string(gra_reduction));
    doc.set(s, "sde", losda.sde ? "true" : "false");
    doc.set(s, "dfe", losda.dfe ? "true" : "false");
    doc.set(s, "ede", losda.ede ? "true" : "false");
    doc.set(s, "attention_pool", losda.attention_pool ? "true" : "false");
    doc.set(s, "relative_ede", losda.relative_ede ? "true" : "false");
    doc.set(s, "interpolation_k", std::to_string(interpolation_k));
    doc.set(s, "batch_norm", batch_norm ? "true" : "false");
    doc.set(s, "seed", std::to_string(seed));
}

NetworkConfig NetworkConfig::read_from(const IniDocument& doc, const std::string& s) {
    static const char* known[] = {"class_count",   "input_width", "k",   "points_per_block", "decimation",
                                  "encoder_widths", "lift_width", "gra_mode", "gra_reduction", "sde",
                                  "dfe",           "ede",         "attention_pool", "relative_ede",
                                  "interpolation_k", "batch_norm", "seed", "preset"};
    for (const auto& [key, value] : doc.section(s)) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw ConfigError("unknown key '" + key + "' in [" + s + "]");
    }
    NetworkConfig c;
    if (auto preset = doc.get(s, "preset")) {
        if (*preset == "miniature") c = miniature();
        else if (*preset != "default") throw ConfigError("unknown preset '" + *preset + "'");
    }
    c.class_count = read_size(doc, s, "class_count", c.class_count);
    c.input_width = read_size(doc, s, "input_width", c.input_width);
    c.k = read_size(doc, s, "k", c.k);
    c.points_per_block = read_size(doc, s, "points_per_block", c.points_per_block);
    c.decimation = read_size(doc, s, "decimation", c.decimation);
    if (auto w = doc.get(s, "encoder_widths")) c.encoder_widths = parse_widths(*w);
    c.lift_width = read_size(doc, s, "lift_width", c.lift_width);
    if (auto m = doc.get(s, "gra_mode")) c.gra_mode = gra::parse_gra_mode(*m);
    c.gra_reduction = read_size(doc, s, "gra_reduction", c.gra_reduction);
    c.losda.sde = read_bool(doc, s, "sde", c.losda.sde);
    c.losda.dfe = read_bool(doc, s, "dfe", c.losda.dfe);
    c.losda.ede = read_bool(doc, s, "ede", c.losda.ede);
    c.losda.attention_pool = read_bool(doc, s, "attention_pool", c.losda.attention_pool);
    c.losda.relative_ede = read_bool(doc, s, "relative_ede", c.losda.relative_ede);
    c.interpolation_k = read_size(doc, s, "interpolation_k", c.interpolation_k);
    c.batch_norm = read_bool(doc, s, "batch_norm", c.batch_norm);
    if (auto v = doc.get(s, "seed")) {
        const long long seed = parse_int_value("seed", *v);
        if (seed < 0) throw ConfigError("seed must not be negative");
        c.seed = static_cast<std::uint64_t>(seed);
    }
    c.validate();
    return c;
}

NetworkConfig build_ablation(char tag, NetworkConfig base) {
    losda::LosdaFlags f;
    f.relative_ede = base.losda.relative_ede;
    switch (tag) {
        case 'A': f.sde = true; f.dfe = false; f.ede = false; f.attention_pool = false; break;
        case 'B': f.sde = false; f.dfe = true; f.ede = false; f.attention_pool = false; break;
        case 'C': f.sde = true; f.dfe = true; f.ede = false; f.attention_pool = false; break;
        case 'D': f.sde = true; f.dfe = true; f.ede = true; f.attention_pool = false; break;
        case 'E': f.sde = true; f.dfe = true; f.ede = true; f.attention_pool = true; break;
        default: throw ConfigError(std::string("unknown ablation tag '") + tag + "' (expected A-E)");
    }
    base.losda = f;
    base.gra_mode = gra::GraMode::Off;
    return base;
}

std::array<std::size_t, kEncoderLevels + 1> Pyramid::counts() const {
    std::array<std::size_t, kEncoderLevels + 1> n{};
    for (std::size_t l = 0; l <= kEncoderLevels; ++l) n[l] = positions[l].size();
    return n;
}

Pyramid build_pyramid(std::span<const Vec3> positions, const NetworkConfig& config) {
    if (positions.size() != config.points_per_block) {
        throw ContractError("block holds " + std::to_string(positions.size()) + " points, config expects " +
                            std::to_string(config.points_per_block));
    }
    const auto sizes = config.level_sizes();
    Pyramid p;
    p.positions[0].assign(positions.begin(), positions.end());
    for (std::size_t l = 0; l < kEncoderLevels; ++l) {
        p.sampled[l] = spatial::farthest_point_sampling(p.positions[l], sizes[l + 1]);
        auto& next = p.positions[l + 1];
        next.reserve(sizes[l + 1]);
        for (std::size_t i : p.sampled[l]) next.push_back(p.positions[l][i]);
        p.groups[l] = spatial::knn_search(p.positions[l], next, config.k);
        p.upsample[l] = spatial::interpolation_index(next, p.positions[l], config.interpolation_k);
    }
    return p;
}

GraNetModel::GraNetModel(NetworkConfig config) : config_(config) {
    config_.validate();
    nn::Initializer init(config_.seed);
    const bool bn = config_.batch_norm;
    const nn::MlpOptions mlp{.batch_norm = bn, .relu = true, .bias = true};
    const auto sizes = config_.level_sizes();
    const auto& w = config_.encoder_widths;

    lift = nn::SharedMlp(config_.input_width - 3, config_.lift_width, mlp, init);
    for (std::size_t l = 0; l < kEncoderLevels; ++l) {
        const std::size_t d_in = l == 0 ? config_.lift_width : w[l - 1];
        const std::size_t d = std::max<std::size_t>(1, w[l] / 2);
        encoders[l] = losda::LosdaLayer(d_in, d, w[l], config_.losda, bn, init);
    }
    // Decoder at level l fuses the upsampled level l+1 features with the
    // level l skip features.
    for (std::size_t i = 0; i < kEncoderLevels; ++i) {
        const std::size_t l = kEncoderLevels - 1 - i;
        const std::size_t coarse = w[l];
        const std::size_t skip = l == 0 ? config_.lift_width : w[l - 1];
        attention[l] = gra::GraModule(config_.gra_mode, sizes[l], coarse + skip, config_.gra_reduction, bn, init);
        propagate[l] = nn::SharedMlp(coarse + skip, skip, mlp, init);
    }
    head = nn::SharedMlp(config_.lift_width, config_.class_count, {.batch_norm = false, .relu = false, .bias = true},
                         init);
}

Tensor GraNetModel::forward(const Block& block, const Pyramid& pyramid, bool training) const {
    const std::size_t n = block.size();
    if (n != config_.points_per_block || block.features.size() != n) {
        throw ContractError("block holds " + std::to_string(n) + " points, config expects " +
                            std::to_string(config_.points_per_block));
    }
    if (pyramid.positions[0].size() != n) throw ContractError("pyramid was built for a different block");

    std::vector<double> extra;
    extra.reserve(n * 2);
    for (const auto& f : block.features) {
        extra.push_back(f[3]);
        extra.push_back(f[4]);
    }
    std::array<Tensor, kEncoderLevels + 1> skip;
    skip[0] = lift.forward(Tensor::from({n, 2}, std::move(extra)), training);
    for (std::size_t l = 0; l < kEncoderLevels; ++l) {
        losda::LocalNeighborhood hood{pyramid.positions[l], pyramid.sampled[l], &pyramid.groups[l]};
        skip[l + 1] = encoders[l].forward(skip[l], hood, training);
    }
    Tensor x = skip[kEncoderLevels];
    for (std::size_t i = 0; i < kEncoderLevels; ++i) {
        const std::size_t l = kEncoderLevels - 1 - i;
        const auto& up = pyramid.upsample[l];
        Tensor lifted = ad::gather_weighted(x, up.neighbors.indices, up.weights, up.neighbors.k);
        Tensor fused = attention[l].forward(ad::concat({lifted, skip[l]}, 1), training);
        x = propagate[l].forward(fused, training);
    }
    return head.forward(x, training);
}

Tensor GraNetModel::forward(const Block& block, bool training) const {
    return forward(block, build_pyramid(block.positions, config_), training);
}

nn::ParamList GraNetModel::parameters() const {
    nn::ParamList out;
    lift.collect(out, "lift");
    for (std::size_t l = 0; l < kEncoderLevels; ++l) encoders[l].collect(out, "losda" + std::to_string(l + 1));
    for (std::size_t l = 0; l < kEncoderLevels; ++l) attention[l].collect(out, "gra" + std::to_string(l + 1));
    for (std::size_t l = 0; l < kEncoderLevels; ++l) propagate[l].collect(out, "fp" + std::to_string(l + 1));
    head.collect(out, "head");
    return out;
}

std::vector<Tensor> GraNetModel::learnable() const {
    std::vector<Tensor> out;
    for (const auto& p : parameters())
        if (p.kind == nn::ParamKind::Learnable) out.push_back(p.tensor);
    return out;
}

std::size_t GraNetModel::param_count() const { return nn::count_learnable(parameters()); }

std::vector<ParamGroup> GraNetModel::param_breakdown() const {
    std::vector<ParamGroup> groups;
    for (const auto& p : parameters()) {
        if (p.kind != nn::ParamKind::Learnable) continue;
        const std::string group = p.name.substr(0, p.name.find('.'));
        if (groups.empty() || groups.back().name != group) groups.push_back({group, 0});
        groups.back().count += p.tensor.size();
    }
    return groups;
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

constexpr char kMagic[8] = {'G', 'R', 'A', 'N', 'E', 'T', 'C', 'K'};
constexpr std::uint8_t kVersion = 1;

template <class T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out += s;
}

class Reader {
public:
    Reader(const std::string& data, std::string source) : data_(data), source_(std::move(source)) {}

    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string get_string() {
        const auto n = get<std::uint32_t>();
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    void get_doubles(std::span<double> out) {
        need(out.size() * sizeof(double));
        std::memcpy(out.data(), data_.data() + pos_, out.size() * sizeof(double));
        pos_ += out.size() * sizeof(double);
    }
    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw ParseError(source_ + ": truncated checkpoint");
    }
    const std::string& data_;
    std::string source_;
    std::size_t pos_ = 0;
};

} // namespace

void save_checkpoint(const GraNetModel& model, const std::filesystem::path& path) {
    IniDocument doc;
    model.config().write_to(doc);
    std::string payload;
    put_string(payload, doc.to_string());
    const auto params = model.parameters();
    put<std::uint32_t>(payload, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        put_string(payload, p.name);
        put<std::uint8_t>(payload, static_cast<std::uint8_t>(p.tensor.rank()));
        for (std::size_t d : p.tensor.shape()) put<std::uint64_t>(payload, d);
        const auto v = p.tensor.values();
        payload.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
    }
    std::string out(kMagic, sizeof(kMagic));
    put<std::uint8_t>(out, kVersion);
    put<std::uint64_t>(out, payload.size());
    out += payload;

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("failed writing checkpoint " + path.string());
}

GraNetModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read checkpoint " + path.string());
    std::ostringstream buf;
    buf << f.rdbuf();
    const std::string data = buf.str();
    const std::string src = path.string();
    if (data.size() < sizeof(kMagic) + 9 || std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0) {
        throw ParseError(src + ": not a checkpoint file");
    }
    Reader header(data, src);
    for (std::size_t i = 0; i < sizeof(kMagic); ++i) header.get<char>();
    const auto version = header.get<std::uint8_t>();
    if (version != kVersion) throw ParseError(src + ": unsupported checkpoint version " + std::to_string(version));
    const auto size = header.get<std::uint64_t>();
    const std::size_t offset = sizeof(kMagic) + 1 + sizeof(std::uint64_t);
    if (data.size() - offset != size) throw ParseError(src + ": checkpoint payload size mismatch");

    const std::string payload = data.substr(offset);
    Reader r(payload, src);
    GraNetModel model(NetworkConfig::read_from(IniDocument::parse(r.get_string(), src)));
    auto params = model.parameters();
    const auto count = r.get<std::uint32_t>();
    if (count != params.size()) throw ParseError(src + ": checkpoint tensor count does not match its config");
    for (auto& p : params) {
        const std::string name = r.get_string();
        if (name != p.name) throw ParseError(src + ": expected tensor " + p.name + ", found " + name);
        const auto rank = r.get<std::uint8_t>();
        ad::Shape shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
        if (shape != p.tensor.shape()) throw ParseError(src + ": shape mismatch for " + name);
        r.get_doubles(p.tensor.mutable_values());
    }
    if (!r.done()) throw ParseError(src + ": trailing bytes in checkpoint");
    return model;
}

} // namespace granet::net
