#include "skatepose/checkpoint.hpp"

#include "skatepose/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace skatepose {

using nlohmann::json;

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return &t;
    }
    return nullptr;
}

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) fail(ErrorKind::Parse, "truncated checkpoint");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
    json header = ckpt.header;
    header["format"] = "skatepose-checkpoint";
    header["version"] = 1;
    json entries = json::array();
    for (const auto& [name, t] : ckpt.tensors) entries.push_back({{"name", name}, {"shape", t.shape}});
    header["tensors"] = std::move(entries);
    const std::string text = header.dump();
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    put_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        for (double v : t.data) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    if (!out) fail(ErrorKind::Io, "failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
        fail(ErrorKind::Parse, "not a checkpoint file (bad magic)");
    }
    const std::uint64_t len = get_u64(in);
    if (len > (1ULL << 32)) fail(ErrorKind::Parse, "checkpoint header too large");
    std::string text(len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(len))) fail(ErrorKind::Parse, "truncated checkpoint header");
    Checkpoint ckpt;
    try {
        ckpt.header = json::parse(text);
        for (const auto& e : ckpt.header.at("tensors")) {
            Tensor t(e.at("shape").get<std::vector<std::size_t>>());
            for (auto& v : t.data) v = std::bit_cast<double>(get_u64(in));
            ckpt.tensors.emplace_back(e.at("name").get<std::string>(), std::move(t));
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, std::string("checkpoint header: ") + e.what());
    }
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write checkpoint '" + path.string() + "'");
    write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open checkpoint '" + path.string() + "'");
    return read_checkpoint(in);
}

Checkpoint make_checkpoint(const EncoderParams& encoder, const ClassifierParams* classifier, const std::string& rng_state) {
    Checkpoint ckpt;
    const auto ecfg = encoder.config();
    ckpt.header["kind"] = classifier ? "encoder+classifier" : "encoder";
    ckpt.header["config"]["encoder"] = {{"input_dim", ecfg.input_dim},
                                        {"hidden", ecfg.hidden},
                                        {"d_pose", ecfg.d_pose},
                                        {"d_view", ecfg.d_view}};
    encoder.visit([&](const std::string& name, const Tensor& t) { ckpt.tensors.emplace_back(name, t); });
    if (classifier) {
        const auto ccfg = classifier->config();
        ckpt.header["config"]["classifier"] = {{"input_dim", ccfg.input_dim},   {"gru_hidden", ccfg.gru_hidden},
                                               {"fc_hidden", ccfg.fc_hidden},   {"num_classes", ccfg.num_classes},
                                               {"dropout1", ccfg.dropout1},     {"dropout2", ccfg.dropout2}};
        classifier->visit([&](const std::string& name, const Tensor& t) { ckpt.tensors.emplace_back(name, t); });
    }
    ckpt.header["rng_state"] = rng_state;
    return ckpt;
}

namespace {

template <class P>
void fill_from(P& params, const Checkpoint& ckpt) {
    params.visit([&](const std::string& name, Tensor& t) {
        const Tensor* src = ckpt.find(name);
        if (!src) fail(ErrorKind::Schema, "checkpoint is missing tensor '" + name + "'");
        if (src->shape != t.shape) fail(ErrorKind::Schema, "checkpoint tensor '" + name + "' has the wrong shape");
        t = *src;
    });
}

}  // namespace

EncoderParams encoder_from_checkpoint(const Checkpoint& ckpt) {
    EncoderConfig cfg;
    try {
        const auto& e = ckpt.header.at("config").at("encoder");
        cfg.input_dim = e.at("input_dim").get<std::size_t>();
        cfg.hidden = e.at("hidden").get<std::vector<std::size_t>>();
        cfg.d_pose = e.at("d_pose").get<std::size_t>();
        cfg.d_view = e.at("d_view").get<std::size_t>();
    } catch (const json::exception& e) {
        fail(ErrorKind::Schema, std::string("checkpoint has no encoder config: ") + e.what());
    }
    Rng rng(0);
    EncoderParams p = init_encoder(cfg, rng);
    fill_from(p, ckpt);
    return p;
}

std::optional<ClassifierParams> classifier_from_checkpoint(const Checkpoint& ckpt) {
    const auto& cfgs = ckpt.header.value("config", json::object());
    if (!cfgs.contains("classifier")) return std::nullopt;
    ClassifierConfig cfg;
    try {
        const auto& c = cfgs.at("classifier");
        cfg.input_dim = c.at("input_dim").get<std::size_t>();
        cfg.gru_hidden = c.at("gru_hidden").get<std::size_t>();
        cfg.fc_hidden = c.at("fc_hidden").get<std::size_t>();
        cfg.num_classes = c.at("num_classes").get<std::size_t>();
        cfg.dropout1 = c.at("dropout1").get<double>();
        cfg.dropout2 = c.at("dropout2").get<double>();
    } catch (const json::exception& e) {
        fail(ErrorKind::Schema, std::string("bad classifier config: ") + e.what());
    }
    Rng rng(0);
    ClassifierParams p = init_classifier(cfg, rng);
    fill_from(p, ckpt);
    return p;
}

}  // namespace skatepose
