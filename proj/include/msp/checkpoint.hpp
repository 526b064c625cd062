#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "msp/binio.hpp"
#include "msp/config_json.hpp"
#include "msp/model.hpp"

namespace msp {

inline constexpr std::string_view kCheckpointMagic = "MSPCKP01";

struct Checkpoint {
    ModelParams params;
    std::optional<TrainConfig> config;
};

inline std::string encode_checkpoint(const ModelParams& p, const TrainConfig* cfg = nullptr) {
    json tensors = json::array();
    std::vector<std::span<const double>> parts;
    std::size_t offset = 0;
    const auto names = p.tensor_names();
    const auto ts = p.tensors();
    for (std::size_t i = 0; i < ts.size(); ++i) {
        tensors.push_back({{"name", names[i]}, {"shape", {ts[i]->rows(), ts[i]->cols()}}, {"offset", offset}});
        offset += 8 * ts[i]->size();
        parts.push_back(ts[i]->data());
    }
    json header{{"format", std::string(kCheckpointMagic)},
                {"config", cfg ? train_config_to_json(*cfg) : json(nullptr)},
                {"model",
                 {{"a", p.a},
                  {"m", p.m},
                  {"obs_dim", p.obs_dim},
                  {"variant", to_string(p.variant)},
                  {"order", p.order},
                  {"T_c", p.T_c},
                  {"layers",
                   {{"encoder", p.encoder.layers()},
                    {"decoder", p.decoder.layers()},
                    {"transition", p.transition.layers()}}}}},
                {"tensors", tensors}};
    return binio::encode(kCheckpointMagic, header, parts);
}

namespace detail {

/// Checks that an MLP's layer shapes chain from in_dim to out_dim.
inline void check_chain(const Mlp& net, const char* name, std::size_t in_dim, std::size_t out_dim) {
    if (net.empty()) return;
    std::size_t prev = in_dim;
    for (std::size_t l = 0; l < net.layers(); ++l) {
        const std::string tn = std::string(name) + ".w" + std::to_string(l);
        if (net.w[l].rows() != prev) throw FormatError("tensor \"" + tn + "\" has inconsistent shape " + net.w[l].shape());
        if (net.b[l].rows() != 1 || net.b[l].cols() != net.w[l].cols()) {
            throw FormatError("tensor \"" + std::string(name) + ".b" + std::to_string(l) + "\" has inconsistent shape " +
                              net.b[l].shape());
        }
        prev = net.w[l].cols();
    }
    if (prev != out_dim) {
        throw FormatError("tensor \"" + std::string(name) + ".w" + std::to_string(net.layers() - 1) +
                          "\" has inconsistent output width");
    }
}

}  // namespace detail

inline Checkpoint decode_checkpoint(std::string_view bytes) {
    using binio::field;
    const binio::Container c = binio::decode(bytes, kCheckpointMagic);
    Checkpoint ck;
    ModelParams& p = ck.params;
    const json model = field<json>(c.header, "model");
    p.a = field<std::size_t>(model, "a");
    p.m = field<std::size_t>(model, "m");
    p.obs_dim = field<std::size_t>(model, "obs_dim");
    try {
        p.variant = variant_from_string(field<std::string>(model, "variant"));
        const json cfg = field<json>(c.header, "config");
        if (!cfg.is_null()) ck.config = train_config_from_json(cfg);
    } catch (const ValidationError& e) {
        throw FormatError(e.what());
    }
    p.order = field<int>(model, "order");
    p.T_c = field<std::size_t>(model, "T_c");
    const json layers = field<json>(model, "layers");
    const std::pair<const char*, Mlp*> nets[] = {
        {"encoder", &p.encoder}, {"decoder", &p.decoder}, {"transition", &p.transition}};
    for (const auto& [name, net] : nets) {
        const auto n = field<std::size_t>(layers, name);
        if (n > 64) throw FormatError(std::string("implausible layer count for ") + name);
        net->w.resize(n);
        net->b.resize(n);
    }
    const json tensors = field<json>(c.header, "tensors");
    const auto names = p.tensor_names();
    if (!tensors.is_array() || tensors.size() != names.size()) {
        throw FormatError("manifest lists " + std::to_string(tensors.is_array() ? tensors.size() : 0) +
                          " tensors, model layout needs " + std::to_string(names.size()));
    }
    const auto slots = p.tensors();
    std::size_t expected_offset = 0;
    for (std::size_t i = 0; i < names.size(); ++i) {
        const json& t = tensors[i];
        const auto name = field<std::string>(t, "name");
        if (name != names[i]) throw FormatError("tensor " + std::to_string(i) + " is \"" + name + "\", expected \"" + names[i] + "\"");
        const auto shape = field<std::vector<std::size_t>>(t, "shape");
        const auto offset = field<std::size_t>(t, "offset");
        if (shape.size() != 2) throw FormatError("tensor \"" + name + "\" shape must have 2 entries");
        if (offset != expected_offset) throw FormatError("tensor \"" + name + "\" offset does not match manifest order");
        if (shape[0] > c.payload.size() || shape[1] > c.payload.size()) {
            throw FormatError("tensor \"" + name + "\" shape exceeds the payload");
        }
        const std::size_t count = shape[0] * shape[1];
        const std::size_t next = i + 1 < names.size() && tensors[i + 1].is_object() && tensors[i + 1].contains("offset") &&
                                         tensors[i + 1]["offset"].is_number_unsigned()
                                     ? tensors[i + 1]["offset"].get<std::size_t>()
                                     : 8 * c.payload.size();
        if (offset + 8 * count != next) {
            throw FormatError("tensor \"" + name + "\" shape " + Matrix::shape_string(shape[0], shape[1]) +
                              " does not match its payload span");
        }
        const std::size_t first = offset / 8;
        if (first + count > c.payload.size()) {
            throw FormatError("tensor \"" + name + "\" extends past the end of the payload");
        }
        *slots[i] = Matrix(shape[0], shape[1],
                           std::vector<double>(c.payload.begin() + static_cast<std::ptrdiff_t>(first),
                                               c.payload.begin() + static_cast<std::ptrdiff_t>(first + count)));
        expected_offset += 8 * count;
    }
    if (expected_offset != 8 * c.payload.size()) throw FormatError("payload has trailing bytes beyond the last tensor");
    detail::check_chain(p.encoder, "encoder", p.obs_dim, p.a * p.m);
    detail::check_chain(p.decoder, "decoder", p.a * p.m, p.obs_dim);
    detail::check_chain(p.transition, "transition", p.T_c * p.obs_dim, p.a * p.a);
    if (p.encoder.empty() || p.decoder.empty()) throw FormatError("checkpoint has no encoder/decoder tensors");
    return ck;
}

inline void save_checkpoint(const ModelParams& p, const std::filesystem::path& path, const TrainConfig* cfg = nullptr) {
    binio::write_file(path, encode_checkpoint(p, cfg));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(binio::read_file(path));
}

}  // namespace msp
