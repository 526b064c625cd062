#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "msp/binio.hpp"
#include "msp/datagen.hpp"

namespace msp {

inline constexpr std::string_view kDatasetMagic = "MSPDAT01";

inline json spec_to_json(const GeneratorSpec& s) {
    return json{{"k", s.k},
                {"obs_dim", s.obs_dim},
                {"T", s.T},
                {"velocity_range", {s.velocity.lo, s.velocity.hi}},
                {"accel_range", {s.accel.lo, s.accel.hi}},
                {"mixing_seed", s.mixing_seed},
                {"num_sequences", s.num_sequences},
                {"mixing_hidden", s.mixing_hidden},
                {"nonlinearity", s.nonlinearity},
                {"radius_range", {s.radius.lo, s.radius.hi}}};
}

inline GeneratorSpec spec_from_json(const json& j) {
    using binio::field;
    GeneratorSpec s;
    s.k = field<std::size_t>(j, "k");
    s.obs_dim = field<std::size_t>(j, "obs_dim");
    s.T = field<std::size_t>(j, "T");
    const auto vr = field<std::array<double, 2>>(j, "velocity_range");
    const auto ar = field<std::array<double, 2>>(j, "accel_range");
    const auto rr = field<std::array<double, 2>>(j, "radius_range");
    s.velocity = {vr[0], vr[1]};
    s.accel = {ar[0], ar[1]};
    s.radius = {rr[0], rr[1]};
    s.mixing_seed = field<std::uint64_t>(j, "mixing_seed");
    s.num_sequences = field<std::size_t>(j, "num_sequences");
    s.mixing_hidden = field<std::size_t>(j, "mixing_hidden");
    s.nonlinearity = field<double>(j, "nonlinearity");
    return s;
}

inline std::string encode_dataset(const SequenceBatch& b) {
    const std::size_t n = b.size(), k = b.spec.k;
    json header{{"format", std::string(kDatasetMagic)},
                {"spec", spec_to_json(b.spec)},
                {"master_seed", b.master_seed},
                {"mode", to_string(b.mode)},
                {"shapes",
                 {{"observations", {n, b.spec.T, b.spec.obs_dim}},
                  {"theta0", {n, k}},
                  {"velocity", {n, k}},
                  {"accel", {n, k}},
                  {"z0", {n, 2 * k}}}}};
    const std::array<std::span<const double>, 5> parts{std::span<const double>(b.observations), b.theta0.data(),
                                                        b.velocity.data(), b.accel.data(), b.z0.data()};
    return binio::encode(kDatasetMagic, header, parts);
}

inline SequenceBatch decode_dataset(std::string_view bytes) {
    const binio::Container c = binio::decode(bytes, kDatasetMagic);
    SequenceBatch b;
    try {
        b.spec = spec_from_json(binio::field<json>(c.header, "spec"));
        b.mode = mode_from_string(binio::field<std::string>(c.header, "mode"));
    } catch (const ValidationError& e) {
        throw FormatError(e.what());
    }
    b.master_seed = binio::field<std::uint64_t>(c.header, "master_seed");
    const json shapes = binio::field<json>(c.header, "shapes");
    const std::size_t n = b.spec.num_sequences, k = b.spec.k;
    const auto expect = [&](const char* name, std::vector<std::size_t> want) {
        const auto got = binio::field<std::vector<std::size_t>>(shapes, name);
        if (got != want) throw FormatError(std::string("shape of \"") + name + "\" inconsistent with spec");
    };
    expect("observations", {n, b.spec.T, b.spec.obs_dim});
    expect("theta0", {n, k});
    expect("velocity", {n, k});
    expect("accel", {n, k});
    expect("z0", {n, 2 * k});
    const std::size_t obs = n * b.spec.T * b.spec.obs_dim;
    const std::size_t total = obs + 3 * n * k + 2 * n * k;
    if (c.payload.size() != total) {
        throw FormatError("payload holds " + std::to_string(c.payload.size()) + " values, header implies " +
                          std::to_string(total));
    }
    auto it = c.payload.begin();
    const auto take = [&](std::size_t count) {
        std::vector<double> v(it, it + static_cast<std::ptrdiff_t>(count));
        it += static_cast<std::ptrdiff_t>(count);
        return v;
    };
    b.observations = take(obs);
    b.theta0 = Matrix(n, k, take(n * k));
    b.velocity = Matrix(n, k, take(n * k));
    b.accel = Matrix(n, k, take(n * k));
    b.z0 = Matrix(n, 2 * k, take(2 * n * k));
    return b;
}

inline void save_dataset(const SequenceBatch& b, const std::filesystem::path& path) {
    binio::write_file(path, encode_dataset(b));
}

inline SequenceBatch load_dataset(const std::filesystem::path& path) { return decode_dataset(binio::read_file(path)); }

}  // namespace msp
