#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "spotkit/binio.hpp"
#include "spotkit/error.hpp"
#include "spotkit/model.hpp"

namespace spotkit {

constexpr char kCheckpointMagic[] = "SPKT";
constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::ordered_json pool_spec_to_json(const PoolSpec& spec) {
    return {{"kind", pool_kind_name(spec.kind)},
            {"temporally_aware", spec.temporally_aware},
            {"clusters", spec.clusters},
            {"clusters_before", spec.clusters_before},
            {"clusters_after", spec.clusters_after}};
}

inline PoolSpec pool_spec_from_json(const nlohmann::json& j) {
    PoolSpec spec;
    spec.kind = parse_pool_kind(j.at("kind").get<std::string>());
    spec.temporally_aware = j.at("temporally_aware").get<bool>();
    spec.clusters = j.at("clusters").get<std::size_t>();
    spec.clusters_before = j.value("clusters_before", std::size_t{0});
    spec.clusters_after = j.value("clusters_after", std::size_t{0});
    return spec;
}

inline nlohmann::ordered_json model_config_to_json(const ModelConfig& cfg) {
    return {{"version", kCheckpointVersion},
            {"input_dim", cfg.input_dim},
            {"reduced_dim", cfg.reduced_dim},
            {"action_classes", cfg.action_classes},
            {"has_projection", cfg.has_projection},
            {"pool", pool_spec_to_json(cfg.pool)},
            {"dropout_rate", cfg.dropout_rate},
            {"window_seconds", cfg.window_seconds},
            {"frame_rate", cfg.frame_rate},
            {"seed", cfg.seed},
            {"class_names", cfg.class_names}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.input_dim = j.at("input_dim").get<std::size_t>();
    cfg.reduced_dim = j.at("reduced_dim").get<std::size_t>();
    cfg.action_classes = j.at("action_classes").get<std::size_t>();
    cfg.has_projection = j.at("has_projection").get<bool>();
    cfg.pool = pool_spec_from_json(j.at("pool"));
    cfg.dropout_rate = j.at("dropout_rate").get<double>();
    cfg.window_seconds = j.at("window_seconds").get<double>();
    cfg.frame_rate = j.at("frame_rate").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.class_names = j.at("class_names").get<std::vector<std::string>>();
    return cfg;
}

// Binary container: magic "SPKT", u32 version, u32 record count; each record
// is u16 name length, UTF-8 name, u8 rank, u32 dims[rank], f32 payload.
inline void save_checkpoint(SpottingModel& model, const std::filesystem::path& binary_path,
                            const std::filesystem::path& sidecar_path) {
    binio::Writer w;
    w.str(kCheckpointMagic);
    w.u32(kCheckpointVersion);
    const auto views = model.param_views();
    w.u32(static_cast<std::uint32_t>(views.size()));
    for (const auto& p : views) {
        w.u16(static_cast<std::uint16_t>(p.name.size()));
        w.str(p.name);
        w.u8(static_cast<std::uint8_t>(p.dims.size()));
        for (std::size_t d : p.dims) w.u32(static_cast<std::uint32_t>(d));
        for (double x : p.data) w.f32(static_cast<float>(x));
    }
    w.save(binary_path);

    std::ofstream side(sidecar_path, std::ios::trunc);
    require(side.good(), ErrorKind::io, "cannot open for writing: " + sidecar_path.string());
    side << model_config_to_json(model.cfg).dump(2) << "\n";
}

inline SpottingModel load_checkpoint(const std::filesystem::path& binary_path,
                                     const std::filesystem::path& sidecar_path) {
    std::ifstream side(sidecar_path);
    require(side.good(), ErrorKind::io, "cannot open: " + sidecar_path.string());
    nlohmann::json sidecar;
    try {
        side >> sidecar;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::io, sidecar_path.string() + ": " + e.what());
    }
    const ModelConfig cfg = model_config_from_json(sidecar);
    Rng rng(cfg.seed);
    SpottingModel model = SpottingModel::init(cfg, rng);

    binio::Reader r = binio::Reader::from_file(binary_path);
    r.expect_magic(kCheckpointMagic);
    const std::uint32_t version = r.u32("version");
    require(version == kCheckpointVersion, ErrorKind::bad_version,
            binary_path.filename().string() + ": unsupported version " + std::to_string(version));
    const std::uint32_t count = r.u32("record count");

    auto views = model.param_views();
    std::size_t loaded = 0;
    for (std::uint32_t rec = 0; rec < count; ++rec) {
        const std::uint16_t name_len = r.u16("record name length");
        const std::string name = r.str(name_len, "record name");
        const std::uint8_t rank = r.u8("record rank");
        std::size_t total = 1;
        std::vector<std::size_t> dims;
        for (std::uint8_t d = 0; d < rank; ++d) {
            dims.push_back(r.u32("record dims"));
            total *= dims.back();
        }
        ParamView* view = nullptr;
        for (auto& p : views)
            if (p.name == name) view = &p;
        require(view != nullptr, ErrorKind::io,
                binary_path.filename().string() + ": unexpected record \"" + name + "\"");
        require(view->dims == dims && view->data.size() == total, ErrorKind::shape_mismatch,
                binary_path.filename().string() + ": record \"" + name + "\" has mismatched shape");
        r.need(total * 4, "record payload for \"" + name + "\"");
        for (std::size_t i = 0; i < total; ++i) view->data[i] = static_cast<double>(r.f32("record payload"));
        ++loaded;
    }
    r.expect_end();
    require(loaded == views.size(), ErrorKind::io,
            binary_path.filename().string() + ": checkpoint is missing parameter records");
    return model;
}

}  // namespace spotkit
