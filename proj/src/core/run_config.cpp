// Copyright (C) 2026 The conceptmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "conceptmix/run_config.hpp"

#include <set>

#include <json.hpp>

#include "conceptmix/error.hpp"
#include "conceptmix/tensor_file.hpp"

namespace cmix {

namespace fs = std::filesystem;
using nlohmann::json;

void RunConfig::validate() const {
    require(steps >= 1 && steps <= 10000, ErrorCode::Config, "steps must lie in [1, 10000]");
    dims.validate();
    guidance.validate();
    require(!global_prompt_embed.empty(), ErrorCode::Config, "global_prompt_embed is required");
    require(regions.size() <= 64, ErrorCode::Config, "at most 64 regions are supported");
    for (std::size_t i = 0; i < regions.size(); ++i) {
        try {
            regions[i].box.validate();
        } catch (const Error& e) {
            raise(ErrorCode::Config, "regions[" + std::to_string(i) + "].box: " + e.what());
        }
        require(!regions[i].bundle.empty(), ErrorCode::Config, "regions[" + std::to_string(i) + "].bundle is empty");
    }
}

namespace {

const json& field(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    require(it != obj.end(), ErrorCode::Config, where + ": missing \"" + key + "\"");
    return *it;
}

std::uint64_t as_uint(const json& v, const std::string& where) {
    require(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0), ErrorCode::Config,
            where + " must be a non-negative integer");
    return v.get<std::uint64_t>();
}

double as_double(const json& v, const std::string& where) {
    require(v.is_number(), ErrorCode::Config, where + " must be a number");
    return v.get<double>();
}

std::string as_string(const json& v, const std::string& where) {
    require(v.is_string(), ErrorCode::Config, where + " must be a string");
    return v.get<std::string>();
}

bool as_bool(const json& v, const std::string& where) {
    require(v.is_boolean(), ErrorCode::Config, where + " must be a boolean");
    return v.get<bool>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_relative() && !base.empty() ? base / path : path;
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text, const fs::path& base_dir) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        raise(ErrorCode::Config, std::string("config is not valid JSON: ") + e.what());
    }
    require(doc.is_object(), ErrorCode::Config, "config must be a JSON object");

    RunConfig c;
    c.seed = as_uint(field(doc, "seed", "config"), "seed");
    c.steps = as_uint(field(doc, "steps", "config"), "steps");

    const json& latent = field(doc, "latent", "config");
    require(latent.is_object(), ErrorCode::Config, "latent must be an object");
    c.dims.channels = as_uint(field(latent, "channels", "latent"), "latent.channels");
    c.dims.height = as_uint(field(latent, "height", "latent"), "latent.height");
    c.dims.width = as_uint(field(latent, "width", "latent"), "latent.width");

    if (auto it = doc.find("model"); it != doc.end()) {
        require(it->is_object(), ErrorCode::Config, "model must be an object");
        if (it->contains("d_model")) c.dims.d_model = as_uint(it->at("d_model"), "model.d_model");
        if (it->contains("heads")) c.dims.heads = as_uint(it->at("heads"), "model.heads");
    }

    if (auto it = doc.find("guidance"); it != doc.end()) {
        const json& g = *it;
        require(g.is_object(), ErrorCode::Config, "guidance must be an object");
        GuidanceConfig& gc = c.guidance;
        if (g.contains("alpha")) gc.alpha = as_double(g.at("alpha"), "guidance.alpha");
        if (g.contains("beta")) gc.beta = as_double(g.at("beta"), "guidance.beta");
        if (g.contains("s_ratio")) gc.s_ratio = as_double(g.at("s_ratio"), "guidance.s_ratio");
        if (g.contains("p_ratio")) gc.p_ratio = as_double(g.at("p_ratio"), "guidance.p_ratio");
        if (g.contains("phi0")) gc.phi0 = as_double(g.at("phi0"), "guidance.phi0");
        if (g.contains("guidance_fraction")) {
            gc.guidance_fraction = as_double(g.at("guidance_fraction"), "guidance.guidance_fraction");
        }
        if (g.contains("max_iters")) gc.max_iters = as_uint(g.at("max_iters"), "guidance.max_iters");
        if (g.contains("patience")) gc.patience = as_uint(g.at("patience"), "guidance.patience");
    }

    c.global_prompt_embed = resolve(base_dir, as_string(field(doc, "global_prompt_embed", "config"),
                                                        "global_prompt_embed"));

    const json& regions = field(doc, "regions", "config");
    require(regions.is_array(), ErrorCode::Config, "regions must be an array");
    for (std::size_t i = 0; i < regions.size(); ++i) {
        const std::string where = "regions[" + std::to_string(i) + "]";
        const json& r = regions[i];
        require(r.is_object(), ErrorCode::Config, where + " must be an object");
        const json& box = field(r, "box", where);
        require(box.is_array() && box.size() == 4, ErrorCode::Config, where + ".box must be [x0, y0, x1, y1]");
        RegionConfig rc;
        rc.box = Box{as_double(box[0], where + ".box[0]"), as_double(box[1], where + ".box[1]"),
                     as_double(box[2], where + ".box[2]"), as_double(box[3], where + ".box[3]")};
        rc.bundle = resolve(base_dir, as_string(field(r, "bundle", where), where + ".bundle"));
        c.regions.push_back(std::move(rc));
    }

    if (auto it = doc.find("output_dir"); it != doc.end()) {
        c.output_dir = resolve(base_dir, as_string(*it, "output_dir"));
    }
    if (auto it = doc.find("dump_attention"); it != doc.end()) c.dump_attention = as_bool(*it, "dump_attention");
    if (auto it = doc.find("latent_reinit"); it != doc.end()) c.latent_reinit = as_bool(*it, "latent_reinit");

    c.validate();
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    const std::vector<std::uint8_t> bytes = read_file_bytes(path);
    const std::string text(bytes.begin(), bytes.end());
    try {
        return parse_run_config(text, path.parent_path());
    } catch (const Error& e) {
        raise(e.code(), path.string() + ": " + e.what());
    }
}

std::string run_config_to_json(const RunConfig& c) {
    json doc;
    doc["seed"] = c.seed;
    doc["steps"] = c.steps;
    doc["latent"] = {{"channels", c.dims.channels}, {"height", c.dims.height}, {"width", c.dims.width}};
    const GuidanceConfig& g = c.guidance;
    doc["guidance"] = {{"alpha", g.alpha},
                       {"beta", g.beta},
                       {"s_ratio", g.s_ratio},
                       {"p_ratio", g.p_ratio},
                       {"phi0", g.phi0},
                       {"guidance_fraction", g.guidance_fraction},
                       {"max_iters", g.max_iters},
                       {"patience", g.patience}};
    doc["global_prompt_embed"] = c.global_prompt_embed.generic_string();
    json regions = json::array();
    for (const auto& r : c.regions) {
        regions.push_back({{"box", {r.box.x0, r.box.y0, r.box.x1, r.box.y1}}, {"bundle", r.bundle.generic_string()}});
    }
    doc["regions"] = regions;
    doc["output_dir"] = c.output_dir.generic_string();
    doc["dump_attention"] = c.dump_attention;
    if (!c.latent_reinit) doc["latent_reinit"] = false;
    const ModelDims defaults;
    if (c.dims.d_model != defaults.d_model || c.dims.heads != defaults.heads) {
        doc["model"] = {{"d_model", c.dims.d_model}, {"heads", c.dims.heads}};
    }
    return doc.dump(2) + "\n";
}

RunInputs load_run_inputs(const RunConfig& config) {
    config.validate();
    RunInputs in;
    in.layout.global_prompt_embed = read_tensor_file(config.global_prompt_embed).get("prompt_embed");
    require(in.layout.global_prompt_embed.rank() == 2, ErrorCode::Validation,
            config.global_prompt_embed.string() + ": prompt_embed must be tokens x d_text");

    ModelDims dims = config.dims;
    dims.d_text = in.layout.global_prompt_embed.dim(1);

    std::set<std::string> seen;
    for (const auto& r : config.regions) {
        ConceptBundle b = load_bundle(r.bundle);
        require(seen.insert(b.id).second, ErrorCode::Config,
                "concept id '" + b.id + "' (from " + r.bundle.string() + ") is used by more than one region");
        in.layout.regions.push_back(RegionSpec{r.box, b.id});
        in.bundles.emplace(b.id, std::move(b));
    }
    in.weights = BaseWeights::generate(config.seed, dims);
    return in;
}

}  // namespace cmix
