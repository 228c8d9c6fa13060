#include "mapnet/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace mapnet {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& scope) {
    if (!obj.is_object())
        throw ConfigError("config: '" + scope + "' must be an object");
    for (const auto& item : obj.items()) {
        if (!allowed.count(item.key()))
            throw ConfigError("config: unknown key '" + scope + "." + item.key() + "'");
    }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out, const std::string& scope) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: bad value type for '" + scope + "." + key + "'");
    }
}

GateKind gate_from_string(const std::string& s, const std::string& scope) {
    if (s == "channel") return GateKind::channel;
    if (s == "spatial") return GateKind::spatial;
    if (s == "none") return GateKind::none;
    throw ConfigError("config: '" + scope + "' must be channel|spatial|none, got '" + s + "'");
}

std::string gate_to_string(GateKind k) {
    switch (k) {
        case GateKind::channel: return "channel";
        case GateKind::spatial: return "spatial";
        default: return "none";
    }
}

void read_gate(const json& obj, const char* key, GateKind& out, const std::string& scope) {
    if (!obj.contains(key)) return;
    std::string s;
    read_field(obj, key, s, scope);
    out = gate_from_string(s, scope + "." + key);
}

}  // namespace

json model_config_to_json(const ModelConfig& cfg) {
    json b;
    b["variant"] = cfg.backbone.variant == BackboneVariant::toy ? "toy" : "resnet50_style";
    b["stage_widths"] = cfg.backbone.stage_widths;
    b["dilation_in_last_stage"] = cfg.backbone.dilation_in_last_stage;

    json j;
    j["dim"] = cfg.dim;
    j["heads"] = cfg.heads;
    j["dff"] = cfg.dff;
    j["depth"] = cfg.depth;
    j["head_hidden"] = cfg.head_hidden;
    j["cls_gate"] = gate_to_string(cfg.cls_gate);
    j["reg_gate"] = gate_to_string(cfg.reg_gate);
    j["use_alignment"] = cfg.use_alignment;
    j["shared_stacks"] = cfg.shared_stacks;
    j["normalization"] = cfg.norm_mode == NormMode::literal ? "literal" : "post_norm";
    j["reduction_ratio"] = cfg.reduction_ratio;
    j["spatial_kernel"] = cfg.spatial_kernel;
    j["ffn_dropout"] = cfg.ffn_dropout;
    j["template_size"] = cfg.template_size;
    j["search_size"] = cfg.search_size;
    j["pixel_mean"] = cfg.pixel_mean;
    j["pixel_std"] = cfg.pixel_std;
    j["backbone"] = b;
    return j;
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig cfg;
    check_keys(j, {"dim", "heads", "dff", "depth", "head_hidden", "cls_gate", "reg_gate",
                   "use_alignment", "shared_stacks", "normalization", "reduction_ratio",
                   "spatial_kernel", "ffn_dropout", "template_size", "search_size",
                   "pixel_mean", "pixel_std", "backbone"},
               "model");
    read_field(j, "dim", cfg.dim, "model");
    read_field(j, "heads", cfg.heads, "model");
    read_field(j, "dff", cfg.dff, "model");
    read_field(j, "depth", cfg.depth, "model");
    read_field(j, "head_hidden", cfg.head_hidden, "model");
    read_gate(j, "cls_gate", cfg.cls_gate, "model");
    read_gate(j, "reg_gate", cfg.reg_gate, "model");
    read_field(j, "use_alignment", cfg.use_alignment, "model");
    read_field(j, "shared_stacks", cfg.shared_stacks, "model");
    if (j.contains("normalization")) {
        std::string s;
        read_field(j, "normalization", s, "model");
        if (s == "literal")
            cfg.norm_mode = NormMode::literal;
        else if (s == "post_norm")
            cfg.norm_mode = NormMode::post_norm;
        else
            throw ConfigError("config: 'model.normalization' must be literal|post_norm");
    }
    read_field(j, "reduction_ratio", cfg.reduction_ratio, "model");
    read_field(j, "spatial_kernel", cfg.spatial_kernel, "model");
    read_field(j, "ffn_dropout", cfg.ffn_dropout, "model");
    read_field(j, "template_size", cfg.template_size, "model");
    read_field(j, "search_size", cfg.search_size, "model");
    read_field(j, "pixel_mean", cfg.pixel_mean, "model");
    read_field(j, "pixel_std", cfg.pixel_std, "model");
    if (j.contains("backbone")) {
        const json& b = j.at("backbone");
        check_keys(b, {"variant", "stage_widths", "dilation_in_last_stage"}, "model.backbone");
        if (b.contains("variant")) {
            std::string s;
            read_field(b, "variant", s, "model.backbone");
            if (s == "toy")
                cfg.backbone.variant = BackboneVariant::toy;
            else if (s == "resnet50_style")
                cfg.backbone.variant = BackboneVariant::resnet50_style;
            else
                throw ConfigError("config: 'model.backbone.variant' must be toy|resnet50_style");
        }
        read_field(b, "stage_widths", cfg.backbone.stage_widths, "model.backbone");
        read_field(b, "dilation_in_last_stage", cfg.backbone.dilation_in_last_stage,
                   "model.backbone");
    }
    cfg.backbone.out_dim = cfg.dim;
    return cfg;
}

void RunConfig::validate() const {
    model.validate();
    if (loss.beta <= 0.0 || loss.lambda_giou <= 0.0 || loss.lambda_l1 <= 0.0)
        throw ConfigError("config: loss weights must be positive");
    if (tracker.window_weight < 0.0 || tracker.window_weight > 1.0)
        throw ConfigError("config: tracker.window_weight must lie in [0,1]");
    if (tracker.template_area <= 0.0 || tracker.search_area <= 0.0)
        throw ConfigError("config: tracker crop factors must be positive");
    if (train.epochs < 1 || train.iters_per_epoch < 1 || train.batch_size < 1)
        throw ConfigError("config: train counts must be positive");
    if (train.lr_drop_frac <= 0.0 || train.lr_drop_frac > 1.0)
        throw ConfigError("config: train.lr_drop_frac must lie in (0,1]");
    if (train.still_prob < 0.0 || train.still_prob > 1.0)
        throw ConfigError("config: train.still_prob must lie in [0,1]");
    if (data.sequences < 1) throw ConfigError("config: data.sequences must be >= 1");
    if (data.seq.length < 2) throw ConfigError("config: data.length must be >= 2");
}

RunConfig parse_config_json(const json& j) {
    RunConfig cfg;
    check_keys(j, {"model", "loss", "tracker", "train", "data"}, "<root>");
    if (j.contains("model")) cfg.model = model_config_from_json(j.at("model"));

    if (j.contains("loss")) {
        const json& l = j.at("loss");
        check_keys(l, {"beta", "lambda_giou", "lambda_l1", "pg_cls", "cg_reg"}, "loss");
        read_field(l, "beta", cfg.loss.beta, "loss");
        read_field(l, "lambda_giou", cfg.loss.lambda_giou, "loss");
        read_field(l, "lambda_l1", cfg.loss.lambda_l1, "loss");
        read_field(l, "pg_cls", cfg.pg_cls, "loss");
        read_field(l, "cg_reg", cfg.cg_reg, "loss");
    }

    if (j.contains("tracker")) {
        const json& t = j.at("tracker");
        check_keys(t, {"window_weight", "template_area", "search_area"}, "tracker");
        read_field(t, "window_weight", cfg.tracker.window_weight, "tracker");
        read_field(t, "template_area", cfg.tracker.template_area, "tracker");
        read_field(t, "search_area", cfg.tracker.search_area, "tracker");
    }

    if (j.contains("train")) {
        const json& t = j.at("train");
        check_keys(t, {"epochs", "iters_per_epoch", "batch_size", "lr_backbone", "lr_other",
                       "weight_decay", "lr_drop_frac", "seed", "shift_frac", "scale_jitter",
                       "still_prob"},
                   "train");
        read_field(t, "epochs", cfg.train.epochs, "train");
        read_field(t, "iters_per_epoch", cfg.train.iters_per_epoch, "train");
        read_field(t, "batch_size", cfg.train.batch_size, "train");
        read_field(t, "lr_backbone", cfg.train.lr_backbone, "train");
        read_field(t, "lr_other", cfg.train.lr_other, "train");
        read_field(t, "weight_decay", cfg.train.weight_decay, "train");
        read_field(t, "lr_drop_frac", cfg.train.lr_drop_frac, "train");
        read_field(t, "seed", cfg.train.seed, "train");
        read_field(t, "shift_frac", cfg.train.shift_frac, "train");
        read_field(t, "scale_jitter", cfg.train.scale_jitter, "train");
        read_field(t, "still_prob", cfg.train.still_prob, "train");
    }

    if (j.contains("data")) {
        const json& d = j.at("data");
        check_keys(d, {"sequences", "seed", "frame_w", "frame_h", "length", "shape", "min_side",
                       "max_side", "speed", "jitter", "scale_drift", "aspect_min", "aspect_max",
                       "distractor", "noise"},
                   "data");
        read_field(d, "sequences", cfg.data.sequences, "data");
        read_field(d, "seed", cfg.data.seed, "data");
        read_field(d, "frame_w", cfg.data.seq.frame_w, "data");
        read_field(d, "frame_h", cfg.data.seq.frame_h, "data");
        read_field(d, "length", cfg.data.seq.length, "data");
        if (d.contains("shape")) {
            std::string s;
            read_field(d, "shape", s, "data");
            if (s == "rectangle")
                cfg.data.seq.shape = SyntheticSequenceConfig::Shape::rectangle;
            else if (s == "ellipse")
                cfg.data.seq.shape = SyntheticSequenceConfig::Shape::ellipse;
            else
                throw ConfigError("config: 'data.shape' must be rectangle|ellipse");
        }
        read_field(d, "min_side", cfg.data.seq.min_side, "data");
        read_field(d, "max_side", cfg.data.seq.max_side, "data");
        read_field(d, "speed", cfg.data.seq.speed, "data");
        read_field(d, "jitter", cfg.data.seq.jitter, "data");
        read_field(d, "scale_drift", cfg.data.seq.scale_drift, "data");
        read_field(d, "aspect_min", cfg.data.seq.aspect_min, "data");
        read_field(d, "aspect_max", cfg.data.seq.aspect_max, "data");
        read_field(d, "distractor", cfg.data.seq.distractor, "data");
        read_field(d, "noise", cfg.data.seq.noise, "data");
    }

    cfg.validate();
    return cfg;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot read file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    json j = json::object();
    if (first != std::string::npos) {
        try {
            j = json::parse(text);
        } catch (const json::exception& e) {
            throw ConfigError("config: invalid JSON in " + path + ": " + e.what());
        }
    }
    return parse_config_json(j);
}

json run_config_to_json(const RunConfig& cfg) {
    json j;
    j["model"] = model_config_to_json(cfg.model);
    j["loss"] = {{"beta", cfg.loss.beta},
                 {"lambda_giou", cfg.loss.lambda_giou},
                 {"lambda_l1", cfg.loss.lambda_l1},
                 {"pg_cls", cfg.pg_cls},
                 {"cg_reg", cfg.cg_reg}};
    j["tracker"] = {{"window_weight", cfg.tracker.window_weight},
                    {"template_area", cfg.tracker.template_area},
                    {"search_area", cfg.tracker.search_area}};
    j["train"] = {{"epochs", cfg.train.epochs},
                  {"iters_per_epoch", cfg.train.iters_per_epoch},
                  {"batch_size", cfg.train.batch_size},
                  {"lr_backbone", cfg.train.lr_backbone},
                  {"lr_other", cfg.train.lr_other},
                  {"weight_decay", cfg.train.weight_decay},
                  {"lr_drop_frac", cfg.train.lr_drop_frac},
                  {"seed", cfg.train.seed},
                  {"shift_frac", cfg.train.shift_frac},
                  {"scale_jitter", cfg.train.scale_jitter},
                  {"still_prob", cfg.train.still_prob}};
    j["data"] = {{"sequences", cfg.data.sequences},
                 {"seed", cfg.data.seed},
                 {"frame_w", cfg.data.seq.frame_w},
                 {"frame_h", cfg.data.seq.frame_h},
                 {"length", cfg.data.seq.length},
                 {"shape", cfg.data.seq.shape == SyntheticSequenceConfig::Shape::rectangle
                               ? "rectangle"
                               : "ellipse"},
                 {"min_side", cfg.data.seq.min_side},
                 {"max_side", cfg.data.seq.max_side},
                 {"speed", cfg.data.seq.speed},
                 {"jitter", cfg.data.seq.jitter},
                 {"scale_drift", cfg.data.seq.scale_drift},
                 {"aspect_min", cfg.data.seq.aspect_min},
                 {"aspect_max", cfg.data.seq.aspect_max},
                 {"distractor", cfg.data.seq.distractor},
                 {"noise", cfg.data.seq.noise}};
    return j;
}

void write_resolved_config(const std::string& path, const RunConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write resolved config: " + path);
    out << run_config_to_json(cfg).dump(2) << "\n";
}

}  // namespace mapnet
