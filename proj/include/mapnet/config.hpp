#pragma once

#include <json.hpp>

#include "mapnet/data.hpp"
#include "mapnet/losses.hpp"
#include "mapnet/model.hpp"

namespace mapnet {

struct TrackerConfig {
    double window_weight = 0.57;
    double template_area = 2.0;
    double search_area = 4.0;
};

struct TrainSettings {
    int epochs = 30;
    int iters_per_epoch = 100;
    int batch_size = 8;
    double lr_backbone = 1e-5;
    double lr_other = 1e-4;
    double weight_decay = 1e-4;
    double lr_drop_frac = 2.0 / 3.0;  // x0.1 after this fraction of the run
    uint64_t seed = 0;
    double shift_frac = 0.18;
    double scale_jitter = 0.25;
    double still_prob = 0.0;
};

struct DataSettings {
    int sequences = 5;
    uint64_t seed = 1;
    SyntheticSequenceConfig seq;
};

// Fully resolved run configuration. Field defaults are the paper constants
// wherever one exists; the rest are the desk-scale defaults.
struct RunConfig {
    ModelConfig model;
    LossWeights loss;
    bool pg_cls = true;
    bool cg_reg = true;
    TrackerConfig tracker;
    TrainSettings train;
    DataSettings data;

    void validate() const;
};

RunConfig parse_config_json(const nlohmann::json& j);
RunConfig parse_config(const std::string& path);  // empty file -> all defaults
nlohmann::json run_config_to_json(const RunConfig& cfg);
void write_resolved_config(const std::string& path, const RunConfig& cfg);

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace mapnet
