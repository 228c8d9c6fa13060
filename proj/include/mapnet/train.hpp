#pragma once

#include <functional>
#include <map>

#include "mapnet/checkpoint.hpp"

namespace mapnet {

// Decoupled-weight-decay adaptive optimizer with two parameter groups:
// names under "backbone." take lr_backbone, the rest lr_other.
class AdamW {
  public:
    explicit AdamW(double weight_decay = 1e-4, double beta1 = 0.9, double beta2 = 0.999,
                   double eps = 1e-8)
        : wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamStore& params, const std::map<std::string, Tensor>& grads,
              double lr_backbone, double lr_other);

    int steps_taken() const { return t_; }

  private:
    struct Moments {
        Tensor m, v;
    };
    std::map<std::string, Moments> state_;
    double wd_, beta1_, beta2_, eps_;
    int t_ = 0;
};

struct StepLog {
    int step = 0;
    double loss = 0, cls = 0, reg = 0;
};

struct TrainResult {
    std::vector<StepLog> logs;
};

// Source of training pairs; called once per sample with a derived seed.
using PairSource = std::function<TrainingPair(uint64_t seed)>;

// Runs the optimization loop: forward through backbone, both matcher stacks,
// alignment and heads, the combined guided losses, backward, AdamW update.
// A non-finite loss aborts with a diagnostic dump of the offending batch.
TrainResult train_model(Model& model, const RunConfig& cfg, const PairSource& source,
                        const std::string& log_path = "",
                        const std::string& dump_dir_on_failure = "");

// Production pair source: samples template/search pairs from seeded synthetic
// sequences (or any annotated footage loaded into SyntheticSequence form).
PairSource make_sequence_pair_source(const std::vector<SyntheticSequence>* sequences,
                                     const RunConfig& cfg);

// Single forward + loss used by both training and the gradient-check suite.
struct SampleLoss {
    Var total, cls, reg;
    ModelOutput out;
};
SampleLoss sample_loss(const Model& model, ParamBinder& bind, const TrainingPair& pair,
                       const RunConfig& cfg, bool train_mode, Rng* dropout_rng,
                       const std::vector<double>* frozen_iou_w = nullptr,
                       const std::vector<double>* frozen_conf_w = nullptr);

}  // namespace mapnet
