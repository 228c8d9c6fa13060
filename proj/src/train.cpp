#include "mapnet/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace mapnet {

namespace op = ops;

void AdamW::step(ParamStore& params, const std::map<std::string, Tensor>& grads,
                 double lr_backbone, double lr_other) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (const auto& name : params.names()) {
        if (!is_trainable_param(name)) continue;
        auto git = grads.find(name);
        MAPNET_REQUIRE(git != grads.end(), "AdamW: missing gradient for " + name);
        const Tensor& g = git->second;
        Tensor& theta = params.get(name);
        MAPNET_REQUIRE(theta.same_shape(g), "AdamW: gradient shape mismatch for " + name);

        auto [it, inserted] = state_.try_emplace(name);
        if (inserted) {
            it->second.m = Tensor(theta.shape());
            it->second.v = Tensor(theta.shape());
        }
        Tensor& m = it->second.m;
        Tensor& v = it->second.v;
        const double lr = name.rfind("backbone.", 0) == 0 ? lr_backbone : lr_other;
        for (int i = 0; i < theta.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + wd_ * theta[i]);
        }
    }
}

SampleLoss sample_loss(const Model& model, ParamBinder& bind, const TrainingPair& pair,
                       const RunConfig& cfg, bool train_mode, Rng* dropout_rng,
                       const std::vector<double>* frozen_iou_w,
                       const std::vector<double>* frozen_conf_w) {
    SampleLoss s;
    s.out = model.forward(bind, pair.template01, pair.search01, train_mode, dropout_rng);
    const int grid = model.cfg.search_grid();
    LabelAssignment labels = assign_labels(grid, grid, pair.gt_norm);
    if (labels.np() == 0)
        throw NumericError("sample_loss: ground truth captured no positive cells");
    s.cls = pg_cls_loss(s.out.cls_probs, s.out.boxes, pair.gt_norm, labels, cfg.loss,
                        cfg.pg_cls, frozen_iou_w);
    s.reg = cg_reg_loss(s.out.cls_probs, s.out.boxes, pair.gt_norm, labels, cfg.loss,
                        cfg.cg_reg, frozen_conf_w);
    s.total = op::add(s.cls, s.reg);
    return s;
}

PairSource make_sequence_pair_source(const std::vector<SyntheticSequence>* sequences,
                                     const RunConfig& cfg) {
    MAPNET_REQUIRE(sequences && !sequences->empty(), "pair source: no sequences");
    AugmentConfig aug;
    aug.template_area = cfg.tracker.template_area;
    aug.search_area = cfg.tracker.search_area;
    aug.template_size = cfg.model.template_size;
    aug.search_size = cfg.model.search_size;
    aug.shift_frac = cfg.train.shift_frac;
    aug.scale_jitter = cfg.train.scale_jitter;
    aug.pad_fill01 = cfg.model.pixel_mean;
    const double still_prob = cfg.train.still_prob;
    return [sequences, aug, still_prob](uint64_t seed) -> TrainingPair {
        for (int attempt = 0; attempt < 16; ++attempt) {
            const uint64_t s = Rng::derive(seed, 0xA11CE, static_cast<uint64_t>(attempt));
            Rng rng(s);
            const auto& seq =
                (*sequences)[static_cast<size_t>(rng.uniform_int(
                    0, static_cast<int>(sequences->size()) - 1))];
            AugmentConfig a = aug;
            a.still_image = rng.uniform() < still_prob;
            auto pair = sample_training_pair(seq, a, rng.next_u64());
            if (pair) return std::move(*pair);
        }
        throw DataError("pair source: failed to sample a visible training pair");
    };
}

namespace {

void dump_tensor(std::ofstream& out, const std::string& name, const Tensor& t) {
    out << name << " shape=[";
    for (int i = 0; i < t.rank(); ++i) out << (i ? "," : "") << t.dim(i);
    out << "]\n";
    for (int i = 0; i < std::min(t.size(), 64); ++i) out << t[i] << " ";
    out << "\n";
}

void dump_batch(const std::string& dir, int step, const std::vector<TrainingPair>& batch) {
    fs::create_directories(dir);
    std::ofstream out(fs::path(dir) / ("bad_batch_step" + std::to_string(step) + ".txt"));
    out << "non-finite loss at step " << step << ", batch size " << batch.size() << "\n";
    for (size_t b = 0; b < batch.size(); ++b) {
        out << "sample " << b << " gt_norm=(" << batch[b].gt_norm.x1 << "," << batch[b].gt_norm.y1
            << "," << batch[b].gt_norm.x2 << "," << batch[b].gt_norm.y2 << ")\n";
        dump_tensor(out, "template01", batch[b].template01);
        dump_tensor(out, "search01", batch[b].search01);
    }
}

}  // namespace

TrainResult train_model(Model& model, const RunConfig& cfg, const PairSource& source,
                        const std::string& log_path, const std::string& dump_dir_on_failure) {
    const int total_steps = cfg.train.epochs * cfg.train.iters_per_epoch;
    const int drop_step = static_cast<int>(std::ceil(total_steps * cfg.train.lr_drop_frac));
    AdamW opt(cfg.train.weight_decay);

    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path);
        if (!log) throw DataError("train: cannot write log " + log_path);
    }

    TrainResult result;
    result.logs.reserve(static_cast<size_t>(total_steps));

    for (int step = 0; step < total_steps; ++step) {
        const double lr_mult = step >= drop_step ? 0.1 : 1.0;

        ParamBinder bind(model.params, true);
        std::vector<TrainingPair> batch;
        batch.reserve(static_cast<size_t>(cfg.train.batch_size));
        const int grid = model.cfg.search_grid();
        Var loss_sum, cls_sum, reg_sum;
        for (int b = 0; b < cfg.train.batch_size; ++b) {
            // A ground truth that captures no lattice cell leaves the loss
            // undefined; such samples are skipped and redrawn.
            TrainingPair pair;
            bool usable = false;
            for (int attempt = 0; attempt < 16 && !usable; ++attempt) {
                const uint64_t sample_seed =
                    Rng::derive(cfg.train.seed, static_cast<uint64_t>(step),
                                static_cast<uint64_t>(b) | (static_cast<uint64_t>(attempt) << 32));
                pair = source(sample_seed);
                if (assign_labels(grid, grid, pair.gt_norm).np() > 0) {
                    usable = true;
                } else if (attempt == 0) {
                    log_warn("train: sample with zero positive cells skipped at step " +
                             std::to_string(step));
                }
            }
            if (!usable)
                throw DataError("train: could not draw a sample with positive cells at step " +
                                std::to_string(step));
            batch.push_back(std::move(pair));
            Rng dropout_rng(Rng::derive(cfg.train.seed ^ 0xD50917, static_cast<uint64_t>(step),
                                        static_cast<uint64_t>(b)));
            SampleLoss s = sample_loss(model, bind, batch.back(), cfg, true, &dropout_rng);
            loss_sum = b == 0 ? s.total : op::add(loss_sum, s.total);
            cls_sum = b == 0 ? s.cls : op::add(cls_sum, s.cls);
            reg_sum = b == 0 ? s.reg : op::add(reg_sum, s.reg);
        }
        Var loss = op::mul_scalar(loss_sum, 1.0 / cfg.train.batch_size);

        StepLog entry;
        entry.step = step;
        entry.loss = loss.val()[0];
        entry.cls = cls_sum.val()[0] / cfg.train.batch_size;
        entry.reg = reg_sum.val()[0] / cfg.train.batch_size;
        if (!std::isfinite(entry.loss)) {
            if (!dump_dir_on_failure.empty()) dump_batch(dump_dir_on_failure, step, batch);
            throw NumericError("train: non-finite loss at step " + std::to_string(step) +
                               (dump_dir_on_failure.empty()
                                    ? ""
                                    : "; batch dumped to " + dump_dir_on_failure));
        }

        backward(loss);
        std::map<std::string, Tensor> grads;
        for (const auto& name : model.params.names())
            grads.emplace(name, bind.grad_or_zero(name));
        opt.step(model.params, grads, cfg.train.lr_backbone * lr_mult,
                 cfg.train.lr_other * lr_mult);

        result.logs.push_back(entry);
        if (log) {
            log << "{\"step\":" << entry.step << ",\"loss\":" << entry.loss
                << ",\"cls\":" << entry.cls << ",\"reg\":" << entry.reg << "}\n";
        }
    }
    return result;
}

}  // namespace mapnet
