#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "mapnet/evaluation.hpp"
#include "mapnet/plots.hpp"

namespace fs = std::filesystem;
using namespace mapnet;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Brute-force double loop over frames x thresholds.
double success_auc_oracle(const std::vector<double>& ious) {
    double acc = 0.0;
    for (int i = 0; i <= 20; ++i) {
        int hits = 0;
        for (double v : ious)
            if (v > i * 0.05) ++hits;
        acc += static_cast<double>(hits) / ious.size();
    }
    return acc / 21.0;
}

double npr_oracle(const std::vector<double>& errs) {
    double acc = 0.0;
    for (int i = 0; i <= 100; ++i) {
        int hits = 0;
        for (double e : errs)
            if (e <= i * 0.005) ++hits;
        acc += static_cast<double>(hits) / errs.size();
    }
    return acc / 101.0;
}

}  // namespace

TEST_CASE("frame metrics worked examples") {
    FrameResult same{Box{10, 10, 50, 50}, Box{10, 10, 50, 50}, 1.0};
    FrameMetrics m = frame_metrics(same);
    CHECK(m.iou == doctest::Approx(1.0));
    CHECK(m.center_error_px == doctest::Approx(0.0));
    CHECK(m.norm_center_error == doctest::Approx(0.0));

    FrameResult disjoint{Box{0, 0, 10, 10}, Box{20, 20, 30, 30}, 1.0};
    CHECK(frame_metrics(disjoint).iou == doctest::Approx(0.0));

    // b=(0,0,2,2), g=(1,1,3,3): inter 1, union 7.
    FrameResult overlap{Box{0, 0, 2, 2}, Box{1, 1, 3, 3}, 1.0};
    CHECK(frame_metrics(overlap).iou == doctest::Approx(1.0 / 7.0).epsilon(1e-12));

    FrameResult bad{Box{0, 0, 2, 2}, Box{1, 1, 1, 3}, 1.0};
    CHECK_THROWS_AS(frame_metrics(bad), DataError);
}

TEST_CASE("success AUC: endpoints, order invariance, oracle equivalence") {
    std::vector<double> ones(10, 1.0);
    CHECK(success_auc(ones) == doctest::Approx(20.0 / 21.0).epsilon(1e-12));
    std::vector<double> zeros(10, 0.0);
    CHECK(success_auc(zeros) == doctest::Approx(0.0));

    Rng rng(3);
    std::vector<double> ious;
    for (int i = 0; i < 57; ++i) ious.push_back(rng.uniform());
    CHECK(success_auc(ious) == doctest::Approx(success_auc_oracle(ious)).epsilon(1e-12));
    std::vector<double> shuffled = ious;
    std::reverse(shuffled.begin(), shuffled.end());
    CHECK(success_auc(shuffled) == doctest::Approx(success_auc(ious)).epsilon(1e-15));

    CHECK_THROWS_AS(success_auc({}), DataError);
}

TEST_CASE("precision and normalized precision") {
    std::vector<double> zeros(5, 0.0);
    CHECK(precision_at(zeros) == doctest::Approx(1.0));
    CHECK(norm_precision_auc(zeros) == doctest::Approx(1.0));

    CHECK(precision_at({10.0, 30.0}) == doctest::Approx(0.5));

    Rng rng(5);
    std::vector<double> errs;
    for (int i = 0; i < 41; ++i) errs.push_back(rng.uniform(0.0, 0.6));
    CHECK(norm_precision_auc(errs) == doctest::Approx(npr_oracle(errs)).epsilon(1e-12));

    CHECK_THROWS_AS(precision_at({}), DataError);
    CHECK_THROWS_AS(norm_precision_auc({}), DataError);
}

TEST_CASE("AO and SR") {
    std::vector<double> ones(4, 1.0);
    AoSr perfect = ao_sr(ones);
    CHECK(perfect.ao == doctest::Approx(1.0));
    CHECK(perfect.sr50 == doctest::Approx(1.0));
    CHECK(perfect.sr75 == doctest::Approx(1.0));

    AoSr mixed = ao_sr({0.6, 0.8});
    CHECK(mixed.ao == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(mixed.sr50 == doctest::Approx(1.0));
    CHECK(mixed.sr75 == doctest::Approx(0.5));

    AoSr swapped = ao_sr({0.8, 0.6});
    CHECK(swapped.ao == doctest::Approx(mixed.ao).epsilon(1e-15));
}

TEST_CASE("perfect oracle tracker: SR = 20/21, PR = NPR = AO = 1") {
    Rng rng(7);
    std::vector<std::pair<std::string, std::vector<FrameResult>>> results;
    for (int s = 0; s < 3; ++s) {
        std::vector<FrameResult> frames;
        for (int f = 0; f < 25; ++f) {
            Box gt{rng.uniform(0, 50), rng.uniform(0, 50), 0, 0};
            gt.x2 = gt.x1 + rng.uniform(10, 40);
            gt.y2 = gt.y1 + rng.uniform(10, 40);
            frames.push_back({gt, gt, 1.0});
        }
        results.emplace_back("seq_" + std::to_string(s), frames);
    }
    EvalReport report = evaluate_results(results);
    CHECK(report.overall.success == doctest::Approx(20.0 / 21.0).epsilon(1e-12));
    CHECK(report.overall.precision == doctest::Approx(1.0));
    CHECK(report.overall.npr == doctest::Approx(1.0));
    CHECK(report.overall.ao == doctest::Approx(1.0));
    CHECK(report.overall.sr50 == doctest::Approx(1.0));
    CHECK(report.overall.sr75 == doctest::Approx(1.0));

    // Bookkeeping: per-sequence frame counts sum to the dataset size.
    int total = 0;
    for (const auto& s : report.sequences) total += s.frames;
    CHECK(total == report.overall.frames);
    CHECK(total == 75);
}

TEST_CASE("overall metrics equal frame-weighted sequence aggregation") {
    Rng rng(11);
    std::vector<std::pair<std::string, std::vector<FrameResult>>> results;
    std::vector<double> all_ious;
    for (int s = 0; s < 4; ++s) {
        std::vector<FrameResult> frames;
        const int n = 10 + 7 * s;
        for (int f = 0; f < n; ++f) {
            Box gt{10, 10, 30, 30};
            const double shift = rng.uniform(0.0, 15.0);
            Box pred{10 + shift, 10, 30 + shift, 30};
            frames.push_back({pred, gt, 1.0});
            all_ious.push_back(box_iou(pred, gt));
        }
        results.emplace_back("seq_" + std::to_string(s), frames);
    }
    EvalReport report = evaluate_results(results);

    // AO pooled over frames.
    double mean_iou = 0.0;
    for (double v : all_ious) mean_iou += v;
    mean_iou /= all_ious.size();
    CHECK(report.overall.ao == doctest::Approx(mean_iou).epsilon(1e-12));

    // Success: frame-weighted mean of per-sequence values.
    double weighted = 0.0;
    for (const auto& s : report.sequences)
        weighted += s.success * s.frames;
    weighted /= report.overall.frames;
    CHECK(report.overall.success == doctest::Approx(weighted).epsilon(1e-12));
}

TEST_CASE("curves are monotone non-increasing and plots regenerate byte-identically") {
    Rng rng(13);
    std::vector<FrameResult> frames;
    for (int f = 0; f < 60; ++f) {
        Box gt{20, 20, 60, 60};
        const double dx = rng.uniform(0.0, 30.0), dy = rng.uniform(0.0, 20.0);
        frames.push_back({Box{20 + dx, 20 + dy, 60 + dx, 60 + dy}, gt, 1.0});
    }
    EvalReport report = evaluate_results({{"seq", frames}});

    for (size_t i = 1; i < report.success_curve.size(); ++i)
        CHECK(report.success_curve[i] <= report.success_curve[i - 1]);

    const std::string dir = (fs::temp_directory_path() / "mapnet_test_plots").string();
    fs::remove_all(dir);
    emit_plots(report, dir);
    const std::string s1 = slurp(dir + "/success.svg");
    const std::string p1 = slurp(dir + "/norm_precision.svg");
    const std::string c1 = slurp(dir + "/curves.csv");

    // Curve table rows: header + 21 success + 101 normalized precision.
    CHECK(std::count(c1.begin(), c1.end(), '\n') == 1 + 21 + 101);

    emit_plots(report, dir);
    CHECK(slurp(dir + "/success.svg") == s1);
    CHECK(slurp(dir + "/norm_precision.svg") == p1);
    CHECK(slurp(dir + "/curves.csv") == c1);

    // Report json round-trip.
    write_report_json(dir + "/report.json", report);
    EvalReport back = read_report_json(dir + "/report.json");
    CHECK(back.overall.success == doctest::Approx(report.overall.success).epsilon(1e-12));
    CHECK(back.sequences.size() == report.sequences.size());
    emit_plots(back, dir + "/again");
    CHECK(slurp(dir + "/again/success.svg") == s1);
    fs::remove_all(dir);
}

TEST_CASE("zero-area ground-truth frames are excluded with a warning") {
    std::vector<FrameResult> frames;
    frames.push_back({Box{0, 0, 10, 10}, Box{0, 0, 10, 10}, 1.0});
    frames.push_back({Box{0, 0, 10, 10}, Box{5, 5, 5, 15}, 1.0});  // zero width
    EvalReport report = evaluate_results({{"seq", frames}});
    CHECK(report.overall.frames == 1);
    CHECK(report.overall.ao == doctest::Approx(1.0));
}
