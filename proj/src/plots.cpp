#include "mapnet/plots.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace mapnet {

namespace {

constexpr int kWidth = 640, kHeight = 480;
constexpr int kMarginL = 70, kMarginR = 25, kMarginT = 40, kMarginB = 55;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

template <size_t N>
void write_curve_svg(const std::string& path, const std::array<double, N>& ys, double x_max,
                     const std::string& title, const std::string& x_label, double headline) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write plot: " + path);

    const double plot_w = kWidth - kMarginL - kMarginR;
    const double plot_h = kHeight - kMarginT - kMarginB;
    auto px = [&](double x) { return kMarginL + x / x_max * plot_w; };
    auto py = [&](double y) { return kMarginT + (1.0 - y) * plot_h; };

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
        << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
    out << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\" "
           "font-family=\"sans-serif\">"
        << title << " [" << fmt(headline) << "]</text>\n";

    // Grid and axis labels at fifths.
    for (int i = 0; i <= 5; ++i) {
        const double fy = i / 5.0;
        out << "<line x1=\"" << px(0) << "\" y1=\"" << py(fy) << "\" x2=\"" << px(x_max)
            << "\" y2=\"" << py(fy) << "\" stroke=\"#dddddd\"/>\n";
        out << "<text x=\"" << kMarginL - 8 << "\" y=\"" << py(fy) + 4
            << "\" text-anchor=\"end\" font-size=\"12\" font-family=\"sans-serif\">" << fmt(fy)
            << "</text>\n";
        const double fx = x_max * i / 5.0;
        out << "<line x1=\"" << px(fx) << "\" y1=\"" << py(0) << "\" x2=\"" << px(fx)
            << "\" y2=\"" << py(1) << "\" stroke=\"#dddddd\"/>\n";
        out << "<text x=\"" << px(fx) << "\" y=\"" << kHeight - kMarginB + 20
            << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">" << fmt(fx)
            << "</text>\n";
    }
    out << "<rect x=\"" << px(0) << "\" y=\"" << py(1) << "\" width=\"" << plot_w
        << "\" height=\"" << plot_h << "\" fill=\"none\" stroke=\"black\"/>\n";
    out << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 14
        << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">" << x_label
        << "</text>\n";

    out << "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < N; ++i) {
        const double x = x_max * static_cast<double>(i) / (N - 1);
        out << fmt(px(x)) << "," << fmt(py(ys[i])) << (i + 1 < N ? " " : "");
    }
    out << "\"/>\n</svg>\n";
}

}  // namespace

void emit_plots(const EvalReport& report, const std::string& out_dir) {
    fs::create_directories(out_dir);
    write_curve_svg((fs::path(out_dir) / "success.svg").string(), report.success_curve, 1.0,
                    "Success plot", "IoU threshold", report.overall.success);
    write_curve_svg((fs::path(out_dir) / "norm_precision.svg").string(), report.npr_curve, 0.5,
                    "Normalized precision plot", "normalized center-error threshold",
                    report.overall.npr);

    std::ofstream csv(fs::path(out_dir) / "curves.csv");
    if (!csv) throw DataError("cannot write curve table in " + out_dir);
    csv << "curve,threshold,value\n";
    char line[96];
    for (int i = 0; i <= 20; ++i) {
        std::snprintf(line, sizeof(line), "success,%.6f,%.6f\n", i * 0.05,
                      report.success_curve[static_cast<size_t>(i)]);
        csv << line;
    }
    for (int i = 0; i <= 100; ++i) {
        std::snprintf(line, sizeof(line), "norm_precision,%.6f,%.6f\n", i * 0.005,
                      report.npr_curve[static_cast<size_t>(i)]);
        csv << line;
    }
}

}  // namespace mapnet
