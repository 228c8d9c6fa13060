#include "mapnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace mapnet {

GradCheckReport check_gradients(std::vector<Var>& leaves,
                                const std::vector<std::string>& names,
                                const std::function<Var()>& rebuild,
                                double step,
                                int max_entries_per_leaf,
                                uint64_t sample_seed) {
    MAPNET_REQUIRE(leaves.size() == names.size(), "check_gradients: names/leaves mismatch");

    for (auto& l : leaves) l.clear_grad();
    Var root = rebuild();
    backward(root);
    std::vector<Tensor> analytic;
    analytic.reserve(leaves.size());
    for (auto& l : leaves) {
        analytic.push_back(l.grad().empty() ? Tensor(l.val().shape()) : l.grad());
    }

    GradCheckReport report;
    Rng rng(sample_seed);
    for (size_t li = 0; li < leaves.size(); ++li) {
        Tensor& value = leaves[li].mutable_val();
        const int n = value.size();
        std::vector<int> entries;
        if (max_entries_per_leaf <= 0 || n <= max_entries_per_leaf) {
            entries.resize(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) entries[static_cast<size_t>(i)] = i;
        } else {
            for (int i = 0; i < max_entries_per_leaf; ++i)
                entries.push_back(rng.uniform_int(0, n - 1));
            std::sort(entries.begin(), entries.end());
            entries.erase(std::unique(entries.begin(), entries.end()), entries.end());
        }
        for (int idx : entries) {
            const double saved = value[idx];
            value[idx] = saved + step;
            const double f_plus = rebuild().val()[0];
            value[idx] = saved - step;
            const double f_minus = rebuild().val()[0];
            value[idx] = saved;
            const double numeric = (f_plus - f_minus) / (2.0 * step);
            const double a = analytic[li][idx];
            const double rel =
                std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
            ++report.entries_checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_leaf = names[li];
                report.worst_index = idx;
            }
        }
    }
    return report;
}

}  // namespace mapnet
