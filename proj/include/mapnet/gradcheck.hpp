#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mapnet/autograd.hpp"
#include "mapnet/rng.hpp"

namespace mapnet {

// Central finite differences against the analytic gradient of a scalar-valued
// graph. `rebuild` must construct the graph from the current values of
// `leaves` (their tensors are perturbed in place between evaluations).
//
// rel_err = |analytic - numeric| / max(1, |analytic|, |numeric|)
struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_leaf;
    int worst_index = -1;
    int entries_checked = 0;
};

GradCheckReport check_gradients(std::vector<Var>& leaves,
                                const std::vector<std::string>& names,
                                const std::function<Var()>& rebuild,
                                double step = 1e-4,
                                int max_entries_per_leaf = 24,
                                uint64_t sample_seed = 17);

}  // namespace mapnet
