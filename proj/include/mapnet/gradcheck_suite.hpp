#pragma once

#include "mapnet/gradcheck.hpp"
#include "mapnet/train.hpp"

namespace mapnet {

struct BlockCheck {
    std::string block;
    GradCheckReport report;
};

// Central-difference verification of every differentiable block: the two
// gates, multi-head attention, a full matcher layer, the dual alignment
// module, both guided losses, and the whole forward+loss graph of a 4-token
// toy model. Guidance weights are frozen at the base point, matching their
// treat-as-constant semantics.
std::vector<BlockCheck> run_gradcheck_suite(uint64_t seed, const std::string& only_block = "");

}  // namespace mapnet
