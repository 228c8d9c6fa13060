#pragma once

#include "mapnet/matcher.hpp"

namespace mapnet {

// Dual alignment: two cascaded cross-attentions over the concatenated
// similarity tokens, channel-gated for the classification stream and
// spatially gated for the regression stream. No feed-forward blocks.
struct AlignmentParams {
    QkvProj proj_c, proj_p;
    MultiHeadParams cross_c, cross_p;
    ChannelAttnParams gate_c;
    SpatialAttnParams gate_p;
};

std::pair<Tokens, Tokens> dual_align(const Tokens& s_c, const Tokens& s_p,
                                     const AlignmentParams& p, const Tensor& pe_x);

}  // namespace mapnet
