#pragma once

#include "mapnet/evaluation.hpp"

namespace mapnet {

// Renders the success and normalized-precision curves as SVG files plus a
// machine-readable curve table:
//   <out_dir>/success.svg, <out_dir>/norm_precision.svg, <out_dir>/curves.csv
// Output bytes are a pure function of the report.
void emit_plots(const EvalReport& report, const std::string& out_dir);

}  // namespace mapnet
