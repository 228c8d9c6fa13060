#include "mapnet/common.hpp"

#include <cstdio>

namespace mapnet {

void log_warn(const std::string& msg) {
    std::fprintf(stderr, "[mapnet] warning: %s\n", msg.c_str());
}

void log_info(const std::string& msg) {
    std::fprintf(stderr, "[mapnet] %s\n", msg.c_str());
}

}  // namespace mapnet
