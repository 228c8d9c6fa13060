#pragma once

#include <stdexcept>
#include <string>

namespace mapnet {

// Error categories, mapped to CLI exit codes: config/usage -> 2, data -> 3,
// numeric failure -> 4. ContractViolation marks broken call-site preconditions
// (dimension mismatches and the like) and also exits with 4.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

[[noreturn]] inline void contract_fail(const std::string& msg) {
    throw ContractViolation(msg);
}

#define MAPNET_REQUIRE(cond, msg) \
    do {                          \
        if (!(cond)) ::mapnet::contract_fail(msg); \
    } while (0)

void log_warn(const std::string& msg);
void log_info(const std::string& msg);

}  // namespace mapnet
