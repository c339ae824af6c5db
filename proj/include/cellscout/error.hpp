#pragma once

#include <stdexcept>
#include <string>

namespace cellscout {

/// Domain error carrying a machine-readable code (e.g. "RaggedRow", "UnknownGene").
/// The code is what the CLI prints and what the HTTP layer returns in its body.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

}  // namespace cellscout
