#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace stress {

// Every failure raised by the engine carries a stable machine-readable code
// (e.g. "ChannelMismatch") and, where it applies, the offending field.
class Error : public std::runtime_error {
public:
    Error(std::string code, std::string message, std::string field = {})
        : std::runtime_error(code + ": " + message),
          code_(std::move(code)),
          message_(std::move(message)),
          field_(std::move(field)) {}

    const std::string& code() const noexcept { return code_; }
    const std::string& message() const noexcept { return message_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::string code_;
    std::string message_;
    std::string field_;
};

[[noreturn]] inline void fail(std::string code, std::string message, std::string field = {}) {
    throw Error(std::move(code), std::move(message), std::move(field));
}

}  // namespace stress
