#pragma once

#include <stdexcept>
#include <string>

namespace tsad {

// Single exception type for the library; `category` keeps CLI error lines
// machine-parsable ("error: <category>: <message>").
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(category + ": " + message),
          category_(std::move(category)) {}

    const std::string& category() const { return category_; }

private:
    std::string category_;
};

[[noreturn]] inline void fail(const std::string& category,
                              const std::string& message) {
    throw Error(category, message);
}

} // namespace tsad
