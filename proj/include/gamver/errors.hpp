#pragma once

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace gamver {

// Bad inputs: unreadable files, shape mismatches, out-of-range parameters.
// The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structurally valid inputs that cannot be processed: all-zero maps where a
// distribution is required, single-class datasets, empty reference classes.
// The CLI maps this to exit code 3.
class DegenerateDataError : public std::runtime_error {
public:
  explicit DegenerateDataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric field parsers that fail as validation errors, not crashes.
inline int parseInt(const std::string& text, const std::string& what) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(what + ": not an integer: '" + text + "'");
  }
}

inline double parseDouble(const std::string& text, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(what + ": not a number: '" + text + "'");
  }
}

}  // namespace gamver
