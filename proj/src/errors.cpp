#include "qsel/errors.hpp"

namespace qsel {

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
  std::string out = "validation failed";
  for (const auto& p : problems) {
    out += "\n  - ";
    out += p;
  }
  return out;
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> problems)
    : std::runtime_error(join_problems(problems)), problems_(std::move(problems)) {}

}  // namespace qsel
