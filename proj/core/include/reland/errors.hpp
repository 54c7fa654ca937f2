#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace reland {

// All library failures carry a short machine-parseable category that the CLI
// prints as `ERROR <category>: <message>`.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(message), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

inline Error schema_error(const std::string& msg) { return Error("schema", msg); }
inline Error parse_error(const std::string& msg) { return Error("parse", msg); }
inline Error domain_error(const std::string& msg) { return Error("domain", msg); }
inline Error config_error(const std::string& msg) { return Error("config", msg); }
inline Error dimension_error(const std::string& msg) { return Error("dimension", msg); }
inline Error state_error(const std::string& msg) { return Error("state", msg); }
inline Error optimizer_error(const std::string& msg) { return Error("optimizer", msg); }
inline Error io_error(const std::string& msg) { return Error("io", msg); }

}  // namespace reland
