#pragma once

#include <stdexcept>
#include <string>

namespace ricenet {

// Error categories map one-to-one onto CLI exit codes (config=2, data=3,
// numeric=4).
enum class ErrorKind { Config, Data, Numeric };

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

  int exit_code() const {
    switch (kind_) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Data: return 3;
    case ErrorKind::Numeric: return 4;
    }
    return 1;
  }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_config(const std::string& msg) {
  throw Error(ErrorKind::Config, msg);
}
[[noreturn]] inline void throw_data(const std::string& msg) {
  throw Error(ErrorKind::Data, msg);
}
[[noreturn]] inline void throw_numeric(const std::string& msg) {
  throw Error(ErrorKind::Numeric, msg);
}

} // namespace ricenet
