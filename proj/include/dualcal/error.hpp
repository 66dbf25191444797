#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dualcal {

// Machine-readable error category. The service maps these onto HTTP statuses.
enum class ErrorCode {
  contract_violation,
  codec,
  insufficient_data,
  degenerate_configuration,
  alignment_failed,
  no_statistics,
  stage_order,
  validation,
  conflict,
  not_found,
  io,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::contract_violation: return "contract_violation";
    case ErrorCode::codec: return "codec_error";
    case ErrorCode::insufficient_data: return "insufficient_data";
    case ErrorCode::degenerate_configuration: return "degenerate_configuration";
    case ErrorCode::alignment_failed: return "alignment_failed";
    case ErrorCode::no_statistics: return "no_statistics";
    case ErrorCode::stage_order: return "stage_order";
    case ErrorCode::validation: return "validation_error";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::io: return "io_error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::vector<std::string> details = {})
      : std::runtime_error(message), code_(code), details_(std::move(details)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::vector<std::string>& details() const noexcept { return details_; }

 private:
  ErrorCode code_;
  std::vector<std::string> details_;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(ErrorCode::contract_violation, message);
}

}  // namespace detail

}  // namespace dualcal
