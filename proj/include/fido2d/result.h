#ifndef FIDO2D_RESULT_H_
#define FIDO2D_RESULT_H_

#include <cassert>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

namespace fido2d {

// Error kinds that cross module boundaries. Each protocol failure maps to
// exactly one of these so tests and logs can match on them.
enum class ErrorCode {
  kInvalidInput,
  kMalformed,
  kRegistrationRefused,
  kRegistrationFailed,
  kLinkFailed,
  kTransactionRefused,
  kTransactionAborted,
  kUnknownChallenge,
  kUserDeclined,
  kNoCredential,
  kLinkInputError,
  kOriginMismatch,
  kChannelViolation,
  kScheduleError,
  kTransport,
};

std::string_view ErrorCodeName(ErrorCode code);

struct Error {
  ErrorCode code;
  std::string detail;

  std::string ToString() const;
};

// Value-or-error. Deliberately small: std::expected is C++23.
template <typename T, typename E = Error>
class [[nodiscard]] Result {
 public:
  Result(T value) : state_(std::in_place_index<0>, std::move(value)) {}
  Result(E error) : state_(std::in_place_index<1>, std::move(error)) {}

  bool has_value() const { return state_.index() == 0; }
  explicit operator bool() const { return has_value(); }

  T& value() & {
    assert(has_value());
    return std::get<0>(state_);
  }
  const T& value() const& {
    assert(has_value());
    return std::get<0>(state_);
  }
  T&& value() && {
    assert(has_value());
    return std::get<0>(std::move(state_));
  }
  const E& error() const {
    assert(!has_value());
    return std::get<1>(state_);
  }

  T& operator*() & { return value(); }
  const T& operator*() const& { return value(); }
  T* operator->() { return &value(); }
  const T* operator->() const { return &value(); }

 private:
  std::variant<T, E> state_;
};

struct Ok {};

inline Error MakeError(ErrorCode code, std::string detail = {}) {
  return Error{code, std::move(detail)};
}

}  // namespace fido2d

#endif  // FIDO2D_RESULT_H_
