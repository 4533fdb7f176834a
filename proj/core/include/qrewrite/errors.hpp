#pragma once

#include <stdexcept>
#include <string>

namespace qrw {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConnectionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Retriable network/provider failure on an LLM or embedding call.
struct TransportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BudgetExhausted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingSlot : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The assistant reply contained no extractable SQL statement.
struct NoSqlFound : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ProviderError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnknownRule : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A statement exceeded its execution timeout.
struct TimeoutError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The scripted backend had no reply queued for a prompt.
struct ScriptMiss : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace qrw
