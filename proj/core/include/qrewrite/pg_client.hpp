#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace qrw {

struct PgError {
  std::string severity;
  std::string sqlstate;
  std::string message;
};

// Result of one simple-query round trip. SQL failures land in `error`;
// only transport problems throw.
struct PgResult {
  std::vector<std::string> columns;
  std::vector<std::uint32_t> type_oids;
  std::vector<std::vector<std::optional<std::string>>> rows;  // text format
  std::string command_tag;
  std::optional<PgError> error;

  bool ok() const { return !error.has_value(); }
};

struct PgParams {
  std::string host = "127.0.0.1";  // a leading '/' means a unix socket directory
  int port = 5432;
  std::string user = "postgres";
  std::string database = "postgres";
  std::string password;  // used only if the server asks
  double connect_timeout_s = 10.0;
  double read_timeout_s = 300.0;
};

// Minimal PostgreSQL v3 wire-protocol client: startup, trust/cleartext/md5
// authentication, and the simple-query cycle in text format. One statement
// at a time; no COPY, no extended protocol.
class PgConnection {
 public:
  explicit PgConnection(const PgParams& params);
  ~PgConnection();

  PgConnection(PgConnection&& other) noexcept;
  PgConnection& operator=(PgConnection&& other) noexcept;
  PgConnection(const PgConnection&) = delete;
  PgConnection& operator=(const PgConnection&) = delete;

  PgResult exec(const std::string& sql);
  void set_read_timeout(double seconds) { read_timeout_s_ = seconds; }
  bool open() const { return fd_ >= 0; }
  void close();

 private:
  void send_bytes(const std::string& bytes);
  bool read_exact(char* out, std::size_t n);
  std::pair<char, std::string> read_message();
  void authenticate(const PgParams& params);

  int fd_ = -1;
  double read_timeout_s_ = 300.0;
};

// PG type oids the gateway canonicalizes specially.
namespace pgoid {
constexpr std::uint32_t kFloat4 = 700;
constexpr std::uint32_t kFloat8 = 701;
constexpr std::uint32_t kNumeric = 1700;
}  // namespace pgoid

}  // namespace qrw
