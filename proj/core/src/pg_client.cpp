#include "qrewrite/pg_client.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <utility>

#include <openssl/evp.h>

#include "qrewrite/errors.hpp"

namespace qrw {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>(v & 0xFF));
}

std::uint32_t get_u32(const char* p) {
  return (static_cast<std::uint32_t>(static_cast<unsigned char>(p[0])) << 24) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(p[1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(p[2])) << 8) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(p[3]));
}

std::uint16_t get_u16(const char* p) {
  return static_cast<std::uint16_t>(
      (static_cast<std::uint16_t>(static_cast<unsigned char>(p[0])) << 8) |
      static_cast<std::uint16_t>(static_cast<unsigned char>(p[1])));
}

// Typed message: type byte + int32 length (self-inclusive) + payload.
std::string frame(char type, const std::string& payload) {
  std::string out;
  out.push_back(type);
  put_u32(out, static_cast<std::uint32_t>(payload.size() + 4));
  out += payload;
  return out;
}

std::string md5_hex(const std::string& input) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(input.data(), input.size(), digest, &len, EVP_md5(), nullptr) != 1) {
    throw ConnectionError("md5 digest failed");
  }
  static const char* kHex = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

PgError parse_error_fields(const std::string& payload) {
  PgError error;
  std::size_t i = 0;
  while (i < payload.size() && payload[i] != '\0') {
    const char field = payload[i++];
    std::string value;
    while (i < payload.size() && payload[i] != '\0') value.push_back(payload[i++]);
    if (i < payload.size()) ++i;  // skip the terminator
    switch (field) {
      case 'S': error.severity = value; break;
      case 'C': error.sqlstate = value; break;
      case 'M': error.message = value; break;
      default: break;
    }
  }
  return error;
}

int connect_tcp(const std::string& host, int port, double timeout_s) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* result = nullptr;
  const std::string port_str = std::to_string(port);
  const int rc = getaddrinfo(host.c_str(), port_str.c_str(), &hints, &result);
  if (rc != 0) {
    throw ConnectionError("cannot resolve " + host + ": " + gai_strerror(rc));
  }
  int fd = -1;
  std::string last_error = "no addresses";
  for (addrinfo* ai = result; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) {
      last_error = std::strerror(errno);
      continue;
    }
    timeval tv{};
    tv.tv_sec = static_cast<long>(timeout_s);
    tv.tv_usec = static_cast<long>((timeout_s - static_cast<double>(tv.tv_sec)) * 1e6);
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    last_error = std::strerror(errno);
    ::close(fd);
    fd = -1;
  }
  freeaddrinfo(result);
  if (fd < 0) {
    throw ConnectionError("cannot connect to " + host + ":" + port_str + ": " +
                          last_error);
  }
  return fd;
}

int connect_unix(const std::string& directory, int port) {
  const std::string path = directory + "/.s.PGSQL." + std::to_string(port);
  int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (fd < 0) throw ConnectionError(std::string("socket: ") + std::strerror(errno));
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  if (path.size() >= sizeof(addr.sun_path)) {
    ::close(fd);
    throw ConnectionError("unix socket path too long: " + path);
  }
  std::strncpy(addr.sun_path, path.c_str(), sizeof(addr.sun_path) - 1);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const std::string err = std::strerror(errno);
    ::close(fd);
    throw ConnectionError("cannot connect to " + path + ": " + err);
  }
  return fd;
}

}  // namespace

PgConnection::PgConnection(const PgParams& params)
    : read_timeout_s_(params.read_timeout_s) {
  fd_ = params.host.rfind('/', 0) == 0
            ? connect_unix(params.host, params.port)
            : connect_tcp(params.host, params.port, params.connect_timeout_s);
  try {
    authenticate(params);
  } catch (...) {
    close();
    throw;
  }
}

PgConnection::~PgConnection() { close(); }

PgConnection::PgConnection(PgConnection&& other) noexcept
    : fd_(other.fd_), read_timeout_s_(other.read_timeout_s_) {
  other.fd_ = -1;
}

PgConnection& PgConnection::operator=(PgConnection&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.fd_;
    read_timeout_s_ = other.read_timeout_s_;
    other.fd_ = -1;
  }
  return *this;
}

void PgConnection::close() {
  if (fd_ >= 0) {
    // Terminate message, best effort.
    const std::string bye = frame('X', "");
    ::send(fd_, bye.data(), bye.size(), MSG_NOSIGNAL);
    ::close(fd_);
    fd_ = -1;
  }
}

void PgConnection::send_bytes(const std::string& bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n =
        ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n <= 0) {
      if (n < 0 && (errno == EINTR)) continue;
      throw ConnectionError(std::string("send failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
}

bool PgConnection::read_exact(char* out, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    pollfd pfd{fd_, POLLIN, 0};
    const int timeout_ms = read_timeout_s_ <= 0
                               ? -1
                               : static_cast<int>(read_timeout_s_ * 1000.0);
    const int pr = ::poll(&pfd, 1, timeout_ms);
    if (pr == 0) throw ConnectionError("timed out waiting for server response");
    if (pr < 0) {
      if (errno == EINTR) continue;
      throw ConnectionError(std::string("poll failed: ") + std::strerror(errno));
    }
    const ssize_t r = ::recv(fd_, out + got, n - got, 0);
    if (r == 0) return false;
    if (r < 0) {
      if (errno == EINTR) continue;
      throw ConnectionError(std::string("recv failed: ") + std::strerror(errno));
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

std::pair<char, std::string> PgConnection::read_message() {
  char header[5];
  if (!read_exact(header, 5)) {
    throw ConnectionError("server closed the connection");
  }
  const char type = header[0];
  const std::uint32_t length = get_u32(header + 1);
  if (length < 4 || length > (64u << 20)) {
    throw ConnectionError("malformed message length from server");
  }
  std::string payload(length - 4, '\0');
  if (length > 4 && !read_exact(payload.data(), payload.size())) {
    throw ConnectionError("server closed mid-message");
  }
  return {type, std::move(payload)};
}

void PgConnection::authenticate(const PgParams& params) {
  std::string payload;
  put_u32(payload, 196608);  // protocol 3.0
  payload += "user";
  payload.push_back('\0');
  payload += params.user;
  payload.push_back('\0');
  payload += "database";
  payload.push_back('\0');
  payload += params.database;
  payload.push_back('\0');
  payload += "client_encoding";
  payload.push_back('\0');
  payload += "UTF8";
  payload.push_back('\0');
  payload.push_back('\0');

  std::string startup;
  put_u32(startup, static_cast<std::uint32_t>(payload.size() + 4));
  startup += payload;
  send_bytes(startup);

  for (;;) {
    auto [type, body] = read_message();
    switch (type) {
      case 'R': {
        if (body.size() < 4) throw ConnectionError("short authentication message");
        const std::uint32_t code = get_u32(body.data());
        if (code == 0) break;  // ok
        if (code == 3) {
          std::string pw = params.password;
          pw.push_back('\0');
          send_bytes(frame('p', pw));
          break;
        }
        if (code == 5) {
          if (body.size() < 8) throw ConnectionError("short md5 challenge");
          const std::string salt = body.substr(4, 4);
          const std::string inner = md5_hex(params.password + params.user);
          std::string answer = "md5" + md5_hex(inner + salt);
          answer.push_back('\0');
          send_bytes(frame('p', answer));
          break;
        }
        throw ConnectionError("unsupported authentication method code " +
                              std::to_string(code));
      }
      case 'E': {
        const PgError error = parse_error_fields(body);
        throw ConnectionError("connection rejected: " + error.message);
      }
      case 'Z':
        return;  // ReadyForQuery
      case 'S':
      case 'K':
      case 'N':
        break;  // parameter status / key data / notice
      default:
        throw ConnectionError(std::string("unexpected startup message '") + type + "'");
    }
  }
}

PgResult PgConnection::exec(const std::string& sql) {
  if (fd_ < 0) throw ConnectionError("connection is closed");
  std::string payload = sql;
  payload.push_back('\0');
  send_bytes(frame('Q', payload));

  PgResult result;
  for (;;) {
    auto [type, body] = read_message();
    switch (type) {
      case 'T': {
        result.columns.clear();
        result.type_oids.clear();
        result.rows.clear();
        if (body.size() < 2) throw ConnectionError("short row description");
        const std::uint16_t nfields = get_u16(body.data());
        std::size_t i = 2;
        for (std::uint16_t f = 0; f < nfields; ++f) {
          std::string name;
          while (i < body.size() && body[i] != '\0') name.push_back(body[i++]);
          ++i;  // terminator
          if (i + 18 > body.size()) throw ConnectionError("short field description");
          const std::uint32_t type_oid = get_u32(body.data() + i + 6);
          i += 18;
          result.columns.push_back(std::move(name));
          result.type_oids.push_back(type_oid);
        }
        break;
      }
      case 'D': {
        if (body.size() < 2) throw ConnectionError("short data row");
        const std::uint16_t ncols = get_u16(body.data());
        std::vector<std::optional<std::string>> row;
        row.reserve(ncols);
        std::size_t i = 2;
        for (std::uint16_t c = 0; c < ncols; ++c) {
          if (i + 4 > body.size()) throw ConnectionError("short data row column");
          const std::uint32_t len = get_u32(body.data() + i);
          i += 4;
          if (len == 0xFFFFFFFFu) {
            row.emplace_back(std::nullopt);
            continue;
          }
          if (i + len > body.size()) throw ConnectionError("data row overruns message");
          row.emplace_back(body.substr(i, len));
          i += len;
        }
        result.rows.push_back(std::move(row));
        break;
      }
      case 'C': {
        result.command_tag = body.c_str();  // cstring payload
        break;
      }
      case 'E':
        result.error = parse_error_fields(body);
        break;
      case 'Z':
        return result;
      case 'I':  // empty query
      case 'N':  // notice
      case 'S':  // parameter status
      case 'K':
      case 'A':  // notification
        break;
      case 'G':
      case 'H':
      case 'W':
        throw ConnectionError("COPY protocol is not supported");
      default:
        break;  // ignore anything else; 'Z' terminates the cycle
    }
  }
}

}  // namespace qrw
