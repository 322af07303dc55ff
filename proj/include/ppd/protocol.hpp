#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ppd/guidance.hpp"
#include "ppd/se3.hpp"

namespace ppd {

/// Wire protocol version this build speaks. Bumped on any schema change.
constexpr int kFieldProtocolVersion = 1;

/// Decimal rendering with 17 significant digits, enough for any double to
/// survive a parse round trip bit-exactly.
std::string format_double(double value);

/// Handshake message, sent by the client as the first line and answered by
/// the server with its own hello. The convention fields pin the twist
/// semantics (world-frame spatial velocity, angular components first); a
/// server that answers with anything else is refused. The noise block tells
/// an analytic server how to reproduce the client's noise stream; model
/// servers are free to ignore it.
struct FieldHello {
  int version = kFieldProtocolVersion;
  std::string twist_frame = "world";
  std::string twist_order = "angular_first";
  std::uint64_t noise_seed = 0;
  NoiseSchedule schedule;
};

std::string encode_hello(const FieldHello& hello);
FieldHello parse_hello(const std::string& line);

/// Query line: timestep, batch lane, one-hot score bin, the hand pose both as
/// the nine-point world encoding (the representation a learned field
/// consumes) and as exact rotation/translation (so analytic servers answer
/// bit-identically), plus the scene directory reference.
std::string encode_query(const GuidanceQuery& query);
GuidanceQuery parse_query(const std::string& line);

std::string encode_twist(const Twist& twist);

/// Parse a server reply. A `twist` line yields the twist; an `error` line
/// with code "bin_exhausted" throws BinExhausted so fallback logic works
/// across the process boundary, any other error code or schema violation
/// throws std::runtime_error naming the offending field.
Twist parse_twist_reply(const std::string& line);

std::string encode_error(const std::string& code, const std::string& message);

/// The "type" field of a message line, for servers dispatching on it.
std::string peek_message_type(const std::string& line);

struct FieldConnectionOptions {
  double timeout_seconds = 10.0;
  std::uint64_t noise_seed = 0;
  NoiseSchedule schedule;
};

/// Client end of the external-field seam. Spawns the server command with the
/// protocol on its stdin/stdout, performs the hello handshake eagerly, then
/// serves sample() with one query/twist round trip per call. Replies are
/// awaited with a deadline; timeouts, closed streams and malformed replies
/// all surface as exceptions carrying a diagnostic. Closing the connection
/// ends the server's stdin, which is its signal to exit.
class FieldConnection : public GuidanceField {
 public:
  static std::unique_ptr<FieldConnection> spawn(const std::vector<std::string>& command,
                                                const FieldConnectionOptions& options = {});
  ~FieldConnection() override;
  FieldConnection(const FieldConnection&) = delete;
  FieldConnection& operator=(const FieldConnection&) = delete;

  Twist sample(const GuidanceQuery& query) override;

 private:
  FieldConnection() = default;
  void handshake(const FieldConnectionOptions& options);
  void write_line(const std::string& line);
  std::string read_line();
  void shutdown();

  int child_pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  double timeout_seconds_ = 10.0;
};

/// One round trip over an established connection.
Twist external_field(const GuidanceQuery& query, FieldConnection& connection);

}  // namespace ppd
