#include "ppd/protocol.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <mutex>
#include <stdexcept>

#include <json.hpp>

namespace ppd {

namespace {

using nlohmann::json;

[[noreturn]] void fail_field(const std::string& name, const std::string& what) {
  throw std::runtime_error("guidance message field '" + name + "' " + what);
}

json parse_object(const std::string& line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw std::runtime_error("guidance message is not a JSON object: " +
                             line.substr(0, std::min<std::size_t>(line.size(), 120)));
  return j;
}

const json& require_field(const json& j, const std::string& name) {
  const auto it = j.find(name);
  if (it == j.end()) fail_field(name, "is missing");
  return *it;
}

std::string require_string(const json& j, const std::string& name) {
  const json& f = require_field(j, name);
  if (!f.is_string()) fail_field(name, "must be a string");
  return f.get<std::string>();
}

int require_int(const json& j, const std::string& name) {
  const json& f = require_field(j, name);
  if (!f.is_number_integer()) fail_field(name, "must be an integer");
  return f.get<int>();
}

std::uint64_t require_u64(const json& j, const std::string& name) {
  const json& f = require_field(j, name);
  if (f.is_number_unsigned()) return f.get<std::uint64_t>();
  if (f.is_number_integer()) {
    const auto v = f.get<long long>();
    if (v < 0) fail_field(name, "must be non-negative");
    return static_cast<std::uint64_t>(v);
  }
  fail_field(name, "must be an integer");
}

double require_number(const json& j, const std::string& name) {
  const json& f = require_field(j, name);
  if (!f.is_number()) fail_field(name, "must be a number");
  return f.get<double>();
}

std::vector<double> require_numbers(const json& j, const std::string& name, std::size_t count) {
  const json& f = require_field(j, name);
  if (!f.is_array() || f.size() != count)
    fail_field(name, "must be an array of " + std::to_string(count) + " numbers");
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!f[i].is_number())
      fail_field(name, "must be an array of " + std::to_string(count) + " numbers");
    out[i] = f[i].get<double>();
  }
  return out;
}

void append_doubles(std::string& out, const char* name, const double* values,
                    std::size_t count) {
  out += '"';
  out += name;
  out += "\":[";
  for (std::size_t i = 0; i < count; ++i) {
    if (i) out += ',';
    out += format_double(values[i]);
  }
  out += ']';
}

std::string quote(const std::string& s) { return json(s).dump(); }

std::string short_seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", s);
  return buf;
}

}  // namespace

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string encode_hello(const FieldHello& hello) {
  std::string out = "{\"type\":\"hello\",\"version\":";
  out += std::to_string(hello.version);
  out += ",\"twist_frame\":" + quote(hello.twist_frame);
  out += ",\"twist_order\":" + quote(hello.twist_order);
  out += ",\"noise_seed\":" + std::to_string(hello.noise_seed);
  out += ",\"steps\":" + std::to_string(hello.schedule.steps);
  out += ",\"dt\":" + format_double(hello.schedule.dt);
  out += ",\"sigma_angular\":" + format_double(hello.schedule.sigma_angular_max);
  out += ",\"sigma_translational\":" + format_double(hello.schedule.sigma_translational_max);
  out += '}';
  return out;
}

FieldHello parse_hello(const std::string& line) {
  const json j = parse_object(line);
  const std::string type = require_string(j, "type");
  if (type != "hello")
    throw std::runtime_error("expected a hello message, got type '" + type + "'");
  FieldHello hello;
  hello.version = require_int(j, "version");
  hello.twist_frame = require_string(j, "twist_frame");
  hello.twist_order = require_string(j, "twist_order");
  hello.noise_seed = require_u64(j, "noise_seed");
  hello.schedule.steps = require_int(j, "steps");
  hello.schedule.dt = require_number(j, "dt");
  hello.schedule.sigma_angular_max = require_number(j, "sigma_angular");
  hello.schedule.sigma_translational_max = require_number(j, "sigma_translational");
  hello.schedule.validate();
  return hello;
}

std::string encode_query(const GuidanceQuery& query) {
  const Eigen::Matrix<double, 3, 9> points = encode_pose_points(query.hand);
  const Eigen::Vector3d one_hot = score_bin_one_hot(query.bin);

  std::string out;
  out.reserve(1200);
  out += "{\"type\":\"query\",\"k\":";
  out += std::to_string(query.k);
  out += ",\"sample\":" + std::to_string(query.sample);
  out += ",\"bin\":[";
  for (int i = 0; i < 3; ++i) {
    if (i) out += ',';
    out += std::to_string(static_cast<int>(one_hot[i]));
  }
  out += "],";
  double flat[27];
  for (int col = 0; col < 9; ++col)
    for (int row = 0; row < 3; ++row) flat[col * 3 + row] = points(row, col);
  append_doubles(out, "points", flat, 27);
  out += ',';
  double rot[9];
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) rot[row * 3 + col] = query.hand.rotation(row, col);
  append_doubles(out, "rotation", rot, 9);
  out += ',';
  append_doubles(out, "translation", query.hand.translation.data(), 3);
  out += ",\"scene\":" + quote(query.scene_ref);
  out += '}';
  return out;
}

GuidanceQuery parse_query(const std::string& line) {
  const json j = parse_object(line);
  const std::string type = require_string(j, "type");
  if (type != "query")
    throw std::runtime_error("expected a query message, got type '" + type + "'");

  GuidanceQuery query;
  query.k = require_int(j, "k");
  if (query.k < 0) fail_field("k", "must be non-negative");
  query.sample = require_int(j, "sample");
  if (query.sample < 0) fail_field("sample", "must be non-negative");

  const std::vector<double> one_hot = require_numbers(j, "bin", 3);
  int hot = -1;
  for (int i = 0; i < 3; ++i) {
    if (one_hot[i] == 1.0 && hot < 0)
      hot = i;
    else if (one_hot[i] != 0.0)
      hot = -2;
  }
  if (hot < 0) fail_field("bin", "must be one-hot over (low, mid, high)");
  query.bin = hot == 0 ? ScoreBin::low : hot == 1 ? ScoreBin::mid : ScoreBin::high;

  const std::vector<double> rot = require_numbers(j, "rotation", 9);
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) query.hand.rotation(row, col) = rot[row * 3 + col];
  const std::vector<double> trans = require_numbers(j, "translation", 3);
  query.hand.translation = Eigen::Vector3d(trans[0], trans[1], trans[2]);
  if (query.hand.orthonormality_error() > 1e-6)
    fail_field("rotation", "is not a rotation matrix");

  const std::vector<double> flat = require_numbers(j, "points", 27);
  const Eigen::Matrix<double, 3, 9> expected = encode_pose_points(query.hand);
  for (int col = 0; col < 9; ++col)
    for (int row = 0; row < 3; ++row)
      if (std::abs(flat[col * 3 + row] - expected(row, col)) > 1e-9)
        fail_field("points", "disagrees with the exact pose fields");

  query.scene_ref = require_string(j, "scene");
  return query;
}

std::string encode_twist(const Twist& twist) {
  for (int i = 0; i < 3; ++i)
    if (!std::isfinite(twist.angular[i]) || !std::isfinite(twist.translational[i]))
      throw std::invalid_argument("twist components must be finite");
  std::string out = "{\"type\":\"twist\",";
  append_doubles(out, "angular", twist.angular.data(), 3);
  out += ',';
  append_doubles(out, "translational", twist.translational.data(), 3);
  out += '}';
  return out;
}

Twist parse_twist_reply(const std::string& line) {
  const json j = parse_object(line);
  const std::string type = require_string(j, "type");
  if (type == "error") {
    const std::string code = require_string(j, "code");
    const std::string message = require_string(j, "message");
    if (code == "bin_exhausted") throw BinExhausted(message);
    throw std::runtime_error("guidance server error [" + code + "]: " + message);
  }
  if (type != "twist")
    throw std::runtime_error("unexpected message type '" + type +
                             "' (expected twist or error)");
  const std::vector<double> angular = require_numbers(j, "angular", 3);
  const std::vector<double> translational = require_numbers(j, "translational", 3);
  Twist twist;
  for (int i = 0; i < 3; ++i) {
    if (!std::isfinite(angular[i])) fail_field("angular", "must hold finite numbers");
    if (!std::isfinite(translational[i]))
      fail_field("translational", "must hold finite numbers");
    twist.angular[i] = angular[i];
    twist.translational[i] = translational[i];
  }
  return twist;
}

std::string encode_error(const std::string& code, const std::string& message) {
  return "{\"type\":\"error\",\"code\":" + quote(code) + ",\"message\":" + quote(message) +
         '}';
}

std::string peek_message_type(const std::string& line) {
  return require_string(parse_object(line), "type");
}

std::unique_ptr<FieldConnection> FieldConnection::spawn(
    const std::vector<std::string>& command, const FieldConnectionOptions& options) {
  if (command.empty()) throw std::invalid_argument("guidance server command is empty");

  // A server that died must surface as a pipe error, not kill this process.
  static std::once_flag sigpipe_once;
  std::call_once(sigpipe_once, [] { ::signal(SIGPIPE, SIG_IGN); });

  int down[2];
  int up[2];
  if (::pipe(down) != 0)
    throw std::runtime_error(std::string("pipe failed: ") + std::strerror(errno));
  if (::pipe(up) != 0) {
    const int err = errno;
    ::close(down[0]);
    ::close(down[1]);
    throw std::runtime_error(std::string("pipe failed: ") + std::strerror(err));
  }

  const pid_t pid = ::fork();
  if (pid < 0) {
    const int err = errno;
    ::close(down[0]);
    ::close(down[1]);
    ::close(up[0]);
    ::close(up[1]);
    throw std::runtime_error(std::string("fork failed: ") + std::strerror(err));
  }
  if (pid == 0) {
    ::dup2(down[0], STDIN_FILENO);
    ::dup2(up[1], STDOUT_FILENO);
    ::close(down[0]);
    ::close(down[1]);
    ::close(up[0]);
    ::close(up[1]);
    std::vector<char*> argv;
    argv.reserve(command.size() + 1);
    for (const std::string& arg : command) argv.push_back(const_cast<char*>(arg.c_str()));
    argv.push_back(nullptr);
    ::execvp(argv[0], argv.data());
    std::fprintf(stderr, "exec %s failed: %s\n", argv[0], std::strerror(errno));
    ::_exit(127);
  }

  ::close(down[0]);
  ::close(up[1]);
  ::fcntl(down[1], F_SETFD, FD_CLOEXEC);
  ::fcntl(up[0], F_SETFD, FD_CLOEXEC);

  std::unique_ptr<FieldConnection> connection(new FieldConnection());
  connection->child_pid_ = pid;
  connection->to_child_ = down[1];
  connection->from_child_ = up[0];
  connection->timeout_seconds_ = options.timeout_seconds;
  connection->handshake(options);
  return connection;
}

void FieldConnection::handshake(const FieldConnectionOptions& options) {
  FieldHello hello;
  hello.noise_seed = options.noise_seed;
  hello.schedule = options.schedule;
  write_line(encode_hello(hello));

  const FieldHello reply = parse_hello(read_line());
  if (reply.version != kFieldProtocolVersion)
    throw std::runtime_error("guidance server speaks protocol version " +
                             std::to_string(reply.version) + ", this build needs " +
                             std::to_string(kFieldProtocolVersion));
  if (reply.twist_frame != "world" || reply.twist_order != "angular_first")
    throw std::runtime_error("guidance server twist convention mismatch: announced (" +
                             reply.twist_frame + ", " + reply.twist_order +
                             "), required (world, angular_first)");
}

Twist FieldConnection::sample(const GuidanceQuery& query) {
  write_line(encode_query(query));
  return parse_twist_reply(read_line());
}

void FieldConnection::write_line(const std::string& line) {
  std::string framed = line;
  framed += '\n';
  std::size_t offset = 0;
  while (offset < framed.size()) {
    const ssize_t n = ::write(to_child_, framed.data() + offset, framed.size() - offset);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error(std::string("guidance server pipe write failed (") +
                               std::strerror(errno) + "), server may have exited");
    }
    offset += static_cast<std::size_t>(n);
  }
}

std::string FieldConnection::read_line() {
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration<double>(timeout_seconds_);
  while (true) {
    const std::size_t newline = buffer_.find('\n');
    if (newline != std::string::npos) {
      std::string line = buffer_.substr(0, newline);
      buffer_.erase(0, newline + 1);
      return line;
    }
    const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (remaining.count() <= 0)
      throw std::runtime_error("guidance server reply timed out after " +
                               short_seconds(timeout_seconds_) + " s");
    struct pollfd p {};
    p.fd = from_child_;
    p.events = POLLIN;
    const int rc = ::poll(&p, 1, static_cast<int>(std::min<long long>(remaining.count(), 60000)));
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error(std::string("poll on guidance server pipe failed: ") +
                               std::strerror(errno));
    }
    if (rc == 0) continue;
    char chunk[4096];
    const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
    if (n > 0) {
      buffer_.append(chunk, static_cast<std::size_t>(n));
      continue;
    }
    if (n == 0)
      throw std::runtime_error("guidance server closed the stream before replying");
    if (errno == EINTR || errno == EAGAIN) continue;
    throw std::runtime_error(std::string("guidance server pipe read failed: ") +
                             std::strerror(errno));
  }
}

void FieldConnection::shutdown() {
  if (to_child_ >= 0) {
    ::close(to_child_);
    to_child_ = -1;
  }
  if (from_child_ >= 0) {
    ::close(from_child_);
    from_child_ = -1;
  }
  if (child_pid_ > 0) {
    // EOF on its stdin is the exit signal; give it a short grace, then kill.
    int status = 0;
    for (int i = 0; i < 200; ++i) {
      const pid_t r = ::waitpid(child_pid_, &status, WNOHANG);
      if (r == child_pid_ || (r < 0 && errno != EINTR)) {
        child_pid_ = -1;
        return;
      }
      ::usleep(10000);
    }
    ::kill(child_pid_, SIGKILL);
    ::waitpid(child_pid_, &status, 0);
    child_pid_ = -1;
  }
}

FieldConnection::~FieldConnection() { shutdown(); }

Twist external_field(const GuidanceQuery& query, FieldConnection& connection) {
  return connection.sample(query);
}

}  // namespace ppd
