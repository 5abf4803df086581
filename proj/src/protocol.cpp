// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0

#include "nbv/protocol.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

namespace nbv {

using Json = nlohmann::json;

GridPayload downsample_grid(const OccupancyGrid& grid, std::array<int, 3> target) {
  const auto& cfg = grid.config;
  std::array<int, 3> block{};
  for (int a = 0; a < 3; ++a) {
    if (target[a] < 1 || cfg.dims[a] % target[a] != 0) {
      throw InvariantError("target grid dims must divide the source dims");
    }
    block[a] = cfg.dims[a] / target[a];
  }
  GridPayload out;
  out.dims = target;
  const std::size_t n = static_cast<std::size_t>(target[0]) * target[1] * target[2];
  out.log_odds.assign(n, -std::numeric_limits<float>::infinity());
  for (int z = 0; z < cfg.dims[2]; ++z) {
    for (int y = 0; y < cfg.dims[1]; ++y) {
      for (int x = 0; x < cfg.dims[0]; ++x) {
        const std::size_t t = static_cast<std::size_t>(x / block[0]) +
                              static_cast<std::size_t>(target[0]) *
                                  (static_cast<std::size_t>(y / block[1]) +
                                   static_cast<std::size_t>(target[1]) * (z / block[2]));
        out.log_odds[t] = std::max(out.log_odds[t], grid.at({x, y, z}));
      }
    }
  }
  out.states.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.states[i] = static_cast<std::uint8_t>(cfg.classify(out.log_odds[i]));
  }
  return out;
}

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    for (int s = 18; s >= 0; s -= 6) out += kB64[(v >> s) & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t v = bytes[i] << 16;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw InvariantError("base64 length must be a multiple of 4");
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t v = 0;
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        ++pad;
        v <<= 6;
        continue;
      }
      const int d = value(c);
      if (d < 0 || pad > 0) throw InvariantError("invalid base64");
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

std::vector<std::uint8_t> quantize_frame(const GrayFrame& frame) {
  std::vector<std::uint8_t> out(frame.intensities.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float v = std::clamp(frame.intensities[i], 0.0f, 1.0f);
    out[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  return out;
}

Json observation_json(const EpisodeState& state, std::array<int, 3> grid_dims, bool want_frames) {
  Json obs;
  Json poses = Json::array();
  for (const auto& p : state.poses) poses.push_back({p.x, p.y, p.z, p.pitch, p.yaw});
  obs["pose_history"] = std::move(poses);
  const GridPayload g = downsample_grid(state.grid, grid_dims);
  obs["grid_dims"] = g.dims;
  obs["grid_logodds"] = g.log_odds;
  obs["grid_states"] = g.states;
  obs["coverage"] = state.coverage.back();
  obs["step"] = state.step;
  if (want_frames) {
    Json frames = Json::array();
    for (const auto& f : state.frames.frames()) {
      frames.push_back({{"width", f.width},
                        {"height", f.height},
                        {"data", base64_encode(quantize_frame(f))}});
    }
    obs["frames"] = std::move(frames);
  }
  return obs;
}

Json error_reply(const std::string& code, const std::string& message) {
  return {{"type", "error"}, {"code", code}, {"message", message}};
}

Session::Session(EnvConfig config, std::shared_ptr<const SceneList> scenes, EpisodeLog log)
    : config_(std::move(config)), scenes_(std::move(scenes)), log_(std::move(log)) {
  config_.validate();
  if (!scenes_ || scenes_->empty()) throw InvariantError("protocol session needs at least one scene");
}

Session::~Session() { abort(); }

void Session::log_episode(const std::string& outcome) {
  if (logged_ || !env_) return;
  logged_ = true;
  if (!log_) return;
  const auto& st = env_->state();
  std::ostringstream os;
  os << "episode scene=" << env_->scene().id << " steps=" << st.step
     << " cr=" << st.coverage.back() << " outcome=" << outcome;
  log_(os.str());
}

void Session::abort() {
  if (env_ && env_->running()) log_episode("aborted");
}

std::string Session::handle(const std::string& line) {
  Json reply;
  try {
    Json msg;
    try {
      msg = Json::parse(line);
    } catch (const Json::exception& e) {
      msg = nullptr;
      reply = error_reply("bad_json", e.what());
    }
    if (reply.is_null()) reply = dispatch(msg);
  } catch (const EpisodeError& e) {
    reply = error_reply("episode_error", e.what());
  } catch (const std::exception& e) {
    reply = error_reply("internal", e.what());
  }
  // Error messages may quote invalid UTF-8 from the request.
  return reply.dump(-1, ' ', false, Json::error_handler_t::replace);
}

Json Session::dispatch(const Json& msg) {
  if (!msg.is_object()) return error_reply("bad_request", "message must be a JSON object");
  const auto it = msg.find("type");
  if (it == msg.end() || !it->is_string()) {
    return error_reply("bad_request", "message needs a string \"type\"");
  }
  const std::string type = it->get<std::string>();
  if (type == "hello") return on_hello(msg);
  if (type == "reset") return on_reset(msg);
  if (type == "step") return on_step(msg);
  if (type == "close") {
    abort();
    closed_ = true;
    return {{"type", "close"}};
  }
  return error_reply("unknown_type", "unknown message type '" + type + "'");
}

Json Session::on_hello(const Json& msg) {
  if (auto it = msg.find("want_frames"); it != msg.end()) {
    if (!it->is_boolean()) return error_reply("bad_request", "want_frames must be a boolean");
    want_frames_ = it->get<bool>();
  }
  if (auto it = msg.find("grid_dims"); it != msg.end()) {
    if (!it->is_array() || it->size() != 3 || !(*it)[0].is_number_integer() ||
        !(*it)[1].is_number_integer() || !(*it)[2].is_number_integer()) {
      return error_reply("bad_request", "grid_dims must be three integers");
    }
    std::array<int, 3> d{(*it)[0].get<int>(), (*it)[1].get<int>(), (*it)[2].get<int>()};
    for (int a = 0; a < 3; ++a) {
      if (d[a] < 1 || config_.grid.dims[a] % d[a] != 0) {
        return error_reply("bad_request", "grid_dims must divide the grid dims");
      }
    }
    obs_dims_ = d;
  }
  const auto& box = config_.action_box;
  return {{"type", "hello"},
          {"version", kProtocolVersion},
          {"grid_dims", config_.grid.dims},
          {"action_box",
           {{box.min.x(), box.min.y(), box.min.z()}, {box.max.x(), box.max.y(), box.max.z()}}},
          {"scenes", [&] {
             Json ids = Json::array();
             for (const auto& s : *scenes_) ids.push_back(s->id);
             return ids;
           }()}};
}

Json Session::on_reset(const Json& msg) {
  std::shared_ptr<const Scene> scene;
  std::uint64_t seed = 0;
  if (auto it = msg.find("seed"); it != msg.end() && !it->is_null()) {
    if (!it->is_number_integer()) return error_reply("bad_request", "seed must be an integer");
    seed = it->get<std::uint64_t>();
  }
  if (auto it = msg.find("scene"); it != msg.end() && !it->is_null()) {
    if (!it->is_string()) return error_reply("bad_request", "scene must be a string id");
    const std::string id = it->get<std::string>();
    for (const auto& s : *scenes_) {
      if (s->id == id) scene = s;
    }
    if (!scene) return error_reply("bad_scene", "unknown scene '" + id + "'");
  } else {
    scene = (*scenes_)[seed % scenes_->size()];
  }
  std::optional<Pose5D> start;
  if (auto it = msg.find("start"); it != msg.end() && !it->is_null()) {
    if (!it->is_array() || it->size() != 5) return error_reply("bad_action", "start must have 5 numbers");
    Pose5D p;
    double* f[5] = {&p.x, &p.y, &p.z, &p.pitch, &p.yaw};
    for (int k = 0; k < 5; ++k) {
      if (!(*it)[k].is_number()) return error_reply("bad_action", "start must have 5 numbers");
      *f[k] = (*it)[k].get<double>();
    }
    start = p;
  }
  abort();
  EnvConfig cfg = config_;
  cfg.grid = cfg.grid.on_lattice_of(scene->grid);
  auto env = std::make_unique<Environment>(cfg, scene);
  env->reset(start);
  env_ = std::move(env);
  logged_ = false;
  return {{"type", "reset_ok"},
          {"obs", observation_json(env_->state(), obs_dims_.value_or(env_->config().grid.dims),
                                   want_frames_)}};
}

Json Session::on_step(const Json& msg) {
  if (!env_) return error_reply("no_episode", "step before reset");
  const auto it = msg.find("action");
  if (it == msg.end() || !it->is_array() || it->size() != 5) {
    return error_reply("bad_action", "action must be [x, y, z, pitch, yaw]");
  }
  Pose5D a;
  double* f[5] = {&a.x, &a.y, &a.z, &a.pitch, &a.yaw};
  for (int k = 0; k < 5; ++k) {
    if (!(*it)[k].is_number()) return error_reply("bad_action", "action entries must be numbers");
    *f[k] = (*it)[k].get<double>();
  }
  if (!a.finite()) return error_reply("bad_action", "action entries must be finite");
  if (!env_->running()) {
    return error_reply("episode_done", std::string("episode already finished (") +
                                           to_string(env_->state().status) + ")");
  }
  const StepOutcome out = env_->step(a);
  if (out.terminated) log_episode(to_string(out.reason));
  return {{"type", "step_result"},
          {"obs", observation_json(env_->state(), obs_dims_.value_or(env_->config().grid.dims),
                                   want_frames_)},
          {"reward", out.reward},
          {"terminated", out.terminated},
          {"reason", to_string(out.reason)},
          {"info",
           {{"cr", out.cr_after},
            {"cr_before", out.cr_before},
            {"collision", out.collision},
            {"clamped", out.clamped}}}};
}

void serve_stream(std::istream& in, std::ostream& out, EnvConfig config,
                  std::shared_ptr<const SceneList> scenes, EpisodeLog log) {
  Session session(std::move(config), std::move(scenes), std::move(log));
  std::string line;
  while (!session.closed() && std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out << session.handle(line) << '\n' << std::flush;
  }
}

BindAddress parse_bind(const std::string& text) {
  BindAddress addr;
  std::string port_text = text;
  if (const auto colon = text.rfind(':'); colon != std::string::npos) {
    if (colon > 0) addr.host = text.substr(0, colon);
    port_text = text.substr(colon + 1);
  }
  char* end = nullptr;
  errno = 0;
  const long port = std::strtol(port_text.c_str(), &end, 10);
  if (port_text.empty() || *end != '\0' || errno != 0 || port < 0 || port > 65535) {
    throw InvariantError("bad bind address '" + text + "' (expected host:port)");
  }
  addr.port = static_cast<std::uint16_t>(port);
  return addr;
}

std::string bind_from_env(const std::string& fallback) {
  const char* v = std::getenv("NBV_BIND");
  return v && *v ? std::string(v) : fallback;
}

namespace {

bool send_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

// Reads one line into `line`; false on EOF or error. Oversized lines are
// reported as a single line holding only "\x01".
bool read_line(int fd, std::string& buffer, std::string& line) {
  bool overflow = false;
  for (;;) {
    if (const auto nl = buffer.find('\n'); nl != std::string::npos) {
      line = overflow ? std::string("\x01") : buffer.substr(0, nl);
      buffer.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return true;
    }
    if (buffer.size() > kMaxLineBytes) {
      overflow = true;
      buffer.clear();
    }
    char chunk[65536];
    const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    buffer.append(chunk, static_cast<std::size_t>(n));
  }
}

}  // namespace

Server::Server(EnvConfig config, std::shared_ptr<const SceneList> scenes, EpisodeLog log)
    : config_(std::move(config)), scenes_(std::move(scenes)), log_(std::move(log)) {
  config_.validate();
  if (!scenes_ || scenes_->empty()) throw InvariantError("server needs at least one scene");
}

Server::~Server() { stop(); }

void Server::start(const BindAddress& addr) {
  if (running_) throw std::runtime_error("server already running");
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(addr.port);
  if (const int rc = ::getaddrinfo(addr.host.c_str(), port.c_str(), &hints, &res); rc != 0) {
    throw std::runtime_error("cannot resolve " + addr.host + ": " + ::gai_strerror(rc));
  }
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    ::freeaddrinfo(res);
    throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
  }
  const int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd, res->ai_addr, res->ai_addrlen) != 0 || ::listen(fd, 16) != 0) {
    const std::string err = std::strerror(errno);
    ::freeaddrinfo(res);
    ::close(fd);
    throw std::runtime_error("cannot bind " + addr.host + ":" + port + ": " + err);
  }
  ::freeaddrinfo(res);
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
  listen_fd_ = fd;
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void Server::accept_loop() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      break;
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard lock(mu_);
    if (!running_) {
      ::close(fd);
      break;
    }
    open_fds_.push_back(fd);
    workers_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void Server::serve_connection(int fd) {
  {
    Session session(config_, scenes_, log_);
    std::string buffer, line;
    while (!session.closed() && read_line(fd, buffer, line)) {
      if (line.empty()) continue;
      const std::string reply =
          line == "\x01" ? error_reply("bad_json", "line exceeds the size limit").dump()
                         : session.handle(line);
      if (!send_all(fd, reply + "\n")) break;
    }
  }
  std::lock_guard lock(mu_);
  if (auto it = std::find(open_fds_.begin(), open_fds_.end(), fd); it != open_fds_.end()) {
    open_fds_.erase(it);
    ::close(fd);
  }
}

void Server::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(mu_);
    for (const int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& t : workers) t.join();
  listen_fd_ = -1;
}

Client::Client(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0) {
    throw std::runtime_error("cannot resolve " + host);
  }
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd_ < 0 || ::connect(fd_, res->ai_addr, res->ai_addrlen) != 0) {
    const std::string err = std::strerror(errno);
    ::freeaddrinfo(res);
    if (fd_ >= 0) ::close(fd_);
    throw std::runtime_error("cannot connect to " + host + ":" + std::to_string(port) + ": " + err);
  }
  ::freeaddrinfo(res);
  const int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

Client::~Client() {
  if (fd_ >= 0) ::close(fd_);
}

std::string Client::request(const std::string& line) {
  if (!send_all(fd_, line + "\n")) throw std::runtime_error("connection lost while sending");
  std::string reply;
  if (!read_line(fd_, buffer_, reply)) throw std::runtime_error("connection closed by server");
  return reply;
}

Json Client::call(const Json& msg) { return Json::parse(request(msg.dump())); }

}  // namespace nbv
