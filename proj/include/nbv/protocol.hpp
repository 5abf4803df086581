// Copyright 2026 The nbvsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Newline-delimited JSON protocol that lets an external policy drive
// episodes, over TCP or a pair of streams.

#ifndef NBV_PROTOCOL_HPP_
#define NBV_PROTOCOL_HPP_

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "nbv/environment.hpp"
#include "nbv/policies.hpp"
#include "nbv/occupancy.hpp"

namespace nbv {

inline constexpr const char* kProtocolVersion = "1";
inline constexpr std::size_t kMaxLineBytes = 1 << 20;

struct GridPayload {
  std::array<int, 3> dims{};
  std::vector<float> log_odds;       // x fastest
  std::vector<std::uint8_t> states;  // 0 unknown, 1 free, 2 occupied
};

/// Max-pools log-odds over blocks of source/target voxels and reclassifies
/// with the grid thresholds. Throws InvariantError when a target dim does
/// not divide the source dim.
GridPayload downsample_grid(const OccupancyGrid& grid, std::array<int, 3> target_dims);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

/// 8-bit rows of a frame, intensities scaled by 255 and rounded.
std::vector<std::uint8_t> quantize_frame(const GrayFrame& frame);

nlohmann::json observation_json(const EpisodeState& state, std::array<int, 3> grid_dims,
                                bool want_frames);

using SceneList = std::vector<std::shared_ptr<const Scene>>;

/// Called once per finished or aborted episode with a one-line summary.
using EpisodeLog = std::function<void(const std::string&)>;

/// One connection's protocol state. Every call to handle() produces exactly
/// one reply line (without the trailing newline).
class Session {
 public:
  Session(EnvConfig config, std::shared_ptr<const SceneList> scenes, EpisodeLog log = {});
  ~Session();

  std::string handle(const std::string& line);
  bool closed() const { return closed_; }
  /// Marks a running episode as aborted (logged once).
  void abort();

 private:
  nlohmann::json dispatch(const nlohmann::json& msg);
  nlohmann::json on_hello(const nlohmann::json& msg);
  nlohmann::json on_reset(const nlohmann::json& msg);
  nlohmann::json on_step(const nlohmann::json& msg);
  void log_episode(const std::string& outcome);

  EnvConfig config_;
  std::shared_ptr<const SceneList> scenes_;
  EpisodeLog log_;
  std::unique_ptr<Environment> env_;
  bool want_frames_ = false;
  std::optional<std::array<int, 3>> obs_dims_;
  bool closed_ = false;
  bool logged_ = true;
};

nlohmann::json error_reply(const std::string& code, const std::string& message);

/// Serves one session over a pair of streams until close or EOF.
void serve_stream(std::istream& in, std::ostream& out, EnvConfig config,
                  std::shared_ptr<const SceneList> scenes, EpisodeLog log = {});

struct BindAddress {
  std::string host = "127.0.0.1";
  std::uint16_t port = 5555;
};
/// "host:port", ":port" or "port". Throws InvariantError when malformed.
BindAddress parse_bind(const std::string& text);
/// NBV_BIND when set, otherwise `fallback`.
std::string bind_from_env(const std::string& fallback = "127.0.0.1:5555");

/// Thread-per-connection TCP server.
class Server {
 public:
  Server(EnvConfig config, std::shared_ptr<const SceneList> scenes, EpisodeLog log = {});
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts accepting. Throws std::runtime_error on bind failure.
  void start(const BindAddress& addr);
  /// Port actually bound (useful with port 0).
  std::uint16_t port() const { return port_; }
  /// Stops accepting, closes open connections and joins every thread.
  void stop();
  bool running() const { return running_; }

 private:
  void accept_loop();
  void serve_connection(int fd);

  EnvConfig config_;
  std::shared_ptr<const SceneList> scenes_;
  EpisodeLog log_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<std::thread> workers_;
  std::vector<int> open_fds_;
};

/// Minimal blocking line client.
class Client {
 public:
  Client(const std::string& host, std::uint16_t port);
  ~Client();
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  /// Sends one line and returns the reply line.
  std::string request(const std::string& line);
  nlohmann::json call(const nlohmann::json& msg);

 private:
  int fd_ = -1;
  std::string buffer_;
};

}  // namespace nbv

#endif  // NBV_PROTOCOL_HPP_
