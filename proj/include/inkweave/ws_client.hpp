#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>

#include "inkweave/protocol.hpp"

namespace inkweave {

struct WsClientOptions {
  int receive_buffer = 0;  // SO_RCVBUF before connecting; 0 keeps the OS default
};

/// Blocking WebSocket client for tests and the load harness.
class WsClient {
 public:
  /// Throws ConnectFailure.
  WsClient(const std::string& host, unsigned short port, const std::string& path = "/ws", WsClientOptions opt = {});
  ~WsClient();
  WsClient(const WsClient&) = delete;
  WsClient& operator=(const WsClient&) = delete;

  void send_text(const std::string& text);
  void send(const proto::ClientMessage& m) { send_text(proto::to_json(m).dump()); }

  /// Next text frame, or nullopt on timeout. Throws ConnectFailure once the
  /// connection is gone and nothing is buffered.
  std::optional<std::string> receive_text(std::chrono::milliseconds timeout);
  std::optional<proto::ServerMessage> receive(std::chrono::milliseconds timeout);

  /// True once the server has closed the connection.
  bool closed() const;
  void close();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace inkweave
