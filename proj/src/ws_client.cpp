#include "inkweave/ws_client.hpp"

#include <deque>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

namespace inkweave {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

struct WsClient::Impl {
  net::io_context ioc;
  websocket::stream<tcp::socket> ws{ioc};
  beast::flat_buffer buf;
  std::deque<std::string> inbox;
  bool reading = false;
  bool gone = false;

  void start_read() {
    if (reading || gone) return;
    reading = true;
    ws.async_read(buf, [this](beast::error_code ec, std::size_t) {
      reading = false;
      if (ec) {
        gone = true;
        return;
      }
      inbox.push_back(beast::buffers_to_string(buf.data()));
      buf.consume(buf.size());
    });
  }
};

WsClient::WsClient(const std::string& host, unsigned short port, const std::string& path, WsClientOptions opt)
    : impl_(std::make_unique<Impl>()) {
  try {
    tcp::resolver resolver(impl_->ioc);
    const auto results = resolver.resolve(host, std::to_string(port));
    auto& sock = impl_->ws.next_layer();
    sock.open(results.begin()->endpoint().protocol());
    if (opt.receive_buffer > 0) sock.set_option(net::socket_base::receive_buffer_size(opt.receive_buffer));
    net::connect(sock, results);
    impl_->ws.read_message_max(64 << 20);
    impl_->ws.handshake(host + ":" + std::to_string(port), path);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::ConnectFailure, std::string("cannot connect to ws://") + host + ":" + std::to_string(port) +
                                               path + ": " + e.what());
  }
}

WsClient::~WsClient() {
  beast::error_code ec;
  impl_->ws.next_layer().close(ec);
}

void WsClient::send_text(const std::string& text) {
  auto& s = *impl_;
  if (s.gone) throw Error(ErrorCode::ConnectFailure, "connection closed");
  bool done = false;
  beast::error_code result;
  s.ws.text(true);
  s.ws.async_write(net::buffer(text), [&](beast::error_code ec, std::size_t) {
    done = true;
    result = ec;
  });
  s.ioc.restart();
  while (!done && s.ioc.run_one()) {
  }
  if (result || !done) {
    s.gone = true;
    throw Error(ErrorCode::ConnectFailure, "send failed: " + result.message());
  }
}

std::optional<std::string> WsClient::receive_text(std::chrono::milliseconds timeout) {
  auto& s = *impl_;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (s.inbox.empty()) {
    if (s.gone) throw Error(ErrorCode::ConnectFailure, "connection closed");
    s.start_read();
    const auto left = deadline - std::chrono::steady_clock::now();
    if (left <= std::chrono::steady_clock::duration::zero()) return std::nullopt;
    s.ioc.restart();
    s.ioc.run_one_for(left);
  }
  std::string out = std::move(s.inbox.front());
  s.inbox.pop_front();
  return out;
}

std::optional<proto::ServerMessage> WsClient::receive(std::chrono::milliseconds timeout) {
  auto text = receive_text(timeout);
  if (!text) return std::nullopt;
  return proto::parse_server(*text);
}

bool WsClient::closed() const { return impl_->gone && impl_->inbox.empty(); }

void WsClient::close() {
  auto& s = *impl_;
  if (s.gone) return;
  s.gone = true;
  bool done = false;
  s.ws.async_close(websocket::close_code::normal, [&](beast::error_code) { done = true; });
  s.ioc.restart();
  s.ioc.run_for(std::chrono::seconds(2));
  (void)done;
}

}  // namespace inkweave
