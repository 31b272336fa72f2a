#include "deskctl/server/gateway.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <deque>
#include <thread>

namespace deskctl::server {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

json registry_listing(const db::PropertyDb& db) {
  json out = json::array();
  for (const auto& e : db.devices()) {
    out.push_back({{"device", e.device}, {"host", e.host}, {"port", e.port}, {"server", e.server}});
  }
  return out;
}

namespace {

// One browser session: a WebSocket on one side, a native connection on the other.
class Bridge : public std::enable_shared_from_this<Bridge> {
 public:
  Bridge(tcp::socket socket, tcp::endpoint backend)
      : ws_(std::move(socket)), backend_(ws_.get_executor()), backend_endpoint_(std::move(backend)) {}

  void run(http::request<http::string_body> upgrade) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(upgrade, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->connect_backend();
    });
  }

 private:
  void connect_backend() {
    backend_.async_connect(backend_endpoint_, [self = shared_from_this()](beast::error_code ec) {
      if (ec) {
        self->ws_.async_close(websocket::close_reason(websocket::close_code::try_again_later),
                              [self](beast::error_code) {});
        return;
      }
      self->backend_.set_option(tcp::no_delay(true));
      self->read_ws();
      self->read_header();
    });
  }

  void read_ws() {
    ws_.async_read(ws_buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->shut();
      auto text = beast::buffers_to_string(self->ws_buffer_.data());
      self->ws_buffer_.consume(self->ws_buffer_.size());
      try {
        self->to_backend(encode_frame(text));
      } catch (const Error& e) {
        self->to_ws(frame_error(BadFrame(std::nullopt, e.detail())).dump());
      }
      self->read_ws();
    });
  }

  void read_header() {
    asio::async_read(backend_, asio::buffer(header_),
                     [self = shared_from_this()](beast::error_code ec, std::size_t) {
                       if (ec) return self->shut();
                       const std::uint32_t n = (std::uint32_t{self->header_[0]} << 24) |
                                               (std::uint32_t{self->header_[1]} << 16) |
                                               (std::uint32_t{self->header_[2]} << 8) | self->header_[3];
                       if (n > max_frame_size) return self->shut();
                       self->body_.resize(n);
                       self->read_body();
                     });
  }

  void read_body() {
    asio::async_read(backend_, asio::buffer(body_), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->shut();
      self->to_ws(std::move(self->body_));
      self->body_.clear();
      self->read_header();
    });
  }

  void to_backend(std::string bytes) {
    backend_queue_.push_back(std::move(bytes));
    if (backend_queue_.size() == 1) write_backend();
  }

  void write_backend() {
    asio::async_write(backend_, asio::buffer(backend_queue_.front()),
                      [self = shared_from_this()](beast::error_code ec, std::size_t) {
                        if (ec) return self->shut();
                        self->backend_queue_.pop_front();
                        if (!self->backend_queue_.empty()) self->write_backend();
                      });
  }

  void to_ws(std::string text) {
    ws_queue_.push_back(std::move(text));
    if (ws_queue_.size() == 1) write_ws();
  }

  void write_ws() {
    ws_.text(true);
    ws_.async_write(asio::buffer(ws_queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->shut();
      self->ws_queue_.pop_front();
      if (!self->ws_queue_.empty()) self->write_ws();
    });
  }

  void shut() {
    if (closed_) return;
    closed_ = true;
    beast::error_code ignored;
    backend_.shutdown(tcp::socket::shutdown_both, ignored);
    backend_.close(ignored);
    if (ws_.is_open()) {
      ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) {});
    }
  }

  websocket::stream<beast::tcp_stream> ws_;
  tcp::socket backend_;
  tcp::endpoint backend_endpoint_;
  beast::flat_buffer ws_buffer_;
  std::array<unsigned char, 4> header_{};
  std::string body_;
  std::deque<std::string> backend_queue_;
  std::deque<std::string> ws_queue_;
  bool closed_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, tcp::endpoint backend, const Gateway::Listing& listing)
      : stream_(std::move(socket)), backend_(std::move(backend)), listing_(listing) {}

  void run() { read(); }

 private:
  void read() {
    request_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, request_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->on_request();
    });
  }

  void on_request() {
    if (websocket::is_upgrade(request_)) {
      stream_.expires_never();
      std::make_shared<Bridge>(stream_.release_socket(), backend_)->run(std::move(request_));
      return;
    }
    auto res = std::make_shared<http::response<http::string_body>>();
    res->version(request_.version());
    res->keep_alive(request_.keep_alive());
    res->set(http::field::server, "deskctl-gateway");
    if (request_.method() == http::verb::get && request_.target() == "/devices") {
      res->result(http::status::ok);
      res->set(http::field::content_type, "application/json");
      res->set(http::field::access_control_allow_origin, "*");
      try {
        res->body() = listing_().dump();
      } catch (const std::exception& e) {
        res->result(http::status::internal_server_error);
        res->body() = json{{"code", "io-error"}, {"detail", e.what()}}.dump();
      }
    } else {
      res->result(http::status::not_found);
      res->set(http::field::content_type, "text/plain");
      res->body() = "not found\n";
    }
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec || !res->keep_alive()) {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
        return;
      }
      self->read();
    });
  }

  beast::tcp_stream stream_;
  tcp::endpoint backend_;
  const Gateway::Listing& listing_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> request_;
};

tcp::endpoint to_endpoint(asio::io_context& io, const Endpoint& e) {
  tcp::resolver resolver(io);
  beast::error_code ec;
  auto results = resolver.resolve(tcp::v4(), e.host, std::to_string(e.port), ec);
  if (ec || results.empty()) throw Error(Errc::bind_failed, "cannot resolve " + e.host);
  return *results.begin();
}

}  // namespace

struct Gateway::Impl {
  asio::io_context io;
  tcp::acceptor acceptor{io};
  tcp::endpoint backend;
  Listing listing;
  std::thread thread;

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<HttpSession>(std::move(socket), backend, listing)->run();
      accept();
    });
  }
};

Gateway::Gateway(Endpoint listen, Endpoint backend, Listing listing) : impl_(std::make_unique<Impl>()) {
  impl_->listing = std::move(listing);
  impl_->backend = to_endpoint(impl_->io, backend);
  auto at = to_endpoint(impl_->io, listen);
  beast::error_code ec;
  impl_->acceptor.open(at.protocol(), ec);
  if (!ec) impl_->acceptor.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) impl_->acceptor.bind(at, ec);
  if (!ec) impl_->acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) throw Error(Errc::bind_failed, listen.host + ":" + std::to_string(listen.port) + ": " + ec.message());
}

Gateway::~Gateway() { stop(); }

std::uint16_t Gateway::port() const noexcept { return impl_->acceptor.local_endpoint().port(); }

void Gateway::start() {
  if (impl_->thread.joinable()) return;
  impl_->accept();
  impl_->thread = std::thread([this] { impl_->io.run(); });
}

void Gateway::stop() {
  if (!impl_->thread.joinable()) return;
  impl_->io.stop();
  impl_->thread.join();
}

}  // namespace deskctl::server
