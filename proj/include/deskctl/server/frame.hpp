#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "deskctl/error.hpp"

namespace deskctl::server {

using json = nlohmann::json;

enum class RequestKind { sync, async, subscribe, unsubscribe };

std::string_view to_string(RequestKind kind) noexcept;

/// Client -> server frame.
///
///   {"kind":"sync","id":7,"device":"sim/motor/1","command":"ReadPos","payload":0}
///   {"kind":"subscribe","id":8,"device":"sim/motor/1","event":"value:pos0"}
///   {"kind":"unsubscribe","id":9,"subscription":3}
struct Request {
  RequestKind kind = RequestKind::sync;
  std::uint64_t id = 0;
  std::string device;
  std::string command;  // sync/async
  std::string event;    // subscribe
  std::uint64_t subscription = 0;  // unsubscribe
  json payload;  // null when absent
};

/// Throws Errc::bad_frame. The id, when one could be read, is attached to the
/// error so the reply can still be correlated.
Request parse_request(std::string_view text);

struct BadFrame : Error {
  BadFrame(std::optional<std::uint64_t> id, const std::string& detail)
      : Error(Errc::bad_frame, detail), id(id) {}
  std::optional<std::uint64_t> id;
};

json request_to_json(const Request& request);

// Server -> client frames.
json reply_ok(std::uint64_t id, json payload);
json reply_error(std::uint64_t id, const Error& error);
json ack(std::uint64_t id, std::uint64_t ticket);
json completion_ok(std::uint64_t id, std::uint64_t ticket, json payload);
json completion_error(std::uint64_t id, std::uint64_t ticket, const Error& error);
json event_frame(std::uint64_t subscription, std::uint64_t seq, const std::string& device,
                 const std::string& event, json payload);
/// Terminal frame for a subscription closed by the server.
json subscription_closed(std::uint64_t subscription, Errc code);
/// Reply to input that is not a request at all.
json frame_error(const BadFrame& error);

/// Length prefix: 4 bytes, big-endian, then the frame text.
inline constexpr std::size_t max_frame_size = 16u << 20;

std::string encode_frame(std::string_view body);

/// Incremental decoder for a byte stream of length-prefixed frames.
class FrameDecoder {
 public:
  void feed(const char* data, std::size_t size);
  /// Next complete frame, if any. Throws Errc::bad_frame for oversized frames.
  std::optional<std::string> next();
  std::size_t buffered() const noexcept { return buffer_.size() - pos_; }

 private:
  std::string buffer_;
  std::size_t pos_ = 0;
};

}  // namespace deskctl::server
