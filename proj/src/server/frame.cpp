#include "deskctl/server/frame.hpp"

namespace deskctl::server {

std::string_view to_string(RequestKind kind) noexcept {
  switch (kind) {
    case RequestKind::sync: return "sync";
    case RequestKind::async: return "async";
    case RequestKind::subscribe: return "subscribe";
    case RequestKind::unsubscribe: return "unsubscribe";
  }
  return "?";
}

namespace {

std::optional<std::uint64_t> read_id(const json& j) {
  auto it = j.find("id");
  if (it == j.end() || !it->is_number_unsigned()) return std::nullopt;
  return it->get<std::uint64_t>();
}

std::string required_string(const json& j, const char* field, std::optional<std::uint64_t> id) {
  auto it = j.find(field);
  if (it == j.end() || !it->is_string() || it->get_ref<const std::string&>().empty()) {
    throw BadFrame(id, std::string("missing or non-string field '") + field + "'");
  }
  return it->get<std::string>();
}

}  // namespace

Request parse_request(std::string_view text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw BadFrame(std::nullopt, "not JSON");
  if (!j.is_object()) throw BadFrame(std::nullopt, "frame is not an object");

  auto id = read_id(j);
  if (!id) throw BadFrame(std::nullopt, "missing or non-integer 'id'");

  Request r;
  r.id = *id;
  auto kind = j.find("kind");
  if (kind == j.end() || !kind->is_string()) throw BadFrame(id, "missing 'kind'");
  const auto& k = kind->get_ref<const std::string&>();
  if (k == "sync") {
    r.kind = RequestKind::sync;
  } else if (k == "async") {
    r.kind = RequestKind::async;
  } else if (k == "subscribe") {
    r.kind = RequestKind::subscribe;
  } else if (k == "unsubscribe") {
    r.kind = RequestKind::unsubscribe;
  } else {
    throw BadFrame(id, "unknown kind '" + k + "'");
  }

  switch (r.kind) {
    case RequestKind::sync:
    case RequestKind::async:
      r.device = required_string(j, "device", id);
      r.command = required_string(j, "command", id);
      break;
    case RequestKind::subscribe:
      r.device = required_string(j, "device", id);
      r.event = required_string(j, "event", id);
      break;
    case RequestKind::unsubscribe: {
      auto s = j.find("subscription");
      if (s == j.end() || !s->is_number_unsigned()) throw BadFrame(id, "missing 'subscription'");
      r.subscription = s->get<std::uint64_t>();
      break;
    }
  }
  if (auto p = j.find("payload"); p != j.end()) r.payload = *p;
  return r;
}

json request_to_json(const Request& r) {
  json j{{"kind", to_string(r.kind)}, {"id", r.id}};
  switch (r.kind) {
    case RequestKind::sync:
    case RequestKind::async:
      j["device"] = r.device;
      j["command"] = r.command;
      if (!r.payload.is_null()) j["payload"] = r.payload;
      break;
    case RequestKind::subscribe:
      j["device"] = r.device;
      j["event"] = r.event;
      break;
    case RequestKind::unsubscribe:
      j["subscription"] = r.subscription;
      break;
  }
  return j;
}

json reply_ok(std::uint64_t id, json payload) {
  return {{"kind", "reply"}, {"id", id}, {"ok", true}, {"payload", std::move(payload)}};
}

json reply_error(std::uint64_t id, const Error& error) {
  return {{"kind", "reply"}, {"id", id}, {"ok", false}, {"code", to_string(error.code())},
          {"detail", error.detail()}};
}

json ack(std::uint64_t id, std::uint64_t ticket) { return {{"kind", "ack"}, {"id", id}, {"ticket", ticket}}; }

json completion_ok(std::uint64_t id, std::uint64_t ticket, json payload) {
  return {{"kind", "completion"}, {"id", id}, {"ticket", ticket}, {"ok", true}, {"payload", std::move(payload)}};
}

json completion_error(std::uint64_t id, std::uint64_t ticket, const Error& error) {
  return {{"kind", "completion"}, {"id", id}, {"ticket", ticket}, {"ok", false},
          {"code", to_string(error.code())}, {"detail", error.detail()}};
}

json event_frame(std::uint64_t subscription, std::uint64_t seq, const std::string& device,
                 const std::string& event, json payload) {
  return {{"kind", "event"}, {"subscription", subscription}, {"seq", seq},
          {"device", device}, {"event", event}, {"payload", std::move(payload)}};
}

json subscription_closed(std::uint64_t subscription, Errc code) {
  return {{"kind", "error"}, {"subscription", subscription}, {"code", to_string(code)}};
}

json frame_error(const BadFrame& error) {
  json j{{"kind", "error"}, {"code", to_string(error.code())}, {"detail", error.detail()}};
  if (error.id) j["id"] = *error.id;
  return j;
}

std::string encode_frame(std::string_view body) {
  if (body.size() > max_frame_size) throw Error(Errc::bad_frame, "frame too large");
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string out;
  out.reserve(4 + body.size());
  out.push_back(static_cast<char>((n >> 24) & 0xFF));
  out.push_back(static_cast<char>((n >> 16) & 0xFF));
  out.push_back(static_cast<char>((n >> 8) & 0xFF));
  out.push_back(static_cast<char>(n & 0xFF));
  out.append(body);
  return out;
}

void FrameDecoder::feed(const char* data, std::size_t size) {
  if (pos_ > 0 && pos_ == buffer_.size()) {
    buffer_.clear();
    pos_ = 0;
  }
  buffer_.append(data, size);
}

std::optional<std::string> FrameDecoder::next() {
  if (buffered() < 4) return std::nullopt;
  const auto* p = reinterpret_cast<const unsigned char*>(buffer_.data() + pos_);
  const std::uint32_t n = (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
                          (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
  if (n > max_frame_size) throw Error(Errc::bad_frame, "frame of " + std::to_string(n) + " bytes");
  if (buffered() < 4 + std::size_t{n}) return std::nullopt;
  std::string body = buffer_.substr(pos_ + 4, n);
  pos_ += 4 + n;
  if (pos_ > 65536 && pos_ * 2 > buffer_.size()) {
    buffer_.erase(0, pos_);
    pos_ = 0;
  }
  return body;
}

}  // namespace deskctl::server
