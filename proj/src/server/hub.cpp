#include "deskctl/server/hub.hpp"

namespace deskctl::server {

std::optional<std::string> Session::pop(std::optional<std::chrono::milliseconds> timeout) {
  std::unique_lock lock(mutex_);
  auto ready = [this] { return !queue_.empty() || closed_; };
  if (timeout) {
    if (!ready_.wait_for(lock, *timeout, ready)) return std::nullopt;
  } else {
    ready_.wait(lock, ready);
  }
  if (queue_.empty()) return std::nullopt;
  auto e = std::move(queue_.front());
  queue_.pop_front();
  if (e.subscription) {
    auto it = pending_.find(e.subscription);
    if (it != pending_.end() && --it->second == 0) pending_.erase(it);
  }
  return std::move(e.text);
}

std::vector<std::string> Session::drain() {
  std::vector<std::string> out;
  while (auto f = pop(std::chrono::milliseconds(0))) out.push_back(std::move(*f));
  return out;
}

bool Session::closed() const {
  std::lock_guard lock(mutex_);
  return closed_;
}

std::size_t Session::queued() const {
  std::lock_guard lock(mutex_);
  return queue_.size();
}

std::size_t Session::pending_events(std::uint64_t subscription) const {
  std::lock_guard lock(mutex_);
  auto it = pending_.find(subscription);
  return it == pending_.end() ? 0 : it->second;
}

bool Session::push(std::string text) {
  {
    std::lock_guard lock(mutex_);
    if (closed_) return false;
    queue_.push_back({std::move(text), 0});
  }
  ready_.notify_one();
  return true;
}

bool Session::push_event(std::uint64_t subscription, std::string text) {
  {
    std::lock_guard lock(mutex_);
    if (closed_) return true;
    auto& n = pending_[subscription];
    if (n >= limit_) return false;
    ++n;
    queue_.push_back({std::move(text), subscription});
  }
  ready_.notify_one();
  return true;
}

void Session::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  ready_.notify_all();
}

// ---------------------------------------------------------------------------

Hub::Hub(station::Station& station, DeviceSet& devices, std::size_t queue_limit)
    : station_(station), devices_(devices), queue_limit_(queue_limit) {
  worker_ = std::thread([this] { worker_loop(); });
}

Hub::~Hub() {
  stop_ticker();
  {
    std::lock_guard lock(jobs_mutex_);
    stopping_ = true;
  }
  jobs_ready_.notify_all();
  worker_.join();
}

std::shared_ptr<Session> Hub::open_session() {
  std::lock_guard lock(station_.mutex());
  auto s = std::make_shared<Session>(next_session_++, queue_limit_);
  sessions_[s->id()] = s;
  return s;
}

void Hub::close_session(const std::shared_ptr<Session>& session) {
  std::lock_guard lock(station_.mutex());
  for (auto it = subscriptions_.begin(); it != subscriptions_.end();) {
    auto owner = it->second.session.lock();
    it = (!owner || owner == session) ? subscriptions_.erase(it) : std::next(it);
  }
  sessions_.erase(session->id());
  session->close();
}

void Hub::handle(const std::shared_ptr<Session>& session, std::string_view text) {
  Request request;
  try {
    request = parse_request(text);
  } catch (const BadFrame& e) {
    session->push((e.id ? reply_error(*e.id, e) : frame_error(e)).dump());
    return;
  }
  dispatch(session, request);
}

void Hub::dispatch(const std::shared_ptr<Session>& session, const Request& request) {
  switch (request.kind) {
    case RequestKind::sync: {
      std::lock_guard lock(station_.mutex());
      json frame;
      try {
        frame = reply_ok(request.id, execute_locked(request.device, request.command, request.payload));
      } catch (const Error& e) {
        frame = reply_error(request.id, e);
      }
      session->push(frame.dump());
      poll_locked();
      break;
    }
    case RequestKind::async: {
      const auto ticket = next_ticket_++;
      session->push(ack(request.id, ticket).dump());
      {
        std::lock_guard lock(jobs_mutex_);
        jobs_.push_back({session, request.id, ticket, request.device, request.command, request.payload});
      }
      jobs_ready_.notify_one();
      break;
    }
    case RequestKind::subscribe: {
      std::lock_guard lock(station_.mutex());
      subscribe_locked(session, request);
      break;
    }
    case RequestKind::unsubscribe: {
      std::lock_guard lock(station_.mutex());
      unsubscribe_locked(session, request);
      break;
    }
  }
}

json Hub::execute(const std::string& device, const std::string& command, const json& payload) {
  std::lock_guard lock(station_.mutex());
  auto result = execute_locked(device, command, payload);
  poll_locked();
  return result;
}

json Hub::execute_locked(const std::string& device, const std::string& command, const json& payload) {
  auto* d = devices_.find(device);
  if (!d) throw Error(Errc::unknown_device, device);
  try {
    return d->execute(command, payload);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(Errc::hardware_error, e.what());
  }
}

void Hub::subscribe_locked(const std::shared_ptr<Session>& session, const Request& request) {
  std::unique_ptr<EventSource> source;
  try {
    auto* d = devices_.find(request.device);
    if (!d) throw Error(Errc::unknown_device, request.device);
    source = d->open_event(request.event);
  } catch (const Error& e) {
    session->push(reply_error(request.id, e).dump());
    return;
  }
  const auto id = next_subscription_++;
  auto& sub = subscriptions_[id];
  sub.session = session;
  sub.device = request.device;
  sub.event = request.event;
  sub.source = std::move(source);
  session->push(reply_ok(request.id, id).dump());
  publish_locked(id, sub, sub.source->initial());
}

void Hub::unsubscribe_locked(const std::shared_ptr<Session>& session, const Request& request) {
  auto it = subscriptions_.find(request.subscription);
  if (it == subscriptions_.end() || it->second.session.lock() != session) {
    session->push(
        reply_error(request.id, Error(Errc::unknown_subscription, std::to_string(request.subscription))).dump());
    return;
  }
  subscriptions_.erase(it);
  session->push(reply_ok(request.id, nullptr).dump());
}

bool Hub::publish_locked(std::uint64_t id, Subscription& sub, json payload) {
  auto session = sub.session.lock();
  if (!session) return false;
  ++sub.seq;
  if (session->push_event(id, event_frame(id, sub.seq, sub.device, sub.event, std::move(payload)).dump())) {
    return true;
  }
  session->push(subscription_closed(id, Errc::overflow).dump());
  return false;
}

void Hub::poll() {
  std::lock_guard lock(station_.mutex());
  poll_locked();
}

void Hub::poll_locked() {
  for (auto it = subscriptions_.begin(); it != subscriptions_.end();) {
    bool alive = !it->second.session.expired();
    if (alive) {
      for (auto& change : it->second.source->changes()) {
        if (!publish_locked(it->first, it->second, std::move(change))) {
          alive = false;
          break;
        }
      }
    }
    it = alive ? std::next(it) : subscriptions_.erase(it);
  }
}

void Hub::advance(hw::Tick ticks) {
  for (hw::Tick i = 0; i < ticks; ++i) {
    std::lock_guard lock(station_.mutex());
    station_.advance(1);
    poll_locked();
  }
}

void Hub::start_ticker(std::chrono::milliseconds period) {
  stop_ticker();
  {
    std::lock_guard lock(ticker_mutex_);
    ticker_stop_ = false;
  }
  ticker_ = std::thread([this, period] {
    auto next = std::chrono::steady_clock::now();
    std::unique_lock lock(ticker_mutex_);
    while (!ticker_stop_) {
      next += period;
      if (ticker_wake_.wait_until(lock, next, [this] { return ticker_stop_; })) break;
      lock.unlock();
      advance(1);
      lock.lock();
    }
  });
}

void Hub::stop_ticker() {
  {
    std::lock_guard lock(ticker_mutex_);
    ticker_stop_ = true;
  }
  ticker_wake_.notify_all();
  if (ticker_.joinable()) ticker_.join();
}

void Hub::worker_loop() {
  std::unique_lock lock(jobs_mutex_);
  for (;;) {
    jobs_ready_.wait(lock, [this] { return stopping_ || !jobs_.empty(); });
    if (jobs_.empty()) return;
    auto job = std::move(jobs_.front());
    jobs_.pop_front();
    job_running_ = true;
    lock.unlock();

    json frame;
    {
      std::lock_guard station_lock(station_.mutex());
      try {
        frame = completion_ok(job.id, job.ticket, execute_locked(job.device, job.command, job.payload));
      } catch (const Error& e) {
        frame = completion_error(job.id, job.ticket, e);
      }
      if (auto s = job.session.lock()) s->push(frame.dump());
      poll_locked();
    }

    lock.lock();
    job_running_ = false;
    jobs_done_.notify_all();
  }
}

void Hub::wait_idle() {
  std::unique_lock lock(jobs_mutex_);
  jobs_done_.wait(lock, [this] { return jobs_.empty() && !job_running_; });
}

std::size_t Hub::subscription_count() const {
  std::lock_guard lock(station_.mutex());
  return subscriptions_.size();
}

std::size_t Hub::session_count() const {
  std::lock_guard lock(station_.mutex());
  return sessions_.size();
}

}  // namespace deskctl::server
