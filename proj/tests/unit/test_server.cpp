#include <doctest.h>

#include <random>
#include <thread>

#include "server_rig.hpp"

using namespace deskctl;
using namespace deskctl::server;
using deskctl::test::error_of;
using deskctl::test::ServerRig;
using namespace std::chrono_literals;

namespace {

json payload_of(const json& frame) {
  REQUIRE(frame.value("ok", false));
  return frame["payload"];
}

std::string code_of(const json& frame) {
  REQUIRE_FALSE(frame.value("ok", true));
  return frame["code"].get<std::string>();
}

std::vector<json> parse_all(const std::vector<std::string>& texts) {
  std::vector<json> out;
  for (const auto& t : texts) out.push_back(json::parse(t));
  return out;
}

// Collects the event frames of one subscription until `n` arrived.
std::vector<json> events_for(Client& c, std::uint64_t sub, std::size_t n) {
  std::vector<json> out;
  while (out.size() < n) {
    out.push_back(c.wait_for([sub](const json& f) {
      return f.value("kind", "") == "event" && f["subscription"] == sub;
    }));
  }
  return out;
}

bool quiet(Client& c, std::uint64_t sub) {
  try {
    c.wait_for([sub](const json& f) { return f.value("subscription", 0ull) == sub; }, 150ms);
    return false;
  } catch (const Error&) {
    return true;
  }
}

}  // namespace

TEST_CASE("frame codec") {
  FrameDecoder d;
  auto a = encode_frame("{\"x\":1}");
  auto b = encode_frame("");
  CHECK(a.substr(0, 4) == std::string("\0\0\0\x07", 4));
  std::string stream = a + b + encode_frame("tail");
  for (std::size_t i = 0; i < stream.size(); i += 3) d.feed(stream.data() + i, std::min<std::size_t>(3, stream.size() - i));
  CHECK(d.next() == "{\"x\":1}");
  CHECK(d.next() == "");
  CHECK(d.next() == "tail");
  CHECK_FALSE(d.next());

  FrameDecoder big;
  big.feed("\x7f\xff\xff\xff", 4);
  CHECK(error_of([&] { big.next(); }) == Errc::bad_frame);
}

TEST_CASE("request parsing") {
  auto r = parse_request(R"({"kind":"sync","id":3,"device":"sim/motor/1","command":"ReadPos","payload":0})");
  CHECK(r.kind == RequestKind::sync);
  CHECK(r.id == 3);
  CHECK(r.payload == 0);
  CHECK(request_to_json(r) == json::parse(R"({"kind":"sync","id":3,"device":"sim/motor/1","command":"ReadPos","payload":0})"));

  auto bad = [](std::string_view text) -> std::optional<std::uint64_t> {
    try {
      parse_request(text);
    } catch (const BadFrame& e) {
      return e.id;
    }
    FAIL("expected BadFrame");
    return std::nullopt;
  };
  CHECK_FALSE(bad("not json"));
  CHECK_FALSE(bad("[1,2]"));
  CHECK_FALSE(bad(R"({"kind":"sync"})"));
  CHECK_FALSE(bad(R"({"kind":"sync","id":-1})"));
  CHECK(bad(R"({"kind":"fly","id":4})") == 4u);
  CHECK(bad(R"({"kind":"sync","id":5,"device":"a/b/c"})") == 5u);
  CHECK(bad(R"({"kind":"unsubscribe","id":6})") == 6u);
}

TEST_CASE("device commands in process") {
  ServerRig rig;
  auto& hub = *rig.hub;
  CHECK(rig.devices.names() == std::vector<std::string>{"sim/adc/1", "sim/counter/1", "sim/dio/1", "sim/motor/1",
                                                        "sys/hook/engine", "sys/sim/clock"});
  rig.st.sim().write(1, 3, hw::mot4::POS0, 100);
  CHECK(hub.execute("sim/motor/1", "ReadPos", 0) == 100);
  hub.execute("sim/motor/1", "Jog", {0, 5});
  CHECK(hub.execute("sim/motor/1", "ReadPos", 0) == 105);
  hub.execute("sim/motor/1", "Jog", {1, -7});
  CHECK(hub.execute("sim/motor/1", "ReadPos", 1) == -7);
  CHECK(hub.execute("sim/motor/1", "State", nullptr) == "ON");

  rig.db.put("sim/motor/1:velocity", {"4"});
  hub.execute("sim/motor/1", "Move", {0, 113});
  CHECK(hub.execute("sim/motor/1", "State", nullptr) == "MOVING");
  hub.advance(1);
  CHECK(hub.execute("sim/motor/1", "ReadPos", 0) == 109);
  hub.advance(2);
  CHECK(hub.execute("sim/motor/1", "ReadPos", 0) == 113);
  CHECK(hub.execute("sim/motor/1", "State", nullptr) == "ON");

  CHECK(hub.execute("sim/counter/1", "Read", nullptr) == 3);
  hub.execute("sim/counter/1", "Preset", 1000);
  CHECK(hub.execute("sim/counter/1", "ReadChannel", 0) == 1000);
  hub.execute("sim/dio/1", "WriteOut", 0xBEEF);
  CHECK(hub.execute("sim/dio/1", "ReadOut", nullptr) == 0xBEEF);
  CHECK(hub.execute("sys/sim/clock", "Advance", 7) == 10);
  CHECK(hub.execute("sim/adc/1", "ReadAll", nullptr).size() == 8);

  auto err = [&](const char* dev, const char* cmd, json payload) {
    return error_of([&] { hub.execute(dev, cmd, payload); });
  };
  CHECK(err("sim/motor/1", "Fly", nullptr) == Errc::unknown_command);
  CHECK(err("sim/motor/9", "State", nullptr) == Errc::unknown_device);
  CHECK(err("sim/motor/1", "ReadPos", "zero") == Errc::bad_payload);
  CHECK(err("sim/motor/1", "ReadPos", 4) == Errc::bad_payload);
  CHECK(err("sim/motor/1", "Jog", {0}) == Errc::bad_payload);
  CHECK(err("sim/motor/1", "State", 1) == Errc::bad_payload);
  CHECK(err("sim/dio/1", "WriteOut", 0x10000) == Errc::bad_payload);

  rig.st.remove_board(1, 3);
  rig.st.reconcile();
  CHECK(hub.execute("sim/motor/1", "State", nullptr) == "FAULT");
  try {
    hub.execute("sim/motor/1", "ReadPos", 0);
    FAIL("expected hardware-error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::hardware_error);
    CHECK(e.detail().rfind("binding-missing", 0) == 0);
  }
}

TEST_CASE("hook device") {
  ServerRig rig;
  auto& hub = *rig.hub;
  hub.execute("sim/counter/1", "SetPeriod", 10);
  auto id = hub.execute("sys/hook/engine", "Configure", R"({
    "channels": ["sim/counter/1:count0", "sim/motor/1:pos0", "sim/dio/1:bit3"],
    "trigger": {"kind": "interrupt", "device": "sim/counter/1"},
    "capacity": 5
  })");
  CHECK(id == 1);
  CHECK(hub.execute("sys/hook/engine", "Arm", 1).get<std::string>().rfind("armed=1 ", 0) == 0);
  hub.advance(60);
  auto csv = hub.execute("sys/hook/engine", "Dump", 1).get<std::string>();
  CHECK(csv == "seq,timestamp,count0,pos0,bit3\n1,10,10,0,0\n2,20,20,0,0\n3,30,30,0,0\n4,40,40,0,0\n5,50,50,0,0\n");
  CHECK(hub.execute("sys/hook/engine", "HookStatus", 1).get<std::string>().find("ignored_after_stop=1") !=
        std::string::npos);
  CHECK(error_of([&] { hub.execute("sys/hook/engine", "Arm", 1); }) == Errc::needs_reset);
  CHECK(error_of([&] { hub.execute("sys/hook/engine", "Arm", 9); }) == Errc::unknown_hook);
  CHECK(error_of([&] { hub.execute("sys/hook/engine", "Configure", "{}"); }) == Errc::bad_payload);
  CHECK(error_of([&] {
          hub.execute("sys/hook/engine", "Configure", R"({"channels":["sim/motor/1:pos9"]})");
        }) == Errc::unknown_channel);
  CHECK(error_of([&] {
          hub.execute("sys/hook/engine", "Configure",
                      R"({"channels":["sim/adc/1:averaged"],"trigger":{"kind":"timer","period":10}})");
        }) == Errc::complex_needs_async);
  CHECK(error_of([&] {
          hub.execute("sys/hook/engine", "Configure",
                      R"({"channels":["sim/counter/1:count0"],"trigger":{"kind":"timer","period":5}})");
        }) == Errc::period_too_small);
  CHECK(hub.execute("sys/hook/engine", "List", nullptr) == json::array({1}));
}

TEST_CASE("sync, async and errors over tcp") {
  ServerRig rig;
  rig.st.sim().write(1, 3, hw::mot4::POS0, 100);
  auto c = rig.client();

  CHECK(payload_of(c->sync("sim/motor/1", "ReadPos", 0)) == 100);
  c->sync("sim/motor/1", "Jog", {0, 5});
  CHECK(payload_of(c->sync("sim/motor/1", "ReadPos", 0)) == 105);
  CHECK(code_of(c->sync("sim/motor/1", "Fly")) == "unknown-command");

  SUBCASE("async ack precedes completion") {
    Request r;
    r.kind = RequestKind::async;
    r.device = "sim/motor/1";
    r.command = "ReadPos";
    r.payload = 0;
    auto a = c->call(r);
    CHECK(a["kind"] == "ack");
    auto ticket = a["ticket"].get<std::uint64_t>();
    auto done = c->wait_for([&](const json& f) { return f.value("kind", "") == "completion"; });
    CHECK(done["ticket"] == ticket);
    CHECK(done["id"] == a["id"]);
    CHECK(payload_of(done) == 105);
  }

  SUBCASE("async error arrives in the completion") {
    auto done = c->async("sim/motor/7", "ReadPos", 0);
    CHECK(done["kind"] == "completion");
    CHECK(code_of(done) == "unknown-device");
  }

  SUBCASE("async then sync on one session") {
    Request r;
    r.kind = RequestKind::async;
    r.device = "sim/motor/1";
    r.command = "ReadPos";
    r.payload = 0;
    r.id = c->next_id();
    c->send(request_to_json(r));
    auto sync = c->sync("sim/counter/1", "Read");
    CHECK(sync["kind"] == "reply");
    auto done = c->wait_for([](const json& f) { return f.value("kind", "") == "completion"; });
    CHECK(done["id"] == r.id);
    CHECK(payload_of(done) == 105);
  }

  SUBCASE("malformed frames keep the session open") {
    c->send_text("this is not json");
    auto e = c->wait_for([](const json& f) { return f.value("kind", "") == "error"; });
    CHECK(e["code"] == "bad-frame");
    c->send_text(R"({"kind":"sync","id":77})");
    auto r = c->wait_for([](const json& f) { return f.value("id", 0ull) == 77; });
    CHECK(r["kind"] == "reply");
    CHECK(code_of(r) == "bad-frame");
    CHECK(payload_of(c->sync("sim/motor/1", "ReadPos", 0)) == 105);
  }
}

TEST_CASE("two clients interleaved") {
  ServerRig rig;
  auto a = rig.client();
  auto b = rig.client();
  std::vector<std::uint64_t> sent_a, sent_b;
  for (int i = 0; i < 20; ++i) {
    for (auto* c : {a.get(), b.get()}) {
      Request r;
      r.kind = RequestKind::sync;
      r.device = "sim/dio/1";
      r.command = "ReadIn";
      r.id = c->next_id() + (c == a.get() ? 1000 : 2000);
      (c == a.get() ? sent_a : sent_b).push_back(r.id);
      c->send(request_to_json(r));
    }
  }
  for (auto [c, sent] : {std::pair{a.get(), &sent_a}, std::pair{b.get(), &sent_b}}) {
    for (auto id : *sent) {
      auto f = c->next();
      REQUIRE(f);
      CHECK((*f)["kind"] == "reply");
      CHECK((*f)["id"] == id);
    }
  }
}

TEST_CASE("registry lookup then connect") {
  ServerRig rig;
  auto motor = rig.db.lookup_device("sim/motor/1");
  auto counter = rig.db.lookup_device("sim/counter/1");
  REQUIRE(motor);
  REQUIRE(counter);
  Client c(motor->host, motor->port);
  CHECK(payload_of(c.sync("sim/motor/1", "State")) == "ON");
  Client d(counter->host, counter->port);
  CHECK(payload_of(d.sync("sim/counter/1", "State")) == "ON");
}

TEST_CASE("empty device set") {
  station::Station st(deskctl::test::desk1());
  DeviceSet none;
  Hub hub(st, none);
  TcpServer tcp(hub, {"127.0.0.1", 0});
  tcp.start();
  Client c("127.0.0.1", tcp.port());
  CHECK(code_of(c.sync("sim/motor/1", "State")) == "unknown-device");
  CHECK(code_of(c.subscribe("sim/motor/1", "state")) == "unknown-device");
  tcp.stop();
}

TEST_CASE("bind failure") {
  ServerRig rig;
  CHECK(error_of([&] { TcpServer again(*rig.hub, {"127.0.0.1", rig.tcp->port()}); }) == Errc::bind_failed);
  CHECK(error_of([] { parse_endpoint("nohost"); }) == Errc::invalid_argument);
  CHECK(parse_endpoint("localhost:4100").port == 4100);
}

TEST_CASE("subscriptions") {
  ServerRig rig;
  rig.st.sim().write(1, 3, hw::mot4::POS0, 100);
  auto c = rig.client();

  auto reply = c->subscribe("sim/motor/1", "value:pos0");
  auto sub = payload_of(reply).get<std::uint64_t>();
  c->sync("sim/motor/1", "Jog", {0, 5});
  c->sync("sim/motor/1", "Jog", {0, 5});
  auto evs = events_for(*c, sub, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(evs[i]["seq"] == i + 1);
    CHECK(evs[i]["payload"] == 100 + 5 * static_cast<int>(i));
    CHECK(evs[i]["event"] == "value:pos0");
  }
  c->sync("sim/motor/1", "Jog", {1, 5});  // other axis, no event
  c->sync("sim/motor/1", "Jog", {0, 0});  // no change, no event
  CHECK(quiet(*c, sub));

  CHECK(payload_of(c->unsubscribe(sub)).is_null());
  c->sync("sim/motor/1", "Jog", {0, 5});
  CHECK(quiet(*c, sub));
  CHECK(code_of(c->unsubscribe(sub)) == "unknown-subscription");
  CHECK(code_of(c->subscribe("sim/motor/1", "value:pos9")) == "unknown-event");
  CHECK(code_of(c->subscribe("sim/motor/1", "bogus")) == "unknown-event");

  SUBCASE("another session cannot unsubscribe") {
    auto s2 = payload_of(c->subscribe("sim/motor/1", "state")).get<std::uint64_t>();
    auto other = rig.client();
    CHECK(code_of(other->unsubscribe(s2)) == "unknown-subscription");
  }

  SUBCASE("fan-out to three subscribers") {
    auto x = rig.client();
    auto y = rig.client();
    std::vector<std::pair<Client*, std::uint64_t>> subs;
    for (auto* cl : {c.get(), x.get(), y.get()}) {
      subs.emplace_back(cl, payload_of(cl->subscribe("sim/dio/1", "value:out")).get<std::uint64_t>());
    }
    c->sync("sim/dio/1", "WriteOut", 42);
    for (auto [cl, s] : subs) {
      auto e = events_for(*cl, s, 2);
      CHECK(e[1]["payload"] == 42);
      CHECK(e[1]["seq"] == 2);
    }
  }

  SUBCASE("clock ticks drive events") {
    rig.db.put("sim/motor/1:velocity", {"2"});
    auto s = payload_of(c->subscribe("sim/motor/1", "state")).get<std::uint64_t>();
    c->sync("sim/motor/1", "Move", {0, 120});
    c->sync("sys/sim/clock", "Advance", 10);
    auto e = events_for(*c, s, 3);
    CHECK(e[0]["payload"] == "ON");
    CHECK(e[1]["payload"] == "MOVING");
    CHECK(e[2]["payload"] == "ON");
  }

  SUBCASE("hook records stream") {
    c->sync("sim/counter/1", "SetPeriod", 10);
    auto id = payload_of(c->sync("sys/hook/engine", "Configure",
                                 R"({"channels":["sim/counter/1:count0"],
                                     "trigger":{"kind":"timer","period":10},"capacity":8,"mode":"circular"})"));
    c->sync("sys/hook/engine", "Arm", id);
    auto s = payload_of(c->subscribe("sys/hook/engine", "hook:" + std::to_string(id.get<int>()))).get<std::uint64_t>();
    c->sync("sys/sim/clock", "Advance", 30);
    auto e = events_for(*c, s, 4);
    CHECK(e[0]["payload"].is_null());
    CHECK(e[1]["payload"]["timestamp"] == 10);
    CHECK(e[3]["payload"]["values"] == json::array({30}));
    CHECK(code_of(c->subscribe("sys/hook/engine", "hook:99")) == "unknown-event");
  }
}

TEST_CASE("overflow closes a stalled subscription") {
  ServerRig rig(deskctl::test::desk1(), 1024);
  auto& hub = *rig.hub;
  auto session = hub.open_session();
  hub.handle(session, R"({"kind":"subscribe","id":1,"device":"sys/sim/clock","event":"value:now"})");
  hub.handle(session, R"({"kind":"subscribe","id":2,"device":"sim/motor/1","event":"value:pos0"})");
  hub.advance(1100);
  auto frames = parse_all(session->drain());
  std::size_t clock_events = 0;
  std::optional<json> terminal;
  for (const auto& f : frames) {
    if (f["kind"] == "event" && f["subscription"] == 1) {
      CHECK_FALSE(terminal);
      ++clock_events;
    }
    if (f["kind"] == "error") terminal = f;
  }
  CHECK(clock_events == 1024);
  REQUIRE(terminal);
  CHECK(*terminal == json{{"kind", "error"}, {"subscription", 1}, {"code", "overflow"}});
  CHECK(hub.subscription_count() == 1);
  hub.advance(5);
  CHECK(session->drain().empty());
  hub.close_session(session);
  CHECK(hub.subscription_count() == 0);
}

TEST_CASE("a slow reader below the limit loses nothing") {
  ServerRig rig(deskctl::test::desk1(), 16);
  auto& hub = *rig.hub;
  auto session = hub.open_session();
  hub.handle(session, R"({"kind":"subscribe","id":1,"device":"sys/sim/clock","event":"value:now"})");
  std::uint64_t expected_seq = 1;
  for (int round = 0; round < 50; ++round) {
    hub.advance(10);
    for (const auto& f : parse_all(session->drain())) {
      if (f["kind"] != "event") continue;
      CHECK(f["seq"] == expected_seq++);
    }
  }
  CHECK(expected_seq == 502);
}

TEST_CASE("placement does not change client-visible behavior") {
  auto other = deskctl::test::desk1_json();
  // the motor sits on the host bus in chassis 0 instead of the remote crate
  auto moved = json::parse(other);
  moved["crates"][0]["slots"]["4"] = moved["crates"][1]["slots"]["3"];
  moved["crates"][1]["slots"].erase("3");
  ServerRig a;
  ServerRig b(hw::parse_topology(moved.dump()));
  REQUIRE(b.st.table().binding(b.st.logical_at(0, 4)).board_type == "mot4");
  auto ca = a.client();
  auto cb = b.client();
  std::vector<std::pair<std::string, json>> script{
      {"ReadPos", 0}, {"Jog", {0, 12}}, {"ReadPos", 0}, {"Move", {1, 30}}, {"State", nullptr},
      {"ReadChannel", 5}, {"Jog", {3, -4}}, {"ReadPos", 3}, {"Fly", nullptr}, {"Jog", {9, 1}}};
  for (const auto& [cmd, payload] : script) {
    auto ra = ca->sync("sim/motor/1", cmd, payload);
    auto rb = cb->sync("sim/motor/1", cmd, payload);
    ra.erase("id");
    rb.erase("id");
    CHECK(ra == rb);
  }
}

TEST_CASE("property: sync and async payloads agree") {
  // Twin servers in identical frozen states receive the same command stream,
  // one through the sync path and one through the async path.
  ServerRig sync_rig;
  ServerRig async_rig;
  auto cs = sync_rig.client();
  auto ca = async_rig.client();
  std::mt19937 rng(41);
  const std::vector<std::string> devices{"sim/motor/1", "sim/counter/1", "sim/dio/1", "sim/adc/1", "sim/motor/9"};
  std::size_t mismatches = 0;
  for (int i = 0; i < 200; ++i) {
    const auto& dev = devices[rng() % devices.size()];
    std::string cmd;
    json payload;
    switch (rng() % 8) {
      case 0: cmd = "State"; break;
      case 1: cmd = "Status"; break;
      case 2: cmd = "ReadChannel"; payload = static_cast<int>(rng() % 20); break;
      case 3: cmd = "Jog"; payload = {static_cast<int>(rng() % 5), static_cast<int>(rng() % 200) - 100}; break;
      case 4: cmd = "ReadPos"; payload = static_cast<int>(rng() % 5); break;
      case 5: cmd = "WriteOut"; payload = static_cast<int>(rng() % 0x20000); break;
      case 6: cmd = "Read"; break;
      default: cmd = "Fly"; break;
    }
    auto s = cs->sync(dev, cmd, payload);
    auto a = ca->async(dev, cmd, payload);
    bool same = s["ok"] == a["ok"] && (s["ok"] ? s["payload"] == a["payload"] : s["code"] == a["code"]);
    mismatches += !same;
  }
  CHECK(mismatches == 0);
}

TEST_CASE("property: event count is one plus the number of changes") {
  std::mt19937 rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    ServerRig rig;
    auto c = rig.client();
    auto sub = payload_of(c->subscribe("sim/motor/1", "value:pos2")).get<std::uint64_t>();
    std::int64_t pos = 0;
    std::vector<std::int64_t> expected{0};
    for (int i = 0; i < 40; ++i) {
      int delta = static_cast<int>(rng() % 7) - 3;
      int axis = rng() % 3 == 0 ? 1 : 2;
      c->sync("sim/motor/1", "Jog", {axis, delta});
      if (axis == 2 && delta != 0) {
        pos += delta;
        expected.push_back(pos);
      }
    }
    c->unsubscribe(sub);
    auto evs = events_for(*c, sub, expected.size());
    for (std::size_t k = 0; k < evs.size(); ++k) {
      REQUIRE(evs[k]["seq"] == k + 1);
      REQUIRE(evs[k]["payload"] == expected[k]);
    }
    CHECK(quiet(*c, sub));
  }
}

TEST_CASE("disconnect drops the session's subscriptions") {
  ServerRig rig;
  {
    auto c = rig.client();
    c->subscribe("sim/motor/1", "state");
    CHECK(rig.hub->subscription_count() == 1);
  }
  for (int i = 0; i < 100 && rig.hub->subscription_count() != 0; ++i) std::this_thread::sleep_for(10ms);
  CHECK(rig.hub->subscription_count() == 0);
  CHECK(rig.hub->session_count() == 0);
}
