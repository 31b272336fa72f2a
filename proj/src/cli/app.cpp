#include "deskctl/cli/app.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "deskctl/cli/bench.hpp"
#include "deskctl/db/property_db.hpp"
#include "deskctl/server/devices.hpp"
#include "deskctl/server/gateway.hpp"
#include "deskctl/server/hub.hpp"
#include "deskctl/server/tcp.hpp"

namespace deskctl::cli {

namespace {

std::atomic<bool> stop_flag{false};

using server::json;

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

hw::Topology load_topology(const std::string& path) { return hw::parse_topology(slurp(path)); }

// A word that parses as JSON is sent as that value, anything else as a string.
json parse_arg(const std::string& word) {
  auto j = json::parse(word, nullptr, false);
  return j.is_discarded() ? json(word) : j;
}

json payload_from(const std::vector<std::string>& args) {
  if (args.empty()) return nullptr;
  if (args.size() == 1) return parse_arg(args[0]);
  json out = json::array();
  for (const auto& a : args) out.push_back(parse_arg(a));
  return out;
}

// Unwraps a reply or completion frame; remote errors become local ones.
json payload_of(const json& frame) {
  if (frame.value("ok", false)) return frame.value("payload", json());
  auto code = frame.value("code", std::string("bad-frame"));
  throw Error(errc_from_string(code).value_or(Errc::bad_frame), frame.value("detail", std::string()));
}

void print_payload(std::ostream& out, const json& payload) {
  if (payload.is_null()) return;
  if (payload.is_string()) {
    const auto& s = payload.get_ref<const std::string&>();
    out << s;
    if (s.empty() || s.back() != '\n') out << '\n';
  } else {
    out << payload.dump() << '\n';
  }
}

struct Target {
  std::string server;
  std::string db;

  std::unique_ptr<server::Client> connect(const std::string& device) const {
    if (server.empty() && !db.empty()) {
      db::PropertyDb registry{std::filesystem::path(db)};
      auto entry = registry.lookup_device(device);
      if (!entry) throw Error(Errc::unknown_device, device + " is not registered");
      return std::make_unique<server::Client>(entry->host, entry->port);
    }
    auto e = server::parse_endpoint(server.empty() ? "127.0.0.1:4100" : server);
    return std::make_unique<server::Client>(e.host, e.port);
  }

  void add_options(CLI::App* app) {
    app->add_option("--server", server, "server endpoint host:port (default 127.0.0.1:4100)");
    app->add_option("--db", db, "property database used to look the device up");
  }
};

constexpr const char* hook_device = "sys/hook/engine";

}  // namespace

void request_stop() noexcept { stop_flag = true; }

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"deskctl: desk-scale control system"};
  app.require_subcommand(1);
  std::function<void()> action;

  // serve
  auto* serve = app.add_subcommand("serve", "run a device server on a simulated station");
  std::string spec_path, endpoint = "127.0.0.1:4100", db_path, gateway_endpoint;
  int tick_ms = 1;
  serve->add_option("--spec", spec_path, "topology file")->required();
  serve->add_option("--endpoint", endpoint, "listen address host:port");
  serve->add_option("--db", db_path, "property database file");
  serve->add_option("--tick-ms", tick_ms, "wall-clock milliseconds per simulator tick, 0 stops the clock")
      ->check(CLI::NonNegativeNumber);
  serve->add_option("--gateway", gateway_endpoint, "also serve HTTP/WebSocket on host:port");
  serve->callback([&] {
    action = [&] {
      station::Station st(load_topology(spec_path));
      std::unique_ptr<db::PropertyDb> db =
          db_path.empty() ? std::make_unique<db::PropertyDb>() : std::make_unique<db::PropertyDb>(db_path);
      st.register_builtin_drivers();
      st.table() = busmap::MappingTable::load(*db);
      for (const auto& line : st.reconcile().render()) out << line << '\n';
      st.table().save(*db);
      st.attach_builtin();

      server::DeviceSet devices;
      server::populate(devices, st, *db);
      server::Hub hub(st, devices);
      server::TcpServer tcp(hub, server::parse_endpoint(endpoint));
      tcp.start();
      auto host = server::parse_endpoint(endpoint).host;
      if (host == "0.0.0.0") host = "127.0.0.1";
      server::register_all(devices, *db, host, tcp.port(), "deskctl");
      out << "listening on " << host << ':' << tcp.port() << '\n';

      std::unique_ptr<server::Gateway> gateway;
      if (!gateway_endpoint.empty()) {
        gateway = std::make_unique<server::Gateway>(server::parse_endpoint(gateway_endpoint),
                                                    server::Endpoint{host, tcp.port()},
                                                    [&db] { return server::registry_listing(*db); });
        gateway->start();
        out << "gateway on " << server::parse_endpoint(gateway_endpoint).host << ':' << gateway->port() << '\n';
      }
      out.flush();
      if (tick_ms > 0) hub.start_ticker(std::chrono::milliseconds(tick_ms));
      while (!stop_flag) std::this_thread::sleep_for(std::chrono::milliseconds(50));
      hub.stop_ticker();
      if (gateway) gateway->stop();
      tcp.stop();
    };
  });

  // topology
  auto* topology = app.add_subcommand("topology", "inspect the bus map");
  topology->require_subcommand(1);
  std::string topo_spec, topo_db;
  busmap::LogicalId forget_id = 0;
  auto* show = topology->add_subcommand("show", "print the enumeration of a topology file");
  show->add_option("--spec", topo_spec, "topology file")->required();
  show->callback([&] {
    action = [&] {
      auto e = busmap::enumerate(load_topology(topo_spec));
      out << "physical at type\n";
      for (const auto& b : e.boards) out << b.physical << ' ' << busmap::to_string(b.at) << ' ' << b.board_type << '\n';
    };
  });
  auto* reconcile = topology->add_subcommand("reconcile", "reconcile the stored mapping table with a topology");
  reconcile->add_option("--spec", topo_spec, "topology file")->required();
  reconcile->add_option("--db", topo_db, "property database file")->required();
  reconcile->callback([&] {
    action = [&] {
      db::PropertyDb db{std::filesystem::path(topo_db)};
      auto table = busmap::MappingTable::load(db);
      auto report = table.reconcile(busmap::enumerate(load_topology(topo_spec)));
      table.save(db);
      out << "classification=" << busmap::to_string(report.classification) << '\n';
      for (const auto& line : report.render()) out << line << '\n';
    };
  });
  auto* forget = topology->add_subcommand("forget", "drop a missing binding");
  forget->add_option("logical", forget_id, "logical id")->required();
  forget->add_option("--db", topo_db, "property database file")->required();
  forget->callback([&] {
    action = [&] {
      db::PropertyDb db{std::filesystem::path(topo_db)};
      auto table = busmap::MappingTable::load(db);
      table.forget(forget_id);
      table.save(db);
    };
  });

  // db
  auto* dbcmd = app.add_subcommand("db", "property database");
  dbcmd->require_subcommand(1);
  std::string db_file, db_key, snapshot;
  std::vector<std::string> db_values;
  auto* get = dbcmd->add_subcommand("get", "print one property as a snapshot line");
  get->add_option("key", db_key)->required();
  get->add_option("--db", db_file)->required();
  get->callback([&] {
    action = [&] {
      db::PropertyDb db{std::filesystem::path(db_file)};
      auto v = db.get(db_key);
      if (!v) throw Error(Errc::unknown_key, db_key);
      out << db::encode_line(db_key, *v) << '\n';
    };
  });
  auto* put = dbcmd->add_subcommand("put", "store a property");
  put->add_option("key", db_key)->required();
  put->add_option("values", db_values)->required();
  put->add_option("--db", db_file)->required();
  put->callback([&] {
    action = [&] {
      db::PropertyDb db{std::filesystem::path(db_file)};
      db.put(db_key, db_values);
    };
  });
  auto* exp = dbcmd->add_subcommand("export", "write a snapshot file");
  exp->add_option("path", snapshot)->required();
  exp->add_option("--db", db_file)->required();
  exp->callback([&] {
    action = [&] {
      db::PropertyDb db{std::filesystem::path(db_file)};
      db.export_snapshot(snapshot);
    };
  });
  auto* imp = dbcmd->add_subcommand("import", "replace the contents with a snapshot file");
  imp->add_option("path", snapshot)->required();
  imp->add_option("--db", db_file)->required();
  imp->callback([&] {
    action = [&] {
      db::PropertyDb db{std::filesystem::path(db_file)};
      db.import_snapshot(snapshot);
    };
  });

  // exec
  auto* exec = app.add_subcommand("exec", "run one device command");
  Target target;
  std::string device, command;
  std::vector<std::string> args;
  bool async = false;
  exec->add_option("device", device)->required();
  exec->add_option("command", command)->required();
  exec->add_option("args", args, "payload words; several become a list");
  exec->add_flag("--async", async, "use the asynchronous path");
  target.add_options(exec);
  exec->callback([&] {
    action = [&] {
      auto c = target.connect(device);
      auto payload = payload_from(args);
      print_payload(out, payload_of(async ? c->async(device, command, payload) : c->sync(device, command, payload)));
    };
  });

  // listen
  auto* listen = app.add_subcommand("listen", "print event frames until interrupted");
  std::string event;
  std::uint64_t count = 0;
  listen->add_option("device", device)->required();
  listen->add_option("event", event)->required();
  listen->add_option("--count", count, "stop after this many events");
  target.add_options(listen);
  listen->callback([&] {
    action = [&] {
      auto c = target.connect(device);
      payload_of(c->subscribe(device, event));
      for (std::uint64_t seen = 0; !stop_flag && (count == 0 || seen < count);) {
        auto frame = c->next(std::chrono::milliseconds(100));
        if (!frame) continue;
        out << frame->dump() << '\n' << std::flush;
        if ((*frame)["kind"] == "error") throw Error(Errc::overflow, "subscription closed by the server");
        if ((*frame)["kind"] == "event") ++seen;
      }
    };
  });

  // hook
  auto* hookcmd = app.add_subcommand("hook", "configure and read hooks on a server");
  hookcmd->require_subcommand(1);
  std::string hook_file;
  std::uint32_t hook_id = 0;
  bool reset = false;
  auto hook_call = [&](const std::string& cmd, const json& payload) {
    auto c = target.connect(hook_device);
    print_payload(out, payload_of(c->sync(hook_device, cmd, payload)));
  };
  auto* hconfig = hookcmd->add_subcommand("config", "configure a hook from a JSON file, prints its id");
  hconfig->add_option("file", hook_file)->required();
  target.add_options(hconfig);
  hconfig->callback([&] { action = [&] { hook_call("Configure", slurp(hook_file)); }; });
  for (const char* name : {"arm", "disarm", "status", "dump"}) {
    auto* sub = hookcmd->add_subcommand(name);
    sub->add_option("--id", hook_id)->required();
    target.add_options(sub);
    if (std::string(name) == "arm") sub->add_flag("--reset", reset, "clear the buffer and counters first");
    sub->callback([&, name = std::string(name)] {
      action = [&, name] {
        if (name == "arm") hook_call(reset ? "Reset" : "Arm", hook_id);
        if (name == "disarm") hook_call("Disarm", hook_id);
        if (name == "status") hook_call("HookStatus", hook_id);
        if (name == "dump") hook_call("Dump", hook_id);
      };
    });
  }
  hookcmd->get_subcommand("arm")->description("arm a hook");
  hookcmd->get_subcommand("disarm")->description("disarm a hook");
  hookcmd->get_subcommand("status")->description("print hook counters");
  hookcmd->get_subcommand("dump")->description("print the hook buffer as CSV");

  // bench
  auto* bench = app.add_subcommand("bench", "function-generator latency benchmark");
  BenchOptions bopts;
  std::string bench_spec;
  std::int64_t tick_us = 1000;
  bench->add_option("--period", bopts.period, "trigger period in ticks")->check(CLI::PositiveNumber);
  bench->add_option("--events", bopts.events, "number of trigger events");
  bench->add_option("--async-delay", bopts.async_delay, "capture delay in ticks, selects the async path");
  bench->add_option("--tick-us", tick_us, "wall-clock microseconds per tick, 0 runs unpaced")
      ->check(CLI::NonNegativeNumber);
  bench->add_option("--spec", bench_spec, "topology file (default: built-in desk)");
  bench->callback([&] {
    action = [&] {
      bopts.tick = std::chrono::microseconds(tick_us);
      hw::Topology topo = bench_spec.empty() ? hw::parse_topology(R"({"crates":[
          {"chassis":0,"bus_kind":"host-pci","slots":{"1":{"board_type":"vct6","serial":"B-1"}}},
          {"chassis":1,"bus_kind":"remote-vme","slots":{"5":{"board_type":"dio16","serial":"B-2"}}}]})")
                                             : load_topology(bench_spec);
      out << render(bench_function_generator(topo, bopts));
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << '\n';
    return 2;
  }

  stop_flag = false;
  try {
    action();
  } catch (const Error& e) {
    err << "error: " << to_string(e.code());
    if (!e.detail().empty()) err << " (" << e.detail() << ')';
    err << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace deskctl::cli
