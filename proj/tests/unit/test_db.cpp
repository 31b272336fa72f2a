#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "deskctl/db/property_db.hpp"
#include "support.hpp"

using namespace deskctl;
using namespace deskctl::db;
using deskctl::test::error_of;

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("deskctl-db-" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string random_token(std::mt19937& rng, std::string_view alphabet, std::size_t max_len) {
  std::string s(1 + rng() % max_len, ' ');
  for (auto& c : s) c = alphabet[rng() % alphabet.size()];
  return s;
}

}  // namespace

TEST_CASE("key and name validation") {
  CHECK(is_valid_key("sim/motor/1:velocity"));
  CHECK(is_valid_key("busmap/0/2:adc8"));
  CHECK(is_valid_key("busmap:next_logical"));
  CHECK_FALSE(is_valid_key(""));
  CHECK_FALSE(is_valid_key("nocolon"));
  CHECK_FALSE(is_valid_key(":prop"));
  CHECK_FALSE(is_valid_key("a/b:"));
  CHECK_FALSE(is_valid_key("a//b:c"));
  CHECK_FALSE(is_valid_key("A/b:c"));
  CHECK_FALSE(is_valid_key("a/b:c:d"));
  CHECK_FALSE(is_valid_key("a b:c"));

  CHECK(is_valid_device_name("sim/motor/1"));
  CHECK_FALSE(is_valid_device_name("sim/motor"));
  CHECK_FALSE(is_valid_device_name("sim/motor/1/2"));
  CHECK_FALSE(is_valid_device_name("sim//1"));
  CHECK_FALSE(is_valid_device_name("Sim/motor/1"));
}

TEST_CASE("line codec") {
  CHECK(encode_line("a/b:c", {"x", "y"}) == "a/b:c\tx\x1fy");
  auto [k, v] = decode_line("a/b:c\tx\x1fy", 1);
  CHECK(k == "a/b:c");
  CHECK(v == PropertyValue{"x", "y"});
  CHECK(decode_line("a/b:c\t", 1).second == PropertyValue{""});
  CHECK(error_of([] { decode_line("a/b:c", 4); }) == Errc::malformed_snapshot);
  CHECK(error_of([] { decode_line("BAD:c\tx", 4); }) == Errc::malformed_snapshot);
  try {
    decode_line("garbage", 7);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 7") != std::string::npos);
  }
}

TEST_CASE("put get remove") {
  PropertyDb store;
  store.put("sim/motor/1:velocity", {"25"});
  CHECK(store.get("sim/motor/1:velocity") == PropertyValue{"25"});
  CHECK_FALSE(store.get("sim/motor/2:velocity"));
  store.put("sim/motor/1:velocity", {"30", "mm/s"});
  CHECK(store.get("sim/motor/1:velocity") == PropertyValue{"30", "mm/s"});
  CHECK(store.keys_with_prefix("sim/") == std::vector<std::string>{"sim/motor/1:velocity"});
  store.remove("sim/motor/1:velocity");
  CHECK(store.entries().empty());

  CHECK(error_of([&] { store.put("Bad:key", {"1"}); }) == Errc::invalid_key);
  CHECK(error_of([&] { store.put("a/b:c", {}); }) == Errc::bad_value);
  CHECK(error_of([&] { store.put("a/b:c", {"tab\there"}); }) == Errc::bad_value);
  CHECK(error_of([&] { store.put("a/b:c", {"nl\n"}); }) == Errc::bad_value);
}

TEST_CASE("registry") {
  PropertyDb store;
  store.register_device({"sim/motor/1", "127.0.0.1", 4100, "deskctl"});
  store.register_device({"sim/counter/1", "127.0.0.1", 4100, "deskctl"});
  CHECK(store.lookup_device("sim/motor/1")->port == 4100);
  CHECK_FALSE(store.lookup_device("sim/motor/9"));
  CHECK(store.devices().size() == 2);
  CHECK(store.devices()[0].device == "sim/counter/1");
  CHECK(error_of([&] { store.register_device({"bad", "h", 1, "s"}); }) == Errc::invalid_name);
}

TEST_CASE("backing file survives restart") {
  TempDir dir;
  auto file = dir.path / "props.db";
  {
    PropertyDb store(file);
    store.put("sim/motor/1:velocity", {"12"});
    store.register_device({"sim/motor/1", "localhost", 4100, "deskctl"});
  }
  PropertyDb again(file);
  CHECK(again.get("sim/motor/1:velocity") == PropertyValue{"12"});
  CHECK(again.lookup_device("sim/motor/1") == RegistryEntry{"sim/motor/1", "localhost", 4100, "deskctl"});
  CHECK_FALSE(fs::exists(file.string() + ".tmp"));
}

TEST_CASE("import reports the bad line and leaves the store unchanged") {
  TempDir dir;
  auto snap = dir.path / "snap.txt";
  {
    std::ofstream out(snap);
    out << "a/b:c\t1\n"
        << "not a line\n";
  }
  PropertyDb store;
  store.put("x/y:z", {"keep"});
  try {
    store.import_snapshot(snap);
    FAIL("import should fail");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::malformed_snapshot);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK(store.get("x/y:z") == PropertyValue{"keep"});
  CHECK_FALSE(store.get("a/b:c"));
}

TEST_CASE("property: export then import is the identity") {
  TempDir dir;
  std::mt19937 rng(99);
  const std::string seg = "abcdefghijklmnopqrstuvwxyz0123456789_-";
  const std::string val = "abc XYZ 019 .,;:/\\\"'{}[]()=+*&^%$#@!~`|<>?";
  for (int trial = 0; trial < 30; ++trial) {
    PropertyDb store;
    std::map<std::string, PropertyValue> model;
    std::size_t n = 1 + rng() % 40;
    for (std::size_t i = 0; i < n; ++i) {
      std::string key = random_token(rng, seg, 6) + "/" + random_token(rng, seg, 6) + ":" + random_token(rng, seg, 8);
      PropertyValue v;
      std::size_t parts = 1 + rng() % 4;
      for (std::size_t p = 0; p < parts; ++p) v.push_back(rng() % 5 == 0 ? std::string() : random_token(rng, val, 12));
      store.put(key, v);
      model[key] = v;
    }
    auto snap = dir.path / ("s" + std::to_string(trial));
    store.export_snapshot(snap);
    PropertyDb fresh;
    fresh.put("zz/zz:stale", {"gone"});
    fresh.import_snapshot(snap);
    REQUIRE(fresh.entries() == model);
  }
}
