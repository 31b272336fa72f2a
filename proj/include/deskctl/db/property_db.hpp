#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

namespace deskctl::db {

/// Ordered list of strings. Values may not contain TAB, CR, LF or the
/// 0x1F unit separator, and may not be empty lists.
using PropertyValue = std::vector<std::string>;

/// `<namespace path>:<property>`, e.g. `sim/motor/1:velocity` or `busmap/0/2:adc8`.
bool is_valid_key(std::string_view key) noexcept;

/// Three segments `domain/family/member`, charset [a-z0-9_-].
bool is_valid_device_name(std::string_view name) noexcept;

struct RegistryEntry {
  std::string device;
  std::string host;
  std::uint16_t port = 0;
  std::string server;

  friend bool operator==(const RegistryEntry&, const RegistryEntry&) = default;
};

/// Snapshot line codec: `key<TAB>v1<US>v2...`.
std::string encode_line(const std::string& key, const PropertyValue& value);
/// Throws Errc::malformed_snapshot with the line number when the line is bad.
std::pair<std::string, PropertyValue> decode_line(std::string_view line, std::size_t line_number);

/// Persistent property store and device registry.
///
/// When constructed with a backing file, the file is loaded on construction
/// and rewritten (write-to-temp then rename) after every put/remove, so an
/// acknowledged write survives a restart.
class PropertyDb {
 public:
  PropertyDb() = default;
  explicit PropertyDb(std::filesystem::path backing);

  PropertyDb(const PropertyDb&) = delete;
  PropertyDb& operator=(const PropertyDb&) = delete;

  void put(const std::string& key, PropertyValue value);
  std::optional<PropertyValue> get(const std::string& key) const;
  void remove(const std::string& key);

  std::vector<std::string> keys_with_prefix(std::string_view prefix) const;
  std::map<std::string, PropertyValue> entries() const;

  void register_device(const RegistryEntry& entry);
  std::optional<RegistryEntry> lookup_device(const std::string& name) const;
  std::vector<RegistryEntry> devices() const;

  /// Sorted by key.
  void export_snapshot(const std::filesystem::path& path) const;
  /// Replaces the current contents with the snapshot's.
  void import_snapshot(const std::filesystem::path& path);

 private:
  void persist_locked() const;
  static std::map<std::string, PropertyValue> read_file(const std::filesystem::path& path);
  static void write_file(const std::filesystem::path& path, const std::map<std::string, PropertyValue>& data);

  mutable std::shared_mutex mutex_;
  std::map<std::string, PropertyValue> data_;
  std::optional<std::filesystem::path> backing_;
};

}  // namespace deskctl::db
