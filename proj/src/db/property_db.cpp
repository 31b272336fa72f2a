#include "deskctl/db/property_db.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <sstream>

#include "deskctl/error.hpp"

namespace deskctl::db {

namespace {

constexpr char kUnitSeparator = '\x1f';
constexpr std::string_view kRegistryPrefix = "registry/";
constexpr std::string_view kRegistryProperty = ":endpoint";

bool segment_char(char c) noexcept {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
}

bool valid_segments(std::string_view path) noexcept {
  if (path.empty()) return false;
  std::size_t start = 0;
  while (true) {
    auto end = path.find('/', start);
    auto seg = path.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    if (seg.empty() || !std::all_of(seg.begin(), seg.end(), segment_char)) return false;
    if (end == std::string_view::npos) return true;
    start = end + 1;
  }
}

void check_value(const std::string& key, const PropertyValue& value) {
  if (value.empty()) throw Error(Errc::bad_value, key + ": empty value list");
  for (const auto& v : value) {
    if (v.find_first_of(std::string("\t\r\n") + kUnitSeparator) != std::string::npos) {
      throw Error(Errc::bad_value, key + ": value contains a reserved character");
    }
  }
}

}  // namespace

bool is_valid_key(std::string_view key) noexcept {
  auto colon = key.find(':');
  if (colon == std::string_view::npos || key.find(':', colon + 1) != std::string_view::npos) return false;
  auto prop = key.substr(colon + 1);
  return valid_segments(key.substr(0, colon)) && !prop.empty() &&
         std::all_of(prop.begin(), prop.end(), segment_char);
}

bool is_valid_device_name(std::string_view name) noexcept {
  return valid_segments(name) && std::count(name.begin(), name.end(), '/') == 2;
}

std::string encode_line(const std::string& key, const PropertyValue& value) {
  std::string line = key;
  line += '\t';
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (i) line += kUnitSeparator;
    line += value[i];
  }
  return line;
}

std::pair<std::string, PropertyValue> decode_line(std::string_view line, std::size_t line_number) {
  auto where = "line " + std::to_string(line_number);
  auto tab = line.find('\t');
  if (tab == std::string_view::npos) throw Error(Errc::malformed_snapshot, where + ": missing separator");
  std::string key(line.substr(0, tab));
  if (!is_valid_key(key)) throw Error(Errc::malformed_snapshot, where + ": invalid key '" + key + "'");
  PropertyValue value;
  auto rest = line.substr(tab + 1);
  if (rest.find('\t') != std::string_view::npos) {
    throw Error(Errc::malformed_snapshot, where + ": extra separator");
  }
  std::size_t start = 0;
  while (true) {
    auto end = rest.find(kUnitSeparator, start);
    value.emplace_back(rest.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return {std::move(key), std::move(value)};
}

PropertyDb::PropertyDb(std::filesystem::path backing) : backing_(std::move(backing)) {
  if (std::filesystem::exists(*backing_)) data_ = read_file(*backing_);
}

void PropertyDb::put(const std::string& key, PropertyValue value) {
  if (!is_valid_key(key)) throw Error(Errc::invalid_key, key);
  check_value(key, value);
  std::unique_lock lock(mutex_);
  data_[key] = std::move(value);
  persist_locked();
}

std::optional<PropertyValue> PropertyDb::get(const std::string& key) const {
  if (!is_valid_key(key)) throw Error(Errc::invalid_key, key);
  std::shared_lock lock(mutex_);
  auto it = data_.find(key);
  if (it == data_.end()) return std::nullopt;
  return it->second;
}

void PropertyDb::remove(const std::string& key) {
  if (!is_valid_key(key)) throw Error(Errc::invalid_key, key);
  std::unique_lock lock(mutex_);
  if (data_.erase(key)) persist_locked();
}

std::vector<std::string> PropertyDb::keys_with_prefix(std::string_view prefix) const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> keys;
  for (auto it = data_.lower_bound(std::string(prefix)); it != data_.end(); ++it) {
    if (it->first.compare(0, prefix.size(), prefix) != 0) break;
    keys.push_back(it->first);
  }
  return keys;
}

std::map<std::string, PropertyValue> PropertyDb::entries() const {
  std::shared_lock lock(mutex_);
  return data_;
}

void PropertyDb::register_device(const RegistryEntry& entry) {
  if (!is_valid_device_name(entry.device)) throw Error(Errc::invalid_name, entry.device);
  put(std::string(kRegistryPrefix) + entry.device + std::string(kRegistryProperty),
      {entry.host, std::to_string(entry.port), entry.server});
}

std::optional<RegistryEntry> PropertyDb::lookup_device(const std::string& name) const {
  if (!is_valid_device_name(name)) throw Error(Errc::invalid_name, name);
  auto v = get(std::string(kRegistryPrefix) + name + std::string(kRegistryProperty));
  if (!v || v->size() != 3) return std::nullopt;
  RegistryEntry e{name, (*v)[0], 0, (*v)[2]};
  try {
    e.port = static_cast<std::uint16_t>(std::stoul((*v)[1]));
  } catch (const std::exception&) {
    return std::nullopt;
  }
  return e;
}

std::vector<RegistryEntry> PropertyDb::devices() const {
  std::vector<RegistryEntry> out;
  for (const auto& key : keys_with_prefix(kRegistryPrefix)) {
    if (!key.ends_with(kRegistryProperty)) continue;
    auto name = key.substr(kRegistryPrefix.size(), key.size() - kRegistryPrefix.size() - kRegistryProperty.size());
    if (!is_valid_device_name(name)) continue;
    if (auto e = lookup_device(name)) out.push_back(*e);
  }
  return out;
}

void PropertyDb::export_snapshot(const std::filesystem::path& path) const {
  std::shared_lock lock(mutex_);
  write_file(path, data_);
}

void PropertyDb::import_snapshot(const std::filesystem::path& path) {
  auto loaded = read_file(path);
  std::unique_lock lock(mutex_);
  data_ = std::move(loaded);
  persist_locked();
}

void PropertyDb::persist_locked() const {
  if (!backing_) return;
  auto tmp = *backing_;
  tmp += ".tmp";
  write_file(tmp, data_);
  std::error_code ec;
  std::filesystem::rename(tmp, *backing_, ec);
  if (ec) throw Error(Errc::io_error, backing_->string() + ": " + ec.message());
}

std::map<std::string, PropertyValue> PropertyDb::read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
  std::map<std::string, PropertyValue> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    auto [key, value] = decode_line(line, number);
    out[std::move(key)] = std::move(value);
  }
  if (in.bad()) throw Error(Errc::io_error, "read failed: " + path.string());
  return out;
}

void PropertyDb::write_file(const std::filesystem::path& path,
                            const std::map<std::string, PropertyValue>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  for (const auto& [key, value] : data) out << encode_line(key, value) << '\n';
  out.flush();
  if (!out) throw Error(Errc::io_error, "write failed: " + path.string());
}

}  // namespace deskctl::db
