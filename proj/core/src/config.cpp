#include "cdi/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "cdi/errors.hpp"

namespace cdi {
namespace {

std::string trim(const std::string& s) {
  size_t b = 0;
  size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

KvFile KvFile::parse_text(const std::string& text) {
  KvFile kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw DataError("kv parse: missing '=' on line " + std::to_string(line_no));
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty())
      throw DataError("kv parse: empty key on line " + std::to_string(line_no));
    kv.entries_.emplace_back(key, value);
  }
  return kv;
}

KvFile KvFile::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open for reading: " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  try {
    return parse_text(buf.str());
  } catch (const DataError& e) {
    throw DataError(std::string(e.what()) + " in " + path.string());
  }
}

void KvFile::save(const std::filesystem::path& path) const {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f << to_text();
  if (!f) throw DataError("short write: " + path.string());
}

std::string KvFile::to_text() const {
  std::ostringstream out;
  for (const auto& [k, v] : entries_) out << k << " = " << v << "\n";
  return out.str();
}

bool KvFile::has(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return true;
  return false;
}

const std::string& KvFile::get(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  throw DataError("missing key: " + key);
}

std::string KvFile::get_or(const std::string& key,
                           const std::string& fallback) const {
  return has(key) ? get(key) : fallback;
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last)
    throw DataError("key '" + key + "': cannot parse number from '" + value + "'");
  return out;
}

}  // namespace

int KvFile::get_int(const std::string& key) const {
  return parse_number<int>(key, get(key));
}
int KvFile::get_int_or(const std::string& key, int fallback) const {
  return has(key) ? get_int(key) : fallback;
}
std::uint64_t KvFile::get_u64(const std::string& key) const {
  return parse_number<std::uint64_t>(key, get(key));
}
std::uint64_t KvFile::get_u64_or(const std::string& key,
                                 std::uint64_t fallback) const {
  return has(key) ? get_u64(key) : fallback;
}

double KvFile::get_double(const std::string& key) const {
  const std::string& value = get(key);
  try {
    size_t used = 0;
    const double out = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return out;
  } catch (const std::exception&) {
    throw DataError("key '" + key + "': cannot parse number from '" + value + "'");
  }
}
double KvFile::get_double_or(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

bool KvFile::get_bool_or(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw DataError("key '" + key + "': cannot parse bool from '" + v + "'");
}

void KvFile::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

void KvFile::set_int(const std::string& key, long long value) {
  set(key, std::to_string(value));
}
void KvFile::set_u64(const std::string& key, std::uint64_t value) {
  set(key, std::to_string(value));
}
void KvFile::set_double(const std::string& key, double value) {
  std::ostringstream out;
  out.precision(17);
  out << value;
  set(key, out.str());
}

}  // namespace cdi
