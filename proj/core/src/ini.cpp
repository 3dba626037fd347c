#include "gim/ini.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "gim/csv.hpp"
#include "gim/error.hpp"

namespace gim::ini {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

Document Document::parse(std::istream& in, const std::string& source) {
  Document doc;
  doc.source_ = source;
  std::string section;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = raw;
    if (auto c = s.find_first_of("#;"); c != std::string::npos) s.erase(c);
    s = trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw RowError(source, line, "malformed section header '" + s + "'");
      section = trim(s.substr(1, s.size() - 2));
      if (section.empty()) throw RowError(source, line, "empty section name");
      doc.sections_[section];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw RowError(source, line, "expected key=value, got '" + s + "'");
    const std::string key = trim(s.substr(0, eq));
    if (key.empty()) throw RowError(source, line, "empty key");
    auto& sec = doc.sections_[section];
    if (sec.count(key)) {
      throw RowError(source, line,
                     "duplicate key '" + (section.empty() ? key : section + "." + key) + "' (first on line " +
                         std::to_string(sec[key].line) + ")");
    }
    sec[key] = Entry{trim(s.substr(eq + 1)), line};
  }
  return doc;
}

Document Document::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return parse(in, path);
}

const Entry* Document::find(const std::string& section, const std::string& key) const {
  auto s = sections_.find(section);
  if (s == sections_.end()) return nullptr;
  auto k = s->second.find(key);
  return k == s->second.end() ? nullptr : &k->second;
}

void Document::reject_unknown(const std::set<std::string>& allowed) const {
  for (const auto& [section, keys] : sections_) {
    for (const auto& [key, entry] : keys) {
      const std::string full = section.empty() ? key : section + "." + key;
      if (!allowed.count(full)) {
        throw UsageError(source_ + ":" + std::to_string(entry.line) + ": unknown key '" + full + "'");
      }
    }
  }
}

void Document::fail(const Entry& e, const std::string& section, const std::string& key,
                    const std::string& what) const {
  throw UsageError(source_ + ":" + std::to_string(e.line) + ": " + section + "." + key + ": " + what + " '" +
                   e.value + "'");
}

std::optional<std::string> Document::get_string(const std::string& section, const std::string& key) const {
  const Entry* e = find(section, key);
  if (!e) return std::nullopt;
  return e->value;
}

std::optional<double> Document::get_double(const std::string& section, const std::string& key) const {
  const Entry* e = find(section, key);
  if (!e) return std::nullopt;
  auto v = csv::parse_double(e->value);
  if (!v) fail(*e, section, key, "expected a number, got");
  return v;
}

std::optional<long long> Document::get_int(const std::string& section, const std::string& key) const {
  const Entry* e = find(section, key);
  if (!e) return std::nullopt;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(e->value, &used);
    if (used != e->value.size()) fail(*e, section, key, "expected an integer, got");
    return v;
  } catch (const std::logic_error&) {
    fail(*e, section, key, "expected an integer, got");
  }
}

std::optional<bool> Document::get_bool(const std::string& section, const std::string& key) const {
  const Entry* e = find(section, key);
  if (!e) return std::nullopt;
  std::string v = e->value;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(*e, section, key, "expected a boolean, got");
}

std::optional<std::vector<double>> Document::get_doubles(const std::string& section, const std::string& key) const {
  const Entry* e = find(section, key);
  if (!e) return std::nullopt;
  std::vector<double> out;
  std::stringstream ss(e->value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto v = csv::parse_double(trim(item));
    if (!v) fail(*e, section, key, "expected a comma-separated list of numbers, got");
    out.push_back(*v);
  }
  return out;
}

void Document::set(const std::string& section, const std::string& key, const std::string& value) {
  auto& entry = sections_[section][key];
  entry.value = value;
}

}  // namespace gim::ini
