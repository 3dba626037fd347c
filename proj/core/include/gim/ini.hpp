#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace gim::ini {

struct Entry {
  std::string value;
  std::size_t line = 0;
};

/// Sectioned key=value text: "[section]" headers, '#' or ';' comments.
/// Keys before any header live in section "".
class Document {
 public:
  static Document parse(std::istream& in, const std::string& source);
  static Document parse_file(const std::string& path);

  const std::string& source() const { return source_; }
  const Entry* find(const std::string& section, const std::string& key) const;
  bool has_section(const std::string& section) const { return sections_.count(section) != 0; }
  const std::map<std::string, std::map<std::string, Entry>>& sections() const { return sections_; }

  /// Throws UsageError naming file and line for any key not in `allowed`
  /// (entries are "section.key").
  void reject_unknown(const std::set<std::string>& allowed) const;

  std::optional<std::string> get_string(const std::string& section, const std::string& key) const;
  std::optional<double> get_double(const std::string& section, const std::string& key) const;
  std::optional<long long> get_int(const std::string& section, const std::string& key) const;
  std::optional<bool> get_bool(const std::string& section, const std::string& key) const;
  std::optional<std::vector<double>> get_doubles(const std::string& section, const std::string& key) const;

  void set(const std::string& section, const std::string& key, const std::string& value);

 private:
  [[noreturn]] void fail(const Entry& e, const std::string& section, const std::string& key,
                         const std::string& what) const;

  std::string source_;
  std::map<std::string, std::map<std::string, Entry>> sections_;
};

std::string trim(const std::string& s);

}  // namespace gim::ini
