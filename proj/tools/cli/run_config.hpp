#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace gim::cli {

struct KeyDef {
  std::string section;
  std::string key;
  std::string default_value;
  std::string help;
  std::vector<std::string> commands;  // subcommands that read this key

  std::string name() const { return section + "." + key; }
  std::string flag() const { return "--" + name(); }
};

const std::vector<KeyDef>& key_table();

/// Effective configuration: embedded defaults, then a config file, then flags.
class RunConfig {
 public:
  RunConfig();

  void apply_file(const std::string& path);
  void apply_flag(const std::string& name, const std::string& value);

  const std::string& text(const std::string& name) const;
  const std::string& origin(const std::string& name) const;
  /// "--paths.events (set at run.ini:3)" style reference used in error messages.
  std::string where(const std::string& name) const;

  std::string string(const std::string& name) const { return text(name); }
  double number(const std::string& name) const;
  long long integer(const std::string& name, long long min_value = 0) const;
  std::uint64_t seed(const std::string& name) const;
  bool boolean(const std::string& name) const;
  std::vector<long long> integers(const std::string& name, long long min_value = 1) const;

  void dump(std::ostream& out) const;
  /// FNV-1a over every key outside [run].
  std::uint64_t hash() const;

 private:
  struct Value {
    std::string text;
    std::string origin;
  };
  Value& slot(const std::string& name);
  [[noreturn]] void bad(const std::string& name, const std::string& expected) const;

  std::map<std::string, Value> values_;
};

std::uint64_t fnv1a(const std::string& data);

}  // namespace gim::cli
