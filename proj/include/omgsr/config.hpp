#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "omgsr/schedule.hpp"

namespace omgsr {

// Flat `section.key = value` text config. Blank lines are ignored and '#'
// starts a comment (whole-line or trailing); later duplicates win.
class Config {
 public:
  Config() = default;

  static Config parse(std::istream& is) {
    Config cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": expected key = value");
      cfg.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return cfg;
  }

  static Config load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    return parse(is);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_str(const std::string& key, const std::string& dflt) const {
    auto it = values_.find(key);
    return it == values_.end() ? dflt : it->second;
  }

  long get_int(const std::string& key, long dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    std::size_t pos = 0;
    const long v = std::stol(it->second, &pos);
    if (pos != it->second.size())
      throw std::invalid_argument("config: " + key + " is not an integer");
    return v;
  }

  double get_real(const std::string& key, double dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size())
      throw std::invalid_argument("config: " + key + " is not a number");
    return v;
  }

  bool get_bool(const std::string& key, bool dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw std::invalid_argument("config: " + key + " is not a boolean");
  }

  void set(const std::string& key, const std::string& value) {
    values_[key] = value;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  std::map<std::string, std::string> values_;
};

template <typename S>
ScheduleConfig<S> schedule_from_config(const Config& cfg) {
  ScheduleConfig<S> s;
  const auto kind = cfg.get_str("scheduler.kind", "ddpm");
  if (kind == "ddpm")
    s.kind = SchedulerKind::Ddpm;
  else if (kind == "fm")
    s.kind = SchedulerKind::Fm;
  else
    throw std::invalid_argument("config: scheduler.kind must be ddpm or fm");
  s.num_steps = static_cast<int>(cfg.get_int("scheduler.num_steps", s.num_steps));
  s.beta_start = static_cast<S>(cfg.get_real("scheduler.beta_start", s.beta_start));
  s.beta_end = static_cast<S>(cfg.get_real("scheduler.beta_end", s.beta_end));
  s.shift = static_cast<S>(cfg.get_real("scheduler.shift", s.shift));
  return s;
}

}  // namespace omgsr
