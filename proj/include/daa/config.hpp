#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "daa/common.hpp"

namespace daa {

// Flat key = value configuration (one pair per line, '#' comments). Keys are
// namespaced with dots (res.full_w, sim.sigma_g, train.epochs, ...). Values
// stay strings until a typed getter is called; unknown keys are rejected only
// by callers that enumerate their namespace.
class KvConfig {
 public:
  KvConfig() = default;

  static KvConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // Later entries win; used to overlay a config file on defaults and CLI
  // flags on both.
  void merge(const KvConfig& other);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set_int(const std::string& key, int64_t v);
  void set_double(const std::string& key, double v);

  std::string get_str(const std::string& key, const std::string& dflt) const;
  int64_t get_int(const std::string& key, int64_t dflt) const;
  double get_double(const std::string& key, double dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace daa
