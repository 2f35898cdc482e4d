#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "brwlab/errors.hpp"

namespace brwlab {

// ---------------------------------------------------------------------------
// RFC 4180 CSV writing.
// ---------------------------------------------------------------------------

inline std::string csv_quote(const std::string& field) {
  bool needs = field.find_first_of(",\"\r\n") != std::string::npos;
  if (!needs) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : columns_(std::move(header)) {
    write_row(columns_);
  }

  void write_row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) buffer_ += ',';
      buffer_ += csv_quote(fields[i]);
    }
    buffer_ += "\r\n";
  }

  template <class... Ts>
  void row(const Ts&... vals) {
    std::vector<std::string> fields;
    (fields.push_back(to_field(vals)), ...);
    write_row(fields);
  }

  const std::string& str() const { return buffer_; }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(errc::bad_config, "cannot write csv: " + path);
    out << buffer_;
  }

 private:
  static std::string to_field(const std::string& s) { return s; }
  static std::string to_field(const char* s) { return s; }
  static std::string to_field(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  }
  static std::string to_field(std::uint64_t v) { return std::to_string(v); }
  static std::string to_field(std::int64_t v) { return std::to_string(v); }
  static std::string to_field(int v) { return std::to_string(v); }
  static std::string to_field(unsigned v) { return std::to_string(v); }

  std::vector<std::string> columns_;
  std::string buffer_;
};

/// FNV-1a 64-bit content hash, the manifest's file fingerprint.
inline std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

/// Run manifest: configuration hash, seed, outputs with content hashes.
class RunManifest {
 public:
  RunManifest(std::string command, std::string config_dump, std::uint64_t seed)
      : command_(std::move(command)), config_hash_(hash_hex(fnv1a64(config_dump))), seed_(seed) {}

  void add_output(const std::string& name, const std::string& content) {
    outputs_[name] = hash_hex(fnv1a64(content));
  }

  nlohmann::json json() const {
    nlohmann::json j;
    j["command"] = command_;
    j["config_hash"] = config_hash_;
    j["seed"] = seed_;
    j["version"] = "0.1.0";
    j["outputs"] = outputs_;
    return j;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) fail(errc::bad_config, "cannot write manifest: " + path);
    out << json().dump(2) << "\n";
  }

 private:
  std::string command_;
  std::string config_hash_;
  std::uint64_t seed_;
  std::map<std::string, std::string> outputs_;
};

// ---------------------------------------------------------------------------
// Deterministic data parallelism: results land in trial order regardless of
// the worker count, so merged output is bit-identical for any --threads.
// ---------------------------------------------------------------------------

template <class Result, class Fn>
std::vector<Result> parallel_map(std::size_t count, unsigned threads, Fn&& fn) {
  std::vector<Result> results(count);
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) results[i] = fn(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      results[i] = fn(i);
    }
  };
  std::vector<std::thread> pool;
  const unsigned n_threads = std::min<unsigned>(threads, static_cast<unsigned>(count));
  pool.reserve(n_threads);
  for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return results;
}

}  // namespace brwlab
