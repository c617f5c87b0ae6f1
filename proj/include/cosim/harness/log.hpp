#pragma once

// Per-tick experiment log: one CSV row per active vehicle per planner tick.

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cosim/error.hpp"

namespace cosim::harness {

inline constexpr std::string_view kLogHeader = "t,vehicle_id,p,x,y,yaw,v,u_d,steer,gas,brake,handbrake";

struct LogRecord {
  double t = 0.0;
  int vehicle_id = 0;
  double p = 0.0;
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
  double v = 0.0;
  double u_d = 0.0;
  double steer = 0.0;
  double gas = 0.0;
  double brake = 0.0;
  int handbrake = 0;

  friend bool operator==(const LogRecord&, const LogRecord&) = default;
};

class CorruptLog : public Error {
 public:
  CorruptLog(std::size_t line, const std::string& what)
      : Error("log line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Shortest decimal text that reads back to the same double.
inline std::string format_number(double v) {
  if (v == 0.0) v = 0.0;  // drop the sign of -0
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string format_record(const LogRecord& r) {
  std::string out;
  out.reserve(160);
  out += format_number(r.t);
  out += ',';
  out += std::to_string(r.vehicle_id);
  for (double d : {r.p, r.x, r.y, r.yaw, r.v, r.u_d, r.steer, r.gas, r.brake}) {
    out += ',';
    out += format_number(d);
  }
  out += ',';
  out += std::to_string(r.handbrake);
  return out;
}

inline void write_log(std::ostream& out, const std::vector<LogRecord>& records) {
  out << kLogHeader << '\n';
  for (const auto& r : records) out << format_record(r) << '\n';
}

/// Streams records to a file as they are produced.
class LogWriter {
 public:
  explicit LogWriter(const std::string& file) : out_(file), file_(file) {
    if (!out_) throw Error("cannot open log file " + file);
    out_ << kLogHeader << '\n';
  }
  void append(const LogRecord& r) { out_ << format_record(r) << '\n'; }
  void flush() { out_.flush(); }
  const std::string& file() const { return file_; }

 private:
  std::ofstream out_;
  std::string file_;
};

namespace detail {

inline double parse_double(std::string_view field, std::size_t line, const char* name) {
  double v = 0.0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size() || !std::isfinite(v)) {
    throw CorruptLog(line, std::string("bad value for ") + name + ": '" + std::string(field) + "'");
  }
  return v;
}

inline int parse_int(std::string_view field, std::size_t line, const char* name) {
  int v = 0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
    throw CorruptLog(line, std::string("bad value for ") + name + ": '" + std::string(field) + "'");
  }
  return v;
}

}  // namespace detail

/// Reads a log, rejecting a wrong header, malformed or truncated rows, and
/// time going backwards.
inline std::vector<LogRecord> read_log(std::istream& in) {
  std::vector<LogRecord> out;
  std::string line;
  std::size_t n = 0;
  if (!std::getline(in, line)) throw CorruptLog(1, "empty log");
  ++n;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kLogHeader) throw CorruptLog(1, "unexpected header");
  bool ended = false;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      ended = true;
      continue;
    }
    if (ended) throw CorruptLog(n - 1, "blank line inside the log");
    if (in.eof()) throw CorruptLog(n, "truncated row");
    std::vector<std::string_view> fields;
    std::string_view rest = line;
    for (;;) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != 12) {
      throw CorruptLog(n, "expected 12 fields, found " + std::to_string(fields.size()));
    }
    LogRecord r;
    r.t = detail::parse_double(fields[0], n, "t");
    r.vehicle_id = detail::parse_int(fields[1], n, "vehicle_id");
    r.p = detail::parse_double(fields[2], n, "p");
    r.x = detail::parse_double(fields[3], n, "x");
    r.y = detail::parse_double(fields[4], n, "y");
    r.yaw = detail::parse_double(fields[5], n, "yaw");
    r.v = detail::parse_double(fields[6], n, "v");
    r.u_d = detail::parse_double(fields[7], n, "u_d");
    r.steer = detail::parse_double(fields[8], n, "steer");
    r.gas = detail::parse_double(fields[9], n, "gas");
    r.brake = detail::parse_double(fields[10], n, "brake");
    r.handbrake = detail::parse_int(fields[11], n, "handbrake");
    if (r.handbrake != 0 && r.handbrake != 1) throw CorruptLog(n, "handbrake must be 0 or 1");
    if (!out.empty() && r.t < out.back().t) throw CorruptLog(n, "time goes backwards");
    out.push_back(r);
  }
  return out;
}

inline std::vector<LogRecord> read_log_file(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw CorruptLog(0, "cannot open " + file);
  return read_log(in);
}

inline std::vector<LogRecord> parse_log(const std::string& text) {
  std::istringstream in(text);
  return read_log(in);
}

}  // namespace cosim::harness
