#ifndef NETSYNC_TRACE_HPP_
#define NETSYNC_TRACE_HPP_

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "netsync/channel.hpp"
#include "netsync/graph.hpp"
#include "netsync/scenario.hpp"

namespace netsync {

namespace detail {

/// Git-style content hash: SHA-1 of "blob <size>\0" + payload, hex encoded.
inline std::string content_hash(const std::string& payload) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw std::runtime_error("content_hash: EVP context");
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int digest_len = 0;
  const std::string header = "blob " + std::to_string(payload.size());
  bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
            EVP_DigestUpdate(ctx, header.data(), header.size() + 1) == 1 &&
            EVP_DigestUpdate(ctx, payload.data(), payload.size()) == 1 &&
            EVP_DigestFinal_ex(ctx, digest, &digest_len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("content_hash: digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < digest_len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

inline std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

}  // namespace detail

/// One recorded sample of one agent.
struct AgentSample {
  Eigen::VectorXd p, v, eta, psi, vbar, dvbar, vhat, u, e;
  Eigen::VectorXd theta_hat;  // empty unless the plant is the two-link arm
};

/// Time-indexed record of a run: state samples, the delivered-message log,
/// and (in memory only) the per-slot interaction graphs and estimator values.
struct Trace {
  nlohmann::json scenario_echo;
  int n = 0;
  int m = 0;
  double dt = 0.0;
  double T = 0.0;
  int stride = 1;
  std::vector<double> times;
  std::vector<std::vector<AgentSample>> samples;  // [time][agent]
  std::vector<Message> message_log;               // in delivery order
  std::vector<Digraph> interaction_graphs;        // per slot; not serialized
  std::vector<std::vector<Eigen::VectorXd>> vhat_by_slot;  // not serialized

  bool has_theta() const {
    return !samples.empty() && samples.front().front().theta_hat.size() > 0;
  }
};

namespace detail {

inline void append_vector_columns(std::string& out, const Eigen::VectorXd& v) {
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    out.push_back(',');
    out += format_double(v(k));
  }
}

inline void append_column_names(std::string& out, const std::string& stem, int m) {
  for (int k = 1; k <= m; ++k) out += "," + stem + std::to_string(k);
}

}  // namespace detail

/// Serializes a trace: a one-line JSON header (scenario echo plus a git-style
/// hash of the body), the sample rows, and the message-log section.
inline void emit_trace(const Trace& trace, std::ostream& out) {
  std::string body;
  body.reserve(trace.times.size() * trace.n * 64);

  body += "time,slot,agent";
  const int m = trace.m;
  for (const char* stem : {"p", "v", "eta", "psi", "vbar", "dvbar", "vhat", "u", "e"})
    detail::append_column_names(body, stem, m);
  if (trace.has_theta()) detail::append_column_names(body, "th", 5);
  body.push_back('\n');

  for (size_t row = 0; row < trace.times.size(); ++row) {
    const int slot = static_cast<int>(trace.times[row] / trace.T + 1e-9);
    for (int i = 0; i < trace.n; ++i) {
      const AgentSample& s = trace.samples[row][i];
      body += detail::format_double(trace.times[row]);
      body += ',' + std::to_string(slot);
      body += ',' + std::to_string(i + 1);
      for (const Eigen::VectorXd* v :
           {&s.p, &s.v, &s.eta, &s.psi, &s.vbar, &s.dvbar, &s.vhat, &s.u, &s.e})
        detail::append_vector_columns(body, *v);
      if (trace.has_theta()) detail::append_vector_columns(body, s.theta_hat);
      body.push_back('\n');
    }
  }

  body += "# messages\n";
  body += "sender,receiver,stamp,send_time,delivery_time";
  detail::append_column_names(body, "pos", m);
  detail::append_column_names(body, "est", m);
  body.push_back('\n');
  for (const Message& msg : trace.message_log) {
    body += std::to_string(msg.sender + 1);
    body += ',' + std::to_string(msg.receiver + 1);
    body += ',' + std::to_string(msg.stamp);
    body += ',' + detail::format_double(msg.send_time);
    body += ',' + detail::format_double(msg.delivery_time);
    detail::append_vector_columns(body, msg.position);
    detail::append_vector_columns(body, msg.velocity_estimate);
    body.push_back('\n');
  }

  nlohmann::json header;
  header["format"] = "netsync-trace";
  header["version"] = 1;
  header["n"] = trace.n;
  header["m"] = trace.m;
  header["dt"] = trace.dt;
  header["period"] = trace.T;
  header["stride"] = trace.stride;
  header["hash"] = detail::content_hash(body);
  header["scenario"] = trace.scenario_echo;
  out << "# " << header.dump() << '\n' << body;
}

inline void emit_trace(const Trace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write trace file: " + path);
  emit_trace(trace, out);
}

/// Parses a trace written by emit_trace and verifies the content hash.
/// The in-memory-only fields (interaction graphs, per-slot estimates) are
/// left empty; analyses rebuild what they need from the message log.
inline Trace load_trace(std::istream& in) {
  std::string header_line;
  if (!std::getline(in, header_line) || header_line.rfind("# ", 0) != 0)
    throw std::runtime_error("trace: missing header line");
  nlohmann::json header = nlohmann::json::parse(header_line.substr(2));
  if (header.value("format", "") != "netsync-trace")
    throw std::runtime_error("trace: not a netsync trace file");

  std::stringstream rest;
  rest << in.rdbuf();
  const std::string body = rest.str();
  if (detail::content_hash(body) != header.at("hash").get<std::string>())
    throw std::runtime_error("trace: content hash mismatch");

  Trace trace;
  trace.scenario_echo = header.at("scenario");
  trace.n = header.at("n").get<int>();
  trace.m = header.at("m").get<int>();
  trace.dt = header.at("dt").get<double>();
  trace.T = header.at("period").get<double>();
  trace.stride = header.at("stride").get<int>();

  std::istringstream lines(body);
  std::string line;
  std::getline(lines, line);  // sample column header
  const int m = trace.m;
  bool with_theta = line.find(",th1") != std::string::npos;

  auto split = [](const std::string& text) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream row(text);
    while (std::getline(row, field, ',')) fields.push_back(field);
    return fields;
  };

  while (std::getline(lines, line)) {
    if (line == "# messages") break;
    auto fields = split(line);
    const size_t expected = 3 + 9 * m + (with_theta ? 5 : 0);
    if (fields.size() != expected)
      throw std::runtime_error("trace: malformed sample row");
    const double t = std::stod(fields[0]);
    const int agent = std::stoi(fields[2]) - 1;
    if (trace.times.empty() || trace.times.back() != t) {
      trace.times.push_back(t);
      trace.samples.emplace_back(trace.n);
    }
    AgentSample& s = trace.samples.back().at(agent);
    size_t at = 3;
    auto take = [&](Eigen::VectorXd& v, int count) {
      v.resize(count);
      for (int k = 0; k < count; ++k) v(k) = std::stod(fields[at++]);
    };
    take(s.p, m);
    take(s.v, m);
    take(s.eta, m);
    take(s.psi, m);
    take(s.vbar, m);
    take(s.dvbar, m);
    take(s.vhat, m);
    take(s.u, m);
    take(s.e, m);
    if (with_theta) take(s.theta_hat, 5);
  }

  std::getline(lines, line);  // message column header
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    auto fields = split(line);
    if (fields.size() != static_cast<size_t>(5 + 2 * m))
      throw std::runtime_error("trace: malformed message row");
    Message msg;
    msg.sender = std::stoi(fields[0]) - 1;
    msg.receiver = std::stoi(fields[1]) - 1;
    msg.stamp = std::stoi(fields[2]);
    msg.send_time = std::stod(fields[3]);
    msg.delivery_time = std::stod(fields[4]);
    size_t at = 5;
    msg.position.resize(m);
    for (int k = 0; k < m; ++k) msg.position(k) = std::stod(fields[at++]);
    msg.velocity_estimate.resize(m);
    for (int k = 0; k < m; ++k) msg.velocity_estimate(k) = std::stod(fields[at++]);
    trace.message_log.push_back(std::move(msg));
  }
  return trace;
}

inline Trace load_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trace file: " + path);
  return load_trace(in);
}

}  // namespace netsync

#endif  // NETSYNC_TRACE_HPP_
