#pragma once

// Action inference over HTTP.
//
//   POST /v1/act     ActRequest JSON  -> ActResponse JSON
//   GET  /v1/health  {status, backend, dof, uptime_s, requests}
//
// ActRequest:
//   {"prompt": str, "state": [num...], "chunk_size": int (1..64, default 8),
//    "images": {view: {"media_type": str, "data": base64}}, "request_id": str}
//
// Errors are {"error": {"code": CODE, "message": str}} with status 400 for
// request problems and 500 (carrying "backend") for backend faults.
//
// Also here: the built-in policy backends, a 2-D point-mass ToyEnv and the
// client rollout loop.

#include <sys/socket.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "dexkit/action_codec.hpp"
#include "dexkit/canonical_json.hpp"
#include "dexkit/error.hpp"
#ifndef CPPHTTPLIB_LISTEN_BACKLOG
#define CPPHTTPLIB_LISTEN_BACKLOG 128
#endif
#include "httplib.h"

namespace dexkit::serve {

inline constexpr int kDefaultChunk = 8;
inline constexpr int kMaxChunk = 64;

using Matrix = std::vector<std::vector<double>>;

// ---------------------------------------------------------------------------
// base64 (RFC 4648, padded)

inline std::string base64_encode(std::string_view bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (std::uint32_t(std::uint8_t(bytes[i])) << 16) | (std::uint32_t(std::uint8_t(bytes[i + 1])) << 8) |
                            std::uint8_t(bytes[i + 2]);
    for (int s = 18; s >= 0; s -= 6) out += kAlphabet[(v >> s) & 63];
  }
  if (const auto rest = bytes.size() - i; rest > 0) {
    std::uint32_t v = std::uint32_t(std::uint8_t(bytes[i])) << 16;
    if (rest == 2) v |= std::uint32_t(std::uint8_t(bytes[i + 1])) << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

/// Strict decode: length a multiple of 4, padding only at the end, no
/// whitespace, zero trailing bits.
inline std::optional<std::string> base64_decode(std::string_view text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) return std::nullopt;
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    const bool last = i + 4 == text.size();
    int v[4];
    int pad = 0;
    for (int j = 0; j < 4; ++j) {
      const char c = text[i + static_cast<std::size_t>(j)];
      if (c == '=' && last && j >= 2) {
        v[j] = 0;
        ++pad;
        continue;
      }
      if (pad > 0) return std::nullopt;
      v[j] = value(c);
      if (v[j] < 0) return std::nullopt;
    }
    const std::uint32_t bits = (std::uint32_t(v[0]) << 18) | (std::uint32_t(v[1]) << 12) | (std::uint32_t(v[2]) << 6) | std::uint32_t(v[3]);
    if (pad == 2 && (bits & 0xFFFF) != 0) return std::nullopt;
    if (pad == 1 && (bits & 0xFF) != 0) return std::nullopt;
    out += static_cast<char>(bits >> 16);
    if (pad < 2) out += static_cast<char>((bits >> 8) & 0xFF);
    if (pad < 1) out += static_cast<char>(bits & 0xFF);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Backend contract

struct ImageMeta {
  std::string media_type;
  std::size_t byte_size = 0;
};

struct ActInput {
  std::string prompt;
  std::vector<double> state;
  std::map<std::string, ImageMeta> images;
};

/// Thrown by a backend that cannot serve a well-formed request (for example a
/// prompt it does not understand). Maps to HTTP 400.
struct UnsupportedInput : Error {
  explicit UnsupportedInput(const std::string& msg) : Error(ErrorCode::BadRequest, msg) {}
};

/// act() must be pure: the same input always yields the same matrix, and
/// concurrent calls must be safe.
class PolicyBackend {
 public:
  virtual ~PolicyBackend() = default;
  virtual std::string name() const = 0;
  virtual int dof() const = 0;
  virtual Matrix act(const ActInput& input, int chunk_size) const = 0;
};

class ZeroBackend : public PolicyBackend {
 public:
  explicit ZeroBackend(int dof = 7) : dof_(dof) {
    if (dof < 1) throw Error(ErrorCode::BadConfig, "dof must be positive");
  }
  std::string name() const override { return "zero"; }
  int dof() const override { return dof_; }
  Matrix act(const ActInput&, int chunk_size) const override {
    return Matrix(static_cast<std::size_t>(chunk_size), std::vector<double>(static_cast<std::size_t>(dof_), 0.0));
  }

 private:
  int dof_;
};

/// Parses "reach X Y" and emits k*(goal - state) for the first two dims,
/// repeated for every row of the chunk (zero-order hold). Extra dims are 0.
class PControlBackend : public PolicyBackend {
 public:
  explicit PControlBackend(double gain = 1.0, int dof = 2) : gain_(gain), dof_(dof) {
    if (dof < 2) throw Error(ErrorCode::BadConfig, "pcontrol needs dof >= 2");
    if (!std::isfinite(gain)) throw Error(ErrorCode::BadConfig, "pcontrol gain must be finite");
  }
  std::string name() const override { return "pcontrol"; }
  int dof() const override { return dof_; }

  static std::optional<std::array<double, 2>> parse_goal(const std::string& prompt) {
    std::istringstream in(prompt);
    std::string verb, xs, ys, extra;
    if (!(in >> verb >> xs >> ys) || verb != "reach" || (in >> extra)) return std::nullopt;
    std::array<double, 2> goal{};
    for (int i = 0; i < 2; ++i) {
      const auto& s = i == 0 ? xs : ys;
      char* end = nullptr;
      goal[static_cast<std::size_t>(i)] = std::strtod(s.c_str(), &end);
      if (end != s.c_str() + s.size() || !std::isfinite(goal[static_cast<std::size_t>(i)])) return std::nullopt;
    }
    return goal;
  }

  Matrix act(const ActInput& input, int chunk_size) const override {
    const auto goal = parse_goal(input.prompt);
    if (!goal) throw UnsupportedInput("pcontrol expects a prompt of the form 'reach X Y'");
    if (input.state.size() < 2) throw UnsupportedInput("pcontrol needs a state with at least 2 dims");
    std::vector<double> row(static_cast<std::size_t>(dof_), 0.0);
    row[0] = gain_ * ((*goal)[0] - input.state[0]);
    row[1] = gain_ * ((*goal)[1] - input.state[1]);
    return Matrix(static_cast<std::size_t>(chunk_size), row);
  }

 private:
  double gain_;
  int dof_;
};

/// Serves a recorded token chunk, dequantized through its action space.
/// File: {"space": <action space>, "tokens": [[id...], ...]}. Row i of a
/// response is recorded step i modulo the recording length.
class ReplayBackend : public PolicyBackend {
 public:
  explicit ReplayBackend(const codec::ActionChunk& chunk) : chunk_(chunk) {
    if (chunk_.steps.empty()) throw Error(ErrorCode::BadConfig, "replay chunk is empty");
  }
  static ReplayBackend from_file(const std::filesystem::path& path) {
    const Json j = read_json_file(path);
    try {
      const auto space = codec::action_space_from_json(j.at("space"));
      return ReplayBackend(codec::dequantize_chunk(j.at("tokens").get<std::vector<std::vector<codec::TokenId>>>(), space));
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::BadConfig, path.string() + ": " + e.what());
    }
  }
  std::string name() const override { return "replay"; }
  int dof() const override { return static_cast<int>(chunk_.space.dims()); }
  Matrix act(const ActInput&, int chunk_size) const override {
    Matrix out;
    for (int i = 0; i < chunk_size; ++i) out.push_back(chunk_.steps[static_cast<std::size_t>(i) % chunk_.steps.size()]);
    return out;
  }

 private:
  codec::ActionChunk chunk_;
};

// ---------------------------------------------------------------------------
// Request handling (transport independent)

struct HttpReply {
  int status = 200;
  Json body;
};

namespace detail {

inline HttpReply fail(int status, std::string_view code, const std::string& message) {
  return {status, {{"error", {{"code", std::string(code)}, {"message", message}}}}};
}

}  // namespace detail

/// Validates an ActRequest body into a backend input and chunk size, or
/// returns the 400 reply.
inline std::variant<std::pair<ActInput, int>, HttpReply> parse_act_request(std::string_view body, std::optional<std::string>* request_id) {
  using detail::fail;
  Json j;
  try {
    j = Json::parse(body);
  } catch (const Json::parse_error& e) {
    return fail(400, "MALFORMED_JSON", e.what());
  }
  if (!j.is_object()) return fail(400, "BAD_TYPE", "request must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "prompt" && key != "state" && key != "chunk_size" && key != "images" && key != "request_id") {
      return fail(400, "UNKNOWN_FIELD", "unknown field '" + key + "'");
    }
  }

  if (auto id = j.find("request_id"); id != j.end()) {
    if (!id->is_string()) return fail(400, "BAD_TYPE", "request_id must be a string");
    if (request_id) *request_id = id->get<std::string>();
  }

  ActInput input;
  auto prompt = j.find("prompt");
  if (prompt == j.end()) return fail(400, "MISSING_FIELD", "missing field 'prompt'");
  if (!prompt->is_string()) return fail(400, "BAD_TYPE", "prompt must be a string");
  input.prompt = prompt->get<std::string>();

  if (auto state = j.find("state"); state != j.end()) {
    if (!state->is_array()) return fail(400, "BAD_TYPE", "state must be an array of numbers");
    for (const auto& x : *state) {
      if (!x.is_number()) return fail(400, "BAD_TYPE", "state must be an array of numbers");
      const double v = x.get<double>();
      if (!std::isfinite(v)) return fail(400, "BAD_TYPE", "state values must be finite");
      input.state.push_back(v);
    }
  }

  int chunk = kDefaultChunk;
  if (auto c = j.find("chunk_size"); c != j.end()) {
    if (!c->is_number_integer()) return fail(400, "BAD_TYPE", "chunk_size must be an integer");
    const auto v = c->is_number_unsigned() ? static_cast<std::int64_t>(std::min<std::uint64_t>(c->get<std::uint64_t>(), 1u << 30))
                                           : c->get<std::int64_t>();
    if (v < 1 || v > kMaxChunk) {
      return fail(400, "CHUNK_SIZE_OUT_OF_RANGE", "chunk_size must be in [1, " + std::to_string(kMaxChunk) + "], got " + std::to_string(v));
    }
    chunk = static_cast<int>(v);
  }

  if (auto images = j.find("images"); images != j.end()) {
    if (!images->is_object()) return fail(400, "BAD_TYPE", "images must be an object");
    for (const auto& [view, img] : images->items()) {
      if (view.empty()) return fail(400, "BAD_IMAGE", "empty view name");
      if (!img.is_object()) return fail(400, "BAD_IMAGE", "image '" + view + "' must be an object");
      auto media = img.find("media_type");
      auto data = img.find("data");
      if (media == img.end() || data == img.end()) return fail(400, "MISSING_FIELD", "image '" + view + "' needs media_type and data");
      if (!media->is_string() || media->get_ref<const std::string&>().empty() || !data->is_string()) {
        return fail(400, "BAD_IMAGE", "image '" + view + "' media_type and data must be non-empty strings");
      }
      for (const auto& [key, _] : img.items()) {
        if (key != "media_type" && key != "data") return fail(400, "UNKNOWN_FIELD", "unknown field '" + key + "' in image '" + view + "'");
      }
      const auto bytes = base64_decode(data->get_ref<const std::string&>());
      if (!bytes) return fail(400, "BAD_BASE64", "image '" + view + "' data is not valid base64");
      input.images[view] = {media->get<std::string>(), bytes->size()};
    }
  }

  if (input.images.empty() && input.state.empty()) return fail(400, "EMPTY_OBSERVATION", "request needs at least one image or a state");
  return std::pair{std::move(input), chunk};
}

/// Full /v1/act handling: validation, backend call, shape and finiteness check.
inline HttpReply handle_act(const PolicyBackend& backend, std::string_view body) {
  const auto start = std::chrono::steady_clock::now();
  std::optional<std::string> request_id;
  auto parsed = parse_act_request(body, &request_id);
  if (auto* reply = std::get_if<HttpReply>(&parsed)) return *reply;
  auto& [input, chunk] = std::get<std::pair<ActInput, int>>(parsed);

  auto fault = [&](const std::string& msg) {
    auto r = detail::fail(500, "BACKEND_FAULT", "backend '" + backend.name() + "': " + msg);
    r.body["error"]["backend"] = backend.name();
    return r;
  };

  Matrix actions;
  try {
    actions = backend.act(input, chunk);
  } catch (const UnsupportedInput& e) {
    return detail::fail(400, "UNSUPPORTED_INPUT", e.detail());
  } catch (const std::exception& e) {
    return fault(e.what());
  } catch (...) {
    return fault("unknown exception");
  }

  const auto dof = static_cast<std::size_t>(backend.dof());
  if (actions.size() != static_cast<std::size_t>(chunk)) {
    return fault("returned " + std::to_string(actions.size()) + " rows for chunk_size " + std::to_string(chunk));
  }
  for (const auto& row : actions) {
    if (row.size() != dof) return fault("returned a row of " + std::to_string(row.size()) + " values, declared dof " + std::to_string(dof));
    for (double v : row) {
      if (!std::isfinite(v)) return fault("returned a non-finite action value");
    }
  }

  const double latency = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  Json out = {{"actions", actions}, {"dof", backend.dof()}, {"backend", backend.name()}, {"latency_ms", latency}, {"chunk_size", chunk}};
  if (request_id) out["request_id"] = *request_id;
  return {200, std::move(out)};
}

// ---------------------------------------------------------------------------
// HTTP gateway

struct GatewayOptions {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 picks a free port
};

class Gateway {
 public:
  Gateway(std::shared_ptr<const PolicyBackend> backend, GatewayOptions options = {})
      : backend_(std::move(backend)), options_(std::move(options)) {
    if (!backend_) throw Error(ErrorCode::BadConfig, "gateway needs a backend");
    // SO_REUSEPORT (the library default) would let a second server share the port silently
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    server_.set_tcp_nodelay(true);
    server_.Post("/v1/act", [this](const httplib::Request& req, httplib::Response& res) {
      const auto reply = handle_act(*backend_, req.body);
      ++served_;
      res.status = reply.status;
      res.set_content(canonical_dump(reply.body), "application/json");
    });
    server_.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(canonical_dump(health()), "application/json");
    });
  }

  ~Gateway() { stop(); }
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Binds and starts serving on a background thread.
  void start() {
    if (thread_.joinable()) return;
    if (options_.port == 0) {
      port_ = server_.bind_to_any_port(options_.host);
      if (port_ < 0) throw Error(ErrorCode::PortInUse, "cannot bind " + options_.host);
    } else {
      if (!server_.bind_to_port(options_.host, options_.port)) {
        throw Error(ErrorCode::PortInUse, "cannot bind " + options_.host + ":" + std::to_string(options_.port));
      }
      port_ = options_.port;
    }
    started_ = std::chrono::steady_clock::now();
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  /// Stops accepting, lets in-flight requests finish, then returns.
  void stop() {
    if (!thread_.joinable()) return;
    server_.stop();
    thread_.join();
  }

  int port() const { return port_; }
  std::string url() const { return "http://" + options_.host + ":" + std::to_string(port_); }
  std::uint64_t requests_served() const { return served_; }
  const PolicyBackend& backend() const { return *backend_; }

  Json health() const {
    const double uptime = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    return {{"status", "ok"}, {"backend", backend_->name()}, {"dof", backend_->dof()}, {"uptime_s", uptime}, {"requests", served_.load()}};
  }

 private:
  std::shared_ptr<const PolicyBackend> backend_;
  GatewayOptions options_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
  std::chrono::steady_clock::time_point started_ = std::chrono::steady_clock::now();
  std::atomic<std::uint64_t> served_{0};
};

// ---------------------------------------------------------------------------
// Client

struct ActRequest {
  std::string prompt;
  std::vector<double> state;
  std::map<std::string, std::pair<std::string, std::string>> images;  // view -> (media_type, raw bytes)
  int chunk_size = kDefaultChunk;
  std::optional<std::string> request_id;
};

inline Json to_json(const ActRequest& r) {
  Json j = {{"prompt", r.prompt}, {"state", r.state}, {"chunk_size", r.chunk_size}};
  if (!r.images.empty()) {
    Json images = Json::object();
    for (const auto& [view, img] : r.images) images[view] = {{"media_type", img.first}, {"data", base64_encode(img.second)}};
    j["images"] = std::move(images);
  }
  if (r.request_id) j["request_id"] = *r.request_id;
  return j;
}

struct ActResponse {
  Matrix actions;
  int dof = 0;
  std::string backend;
  double latency_ms = 0;
};

/// Splits "http://host:port" into host and port.
inline std::pair<std::string, int> parse_url(const std::string& url) {
  std::string rest = url;
  if (rest.starts_with("http://")) rest = rest.substr(7);
  while (!rest.empty() && rest.back() == '/') rest.pop_back();
  const auto colon = rest.rfind(':');
  if (colon == std::string::npos || colon == 0) throw Error(ErrorCode::Usage, "url must look like http://host:port, got '" + url + "'");
  int port = 0;
  const auto digits = rest.substr(colon + 1);
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || port <= 0 || port > 65535) {
    throw Error(ErrorCode::Usage, "bad port in url '" + url + "'");
  }
  return {rest.substr(0, colon), port};
}

class ActClient {
 public:
  explicit ActClient(const std::string& url) {
    const auto [host, port] = parse_url(url);
    client_ = std::make_unique<httplib::Client>(host, port);
    client_->set_connection_timeout(std::chrono::seconds(2));
    client_->set_read_timeout(std::chrono::seconds(30));
    client_->set_keep_alive(true);
    client_->set_tcp_nodelay(true);
  }

  Json health() {
    auto res = client_->Get("/v1/health");
    if (!res) throw Error(ErrorCode::ServerUnreachable, "health check failed: " + httplib::to_string(res.error()));
    return parse_json(res->body);
  }

  ActResponse act(const ActRequest& request) {
    auto res = client_->Post("/v1/act", canonical_dump(to_json(request)), "application/json");
    if (!res) throw Error(ErrorCode::ServerUnreachable, "act request failed: " + httplib::to_string(res.error()));
    const Json body = parse_json(res->body);
    if (res->status != 200) {
      const auto msg = body.contains("error") ? canonical_dump(body["error"]) : res->body;
      throw Error(res->status >= 500 ? ErrorCode::BackendFault : ErrorCode::BadRequest, "HTTP " + std::to_string(res->status) + ": " + msg);
    }
    ActResponse out;
    try {
      out.dof = body.at("dof").get<int>();
      out.backend = body.at("backend").get<std::string>();
      out.latency_ms = body.at("latency_ms").get<double>();
      for (const auto& row : body.at("actions")) {
        std::vector<double> r;
        for (const auto& v : row) {
          if (!v.is_number()) throw Error(ErrorCode::NonFiniteAction, "server sent a non-numeric action value");
          r.push_back(v.get<double>());
          if (!std::isfinite(r.back())) throw Error(ErrorCode::NonFiniteAction, "server sent a non-finite action value");
        }
        out.actions.push_back(std::move(r));
      }
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::BadRequest, std::string("malformed act response: ") + e.what());
    }
    return out;
  }

 private:
  std::unique_ptr<httplib::Client> client_;
};

// ---------------------------------------------------------------------------
// Toy environment and rollout

struct ToyEnv {
  static constexpr double kBound = 10.0;

  std::array<double, 2> pos{0.0, 0.0};
  std::array<double, 2> goal{0.5, 0.5};
  double max_step = 0.1;
  double success_radius = 0.01;

  bool success() const { return std::hypot(pos[0] - goal[0], pos[1] - goal[1]) <= success_radius; }

  /// Applies the first two action values as a displacement, each clipped to
  /// [-max_step, max_step]. Missing values count as 0.
  void step(const std::vector<double>& action) {
    for (std::size_t i = 0; i < 2; ++i) {
      const double a = i < action.size() ? action[i] : 0.0;
      pos[i] = std::clamp(pos[i] + std::clamp(a, -max_step, max_step), -kBound, kBound);
    }
  }

  /// Start position drawn uniformly from [-1, 1]^2.
  static std::array<double, 2> random_start(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double x = u(rng);
    return {x, u(rng)};
  }
};

/// 64x64 binary PPM: dark background, goal in green, point in red.
inline std::string render_observation(const ToyEnv& env, int size = 64) {
  std::string ppm = "P6\n" + std::to_string(size) + " " + std::to_string(size) + "\n255\n";
  const auto header = ppm.size();
  ppm.resize(header + static_cast<std::size_t>(size * size * 3), '\x10');
  auto px = [&](double v) { return static_cast<int>(std::lround((v + ToyEnv::kBound) / (2 * ToyEnv::kBound) * (size - 1))); };
  auto dot = [&](const std::array<double, 2>& p, char r, char g, char b) {
    const int cx = px(p[0]), cy = size - 1 - px(p[1]);
    for (int y = cy - 1; y <= cy + 1; ++y) {
      for (int x = cx - 1; x <= cx + 1; ++x) {
        if (x < 0 || y < 0 || x >= size || y >= size) continue;
        const auto at = header + static_cast<std::size_t>((y * size + x) * 3);
        ppm[at] = r;
        ppm[at + 1] = g;
        ppm[at + 2] = b;
      }
    }
  };
  dot(env.goal, '\x20', '\xe0', '\x20');
  dot(env.pos, '\xe0', '\x20', '\x20');
  return ppm;
}

struct TrajectoryStep {
  std::int64_t t = 0;
  std::vector<double> state;   // position before the action
  std::vector<double> action;  // as returned by the server
};

struct RolloutResult {
  bool success = false;
  std::int64_t steps_taken = 0;
  std::array<double, 2> final_pos{};
  std::vector<TrajectoryStep> trajectory;
};

inline Json to_json(const TrajectoryStep& s) { return {{"t", s.t}, {"state", s.state}, {"action", s.action}}; }

inline Json to_json(const RolloutResult& r) {
  return {{"success", r.success}, {"steps_taken", r.steps_taken}, {"final_pos", r.final_pos}};
}

inline std::string goal_prompt(const ToyEnv& env) { return "reach " + format_double(env.goal[0]) + " " + format_double(env.goal[1]); }

/// Observe, request a chunk, execute every action in order; repeat until
/// success or max_steps environment steps.
inline RolloutResult run_rollout(const std::string& server_url, ToyEnv env, std::int64_t max_steps, int chunk_size) {
  if (chunk_size < 1 || chunk_size > kMaxChunk) throw Error(ErrorCode::Usage, "chunk size must be in [1, 64]");
  ActClient client(server_url);
  RolloutResult result;
  std::int64_t request_no = 0;
  while (!env.success() && result.steps_taken < max_steps) {
    ActRequest req;
    req.prompt = goal_prompt(env);
    req.state = {env.pos[0], env.pos[1]};
    req.images["images_1"] = {"image/x-portable-pixmap", render_observation(env)};
    req.chunk_size = chunk_size;
    req.request_id = "step-" + std::to_string(request_no++);
    const auto response = client.act(req);
    if (response.actions.size() != static_cast<std::size_t>(chunk_size)) {
      throw Error(ErrorCode::BadRequest, "server returned " + std::to_string(response.actions.size()) + " rows for chunk " + std::to_string(chunk_size));
    }
    for (const auto& action : response.actions) {
      if (result.steps_taken >= max_steps || env.success()) break;
      result.trajectory.push_back({result.steps_taken, {env.pos[0], env.pos[1]}, action});
      env.step(action);
      ++result.steps_taken;
    }
  }
  result.success = env.success();
  result.final_pos = env.pos;
  return result;
}

inline void write_trajectory(const std::filesystem::path& path, const RolloutResult& r) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  for (const auto& s : r.trajectory) out << canonical_dump(to_json(s)) << '\n';
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

}  // namespace dexkit::serve
