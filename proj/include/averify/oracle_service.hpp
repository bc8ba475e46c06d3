#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "averify/network.hpp"
#include "averify/protocol.hpp"
#include "averify/tensor.hpp"

namespace averify {

/// Wire protocol: 4-byte big-endian length prefix + UTF-8 JSON body over
/// TCP, any number of request/response exchanges per connection.
/// Request:  {"shape":[c,h,w],"pixels":[...]}
/// Response: {"probs":[...]} (plus "model_tag" when the server opts in)
///        or {"error":"<code>: <message>"}.
inline constexpr std::uint32_t kMaxFrameBytes = 64u << 20;

std::string encode_classify_request(const ImageTensor& image);
ImageTensor decode_classify_request(const std::string& body);

/// Rounds each probability to `decimals` places then renormalizes.
/// Emulates precision-truncating cloud APIs; decimals must be >= 1 and the
/// rounded vector must not collapse to all zeros.
ProbabilityVector quantize_probabilities(const ProbabilityVector& probs, int decimals);

struct ServeOptions {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;        // 0 picks an ephemeral port
    int rounded_decimals = 0;      // 0 = full precision
    std::string model_tag;         // empty = omitted from responses
};

/// The gray-box deployment stand-in: serves one immutable model over the
/// wire protocol, one thread per connection. Malformed requests get an
/// error response and the connection keeps serving.
class OracleServer {
public:
    OracleServer(Network model, ServeOptions options);
    ~OracleServer();

    OracleServer(const OracleServer&) = delete;
    OracleServer& operator=(const OracleServer&) = delete;

    void start();  // binds and begins accepting; throws on bind failure
    void stop();   // graceful: stops accepting, joins connection threads

    std::uint16_t port() const { return bound_port_; }
    const std::string& host() const { return options_.host; }

private:
    void accept_loop();
    void serve_connection(int fd);
    std::string handle_request(const std::string& body) const;

    Network model_;
    ServeOptions options_;
    int listen_fd_ = -1;
    std::uint16_t bound_port_ = 0;
    std::atomic<bool> stopping_{false};
    std::thread accept_thread_;
    std::mutex workers_mutex_;
    std::vector<std::thread> workers_;
};

struct RemoteOracleConfig {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;
    int retries = 3;  // total connection attempts per classify call
    std::chrono::milliseconds timeout{2000};
    std::chrono::milliseconds initial_backoff{100};  // doubles per retry
};

/// GrayBoxOracle over the wire protocol. Keeps the connection alive across
/// calls and reconnects on failure; once `retries` attempts are exhausted
/// the call raises OracleUnreachableError. Not shareable across threads;
/// use one client per worker.
class RemoteOracle final : public GrayBoxOracle {
public:
    explicit RemoteOracle(RemoteOracleConfig config);
    ~RemoteOracle() override;

    RemoteOracle(const RemoteOracle&) = delete;
    RemoteOracle& operator=(const RemoteOracle&) = delete;

    ProbabilityVector classify(const ImageTensor& image) override;

private:
    void close_connection();
    bool ensure_connected();

    RemoteOracleConfig config_;
    int fd_ = -1;
};

/// Parses "host:port" with an optional tcp:// prefix.
RemoteOracleConfig parse_endpoint(const std::string& endpoint);

}  // namespace averify
