#include "averify/oracle_service.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "json.hpp"

namespace averify {

namespace {

using nlohmann::json;

/// Transport-level failure: connection is unusable, callers may retry.
struct WireError : std::runtime_error {
    explicit WireError(const std::string& what) : std::runtime_error(what) {}
};

std::string resolve_host(const std::string& host) {
    return host == "localhost" ? std::string("127.0.0.1") : host;
}

sockaddr_in make_address(const std::string& host, std::uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    const std::string numeric = resolve_host(host);
    if (inet_pton(AF_INET, numeric.c_str(), &addr.sin_addr) != 1) {
        throw std::invalid_argument("bad IPv4 address '" + host + "'");
    }
    return addr;
}

/// Waits for readability, returns false on timeout. `deadline_ms < 0`
/// waits forever.
bool wait_readable(int fd, int deadline_ms) {
    pollfd pfd{fd, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, deadline_ms);
    if (rc < 0) throw WireError(std::string("poll: ") + std::strerror(errno));
    return rc > 0;
}

void send_all(int fd, const void* data, std::size_t len) {
    const char* p = static_cast<const char*>(data);
    while (len > 0) {
        const ssize_t n = ::send(fd, p, len, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw WireError(std::string("send: ") + std::strerror(errno));
        }
        p += n;
        len -= static_cast<std::size_t>(n);
    }
}

/// Reads exactly len bytes. Returns false on clean EOF at a frame
/// boundary (start == true and zero bytes read); throws mid-frame.
bool recv_all(int fd, void* data, std::size_t len, bool at_frame_start) {
    char* p = static_cast<char*>(data);
    std::size_t got = 0;
    while (got < len) {
        const ssize_t n = ::recv(fd, p + got, len - got, 0);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw WireError(std::string("recv: ") + std::strerror(errno));
        }
        if (n == 0) {
            if (at_frame_start && got == 0) return false;
            throw WireError("connection closed mid-frame");
        }
        got += static_cast<std::size_t>(n);
    }
    return true;
}

void send_frame(int fd, const std::string& body) {
    if (body.size() > kMaxFrameBytes) throw WireError("frame exceeds size limit");
    unsigned char header[4] = {static_cast<unsigned char>(body.size() >> 24),
                               static_cast<unsigned char>(body.size() >> 16),
                               static_cast<unsigned char>(body.size() >> 8),
                               static_cast<unsigned char>(body.size())};
    std::string frame(reinterpret_cast<const char*>(header), 4);
    frame += body;
    send_all(fd, frame.data(), frame.size());
}

/// Returns false on clean EOF before any header byte.
bool recv_frame(int fd, std::string& body) {
    unsigned char header[4];
    if (!recv_all(fd, header, 4, true)) return false;
    const std::uint32_t len = (static_cast<std::uint32_t>(header[0]) << 24) |
                              (static_cast<std::uint32_t>(header[1]) << 16) |
                              (static_cast<std::uint32_t>(header[2]) << 8) |
                              static_cast<std::uint32_t>(header[3]);
    if (len > kMaxFrameBytes) throw WireError("incoming frame exceeds size limit");
    body.resize(len);
    if (len > 0) recv_all(fd, body.data(), len, false);
    return true;
}

}  // namespace

std::string encode_classify_request(const ImageTensor& image) {
    const Tensor& t = image.tensor();
    json j;
    j["shape"] = t.shape;
    j["pixels"] = t.data;
    return j.dump();
}

ImageTensor decode_classify_request(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("request is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("shape") || !j.contains("pixels")) {
        throw std::invalid_argument("request needs 'shape' and 'pixels' fields");
    }
    std::vector<std::size_t> shape;
    std::vector<double> pixels;
    try {
        shape = j.at("shape").get<std::vector<std::size_t>>();
        pixels = j.at("pixels").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("malformed request fields: ") + e.what());
    }
    if (shape.size() != 3) {
        throw std::invalid_argument("shape must be [channels, height, width]");
    }
    // ImageTensor enforces positive dims, length match, range, finiteness.
    return ImageTensor(Tensor(shape, std::move(pixels)));
}

ProbabilityVector quantize_probabilities(const ProbabilityVector& probs, int decimals) {
    if (decimals < 1 || decimals > 15) {
        throw std::invalid_argument("rounding wants 1..15 decimals, got " +
                                    std::to_string(decimals));
    }
    const double factor = std::pow(10.0, decimals);
    std::vector<double> rounded(probs.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        rounded[i] = std::round(probs[i] * factor) / factor;
        sum += rounded[i];
    }
    if (sum <= 0.0) {
        throw std::invalid_argument("rounded probabilities collapsed to zero at " +
                                    std::to_string(decimals) + " decimals");
    }
    for (double& v : rounded) v /= sum;
    return ProbabilityVector(std::move(rounded));
}

// --- server ---------------------------------------------------------------

OracleServer::OracleServer(Network model, ServeOptions options)
    : model_(std::move(model)), options_(std::move(options)) {
    model_.spec.validate();
    if (options_.rounded_decimals != 0 &&
        (options_.rounded_decimals < 1 || options_.rounded_decimals > 15)) {
        throw std::invalid_argument("rounded_decimals must be 0 (full) or 1..15");
    }
}

OracleServer::~OracleServer() { stop(); }

void OracleServer::start() {
    if (listen_fd_ >= 0) throw std::logic_error("server already started");
    const sockaddr_in addr = make_address(options_.host, options_.port);

    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw std::runtime_error(std::string("socket: ") + std::strerror(errno));
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
        const std::string msg = std::strerror(errno);
        ::close(fd);
        throw std::runtime_error("cannot bind " + options_.host + ":" +
                                 std::to_string(options_.port) + ": " + msg);
    }
    if (::listen(fd, 16) != 0) {
        const std::string msg = std::strerror(errno);
        ::close(fd);
        throw std::runtime_error("listen: " + msg);
    }
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    if (::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len) != 0) {
        const std::string msg = std::strerror(errno);
        ::close(fd);
        throw std::runtime_error("getsockname: " + msg);
    }
    bound_port_ = ntohs(bound.sin_port);
    listen_fd_ = fd;
    stopping_ = false;
    accept_thread_ = std::thread([this] { accept_loop(); });
}

void OracleServer::stop() {
    if (listen_fd_ < 0 && !accept_thread_.joinable()) return;
    stopping_ = true;
    if (listen_fd_ >= 0) {
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
        listen_fd_ = -1;
    }
    if (accept_thread_.joinable()) accept_thread_.join();
    std::vector<std::thread> workers;
    {
        std::lock_guard<std::mutex> guard(workers_mutex_);
        workers.swap(workers_);
    }
    for (std::thread& t : workers) {
        if (t.joinable()) t.join();
    }
}

void OracleServer::accept_loop() {
    while (!stopping_) {
        bool ready = false;
        try {
            ready = wait_readable(listen_fd_, 200);
        } catch (const WireError&) {
            break;  // listen socket closed under us during stop()
        }
        if (!ready) continue;
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (stopping_) break;
            if (errno == EINTR || errno == ECONNABORTED) continue;
            break;
        }
        std::lock_guard<std::mutex> guard(workers_mutex_);
        workers_.emplace_back([this, fd] { serve_connection(fd); });
    }
}

void OracleServer::serve_connection(int fd) {
    std::string body;
    try {
        while (!stopping_) {
            if (!wait_readable(fd, 200)) continue;
            if (!recv_frame(fd, body)) break;  // client hung up cleanly
            send_frame(fd, handle_request(body));
        }
    } catch (const WireError&) {
        // Broken or oversized connection: drop it, keep the service up.
    }
    ::close(fd);
}

std::string OracleServer::handle_request(const std::string& body) const {
    json response;
    try {
        const ImageTensor image = decode_classify_request(body);
        ProbabilityVector probs = model_.forward(image);
        if (options_.rounded_decimals >= 1) {
            probs = quantize_probabilities(probs, options_.rounded_decimals);
        }
        response["probs"] = probs.values();
        if (!options_.model_tag.empty()) response["model_tag"] = options_.model_tag;
    } catch (const std::invalid_argument& e) {
        response = json{{"error", std::string("bad-request: ") + e.what()}};
    } catch (const std::exception& e) {
        response = json{{"error", std::string("internal: ") + e.what()}};
    }
    return response.dump();
}

// --- client ---------------------------------------------------------------

RemoteOracle::RemoteOracle(RemoteOracleConfig config) : config_(std::move(config)) {
    if (config_.retries < 1) throw std::invalid_argument("retries must be >= 1");
    if (config_.port == 0) throw std::invalid_argument("oracle endpoint needs a port");
    if (config_.timeout.count() <= 0) throw std::invalid_argument("timeout must be positive");
}

RemoteOracle::~RemoteOracle() { close_connection(); }

void RemoteOracle::close_connection() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

bool RemoteOracle::ensure_connected() {
    if (fd_ >= 0) return true;
    const sockaddr_in addr = make_address(config_.host, config_.port);
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw WireError(std::string("socket: ") + std::strerror(errno));

    // Connect with a deadline: non-blocking connect, then poll.
    const int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    const int rc = ::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr));
    if (rc != 0 && errno != EINPROGRESS) {
        const std::string msg = std::strerror(errno);
        ::close(fd);
        throw WireError("connect: " + msg);
    }
    if (rc != 0) {
        pollfd pfd{fd, POLLOUT, 0};
        const int ready = ::poll(&pfd, 1, static_cast<int>(config_.timeout.count()));
        int err = 0;
        socklen_t len = sizeof(err);
        if (ready <= 0 || ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len) != 0 || err != 0) {
            ::close(fd);
            throw WireError(ready <= 0 ? "connect timed out"
                                       : std::string("connect: ") + std::strerror(err));
        }
    }
    ::fcntl(fd, F_SETFL, flags);

    timeval tv{};
    tv.tv_sec = static_cast<time_t>(config_.timeout.count() / 1000);
    tv.tv_usec = static_cast<suseconds_t>((config_.timeout.count() % 1000) * 1000);
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    fd_ = fd;
    return true;
}

ProbabilityVector RemoteOracle::classify(const ImageTensor& image) {
    const std::string request = encode_classify_request(image);
    auto backoff = config_.initial_backoff;
    std::string last_error = "no attempt made";

    for (int attempt = 1; attempt <= config_.retries; ++attempt) {
        try {
            ensure_connected();
            send_frame(fd_, request);
            std::string body;
            if (!recv_frame(fd_, body)) throw WireError("server closed the connection");

            json j;
            try {
                j = json::parse(body);
            } catch (const json::exception& e) {
                throw WireError(std::string("bad response JSON: ") + e.what());
            }
            if (j.contains("error")) {
                // The service answered; this is a protocol rejection, not
                // unreachability, so do not retry.
                throw std::runtime_error("oracle rejected request: " +
                                         j.at("error").get<std::string>());
            }
            if (!j.contains("probs")) throw WireError("response lacks 'probs'");
            return ProbabilityVector(j.at("probs").get<std::vector<double>>());
        } catch (const WireError& e) {
            last_error = e.what();
            close_connection();
            if (attempt < config_.retries) {
                std::this_thread::sleep_for(backoff);
                backoff *= 2;
            }
        }
    }
    throw OracleUnreachableError("oracle " + config_.host + ":" + std::to_string(config_.port) +
                                 " unreachable after " + std::to_string(config_.retries) +
                                 " attempts: " + last_error);
}

RemoteOracleConfig parse_endpoint(const std::string& endpoint) {
    std::string rest = endpoint;
    if (rest.rfind("tcp://", 0) == 0) rest = rest.substr(6);
    const auto colon = rest.find_last_of(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == rest.size()) {
        throw std::invalid_argument("endpoint must look like host:port, got '" + endpoint + "'");
    }
    RemoteOracleConfig config;
    config.host = rest.substr(0, colon);
    const std::string port_text = rest.substr(colon + 1);
    unsigned long port = 0;
    try {
        std::size_t consumed = 0;
        port = std::stoul(port_text, &consumed);
        if (consumed != port_text.size()) throw std::invalid_argument(port_text);
    } catch (const std::exception&) {
        throw std::invalid_argument("bad port in endpoint '" + endpoint + "'");
    }
    if (port == 0 || port > 65535) {
        throw std::invalid_argument("port out of range in endpoint '" + endpoint + "'");
    }
    config.port = static_cast<std::uint16_t>(port);
    return config;
}

}  // namespace averify
