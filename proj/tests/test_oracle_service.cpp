#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cmath>
#include <cstring>
#include <string>
#include <thread>
#include <vector>

#include "averify/oracle_service.hpp"
#include "averify/train.hpp"
#include "doctest.h"
#include "json.hpp"
#include "test_support.hpp"

using namespace averify;
using namespace testsupport;

namespace {

const LabeledDataset& service_dataset() {
    static const LabeledDataset data = builtin_synthetic_dataset(3, 8, 10, 91);
    return data;
}

const Network& served_model() {
    static const Network net = [] {
        NetworkSpec spec;
        spec.input_shape = {1, 10, 10};
        spec.num_classes = 3;
        spec.layers = {FlattenLayer{}, DenseLayer{100, 16}, ReluLayer{}, DenseLayer{16, 3}};
        TrainOptions options;
        options.epochs = 4;
        options.learning_rate = 0.2;
        options.batch = 6;
        return train(init_network(spec, 93), service_dataset(), options).network;
    }();
    return net;
}

// Bare-bones framing client for tests that must poke at the wire directly.
class RawClient {
public:
    explicit RawClient(std::uint16_t port) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        REQUIRE(fd_ >= 0);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        REQUIRE(::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr) == 1);
        REQUIRE(::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0);
    }
    ~RawClient() {
        if (fd_ >= 0) ::close(fd_);
    }

    void send_header(std::uint32_t length) {
        unsigned char header[4] = {static_cast<unsigned char>(length >> 24),
                                   static_cast<unsigned char>(length >> 16),
                                   static_cast<unsigned char>(length >> 8),
                                   static_cast<unsigned char>(length)};
        REQUIRE(::send(fd_, header, 4, 0) == 4);
    }

    void send_frame(const std::string& body) {
        send_header(static_cast<std::uint32_t>(body.size()));
        REQUIRE(::send(fd_, body.data(), body.size(), 0) ==
                static_cast<ssize_t>(body.size()));
    }

    // Empty optional-style result: false means the server closed on us.
    bool recv_frame(std::string& body) {
        unsigned char header[4];
        if (!recv_exact(header, 4)) return false;
        const std::uint32_t length = (std::uint32_t{header[0]} << 24) |
                                     (std::uint32_t{header[1]} << 16) |
                                     (std::uint32_t{header[2]} << 8) | std::uint32_t{header[3]};
        body.resize(length);
        return length == 0 || recv_exact(body.data(), length);
    }

private:
    bool recv_exact(void* out, std::size_t n) {
        auto* p = static_cast<char*>(out);
        std::size_t got = 0;
        while (got < n) {
            const ssize_t r = ::recv(fd_, p + got, n - got, 0);
            if (r <= 0) return false;
            got += static_cast<std::size_t>(r);
        }
        return true;
    }

    int fd_ = -1;
};

}  // namespace

TEST_CASE("classify requests survive the JSON round trip bit-for-bit") {
    Rng rng(321);
    for (int i = 0; i < 5; ++i) {
        const ImageTensor image = random_image(rng, 2, 7, 5);
        const ImageTensor back = decode_classify_request(encode_classify_request(image));
        CHECK(back == image);
    }
}

TEST_CASE("malformed request bodies are rejected with a reason") {
    CHECK_THROWS_AS(decode_classify_request("not json"), std::invalid_argument);
    CHECK_THROWS_AS(decode_classify_request("{}"), std::invalid_argument);
    CHECK_THROWS_AS(decode_classify_request(R"({"shape":[1,2],"pixels":[0.5,0.5]})"),
                    std::invalid_argument);
    CHECK_THROWS_AS(decode_classify_request(R"({"shape":[1,2,2],"pixels":[0.5]})"),
                    std::invalid_argument);
    CHECK_THROWS_AS(decode_classify_request(R"({"shape":[1,1,1],"pixels":[1.5]})"),
                    std::invalid_argument);
    CHECK_THROWS_AS(decode_classify_request(R"({"shape":[1,1,1]})"), std::invalid_argument);
}

TEST_CASE("probability rounding matches the round-then-renormalize contract") {
    const ProbabilityVector p({0.15, 0.15, 0.7});
    const ProbabilityVector q = quantize_probabilities(p, 1);
    // Rounded entries 0.2, 0.2, 0.7 sum to 1.1 before renormalizing.
    CHECK(std::abs(q[0] - 0.2 / 1.1) < 1e-15);
    CHECK(std::abs(q[1] - 0.2 / 1.1) < 1e-15);
    CHECK(std::abs(q[2] - 0.7 / 1.1) < 1e-15);
    double sum = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) sum += q[i];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

    // Already-representable vectors pass through unchanged.
    const ProbabilityVector exact({0.25, 0.75});
    const ProbabilityVector same = quantize_probabilities(exact, 2);
    CHECK(same[0] == 0.25);
    CHECK(same[1] == 0.75);

    CHECK_THROWS_AS(quantize_probabilities(p, 0), std::invalid_argument);
    CHECK_THROWS_AS(quantize_probabilities(p, 16), std::invalid_argument);

    // A near-uniform wide vector rounds to all zeros at one decimal.
    std::vector<double> wide(30, 1.0 / 30.0);
    CHECK_THROWS_AS(quantize_probabilities(ProbabilityVector(wide), 1),
                    std::invalid_argument);
}

TEST_CASE("remote answers match local inference exactly in full mode") {
    OracleServer server(served_model(), ServeOptions{});
    server.start();
    REQUIRE(server.port() != 0);

    RemoteOracleConfig config;
    config.port = server.port();
    RemoteOracle remote(config);
    for (std::size_t i = 0; i < 10; ++i) {
        const ImageTensor& x = service_dataset().images[i];
        const ProbabilityVector local = served_model().forward(x);
        const ProbabilityVector wire = remote.classify(x);
        REQUIRE(wire.size() == local.size());
        for (std::size_t c = 0; c < local.size(); ++c) CHECK(wire[c] == local[c]);
    }
    server.stop();
    server.stop();  // idempotent
}

TEST_CASE("rounded mode serves exactly the quantized probabilities") {
    ServeOptions options;
    options.rounded_decimals = 3;
    OracleServer server(served_model(), options);
    server.start();

    RemoteOracleConfig config;
    config.port = server.port();
    RemoteOracle remote(config);
    for (std::size_t i = 0; i < 5; ++i) {
        const ImageTensor& x = service_dataset().images[i];
        const ProbabilityVector expected =
            quantize_probabilities(served_model().forward(x), 3);
        const ProbabilityVector wire = remote.classify(x);
        REQUIRE(wire.size() == expected.size());
        for (std::size_t c = 0; c < expected.size(); ++c) CHECK(wire[c] == expected[c]);
    }
    server.stop();
}

TEST_CASE("a bad request gets an error reply and the connection keeps serving") {
    ServeOptions options;
    options.model_tag = "unit-test-model";
    OracleServer server(served_model(), options);
    server.start();

    RawClient client(server.port());
    client.send_frame("this is not json");
    std::string body;
    REQUIRE(client.recv_frame(body));
    auto reply = nlohmann::json::parse(body);
    REQUIRE(reply.contains("error"));
    const std::string message = reply["error"].get<std::string>();
    CHECK(message.rfind("bad-request: ", 0) == 0);

    // Same connection, now a valid request: it must still be answered.
    client.send_frame(encode_classify_request(service_dataset().images[0]));
    REQUIRE(client.recv_frame(body));
    reply = nlohmann::json::parse(body);
    REQUIRE(reply.contains("probs"));
    CHECK(reply["model_tag"].get<std::string>() == "unit-test-model");
    const auto probs = reply["probs"].get<std::vector<double>>();
    const ProbabilityVector local = served_model().forward(service_dataset().images[0]);
    REQUIRE(probs.size() == local.size());
    for (std::size_t c = 0; c < probs.size(); ++c) CHECK(probs[c] == local[c]);

    server.stop();
}

TEST_CASE("responses omit the model tag unless configured") {
    OracleServer server(served_model(), ServeOptions{});
    server.start();
    RawClient client(server.port());
    client.send_frame(encode_classify_request(service_dataset().images[0]));
    std::string body;
    REQUIRE(client.recv_frame(body));
    const auto reply = nlohmann::json::parse(body);
    CHECK(reply.contains("probs"));
    CHECK_FALSE(reply.contains("model_tag"));
    server.stop();
}

TEST_CASE("an oversized frame drops the connection") {
    OracleServer server(served_model(), ServeOptions{});
    server.start();
    RawClient client(server.port());
    client.send_header(kMaxFrameBytes + 1);
    std::string body;
    CHECK_FALSE(client.recv_frame(body));  // server hung up instead of replying
    server.stop();
}

TEST_CASE("concurrent clients get consistent answers") {
    OracleServer server(served_model(), ServeOptions{});
    server.start();

    std::vector<std::thread> threads;
    std::vector<int> mismatches(3, 0);
    for (int t = 0; t < 3; ++t) {
        threads.emplace_back([&, t] {
            RemoteOracleConfig config;
            config.port = server.port();
            RemoteOracle remote(config);
            for (std::size_t i = 0; i < 5; ++i) {
                const ImageTensor& x = service_dataset().images[(t * 5 + i) % 24];
                const ProbabilityVector local = served_model().forward(x);
                const ProbabilityVector wire = remote.classify(x);
                for (std::size_t c = 0; c < local.size(); ++c) {
                    if (wire[c] != local[c]) ++mismatches[t];
                }
            }
        });
    }
    for (std::thread& t : threads) t.join();
    CHECK(mismatches == std::vector<int>{0, 0, 0});
    server.stop();
}

TEST_CASE("unreachable endpoints exhaust their retries and raise") {
    RemoteOracleConfig config;
    config.host = "127.0.0.1";
    config.port = 1;  // reserved port, nothing listens there
    config.retries = 2;
    config.timeout = std::chrono::milliseconds(200);
    config.initial_backoff = std::chrono::milliseconds(10);
    RemoteOracle remote(config);

    const ImageTensor& x = service_dataset().images[0];
    CHECK_THROWS_WITH_AS(remote.classify(x), doctest::Contains("after 2 attempts"),
                         OracleUnreachableError);
}

TEST_CASE("remote client validates its configuration") {
    RemoteOracleConfig config;
    config.port = 0;
    CHECK_THROWS_AS(RemoteOracle{config}, std::invalid_argument);
    config.port = 9;
    config.retries = 0;
    CHECK_THROWS_AS(RemoteOracle{config}, std::invalid_argument);
    config.retries = 1;
    config.timeout = std::chrono::milliseconds(0);
    CHECK_THROWS_AS(RemoteOracle{config}, std::invalid_argument);

    ServeOptions bad;
    bad.rounded_decimals = 16;
    CHECK_THROWS_AS(OracleServer(served_model(), bad), std::invalid_argument);
}

TEST_CASE("endpoint strings parse into host and port") {
    const RemoteOracleConfig a = parse_endpoint("127.0.0.1:9000");
    CHECK(a.host == "127.0.0.1");
    CHECK(a.port == 9000);

    const RemoteOracleConfig b = parse_endpoint("tcp://localhost:8080");
    CHECK(b.host == "localhost");
    CHECK(b.port == 8080);

    CHECK_THROWS_AS(parse_endpoint("no-port"), std::invalid_argument);
    CHECK_THROWS_AS(parse_endpoint(":123"), std::invalid_argument);
    CHECK_THROWS_AS(parse_endpoint("host:"), std::invalid_argument);
    CHECK_THROWS_AS(parse_endpoint("host:0"), std::invalid_argument);
    CHECK_THROWS_AS(parse_endpoint("host:99999"), std::invalid_argument);
    CHECK_THROWS_AS(parse_endpoint("host:12ab"), std::invalid_argument);
}
