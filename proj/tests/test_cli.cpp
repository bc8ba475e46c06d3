#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>

#include "averify/dataset.hpp"
#include "averify/network.hpp"
#include "averify/oracle_service.hpp"
#include "averify/tensor_io.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace averify;
namespace fs = std::filesystem;

namespace {

const std::string& binary() {
    static const std::string path = [] {
        const char* env = std::getenv("AVERIFY_BIN");
        REQUIRE_MESSAGE(env != nullptr, "AVERIFY_BIN must point at the averify binary");
        return std::string(env);
    }();
    return path;
}

struct CliResult {
    int status = -1;
    std::string output;

    bool contains(const std::string& needle) const {
        return output.find(needle) != std::string::npos;
    }
};

// Runs a full shell command with output captured; run_cli prefixes the
// binary under test.
CliResult run_shell(const std::string& command) {
    static int counter = 0;
    static testsupport::TempDir scratch("cli_scratch");
    const fs::path out_file = scratch.path() / ("cli_" + std::to_string(counter++) + ".txt");
    const std::string cmd = command + " > '" + out_file.string() + "' 2>&1";
    const int rc = std::system(cmd.c_str());
    CliResult result;
    result.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    std::ifstream is(out_file);
    std::stringstream ss;
    ss << is.rdbuf();
    result.output = ss.str();
    return result;
}

CliResult run_cli(const std::string& args) { return run_shell(binary() + " " + args); }

// One generated dataset and two trained models shared by every CLI test.
struct CliFixture {
    testsupport::TempDir dir{"cli_fixture"};
    fs::path data_dir;
    fs::path manifest;
    fs::path model_a;
    fs::path model_b;
    fs::path image;  // first dataset image

    CliFixture() {
        data_dir = dir.path() / "data";
        manifest = data_dir / "manifest.txt";
        model_a = dir.path() / "mlpA.nnet";
        model_b = dir.path() / "mlpB.nnet";

        CliResult gen = run_cli("gen-data --k 10 --per-class 12 --side 16 --seed 5 --out '" +
                                data_dir.string() + "'");
        REQUIRE_MESSAGE(gen.status == 0, gen.output);
        image = data_dir / "img_00000.pgm";
        REQUIRE(fs::exists(image));

        const std::string common = " --data '" + manifest.string() +
                                   "' --spec mlp-small --epochs 40 --lr 0.08 --batch 8";
        CliResult a = run_cli("train" + common + " --seed 21 --out '" + model_a.string() + "'");
        REQUIRE_MESSAGE(a.status == 0, a.output);
        CliResult b = run_cli("train" + common + " --seed 22 --out '" + model_b.string() + "'");
        REQUIRE_MESSAGE(b.status == 0, b.output);
    }
};

const CliFixture& fx() {
    static CliFixture fixture;
    return fixture;
}

// The CLI takes the target class; pick one the owner model does not already
// predict for the fixture image.
std::size_t pick_target_class() {
    const Network model = load_model(fx().model_a);
    const std::size_t argmax = model.forward(read_pgm(fx().image)).argmax();
    return (argmax + 1) % 10;
}

std::string read_file(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is.good());
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

double parse_field(const std::string& output, const std::string& key) {
    const auto pos = output.find(key + "=");
    const std::string context = "missing " + key + " in: " + output;
    REQUIRE_MESSAGE(pos != std::string::npos, context);
    return std::stod(output.substr(pos + key.size() + 1));
}

}  // namespace

TEST_CASE("cli without a command fails with usage") {
    CHECK(run_cli("").status == 2);
    CHECK(run_cli("--help").status == 0);
    CHECK(run_cli("bogus-command").status == 2);
}

TEST_CASE("gen-data writes a loadable dataset and reports it") {
    const CliResult r = run_cli("gen-data --k 3 --per-class 2 --side 12 --seed 9 --out '" +
                                (fx().dir.path() / "tiny").string() + "'");
    CHECK(r.status == 0);
    CHECK(r.contains("dataset images=6 classes=3"));
    const LabeledDataset loaded = load_dataset(fx().dir.path() / "tiny" / "manifest.txt");
    CHECK(loaded.size() == 6);
    CHECK(loaded.num_classes == 3);

    CHECK(run_cli("gen-data --k 3 --per-class 2").status == 2);  // --out is required
    CHECK(run_cli("gen-data --k 1 --per-class 2 --out '" +
                  (fx().dir.path() / "bad").string() + "'")
              .status == 2);
}

TEST_CASE("gen-data is deterministic") {
    const fs::path d1 = fx().dir.path() / "det1";
    const fs::path d2 = fx().dir.path() / "det2";
    REQUIRE(run_cli("gen-data --k 4 --per-class 3 --side 12 --seed 3 --out '" + d1.string() +
                    "'").status == 0);
    REQUIRE(run_cli("gen-data --k 4 --per-class 3 --side 12 --seed 3 --out '" + d2.string() +
                    "'").status == 0);
    CHECK(read_file(d1 / "manifest.txt") == read_file(d2 / "manifest.txt"));
    CHECK(read_file(d1 / "img_00005.pgm") == read_file(d2 / "img_00005.pgm"));
}

TEST_CASE("train reports both accuracies and writes a reloadable model") {
    const CliResult first = run_cli("train --data '" + fx().manifest.string() +
                                    "' --spec mlp-small --epochs 40 --lr 0.08 --batch 8 "
                                    "--seed 21 --out '" +
                                    (fx().dir.path() / "retrain.nnet").string() + "'");
    REQUIRE_MESSAGE(first.status == 0, first.output);
    const double train_acc = parse_field(first.output, "train");
    const double test_acc = parse_field(first.output, "test");
    CHECK(train_acc >= 0.0);
    CHECK(train_acc <= 1.0);
    CHECK(test_acc >= 0.0);
    CHECK(test_acc <= 1.0);

    // Identical invocations produce byte-identical models.
    CHECK(read_file(fx().dir.path() / "retrain.nnet") == read_file(fx().model_a));
    const Network reloaded = load_model(fx().model_a);
    CHECK(reloaded.spec == NetworkSpec::named("mlp-small"));

    CHECK(run_cli("train --data '" + fx().manifest.string() +
                  "' --spec no-such-arch --out '" + (fx().dir.path() / "x.nnet").string() + "'")
              .status == 2);
}

TEST_CASE("attack steers the model and writes its artifacts") {
    const std::size_t c_prime = pick_target_class();
    const fs::path adv = fx().dir.path() / "adv.tnsr";
    const fs::path preview = fx().dir.path() / "adv.pgm";
    const fs::path trace = fx().dir.path() / "trace.csv";

    const CliResult r = run_cli("attack --model '" + fx().model_a.string() + "' --image '" +
                                fx().image.string() + "' --c-prime " +
                                std::to_string(c_prime) +
                                " --p-target 0.2 --eps 0.1 --n-max 3000 --out-image '" + adv.string() +
                                "' --out-preview '" + preview.string() + "' --out-trace '" +
                                trace.string() + "'");
    REQUIRE_MESSAGE(r.status == 0, r.output);
    CHECK(r.contains("attack converged=true"));
    const double p_cprime = parse_field(r.output, "p_cprime");
    CHECK(std::abs(p_cprime - 0.2) < 0.05);
    const double ssim_value = parse_field(r.output, "ssim");
    CHECK(ssim_value > 0.5);
    CHECK(ssim_value <= 1.0);

    // Artifacts: the tensor is loadable at full precision, the preview a
    // valid image, the trace a CSV with the controller columns.
    const Tensor adv_tensor = read_tnsr(adv);
    CHECK(adv_tensor.shape == std::vector<std::size_t>{1, 16, 16});
    CHECK(read_pgm(preview).height() == 16);
    std::ifstream ts(trace);
    std::string header;
    REQUIRE(std::getline(ts, header));
    CHECK(header == "N,p_c,p_cprime,beta_c,beta_cprime,alpha_com");
}

TEST_CASE("attack exit codes distinguish usage, baseline and non-convergence") {
    const std::size_t c_prime = pick_target_class();
    const std::string base = "attack --model '" + fx().model_a.string() + "' --image '" +
                             fx().image.string() + "' --c-prime " + std::to_string(c_prime);

    // Zero budget cannot converge: exit 3 and the image stays clean.
    const fs::path out = fx().dir.path() / "unmoved.tnsr";
    const CliResult stuck =
        run_cli(base + " --p-target 0.2 --n-max 0 --out-image '" + out.string() + "'");
    CHECK(stuck.status == 3);
    CHECK(stuck.contains("attack converged=false iterations=0"));
    CHECK(read_tnsr(out) == read_pgm(fx().image).tensor());

    // The baseline method succeeds by finishing its budget.
    const CliResult baseline = run_cli(base + " --p-target 0.2 --method ifgsm --n-max 5");
    CHECK(baseline.status == 0);
    CHECK(baseline.contains("converged=false iterations=5"));

    CHECK(run_cli(base + " --p-target 1.5").status == 2);
    CHECK(run_cli(base + " --p-target 0.2 --method bogus").status == 2);
    const std::size_t argmax = (c_prime + 9) % 10;
    CHECK(run_cli("attack --model '" + fx().model_a.string() + "' --image '" +
                  fx().image.string() + "' --c-prime " + std::to_string(argmax) +
                  " --p-target 0.2")
              .status == 2);
}

TEST_CASE("verify against a local suspect model") {
    const std::size_t c_prime = pick_target_class();
    const std::string base = "verify --mode owner --model '" + fx().model_a.string() +
                             "' --image '" + fx().image.string() + "' --c-prime " +
                             std::to_string(c_prime) + " --p-target 0.2 --eps 0.1 --n-max 3000";

    const CliResult same = run_cli(base + " --suspect-model '" + fx().model_a.string() + "'");
    REQUIRE_MESSAGE(same.status == 0, same.output);
    CHECK(same.contains("verdict identical=true"));
    CHECK(same.contains("converged=true"));
    CHECK(parse_field(same.output, "d_prob") < 0.05);

    const CliResult other = run_cli(base + " --suspect-model '" + fx().model_b.string() + "'");
    REQUIRE_MESSAGE(other.status == 0, other.output);
    CHECK(other.contains("verdict identical=false"));
    CHECK(parse_field(other.output, "d_prob") > 0.5);

    CHECK(run_cli(base).status == 2);  // no suspect given anywhere
}

TEST_CASE("third-party verify echoes the owner's convergence flag") {
    const std::size_t c_prime = pick_target_class();
    const fs::path adv = fx().dir.path() / "tp_adv.tnsr";
    const std::string owner_cmd = "verify --mode owner --model '" + fx().model_a.string() +
                                  "' --image '" + fx().image.string() + "' --c-prime " +
                                  std::to_string(c_prime) +
                                  " --p-target 0.2 --eps 0.1 --n-max 3000 --suspect-model '" +
                                  fx().model_a.string() + "' --out-adv '" + adv.string() + "'";
    REQUIRE(run_cli(owner_cmd).status == 0);
    REQUIRE(fs::exists(adv));

    const std::string tp_base = "verify --mode third-party --image '" + fx().image.string() +
                                "' --adv-image '" + adv.string() + "' --c-prime " +
                                std::to_string(c_prime) + " --p-target 0.2 --suspect-model '" +
                                fx().model_a.string() + "'";
    const CliResult trusted = run_cli(tp_base);
    REQUIRE_MESSAGE(trusted.status == 0, trusted.output);
    CHECK(trusted.contains("identical=true"));

    const CliResult distrusted = run_cli(tp_base + " --not-converged");
    REQUIRE(distrusted.status == 0);
    CHECK(distrusted.contains("identical=false"));
    CHECK(distrusted.contains("converged=false"));

    // Third-party mode cannot run without the owner's artifact.
    CHECK(run_cli("verify --mode third-party --image '" + fx().image.string() +
                  "' --c-prime 1 --p-target 0.2 --suspect-model '" + fx().model_a.string() +
                  "'")
              .status == 2);
}

TEST_CASE("verify over the wire, including the environment fallback") {
    OracleServer server(load_model(fx().model_a), ServeOptions{});
    server.start();
    const std::string endpoint = "127.0.0.1:" + std::to_string(server.port());
    const std::size_t c_prime = pick_target_class();
    const std::string base = "verify --mode owner --model '" + fx().model_a.string() +
                             "' --image '" + fx().image.string() + "' --c-prime " +
                             std::to_string(c_prime) + " --p-target 0.2 --eps 0.1 --n-max 3000";

    const CliResult remote = run_cli(base + " --suspect " + endpoint);
    REQUIRE_MESSAGE(remote.status == 0, remote.output);
    CHECK(remote.contains("verdict identical=true"));

    const CliResult via_env =
        run_shell("AVERIFY_ENDPOINT=" + endpoint + " " + binary() + " " + base);
    REQUIRE_MESSAGE(via_env.status == 0, via_env.output);
    CHECK(via_env.contains("verdict identical=true"));
    server.stop();
}

TEST_CASE("verify reports an unreachable suspect distinctly") {
    const std::size_t c_prime = pick_target_class();
    const CliResult r = run_cli("verify --mode owner --model '" + fx().model_a.string() +
                                "' --image '" + fx().image.string() + "' --c-prime " +
                                std::to_string(c_prime) +
                                " --p-target 0.2 --eps 0.1 --n-max 3 --suspect 127.0.0.1:1");
    CHECK(r.status == 4);
    CHECK(r.contains("unreachable"));
}

TEST_CASE("serve announces its port and answers until terminated") {
    const fs::path out = fx().dir.path() / "serve_out.txt";
    const fs::path pid_file = fx().dir.path() / "serve_pid.txt";
    const std::string launch = binary() + " serve --model '" + fx().model_a.string() +
                               "' --bind 127.0.0.1:0 > '" + out.string() + "' 2>&1 & echo $! > '" +
                               pid_file.string() + "'";
    REQUIRE(std::system(launch.c_str()) == 0);

    // Wait for the announcement line.
    std::string announced;
    for (int i = 0; i < 100 && announced.find("serving") == std::string::npos; ++i) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        std::ifstream is(out);
        std::stringstream ss;
        ss << is.rdbuf();
        announced = ss.str();
    }
    REQUIRE_MESSAGE(announced.find("serving host=127.0.0.1 port=") != std::string::npos,
                    announced);
    const auto port = static_cast<std::uint16_t>(parse_field(announced, "port"));
    REQUIRE(port != 0);

    RemoteOracleConfig config;
    config.port = port;
    RemoteOracle remote(config);
    const ImageTensor x = read_pgm(fx().image);
    const Network model = load_model(fx().model_a);
    const ProbabilityVector local = model.forward(x);
    const ProbabilityVector wire = remote.classify(x);
    REQUIRE(wire.size() == local.size());
    for (std::size_t c = 0; c < local.size(); ++c) CHECK(wire[c] == local[c]);

    REQUIRE(std::system(("kill -TERM $(cat '" + pid_file.string() + "')").c_str()) == 0);
    std::string final_output;
    for (int i = 0; i < 100 && final_output.find("stopped") == std::string::npos; ++i) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        std::ifstream is(out);
        std::stringstream ss;
        ss << is.rdbuf();
        final_output = ss.str();
    }
    CHECK(final_output.find("stopped") != std::string::npos);
}

TEST_CASE("serve validates its mode and bind arguments") {
    CHECK(run_cli("serve --model '" + fx().model_a.string() + "' --bind nonsense").status == 2);
    CHECK(run_cli("serve --model '" + fx().model_a.string() + "' --mode rounded:0 --bind 127.0.0.1:0")
              .status == 2);
    CHECK(run_cli("serve --model '" + fx().model_a.string() + "' --mode sometimes --bind 127.0.0.1:0")
              .status == 2);
}

TEST_CASE("experiment runs from a config file and is reproducible") {
    const fs::path config = fx().dir.path() / "exp.cfg";
    {
        std::ofstream os(config);
        os << "# separation check at desk scale\n";
        os << "dataset = data/manifest.txt\n";
        os << "owner_models = mlpA.nnet\n";
        os << "suspect_models = mlpA.nnet, mlpB.nnet\n";
        os << "suspect_labels = copy, other\n";
        os << "n_images = 3\n";
        os << "seed = 17\n";
        os << "p_target_pool = 0.2, 0.3\n";
        os << "epsilon = 0.1\n";
        os << "n_max = 3000\n";
        os << "out_dir = results\n";
    }

    const CliResult first = run_cli("experiment --config '" + config.string() + "'");
    REQUIRE_MESSAGE(first.status == 0, first.output);
    CHECK(first.contains("experiment owner=mlpA suspect=copy mean_d_prob="));
    CHECK(first.contains("experiment owner=mlpA suspect=other mean_d_prob="));
    CHECK(first.contains("converged_fraction="));
    CHECK(first.contains(" n=3"));

    const fs::path results = fx().dir.path() / "results";
    REQUIRE(fs::exists(results / "summary.txt"));
    REQUIRE(fs::exists(results / "histogram_mlpA.csv"));
    REQUIRE(fs::exists(results / "heatmap.csv"));

    const CliResult second = run_cli("experiment --config '" + config.string() +
                                     "' --out-dir '" + (fx().dir.path() / "rerun").string() +
                                     "'");
    REQUIRE_MESSAGE(second.status == 0, second.output);
    CHECK(read_file(results / "heatmap.csv") ==
          read_file(fx().dir.path() / "rerun" / "heatmap.csv"));
    CHECK(read_file(results / "histogram_mlpA.csv") ==
          read_file(fx().dir.path() / "rerun" / "histogram_mlpA.csv"));
    CHECK(read_file(results / "summary.txt") ==
          read_file(fx().dir.path() / "rerun" / "summary.txt"));

    // Overrides narrow the sample count without touching the config.
    const CliResult narrowed = run_cli("experiment --config '" + config.string() +
                                       "' --n-images 1 --out-dir '" +
                                       (fx().dir.path() / "narrow").string() + "'");
    REQUIRE_MESSAGE(narrowed.status == 0, narrowed.output);
    CHECK(narrowed.contains(" n=1"));
}

TEST_CASE("experiment rejects malformed configs") {
    const fs::path bad_key = fx().dir.path() / "bad_key.cfg";
    {
        std::ofstream os(bad_key);
        os << "owner_models = mlpA.nnet\n";
        os << "suspect_models = mlpA.nnet\n";
        os << "out_dir = r\n";
        os << "frobnicate = 1\n";
    }
    const CliResult unknown = run_cli("experiment --config '" + bad_key.string() + "'");
    CHECK(unknown.status == 2);
    CHECK(unknown.contains("frobnicate"));

    const fs::path dup = fx().dir.path() / "dup.cfg";
    {
        std::ofstream os(dup);
        os << "out_dir = a\n";
        os << "out_dir = b\n";
    }
    CHECK(run_cli("experiment --config '" + dup.string() + "'").status == 2);

    const fs::path no_suspects = fx().dir.path() / "no_suspects.cfg";
    {
        std::ofstream os(no_suspects);
        os << "owner_models = mlpA.nnet\n";
        os << "out_dir = r\n";
    }
    CHECK(run_cli("experiment --config '" + no_suspects.string() + "'").status == 2);

    CHECK(run_cli("experiment --config '" + (fx().dir.path() / "missing.cfg").string() + "'")
              .status == 2);
}
