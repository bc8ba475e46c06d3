// averify: data generation, training, probability-steered attacks, the
// gray-box oracle service, and ownership verification in one binary.
//
// Exit codes: 0 success, 2 usage error, 3 attack did not converge,
// 4 oracle unreachable, 1 internal error.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <thread>

#include "CLI11.hpp"
#include "averify/attack.hpp"
#include "averify/dataset.hpp"
#include "averify/metrics.hpp"
#include "averify/network.hpp"
#include "averify/oracle_service.hpp"
#include "averify/protocol.hpp"
#include "averify/tensor_io.hpp"
#include "averify/train.hpp"

namespace {

using namespace averify;

std::atomic<bool> g_shutdown{false};

void on_signal(int) { g_shutdown = true; }

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

const char* fmt(bool v) { return v ? "true" : "false"; }

ImageTensor load_image(const std::filesystem::path& path) {
    const std::string ext = path.extension().string();
    if (ext == ".pgm") return read_pgm(path);
    if (ext == ".tnsr") return ImageTensor(read_tnsr(path));
    throw std::invalid_argument("image '" + path.string() + "' must be .pgm or .tnsr");
}

// --- gen-data ---------------------------------------------------------

struct GenDataArgs {
    std::size_t k = 10;
    std::size_t per_class = 20;
    std::size_t side = 16;
    std::uint64_t seed = 1;
    std::string out;
};

int run_gen_data(const GenDataArgs& args) {
    const LabeledDataset data = builtin_synthetic_dataset(args.k, args.per_class, args.side,
                                                          args.seed);
    save_dataset_pgm(data, args.out);
    std::cout << "dataset images=" << data.size() << " classes=" << data.num_classes
              << " dir=" << args.out << "\n";
    return 0;
}

// --- train ------------------------------------------------------------

struct TrainArgs {
    std::string spec;
    std::string data;
    TrainOptions options;
    double test_fraction = 0.2;
    std::uint64_t init_seed = 1;
    std::string out;
};

int run_train(const TrainArgs& args) {
    const NetworkSpec spec = NetworkSpec::named(args.spec);
    const LabeledDataset all = load_dataset(args.data, spec.num_classes);
    const auto [train_set, test_set] = split_dataset(all, args.test_fraction);
    if (train_set.size() == 0) throw std::invalid_argument("training split is empty");
    if (test_set.size() == 0) {
        throw std::invalid_argument("held-out split is empty; lower --test-fraction");
    }

    const Network initial = init_network(spec, args.init_seed);
    const TrainResult result = train(initial, train_set, args.options);
    const double test_acc = evaluate_accuracy(result.network, test_set);
    save_model(result.network, args.out);
    std::cout << "accuracy train=" << fmt(result.train_accuracy) << " test=" << fmt(test_acc)
              << "\n";
    return 0;
}

// --- attack -----------------------------------------------------------

struct AttackArgs {
    std::string model;
    std::string image;
    std::size_t c_prime = 0;
    double p_target = 0.0;
    AttackParams params;
    std::string method = "ifdgsm";
    std::string out_image;
    std::string out_preview;
    std::string out_trace;
};

int run_attack(const AttackArgs& args) {
    const Network model = load_model(args.model);
    const ImageTensor x = load_image(args.image);
    const AttackRequest request = make_attack_request(model, x, args.c_prime, args.p_target);

    const AttackResult result = [&] {
        if (args.method == "ifdgsm") return generate_ifdgsm(request, model, args.params);
        if (args.method == "ifgsm") return generate_ifgsm(request, model, args.params);
        throw std::invalid_argument("--method must be ifdgsm or ifgsm");
    }();

    if (!args.out_image.empty()) write_tnsr(result.image.tensor(), args.out_image);
    if (!args.out_preview.empty()) write_pgm(result.image, args.out_preview);
    if (!args.out_trace.empty()) {
        std::ofstream os(args.out_trace);
        if (!os) throw std::runtime_error("cannot open " + args.out_trace);
        write_trace_csv(result.trace, os);
    }

    const ProbabilityVector probs = model.forward(result.image);
    std::cout << "attack converged=" << fmt(result.trace.converged)
              << " iterations=" << result.trace.iterations_used
              << " p_c=" << fmt(probs[request.source_class])
              << " p_cprime=" << fmt(probs[request.target_class])
              << " ssim=" << fmt(ssim(x, result.image)) << "\n";
    // The baseline method has no convergence notion; completing its
    // iteration budget is its success condition.
    if (args.method == "ifdgsm" && !result.trace.converged) return 3;
    return 0;
}

// --- serve ------------------------------------------------------------

struct ServeArgs {
    std::string model;
    std::string bind = "127.0.0.1:0";
    std::string mode = "full";
    std::string model_tag;
};

ServeOptions parse_serve_options(const ServeArgs& args) {
    ServeOptions options;
    const auto colon = args.bind.find_last_of(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == args.bind.size()) {
        throw std::invalid_argument("--bind must look like host:port, got '" + args.bind + "'");
    }
    options.host = args.bind.substr(0, colon);
    const std::string port_text = args.bind.substr(colon + 1);
    try {
        std::size_t consumed = 0;
        const unsigned long port = std::stoul(port_text, &consumed);
        if (consumed != port_text.size() || port > 65535) throw std::invalid_argument(port_text);
        options.port = static_cast<std::uint16_t>(port);
    } catch (const std::exception&) {
        throw std::invalid_argument("bad port in --bind '" + args.bind + "'");
    }

    if (args.mode == "full") {
        options.rounded_decimals = 0;
    } else if (args.mode.rfind("rounded", 0) == 0) {
        // Accept rounded:<d> and rounded(<d>).
        std::string digits = args.mode.substr(7);
        if (!digits.empty() && (digits.front() == ':' || digits.front() == '(')) {
            digits.erase(digits.begin());
        }
        if (!digits.empty() && digits.back() == ')') digits.pop_back();
        try {
            std::size_t consumed = 0;
            options.rounded_decimals = std::stoi(digits, &consumed);
            if (consumed != digits.size()) throw std::invalid_argument(digits);
        } catch (const std::exception&) {
            throw std::invalid_argument("--mode rounded needs decimals, e.g. rounded:3");
        }
        if (options.rounded_decimals < 1 || options.rounded_decimals > 15) {
            throw std::invalid_argument("--mode rounded wants 1..15 decimals, got " + digits);
        }
    } else {
        throw std::invalid_argument("--mode must be full or rounded:<d>, got '" + args.mode + "'");
    }
    options.model_tag = args.model_tag;
    return options;
}

int run_serve(const ServeArgs& args) {
    OracleServer server(load_model(args.model), parse_serve_options(args));

    struct sigaction action{};
    action.sa_handler = on_signal;
    sigaction(SIGINT, &action, nullptr);
    sigaction(SIGTERM, &action, nullptr);

    server.start();
    std::cout << "serving host=" << server.host() << " port=" << server.port() << std::endl;
    while (!g_shutdown) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    std::cout << "stopped" << std::endl;
    return 0;
}

// --- verify -----------------------------------------------------------

struct VerifyArgs {
    std::string mode;  // owner | third-party
    std::string model;
    std::string image;
    std::string adv_image;
    std::size_t c_prime = 0;
    double p_target = 0.0;
    std::string suspect_endpoint;
    std::string suspect_model;
    double threshold = kDefaultDecisionThreshold;
    double ssim_floor = kDefaultSsimFloor;
    bool owner_converged = true;
    AttackParams params;
    std::string out_adv;
};

struct SuspectHandle {
    std::unique_ptr<Network> local_model;
    std::unique_ptr<GrayBoxOracle> oracle;
};

SuspectHandle open_suspect(const VerifyArgs& args) {
    SuspectHandle handle;
    if (!args.suspect_model.empty()) {
        handle.local_model = std::make_unique<Network>(load_model(args.suspect_model));
        handle.oracle = std::make_unique<LocalOracle>(*handle.local_model);
        return handle;
    }
    std::string endpoint = args.suspect_endpoint;
    if (endpoint.empty()) {
        if (const char* env = std::getenv("AVERIFY_ENDPOINT")) endpoint = env;
    }
    if (endpoint.empty()) {
        throw std::invalid_argument(
            "no suspect given: pass --suspect host:port, --suspect-model file.nnet, "
            "or set AVERIFY_ENDPOINT");
    }
    handle.oracle = std::make_unique<RemoteOracle>(parse_endpoint(endpoint));
    return handle;
}

void print_verdict(const Verdict& v) {
    std::cout << "verdict identical=" << fmt(v.identical) << " d_prob=" << fmt(v.d_prob)
              << " ssim=" << fmt(v.ssim) << " converged=" << fmt(v.attack_converged) << "\n";
}

int run_verify(const VerifyArgs& args) {
    SuspectHandle suspect = open_suspect(args);
    VerificationRequest request{load_image(args.image), args.c_prime, args.p_target};

    if (args.mode == "owner") {
        if (args.model.empty()) throw std::invalid_argument("owner mode needs --model");
        const Network owner = load_model(args.model);
        const OwnerVerification result = owner_verify(owner, *suspect.oracle, request,
                                                      args.params, args.threshold,
                                                      args.ssim_floor);
        if (!args.out_adv.empty()) write_tnsr(result.adv_image.tensor(), args.out_adv);
        print_verdict(result.verdict);
        return 0;
    }
    if (args.mode == "third-party") {
        if (args.adv_image.empty()) throw std::invalid_argument("third-party mode needs --adv-image");
        const ImageTensor adv = load_image(args.adv_image);
        const Verdict verdict = third_party_verify(adv, request, *suspect.oracle, args.threshold,
                                                   args.owner_converged, args.ssim_floor);
        print_verdict(verdict);
        return 0;
    }
    throw std::invalid_argument("--mode must be owner or third-party, got '" + args.mode + "'");
}

// --- experiment -------------------------------------------------------

struct ExperimentArgs {
    std::string config;
    std::uint64_t seed = 0;  // 0 = take the config value
    std::size_t n_images = 0;
    std::size_t workers = 0;
    std::string out_dir;
};

std::map<std::string, std::string> parse_flat_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open config " + path.string());
    std::map<std::string, std::string> values;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument(path.string() + ":" + std::to_string(line_no) +
                                        ": expected key = value");
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw std::invalid_argument(path.string() + ":" + std::to_string(line_no) +
                                        ": empty key");
        }
        if (!values.emplace(key, value).second) {
            throw std::invalid_argument(path.string() + ":" + std::to_string(line_no) +
                                        ": duplicate key '" + key + "'");
        }
    }
    return values;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::stringstream ss(text);
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        const auto e = item.find_last_not_of(" \t");
        out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

int run_experiment(const ExperimentArgs& args) {
    const std::filesystem::path config_path(args.config);
    const std::filesystem::path base = config_path.parent_path();
    auto values = parse_flat_config(config_path);

    auto take = [&](const std::string& key) -> std::string {
        const auto it = values.find(key);
        if (it == values.end()) return {};
        std::string v = it->second;
        values.erase(it);
        return v;
    };
    auto take_double = [&](const std::string& key, double fallback) {
        const std::string v = take(key);
        return v.empty() ? fallback : std::stod(v);
    };
    auto take_size = [&](const std::string& key, std::size_t fallback) {
        const std::string v = take(key);
        return v.empty() ? fallback : static_cast<std::size_t>(std::stoull(v));
    };
    auto resolve = [&](const std::string& rel) { return (base / rel).string(); };

    // Dataset: an explicit manifest wins over synthetic parameters.
    LabeledDataset dataset;
    const std::string dataset_path = take("dataset");
    const std::size_t synth_k = take_size("k", 10);
    const std::size_t synth_per_class = take_size("per_class", 20);
    const std::size_t synth_side = take_size("side", 16);
    const std::uint64_t synth_seed = take_size("data_seed", 7);
    if (!dataset_path.empty()) {
        dataset = load_dataset(resolve(dataset_path));
    } else {
        dataset = builtin_synthetic_dataset(synth_k, synth_per_class, synth_side, synth_seed);
    }

    const std::vector<std::string> owner_paths = split_list(take("owner_models"));
    if (owner_paths.empty()) throw std::invalid_argument("config needs owner_models");
    std::vector<std::string> owner_labels = split_list(take("owner_labels"));
    if (owner_labels.empty()) {
        for (const std::string& p : owner_paths) {
            owner_labels.push_back(std::filesystem::path(p).stem().string());
        }
    }
    if (owner_labels.size() != owner_paths.size()) {
        throw std::invalid_argument("owner_labels must match owner_models in length");
    }

    const std::vector<std::string> suspect_paths = split_list(take("suspect_models"));
    const std::vector<std::string> suspect_endpoints = split_list(take("suspect_endpoints"));
    if (suspect_paths.empty() && suspect_endpoints.empty()) {
        throw std::invalid_argument("config needs suspect_models and/or suspect_endpoints");
    }
    std::vector<std::string> suspect_labels = split_list(take("suspect_labels"));
    if (suspect_labels.empty()) {
        for (const std::string& p : suspect_paths) {
            suspect_labels.push_back(std::filesystem::path(p).stem().string());
        }
        for (const std::string& e : suspect_endpoints) suspect_labels.push_back(e);
    }
    if (suspect_labels.size() != suspect_paths.size() + suspect_endpoints.size()) {
        throw std::invalid_argument("suspect_labels must cover all suspects");
    }

    // Config keys are consumed unconditionally so a CLI override never turns
    // a valid key into an "unknown key" error.
    ExperimentParams params;
    const std::size_t config_n_images = take_size("n_images", 50);
    const std::size_t config_seed = take_size("seed", 1);
    const std::size_t config_workers = take_size("workers", 1);
    params.n_images = args.n_images > 0 ? args.n_images : config_n_images;
    params.seed = args.seed > 0 ? args.seed : config_seed;
    params.workers = args.workers > 0 ? args.workers : config_workers;
    const std::string pool_text = take("p_target_pool");
    if (!pool_text.empty()) {
        params.p_target_pool.clear();
        for (const std::string& v : split_list(pool_text)) {
            params.p_target_pool.push_back(std::stod(v));
        }
    }
    params.attack.epsilon = take_double("epsilon", params.attack.epsilon);
    params.attack.alpha_com = take_double("alpha_com", params.attack.alpha_com);
    params.attack.interval = take_size("interval", params.attack.interval);
    params.attack.t_diff = take_double("t_diff", params.attack.t_diff);
    params.attack.n_max = take_size("n_max", params.attack.n_max);
    params.attack.alpha_floor = take_double("alpha_floor", params.attack.alpha_floor);

    const std::string config_out_dir = take("out_dir");
    if (args.out_dir.empty() && config_out_dir.empty()) {
        throw std::invalid_argument("config needs out_dir");
    }
    const std::filesystem::path out_dir = args.out_dir.empty()
                                              ? std::filesystem::path(resolve(config_out_dir))
                                              : std::filesystem::path(args.out_dir);
    take("threshold");  // accepted for forward compatibility; verdicts are not drawn here

    if (!values.empty()) {
        throw std::invalid_argument("unknown config key '" + values.begin()->first + "'");
    }

    // Open every suspect once; they are shared across owners.
    std::vector<std::unique_ptr<Network>> suspect_models;
    std::vector<std::unique_ptr<GrayBoxOracle>> oracles;
    std::vector<NamedOracle> suspects;
    std::size_t label_index = 0;
    for (const std::string& p : suspect_paths) {
        suspect_models.push_back(std::make_unique<Network>(load_model(resolve(p))));
        oracles.push_back(std::make_unique<LocalOracle>(*suspect_models.back()));
        suspects.push_back({suspect_labels[label_index++], oracles.back().get()});
    }
    for (const std::string& e : suspect_endpoints) {
        oracles.push_back(std::make_unique<RemoteOracle>(parse_endpoint(e)));
        suspects.push_back({suspect_labels[label_index++], oracles.back().get()});
    }

    std::filesystem::create_directories(out_dir);
    std::ofstream summary(out_dir / "summary.txt");
    if (!summary) throw std::runtime_error("cannot write summary in " + out_dir.string());

    std::vector<ExperimentReport> reports;
    for (std::size_t o = 0; o < owner_paths.size(); ++o) {
        const Network owner = load_model(resolve(owner_paths[o]));
        ExperimentReport report = run_separation_experiment(owner, suspects, dataset, params);
        report.owner_label = owner_labels[o];

        std::ofstream hist(out_dir / ("histogram_" + report.owner_label + ".csv"));
        if (!hist) throw std::runtime_error("cannot write histogram CSV");
        write_histogram_csv(report, hist);

        // With zero converged probes there is no distance evidence to
        // average; report that honestly instead of a number.
        const bool has_evidence = report.converged_count() > 0;
        for (std::size_t s = 0; s < suspects.size(); ++s) {
            const std::string line =
                "experiment owner=" + report.owner_label +
                " suspect=" + report.suspect_labels[s] +
                " mean_d_prob=" + (has_evidence ? fmt(report.mean_d_prob(s)) : "none") +
                " n=" + std::to_string(report.converged_count());
            std::cout << line << "\n";
            summary << line << "\n";
        }
        const std::string tail = "experiment owner=" + report.owner_label +
                                 " mean_ssim=" + (has_evidence ? fmt(report.mean_ssim()) : "none") +
                                 " converged_fraction=" + fmt(report.converged_fraction());
        std::cout << tail << "\n";
        summary << tail << "\n";
        reports.push_back(std::move(report));
    }

    std::ofstream heat(out_dir / "heatmap.csv");
    if (!heat) throw std::runtime_error("cannot write heatmap CSV");
    write_heatmap_csv(reports, heat);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    std::signal(SIGPIPE, SIG_IGN);
    CLI::App app{"DNN ownership verification via probability-steered adversarial queries"};
    app.require_subcommand(1);

    GenDataArgs gen_args;
    CLI::App* gen = app.add_subcommand("gen-data", "Write a synthetic labeled PGM dataset");
    gen->add_option("--k", gen_args.k, "number of classes");
    gen->add_option("--per-class", gen_args.per_class, "images per class");
    gen->add_option("--side", gen_args.side, "image side length");
    gen->add_option("--seed", gen_args.seed, "generator seed");
    gen->add_option("--out", gen_args.out, "output directory")->required();

    TrainArgs train_args;
    CLI::App* tr = app.add_subcommand("train", "Train a named architecture on a manifest dataset");
    tr->add_option("--spec", train_args.spec, "architecture: cnn-small | mlp-small")->required();
    tr->add_option("--data", train_args.data, "manifest path")->required();
    tr->add_option("--epochs", train_args.options.epochs, "training epochs");
    tr->add_option("--lr", train_args.options.learning_rate, "learning rate");
    tr->add_option("--batch", train_args.options.batch, "minibatch size");
    tr->add_option("--seed", train_args.options.seed, "shuffle seed (also init seed)");
    tr->add_option("--init-seed", train_args.init_seed, "weight init seed (defaults to --seed)");
    tr->add_option("--test-fraction", train_args.test_fraction, "held-out fraction");
    tr->add_option("--out", train_args.out, "output model path")->required();

    AttackArgs attack_args;
    CLI::App* at = app.add_subcommand("attack", "Steer a model's class probability on one image");
    at->add_option("--model", attack_args.model, "owner model (.nnet)")->required();
    at->add_option("--image", attack_args.image, "clean image (.pgm or .tnsr)")->required();
    at->add_option("--c-prime", attack_args.c_prime, "target class")->required();
    at->add_option("--p-target", attack_args.p_target, "target probability in (0, 1)")->required();
    at->add_option("--eps", attack_args.params.epsilon, "L-inf budget");
    at->add_option("--alpha-com", attack_args.params.alpha_com, "dual-gradient step size");
    at->add_option("--alpha-target", attack_args.params.alpha_target, "baseline step size");
    at->add_option("--l", attack_args.params.interval, "averaging interval");
    at->add_option("--t-diff", attack_args.params.t_diff, "band tolerance");
    at->add_option("--n-max", attack_args.params.n_max, "iteration cap");
    at->add_option("--method", attack_args.method, "ifdgsm (steered) | ifgsm (baseline)");
    at->add_option("--out-image", attack_args.out_image, "adversarial image (.tnsr)");
    at->add_option("--out-preview", attack_args.out_preview, "8-bit preview (.pgm)");
    at->add_option("--out-trace", attack_args.out_trace, "per-iteration CSV");

    ServeArgs serve_args;
    CLI::App* sv = app.add_subcommand("serve", "Serve a model as a gray-box classification API");
    sv->add_option("--model", serve_args.model, "model to serve (.nnet)")->required();
    sv->add_option("--bind", serve_args.bind, "host:port (port 0 = ephemeral)");
    sv->add_option("--mode", serve_args.mode, "full | rounded:<decimals>");
    sv->add_option("--model-tag", serve_args.model_tag, "tag echoed in responses (tests only)");

    VerifyArgs verify_args;
    CLI::App* vf = app.add_subcommand("verify", "Decide whether a suspect model is a copy");
    vf->add_option("--mode", verify_args.mode, "owner | third-party")->required();
    vf->add_option("--model", verify_args.model, "owner model (.nnet), owner mode only");
    vf->add_option("--image", verify_args.image, "clean image")->required();
    vf->add_option("--adv-image", verify_args.adv_image, "owner-produced adversarial image");
    vf->add_option("--c-prime", verify_args.c_prime, "target class")->required();
    vf->add_option("--p-target", verify_args.p_target, "target probability")->required();
    vf->add_option("--suspect", verify_args.suspect_endpoint, "suspect endpoint host:port");
    vf->add_option("--suspect-model", verify_args.suspect_model, "local suspect (.nnet)");
    vf->add_option("--threshold", verify_args.threshold, "decision threshold on d_prob");
    vf->add_option("--ssim-floor", verify_args.ssim_floor, "imperceptibility floor");
    vf->add_flag("--not-converged", [&verify_args](std::int64_t) {
        verify_args.owner_converged = false;
    }, "third-party: owner reported non-convergence");
    vf->add_option("--eps", verify_args.params.epsilon, "L-inf budget");
    vf->add_option("--alpha-com", verify_args.params.alpha_com, "dual-gradient step size");
    vf->add_option("--l", verify_args.params.interval, "averaging interval");
    vf->add_option("--t-diff", verify_args.params.t_diff, "band tolerance");
    vf->add_option("--n-max", verify_args.params.n_max, "iteration cap");
    vf->add_option("--out-adv", verify_args.out_adv, "save the adversarial image (.tnsr)");

    ExperimentArgs exp_args;
    CLI::App* ex = app.add_subcommand("experiment", "Batch separation experiment from a config");
    ex->add_option("--config", exp_args.config, "flat key=value config file")->required();
    ex->add_option("--seed", exp_args.seed, "override config seed");
    ex->add_option("--n-images", exp_args.n_images, "override sample count");
    ex->add_option("--workers", exp_args.workers, "override worker count");
    ex->add_option("--out-dir", exp_args.out_dir, "override output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    }

    if (tr->count("--init-seed") == 0) train_args.init_seed = train_args.options.seed;

    try {
        if (gen->parsed()) return run_gen_data(gen_args);
        if (tr->parsed()) return run_train(train_args);
        if (at->parsed()) return run_attack(attack_args);
        if (sv->parsed()) return run_serve(serve_args);
        if (vf->parsed()) return run_verify(verify_args);
        if (ex->parsed()) return run_experiment(exp_args);
        std::cerr << "usage error: no command\n";
        return 2;
    } catch (const OracleUnreachableError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}
