#include "averify/protocol.hpp"

#include <cmath>
#include <cstdio>
#include <memory>
#include <mutex>
#include <ostream>
#include <thread>

#include "averify/dataset.hpp"
#include "averify/rng.hpp"

namespace averify {

namespace {

void check_thresholds(double threshold, double ssim_floor) {
    if (!(threshold >= 0.0)) throw std::invalid_argument("decision threshold must be >= 0");
    if (!(ssim_floor >= 0.0 && ssim_floor <= 1.0)) {
        throw std::invalid_argument("ssim floor must lie in [0, 1]");
    }
}

Verdict score(double p_target, double observed, double ssim_value, bool converged,
              double threshold, double ssim_floor) {
    Verdict v;
    v.d_prob = prob_distance(p_target, observed);
    v.threshold = threshold;
    v.attack_converged = converged;
    v.identical = v.d_prob <= threshold && converged;
    v.ssim = ssim_value;
    v.ssim_floor = ssim_floor;
    v.ssim_below_floor = ssim_value < ssim_floor;
    v.observed_p_target_class = observed;
    return v;
}

}  // namespace

OwnerVerification owner_verify(const Network& owner_model, GrayBoxOracle& suspect,
                               const VerificationRequest& request,
                               const AttackParams& attack_params, double threshold,
                               double ssim_floor) {
    check_thresholds(threshold, ssim_floor);
    const AttackRequest attack_request = make_attack_request(
        owner_model, request.x, request.target_class, request.target_probability);
    AttackResult attack = generate_ifdgsm(attack_request, owner_model, attack_params);

    const ProbabilityVector probs = suspect.classify(attack.image);  // the single query
    if (probs.size() <= request.target_class) {
        throw std::runtime_error("suspect answered " + std::to_string(probs.size()) +
                                 " classes, need at least " +
                                 std::to_string(request.target_class + 1));
    }
    const double ssim_value = ssim(request.x, attack.image);

    OwnerVerification out{score(request.target_probability, probs[request.target_class],
                                ssim_value, attack.trace.converged, threshold, ssim_floor),
                          std::move(attack.image), std::move(attack.trace)};
    return out;
}

Verdict third_party_verify(const ImageTensor& adv_image, const VerificationRequest& request,
                           GrayBoxOracle& suspect, double threshold,
                           bool owner_asserted_converged, double ssim_floor) {
    check_thresholds(threshold, ssim_floor);
    if (!(request.target_probability > 0.0 && request.target_probability < 1.0)) {
        throw std::invalid_argument("target probability must lie in (0, 1)");
    }
    const ProbabilityVector probs = suspect.classify(adv_image);  // the single query
    if (probs.size() <= request.target_class) {
        throw std::runtime_error("suspect answered " + std::to_string(probs.size()) +
                                 " classes, need at least " +
                                 std::to_string(request.target_class + 1));
    }
    const double ssim_value = ssim(request.x, adv_image);
    return score(request.target_probability, probs[request.target_class], ssim_value,
                 owner_asserted_converged, threshold, ssim_floor);
}

std::size_t ExperimentReport::converged_count() const {
    std::size_t hits = 0;
    for (const ExperimentSample& s : samples) {
        if (s.converged) ++hits;
    }
    return hits;
}

double ExperimentReport::mean_d_prob(std::size_t suspect_index) const {
    if (samples.empty()) throw std::invalid_argument("report has no samples");
    if (suspect_index >= suspect_labels.size()) {
        throw std::invalid_argument("suspect index out of range");
    }
    // Only converged probes carry identity information: before the attack
    // settles, |p_target - observed| measures the steering error, not the
    // suspect's relation to the owner.
    double sum = 0.0;
    std::size_t n = 0;
    for (const ExperimentSample& s : samples) {
        if (!s.converged) continue;
        sum += s.d_prob[suspect_index];
        ++n;
    }
    if (n == 0) throw std::runtime_error("report has no converged probes");
    return sum / static_cast<double>(n);
}

double ExperimentReport::mean_ssim() const {
    if (samples.empty()) throw std::invalid_argument("report has no samples");
    double sum = 0.0;
    std::size_t n = 0;
    for (const ExperimentSample& s : samples) {
        if (!s.converged) continue;
        sum += s.ssim;
        ++n;
    }
    if (n == 0) throw std::runtime_error("report has no converged probes");
    return sum / static_cast<double>(n);
}

double ExperimentReport::converged_fraction() const {
    if (samples.empty()) throw std::invalid_argument("report has no samples");
    std::size_t hits = 0;
    for (const ExperimentSample& s : samples) {
        if (s.converged) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

ExperimentReport run_separation_experiment(const Network& owner_model,
                                           const std::vector<NamedOracle>& suspects,
                                           const LabeledDataset& dataset,
                                           const ExperimentParams& params) {
    dataset.validate();
    params.attack.validate();
    if (params.n_images == 0) throw std::invalid_argument("experiment needs n_images >= 1");
    if (params.workers == 0) throw std::invalid_argument("experiment needs workers >= 1");
    if (suspects.empty()) throw std::invalid_argument("experiment needs at least one suspect");
    for (const NamedOracle& s : suspects) {
        if (s.oracle == nullptr) throw std::invalid_argument("suspect oracle is null");
        if (s.label.empty()) throw std::invalid_argument("suspect label is empty");
    }
    if (params.p_target_pool.empty()) {
        throw std::invalid_argument("target probability pool is empty");
    }
    for (double p : params.p_target_pool) {
        if (!(p > 0.0 && p < 1.0)) {
            throw std::invalid_argument("pool probabilities must lie in (0, 1)");
        }
    }
    const std::size_t k = owner_model.spec.num_classes;

    ExperimentReport report;
    report.owner_label = "owner";
    for (const NamedOracle& s : suspects) report.suspect_labels.push_back(s.label);
    report.samples.resize(params.n_images);

    // One mutex per suspect: remote oracles hold connection state.
    std::vector<std::unique_ptr<std::mutex>> suspect_locks;
    for (std::size_t i = 0; i < suspects.size(); ++i) {
        suspect_locks.push_back(std::make_unique<std::mutex>());
    }

    std::mutex error_lock;
    std::exception_ptr first_error;

    auto work = [&](std::size_t worker_index) {
        for (std::size_t pos = worker_index; pos < params.n_images; pos += params.workers) {
            try {
                // Per-sample stream: draws are identical for any worker count.
                Rng rng(Rng::mix(params.seed, pos));
                const std::size_t image_index = rng.below(dataset.size());
                const ImageTensor& x = dataset.images[image_index];
                const std::size_t c = owner_model.forward(x).argmax();
                std::size_t c_prime = rng.below(k - 1);
                if (c_prime >= c) ++c_prime;
                const double p_target =
                    params.p_target_pool[rng.below(params.p_target_pool.size())];

                const AttackRequest request = make_attack_request(owner_model, x, c_prime, p_target);
                AttackResult attack = generate_ifdgsm(request, owner_model, params.attack);

                ExperimentSample sample;
                sample.image_index = image_index;
                sample.source_class = c;
                sample.target_class = c_prime;
                sample.p_target = p_target;
                sample.converged = attack.trace.converged;
                sample.ssim = ssim(x, attack.image);
                for (std::size_t s = 0; s < suspects.size(); ++s) {
                    ProbabilityVector probs = [&] {
                        std::lock_guard<std::mutex> guard(*suspect_locks[s]);
                        return suspects[s].oracle->classify(attack.image);
                    }();
                    const double observed = probs[c_prime];
                    sample.observed.push_back(observed);
                    sample.d_prob.push_back(prob_distance(p_target, observed));
                }
                report.samples[pos] = std::move(sample);
            } catch (...) {
                std::lock_guard<std::mutex> guard(error_lock);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    if (params.workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> threads;
        threads.reserve(params.workers);
        for (std::size_t w = 0; w < params.workers; ++w) threads.emplace_back(work, w);
        for (std::thread& t : threads) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);
    return report;
}

void write_histogram_csv(const ExperimentReport& report, std::ostream& os) {
    constexpr double kBinWidth = 0.05;
    os << "d_prob_bin_low,d_prob_bin_high,count,pair_label\n";
    if (report.samples.empty()) return;

    for (std::size_t s = 0; s < report.suspect_labels.size(); ++s) {
        std::size_t max_bin = 0;
        bool any = false;
        for (const ExperimentSample& sample : report.samples) {
            if (!sample.converged) continue;
            max_bin = std::max(
                max_bin, static_cast<std::size_t>(std::floor(sample.d_prob[s] / kBinWidth)));
            any = true;
        }
        if (!any) continue;
        std::vector<std::size_t> counts(max_bin + 1, 0);
        for (const ExperimentSample& sample : report.samples) {
            if (!sample.converged) continue;
            ++counts[static_cast<std::size_t>(std::floor(sample.d_prob[s] / kBinWidth))];
        }
        for (std::size_t b = 0; b < counts.size(); ++b) {
            char buf[128];
            std::snprintf(buf, sizeof(buf), "%g,%g,%zu,", static_cast<double>(b) * kBinWidth,
                          static_cast<double>(b + 1) * kBinWidth, counts[b]);
            os << buf << report.owner_label << "->" << report.suspect_labels[s] << "\n";
        }
    }
    if (!os) throw std::runtime_error("histogram CSV write failed");
}

void write_heatmap_csv(const std::vector<ExperimentReport>& reports, std::ostream& os) {
    os << "owner_model,suspect_model,mean_d_prob,n\n";
    for (const ExperimentReport& report : reports) {
        for (std::size_t s = 0; s < report.suspect_labels.size(); ++s) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.17g,%zu", report.mean_d_prob(s),
                          report.converged_count());
            os << report.owner_label << "," << report.suspect_labels[s] << "," << buf << "\n";
        }
    }
    if (!os) throw std::runtime_error("heatmap CSV write failed");
}

}  // namespace averify
