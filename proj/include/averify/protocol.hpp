#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "averify/attack.hpp"
#include "averify/dataset.hpp"
#include "averify/metrics.hpp"
#include "averify/network.hpp"
#include "averify/tensor.hpp"

namespace averify {

/// Raised when a remote oracle cannot be reached within its configured
/// retries and timeouts.
struct OracleUnreachableError : std::runtime_error {
    explicit OracleUnreachableError(const std::string& what) : std::runtime_error(what) {}
};

/// Anything that answers classification queries with a full per-class
/// probability vector. Implementations: a local Network, the TCP client
/// in oracle_service, instrumented test doubles.
class GrayBoxOracle {
public:
    virtual ~GrayBoxOracle() = default;
    virtual ProbabilityVector classify(const ImageTensor& image) = 0;
};

class LocalOracle final : public GrayBoxOracle {
public:
    explicit LocalOracle(const Network& net) : net_(&net) {}
    ProbabilityVector classify(const ImageTensor& image) override { return net_->forward(image); }

private:
    const Network* net_;
};

/// What a verifier supplies: the clean image, the target class and the
/// probability it must be steered to. The source class is derived from
/// the owner model, never taken from the request.
struct VerificationRequest {
    ImageTensor x;
    std::size_t target_class = 0;
    double target_probability = 0.0;
};

inline constexpr double kDefaultDecisionThreshold = 0.5;
inline constexpr double kDefaultSsimFloor = 0.95;

struct Verdict {
    double d_prob = 0.0;
    double threshold = 0.0;
    bool identical = false;  // d_prob <= threshold AND attack_converged
    double ssim = 0.0;
    double ssim_floor = 0.0;
    bool ssim_below_floor = false;  // reported, never a veto
    bool attack_converged = false;
    double observed_p_target_class = 0.0;
};

struct OwnerVerification {
    Verdict verdict;
    ImageTensor adv_image;
    AttackTrace trace;
};

/// Owner-side verification: generate the steered adversarial image on the
/// owner model, query the suspect exactly once, compare the observed
/// target-class probability against the requested value. Attack
/// non-convergence is reported in the verdict, not an error.
OwnerVerification owner_verify(const Network& owner_model, GrayBoxOracle& suspect,
                               const VerificationRequest& request,
                               const AttackParams& attack_params,
                               double threshold = kDefaultDecisionThreshold,
                               double ssim_floor = kDefaultSsimFloor);

/// Third-party verification: the adversarial image arrives from the owner
/// out-of-band; the third party issues the single suspect query and never
/// touches the owner model. Convergence is the owner's assertion, echoed.
Verdict third_party_verify(const ImageTensor& adv_image, const VerificationRequest& request,
                           GrayBoxOracle& suspect, double threshold = kDefaultDecisionThreshold,
                           bool owner_asserted_converged = true,
                           double ssim_floor = kDefaultSsimFloor);

struct NamedOracle {
    std::string label;
    GrayBoxOracle* oracle = nullptr;
};

struct ExperimentParams {
    std::size_t n_images = 50;
    std::vector<double> p_target_pool = {0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4};
    AttackParams attack;
    std::uint64_t seed = 1;
    std::size_t workers = 1;
};

struct ExperimentSample {
    std::size_t image_index = 0;
    std::size_t source_class = 0;
    std::size_t target_class = 0;
    double p_target = 0.0;
    bool converged = false;
    double ssim = 0.0;
    std::vector<double> observed;  // per suspect: observed p of c'
    std::vector<double> d_prob;    // per suspect
};

struct ExperimentReport {
    std::string owner_label;
    std::vector<std::string> suspect_labels;
    std::vector<ExperimentSample> samples;

    /// Number of samples whose steering attack converged.
    std::size_t converged_count() const;

    /// Statistics over converged probes only: a probe whose steering never
    /// settled measures attack error, not the suspect's identity. Both
    /// throw if the report contains no converged samples.
    double mean_d_prob(std::size_t suspect_index) const;
    double mean_ssim() const;

    /// Fraction of all samples (converged or not) that converged.
    double converged_fraction() const;
};

/// Batch harness: for each sampled image, draw c' uniformly from the
/// classes other than c and p_target uniformly from the pool, attack once
/// on the owner model, then query every suspect once with the same image.
/// Per-sample draws come from Rng(mix(seed, position)), so results do not
/// depend on the worker count.
ExperimentReport run_separation_experiment(const Network& owner_model,
                                           const std::vector<NamedOracle>& suspects,
                                           const LabeledDataset& dataset,
                                           const ExperimentParams& params);

/// CSV export, header "d_prob_bin_low,d_prob_bin_high,count,pair_label".
/// Fixed-width 0.05 bins from zero covering every converged probe;
/// pair_label is "<owner>-><suspect>".
void write_histogram_csv(const ExperimentReport& report, std::ostream& os);

/// CSV export, header "owner_model,suspect_model,mean_d_prob,n"; one row
/// per (owner, suspect) pair across the given reports. n counts the
/// converged probes the mean is taken over.
void write_heatmap_csv(const std::vector<ExperimentReport>& reports, std::ostream& os);

}  // namespace averify
