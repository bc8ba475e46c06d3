#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "averify/network.hpp"
#include "averify/tensor.hpp"

namespace averify {

/// Controls for both attack loops. Defaults are the working values for
/// desk-scale models: epsilon 0.05, alpha_target 5e-4, alpha_com 1e-3,
/// interval 5, t_diff 5e-3, n_max 1000, alpha_floor 1e-10.
struct AttackParams {
    double epsilon = 0.05;        // L-inf budget around the clean image
    double alpha_target = 5e-4;   // step size of the single-gradient attack
    double alpha_com = 1e-3;      // step size of the dual-gradient attack
    double beta_c = 1.0;          // initial source-class gradient coefficient
    double beta_cprime = 1.0;     // initial target-class gradient coefficient
    std::size_t interval = 5;     // probability-averaging interval
    double t_diff = 5e-3;         // relative tolerance of the target band
    std::size_t n_max = 1000;     // iteration cap
    double alpha_floor = 1e-10;   // alpha_com below this terminates the run

    void validate() const;
};

/// One attack on one image: the source class c is the owner model's argmax
/// on x (never a dataset label), the target class c' differs from c, and
/// the target probability lies in (0, 1). Targets >= 0.5 cannot keep c
/// dominant; callers should warn (see p_target_conflicts_with_dominance).
struct AttackRequest {
    ImageTensor x;
    std::size_t source_class = 0;       // c
    std::size_t target_class = 0;       // c'
    double target_probability = 0.0;    // requested probability of c'
};

AttackRequest make_attack_request(const Network& owner, ImageTensor x, std::size_t target_class,
                                  double target_probability);

inline bool p_target_conflicts_with_dominance(double p_target) { return p_target >= 0.5; }

/// Per-iteration record. beta/alpha are the control values used for that
/// step, i.e. before any end-of-interval update at the same iteration.
struct AttackIterationRecord {
    std::size_t n = 0;             // 1-based iteration index
    double p_source = 0.0;         // probability of c after the step
    double p_target_class = 0.0;   // probability of c' after the step
    double beta_c = 0.0;
    double beta_cprime = 0.0;
    double alpha_com = 0.0;
    double zero_sign_fraction = 0.0;  // zeros in the combined sign tensor
};

struct AttackTrace {
    std::vector<AttackIterationRecord> steps;
    bool converged = false;           // step-size floor reached
    std::size_t iterations_used = 0;  // == steps.size()

    /// Mean of p_target_class over the last `window` recorded iterations.
    double tail_mean_p_target(std::size_t window) const;
};

struct AttackResult {
    ImageTensor image;
    AttackTrace trace;
};

/// One single-gradient step: Clip_{x,eps}{ x_adv - alpha * sign(grad_x C(x_adv, c')) }.
ImageTensor ifgsm_step(const ImageTensor& x_adv, const ImageTensor& x, const Network& model,
                       std::size_t c_prime, double alpha, double epsilon);

/// Baseline attack: n_max single-gradient steps toward c'. No probability
/// control; the request's target_probability is ignored and the trace is
/// never marked converged. Trace rows use the degenerate coefficients
/// beta_c = 0, beta_cprime = 1.
AttackResult generate_ifgsm(const AttackRequest& request, const Network& model,
                            const AttackParams& params);

/// The two class gradients combined before the sign:
/// beta_c * grad_x C(x_adv, c) + beta_cprime * grad_x C(x_adv, c').
Tensor combined_dual_gradient(const Network& model, const ImageTensor& x_adv, std::size_t c,
                              std::size_t c_prime, double beta_c, double beta_cprime);

/// One dual-gradient step:
/// Clip_{x,eps}{ x_adv - alpha_com * sign(combined_dual_gradient(...)) }.
/// zero_sign_fraction, when given, receives the fraction of exactly-zero
/// entries in the sign tensor (gradient cancellation diagnostic).
ImageTensor ifdgsm_step(const ImageTensor& x_adv, const ImageTensor& x, const Network& model,
                        std::size_t c, std::size_t c_prime, double alpha_com, double beta_c,
                        double beta_cprime, double epsilon,
                        double* zero_sign_fraction = nullptr);

/// Probability-steered attack. Every `interval` iterations the mean of the
/// target-class probability over that interval drives the controller:
/// below (1 - t_diff) * p_target the target coefficient increments, else
/// the source coefficient does; a mean strictly inside the tolerance band
/// halves alpha_com; alpha_com under alpha_floor ends the run converged.
/// Exhausting n_max returns the last iterate flagged converged = false.
AttackResult generate_ifdgsm(const AttackRequest& request, const Network& model,
                             const AttackParams& params);

/// CSV export: header "N,p_c,p_cprime,beta_c,beta_cprime,alpha_com", one
/// row per iteration.
void write_trace_csv(const AttackTrace& trace, std::ostream& os);

}  // namespace averify
