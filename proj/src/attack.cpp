#include "averify/attack.hpp"

#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace averify {

void AttackParams::validate() const {
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
    if (!(alpha_target > 0.0)) throw std::invalid_argument("alpha_target must be positive");
    if (!(alpha_com > 0.0)) throw std::invalid_argument("alpha_com must be positive");
    if (!(beta_c >= 1.0) || !(beta_cprime >= 1.0)) {
        throw std::invalid_argument("gradient coefficients must start at >= 1");
    }
    if (interval == 0) throw std::invalid_argument("averaging interval must be >= 1");
    if (!(t_diff > 0.0 && t_diff < 1.0)) throw std::invalid_argument("t_diff must lie in (0, 1)");
    if (!(alpha_floor > 0.0)) throw std::invalid_argument("alpha_floor must be positive");
}

AttackRequest make_attack_request(const Network& owner, ImageTensor x, std::size_t target_class,
                                  double target_probability) {
    if (target_class >= owner.spec.num_classes) {
        throw std::invalid_argument("target class " + std::to_string(target_class) +
                                    " out of range for k = " +
                                    std::to_string(owner.spec.num_classes));
    }
    if (!(target_probability > 0.0 && target_probability < 1.0)) {
        throw std::invalid_argument("target probability must lie in (0, 1), got " +
                                    std::to_string(target_probability));
    }
    const std::size_t source_class = owner.forward(x).argmax();
    if (source_class == target_class) {
        throw std::invalid_argument("target class equals the model's own prediction (" +
                                    std::to_string(target_class) + "); pick a different class");
    }
    return AttackRequest{std::move(x), source_class, target_class, target_probability};
}

namespace {

void validate_request(const AttackRequest& request, const Network& model) {
    if (request.x.tensor().shape != model.spec.input_shape) {
        throw std::invalid_argument("attack image shape " +
                                    shape_to_string(request.x.tensor().shape) +
                                    " does not match model input " +
                                    shape_to_string(model.spec.input_shape));
    }
    const std::size_t k = model.spec.num_classes;
    if (request.source_class >= k || request.target_class >= k) {
        throw std::invalid_argument("attack classes out of range for k = " + std::to_string(k));
    }
    if (request.source_class == request.target_class) {
        throw std::invalid_argument("source and target class must differ");
    }
    if (!(request.target_probability > 0.0 && request.target_probability < 1.0)) {
        throw std::invalid_argument("target probability must lie in (0, 1)");
    }
}

}  // namespace

double AttackTrace::tail_mean_p_target(std::size_t window) const {
    if (window == 0 || window > steps.size()) {
        throw std::invalid_argument("trace window " + std::to_string(window) +
                                    " out of range for " + std::to_string(steps.size()) +
                                    " recorded iterations");
    }
    double sum = 0.0;
    for (std::size_t i = steps.size() - window; i < steps.size(); ++i) {
        sum += steps[i].p_target_class;
    }
    return sum / static_cast<double>(window);
}

ImageTensor ifgsm_step(const ImageTensor& x_adv, const ImageTensor& x, const Network& model,
                       std::size_t c_prime, double alpha, double epsilon) {
    const Tensor grad = input_gradient(model, x_adv, c_prime);
    Tensor candidate = x_adv.tensor();
    for (std::size_t i = 0; i < candidate.size(); ++i) {
        candidate.data[i] -= alpha * sign(grad.data[i]);
    }
    return clip_ball(candidate, x, epsilon);
}

AttackResult generate_ifgsm(const AttackRequest& request, const Network& model,
                            const AttackParams& params) {
    params.validate();
    validate_request(request, model);

    AttackResult result{request.x, {}};
    result.trace.steps.reserve(params.n_max);
    for (std::size_t n = 1; n <= params.n_max; ++n) {
        result.image = ifgsm_step(result.image, request.x, model, request.target_class,
                                  params.alpha_target, params.epsilon);
        const ProbabilityVector probs = model.forward(result.image);
        AttackIterationRecord rec;
        rec.n = n;
        rec.p_source = probs[request.source_class];
        rec.p_target_class = probs[request.target_class];
        rec.beta_c = 0.0;
        rec.beta_cprime = 1.0;
        rec.alpha_com = params.alpha_target;
        result.trace.steps.push_back(rec);
    }
    result.trace.converged = false;
    result.trace.iterations_used = result.trace.steps.size();
    return result;
}

Tensor combined_dual_gradient(const Network& model, const ImageTensor& x_adv, std::size_t c,
                              std::size_t c_prime, double beta_c, double beta_cprime) {
    if (c == c_prime) throw std::invalid_argument("source and target class must differ");
    const Tensor grad_c = input_gradient(model, x_adv, c);
    const Tensor grad_cprime = input_gradient(model, x_adv, c_prime);
    Tensor combined(grad_c.shape);
    for (std::size_t i = 0; i < combined.size(); ++i) {
        combined.data[i] = beta_c * grad_c.data[i] + beta_cprime * grad_cprime.data[i];
    }
    return combined;
}

ImageTensor ifdgsm_step(const ImageTensor& x_adv, const ImageTensor& x, const Network& model,
                        std::size_t c, std::size_t c_prime, double alpha_com, double beta_c,
                        double beta_cprime, double epsilon, double* zero_sign_fraction) {
    const Tensor grad = combined_dual_gradient(model, x_adv, c, c_prime, beta_c, beta_cprime);
    Tensor candidate = x_adv.tensor();
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < candidate.size(); ++i) {
        const double s = sign(grad.data[i]);
        if (s == 0.0) ++zeros;
        candidate.data[i] -= alpha_com * s;
    }
    if (zero_sign_fraction != nullptr) {
        *zero_sign_fraction = static_cast<double>(zeros) / static_cast<double>(candidate.size());
    }
    return clip_ball(candidate, x, epsilon);
}

AttackResult generate_ifdgsm(const AttackRequest& request, const Network& model,
                             const AttackParams& params) {
    params.validate();
    validate_request(request, model);

    AttackResult result{request.x, {}};
    double beta_c = params.beta_c;
    double beta_cprime = params.beta_cprime;
    double alpha_com = params.alpha_com;

    for (std::size_t n = 1; n <= params.n_max; ++n) {
        double zero_fraction = 0.0;
        result.image =
            ifdgsm_step(result.image, request.x, model, request.source_class,
                        request.target_class, alpha_com, beta_c, beta_cprime, params.epsilon,
                        &zero_fraction);
        const ProbabilityVector probs = model.forward(result.image);
        AttackIterationRecord rec;
        rec.n = n;
        rec.p_source = probs[request.source_class];
        rec.p_target_class = probs[request.target_class];
        rec.beta_c = beta_c;
        rec.beta_cprime = beta_cprime;
        rec.alpha_com = alpha_com;
        rec.zero_sign_fraction = zero_fraction;
        result.trace.steps.push_back(rec);

        if (n % params.interval == 0) {
            const double mean = result.trace.tail_mean_p_target(params.interval);
            const double lo = (1.0 - params.t_diff) * request.target_probability;
            const double hi = (1.0 + params.t_diff) * request.target_probability;
            if (mean < lo) {
                beta_cprime += 1.0;
            } else {
                beta_c += 1.0;
            }
            if (mean > lo && mean < hi) alpha_com *= 0.5;
            if (alpha_com < params.alpha_floor) {
                result.trace.converged = true;
                break;
            }
        }
    }
    result.trace.iterations_used = result.trace.steps.size();
    return result;
}

void write_trace_csv(const AttackTrace& trace, std::ostream& os) {
    os << "N,p_c,p_cprime,beta_c,beta_cprime,alpha_com\n";
    char buf[160];
    for (const AttackIterationRecord& rec : trace.steps) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", rec.n, rec.p_source,
                      rec.p_target_class, rec.beta_c, rec.beta_cprime, rec.alpha_com);
        os << buf;
    }
    if (!os) throw std::runtime_error("trace CSV write failed");
}

}  // namespace averify
