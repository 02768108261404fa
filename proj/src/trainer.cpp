#include "mvtm/trainer.hpp"

#include "mvtm/errors.hpp"
#include "mvtm/format.hpp"

#include <boost/random/uniform_int_distribution.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace mvtm {

Strategy parse_strategy(const std::string& name) {
    if (name == "cpp" || name == "CPP") return Strategy::Cpp;
    if (name == "fo" || name == "FO") return Strategy::Fo;
    if (name == "or" || name == "OR") return Strategy::Or;
    throw InputError("unknown strategy '" + name + "' (expected cpp, fo or or)");
}

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::Cpp: return "cpp";
        case Strategy::Fo: return "fo";
        case Strategy::Or: return "or";
    }
    return "cpp";
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw InputError("batch_size must be at least 1");
    if (max_epochs < 1) throw InputError("max_epochs must be at least 1");
    if (patience < 0 || patience > max_epochs) throw InputError("patience must lie in [0, max_epochs]");
    if (!(initial_lr > 0.0)) throw InputError("initial_lr must be positive");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw InputError("epsilon must lie in (0, 1)");
    if (!(g > 0.0)) throw InputError("g must be positive");
    if (m_max < 1) throw InputError("m_max must be at least 1");
}

bool TrainConfig::reorders_after(int completed_epochs) const {
    if (!reorder_epochs.empty()) {
        for (int e : reorder_epochs)
            if (e == completed_epochs) return true;
        return false;
    }
    for (int e = 4; e <= max_epochs; e *= 2)
        if (e == completed_epochs) return true;
    return false;
}

void adam_step(Eigen::VectorXd& theta, AdamState& state, const Eigen::VectorXd& gradient, double lr) {
    if (state.first.size() != theta.size()) {
        state.first = Eigen::VectorXd::Zero(theta.size());
        state.second = Eigen::VectorXd::Zero(theta.size());
        state.steps = 0;
    }
    ++state.steps;
    state.first = kAdamBeta1 * state.first + (1.0 - kAdamBeta1) * gradient;
    state.second = kAdamBeta2 * state.second + (1.0 - kAdamBeta2) * gradient.cwiseAbs2();
    const double c1 = 1.0 - std::pow(kAdamBeta1, state.steps);
    const double c2 = 1.0 - std::pow(kAdamBeta2, state.steps);
    const Eigen::VectorXd step =
        lr * (state.first / c1).array() / ((state.second / c2).array().sqrt() + kAdamEps);
    if (!step.allFinite()) throw NumericalError("non-finite Adam update");
    theta += step;
}

double cosine_lr(int epoch, const TrainConfig& config) {
    const double frac = static_cast<double>(epoch) / static_cast<double>(config.max_epochs);
    return config.initial_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

OrderedProblem rebuild_ordering(const TrainingProblem& problem, const HyperParams& theta, double epsilon, int m_max) {
    const Eigen::MatrixXd latent = decode_latent(theta.latent_triangle, problem.latent_basis);
    const auto points = augment_locations(problem.sites, latent);
    const int m = conditioning_size(theta.theta_q, epsilon, m_max);
    OrderedProblem out;
    out.plan = build_plan(points, m, problem.block_last);
    if (const auto zeros = out.plan.zero_distance_positions(); !zeros.empty())
        throw InputError("duplicate augmented locations: zero nearest-neighbour distance at ordered position " +
                         std::to_string(zeros.front()));
    out.train = extract_components(problem.train, points, out.plan);
    out.validation = extract_components(problem.validation, points, out.plan);
    return out;
}

namespace {

std::vector<int> shuffled(int count, std::mt19937_64& rng) {
    std::vector<int> idx(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) idx[i] = i;
    for (int i = count - 1; i > 0; --i) {
        boost::random::uniform_int_distribution<int> pick(0, i);
        std::swap(idx[i], idx[pick(rng)]);
    }
    return idx;
}

}  // namespace

FitResult fit(const TrainingProblem& problem, const HyperParams& theta0, const TrainConfig& config) {
    config.validate();
    if (problem.train.cols() != static_cast<Eigen::Index>(problem.sites.size()) ||
        problem.validation.cols() != problem.train.cols())
        throw InputError("training and validation data must have one column per site");
    const ModelContext ctx{problem.num_processes, config.g};

    OrderedProblem ordered = rebuild_ordering(problem, theta0, config.epsilon, config.m_max);
    Eigen::VectorXd theta = theta0.to_vector();
    AdamState adam;
    std::mt19937_64 rng(config.seed);

    FitResult result;
    result.best = theta0;
    result.best_loglik = -std::numeric_limits<double>::infinity();
    result.plan = ordered.plan;
    int patience_counter = 0;
    const int total = static_cast<int>(ordered.train.size());

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        const double lr = cosine_lr(epoch, config);
        const auto order = shuffled(total, rng);
        double train_obj = 0.0;
        int batch_index = 0;
        for (int start = 0; start < total; start += config.batch_size, ++batch_index) {
            const int stop = std::min(total, start + config.batch_size);
            const std::span<const int> members(order.data() + start, static_cast<std::size_t>(stop - start));
            ObjectiveValue obj;
            try {
                obj = batch_value_and_gradient(ordered.train, members, HyperParams::from_vector(theta), ctx);
            } catch (const std::exception& e) {
                throw NumericalError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index) +
                                     ": " + e.what());
            }
            train_obj += obj.value;
            if (config.strategy == Strategy::Cpp) obj.gradient.tail(theta.size() - HyperParams::kBaseCount).setZero();
            adam_step(theta, adam, obj.gradient, lr);
        }

        const HyperParams current = HyperParams::from_vector(theta);
        double val_obj;
        try {
            val_obj = batch_loglik(ordered.validation, current, ctx);
        } catch (const std::exception& e) {
            throw NumericalError("epoch " + std::to_string(epoch) + ", validation: " + e.what());
        }
        if (val_obj > result.best_loglik) {
            result.best_loglik = val_obj;
            result.best = current;
            patience_counter = 0;
        } else {
            ++patience_counter;
        }

        TraceRow row{epoch, train_obj, val_obj, lr, false, patience_counter};
        if (patience_counter >= config.patience) {
            result.trace.push_back(row);
            break;
        }
        if (config.strategy == Strategy::Or && config.reorders_after(epoch + 1)) {
            ordered = rebuild_ordering(problem, current, config.epsilon, config.m_max);
            result.plan = ordered.plan;
            result.best_loglik = batch_loglik(ordered.validation, current, ctx);
            result.best = current;
            patience_counter = 0;
            row.reordered = true;
            row.patience_counter = 0;
        }
        result.trace.push_back(row);
    }
    return result;
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace) {
    out << "epoch,train_obj,val_obj,lr,reordered,patience_counter\n";
    for (const auto& r : trace)
        out << r.epoch << ',' << format_double(r.train_obj) << ',' << format_double(r.val_obj) << ','
            << format_double(r.lr) << ',' << (r.reordered ? 1 : 0) << ',' << r.patience_counter << '\n';
}

}  // namespace mvtm
