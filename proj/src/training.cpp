#include "granet/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "granet/error.hpp"
#include "granet/ops.hpp"
#include "granet/pointcloud.hpp"

namespace granet::train {

void TrainConfig::validate() const {
    if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("beta1 and beta2 must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw ConfigError("eps must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ConfigError("decay_factor must lie in (0, 1]");
    if (decay_step_epochs == 0) throw ConfigError("decay_step_epochs must be positive");
    for (double w : class_weights)
        if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("class weights must be finite and non-negative");
}

void TrainConfig::write_to(IniDocument& doc, const std::string& s) const {
    doc.set(s, "lr0", format_double(lr0));
    doc.set(s, "beta1", format_double(beta1));
    doc.set(s, "beta2", format_double(beta2));
    doc.set(s, "eps", format_double(eps));
    doc.set(s, "batch_size", std::to_string(batch_size));
    doc.set(s, "decay_factor", format_double(decay_factor));
    doc.set(s, "decay_step_epochs", std::to_string(decay_step_epochs));
    doc.set(s, "max_epochs", std::to_string(max_epochs));
    std::string w;
    for (std::size_t i = 0; i < class_weights.size(); ++i) w += (i ? "," : "") + format_double(class_weights[i]);
    if (!w.empty()) doc.set(s, "class_weights", w);
    doc.set(s, "seed", std::to_string(seed));
}

TrainConfig TrainConfig::read_from(const IniDocument& doc, const std::string& s) {
    TrainConfig c;
    for (const auto& [key, value] : doc.section(s)) {
        if (key == "lr0") c.lr0 = parse_double_value(key, value);
        else if (key == "beta1") c.beta1 = parse_double_value(key, value);
        else if (key == "beta2") c.beta2 = parse_double_value(key, value);
        else if (key == "eps") c.eps = parse_double_value(key, value);
        else if (key == "decay_factor") c.decay_factor = parse_double_value(key, value);
        else if (key == "batch_size" || key == "decay_step_epochs" || key == "max_epochs" || key == "seed") {
            const long long v = parse_int_value(key, value);
            if (v < 0) throw ConfigError(key + " must not be negative");
            if (key == "batch_size") c.batch_size = static_cast<std::size_t>(v);
            else if (key == "decay_step_epochs") c.decay_step_epochs = static_cast<std::size_t>(v);
            else if (key == "max_epochs") c.max_epochs = static_cast<std::size_t>(v);
            else c.seed = static_cast<std::uint64_t>(v);
        } else if (key == "class_weights") {
            c.class_weights.clear();
            std::stringstream ss(value);
            std::string item;
            while (std::getline(ss, item, ',')) c.class_weights.push_back(parse_double_value(key, item));
        } else {
            throw ConfigError("unknown key '" + key + "' in [" + s + "]");
        }
    }
    c.validate();
    return c;
}

double lr_schedule(std::size_t epoch, const TrainConfig& config) {
    return config.lr0 * std::pow(config.decay_factor, static_cast<double>(epoch / config.decay_step_epochs));
}

Tensor cross_entropy_loss(const Tensor& scores, std::span<const std::size_t> labels,
                          std::span<const double> class_weights) {
    if (scores.rank() != 2) throw DimensionError("scores must be [N x classes]");
    if (labels.size() != scores.dim(0)) {
        throw ContractError("got " + std::to_string(labels.size()) + " labels for " + std::to_string(scores.dim(0)) +
                            " score rows");
    }
    for (std::size_t y : labels) {
        if (y >= scores.dim(1)) {
            throw ContractError("label " + std::to_string(y) + " outside " + std::to_string(scores.dim(1)) +
                                " classes");
        }
    }
    if (!class_weights.empty() && class_weights.size() != scores.dim(1)) {
        throw ContractError("class weight count does not match the class count");
    }
    return ad::softmax_cross_entropy(scores, labels, class_weights);
}

std::vector<double> inverse_frequency_weights(const data::BlockSet& set, std::size_t class_count) {
    std::vector<double> counts(class_count, 0.0);
    for (const auto& b : set.blocks)
        for (std::size_t y : b.labels) {
            if (y >= class_count) throw ContractError("label outside the class range");
            counts[y] += 1.0;
        }
    std::vector<double> w(class_count, 0.0);
    double sum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < class_count; ++c) {
        if (counts[c] > 0.0) {
            w[c] = 1.0 / counts[c];
            sum += w[c];
            ++present;
        }
    }
    if (present == 0) throw ContractError("no labeled points");
    for (auto& v : w) v *= static_cast<double>(present) / sum;
    return w;
}

void adam_step(std::span<const Tensor> params, OptimizerState& state, const TrainConfig& config, double lr) {
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.size(), 0.0);
            state.v.emplace_back(p.size(), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw ContractError("optimizer state tracks a different parameter list");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (state.m[i].size() != params[i].size()) {
            throw ContractError("optimizer state shape mismatch for parameter " + std::to_string(i));
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i];
        if (!p.has_grad()) continue;
        const auto g = p.grad();
        auto w = p.mutable_values();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
            const double m_hat = m[j] / c1;
            const double v_hat = v[j] / c2;
            w[j] -= lr * m_hat / (std::sqrt(v_hat) + config.eps);
        }
    }
}

namespace {

void require_labels(const data::BlockSet& set, const char* what) {
    if (set.empty()) throw ContractError(std::string(what) + " set is empty");
    for (const auto& b : set.blocks)
        if (b.labels.size() != b.size()) throw ContractError(std::string(what) + " set has unlabeled points");
}

} // namespace

EvalResult validate(const net::GraNetModel& model, const data::BlockSet& set, std::span<const double> class_weights) {
    require_labels(set, "validation");
    ad::NoGradGuard guard;
    EvalResult r{0.0, metrics::ConfusionMatrix(model.config().class_count), {}};
    for (std::size_t b = 0; b < set.size(); ++b) {
        const auto& block = set.blocks[b];
        Tensor scores = model.forward(block, set.pyramids[b], false);
        r.loss += cross_entropy_loss(scores, block.labels, class_weights).item();
        const auto pred = data::argmax_rows(scores);
        const std::size_t n = block.scored == 0 ? block.size() : block.scored;
        r.confusion.accumulate(std::span(block.labels).first(n), std::span(pred).first(n));
    }
    r.loss /= static_cast<double>(set.size());
    r.report = metrics::report(r.confusion);
    return r;
}

std::string format_log_line(const EpochRecord& r) {
    return std::to_string(r.epoch) + " " + format_double(r.lr) + " " + format_double(r.train_loss) + " " +
           format_double(r.val_loss) + " " + format_double(r.val_oa);
}

TrainResult train(net::GraNetModel& model, const data::BlockSet& train_set, const data::BlockSet& val,
                  const TrainConfig& config, const TrainOptions& options) {
    config.validate();
    require_labels(train_set, "training");
    const data::BlockSet& val_set = val.empty() ? train_set : val;
    if (!val.empty()) require_labels(val, "validation");
    if (!config.class_weights.empty() && config.class_weights.size() != model.config().class_count) {
        throw ConfigError("class_weights needs one value per class");
    }

    std::ofstream log;
    if (options.log_path) {
        log.open(*options.log_path, std::ios::trunc);
        if (!log) throw IoError("cannot write " + options.log_path->string());
    }

    const std::vector<Tensor> params = model.learnable();
    OptimizerState state;
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(train_set.size());
    TrainResult result;
    bool have_best = false;

    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        if (options.on_order) options.on_order(epoch, order);
        const double lr = lr_schedule(epoch, config);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const double share = 1.0 / static_cast<double>(end - start);
            for (const auto& p : params) Tensor(p).zero_grad();
            for (std::size_t i = start; i < end; ++i) {
                const std::size_t b = order[i];
                Tensor scores = model.forward(train_set.blocks[b], train_set.pyramids[b], true);
                Tensor loss = cross_entropy_loss(scores, train_set.blocks[b].labels, config.class_weights);
                if (!std::isfinite(loss.item())) throw NumericError("training loss is not finite");
                loss_sum += loss.item();
                ad::backward(ad::scale(loss, share));
            }
            adam_step(params, state, config, lr);
        }

        const EvalResult ev = validate(model, val_set, config.class_weights);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.train_loss = loss_sum / static_cast<double>(order.size());
        rec.val_loss = ev.loss;
        rec.val_oa = ev.report.overall_accuracy;
        if (!have_best || ev.loss < result.best_val_loss) {
            have_best = true;
            result.best_val_loss = ev.loss;
            if (options.checkpoint_path) {
                net::save_checkpoint(model, *options.checkpoint_path);
                rec.checkpoint_saved = true;
                ++result.checkpoints_saved;
            }
        }
        result.history.push_back(rec);
        if (log) {
            log << format_log_line(rec) << '\n';
            log.flush();
        }
        if (options.on_epoch && !options.on_epoch(rec)) break;
    }
    return result;
}

} // namespace granet::train
