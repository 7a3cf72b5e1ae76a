#include "granet/metrics.hpp"

#include <cstdio>
#include <fstream>

#include "granet/error.hpp"

namespace granet::metrics {

ConfusionMatrix::ConfusionMatrix(std::size_t class_count) : n_(class_count), counts_(class_count * class_count, 0) {
    if (class_count == 0) throw ContractError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
    if (truth >= n_ || predicted >= n_) {
        throw ContractError("class pair (" + std::to_string(truth) + ", " + std::to_string(predicted) +
                            ") outside " + std::to_string(n_) + " classes");
    }
    ++counts_[truth * n_ + predicted];
}

void ConfusionMatrix::accumulate(std::span<const std::size_t> truth, std::span<const std::size_t> predicted) {
    if (truth.size() != predicted.size()) {
        throw ContractError("truth and prediction lengths differ (" + std::to_string(truth.size()) + " vs " +
                            std::to_string(predicted.size()) + ")");
    }
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] >= n_ || predicted[i] >= n_) {
            throw ContractError("class label outside " + std::to_string(n_) + " classes at position " +
                                std::to_string(i));
        }
    }
    for (std::size_t i = 0; i < truth.size(); ++i) ++counts_[truth[i] * n_ + predicted[i]];
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.n_ != n_) throw ContractError("cannot merge confusion matrices of different sizes");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
}

MetricsReport report(const ConfusionMatrix& cm, AbsentClassPolicy policy) {
    const std::uint64_t total = cm.total();
    if (total == 0) throw ContractError("cannot report on an empty confusion matrix");
    const std::size_t n = cm.class_count();
    MetricsReport r;
    r.classes.resize(n);
    std::uint64_t trace = 0;
    double f1_sum = 0.0;
    std::size_t f1_count = 0;
    for (std::size_t c = 0; c < n; ++c) {
        std::uint64_t tp = cm.at(c, c), row = 0, col = 0;
        for (std::size_t j = 0; j < n; ++j) {
            row += cm.at(c, j);
            col += cm.at(j, c);
        }
        trace += tp;
        auto& s = r.classes[c];
        s.present = row + col > 0;
        s.precision = col == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(col);
        s.recall = row == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(row);
        s.f1 = s.precision + s.recall == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / (s.precision + s.recall);
        if (s.present || policy == AbsentClassPolicy::CountAsZero) {
            f1_sum += s.f1;
            ++f1_count;
        }
    }
    r.overall_accuracy = static_cast<double>(trace) / static_cast<double>(total);
    r.average_f1 = f1_count == 0 ? 0.0 : f1_sum / static_cast<double>(f1_count);
    return r;
}

namespace {

std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::string class_name(const std::vector<std::string>& names, std::size_t c) {
    return c < names.size() ? names[c] : std::to_string(c);
}

} // namespace

std::string format_table(const MetricsReport& r, const std::vector<std::string>& names) {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "%-22s %9s %9s %9s\n", "class", "precision", "recall", "f1");
    out += line;
    for (std::size_t c = 0; c < r.classes.size(); ++c) {
        const auto& s = r.classes[c];
        std::snprintf(line, sizeof line, "%-22s %9.4f %9.4f %9.4f%s\n", class_name(names, c).c_str(), s.precision,
                      s.recall, s.f1, s.present ? "" : "  (absent)");
        out += line;
    }
    std::snprintf(line, sizeof line, "%-22s %9.4f\n%-22s %9.4f\n", "OA", r.overall_accuracy, "AvgF1", r.average_f1);
    out += line;
    return out;
}

std::string format_csv(const MetricsReport& r, const std::vector<std::string>& names) {
    std::string out = "class,precision,recall,f1\n";
    for (std::size_t c = 0; c < r.classes.size(); ++c) {
        const auto& s = r.classes[c];
        out += class_name(names, c) + "," + fixed4(s.precision) + "," + fixed4(s.recall) + "," + fixed4(s.f1) + "\n";
    }
    out += "OA,,," + fixed4(r.overall_accuracy) + "\n";
    out += "AvgF1,,," + fixed4(r.average_f1) + "\n";
    return out;
}

void write_csv(const MetricsReport& r, const std::filesystem::path& path, const std::vector<std::string>& names) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f << format_csv(r, names);
    if (!f) throw IoError("failed writing " + path.string());
}

} // namespace granet::metrics
