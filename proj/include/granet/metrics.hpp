#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace granet::metrics {

// counts[t][p]: points of true class t predicted as p.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t class_count);

    void accumulate(std::span<const std::size_t> truth, std::span<const std::size_t> predicted);
    void add(std::size_t truth, std::size_t predicted);
    // Elementwise sum with a matrix of the same size.
    void merge(const ConfusionMatrix& other);

    std::size_t class_count() const { return n_; }
    std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * n_ + predicted]; }
    std::uint64_t total() const;

private:
    std::size_t n_;
    std::vector<std::uint64_t> counts_;
};

struct ClassScores {
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    bool present = false;  // any true or predicted instance
};

struct MetricsReport {
    std::vector<ClassScores> classes;
    double overall_accuracy = 0.0;
    double average_f1 = 0.0;
};

enum class AbsentClassPolicy { Exclude, CountAsZero };

MetricsReport report(const ConfusionMatrix& cm, AbsentClassPolicy policy = AbsentClassPolicy::Exclude);

// Aligned text table; names may be empty, in which case class indices are used.
std::string format_table(const MetricsReport& r, const std::vector<std::string>& names = {});
std::string format_csv(const MetricsReport& r, const std::vector<std::string>& names = {});
void write_csv(const MetricsReport& r, const std::filesystem::path& path, const std::vector<std::string>& names = {});

} // namespace granet::metrics
