#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lineident/metrics.hpp"

namespace lineident {

// Sampling box for random line generation. Buffer capacities are drawn as
// integers from [ceil(n_mult_lo * max(td_j, td_j+1)), floor(n_mult_hi * max)]
// (bounds rounded inward).
struct SamplingRanges {
    double e_lo = 0.7, e_hi = 0.95;
    double td_lo = 3.0, td_hi = 20.0;
    double cv_lo = 0.2, cv_hi = 1.0;
    double n_mult_lo = 1.0, n_mult_hi = 3.0;
};

// Inclusive integer capacity bounds for a buffer between machines with mean
// downtimes td_a and td_b.
std::pair<int, int> buffer_capacity_bounds(double td_a, double td_b, const SamplingRanges& ranges);

// Line i is drawn from the stream mix_seed(seed, i); draw order is fixed
// (e block, td block, cv_up block, cv_down block, then capacities).
std::vector<LineConfig> generate_lines(int m, int count, const SamplingRanges& ranges,
                                       std::uint64_t seed);

struct Dataset {
    int m = 0;
    std::vector<std::vector<double>> predictors;  // 4M + (M-1) per row
    std::vector<std::vector<double>> responses;   // 1 + 8(M-1), canonical order

    std::size_t rows() const { return predictors.size(); }
};

// Simulates every line and records the averaged metric vector. Line i uses
// base seed mix_seed(cfg.base_seed, i). Work is distributed over threads but
// rows land in input order.
Dataset build_dataset(const std::vector<LineConfig>& lines, const SimConfig& cfg,
                      int threads = 0);

// Random split without replacement; the train part receives
// floor(train_fraction * rows) rows. Deterministic in the seed.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double train_fraction,
                                          std::uint64_t seed);

// CSV with header e_1..e_M,td_1..td_M,cvu_1..cvu_M,cvd_1..cvd_M,
// n_1..n_{M-1},PR,<canonical buffer metrics>. Values round-trip exactly.
void save_dataset_csv(const Dataset& data, const std::string& path);
Dataset load_dataset_csv(const std::string& path);

// Line tables share the predictor column layout minus the response columns.
void save_lines_csv(const std::vector<LineConfig>& lines, const std::string& path);
std::vector<LineConfig> load_lines_csv(const std::string& path);

// JSON sidecar describing how a dataset (or line table) was produced.
struct DatasetMeta {
    int format_version = 1;
    std::string kind;  // "lines" or "dataset"
    int m = 0;
    std::int64_t rows = 0;
    std::uint64_t seed = 0;
    SimConfig sim;           // meaningful for kind == "dataset"
    bool has_sim = false;
    SamplingRanges ranges;   // meaningful for kind == "lines"
    bool has_ranges = false;
};

std::string dataset_meta_to_json(const DatasetMeta& meta);
DatasetMeta dataset_meta_from_json(const std::string& text);

}  // namespace lineident
