// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0
//
// Command implementations behind the CLI: dataset generation, training,
// evaluation, similarity sweeps, runtime benchmarks, gradient checking, and
// depth-map dumps. Every command emits CSV/JSON artifacts stamped with the
// config hash and seed.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rayrope/config.hpp"
#include "rayrope/dataset.hpp"
#include "rayrope/grad_check.hpp"

namespace rayrope {

double psnr_from_mse(double mse);
/// +inf PSNR is capped at 99 for reports and averages.
double capped_psnr(double psnr);

struct GenDataOutcome {
    DatasetSummary summary;
    std::filesystem::path dir;
};
GenDataOutcome run_gen_data(const RunConfig& cfg);

struct TrainOutcome {
    double final_loss = 0.0;
    double final_val_psnr = 0.0;
    double mean_image_psnr = 0.0; // baseline: predict the train-set mean image
    int steps = 0;
    std::filesystem::path checkpoint;
    std::filesystem::path metrics_csv;
};
TrainOutcome run_train(const RunConfig& cfg);

struct EvalOutcome {
    double mean_psnr = 0.0;
    int samples = 0;
    std::filesystem::path csv;
};
EvalOutcome run_eval(const RunConfig& cfg);

struct SweepRow {
    double param = 0.0;  // delta-x, delta-theta, or d2 depending on the setting
    double sigma = 0.0;
    double similarity = 0.0;
};
std::vector<SweepRow> similarity_sweep(const RunConfig& cfg);
std::filesystem::path run_similarity_sweep(const RunConfig& cfg);

struct BenchRow {
    std::string strategy;
    int n_views = 0;
    std::string phase; // "forward" | "forward_backward"
    double median_ms = 0.0;
    double iqr_ms = 0.0;
    int repeats = 0;
};
std::vector<BenchRow> bench_rows(const RunConfig& cfg);
std::filesystem::path run_bench(const RunConfig& cfg);

struct GradCheckOutcome {
    GradCheckReport report;
    std::filesystem::path csv;
};
GradCheckOutcome run_grad_check(const RunConfig& cfg);

struct DumpOutcome {
    int maps_written = 0;
    std::filesystem::path dir;
};
DumpOutcome run_dump_depth(const RunConfig& cfg);

} // namespace rayrope
