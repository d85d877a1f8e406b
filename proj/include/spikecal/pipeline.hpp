#pragma once

#include "spikecal/adaptive_exit.hpp"
#include "spikecal/ann.hpp"
#include "spikecal/calibration.hpp"
#include "spikecal/config.hpp"
#include "spikecal/error.hpp"
#include "spikecal/report.hpp"
#include "spikecal/search.hpp"

namespace spikecal {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitInfeasible = 4;
inline constexpr int kExitNumeric = 5;

int exit_code(ErrorKind kind);

struct DataSplits {
    Dataset train, valid, test;
};

/// Train/valid/test splits; synthetic splits use separate seed streams.
DataSplits load_data(const RunConfig& config);
/// The first calib_size training samples.
Dataset calibration_set(const RunConfig& config, const Dataset& train);

/// Broadcasts a single phi/rho to every spiking layer.
CalibrationPlan make_plan(const RunConfig& config, std::size_t spiking_layers);

double snn_accuracy(const ConvertedSNN& snn, const Dataset& data, std::size_t T, std::size_t workers = 1);

/// Network for `task = train`: optional flatten, then the configured hidden layers.
NetworkDef make_network(const RunConfig& config, const Shape& sample_shape);

struct RunOutcome {
    Json report;
    int exit_code = kExitOk;
};

/// Executes config.task, writes `<task>_report.json` and the stage artifacts
/// into config.out_dir. Errors are caught and reported with status "failed".
RunOutcome run(const RunConfig& config);

/// The report without its wall-clock field.
Json deterministic_part(Json report);

}  // namespace spikecal
