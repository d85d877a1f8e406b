#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace spikecal {

inline const std::vector<std::string> kTasks{"train", "convert", "search-phi", "search-rho", "fit-exit", "eval",
                                             "simulate"};

struct DataSpec {
    std::string source = "synth";  // synth | idx
    std::size_t classes = 10;
    std::size_t dim = 16;
    double spread = 1.0;
    std::size_t train_per_class = 200;
    std::size_t valid_per_class = 50;
    std::size_t test_per_class = 100;
    std::filesystem::path train_images, train_labels, test_images, test_labels;
    std::size_t valid_size = 1000;  // idx: taken from the end of the training file
};

struct RunConfig {
    std::string task;
    std::filesystem::path out_dir;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    DataSpec data;

    std::vector<std::size_t> hidden;
    std::size_t epochs = 30;
    double learning_rate = 0.05;
    std::size_t batch_size = 32;

    std::filesystem::path model, snn, policy;

    std::size_t T = 8;
    std::vector<std::size_t> eval_T;
    std::vector<int> phi;      // one value (uniform) or one per spiking layer
    std::vector<double> rho;
    std::size_t calib_size = 128;
    std::size_t grid_points = 128;
    std::vector<int> phi_candidates;
    std::vector<double> rho_candidates;
    std::size_t bins = 4096;
    std::optional<double> e_target;
    int e_target_uniform_phi = 2;
    std::optional<double> s_target;
    double s_target_scale = 1.5;

    std::size_t T_max = 16;
    std::optional<double> latency_target;
    double latency_fraction = 0.6;
    double beta = 0.1;
    double delta = 0.1;

    double energy_per_spike = 1e-9;

    /// Every key with its effective value as text, sorted by key.
    std::map<std::string, std::string> entries;
};

/// Keys that may appear in a config file, with their default text values.
const std::map<std::string, std::string>& config_defaults();

/// Parses `key = value` lines ('#' starts a comment), then applies
/// `overrides` ("key=value"). Unknown keys and malformed values raise ConfigError.
RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {},
                       const std::string& task = "");
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {},
                      const std::string& task = "");

}  // namespace spikecal
