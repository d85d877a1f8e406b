#include "spikecal/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "spikecal/error.hpp"

namespace spikecal {

const std::map<std::string, std::string>& config_defaults()
{
    static const std::map<std::string, std::string> d{
        {"task", ""},
        {"out_dir", "out"},
        {"seed", "0"},
        {"workers", "1"},
        {"data.source", "synth"},
        {"data.classes", "10"},
        {"data.dim", "16"},
        {"data.spread", "1.0"},
        {"data.train_per_class", "200"},
        {"data.valid_per_class", "50"},
        {"data.test_per_class", "100"},
        {"data.train_images", ""},
        {"data.train_labels", ""},
        {"data.test_images", ""},
        {"data.test_labels", ""},
        {"data.valid_size", "1000"},
        {"train.hidden", "128"},
        {"train.epochs", "30"},
        {"train.learning_rate", "0.05"},
        {"train.batch_size", "32"},
        {"model", ""},
        {"snn", ""},
        {"policy", ""},
        {"T", "8"},
        {"eval_T", "2,4,8"},
        {"phi", "1"},
        {"rho", "1"},
        {"calib_size", "128"},
        {"grid_points", "128"},
        {"phi_candidates", "1,2,4,8"},
        {"rho_candidates", "1,2,4"},
        {"bins", "4096"},
        {"e_target", ""},
        {"e_target_uniform_phi", "2"},
        {"s_target", ""},
        {"s_target_scale", "1.5"},
        {"T_max", "16"},
        {"latency_target", ""},
        {"latency_fraction", "0.6"},
        {"beta", "0.1"},
        {"delta", "0.1"},
        {"energy_per_spike", "1e-9"},
    };
    return d;
}

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

void assign(std::map<std::string, std::string>& m, const std::string& key, const std::string& value,
            const std::string& where)
{
    if (!config_defaults().contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    m[key] = value;
}

template <class T>
T number(const std::string& key, const std::string& text)
{
    T v{};
    const char* end = text.data() + text.size();
    auto [p, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || p != end || text.empty())
        throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
    return v;
}

double real(const std::string& key, const std::string& text)
{
    const double v = number<double>(key, text);
    if (!std::isfinite(v)) throw ConfigError("config key '" + key + "' must be finite");
    return v;
}

template <class T, class Parse>
std::vector<T> list(const std::string& key, const std::string& text, Parse parse)
{
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse(key, trim(item)));
    if (out.empty()) throw ConfigError("config key '" + key + "' needs at least one value");
    return out;
}

std::size_t positive(const std::string& key, const std::string& text)
{
    const auto v = number<std::size_t>(key, text);
    if (v == 0) throw ConfigError("config key '" + key + "' must be >= 1");
    return v;
}

double positive_real(const std::string& key, const std::string& text)
{
    const double v = real(key, text);
    if (!(v > 0.0)) throw ConfigError("config key '" + key + "' must be positive");
    return v;
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides, const std::string& task)
{
    std::map<std::string, std::string> m = config_defaults();
    std::istringstream in(text);
    std::string line;
    for (std::size_t no = 1; std::getline(in, line); ++no) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(no) + ": expected key = value");
        assign(m, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), "config line " + std::to_string(no));
    }
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
        assign(m, trim(o.substr(0, eq)), trim(o.substr(eq + 1)), "--set");
    }
    if (!task.empty()) m["task"] = task;

    RunConfig c;
    c.task = m["task"];
    if (std::find(kTasks.begin(), kTasks.end(), c.task) == kTasks.end())
        throw ConfigError("unknown task '" + c.task + "'");
    c.out_dir = m["out_dir"];
    if (c.out_dir.empty()) throw ConfigError("config key 'out_dir' must not be empty");
    c.seed = number<std::uint64_t>("seed", m["seed"]);
    c.workers = positive("workers", m["workers"]);

    c.data.source = m["data.source"];
    if (c.data.source != "synth" && c.data.source != "idx")
        throw ConfigError("config key 'data.source' must be synth or idx");
    c.data.classes = number<std::size_t>("data.classes", m["data.classes"]);
    if (c.data.classes < 2) throw ConfigError("config key 'data.classes' must be >= 2");
    c.data.dim = positive("data.dim", m["data.dim"]);
    c.data.spread = real("data.spread", m["data.spread"]);
    if (c.data.spread < 0.0) throw ConfigError("config key 'data.spread' must be >= 0");
    c.data.train_per_class = positive("data.train_per_class", m["data.train_per_class"]);
    c.data.valid_per_class = positive("data.valid_per_class", m["data.valid_per_class"]);
    c.data.test_per_class = positive("data.test_per_class", m["data.test_per_class"]);
    c.data.train_images = m["data.train_images"];
    c.data.train_labels = m["data.train_labels"];
    c.data.test_images = m["data.test_images"];
    c.data.test_labels = m["data.test_labels"];
    c.data.valid_size = positive("data.valid_size", m["data.valid_size"]);
    if (c.data.source == "idx" && (c.data.train_images.empty() || c.data.train_labels.empty() ||
                                   c.data.test_images.empty() || c.data.test_labels.empty()))
        throw ConfigError("data.source = idx needs data.train_images, data.train_labels, data.test_images, "
                          "data.test_labels");

    c.hidden = list<std::size_t>("train.hidden", m["train.hidden"], positive);
    c.epochs = positive("train.epochs", m["train.epochs"]);
    c.learning_rate = positive_real("train.learning_rate", m["train.learning_rate"]);
    c.batch_size = positive("train.batch_size", m["train.batch_size"]);

    c.model = m["model"].empty() ? c.out_dir / "model.json" : std::filesystem::path(m["model"]);
    c.snn = m["snn"].empty() ? c.out_dir / "snn.json" : std::filesystem::path(m["snn"]);
    c.policy = m["policy"].empty() ? c.out_dir / "policy.json" : std::filesystem::path(m["policy"]);

    c.T = positive("T", m["T"]);
    c.eval_T = list<std::size_t>("eval_T", m["eval_T"], positive);
    auto phi_value = [](const std::string& k, const std::string& t) {
        const int v = number<int>(k, t);
        if (v < 1) throw ConfigError("config key '" + k + "': phi values must be >= 1");
        return v;
    };
    auto rho_value = [](const std::string& k, const std::string& t) {
        const double v = real(k, t);
        if (!(v >= 1.0)) throw ConfigError("config key '" + k + "': rho values must be >= 1");
        return v;
    };
    c.phi = list<int>("phi", m["phi"], phi_value);
    c.rho = list<double>("rho", m["rho"], rho_value);
    c.calib_size = positive("calib_size", m["calib_size"]);
    c.grid_points = positive("grid_points", m["grid_points"]);
    c.phi_candidates = list<int>("phi_candidates", m["phi_candidates"], phi_value);
    c.rho_candidates = list<double>("rho_candidates", m["rho_candidates"], rho_value);
    c.bins = positive("bins", m["bins"]);
    if (!m["e_target"].empty()) c.e_target = positive_real("e_target", m["e_target"]);
    c.e_target_uniform_phi = phi_value("e_target_uniform_phi", m["e_target_uniform_phi"]);
    if (!m["s_target"].empty()) c.s_target = real("s_target", m["s_target"]);
    if (c.s_target && *c.s_target < 0.0) throw ConfigError("config key 's_target' must be >= 0");
    c.s_target_scale = positive_real("s_target_scale", m["s_target_scale"]);

    c.T_max = positive("T_max", m["T_max"]);
    if (!m["latency_target"].empty()) c.latency_target = positive_real("latency_target", m["latency_target"]);
    c.latency_fraction = positive_real("latency_fraction", m["latency_fraction"]);
    if (c.latency_fraction > 1.0) throw ConfigError("config key 'latency_fraction' must be <= 1");
    c.beta = real("beta", m["beta"]);
    if (c.beta < 0.0) throw ConfigError("config key 'beta' must be >= 0");
    c.delta = positive_real("delta", m["delta"]);
    c.energy_per_spike = positive_real("energy_per_spike", m["energy_per_spike"]);

    c.entries = std::move(m);
    return c;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides,
                      const std::string& task)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), overrides, task);
}

}  // namespace spikecal
