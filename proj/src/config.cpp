#include "qkdsim/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace qkdsim {

namespace {

using Json = nlohmann::ordered_json;

void require_known_keys(const Json& obj, const std::string& where,
                        const std::set<std::string>& allowed) {
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key))
            throw ConfigError("config: unknown key '" + key + "' in " + where);
    }
}

double get_num(const Json& obj, const char* key, double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number())
        throw ConfigError(std::string("config: '") + key + "' must be a number");
    return obj[key].get<double>();
}

std::uint64_t get_u64(const Json& obj, const char* key, std::uint64_t fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number_unsigned() && !obj[key].is_number_integer())
        throw ConfigError(std::string("config: '") + key +
                          "' must be a non-negative integer");
    const auto v = obj[key].get<std::int64_t>();
    if (v < 0)
        throw ConfigError(std::string("config: '") + key + "' must be >= 0");
    return static_cast<std::uint64_t>(v);
}

bool get_bool(const Json& obj, const char* key, bool fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_boolean())
        throw ConfigError(std::string("config: '") + key + "' must be a boolean");
    return obj[key].get<bool>();
}

void parse_system(const Json& obj, SystemParams& sys) {
    require_known_keys(obj, "system",
                       {"rep_rate_hz", "intensities", "probabilities", "eta_d",
                        "p_dc", "p_ap", "receiver_loss_db", "e_mis",
                        "duty_factor", "v_pi"});
    sys.rep_rate = get_num(obj, "rep_rate_hz", sys.rep_rate);
    if (obj.contains("intensities")) {
        const Json& in = obj["intensities"];
        require_known_keys(in, "system.intensities", {"mu", "nu1", "nu2"});
        sys.intensities[0] = get_num(in, "mu", sys.intensities[0]);
        sys.intensities[1] = get_num(in, "nu1", sys.intensities[1]);
        sys.intensities[2] = get_num(in, "nu2", sys.intensities[2]);
    }
    if (obj.contains("probabilities")) {
        const Json& pr = obj["probabilities"];
        require_known_keys(pr, "system.probabilities", {"p_mu", "p_nu1", "p_nu2"});
        sys.probabilities[0] = get_num(pr, "p_mu", sys.probabilities[0]);
        sys.probabilities[1] = get_num(pr, "p_nu1", sys.probabilities[1]);
        sys.probabilities[2] = get_num(pr, "p_nu2", sys.probabilities[2]);
    }
    sys.eta_d = get_num(obj, "eta_d", sys.eta_d);
    sys.p_dc = get_num(obj, "p_dc", sys.p_dc);
    sys.p_ap = get_num(obj, "p_ap", sys.p_ap);
    sys.receiver_loss_db = get_num(obj, "receiver_loss_db", sys.receiver_loss_db);
    sys.e_mis = get_num(obj, "e_mis", sys.e_mis);
    sys.duty_factor = get_num(obj, "duty_factor", sys.duty_factor);
    sys.v_pi = get_num(obj, "v_pi", sys.v_pi);
}

void parse_channel(const Json& obj, ChannelParams& ch) {
    require_known_keys(obj, "channel",
                       {"loss_db", "scramble_rate_rad_s", "phase_drift_sigma",
                        "seed"});
    ch.loss_db = get_num(obj, "loss_db", ch.loss_db);
    ch.scramble_rate = get_num(obj, "scramble_rate_rad_s", ch.scramble_rate);
    ch.phase_drift_sigma = get_num(obj, "phase_drift_sigma", ch.phase_drift_sigma);
    ch.seed = get_u64(obj, "seed", ch.seed);
}

void parse_security(const Json& obj, SecurityParams& sec) {
    require_known_keys(obj, "security",
                       {"block_size", "epsilon_sec", "epsilon_cor", "f_ec"});
    sec.block_size = get_u64(obj, "block_size", sec.block_size);
    sec.epsilon_sec = get_num(obj, "epsilon_sec", sec.epsilon_sec);
    sec.epsilon_cor = get_num(obj, "epsilon_cor", sec.epsilon_cor);
    sec.f_ec = get_num(obj, "f_ec", sec.f_ec);
}

void parse_scenario(const Json& obj, ScenarioConfig& cfg) {
    require_known_keys(
        obj, "scenario",
        {"name", "seed", "rounds", "pulses_per_point", "voltage_start",
         "voltage_end", "voltage_step", "losses", "grid_start", "grid_stop",
         "grid_step", "calibrate", "anchor", "mc_pulses", "duration_s",
         "compression", "dt_s", "bin_s", "tracking", "loss_db", "n_pulses",
         "run_toeplitz"});
    if (obj.contains("name")) {
        const std::string name = obj["name"].get<std::string>();
        if (name != cfg.scenario)
            throw ConfigError("config: scenario.name '" + name +
                              "' does not match requested scenario '" +
                              cfg.scenario + "'");
    }
    cfg.seed = get_u64(obj, "seed", cfg.seed);

    VisibilityOptions& vis = cfg.visibility;
    vis.rounds = static_cast<int>(get_u64(obj, "rounds",
                                          static_cast<std::uint64_t>(vis.rounds)));
    vis.pulses_per_point = get_num(obj, "pulses_per_point", vis.pulses_per_point);
    vis.voltage_start = get_num(obj, "voltage_start", vis.voltage_start);
    vis.voltage_end = get_num(obj, "voltage_end", vis.voltage_end);
    vis.voltage_step = get_num(obj, "voltage_step", vis.voltage_step);

    LossSweepOptions& ls = cfg.loss_sweep;
    if (obj.contains("losses")) {
        if (!obj["losses"].is_array())
            throw ConfigError("config: 'losses' must be an array");
        ls.losses.clear();
        for (const auto& v : obj["losses"]) {
            if (!v.is_number())
                throw ConfigError("config: 'losses' entries must be numbers");
            ls.losses.push_back(v.get<double>());
        }
    }
    ls.grid_start = get_num(obj, "grid_start", ls.grid_start);
    ls.grid_stop = get_num(obj, "grid_stop", ls.grid_stop);
    ls.grid_step = get_num(obj, "grid_step", ls.grid_step);
    ls.calibrate = get_bool(obj, "calibrate", ls.calibrate);
    if (obj.contains("anchor")) {
        const Json& an = obj["anchor"];
        require_known_keys(an, "scenario.anchor", {"loss_db", "sifted_bps", "qber"});
        ls.anchor.loss_db = get_num(an, "loss_db", ls.anchor.loss_db);
        ls.anchor.sifted_bps = get_num(an, "sifted_bps", ls.anchor.sifted_bps);
        ls.anchor.qber = get_num(an, "qber", ls.anchor.qber);
    }
    ls.mc_pulses = get_num(obj, "mc_pulses", ls.mc_pulses);

    LongRunOptions& lr = cfg.long_run;
    lr.duration_s = get_num(obj, "duration_s", lr.duration_s);
    lr.compression = get_num(obj, "compression", lr.compression);
    lr.dt_s = get_num(obj, "dt_s", lr.dt_s);
    lr.bin_s = get_num(obj, "bin_s", lr.bin_s);
    lr.tracking = get_bool(obj, "tracking", lr.tracking);

    PostprocessOptions& pp = cfg.postprocess;
    pp.loss_db = get_num(obj, "loss_db", pp.loss_db);
    pp.n_pulses = get_num(obj, "n_pulses", pp.n_pulses);
    pp.run_toeplitz = get_bool(obj, "run_toeplitz", pp.run_toeplitz);
}

}  // namespace

void ScenarioConfig::validate() const {
    static const std::set<std::string> known{"visibility-scan", "long-run",
                                             "loss-sweep", "postprocess-demo"};
    if (!known.count(scenario))
        throw ConfigError("config: unknown scenario '" + scenario + "'");
    try {
        system.validate();
        channel.validate();
        security.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (visibility.rounds < 1)
        throw ConfigError("config: rounds must be >= 1");
    if (visibility.pulses_per_point <= 0.0)
        throw ConfigError("config: pulses_per_point must be > 0");
    if (visibility.voltage_step <= 0.0 ||
        visibility.voltage_end <= visibility.voltage_start)
        throw ConfigError("config: bad voltage grid");
    if (loss_sweep.losses.empty())
        throw ConfigError("config: losses must not be empty");
    if (loss_sweep.grid_step <= 0.0 ||
        loss_sweep.grid_stop < loss_sweep.grid_start)
        throw ConfigError("config: bad loss grid");
    if (loss_sweep.mc_pulses < 0.0)
        throw ConfigError("config: mc_pulses must be >= 0");
    if (long_run.duration_s <= 0.0 || long_run.compression <= 0.0 ||
        long_run.dt_s <= 0.0 || long_run.bin_s <= 0.0)
        throw ConfigError("config: long-run durations must be positive");
    if (postprocess.n_pulses < 1.0)
        throw ConfigError("config: n_pulses must be >= 1");
    if (postprocess.loss_db < 0.0)
        throw ConfigError("config: loss_db must be >= 0");
}

ScenarioConfig default_config(const std::string& scenario) {
    ScenarioConfig cfg;
    cfg.scenario = scenario;
    if (scenario == "visibility-scan") cfg.system.e_mis = 0.0;
    return cfg;
}

ScenarioConfig load_config(const std::string& json_text,
                           const std::string& scenario) {
    Json root;
    try {
        root = Json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config: top level must be an object");
    require_known_keys(root, "top level",
                       {"system", "channel", "scenario", "security"});

    ScenarioConfig cfg = default_config(scenario);
    try {
        if (root.contains("system")) parse_system(root["system"], cfg.system);
        if (root.contains("channel")) parse_channel(root["channel"], cfg.channel);
        if (root.contains("security"))
            parse_security(root["security"], cfg.security);
        if (root.contains("scenario"))
            parse_scenario(root["scenario"], cfg);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

ScenarioConfig load_config_file(const std::string& path,
                                const std::string& scenario) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_config(buf.str(), scenario);
}

std::string config_to_json(const ScenarioConfig& cfg) {
    Json j;
    j["system"] = {
        {"rep_rate_hz", cfg.system.rep_rate},
        {"intensities",
         {{"mu", cfg.system.intensities[0]},
          {"nu1", cfg.system.intensities[1]},
          {"nu2", cfg.system.intensities[2]}}},
        {"probabilities",
         {{"p_mu", cfg.system.probabilities[0]},
          {"p_nu1", cfg.system.probabilities[1]},
          {"p_nu2", cfg.system.probabilities[2]}}},
        {"eta_d", cfg.system.eta_d},
        {"p_dc", cfg.system.p_dc},
        {"p_ap", cfg.system.p_ap},
        {"receiver_loss_db", cfg.system.receiver_loss_db},
        {"e_mis", cfg.system.e_mis},
        {"duty_factor", cfg.system.duty_factor},
        {"v_pi", cfg.system.v_pi},
    };
    j["channel"] = {
        {"loss_db", cfg.channel.loss_db},
        {"scramble_rate_rad_s", cfg.channel.scramble_rate},
        {"phase_drift_sigma", cfg.channel.phase_drift_sigma},
        {"seed", cfg.channel.seed},
    };
    j["security"] = {
        {"block_size", cfg.security.block_size},
        {"epsilon_sec", cfg.security.epsilon_sec},
        {"epsilon_cor", cfg.security.epsilon_cor},
        {"f_ec", cfg.security.f_ec},
    };
    Json sc;
    sc["name"] = cfg.scenario;
    sc["seed"] = cfg.seed;
    if (cfg.scenario == "visibility-scan") {
        sc["rounds"] = cfg.visibility.rounds;
        sc["pulses_per_point"] = cfg.visibility.pulses_per_point;
        sc["voltage_start"] = cfg.visibility.voltage_start;
        sc["voltage_end"] = cfg.visibility.voltage_end;
        sc["voltage_step"] = cfg.visibility.voltage_step;
    } else if (cfg.scenario == "loss-sweep") {
        sc["losses"] = cfg.loss_sweep.losses;
        sc["grid_start"] = cfg.loss_sweep.grid_start;
        sc["grid_stop"] = cfg.loss_sweep.grid_stop;
        sc["grid_step"] = cfg.loss_sweep.grid_step;
        sc["calibrate"] = cfg.loss_sweep.calibrate;
        sc["anchor"] = {{"loss_db", cfg.loss_sweep.anchor.loss_db},
                        {"sifted_bps", cfg.loss_sweep.anchor.sifted_bps},
                        {"qber", cfg.loss_sweep.anchor.qber}};
        sc["mc_pulses"] = cfg.loss_sweep.mc_pulses;
    } else if (cfg.scenario == "long-run") {
        sc["duration_s"] = cfg.long_run.duration_s;
        sc["compression"] = cfg.long_run.compression;
        sc["dt_s"] = cfg.long_run.dt_s;
        sc["bin_s"] = cfg.long_run.bin_s;
        sc["tracking"] = cfg.long_run.tracking;
    } else if (cfg.scenario == "postprocess-demo") {
        sc["loss_db"] = cfg.postprocess.loss_db;
        sc["n_pulses"] = cfg.postprocess.n_pulses;
        sc["run_toeplitz"] = cfg.postprocess.run_toeplitz;
    }
    j["scenario"] = sc;
    return j.dump(2);
}

}  // namespace qkdsim
