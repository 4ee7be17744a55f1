#include "qkdsim/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include "json.hpp"

namespace qkdsim {

namespace {

using Json = nlohmann::ordered_json;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

class CsvWriter {
  public:
    CsvWriter(const std::filesystem::path& dir, const std::string& name,
              RunReport& report)
        : path_(dir / name) {
        out_.open(path_, std::ios::binary);
        if (!out_) throw std::runtime_error("cannot open " + path_.string());
        report.files_written.push_back(name);
    }

    void header(const std::string& line) { out_ << line << "\n"; }

    void row(const std::vector<double>& values) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) out_ << ",";
            out_ << fmt(values[i]);
        }
        out_ << "\n";
    }

  private:
    std::filesystem::path path_;
    std::ofstream out_;
};

std::filesystem::path prepare_out_dir(const ScenarioConfig& cfg) {
    std::filesystem::path dir(cfg.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw std::runtime_error("cannot create output directory '" +
                                 cfg.out_dir + "': " + ec.message());
    return dir;
}

void write_summary(const std::filesystem::path& dir, RunReport& report,
                   const ScenarioConfig& cfg, const Json& results,
                   const Json& table_rows) {
    Json j;
    j["schema"] = "qkdsim-summary/1";
    j["scenario"] = cfg.scenario;
    j["seed"] = cfg.seed;
    j["security_model"] =
        "vacuum+weak decoy, per-intensity Hoeffding deviations; "
        "l = s0 + s1*(1-h2(phi1)) - leak_EC - 6*log2(21/eps_sec) - "
        "log2(2/eps_cor)";
    j["config"] = Json::parse(config_to_json(cfg));
    j["results"] = results;
    j["table_rows"] = table_rows;
    j["outputs"] = report.files_written;
    report.summary_json = j.dump(2) + "\n";

    std::ofstream out(dir / "summary.json", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write summary.json");
    out << report.summary_json;
    report.files_written.push_back("summary.json");
}

}  // namespace

// ---------------------------------------------------------------------------
// visibility-scan
// ---------------------------------------------------------------------------

RunReport run_visibility_scan(const ScenarioConfig& cfg) {
    cfg.validate();
    const auto dir = prepare_out_dir(cfg);
    RunReport report;

    const SystemParams& sys = cfg.system;
    const VisibilityOptions& vis = cfg.visibility;
    const DetectorModel det = make_detector_model(sys, cfg.channel.loss_db);
    const double mu = sys.intensities[idx(Intensity::signal)];

    std::vector<double> volts;
    const auto n_points = static_cast<long>(std::llround(
        (vis.voltage_end - vis.voltage_start) / vis.voltage_step)) + 1;
    volts.reserve(static_cast<std::size_t>(n_points));
    for (long i = 0; i < n_points; ++i)
        volts.push_back(vis.voltage_start + vis.voltage_step * i);

    // Signal pulses counted per point; the stream itself carries all classes.
    const double dt_point =
        vis.pulses_per_point /
        (sys.rep_rate * sys.probabilities[idx(Intensity::signal)]);

    ChannelState state = make_channel_state(cfg.channel);
    Rng rng(derive_seed(cfg.seed, 1));

    CsvWriter rounds_csv(dir, "visibility_rounds.csv", report);
    rounds_csv.header("round,time_s,c_max,c_min,visibility");
    CsvWriter curve_csv(dir, "visibility_curve.csv", report);
    curve_csv.header("voltage_v,phi_b_rad,counts_spd1,counts_spd2");

    std::vector<double> vs;
    vs.reserve(vis.rounds);
    std::vector<double> c1(volts.size()), c2(volts.size());

    for (int round = 0; round < vis.rounds; ++round) {
        for (std::size_t i = 0; i < volts.size(); ++i) {
            const PhaseSettings phases =
                PhaseSettings::from_voltage(state.phase_offset, volts[i], sys.v_pi);
            const JonesVector e_pol =
                apply_polarization(state, JonesVector{1.0, 0.0});
            const SmziOutputs amp = smzi_outputs(e_pol, phases);
            double p1 = 0.0, p2 = 0.0;
            click_probabilities(det, mu, amp.out1.norm_sq(), amp.out2.norm_sq(),
                                p1, p2);
            c1[i] = static_cast<double>(rng.poisson(p1 * vis.pulses_per_point));
            c2[i] = static_cast<double>(rng.poisson(p2 * vis.pulses_per_point));
            if (round == 0)
                curve_csv.row({volts[i], phases.phi_b, c1[i], c2[i]});
            advance(state, cfg.channel, dt_point);
        }
        const double v_round = visibility(c1);
        vs.push_back(v_round);
        const double c_max = *std::max_element(c1.begin(), c1.end());
        const double c_min = *std::min_element(c1.begin(), c1.end());
        rounds_csv.row({static_cast<double>(round), state.time_s, c_max, c_min,
                        v_round});
    }

    // Histogram on a fixed 5e-4 grid covering the data.
    const double bin_w = 5e-4;
    std::map<long, long> hist;
    for (double v : vs) ++hist[static_cast<long>(std::floor(v / bin_w))];
    CsvWriter hist_csv(dir, "visibility_hist.csv", report);
    hist_csv.header("bin_low,bin_high,count");
    for (const auto& [bin, count] : hist)
        hist_csv.row({bin * bin_w, (bin + 1) * bin_w,
                      static_cast<double>(count)});

    double mean = 0.0;
    for (double v : vs) mean += v;
    mean /= static_cast<double>(vs.size());
    double var = 0.0;
    for (double v : vs) var += (v - mean) * (v - mean);
    const double stdev =
        vs.size() > 1 ? std::sqrt(var / static_cast<double>(vs.size() - 1)) : 0.0;

    Json results;
    results["rounds"] = vis.rounds;
    results["visibility_mean"] = mean;
    results["visibility_std"] = stdev;
    results["visibility_min"] = *std::min_element(vs.begin(), vs.end());
    results["visibility_max"] = *std::max_element(vs.begin(), vs.end());
    write_summary(dir, report, cfg, results, Json::array());
    return report;
}

// ---------------------------------------------------------------------------
// loss-sweep
// ---------------------------------------------------------------------------

RunReport run_loss_sweep(const ScenarioConfig& cfg) {
    cfg.validate();
    const auto dir = prepare_out_dir(cfg);
    RunReport report;

    SystemParams sys = cfg.system;
    const LossSweepOptions& ls = cfg.loss_sweep;
    if (ls.calibrate) {
        sys.e_mis = calibrate_misalignment(sys, ls.anchor.loss_db, ls.anchor.qber);
        sys.duty_factor =
            calibrate_duty_factor(sys, ls.anchor.loss_db, ls.anchor.sifted_bps);
    }

    const auto table = skr_curve(sys, cfg.security, ls.losses);

    std::vector<double> grid;
    const auto n_grid = static_cast<long>(std::llround(
        (ls.grid_stop - ls.grid_start) / ls.grid_step)) + 1;
    grid.reserve(static_cast<std::size_t>(n_grid));
    for (long i = 0; i < n_grid; ++i)
        grid.push_back(ls.grid_start + ls.grid_step * i);
    const auto curve = skr_curve(sys, cfg.security, grid);

    CsvWriter table_csv(dir, "losssweep_table.csv", report);
    table_csv.header("loss_db,sifted_bps,secure_bps,qber");
    Json rows = Json::array();
    for (const auto& pt : table) {
        table_csv.row({pt.loss_db, pt.sifted_bps, pt.skr_bps, pt.qber});
        rows.push_back({{"loss_db", pt.loss_db},
                        {"sifted_bps", pt.sifted_bps},
                        {"secure_bps", pt.skr_bps},
                        {"qber", pt.qber}});
    }

    CsvWriter curve_csv(dir, "losssweep_curve.csv", report);
    curve_csv.header("loss_db,sifted_bps,secure_bps,qber");
    for (const auto& pt : curve)
        curve_csv.row({pt.loss_db, pt.sifted_bps, pt.skr_bps, pt.qber});

    Json results;
    results["calibrated_e_mis"] = sys.e_mis;
    results["calibrated_duty_factor"] = sys.duty_factor;

    if (ls.mc_pulses > 0.5) {
        CsvWriter mc_csv(dir, "losssweep_mc.csv", report);
        mc_csv.header(
            "loss_db,intensity,sent,detections,gain_mc,gain_model,gain_sigma,"
            "errors,qber_mc,qber_model,qber_sigma");
        const auto n_mc = static_cast<std::uint64_t>(ls.mc_pulses);
        for (std::size_t i = 0; i < ls.losses.size(); ++i) {
            ChannelParams ch = cfg.channel;
            ch.loss_db = ls.losses[i];
            ch.seed = derive_seed(cfg.channel.seed, 100 + i);
            const PulseBatchRecord rec =
                simulate_block(sys, ch, n_mc, derive_seed(cfg.seed, 200 + i));
            const BlockStats stats = sift(rec);
            const RateModel rm = rate_model(sys, ch.loss_db);
            for (int k = 0; k < kIntensityCount; ++k) {
                const auto kk = static_cast<Intensity>(k);
                const double sent = static_cast<double>(rec.sent(kk));
                const double detections = static_cast<double>(rec.detections(kk));
                const double q_mc = sent > 0.0 ? detections / sent : 0.0;
                const double q_sigma =
                    sent > 0.0 ? std::sqrt(rm.q[k] * (1.0 - rm.q[k]) / sent) : 0.0;
                const double e_mc = stats.n[k] > 0.0 ? stats.m[k] / stats.n[k] : 0.0;
                const double e_sigma =
                    stats.n[k] > 0.0
                        ? std::sqrt(rm.e[k] * (1.0 - rm.e[k]) / stats.n[k])
                        : 0.0;
                mc_csv.row({ch.loss_db, static_cast<double>(k), sent, detections,
                            q_mc, rm.q[k], q_sigma, stats.m[k], e_mc, rm.e[k],
                            e_sigma});
            }
        }
        results["mc_pulses_per_loss"] = ls.mc_pulses;
    }

    write_summary(dir, report, cfg, results, rows);
    return report;
}

// ---------------------------------------------------------------------------
// long-run engine
// ---------------------------------------------------------------------------

StreamResult simulate_stream(const SystemParams& params,
                             const ChannelParams& channel,
                             double engine_duration_s, double engine_bin_s,
                             double dt_s, bool tracking, std::uint64_t seed,
                             double display_scale) {
    params.validate();
    channel.validate();
    if (engine_duration_s <= 0.0 || engine_bin_s <= 0.0 || dt_s <= 0.0)
        throw std::invalid_argument("simulate_stream: durations must be positive");

    const DetectorModel det = make_detector_model(params, channel.loss_db);
    const double pulses_per_step = params.rep_rate * dt_s;

    ChannelState state = make_channel_state(channel);
    Rng rng(derive_seed(seed, 2));
    PhaseTracker tracker;

    StreamResult out;
    const auto n_steps =
        static_cast<std::uint64_t>(std::llround(engine_duration_s / dt_s));
    const auto steps_per_bin = std::max<std::uint64_t>(
        1, static_cast<std::uint64_t>(std::llround(engine_bin_s / dt_s)));

    StreamBin bin;
    bin.t_start_s = 0.0;
    std::uint64_t c_plus = 0, c_minus = 0;

    for (std::uint64_t step = 0; step < n_steps; ++step) {
        const double correction = tracking ? tracker.estimated_offset : 0.0;
        const auto cells = smzi_cell_intensities(state, correction);
        for (int k = 0; k < kIntensityCount; ++k) {
            const double n_cell = pulses_per_step * params.probabilities[k] /
                                  static_cast<double>(kPhaseCells);
            for (int a = 0; a < kAlicePhases; ++a) {
                for (int b = 0; b < kBobPhases; ++b) {
                    const auto& ii = cells[a * kBobPhases + b];
                    double p1 = 0.0, p2 = 0.0;
                    click_probabilities(det, params.intensities[k], ii.i_out1,
                                        ii.i_out2, p1, p2);
                    const double cnt1 =
                        static_cast<double>(rng.poisson(n_cell * p1));
                    const double cnt2 =
                        static_cast<double>(rng.poisson(n_cell * p2));
                    bin.sent[k] += n_cell;
                    bin.det[k] += cnt1 + cnt2;
                    const int sign = mismatch_sign(a, b);
                    if (sign == 0) {
                        bin.n[k] += cnt1 + cnt2;
                        // SPD1 encodes bit 1: clicks on the detector opposite
                        // to Alice's bit are errors.
                        bin.m[k] += alice_bit(a) ? cnt2 : cnt1;
                    } else if (sign > 0) {
                        c_plus += static_cast<std::uint64_t>(cnt1);
                        c_minus += static_cast<std::uint64_t>(cnt2);
                    } else {
                        c_plus += static_cast<std::uint64_t>(cnt2);
                        c_minus += static_cast<std::uint64_t>(cnt1);
                    }
                }
            }
        }
        if (c_plus + c_minus >= tracker.window) {
            const TrackerUpdate upd = phase_track_update(tracker, c_plus, c_minus);
            if (tracking) tracker = upd.tracker;
            c_plus = 0;
            c_minus = 0;
        }
        advance(state, channel, dt_s);

        if ((step + 1) % steps_per_bin == 0 || step + 1 == n_steps) {
            bin.duration_s =
                (static_cast<double>(step + 1) * dt_s - bin.t_start_s);
            StreamBin scaled = bin;
            scaled.t_start_s *= display_scale;
            scaled.duration_s *= display_scale;
            out.bins.push_back(scaled);
            bin = StreamBin{};
            bin.t_start_s = static_cast<double>(step + 1) * dt_s;
        }
    }
    out.tracker_final_offset = tracker.estimated_offset;
    return out;
}

RunReport run_long_run(const ScenarioConfig& cfg) {
    cfg.validate();
    const auto dir = prepare_out_dir(cfg);
    RunReport report;

    const SystemParams& sys = cfg.system;
    const LongRunOptions& lr = cfg.long_run;
    const double engine_duration = lr.duration_s / lr.compression;
    const double engine_bin = lr.bin_s / lr.compression;
    // Native series at a tenth of the averaging window.
    const double engine_native = std::max(lr.dt_s, engine_bin / 10.0);

    const StreamResult fine =
        simulate_stream(sys, cfg.channel, engine_duration, engine_native,
                        lr.dt_s, lr.tracking, cfg.seed, lr.compression);

    CsvWriter native_csv(dir, "longrun_native.csv", report);
    native_csv.header("t_start_h,duration_h,e_mu,e_nu1,e_nu2,q_mu,q_nu1,q_nu2");
    for (const auto& b : fine.bins)
        native_csv.row({b.t_start_s / 3600.0, b.duration_s / 3600.0,
                        b.qber(Intensity::signal), b.qber(Intensity::decoy),
                        b.qber(Intensity::vacuum), b.gain(Intensity::signal),
                        b.gain(Intensity::decoy), b.gain(Intensity::vacuum)});

    // Averaging-window bins are aggregates of ten native bins.
    StreamResult res;
    res.tracker_final_offset = fine.tracker_final_offset;
    for (std::size_t i = 0; i < fine.bins.size(); i += 10) {
        StreamBin merged = fine.bins[i];
        for (std::size_t j = i + 1; j < std::min(fine.bins.size(), i + 10); ++j) {
            const StreamBin& nb = fine.bins[j];
            merged.duration_s += nb.duration_s;
            for (int k = 0; k < kIntensityCount; ++k) {
                merged.sent[k] += nb.sent[k];
                merged.det[k] += nb.det[k];
                merged.n[k] += nb.n[k];
                merged.m[k] += nb.m[k];
            }
        }
        res.bins.push_back(merged);
    }

    const double sifted_bps = sifted_rate_bps(sys, cfg.channel.loss_db);
    const double block = static_cast<double>(cfg.security.block_size);

    CsvWriter bins_csv(dir, "longrun_bins.csv", report);
    bins_csv.header(
        "t_start_h,duration_h,e_mu,e_nu1,e_nu2,q_mu,q_nu1,q_nu2,skr_bps");

    double qber_weighted = 0.0, qber_weight = 0.0;
    double skr_sum = 0.0;
    double e_nu2_weighted = 0.0, e_nu2_weight = 0.0;
    for (const auto& b : res.bins) {
        // Scale the bin to one privacy-amplification block for the key length.
        double skr = 0.0;
        const double n_mu = b.n[idx(Intensity::signal)];
        if (n_mu > 0.0) {
            const double scale = block / n_mu;
            BlockStats stats;
            stats.sec = cfg.security;
            for (int k = 0; k < kIntensityCount; ++k) {
                stats.sent[k] = b.sent[k] * scale;
                stats.n[k] = b.n[k] * scale;
                stats.m[k] = std::min(b.m[k] * scale, stats.n[k]);
            }
            if (stats.n[idx(Intensity::decoy)] > 0.0) {
                const DecoyBounds bounds = decoy_bounds(stats, sys);
                skr = key_report(stats, bounds, modeled_leak_bits(stats),
                                 sifted_bps)
                          .skr_bps;
            }
        }
        bins_csv.row({b.t_start_s / 3600.0, b.duration_s / 3600.0,
                      b.qber(Intensity::signal), b.qber(Intensity::decoy),
                      b.qber(Intensity::vacuum), b.gain(Intensity::signal),
                      b.gain(Intensity::decoy), b.gain(Intensity::vacuum), skr});
        qber_weighted += b.m[idx(Intensity::signal)];
        qber_weight += b.n[idx(Intensity::signal)];
        e_nu2_weighted += b.m[idx(Intensity::vacuum)];
        e_nu2_weight += b.n[idx(Intensity::vacuum)];
        skr_sum += skr * b.duration_s;
    }

    Json results;
    results["tracking"] = lr.tracking;
    results["bins"] = res.bins.size();
    results["e_mu_avg"] = qber_weight > 0.0 ? qber_weighted / qber_weight : 0.0;
    results["e_nu2_avg"] =
        e_nu2_weight > 0.0 ? e_nu2_weighted / e_nu2_weight : 0.0;
    results["skr_avg_bps"] =
        lr.duration_s > 0.0 ? skr_sum / lr.duration_s : 0.0;
    results["tracker_final_offset_rad"] = res.tracker_final_offset;
    write_summary(dir, report, cfg, results, Json::array());
    return report;
}

// ---------------------------------------------------------------------------
// postprocess-demo
// ---------------------------------------------------------------------------

RunReport run_postprocess_demo(const ScenarioConfig& cfg) {
    cfg.validate();
    const auto dir = prepare_out_dir(cfg);
    RunReport report;

    const SystemParams& sys = cfg.system;
    const PostprocessOptions& pp = cfg.postprocess;
    ChannelParams ch = cfg.channel;
    ch.loss_db = pp.loss_db;

    const SiftedKeys keys = simulate_sifted_keys(
        sys, ch, static_cast<std::uint64_t>(pp.n_pulses),
        derive_seed(cfg.seed, 3));
    BlockStats stats = sift(keys.record);
    stats.sec = cfg.security;
    stats.sec.block_size =
        static_cast<std::uint64_t>(stats.n[idx(Intensity::signal)]);

    const std::size_t n_bits = keys.alice.size();
    if (n_bits < 1024)
        throw std::runtime_error(
            "postprocess-demo: fewer than 1024 sifted bits; increase n_pulses");

    const double qber_actual =
        static_cast<double>(keys.alice.hamming_distance(keys.bob)) /
        static_cast<double>(n_bits);
    const double qber_estimate = std::clamp(qber_actual, 1e-4, 0.25);

    const CascadeResult cascade =
        cascade_correct(keys.alice, keys.bob, qber_estimate,
                        derive_seed(cfg.seed, 4));
    const bool exact = cascade.corrected == keys.alice;
    const double shannon =
        static_cast<double>(n_bits) * binary_entropy(qber_actual);
    const double f_measured =
        shannon > 0.0 ? static_cast<double>(cascade.leak_bits) / shannon : 0.0;

    const DecoyBounds bounds = decoy_bounds(stats, sys);
    const double sifted_bps = sifted_rate_bps(sys, ch.loss_db);
    const KeyReport measured = key_report(
        stats, bounds, static_cast<double>(cascade.leak_bits), sifted_bps);
    const KeyReport modeled =
        key_report(stats, bounds, modeled_leak_bits(stats), sifted_bps);

    std::size_t final_bits = 0;
    if (pp.run_toeplitz && cascade.verified && measured.ell > 0) {
        Rng rng(derive_seed(cfg.seed, 5));
        const BitVec seed_bits =
            BitVec::random(n_bits + measured.ell - 1, rng);
        const BitVec final_key =
            toeplitz_hash(cascade.corrected, seed_bits, measured.ell);
        final_bits = final_key.size();
    }

    CsvWriter csv(dir, "postprocess.csv", report);
    csv.header(
        "n_bits,qber,leak_bits,f_ec_measured,ell_measured_leak,"
        "ell_modeled_leak,final_bits,verified");
    csv.row({static_cast<double>(n_bits), qber_actual,
             static_cast<double>(cascade.leak_bits), f_measured,
             static_cast<double>(measured.ell),
             static_cast<double>(modeled.ell),
             static_cast<double>(final_bits),
             cascade.verified && exact ? 1.0 : 0.0});

    Json results;
    results["sifted_bits"] = n_bits;
    results["qber"] = qber_actual;
    results["cascade_leak_bits"] = cascade.leak_bits;
    results["cascade_passes"] = cascade.passes;
    results["f_ec_measured"] = f_measured;
    results["verified"] = cascade.verified && exact;
    results["ell_measured_leak"] = measured.ell;
    results["ell_modeled_leak"] = modeled.ell;
    results["leak_ec_modeled_bits"] = modeled.leak_ec;
    results["s0_lower"] = measured.s0_lower;
    results["s1_lower"] = measured.s1_lower;
    results["phi1_upper"] = measured.phi1_upper;
    results["skr_estimate_bps"] = measured.skr_bps;
    results["final_key_bits"] = final_bits;
    write_summary(dir, report, cfg, results, Json::array());
    return report;
}

RunReport run_scenario(const ScenarioConfig& cfg) {
    if (cfg.scenario == "visibility-scan") return run_visibility_scan(cfg);
    if (cfg.scenario == "loss-sweep") return run_loss_sweep(cfg);
    if (cfg.scenario == "long-run") return run_long_run(cfg);
    if (cfg.scenario == "postprocess-demo") return run_postprocess_demo(cfg);
    throw ConfigError("unknown scenario '" + cfg.scenario + "'");
}

}  // namespace qkdsim
