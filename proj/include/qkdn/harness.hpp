// Scenario runner: boots a world from a topology config, drives SAE clients
// through complete exchanges, injects faults and produces the metrics and
// trace artifacts.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qkdn/world.hpp"

namespace qkdn {

// Encrypted-traffic budget sustained by one key exchange: the AES-256 packet
//-to-key ratio (bytes of user traffic per 256-bit key) over the time one
// exchange takes.
inline double compute_throughput_budget_gbps(double t_key_mean_s, std::uint64_t key_bits = 256,
                                             double ratio_bytes = 389e9) {
    (void)key_bits;  // the ratio is defined per 256-bit key
    if (t_key_mean_s <= 0) throw Error(Errc::INTERNAL, "t_key must be positive");
    return ratio_bytes * 8.0 / t_key_mean_s / 1e9;
}

struct ExchangeRecord {
    Uuid correlation;
    std::string master;
    std::string slave;
    std::uint64_t number{1};
    std::uint64_t size_bits{256};
    SimTime t_submit{0};
    SimTime t_master{-1};
    SimTime t_slave{-1};
    std::string outcome;  // empty until terminal: DELIVERED | FAILED(<reason>)
    std::vector<std::pair<std::string, std::string>> master_keys;  // (key_ID, key b64)
    std::vector<std::pair<std::string, std::string>> slave_keys;

    bool terminal() const { return !outcome.empty(); }
    bool delivered() const { return outcome == "DELIVERED"; }
    double t_key_s() const { return to_seconds(std::max(t_master, t_slave) - t_submit); }
    bool keys_agree() const {
        return !master_keys.empty() && master_keys == slave_keys;
    }
};

// Drives sequential end-to-end exchanges between one SAE pair, performing
// the out-of-band notify step (master tells slave which key ids to fetch).
class ExchangeDriver {
public:
    ExchangeDriver(World& world, std::string master, std::string slave)
        : world_(world), master_name_(std::move(master)), slave_name_(std::move(slave)) {
        auto& m = world_.sae(master_name_);
        auto& s = world_.sae(slave_name_);
        m.on_keys([this](const Uuid& corr, const json& p) { on_master_keys(corr, p); });
        m.on_error([this](const Uuid& corr, const json& p) { on_master_error(corr, p); });
        s.on_keys([this](const Uuid& corr, const json& p) { on_slave_keys(corr, p); });
        s.on_error([this](const Uuid& corr, const json& p) { on_slave_error(corr, p); });
    }

    void set_request(std::uint64_t number, std::uint64_t size_bits) {
        number_ = number;
        size_bits_ = size_bits;
    }

    // Runs n sequential exchanges; one exchange must reach a terminal state
    // within the per-exchange sim-time limit.
    void run(std::size_t n, SimTime per_exchange_limit = 120_s) {
        for (std::size_t i = 0; i < n; ++i) {
            submit();
            ExchangeRecord& rec = records_.back();
            bool done = world_.runtime().run_until([&rec] { return rec.terminal(); },
                                                   world_.runtime().now() + per_exchange_limit);
            if (!done) rec.outcome = "FAILED(DRIVER_TIMEOUT)";
        }
    }

    const std::vector<ExchangeRecord>& records() const { return records_; }
    std::vector<ExchangeRecord>& records() { return records_; }

private:
    void submit() {
        ExchangeRecord rec;
        rec.master = master_name_;
        rec.slave = slave_name_;
        rec.number = number_;
        rec.size_bits = size_bits_;
        rec.t_submit = world_.runtime().now();
        rec.correlation =
            world_.sae(master_name_).request_enc_keys(slave_name_, number_, size_bits_);
        index_[rec.correlation] = records_.size();
        records_.push_back(std::move(rec));
    }

    ExchangeRecord* find(const Uuid& corr) {
        auto it = index_.find(corr);
        return it == index_.end() ? nullptr : &records_[it->second];
    }

    void on_master_keys(const Uuid& corr, const json& p) {
        ExchangeRecord* rec = find(corr);
        if (!rec || !p.contains("keys")) return;
        rec->t_master = world_.runtime().now();
        std::vector<std::string> ids;
        for (const auto& k : p.at("keys")) {
            rec->master_keys.push_back({k.at("key_ID").get<std::string>(),
                                        k.at("key").get<std::string>()});
            ids.push_back(k.at("key_ID").get<std::string>());
        }
        // Out-of-band notify: the slave learns the key ids and fetches them.
        world_.fabric().schedule(1_ms, [this, corr, ids] {
            world_.sae(slave_name_).request_dec_keys(ids, corr);
        });
    }

    void on_master_error(const Uuid& corr, const json& p) {
        ExchangeRecord* rec = find(corr);
        if (!rec || rec->terminal()) return;
        rec->outcome = "FAILED(" + p.value("reason", "ERROR") + ")";
    }

    void on_slave_keys(const Uuid& corr, const json& p) {
        ExchangeRecord* rec = find(corr);
        if (!rec || !p.contains("keys")) return;
        rec->t_slave = world_.runtime().now();
        for (const auto& k : p.at("keys"))
            rec->slave_keys.push_back({k.at("key_ID").get<std::string>(),
                                       k.at("key").get<std::string>()});
        if (!rec->terminal() && rec->t_master >= 0) rec->outcome = "DELIVERED";
    }

    void on_slave_error(const Uuid& corr, const json& p) {
        ExchangeRecord* rec = find(corr);
        if (!rec || rec->terminal()) return;
        if (p.value("reason", "") == to_string(Errc::NOT_READY)) {
            // The push to the slave UKMS may lag the master delivery; retry.
            auto& n = dec_retries_[corr];
            if (n++ < 200) {
                std::vector<std::string> ids;
                for (const auto& [id, _] : rec->master_keys) ids.push_back(id);
                world_.fabric().schedule(100_ms, [this, corr, ids] {
                    world_.sae(slave_name_).request_dec_keys(ids, corr);
                });
                return;
            }
        }
        rec->outcome = "FAILED(" + p.value("reason", "ERROR") + ")";
    }

    World& world_;
    std::string master_name_;
    std::string slave_name_;
    std::uint64_t number_{1};
    std::uint64_t size_bits_{256};
    std::vector<ExchangeRecord> records_;
    std::map<Uuid, std::size_t> index_;
    std::map<Uuid, int> dec_retries_;
};

// Streams trace lines to trace.jsonl and splits telemetry/alarm rows into
// their CSV files.
class FileTraceSink : public TraceSink {
public:
    explicit FileTraceSink(const std::string& dir) {
        namespace fs = std::filesystem;
        fs::create_directories(dir);
        trace_.open(fs::path(dir) / "trace.jsonl");
        telemetry_.open(fs::path(dir) / "telemetry.csv");
        alarms_.open(fs::path(dir) / "alarms.csv");
        telemetry_ << "timestamp,link_id,skr_bps,qber_pct,state\n";
        alarms_ << "timestamp,source,severity,kind\n";
    }

    void emit(const json& line) override {
        trace_ << line.dump() << '\n';
        auto type = line.value("type", "");
        char buf[64];
        if (type == "telemetry") {
            std::snprintf(buf, sizeof buf, "%.6f", to_seconds(line.at("t").get<SimTime>()));
            std::snprintf(num_, sizeof num_, "%.3f,%.4f", line.at("skr_bps").get<double>(),
                          line.at("qber_pct").get<double>());
            telemetry_ << buf << ',' << line.at("link_id").get<std::string>() << ',' << num_ << ','
                       << line.at("state").get<std::string>() << '\n';
        } else if (type == "alarm") {
            std::snprintf(buf, sizeof buf, "%.6f", to_seconds(line.at("t").get<SimTime>()));
            alarms_ << buf << ',' << line.at("source").get<std::string>() << ','
                    << line.at("severity").get<std::string>() << ','
                    << line.at("kind").get<std::string>() << '\n';
        }
    }

private:
    std::ofstream trace_;
    std::ofstream telemetry_;
    std::ofstream alarms_;
    char num_[64];
};

struct ScenarioOptions {
    std::string scenario{"BASELINE"};
    std::size_t exchanges{0};  // 0: scenario default
    std::optional<std::uint64_t> seed;
    std::optional<bool> prefill;
    bool aaa_permissive{false};
    std::string cipher_override;
    std::string out_dir;    // when set, artifacts are written there
    bool want_trace{true};  // in-memory trace when out_dir is empty
    std::string master;     // default: first profile pair
    std::string slave;
};

struct ScenarioResult {
    json metrics;
    std::vector<ExchangeRecord> records;
    std::shared_ptr<CollectingSink> trace;  // only for in-memory runs
    std::vector<Alarm> alarms;
    json controller_snapshot;
};

namespace detail {

inline void accumulate_outcomes(const std::vector<ExchangeRecord>& records, json& exchanges,
                                std::vector<double>& t_keys, std::uint64_t& agreement_failures) {
    std::map<std::string, std::uint64_t> failed;
    std::uint64_t delivered = 0;
    for (const auto& r : records) {
        if (r.delivered()) {
            ++delivered;
            t_keys.push_back(r.t_key_s());
            if (!r.keys_agree()) ++agreement_failures;
        } else {
            std::string reason = r.outcome;
            if (reason.rfind("FAILED(", 0) == 0)
                reason = reason.substr(7, reason.size() - 8);
            failed[reason] += 1;
        }
    }
    exchanges["requested"] = records.size();
    exchanges["delivered"] = delivered;
    json failed_json = json::object();
    for (const auto& [reason, count] : failed) failed_json[reason] = count;
    exchanges["failed"] = failed_json;
}

}  // namespace detail

inline ScenarioResult run_scenario(TopologyConfig cfg, ScenarioOptions opt) {
    if (opt.seed) cfg.seed = *opt.seed;

    std::shared_ptr<CollectingSink> mem_sink;
    std::unique_ptr<FileTraceSink> file_sink;
    TraceSink* sink = nullptr;
    if (!opt.out_dir.empty()) {
        file_sink = std::make_unique<FileTraceSink>(opt.out_dir);
        sink = file_sink.get();
    } else if (opt.want_trace) {
        mem_sink = std::make_shared<CollectingSink>();
        sink = mem_sink.get();
    }

    const std::string& scenario = opt.scenario;
    bool prefill = opt.prefill.value_or(scenario != "STARVATION");
    if (scenario == "TKEY_BENCH") prefill = true;  // fully populated key storages, by definition

    WorldOptions wopt;
    wopt.aaa_permissive = opt.aaa_permissive;
    wopt.cipher_override = opt.cipher_override;
    World world(cfg, wopt, sink);
    world.start();
    if (prefill) world.prefill_pools();

    std::string master = opt.master, slave = opt.slave;
    if (master.empty()) {
        const auto& pair = world.config().profiles.at(0).allowed_sae_pairs.at(0);
        master = pair.first;
        slave = pair.second;
    }
    ExchangeDriver driver(world, master, slave);
    driver.set_request(1, world.config().defaults.key_size_bits);

    json phases = json::array();
    auto phase_metrics = [&](const std::string& name, std::size_t from, std::size_t to) {
        json ph{{"name", name}};
        std::vector<ExchangeRecord> slice(driver.records().begin() + from,
                                          driver.records().begin() + to);
        std::vector<double> tk;
        std::uint64_t agf = 0;
        json ex;
        detail::accumulate_outcomes(slice, ex, tk, agf);
        ph["exchanges"] = ex;
        phases.push_back(ph);
    };

    if (scenario == "BASELINE") {
        driver.run(opt.exchanges ? opt.exchanges : 1);
    } else if (scenario == "TKEY_BENCH") {
        driver.run(opt.exchanges ? opt.exchanges : 10000);
    } else if (scenario == "FAULT_REROUTE") {
        for (const char* lid : {"7-8", "7-16", "16-8"})
            if (!world.config().link(lid))
                throw Error(Errc::CONFIG_INVALID,
                            std::string("FAULT_REROUTE expects reference link ") + lid);
        std::size_t n = opt.exchanges ? opt.exchanges : 4;
        driver.run(n);
        phase_metrics("intact", 0, driver.records().size());
        std::size_t mark1 = driver.records().size();
        world.set_link_state("7-8", false);
        world.set_link_state("7-16", true);
        world.set_link_state("16-8", true);
        world.runtime().run_for(100_ms);
        driver.run(n);
        phase_metrics("bypass", mark1, driver.records().size());
        std::size_t mark2 = driver.records().size();
        world.set_link_state("7-16", false);
        world.set_link_state("16-8", false);
        world.runtime().run_for(100_ms);
        driver.run(2, 30_s);
        phase_metrics("isolated", mark2, driver.records().size());
    } else if (scenario == "STARVATION") {
        driver.run(opt.exchanges ? opt.exchanges : 6);
    } else if (scenario == "POLICY_AUDIT") {
        driver.run(opt.exchanges ? opt.exchanges : 3);
        // Forbidden-channel probes: all of these must be denied.
        std::string dc, access, user;
        for (const auto& n : world.config().nodes) {
            if (n.type == NodeType::Datacenter) dc = n.id;
            if (n.type == NodeType::Access && access.empty()) access = n.id;
            if (n.type == NodeType::User && user.empty()) user = n.id;
        }
        world.inject_send({EntityKind::Akms, access}, {EntityKind::Controller, dc},
                          MsgKind::StatusUpdate, {{"pools", json::array()}});
        world.inject_send({EntityKind::Ukms, user}, {EntityKind::Ckms, access}, MsgKind::QbnRelay,
                          {{"destination", "ckms:" + access},
                           {"key_id", Uuid{}.str()},
                           {kFrameField, "00"},
                           {"hop_count", 0}});
        world.inject_send({EntityKind::Sae, master}, {EntityKind::Controller, dc},
                          MsgKind::KeyRequest, {{"op", "status"}});
        world.inject_send({EntityKind::Akms, access}, {EntityKind::Controller, dc},
                          MsgKind::RouteRequest,
                          {{"src", "ckms:" + access}, {"dst", "ckms:" + access}});
    } else {
        throw Error(Errc::CONFIG_INVALID, "unknown scenario " + scenario);
    }

    world.runtime().run_for(200_ms);  // let trailing acks and reports land
    world.emit_final_snapshots();

    // Metrics.
    json metrics;
    metrics["scenario"] = scenario;
    metrics["config_name"] = world.config().name;
    metrics["seed"] = world.config().seed;
    metrics["sim_duration_s"] = to_seconds(world.runtime().now());

    std::vector<double> t_keys;
    std::uint64_t agreement_failures = 0;
    json exchanges;
    detail::accumulate_outcomes(driver.records(), exchanges, t_keys, agreement_failures);
    exchanges["agreement_failures"] = agreement_failures;
    metrics["exchanges"] = exchanges;
    if (!phases.empty()) metrics["phases"] = phases;

    json tkey = json::object();
    tkey["n"] = t_keys.size();
    if (!t_keys.empty()) {
        double sum = 0, sq = 0, mn = t_keys[0], mx = t_keys[0];
        for (double v : t_keys) {
            sum += v;
            sq += v * v;
            mn = std::min(mn, v);
            mx = std::max(mx, v);
        }
        double mean = sum / t_keys.size();
        double var = std::max(0.0, sq / t_keys.size() - mean * mean);
        tkey["mean_s"] = mean;
        tkey["std_s"] = std::sqrt(var);
        tkey["min_s"] = mn;
        tkey["max_s"] = mx;
        metrics["throughput_budget_gbps"] = compute_throughput_budget_gbps(mean);
    }
    metrics["t_key"] = tkey;

    json per_link = json::array();
    for (const auto& [link_id, agg] : world.link_aggregates()) {
        json row{{"link_id", link_id},
                 {"samples", agg.telemetry_samples},
                 {"emitted_bits", agg.emitted_bits},
                 {"dropped_refills_a", agg.dropped_a},
                 {"dropped_refills_b", agg.dropped_b},
                 {"assumed", world.config().link(link_id)->assumed}};
        if (agg.telemetry_samples > 0) {
            double n = static_cast<double>(agg.telemetry_samples);
            double skr_mean = agg.skr_sum / n;
            double qber_mean = agg.qber_sum / n;
            row["skr_mean_bps"] = skr_mean;
            row["skr_std_bps"] = std::sqrt(std::max(0.0, agg.skr_sq / n - skr_mean * skr_mean));
            row["qber_mean_pct"] = qber_mean;
            row["qber_std_pp"] = std::sqrt(std::max(0.0, agg.qber_sq / n - qber_mean * qber_mean));
        }
        per_link.push_back(row);
    }
    metrics["per_link"] = per_link;

    json alarm_counts = json::object();
    for (const auto& a : world.manager().alarms()) {
        std::string k = a.kind.empty() ? "UNSPECIFIED" : a.kind;
        alarm_counts[k] = alarm_counts.value(k, 0) + 1;
    }
    metrics["alarms"] = alarm_counts;
    metrics["pool_drop_events"] = world.total_drops();

    ScenarioResult result;
    result.metrics = metrics;
    result.records = driver.records();
    result.trace = mem_sink;
    result.alarms = world.manager().alarms();
    result.controller_snapshot = world.controller().snapshot();

    if (!opt.out_dir.empty()) {
        namespace fs = std::filesystem;
        std::ofstream mj(fs::path(opt.out_dir) / "metrics.json");
        mj << metrics.dump(2) << '\n';
        std::ofstream mc(fs::path(opt.out_dir) / "metrics.csv");
        mc << "correlation,master,slave,outcome,t_submit_s,t_key_s\n";
        for (const auto& r : result.records) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.6f", to_seconds(r.t_submit));
            mc << r.correlation.str() << ',' << r.master << ',' << r.slave << ',' << r.outcome
               << ',' << buf << ',';
            if (r.delivered()) {
                std::snprintf(buf, sizeof buf, "%.6f", r.t_key_s());
                mc << buf;
            }
            mc << '\n';
        }
    }
    return result;
}

}  // namespace qkdn
