#include "flashthink/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "flashthink/dataset.hpp"
#include "flashthink/errors.hpp"
#include "flashthink/ft2.hpp"
#include "flashthink/metrics.hpp"
#include "flashthink/segmenter.hpp"

namespace flashthink {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& section) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key()))
            throw InvalidConfig("config: unknown key \"" + it.key() + "\" in " + section);
    }
}

UpstreamConfig parse_upstream(const json& j, const std::string& section) {
    reject_unknown_keys(j, {"base_url", "model", "api_key_env"}, section);
    UpstreamConfig u;
    u.base_url = j.value("base_url", "");
    u.model = j.value("model", "");
    u.api_key_env = j.value("api_key_env", "");
    return u;
}

RunConfig parse_run(const json& j) {
    reject_unknown_keys(j,
                        {"delimiters", "think_open", "think_close", "max_reasoning_tokens",
                         "temperature", "min_chunks_before_check", "max_verifier_calls",
                         "speculative", "answer_lead_in", "max_answer_tokens",
                         "implicit_think_start", "verify_temperature", "verify_max_tokens"},
                        "run");
    RunConfig cfg;
    if (j.contains("delimiters")) {
        std::vector<std::string> delims;
        for (const auto& d : j.at("delimiters")) delims.push_back(d.get<std::string>());
        cfg.delimiters = DelimiterSet::make(std::move(delims));
    }
    if (j.contains("think_open")) cfg.markers.open_marker = j.at("think_open").get<std::string>();
    if (j.contains("think_close")) cfg.markers.close_marker = j.at("think_close").get<std::string>();
    cfg.max_reasoning_tokens = j.value("max_reasoning_tokens", cfg.max_reasoning_tokens);
    cfg.temperature = j.value("temperature", cfg.temperature);
    cfg.min_chunks_before_check = j.value("min_chunks_before_check", cfg.min_chunks_before_check);
    if (j.contains("max_verifier_calls") && !j.at("max_verifier_calls").is_null()) {
        auto v = j.at("max_verifier_calls").get<std::size_t>();
        if (v > 0) cfg.max_verifier_calls = v;
    }
    cfg.speculative = j.value("speculative", cfg.speculative);
    cfg.answer_lead_in = j.value("answer_lead_in", cfg.answer_lead_in);
    cfg.max_answer_tokens = j.value("max_answer_tokens", cfg.max_answer_tokens);
    cfg.implicit_think_start = j.value("implicit_think_start", cfg.implicit_think_start);
    cfg.verify_params.temperature = j.value("verify_temperature", cfg.verify_params.temperature);
    cfg.verify_params.max_tokens = j.value("verify_max_tokens", cfg.verify_params.max_tokens);
    cfg.validate();
    return cfg;
}

void parse_gateway(const json& j, GatewayConfig& g) {
    reject_unknown_keys(j,
                        {"listen_host", "listen_port", "concurrency_limit", "shadow_baseline",
                         "session_log_path", "bearer_token", "reasoning_visibility",
                         "flashthink_enabled", "allow_shared_upstreams", "drain_grace_ms",
                         "override_allowlist"},
                        "gateway");
    g.listen_host = j.value("listen_host", g.listen_host);
    g.listen_port = j.value("listen_port", g.listen_port);
    g.concurrency_limit = j.value("concurrency_limit", g.concurrency_limit);
    g.shadow_baseline = j.value("shadow_baseline", g.shadow_baseline);
    g.session_log_path = j.value("session_log_path", g.session_log_path);
    g.bearer_token = j.value("bearer_token", g.bearer_token);
    if (j.contains("reasoning_visibility"))
        g.visibility = visibility_from_name(j.at("reasoning_visibility").get<std::string>());
    g.flashthink_enabled = j.value("flashthink_enabled", g.flashthink_enabled);
    g.allow_shared_upstreams = j.value("allow_shared_upstreams", g.allow_shared_upstreams);
    g.drain_grace_ms = j.value("drain_grace_ms", g.drain_grace_ms);
    if (j.contains("override_allowlist")) {
        g.override_allowlist.clear();
        for (const auto& k : j.at("override_allowlist"))
            g.override_allowlist.insert(k.get<std::string>());
    }
}

PromptRecord record_for(const BenchmarkItem& item) {
    PromptRecord r;
    r.question = item.question;
    if (!item.exemplars.empty()) r.messages = {Message{"user", eval_prompt(item)}};
    return r;
}

std::string two_decimals(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v;
    return os.str();
}

}  // namespace

AppConfig default_app_config() { return AppConfig{}; }

AppConfig load_app_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) throw IoError("config: cannot read " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw InvalidConfig("config: " + path + ": " + e.what());
    }
    if (!j.is_object()) throw InvalidConfig("config: top level must be an object");
    reject_unknown_keys(j, {"reasoner", "verifier", "verifier_family", "run", "gateway", "bench"},
                        "config");

    AppConfig cfg;
    if (j.contains("reasoner")) cfg.reasoner = parse_upstream(j.at("reasoner"), "reasoner");
    if (j.contains("verifier")) cfg.verifier = parse_upstream(j.at("verifier"), "verifier");
    if (j.contains("verifier_family")) {
        auto name = j.at("verifier_family").get<std::string>();
        auto fam = family_from_name(name);
        if (!fam || *fam == TemplateFamily::Custom)
            throw InvalidConfig("config: unknown verifier_family \"" + name + "\"");
        cfg.verifier_family = *fam;
    }
    if (j.contains("run")) cfg.run = parse_run(j.at("run"));
    if (j.contains("gateway")) parse_gateway(j.at("gateway"), cfg.gateway);
    if (j.contains("bench")) {
        reject_unknown_keys(j.at("bench"), {"workers"}, "bench");
        cfg.bench_workers = j.at("bench").value("workers", cfg.bench_workers);
        if (cfg.bench_workers == 0) throw InvalidConfig("config: bench.workers must be >= 1");
    }

    cfg.gateway.reasoner = cfg.reasoner;
    cfg.gateway.verifier = cfg.verifier;
    cfg.gateway.verifier_family = cfg.verifier_family;
    cfg.gateway.run_defaults = cfg.run;
    return cfg;
}

ClientSet make_clients(const AppConfig& cfg, const std::string& fixture_dir) {
    ClientSet set;
    if (!fixture_dir.empty()) {
        auto reasoner_path = fixture_dir + "/reasoner.jsonl";
        set.reasoner = std::make_shared<ScriptedClient>(load_fixture(reasoner_path));
        auto verifier_path = fixture_dir + "/verifier.jsonl";
        if (std::filesystem::exists(verifier_path))
            set.verifier = std::make_shared<ScriptedClient>(load_fixture(verifier_path));
        return set;
    }
    if (cfg.reasoner.base_url.empty())
        throw InvalidConfig("reasoner.base_url is required without --fixture-dir");
    auto http_config = [&](const UpstreamConfig& u) {
        HttpClientConfig h;
        h.base_url = u.base_url;
        h.model = u.model;
        if (!u.api_key_env.empty()) {
            if (const char* key = std::getenv(u.api_key_env.c_str())) h.api_key = key;
        }
        h.open_marker = cfg.run.markers.open_marker;
        h.close_marker = cfg.run.markers.close_marker;
        return h;
    };
    set.reasoner = std::make_shared<HttpClient>(http_config(cfg.reasoner));
    if (!cfg.verifier.base_url.empty())
        set.verifier = std::make_shared<HttpClient>(http_config(cfg.verifier));
    return set;
}

int cmd_run(const AppConfig& cfg, const ClientSet& clients, const RunOptions& opts,
            std::ostream& out, std::ostream& err) {
    if (opts.question.empty()) throw InvalidConfig("run: question must not be empty");
    PromptRecord record;
    record.question = opts.question;

    FlashThinkResult result;
    if (opts.baseline) {
        result = run_baseline(*clients.reasoner, record, cfg.run);
    } else {
        if (!clients.verifier)
            throw InvalidConfig("run: a verifier upstream (or fixture) is required");
        auto tmpl = PromptTemplate::builtin(cfg.verifier_family);
        result = run_flashthink(*clients.reasoner, *clients.verifier, tmpl, record, cfg.run);
    }

    if (opts.json) {
        json j = {
            {"exit_kind", exit_kind_name(result.exit_kind)},
            {"reasoning_content", result.reasoning_content},
            {"answer", result.answer},
            {"chunks_kept", result.chunks_kept},
            {"verifier_calls", result.verifier_calls},
            {"reasoning_tokens", result.reasoning_tokens},
            {"answer_tokens", result.answer_tokens},
            {"wasted_tokens", result.wasted_tokens},
            {"fail_open_count", result.fail_open_count},
            {"wall_time_ms", result.wall_time.count()},
        };
        if (result.baseline_reasoning_tokens)
            j["baseline_reasoning_tokens"] = *result.baseline_reasoning_tokens;
        if (!result.error_detail.empty()) j["error"] = result.error_detail;
        out << j.dump(2) << "\n";
    } else {
        out << "--- reasoning (" << result.chunks_kept << " chunks kept) ---\n"
            << result.reasoning_content << "\n"
            << "--- answer ---\n"
            << result.answer << "\n"
            << "--- accounting ---\n"
            << "exit_kind: " << exit_kind_name(result.exit_kind) << "\n"
            << "chunks_kept: " << result.chunks_kept << "\n"
            << "verifier_calls: " << result.verifier_calls << "\n"
            << "reasoning_tokens: " << result.reasoning_tokens << "\n"
            << "answer_tokens: " << result.answer_tokens << "\n"
            << "wasted_tokens: " << result.wasted_tokens << "\n"
            << "fail_open_count: " << result.fail_open_count << "\n"
            << "wall_time_ms: " << result.wall_time.count() << "\n";
    }

    if (result.exit_kind == ExitKind::Error) {
        err << "error: " << result.error_detail << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

int cmd_bench(const AppConfig& cfg, const ClientSet& clients, const BenchCmdOptions& opts,
              std::ostream& out, std::ostream& err) {
    auto items = load_benchmark(opts.dataset_path);
    if (opts.shots > 0) {
        if (opts.train_path.empty())
            throw InvalidConfig("bench: --shots requires --train");
        auto train = load_benchmark(opts.train_path);
        attach_exemplars(items, train, opts.shots, opts.seed);
    }

    PromptTemplate tmpl = PromptTemplate::builtin(cfg.verifier_family);
    const bool needs_verifier = opts.mode != BenchMode::Baseline;
    if (needs_verifier && !clients.verifier)
        throw InvalidConfig("bench: mode " + std::string(bench_mode_name(opts.mode)) +
                            " needs a verifier upstream (or fixture)");

    BenchOptions bench_opts;
    bench_opts.mode = opts.mode;
    bench_opts.workers = opts.workers.value_or(cfg.bench_workers);
    auto report = run_bench(*clients.reasoner, clients.verifier.get(),
                            needs_verifier ? &tmpl : nullptr, items, cfg.run, bench_opts);
    write_report(report, opts.report_path);

    if (opts.json) {
        out << report_json(report).dump(2) << "\n";
    } else {
        out << "mode: " << bench_mode_name(report.mode) << "\n"
            << "items: " << report.items.size() << "  failures: " << report.failures << "\n"
            << "mean score: " << two_decimals(report.mean_score_x100) << "\n";
        if (report.mean_efficiency)
            out << "mean efficiency: " << two_decimals(*report.mean_efficiency * 100.0) << "%\n";
        out << "exit kinds:";
        for (const auto& [kind, count] : report.exit_kind_counts)
            out << " " << kind << "=" << count;
        out << "\n"
            << "wrote " << opts.report_path << "\n";
    }
    if (report.failures > 0)
        err << "warning: " << report.failures << " of " << report.items.size()
            << " items failed\n";
    return kExitOk;
}

int cmd_ft2(const AppConfig& cfg, const ClientSet& clients, const Ft2CmdOptions& opts,
            std::ostream& out, std::ostream& err) {
    if (opts.stride == 0) throw InvalidConfig("ft2: stride must be >= 1");
    auto items = load_benchmark(opts.dataset_path);
    std::sort(items.begin(), items.end(),
              [](const BenchmarkItem& a, const BenchmarkItem& b) { return a.id < b.id; });
    std::string benchmark = opts.benchmark_name.empty()
                                ? std::filesystem::path(opts.dataset_path).stem().string()
                                : opts.benchmark_name;
    PromptTemplate tmpl = PromptTemplate::builtin(cfg.verifier_family);

    struct ItemResult {
        std::vector<TrainingSample> samples;
        std::size_t failures = 0;
        std::string error;
    };
    std::vector<ItemResult> per_item(items.size());
    std::atomic<std::size_t> next{0};

    auto work = [&] {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= items.size()) return;
            const auto& item = items[i];
            auto& slot = per_item[i];
            try {
                auto record = record_for(item);
                auto baseline = run_baseline(*clients.reasoner, record, cfg.run);
                if (baseline.exit_kind == ExitKind::Error) {
                    slot.error = baseline.error_detail.empty() ? "baseline run failed"
                                                               : baseline.error_detail;
                    slot.failures += 1;
                    continue;
                }
                double baseline_score = score_item(item, baseline.answer);
                bool baseline_correct = baseline_score >= opts.correct_threshold;

                std::vector<Chunk> chunks;
                for (const auto& ev :
                     segment_complete(baseline.reasoning_content, cfg.run.delimiters,
                                      cfg.run.markers, cfg.run.implicit_think_start)) {
                    if (ev.kind == SegmentEvent::Kind::ChunkComplete) chunks.push_back(ev.chunk);
                }
                if (chunks.empty()) {
                    slot.error = "baseline produced no reasoning chunks";
                    slot.failures += 1;
                    continue;
                }

                Ft2Options ft2_opts;
                ft2_opts.stride = opts.stride;
                ft2_opts.epsilon = opts.epsilon;
                ft2_opts.correct_threshold = opts.correct_threshold;
                auto scorer = [&](const std::string& answer) { return score_item(item, answer); };
                auto prefixes = generate_prefix_answers(*clients.reasoner, record, chunks,
                                                        cfg.run, scorer, ft2_opts);
                for (const auto& p : prefixes) {
                    if (!p.error.empty()) {
                        slot.failures += 1;
                        continue;
                    }
                    slot.samples.push_back(label_sample_graded(item.question, p, baseline_score,
                                                               baseline_correct, opts.epsilon,
                                                               benchmark, item.id));
                }
            } catch (const std::exception& e) {
                slot.error = e.what();
                slot.failures += 1;
            }
        }
    };
    std::size_t workers = opts.workers.value_or(cfg.bench_workers);
    if (workers == 0) throw InvalidConfig("ft2: workers must be >= 1");
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < std::min(workers, items.size()); ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();

    std::vector<TrainingSample> samples;
    std::size_t failures = 0, positives = 0, negatives = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        failures += per_item[i].failures;
        if (!per_item[i].error.empty())
            err << "warning: " << items[i].id << ": " << per_item[i].error << "\n";
        for (auto& s : per_item[i].samples) {
            (s.label == Label::Positive ? positives : negatives) += 1;
            samples.push_back(std::move(s));
        }
    }
    std::size_t lines = emit_dataset(samples, tmpl, opts.out_path);

    if (opts.json) {
        json j = {
            {"items", items.size()},  {"continuations", lines}, {"positives", positives},
            {"negatives", negatives}, {"failures", failures},   {"output", opts.out_path},
        };
        out << j.dump(2) << "\n";
    } else {
        out << "items: " << items.size() << "  continuations: " << lines
            << "  positives: " << positives << "  negatives: " << negatives
            << "  failures: " << failures << "\n"
            << "wrote " << opts.out_path << "\n";
    }
    return kExitOk;
}

int cmd_fixtures(const FixturesCmdOptions& opts, std::ostream& out, std::ostream& err) {
    if (opts.paths.empty()) throw InvalidConfig("fixtures: at least one file is required");
    json summary = json::array();
    for (const auto& path : opts.paths) {
        ScriptedClient::from_file(path);  // throws FixtureFormatError on bad entries
        std::ifstream in(path, std::ios::binary);
        std::size_t entries = 0;
        std::string line;
        while (std::getline(in, line)) {
            if (line.find_first_not_of(" \t\r") != std::string::npos) entries += 1;
        }
        if (opts.json)
            summary.push_back({{"path", path}, {"entries", entries}, {"valid", true}});
        else
            out << path << ": " << entries << " entries, ok\n";
    }
    if (opts.json) out << summary.dump(2) << "\n";
    (void)err;
    return kExitOk;
}

std::unique_ptr<Gateway> build_gateway(const AppConfig& cfg, const ClientSet& clients) {
    return std::make_unique<Gateway>(cfg.gateway, clients.reasoner, clients.verifier);
}

}  // namespace flashthink
