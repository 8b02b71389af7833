#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "p808/analysis.hpp"
#include "p808/error.hpp"
#include "p808/localization.hpp"
#include "p808/manifest.hpp"
#include "p808/metrics.hpp"
#include "p808/prepare.hpp"
#include "p808/report.hpp"
#include "p808/service.hpp"
#include "p808/simulator.hpp"
#include "p808/store.hpp"
#include "p808/tts.hpp"
#include "p808/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace p808;

namespace {

SessionService* g_service = nullptr;

void on_signal(int) {
  if (g_service != nullptr) g_service->stop();
}

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_file_atomic(path, text);
  }
}

std::shared_ptr<TtsClient> make_tts(const std::string& backend,
                                    const std::string& cache) {
  std::shared_ptr<TtsClient> client;
  if (backend == "stub") {
    client = std::make_shared<StubTtsClient>();
  } else if (backend == "http") {
    client = std::make_shared<HttpTtsClient>(HttpTtsClient::from_environment());
  } else {
    throw InvalidArgument("unknown TTS backend \"" + backend + "\"");
  }
  if (!cache.empty()) client = std::make_shared<CachedTtsClient>(client, cache);
  return client;
}

struct CampaignFlags {
  std::string config_file;
  std::string id;
  std::string language;
  int ratings_per_clip = 0;
  int block_size = 0;
  int training_interval = 0;
  int setup_interval = 0;
  double exclusion_threshold = -1.0;
  std::uint64_t seed = 0;
  bool seed_set = false;

  CampaignConfig build() const {
    CampaignConfig c;
    if (!config_file.empty()) {
      c = config_from_json(json::parse(read_file(config_file)));
    }
    if (!id.empty()) c.id = id;
    if (!language.empty()) c.language = language;
    if (ratings_per_clip) c.ratings_per_clip = ratings_per_clip;
    if (block_size) c.block_size = block_size;
    if (training_interval) c.training_interval = training_interval;
    if (setup_interval) c.setup_interval = setup_interval;
    if (exclusion_threshold >= 0.0) {
      c.worker_rejection_exclusion_threshold = exclusion_threshold;
    }
    if (seed_set) c.seed = seed;
    return c;
  }
};

void add_rule_flags(CLI::App* cmd, ReliabilityRules& rules) {
  cmd->add_option("--gold-tolerance", rules.gold_tolerance,
                  "Allowed distance from a gold clip's expected answer");
  cmd->add_option("--min-listen", rules.min_listen_fraction,
                  "Fraction of each clip that must be played");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Localized crowdsourced ACR listening tests"};
  app.require_subcommand(1);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "Generate stimuli from a clip manifest");
  std::string manifest_path, prep_out, prep_catalog, tts_backend = "stub", tts_cache,
      voice, wav_format = "pcm16";
  std::uint64_t prep_seed = 0;
  prepare->add_option("--manifest", manifest_path, "Clip manifest (TSV)")->required();
  prepare->add_option("--out", prep_out, "Output directory")->required();
  prepare->add_option("--catalog", prep_catalog, "String catalog for spoken prompts");
  prepare->add_option("--tts", tts_backend, "TTS backend: stub or http");
  prepare->add_option("--tts-cache", tts_cache, "Directory caching synthesized prompts");
  prepare->add_option("--voice", voice, "TTS voice");
  prepare->add_option("--seed", prep_seed, "Seed for generated noise");
  prepare->add_option("--format", wav_format, "pcm16 or float32");

  // localize
  auto* localize = app.add_subcommand("localize", "String catalog tools");
  localize->require_subcommand(1);
  auto* validate = localize->add_subcommand("validate", "Check a catalog against the reference keys");
  std::string catalog_path;
  validate->add_option("catalog", catalog_path)->required();
  auto* prompts = localize->add_subcommand("prompts", "Print the five trapping prompts");
  prompts->add_option("catalog", catalog_path)->required();

  // campaign
  auto* campaign = app.add_subcommand("campaign", "Create or export campaigns");
  campaign->require_subcommand(1);
  auto* create = campaign->add_subcommand("create", "Create a campaign directory");
  CampaignFlags flags;
  std::string create_dir, create_catalog;
  bool allow_missing_audio = false;
  create->add_option("--manifest", manifest_path, "Clip manifest (TSV)")->required();
  create->add_option("--dir", create_dir, "Campaign directory")->required();
  create->add_option("--catalog", create_catalog, "String catalog served to raters");
  create->add_option("--config", flags.config_file, "Campaign config (JSON)");
  create->add_option("--id", flags.id);
  create->add_option("--language", flags.language);
  create->add_option("--ratings-per-clip", flags.ratings_per_clip);
  create->add_option("--block-size", flags.block_size);
  create->add_option("--training-interval", flags.training_interval);
  create->add_option("--setup-interval", flags.setup_interval);
  create->add_option("--exclusion-threshold", flags.exclusion_threshold);
  create->add_option("--seed", flags.seed)->each([&](const std::string&) { flags.seed_set = true; });
  create->add_flag("--allow-missing-audio", allow_missing_audio,
                   "Do not require the manifest's audio files");
  auto* exportc = campaign->add_subcommand("export", "Write session definitions (TSV)");
  std::string export_dir, export_out;
  exportc->add_option("--dir", export_dir)->required();
  exportc->add_option("--out", export_out, "Output file, - for stdout");

  // status
  auto* status = app.add_subcommand("status", "Replay a campaign log and print its status");
  std::string status_dir;
  status->add_option("dir", status_dir)->required();

  // analyze
  auto* analyze_cmd = app.add_subcommand("analyze", "Run one analysis pass");
  std::string analyze_dir, decisions_out, mos_out;
  ReliabilityRules rules;
  analyze_cmd->add_option("campaign", analyze_dir)->required();
  analyze_cmd->add_option("--decisions", decisions_out, "Decision log output (- for stdout)");
  analyze_cmd->add_option("--mos", mos_out, "Per-clip MOS output (- for stdout)");
  add_rule_flags(analyze_cmd, rules);

  // metrics
  auto* metrics = app.add_subcommand("metrics", "Phone similarity and hallucination flags");
  metrics->require_subcommand(1);
  auto* lps_cmd = metrics->add_subcommand("lps", "Per-utterance LPS");
  std::string ref_path, hyp_path, table_path;
  lps_cmd->add_option("--ref", ref_path)->required();
  lps_cmd->add_option("--hyp", hyp_path)->required();
  auto* flags_cmd = metrics->add_subcommand("flags", "Hallucination-suspect models");
  double fraction = 0.25;
  flags_cmd->add_option("--table", table_path)->required();
  flags_cmd->add_option("--fraction", fraction, "Quartile fraction");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run a simulated campaign");
  std::string scenario_path, sim_dir, sim_out;
  simulate->add_option("scenario", scenario_path)->required();
  simulate->add_option("--campaign-dir", sim_dir, "Persist the campaign here");
  simulate->add_option("--out", sim_out, "Outcome report (JSON)");

  // serve
  auto* serve = app.add_subcommand("serve", "Serve campaigns over HTTP");
  std::vector<std::string> serve_dirs;
  std::string listen = "127.0.0.1:8080", static_dir, admin_token;
  int snapshot_every = 500;
  serve->add_option("--campaign-dir", serve_dirs)->required();
  serve->add_option("--listen", listen, "host:port (port 0 picks one)");
  serve->add_option("--static", static_dir, "Client assets served at /");
  serve->add_option("--admin-token", admin_token, "Required for the analyze endpoint");
  serve->add_option("--snapshot-every", snapshot_every, "Events between snapshots");
  add_rule_flags(serve, rules);

  // report
  auto* report = app.add_subcommand("report", "Render evaluation tables");
  std::string spec_path, report_out;
  report->add_option("--spec", spec_path)->required();
  report->add_option("--out", report_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*prepare) {
      PrepareOptions o;
      o.source_dir = fs::path(manifest_path).parent_path();
      o.out_dir = prep_out;
      if (!prep_catalog.empty()) o.catalog = load_catalog(prep_catalog);
      o.tts = make_tts(tts_backend, tts_cache);
      o.voice = voice;
      o.seed = prep_seed;
      if (wav_format == "float32") o.format = WavFormat::float32;
      else if (wav_format != "pcm16") throw InvalidArgument("format must be pcm16 or float32");
      auto rows = prepare_clips(read_manifest(manifest_path), o);
      // Pass-through rows keep pointing at their original files.
      for (auto& r : rows) {
        if (r.generate.empty() && !r.clip.path.empty() && fs::path(r.clip.path).is_relative()) {
          r.clip.path = fs::absolute(o.source_dir / r.clip.path).lexically_normal().string();
        }
        r.generate.clear();
        r.source.clear();
      }
      fs::create_directories(prep_out);
      write_file_atomic(fs::path(prep_out) / "manifest.tsv", format_manifest(rows));
      std::cout << "wrote " << rows.size() << " clips to "
                << (fs::path(prep_out) / "manifest.tsv").string() << "\n";
    } else if (*validate) {
      const StringCatalog cat = parse_catalog_syntax(read_file(catalog_path));
      const auto issues = validate_catalog(cat);
      for (const auto& i : issues) {
        std::cout << to_string(i.kind) << "\t" << i.key << "\t" << i.detail << "\n";
      }
      if (!issues.empty()) return 1;
      std::cout << "ok " << cat.language() << " (" << cat.entries().size()
                << " entries)\n";
    } else if (*prompts) {
      for (const auto& [label, text] : build_trapping_prompts(load_catalog(catalog_path))) {
        std::cout << label.value << "\t" << text << "\n";
      }
    } else if (*create) {
      const CampaignConfig config = flags.build();
      const auto rows = read_manifest(manifest_path);
      const fs::path base = fs::path(manifest_path).parent_path();
      fs::create_directories(create_dir);
      std::vector<ManifestRow> copied = rows;
      for (auto& r : copied) {
        const fs::path src = fs::path(r.clip.path).is_absolute()
                                 ? fs::path(r.clip.path)
                                 : base / r.clip.path;
        const fs::path rel = fs::path("audio") / (r.clip.id + ".wav");
        if (fs::exists(src)) {
          fs::create_directories(fs::path(create_dir) / "audio");
          fs::copy_file(src, fs::path(create_dir) / rel,
                        fs::copy_options::overwrite_existing);
        } else if (!allow_missing_audio) {
          throw IoError("missing audio for clip " + r.clip.id + ": " + src.string());
        }
        r.clip.path = rel.string();
      }
      if (!create_catalog.empty()) {
        const StringCatalog cat = load_catalog(create_catalog);
        if (cat.language() != config.language) {
          throw ConfigurationError("catalog language " + cat.language() +
                                   " differs from campaign language " + config.language);
        }
        fs::copy_file(create_catalog, fs::path(create_dir) / store_file::catalog,
                      fs::copy_options::overwrite_existing);
      }
      auto store = CampaignStore::create(create_dir, config, split_by_role(copied));
      std::cout << "created campaign " << store->campaign().id() << " with "
                << store->campaign().clip_ids(ClipRole::rating).size()
                << " rating clips, " << store->campaign().required_votes_total()
                << " accepted votes required\n";
    } else if (*exportc) {
      const Campaign c = replay_directory(export_dir);
      std::string out = "session\tworker\tphase\tstatus\tclips\n";
      for (const auto& [id, s] : c.sessions()) {
        std::string paths;
        for (const auto& clip : s.clips) {
          paths += (paths.empty() ? "" : ",") + c.clip(clip).path;
        }
        out += id + "\t" + s.worker + "\t" + to_string(s.phase) + "\t" +
               to_string(s.status) + "\t" + paths + "\n";
      }
      write_or_print(export_out, out);
    } else if (*status) {
      std::cout << to_json(campaign_status(replay_directory(status_dir))).dump(2) << "\n";
    } else if (*analyze_cmd) {
      auto store = CampaignStore::open(analyze_dir);
      Campaign& c = store->campaign();
      const auto made = analyze(c, rules);
      store->write_snapshot();
      std::cerr << "analysis pass decided " << made.size() << " sessions\n";
      write_or_print(decisions_out, format_decision_log(decision_log(c)));
      write_or_print(mos_out, format_clip_mos(c, clip_mos_table(c)));
    } else if (*lps_cmd) {
      const auto rows = lps_per_utterance(read_phone_file(ref_path), read_phone_file(hyp_path));
      double sum = 0.0;
      char buf[64];
      for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.6f", r.lps);
        std::cout << r.utterance << "\t" << buf << "\n";
        sum += r.lps;
      }
      std::snprintf(buf, sizeof buf, "%.6f", rows.empty() ? 0.0 : sum / rows.size());
      std::cout << "mean\t" << buf << "\n";
    } else if (*flags_cmd) {
      QuartileRule rule;
      rule.fraction = fraction;
      for (const auto& m : hallucination_flags(load_metric_csv(table_path), rule)) {
        std::cout << m << "\n";
      }
    } else if (*simulate) {
      const Scenario sc = parse_scenario(json::parse(read_file(scenario_path)));
      CampaignOutcome outcome = [&] {
        if (sim_dir.empty()) {
          return run_campaign(sc.config, sc.clips, sc.truth, sc.population, sc.options);
        }
        StoreOptions so;
        so.durable = false;
        std::int64_t tick = 0;
        so.clock = [tick]() mutable { return ++tick; };
        auto store = CampaignStore::create(sim_dir, sc.config, sc.clips, so);
        const int rounds = drive_campaign(store->campaign(), sc.truth, sc.population, sc.options);
        store->write_snapshot();
        return make_outcome(store->campaign(), rounds);
      }();
      write_or_print(sim_out, outcome_report(outcome, sc.truth, sc.population).dump(2) + "\n");
    } else if (*serve) {
      ServiceOptions so;
      so.rules = rules;
      so.admin_token = admin_token;
      if (!static_dir.empty()) so.static_dir = static_dir;
      SessionService service(so);
      StoreOptions store_options;
      store_options.snapshot_every = snapshot_every;
      for (const auto& d : serve_dirs) service.add_campaign(CampaignStore::open(d, store_options));
      const auto [host, port] = parse_listen_address(listen);
      const int bound = service.bind(host, port);
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on " << host << ":" << bound << std::endl;
      service.run();
      g_service = nullptr;
    } else if (*report) {
      const auto job = parse_report_job(json::parse(read_file(spec_path)),
                                        fs::path(spec_path).parent_path());
      for (const auto& p : run_report(job, report_out)) std::cout << p.string() << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error [" << e.kind() << "]: " << e.what() << "\n";
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "error [parse]: " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error [io]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
