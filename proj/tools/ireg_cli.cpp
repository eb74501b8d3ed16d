// ireg: dataset generation, the three training stages, evaluation and the
// session server. Artifacts live under $IREG_HOME (default ./ireg_home).

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "ireg/checkpoint.hpp"
#include "ireg/http_server.hpp"
#include "ireg/interaction.hpp"
#include "ireg/listener.hpp"
#include "ireg/persistence.hpp"
#include "ireg/session_service.hpp"
#include "ireg/training.hpp"

namespace fs = std::filesystem;
using namespace ireg;

namespace {

struct Settings {
  DatasetConfig dataset;
  SpeakerConfig speaker;
  LearnedListenerConfig listener;
  SupervisedConfig supervised;
  RLConfig rl;
  RoundRobinConfig round_robin;
  InteractiveConfig interactive;
};

void read_supervised(const Json& j, SupervisedConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.use_mmi = j.value("use_mmi", c.use_mmi);
  c.mmi.lambda = j.value("lambda", c.mmi.lambda);
  c.mmi.margin = j.value("margin", c.mmi.margin);
  c.mmi.negative_seed = j.value("negative_seed", c.mmi.negative_seed);
  c.seed = j.value("seed", c.seed);
}

Json supervised_json(const SupervisedConfig& c) {
  return Json{{"epochs", c.epochs},         {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
              {"use_mmi", c.use_mmi},       {"lambda", c.mmi.lambda},     {"margin", c.mmi.margin},
              {"negative_seed", c.mmi.negative_seed}, {"seed", c.seed}};
}

void read_rl(const Json& j, RLConfig& c) {
  c.beta = j.value("beta", c.beta);
  if (j.contains("reward")) c.reward = reward_mode_from_string(j["reward"].get<std::string>());
  c.temperature = j.value("temperature", c.temperature);
  if (j.contains("baseline")) c.baseline = j["baseline"] == "greedy" ? BaselineMode::kGreedy : BaselineMode::kNone;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
}

Json rl_json(const RLConfig& c) {
  return Json{{"beta", c.beta},
              {"reward", to_string(c.reward)},
              {"temperature", c.temperature},
              {"baseline", c.baseline == BaselineMode::kGreedy ? "greedy" : "none"},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"epochs", c.epochs},
              {"seed", c.seed}};
}

void read_round_robin(const Json& j, RoundRobinConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.seed = j.value("seed", c.seed);
}

Json round_robin_json(const RoundRobinConfig& c) {
  return Json{{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate}, {"seed", c.seed}};
}

Json interactive_json(const InteractiveConfig& c) {
  return Json{{"max_round", c.max_round}, {"beam_width", c.beam_width}, {"threshold", c.threshold}};
}

/// The config file is read before flag parsing so flags override it.
Settings load_settings(int argc, char** argv) {
  Settings s;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) != "--config") continue;
    const Json j = read_json(argv[i + 1]);
    if (j.contains("dataset")) s.dataset = j["dataset"].get<DatasetConfig>();
    if (j.contains("speaker")) s.speaker = j["speaker"].get<SpeakerConfig>();
    if (j.contains("listener")) s.listener = j["listener"].get<LearnedListenerConfig>();
    if (j.contains("supervised")) read_supervised(j["supervised"], s.supervised);
    if (j.contains("rl")) read_rl(j["rl"], s.rl);
    if (j.contains("round_robin")) read_round_robin(j["round_robin"], s.round_robin);
    if (j.contains("interactive")) {
      s.interactive.max_round = j["interactive"].value("max_round", s.interactive.max_round);
      s.interactive.beam_width = j["interactive"].value("beam_width", s.interactive.beam_width);
    }
  }
  return s;
}

fs::path home_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("IREG_HOME"); env && *env) return env;
  return "ireg_home";
}

struct Paths {
  fs::path home;
  fs::path data() const { return home / "data"; }
  fs::path stats() const { return data() / "corpus_stats.json"; }
  fs::path checkpoints() const { return home / "checkpoints"; }
  fs::path history() const { return home / "history" / "interaction_history.jsonl"; }
  fs::path eval() const { return home / "eval"; }
  fs::path manifests() const { return home / "manifests"; }
};

fs::path or_default(const std::string& flag, const fs::path& fallback) { return flag.empty() ? fallback : fs::path(flag); }

std::unique_ptr<Listener> make_listener(const std::string& spec, const AttributeSchema& schema) {
  if (spec.empty() || spec == "oracle") return std::make_unique<OracleListener>(schema);
  return std::make_unique<LearnedListener>(load_listener(spec));
}

ProgressFn log_progress() {
  return [](const TrainingProgress& p) { spdlog::info("[{}] epoch {} value {:.5f}", p.stage, p.epoch + 1, p.value); };
}

void write_manifest(const Paths& paths, Manifest& m) {
  m.finished_at = utc_timestamp();
  std::string stamp = m.finished_at;
  for (char& c : stamp)
    if (c == ':') c = '-';
  const fs::path out = paths.manifests() / (m.command + "-" + stamp + ".json");
  write_json(out, m.to_json());
  spdlog::info("manifest written to {}", out.string());
}

}  // namespace

int main(int argc, char** argv) {
  Settings s;
  try {
    s = load_settings(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  CLI::App app{"Interactive referring-expression generation workbench"};
  app.require_subcommand(1);
  std::string home_flag, config_flag, log_level = "info";
  app.add_option("--home", home_flag, "Artifact root (overrides IREG_HOME)");
  app.add_option("--config", config_flag, "JSON config file; flags override it")->check(CLI::ExistingFile);
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error")->capture_default_str();

  std::string listener_flag = "oracle", init_flag, out_flag, speaker_flag, history_flag, ireg_flag, reinforced_flag;
  std::string split_flag;
  bool easy = false;

  auto* gen = app.add_subcommand("gen-data", "Generate the grid-world dataset");
  gen->add_option("--seed", s.dataset.seed)->capture_default_str();
  gen->add_option("--n-scenes", s.dataset.n_scenes)->capture_default_str();
  gen->add_option("--targets-per-scene", s.dataset.targets_per_scene)->capture_default_str();
  gen->add_flag("--easy", easy, "Do not force shared categories");

  auto* tl = app.add_subcommand("train-listener", "Train and freeze the learned listener");
  tl->add_option("--epochs", s.listener.epochs)->capture_default_str();
  tl->add_option("--seed", s.listener.seed)->capture_default_str();
  tl->add_option("--out", out_flag, "Checkpoint path");

  auto* sup = app.add_subcommand("train-sup", "Supervised speaker training (CE, or MMI with --mmi)");
  bool use_mmi = false;
  sup->add_flag("--mmi", use_mmi, "Add the MMI margin term");
  sup->add_option("--epochs", s.supervised.epochs)->capture_default_str();
  sup->add_option("--lr", s.supervised.learning_rate)->capture_default_str();
  sup->add_option("--batch-size", s.supervised.batch_size)->capture_default_str();
  sup->add_option("--lambda", s.supervised.mmi.lambda)->capture_default_str();
  sup->add_option("--margin", s.supervised.mmi.margin)->capture_default_str();
  sup->add_option("--seed", s.supervised.seed)->capture_default_str();
  sup->add_option("--out", out_flag, "Checkpoint path");

  auto* rl = app.add_subcommand("train-rl", "REINFORCE with the listener-in-the-loop reward");
  std::string reward_flag = to_string(s.rl.reward), baseline_flag = "none";
  rl->add_option("--init", init_flag, "Supervised checkpoint");
  rl->add_option("--beta", s.rl.beta)->capture_default_str();
  rl->add_option("--reward", reward_flag)->check(CLI::IsMember({"rec", "cider", "both"}))->capture_default_str();
  rl->add_option("--baseline", baseline_flag)->check(CLI::IsMember({"none", "greedy"}))->capture_default_str();
  rl->add_option("--epochs", s.rl.epochs)->capture_default_str();
  rl->add_option("--lr", s.rl.learning_rate)->capture_default_str();
  rl->add_option("--temperature", s.rl.temperature)->capture_default_str();
  rl->add_option("--seed", s.rl.seed)->capture_default_str();
  rl->add_option("--listener", listener_flag, "oracle or a listener checkpoint")->capture_default_str();
  rl->add_option("--out", out_flag, "Checkpoint path");

  auto* collect = app.add_subcommand("collect-history", "Collect failure records with the reinforced speaker");
  collect->add_option("--speaker", speaker_flag, "Reinforced checkpoint");
  collect->add_option("--split", split_flag, "Split to collect on")->capture_default_str();
  collect->add_option("--listener", listener_flag)->capture_default_str();
  collect->add_option("--out", out_flag, "History file");

  auto* ti = app.add_subcommand("train-ireg", "Round-robin REG + refiner training");
  ti->add_option("--init", init_flag, "Reinforced checkpoint");
  ti->add_option("--history", history_flag, "Interaction history file");
  ti->add_option("--epochs", s.round_robin.epochs)->capture_default_str();
  ti->add_option("--lr", s.round_robin.learning_rate)->capture_default_str();
  ti->add_option("--seed", s.round_robin.seed)->capture_default_str();
  ti->add_option("--out", out_flag, "Checkpoint path");

  auto* ev = app.add_subcommand("eval", "Multi-round evaluation table and per-round plot data");
  ev->add_option("--ireg", ireg_flag, "IREG checkpoint");
  ev->add_option("--reinforced", reinforced_flag, "Reinforced checkpoint for round 0");
  ev->add_option("--speaker", speaker_flag, "Evaluate one checkpoint single-shot instead");
  ev->add_option("--max-round", s.interactive.max_round)->check(CLI::PositiveNumber)->capture_default_str();
  ev->add_option("--split", split_flag)->capture_default_str();
  ev->add_option("--listener", listener_flag)->capture_default_str();
  ev->add_option("--out", out_flag, "Output directory");

  auto* serve = app.add_subcommand("serve", "HTTP session service");
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--ireg", ireg_flag);
  serve->add_option("--reinforced", reinforced_flag);
  serve->add_option("--listener", listener_flag)->capture_default_str();
  serve->add_option("--max-round", s.interactive.max_round)->check(CLI::PositiveNumber)->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  const Paths paths{home_dir(home_flag)};
  Manifest manifest;
  manifest.started_at = utc_timestamp();
  if (!config_flag.empty()) manifest.inputs["config_file"] = file_hash(config_flag);

  try {
    if (gen->parsed()) {
      manifest.command = "gen-data";
      if (easy) s.dataset.world.hard = false;
      const Dataset data = generate_dataset(s.dataset);
      save_dataset(data, paths.data());
      write_json(paths.stats(), corpus_stats_to_json(corpus_stats_for(data.split(Split::kTrain))));
      manifest.config = Json{{"dataset", s.dataset}};
      manifest.seeds["dataset"] = s.dataset.seed;
      hash_files(manifest.outputs, {paths.data() / "world.json", paths.data() / "scenes.jsonl",
                                    paths.data() / "samples.jsonl", paths.stats()});
      manifest.metrics["scenes"] = data.scenes().size();
      manifest.metrics["samples"] = data.samples().size();
      spdlog::info("{} scenes, {} samples written to {}", data.scenes().size(), data.samples().size(),
                   paths.data().string());
    } else {
      const Dataset data = load_dataset(paths.data());
      hash_files(manifest.inputs, {paths.data() / "scenes.jsonl", paths.data() / "samples.jsonl"});
      const AttributeSchema& schema = data.world().schema;
      const auto train = data.split(Split::kTrain);

      if (tl->parsed()) {
        manifest.command = "train-listener";
        ListenerTrainingReport report;
        const LearnedListener listener =
            train_learned_listener(data, train, data.split(Split::kVal), s.listener, &report);
        const fs::path out = or_default(out_flag, paths.checkpoints() / "listener.ckpt");
        save_listener(listener, out);
        manifest.config = Json{{"listener", s.listener}};
        manifest.seeds["listener"] = s.listener.seed;
        manifest.metrics = Json{{"final_loss", report.final_loss},
                                {"train_accuracy", report.train_accuracy},
                                {"val_accuracy", report.val_accuracy}};
        hash_files(manifest.outputs, {out});
        spdlog::info("listener val grounding accuracy {:.4f}", report.val_accuracy);
      } else if (sup->parsed()) {
        manifest.command = "train-sup";
        s.supervised.use_mmi = use_mmi;
        Speaker speaker = make_speaker(data.world(), s.speaker);
        const auto curve = train_supervised(speaker, data, train, s.supervised, log_progress());
        const fs::path out = or_default(out_flag, paths.checkpoints() / (use_mmi ? "mmi.ckpt" : "ce.ckpt"));
        save_speaker(speaker, out);
        const OracleListener oracle(schema);
        const SingleShotResult val = evaluate_single_shot(speaker, oracle, data, data.split(Split::kVal));
        manifest.config = Json{{"speaker", s.speaker}, {"supervised", supervised_json(s.supervised)}};
        manifest.seeds = Json{{"init", s.speaker.init_seed}, {"train", s.supervised.seed}};
        manifest.metrics = Json{{"loss_curve", curve}, {"val_accuracy", val.accuracy}, {"val_cider", val.cider}};
        hash_files(manifest.outputs, {out});
        spdlog::info("val accuracy {:.4f} cider {:.4f}", val.accuracy, val.cider);
      } else if (rl->parsed()) {
        manifest.command = "train-rl";
        s.rl.reward = reward_mode_from_string(reward_flag);
        s.rl.baseline = baseline_flag == "greedy" ? BaselineMode::kGreedy : BaselineMode::kNone;
        const fs::path init = or_default(init_flag, paths.checkpoints() / "mmi.ckpt");
        Speaker speaker = load_speaker(init);
        const auto listener = make_listener(listener_flag, schema);
        const CorpusStats stats = corpus_stats_from_json(read_json(paths.stats()));
        const auto curve = train_reinforce(speaker, data, train, *listener, stats, s.rl, log_progress());
        const fs::path out = or_default(out_flag, paths.checkpoints() / ("rl-" + to_string(s.rl.reward) + ".ckpt"));
        save_speaker(speaker, out);
        const SingleShotResult val = evaluate_single_shot(speaker, *listener, data, data.split(Split::kVal));
        manifest.config = Json{{"rl", rl_json(s.rl)}, {"listener", listener_flag}};
        manifest.seeds["rl"] = s.rl.seed;
        hash_files(manifest.inputs, {init});
        manifest.metrics = Json{{"reward_curve", curve}, {"val_accuracy", val.accuracy}, {"val_cider", val.cider}};
        hash_files(manifest.outputs, {out});
        spdlog::info("val accuracy {:.4f} cider {:.4f}", val.accuracy, val.cider);
      } else if (collect->parsed()) {
        manifest.command = "collect-history";
        const fs::path spk = or_default(speaker_flag, paths.checkpoints() / "rl-both.ckpt");
        const Speaker speaker = load_speaker(spk);
        const auto listener = make_listener(listener_flag, schema);
        const auto samples = data.split(split_flag.empty() ? Split::kTrain : split_from_string(split_flag));
        const InteractionHistory history = collect_interaction_history(speaker, *listener, data, samples);
        const fs::path out = or_default(out_flag, paths.history());
        save_history(history, out);
        manifest.config = Json{{"split", split_flag.empty() ? "train" : split_flag}, {"listener", listener_flag}};
        hash_files(manifest.inputs, {spk});
        manifest.metrics = Json{{"records", history.records.size()},
                                {"probes", history.probes.size()},
                                {"merged_size", history.merged_size()},
                                {"failure_fraction", history.failure_fraction()}};
        hash_files(manifest.outputs, {out});
        spdlog::info("{} failure records out of {} samples", history.records.size(), history.probes.size());
      } else if (ti->parsed()) {
        manifest.command = "train-ireg";
        const fs::path init = or_default(init_flag, paths.checkpoints() / "rl-both.ckpt");
        const fs::path hist = or_default(history_flag, paths.history());
        Speaker speaker = load_speaker(init);
        const auto records = load_history(hist);
        const auto curve = round_robin_train(speaker, data, train, records, s.round_robin, log_progress());
        const fs::path out = or_default(out_flag, paths.checkpoints() / "ireg.ckpt");
        save_speaker(speaker, out);
        manifest.config = Json{{"round_robin", round_robin_json(s.round_robin)}};
        manifest.seeds["round_robin"] = s.round_robin.seed;
        hash_files(manifest.inputs, {init, hist});
        manifest.metrics = Json{{"loss_curve", curve}, {"refiner_records", records.size()}};
        hash_files(manifest.outputs, {out});
      } else if (ev->parsed()) {
        manifest.command = "eval";
        const auto split = data.split(split_flag.empty() ? Split::kTest : split_from_string(split_flag));
        const auto listener = make_listener(listener_flag, schema);
        const fs::path out_dir = or_default(out_flag, paths.eval());
        manifest.config = Json{{"interactive", interactive_json(s.interactive)},
                               {"split", split_flag.empty() ? "test" : split_flag},
                               {"listener", listener_flag}};
        if (!speaker_flag.empty()) {
          const Speaker speaker = load_speaker(speaker_flag);
          const SingleShotResult r = evaluate_single_shot(speaker, *listener, data, split, s.interactive.beam_width);
          const Json table{{"schema_version", kSchemaVersion}, {"samples", r.samples},
                           {"accuracy", r.accuracy},           {"cider", r.cider}};
          write_json(out_dir / "single_shot.json", table);
          manifest.metrics = table;
          std::cout << table.dump(2) << "\n";
        } else {
          const fs::path ireg_path = or_default(ireg_flag, paths.checkpoints() / "ireg.ckpt");
          const fs::path rein_path = or_default(reinforced_flag, paths.checkpoints() / "rl-both.ckpt");
          const Speaker ireg = load_speaker(ireg_path);
          const Speaker reinforced = load_speaker(rein_path, ireg.vocab());
          const EvaluationTable table = evaluate_split(ireg, reinforced, *listener, data, split, s.interactive);
          Json plot{{"schema_version", kSchemaVersion}, {"x_label", "round budget"}, {"y_label", "REC accuracy"},
                    {"budgets", Json::array()},         {"accuracy", table.accuracy_by_budget}};
          for (int k = 1; k <= table.max_round; ++k) plot["budgets"].push_back(k);
          write_json(out_dir / "table.json", Json(table));
          write_json(out_dir / "plot.json", plot);
          save_traces(table.traces, out_dir / "traces.jsonl");
          hash_files(manifest.inputs, {ireg_path, rein_path});
          hash_files(manifest.outputs, {out_dir / "table.json", out_dir / "plot.json", out_dir / "traces.jsonl"});
          manifest.metrics = Json(table);
          std::cout << Json(table).dump(2) << "\n";
        }
      } else if (serve->parsed()) {
        manifest.command = "serve";
        const fs::path ireg_path = or_default(ireg_flag, paths.checkpoints() / "ireg.ckpt");
        const fs::path rein_path = or_default(reinforced_flag, paths.checkpoints() / "rl-both.ckpt");
        const Speaker ireg = load_speaker(ireg_path);
        const Speaker reinforced = load_speaker(rein_path, ireg.vocab());
        const auto listener = make_listener(listener_flag, schema);
        SessionService service(data, ireg, reinforced, *listener, {s.interactive, 0});
        HttpServer server(service);
        manifest.config = Json{{"host", host}, {"port", port}, {"interactive", interactive_json(s.interactive)}};
        hash_files(manifest.inputs, {ireg_path, rein_path});
        write_manifest(paths, manifest);
        server.listen(host, port);
        return 0;
      }
    }
    write_manifest(paths, manifest);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
