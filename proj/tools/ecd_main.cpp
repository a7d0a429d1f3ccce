// Command-line front end: corpus ingestion, labeling, training, evaluation,
// active-learning sessions and the annotation service.

#include <signal.h>

#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "ecd/corpus.hpp"
#include "ecd/error.hpp"
#include "ecd/eval.hpp"
#include "ecd/labels.hpp"
#include "ecd/service.hpp"
#include "ecd/session.hpp"
#include "ecd/summary.hpp"
#include "ecd/train.hpp"

namespace {

using namespace ecd;
using nlohmann::json;

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

struct TrainFlags {
  int epochs = 10;
  int batch_size = 16;
  double lr = 1e-4;
  double dropout = 0.1;
  std::uint64_t seed = 0;
  std::uint32_t hidden_dim = 768;
  std::string optimizer = "adam";
  std::uint32_t feature_dim = 1u << 18;
  int labels = 4;

  void add(CLI::App* app) {
    app->add_option("--labels", labels, "2 (coref, ellipsis) or 4")
        ->check(CLI::IsMember({2, 4}));
    app->add_option("--epochs", epochs);
    app->add_option("--batch-size", batch_size);
    app->add_option("--lr", lr);
    app->add_option("--dropout", dropout);
    app->add_option("--seed", seed);
    app->add_option("--hidden-dim", hidden_dim);
    app->add_option("--optimizer", optimizer)->check(CLI::IsMember({"adam", "sgd"}));
    app->add_option("--feature-dim", feature_dim);
  }

  TrainConfig config() const {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.learning_rate = lr;
    cfg.dropout = dropout;
    cfg.shuffle_seed = seed;
    cfg.init_seed = seed;
    cfg.hidden_dim = hidden_dim;
    cfg.optimizer = parse_optimizer(optimizer);
    cfg.label_set = label_set_from_count(labels);
    cfg.validate();
    return cfg;
  }
};

int cmd_ingest(const std::string& source, const std::string& in_path,
               const std::string& out_path, const std::string& gold_path,
               bool one_per_entity) {
  const Source src = parse_source(source);
  ParseResult parsed = parse_dialogues(in_path, src);
  for (const Diagnostic& d : parsed.warnings) {
    std::cerr << in_path << ":" << d.line << ": warning: " << d.message << "\n";
  }
  for (const Diagnostic& d : parsed.errors) {
    std::cerr << in_path << ":" << d.line << ": error: " << d.message << "\n";
  }
  if (!parsed.ok()) return 1;

  std::vector<Dialogue> dialogues = std::move(parsed.dialogues);
  if (one_per_entity) {
    if (src != Source::kConvQuestions) {
      throw Error("--one-per-entity only applies to convquestions");
    }
    dialogues = subset_one_per_entity(dialogues);
  }
  std::optional<GoldTable> gold;
  if (!gold_path.empty()) gold = load_gold_table(gold_path);

  std::vector<Instance> instances;
  std::vector<std::string> warnings;
  for (const Dialogue& d : dialogues) {
    auto part = extract_instances(d, gold ? &*gold : nullptr, &warnings);
    instances.insert(instances.end(), part.begin(), part.end());
  }
  for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
  write_instances(std::filesystem::path(out_path), instances);
  std::cerr << dialogues.size() << " dialogues, " << instances.size()
            << " instances\n";
  return 0;
}

int cmd_stats(const std::vector<std::string>& paths, bool as_json) {
  std::vector<std::vector<Instance>> splits;
  for (const std::string& p : paths) splits.push_back(read_instances(std::filesystem::path(p)));
  const DatasetSummary s = dataset_summary(splits);
  if (as_json) {
    std::cout << s.to_json().dump(2) << "\n";
  } else {
    std::cout << s.to_text() << "\n";
  }
  return 0;
}

int cmd_fill(const std::string& in_path, const std::string& out_path,
             const std::string& lexicon_path) {
  std::vector<Instance> instances = read_instances(std::filesystem::path(in_path));
  const PronounLexicon lexicon =
      lexicon_path.empty() ? default_lexicon() : PronounLexicon::load(lexicon_path);
  fill_instances(instances, lexicon);
  write_instances(std::filesystem::path(out_path), instances);
  return 0;
}

int cmd_train(const std::string& train_path, const std::string& init_path,
              const std::string& out_path, const TrainFlags& flags) {
  const std::vector<Instance> instances = read_instances(std::filesystem::path(train_path));
  TrainConfig cfg = flags.config();
  std::optional<Model> init;
  EncoderSpec spec;
  spec.feature_dim = flags.feature_dim;
  if (!init_path.empty()) {
    init = load_model(init_path);
    spec = init->encoder;
    cfg.hidden_dim = init->params.hidden_dim();
  }
  const auto encoder = make_encoder(spec);
  const TrainResult result =
      train(instances, *encoder, cfg, init ? &init->params : nullptr,
            [](int epoch, double loss) {
              std::cerr << "epoch " << epoch << " loss " << loss << "\n";
            });
  save_model({spec, cfg.label_set, result.params}, out_path);
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& in_path,
                const std::string& out_path) {
  const Model model = load_model(model_path);
  const auto encoder = make_encoder(model.encoder);
  std::ofstream out(out_path);
  if (!out) throw Error("cannot write " + out_path);
  for (const Instance& inst : read_instances(std::filesystem::path(in_path))) {
    const Prediction p = predict(model.params, *encoder, inst);
    json values = json::object();
    for (Label l : kAllLabels) {
      if (head_active(model.label_set, l)) values[std::string(label_name(l))] = p[l];
    }
    LabelVector bin = binarize(p);
    for (Label l : kAllLabels) {
      if (!head_active(model.label_set, l)) bin[l] = -1;
    }
    out << json{{"id", inst.id}, {"predictions", values}, {"labels", to_json(bin)}}.dump()
        << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& test_path, int labels,
             const std::string& out_path, const std::string& errors_path) {
  const Model model = load_model(model_path);
  const auto encoder = make_encoder(model.encoder);
  const std::vector<Instance> test = read_instances(std::filesystem::path(test_path));
  Report report;
  if (labels == 4) report.labels.assign(kAllLabels.begin(), kAllLabels.end());
  std::vector<ErrorCase> errors;
  report.rows.push_back(evaluate(model.params, *encoder, test, report.labels,
                                 std::filesystem::path(model_path).stem().string(),
                                 errors_path.empty() ? nullptr : &errors));
  std::cout << report.to_text();
  if (!out_path.empty()) write_json(out_path, report.to_json());
  if (!errors_path.empty()) {
    std::ofstream out(errors_path);
    if (!out) throw Error("cannot write " + errors_path);
    for (const ErrorCase& e : errors) out << to_json(e).dump() << "\n";
  }
  return 0;
}

void print_status(const Session& s) {
  const json snap = s.snapshot();
  std::cout << "session " << snap["session_id"].get<std::string>() << "  target "
            << snap["target_label"].get<std::string>() << "  round "
            << snap["round"] << "  status " << snap["status"].get<std::string>()
            << "\n";
  for (const HistoryEntry& h : s.state().history) {
    std::cout << "  round " << h.round << "  F1 " << h.f1 << "\n";
  }
  std::cout << "  queue " << s.queue().size() << " dialogues, "
            << snap["progress"]["annotated"] << "/" << snap["progress"]["total"]
            << " annotated\n";
}

int cmd_serve(const std::string& config_path) {
  const ServiceConfig cfg = load_service_config(config_path);
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  AnnotationService service(cfg);
  HttpServer server(service);
  const int port = server.bind(cfg.host, cfg.port);
  std::cerr << "listening on " << cfg.host << ":" << port << "\n";
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  server.run();
  if (waiter.joinable()) {
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ellipsis and coreference detection for conversational questions"};
  app.require_subcommand(1);

  std::string source, in_path, out_path, gold_path, lexicon_path, model_path,
      train_path, init_path, test_path, errors_path, session_path, pool_path,
      eval_path, target = "coref", strategy = "uncertainty", config_path,
      instance_id, annotator;
  std::vector<std::string> stats_paths;
  bool one_per_entity = false, as_json = false;
  int labels = 2, value = -1, max_rounds = 3;
  std::size_t k = 50;
  TrainFlags flags;

  auto* ingest = app.add_subcommand("ingest", "Parse dialogues and extract instances");
  ingest->add_option("--source", source, "convquestions, gecor, canard or synthetic")
      ->required();
  ingest->add_option("--in", in_path)->required();
  ingest->add_option("--out", out_path)->required();
  ingest->add_option("--gold", gold_path, "ConvQuestions gold labels");
  ingest->add_flag("--one-per-entity", one_per_entity);

  auto* stats = app.add_subcommand("stats", "Label statistics per split");
  stats->add_option("--in", stats_paths, "one file per split")->required();
  stats->add_flag("--json", as_json);

  auto* fill = app.add_subcommand("fill", "Detect pronouns and fill dependent labels");
  fill->add_option("--in", in_path)->required();
  fill->add_option("--out", out_path)->required();
  fill->add_option("--lexicon", lexicon_path, "one pronoun per line");

  auto* train_cmd = app.add_subcommand("train", "Train or fine-tune a model");
  train_cmd->add_option("--train", train_path)->required();
  train_cmd->add_option("--init", init_path, "model to continue from");
  train_cmd->add_option("--out", out_path)->required();
  flags.add(train_cmd);

  auto* predict_cmd = app.add_subcommand("predict", "Score instances");
  predict_cmd->add_option("--model", model_path)->required();
  predict_cmd->add_option("--in", in_path)->required();
  predict_cmd->add_option("--out", out_path)->required();

  auto* eval_cmd = app.add_subcommand("eval", "Precision, recall and F1 per label");
  eval_cmd->add_option("--model", model_path)->required();
  eval_cmd->add_option("--test", test_path)->required();
  eval_cmd->add_option("--labels", labels)->check(CLI::IsMember({2, 4}));
  eval_cmd->add_option("--out", out_path);
  eval_cmd->add_option("--errors", errors_path, "false positives/negatives, JSON lines");

  auto* al = app.add_subcommand("al", "Active-learning session");
  al->require_subcommand(1);
  auto* al_start = al->add_subcommand("start", "Create a session");
  al_start->add_option("--session", session_path)->required();
  al_start->add_option("--target", target)->check(CLI::IsMember({"coref", "ellipsis"}));
  al_start->add_option("--train", train_path, "labeled training instances")->required();
  al_start->add_option("--pool", pool_path)->required();
  al_start->add_option("--eval", eval_path)->required();
  al_start->add_option("--k", k, "dialogues per round");
  al_start->add_option("--max-rounds", max_rounds);
  al_start->add_option("--strategy", strategy)->check(CLI::IsMember({"uncertainty", "random"}));
  flags.add(al_start);
  auto* al_round = al->add_subcommand("round", "Train, evaluate and select the next queue");
  al_round->add_option("--session", session_path)->required();
  auto* al_status = al->add_subcommand("status", "Show session state");
  al_status->add_option("--session", session_path)->required();
  al_status->add_flag("--json", as_json);
  auto* al_annotate = al->add_subcommand("annotate", "Record one annotation");
  al_annotate->add_option("--session", session_path)->required();
  al_annotate->add_option("--instance", instance_id)->required();
  al_annotate->add_option("--value", value)->required()->check(CLI::IsMember({0, 1}));
  al_annotate->add_option("--annotator", annotator);

  auto* serve = app.add_subcommand("serve", "Run the annotation service");
  serve->add_option("--config", config_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) return cmd_ingest(source, in_path, out_path, gold_path, one_per_entity);
    if (*stats) return cmd_stats(stats_paths, as_json);
    if (*fill) return cmd_fill(in_path, out_path, lexicon_path);
    if (*train_cmd) return cmd_train(train_path, init_path, out_path, flags);
    if (*predict_cmd) return cmd_predict(model_path, in_path, out_path);
    if (*eval_cmd) return cmd_eval(model_path, test_path, labels, out_path, errors_path);
    if (*al_start) {
      SessionConfig cfg;
      cfg.target = parse_label(target);
      cfg.train_path = train_path;
      cfg.pool_path = pool_path;
      cfg.eval_path = eval_path;
      cfg.k = k;
      cfg.al.max_rounds = max_rounds;
      cfg.al.strategy = parse_strategy(strategy);
      cfg.al.seed = flags.seed;
      cfg.al.train = flags.config();
      cfg.al.encoder.feature_dim = flags.feature_dim;
      print_status(Session::create(session_path, cfg));
      return 0;
    }
    if (*al_round) {
      Session s = Session::open(session_path);
      s.advance();
      print_status(s);
      return 0;
    }
    if (*al_status) {
      const Session s = Session::open(session_path);
      if (as_json) {
        std::cout << s.snapshot().dump(2) << "\n";
      } else {
        print_status(s);
      }
      return 0;
    }
    if (*al_annotate) {
      Session s = Session::open(session_path);
      AnnotationRecord r;
      r.instance_id = instance_id;
      r.label = s.config().target;
      r.value = value;
      r.annotator = annotator;
      s.submit(r);
      print_status(s);
      return 0;
    }
    if (*serve) return cmd_serve(config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
