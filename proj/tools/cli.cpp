#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "inflect/align.hpp"
#include "inflect/corpus.hpp"
#include "inflect/error.hpp"
#include "inflect/eval.hpp"
#include "inflect/hallucinate.hpp"
#include "inflect/model_io.hpp"
#include "inflect/train.hpp"

namespace inflect::cli {

namespace fs = std::filesystem;

namespace {

// "kashubian-train-low.tsv" -> "kashubian"
std::string language_of(const fs::path& path) {
  const std::string stem = path.stem().string();
  return stem.substr(0, stem.find('-'));
}

std::vector<Example> read_examples(const fs::path& path) { return parse_tsv(path, language_of(path)); }

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write " + path.string());
  return out;
}

const char* const kSlots[] = {"model.acc", "model.lev", "model.both"};

struct AlignArgs {
  std::string in;
  std::string out;
  int min_stem = 3;
};

void run_align(const AlignArgs& a, std::ostream& stdout_stream) {
  std::ofstream file;
  if (!a.out.empty()) file = open_output(a.out);
  std::ostream& out = a.out.empty() ? stdout_stream : file;
  for (const Example& e : read_examples(a.in)) {
    if (!e.form) throw DataError(a.in + ": align needs a form for lemma '" + to_utf8(e.lemma) + "'");
    const Alignment al = align_chars(e.lemma, *e.form);
    out << format_stem_line(e.lemma, *e.form, find_stem_regions(e.lemma, *e.form, al, a.min_stem)) << '\n';
  }
}

struct HallucinateArgs {
  std::string in;
  std::string out;
  std::size_t n = 10000;
  std::uint64_t seed = 1;
  int min_stem = 3;
  unsigned workers = 1;
};

void run_hallucinate(const HallucinateArgs& a) {
  const std::vector<Example> data = read_examples(a.in);
  if (data.empty()) throw DataError(a.in + ": no examples");
  const std::vector<Example> sets[] = {data};
  const Vocabulary vocab = Vocabulary::build(sets);
  HallucinationOptions opt;
  opt.count = a.n;
  opt.min_stem = a.min_stem;
  opt.workers = a.workers;
  const std::vector<Example> out = hallucinate_dataset(data, vocab.alphabet(language_of(a.in)), a.seed, opt);
  std::ofstream file = open_output(a.out);
  write_tsv(file, out);
}

struct TrainArgs {
  std::vector<std::string> high;
  std::string low;
  std::string dev;
  std::string config;
  std::string out;
  std::vector<std::string> set;
  std::uint64_t seed = 1;
  std::size_t hallucinate = 0;
  unsigned workers = 1;
  bool no_adv = false;
};

void run_train(const TrainArgs& a, const CLI::App& cmd, std::ostream& err) {
  TrainingConfig cfg;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw UsageError("cannot read config " + a.config);
    apply_config_text(cfg, in, a.config);
  }
  for (const std::string& kv : a.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    apply_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (cmd.count("--seed")) cfg.seed = a.seed;
  if (cmd.count("--hallucinate")) cfg.hallucinate = a.hallucinate;
  if (cmd.count("--workers")) cfg.workers = a.workers;
  if (a.no_adv) cfg.discriminator = false;
  cfg.validate();

  std::vector<Example> high;
  for (const std::string& path : a.high) {
    const std::vector<Example> part = read_examples(path);
    high.insert(high.end(), part.begin(), part.end());
  }
  const std::vector<Example> low = read_examples(a.low);
  const std::vector<Example> dev = read_examples(a.dev);
  if (low.empty()) throw DataError(a.low + ": no examples");
  if (dev.empty()) throw DataError(a.dev + ": no examples");
  for (const std::vector<Example>* set : std::initializer_list<const std::vector<Example>*>{&high, &low, &dev})
    for (const Example& e : *set)
      if (!e.form) throw DataError("training and dev files need gold forms (lemma '" + to_utf8(e.lemma) + "')");

  const std::vector<Example> sets[] = {high, low};
  const Vocabulary vocab = Vocabulary::build(sets);
  std::vector<Example> hallucinated;
  if (cfg.hallucinate > 0) {
    HallucinationOptions opt;
    opt.count = cfg.hallucinate;
    opt.min_stem = cfg.min_stem;
    opt.workers = cfg.workers;
    hallucinated = hallucinate_dataset(low, vocab.alphabet(low.front().language), cfg.seed, opt);
  }

  fs::create_directories(a.out);
  const fs::path dir(a.out);
  const std::string config_text = format_config(cfg);
  {
    std::ofstream record = open_output(dir / "config.txt");
    record << "# high = ";
    for (std::size_t i = 0; i < a.high.size(); ++i) record << (i ? "," : "") << a.high[i];
    record << "\n# low = " << a.low << "\n# dev = " << a.dev << "\n" << config_text;
  }
  std::ofstream log = open_output(dir / "train.log");
  log << "phase\tepoch\tlr\ttrain_loss\tdev_acc\tdev_lev\tdecayed\n";

  Trainer trainer(cfg, vocab);
  trainer.on_epoch = [&](const EpochRecord& r) {
    log << format_log_line(r) << '\n' << std::flush;
    err << format_log_line(r) << '\n';
  };
  std::vector<Example> warmup = high;
  warmup.insert(warmup.end(), low.begin(), low.end());
  trainer.phase1(warmup);
  trainer.phase2(high, low, hallucinated, dev);
  trainer.phase3(low, dev);
  trainer.finalize();

  const CheckpointSet& cs = trainer.checkpoints();
  const Snapshot* slots[] = {&*cs.best_accuracy, &*cs.best_levenshtein, &*cs.both_improved};
  const std::string hash = fnv1a_hex(config_text);
  for (int i = 0; i < 3; ++i) save_model(dir / kSlots[i], ModelFile{slots[i]->params, vocab, hash});
}

std::vector<ModelFile> load_models(const std::string& dir, bool ensemble) {
  std::vector<ModelFile> models;
  for (int i = 0; i < (ensemble ? 3 : 1); ++i) {
    const fs::path path = fs::path(dir) / kSlots[i];
    if (!fs::exists(path)) throw UsageError("missing checkpoint " + path.string());
    models.push_back(load_model(path));
    if (!(models.back().vocabulary == models.front().vocabulary))
      throw DataError(path.string() + ": vocabulary differs from " + kSlots[0]);
  }
  return models;
}

std::vector<const ModelParams*> members(const std::vector<ModelFile>& models) {
  std::vector<const ModelParams*> out;
  for (const ModelFile& m : models) out.push_back(&m.params);
  return out;
}

struct PredictArgs {
  std::string model;
  std::string in;
  std::string out;
  bool no_ensemble = false;
};

void run_predict(const PredictArgs& a) {
  const std::vector<ModelFile> models = load_models(a.model, !a.no_ensemble);
  std::vector<Example> data = read_examples(a.in);
  const std::vector<Chars> forms = predict_forms(members(models), models.front().vocabulary, data);
  for (std::size_t i = 0; i < data.size(); ++i) data[i].form = forms[i];
  std::ofstream file = open_output(a.out);
  write_tsv(file, data);
}

struct EvaluateArgs {
  std::string pred;
  std::string gold;
  std::string per_example;
};

void run_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const std::vector<Example> pred = read_examples(a.pred);
  const std::vector<Example> gold = read_examples(a.gold);
  if (pred.size() != gold.size())
    throw DataError(a.pred + " has " + std::to_string(pred.size()) + " lines, " + a.gold + " has " +
                    std::to_string(gold.size()));
  std::vector<Chars> p, g;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (!gold[i].form) throw DataError(a.gold + ": missing gold form for lemma '" + to_utf8(gold[i].lemma) + "'");
    if (pred[i].lemma != gold[i].lemma)
      throw DataError("line " + std::to_string(i + 1) + ": lemma '" + to_utf8(pred[i].lemma) + "' does not match '" +
                      to_utf8(gold[i].lemma) + "'");
    p.push_back(pred[i].form.value_or(Chars{}));
    g.push_back(*gold[i].form);
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f\t%.6f", exact_match_accuracy(p, g), mean_levenshtein(p, g));
  out << buf << '\n';
  if (!a.per_example.empty()) {
    std::ofstream file = open_output(a.per_example);
    file << "lemma\tgold\tprediction\tcorrect\tdistance\n";
    for (std::size_t i = 0; i < g.size(); ++i)
      file << to_utf8(gold[i].lemma) << '\t' << to_utf8(g[i]) << '\t' << to_utf8(p[i]) << '\t' << (p[i] == g[i] ? 1 : 0)
           << '\t' << levenshtein(p[i], g[i]) << '\n';
  }
}

nlohmann::json matrix_json(const ad::Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (ad::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (ad::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

void run_dump_attention(const PredictArgs& a, std::ostream& stdout_stream) {
  const std::vector<ModelFile> models = load_models(a.model, !a.no_ensemble);
  const std::vector<const ModelParams*> ms = members(models);
  const Vocabulary& vocab = models.front().vocabulary;
  std::ofstream file;
  if (!a.out.empty()) file = open_output(a.out);
  std::ostream& out = a.out.empty() ? stdout_stream : file;
  for (const Example& e : read_examples(a.in)) {
    const Decoded d = decode(ms, vocab.encode(e), default_max_length(e.lemma.size()));
    const nlohmann::json record = {
        {"lemma", to_utf8(e.lemma)},
        {"tags", e.tags},
        {"prediction", to_utf8(render(vocab, d, e.lemma))},
        {"alpha_t", matrix_json(d.alpha_t)},
        {"alpha_x", matrix_json(d.alpha_x)},
    };
    out << record.dump() << '\n';
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Character-level morphological inflection"};
  app.name("inflect");
  app.require_subcommand(1);

  AlignArgs align_args;
  CLI::App* align = app.add_subcommand("align", "Print stem regions of lemma/form alignments");
  align->add_option("--in", align_args.in, "UniMorph TSV file")->required();
  align->add_option("--out", align_args.out, "Output file (default: stdout)");
  align->add_option("--min-stem", align_args.min_stem, "Minimum stem region length")->check(CLI::PositiveNumber);

  HallucinateArgs hall_args;
  CLI::App* hall = app.add_subcommand("hallucinate", "Generate synthetic triples from stem regions");
  hall->add_option("--in", hall_args.in, "UniMorph TSV file")->required();
  hall->add_option("--out", hall_args.out, "Output TSV file")->required();
  hall->add_option("--n", hall_args.n, "Number of triples");
  hall->add_option("--seed", hall_args.seed, "Master seed");
  hall->add_option("--min-stem", hall_args.min_stem, "Minimum stem region length")->check(CLI::PositiveNumber);
  hall->add_option("--workers", hall_args.workers, "Worker threads")->check(CLI::PositiveNumber);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Run the three training phases");
  train->add_option("--high", train_args.high, "High-resource TSV files")->delimiter(',');
  train->add_option("--low", train_args.low, "Low-resource TSV file")->required();
  train->add_option("--dev", train_args.dev, "Dev TSV file")->required();
  train->add_option("--hallucinate", train_args.hallucinate, "Hallucinated triples to generate");
  train->add_flag("--no-adv", train_args.no_adv, "Disable the language discriminator");
  train->add_option("--config", train_args.config, "key = value configuration file");
  train->add_option("--set", train_args.set, "Override one configuration key (key=value)");
  train->add_option("--out", train_args.out, "Output directory")->required();
  train->add_option("--seed", train_args.seed, "Master seed");
  train->add_option("--workers", train_args.workers, "Hallucination worker threads")->check(CLI::PositiveNumber);

  PredictArgs predict_args;
  CLI::App* predict = app.add_subcommand("predict", "Predict inflected forms");
  predict->add_option("--model", predict_args.model, "Training output directory")->required();
  predict->add_option("--in", predict_args.in, "UniMorph TSV file")->required();
  predict->add_option("--out", predict_args.out, "Output TSV file")->required();
  predict->add_flag("--no-ensemble", predict_args.no_ensemble, "Use the best-accuracy checkpoint only");

  EvaluateArgs eval_args;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Score predictions against gold forms");
  evaluate->add_option("--pred", eval_args.pred, "Predicted TSV file")->required();
  evaluate->add_option("--gold", eval_args.gold, "Gold TSV file")->required();
  evaluate->add_option("--per-example", eval_args.per_example, "Write per-example TSV here");

  PredictArgs dump_args;
  CLI::App* dump = app.add_subcommand("dump-attention", "Write attention matrices as JSON lines");
  dump->add_option("--model", dump_args.model, "Training output directory")->required();
  dump->add_option("--in", dump_args.in, "UniMorph TSV file")->required();
  dump->add_option("--out", dump_args.out, "Output file (default: stdout)");
  dump->add_flag("--no-ensemble", dump_args.no_ensemble, "Use the best-accuracy checkpoint only");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  try {
    if (*align) run_align(align_args, out);
    if (*hall) run_hallucinate(hall_args);
    if (*train) run_train(train_args, *train, err);
    if (*predict) run_predict(predict_args);
    if (*evaluate) run_evaluate(eval_args, out);
    if (*dump) run_dump_attention(dump_args, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}

}  // namespace inflect::cli
