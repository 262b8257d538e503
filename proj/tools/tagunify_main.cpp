// tagunify command-line tool: train, distill, merge, tag, eval, generate,
// hierarchy-check. All randomness hangs off --seed; data goes to files,
// logs to stderr. Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <thread>

#include "tagunify/corpus.hpp"
#include "tagunify/emissions.hpp"
#include "tagunify/evalmetrics.hpp"
#include "tagunify/tagspace.hpp"
#include "tagunify/trainer.hpp"
#include "tagunify/unify.hpp"

using namespace tagunify;

namespace {

int default_workers() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

std::string cache_dir_from_env() {
  const char* dir = std::getenv("TAGUNIFY_CACHE_DIR");
  return dir ? dir : "";
}

// "tagset=path" or plain "path".
std::pair<std::string, std::string> split_binding(const std::string& arg) {
  auto eq = arg.find('=');
  if (eq == std::string::npos) return {"", arg};
  return {arg.substr(0, eq), arg.substr(eq + 1)};
}

const TagSet& resolve_tag_set(const TagHierarchy& h, const std::string& id) {
  if (id == "unified") return h.unified();
  const TagSet* ts = h.find_tag_set(id);
  if (!ts) throw std::runtime_error("no tag set named '" + id + "' in the hierarchy");
  return *ts;
}

// Binds a labeled corpus to a hierarchy tag set, by explicit id or by the
// entity types it contains.
const TagSet& bind_corpus(const TagHierarchy& h, const AnnotatedCorpus& corpus,
                          const std::string& explicit_id) {
  if (!explicit_id.empty()) return resolve_tag_set(h, explicit_id);
  return h.match_tag_set(corpus.observed_types());
}

struct TrainerFlags {
  TrainConfig cfg;
  void attach(CLI::App* cmd) {
    cfg.workers = default_workers();
    cmd->add_option("--batch-size", cfg.batch_size, "Mini-batch size")->capture_default_str();
    cmd->add_option("--lr", cfg.learning_rate, "Learning rate")->capture_default_str();
    cmd->add_option("--lr-decay", cfg.lr_decay, "Inverse-time decay per epoch")
        ->capture_default_str();
    cmd->add_option("--epochs", cfg.max_epochs, "Maximum epochs")->capture_default_str();
    cmd->add_option("--patience", cfg.patience, "Early-stopping patience (epochs)")
        ->capture_default_str();
    cmd->add_option("--l2", cfg.l2, "L2 penalty")->capture_default_str();
    cmd->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
    cmd->add_option("--workers", cfg.workers, "Worker threads")->capture_default_str();
    cmd->add_flag("--adam", cfg.adam, "Use Adam instead of plain SGD");
  }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

void write_train_log(const std::string& path, const TrainReport& report) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& e : report.epochs) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "{\"epoch\":%d,\"train_loss\":%.6f,\"dev_precision\":%.6f,"
                  "\"dev_recall\":%.6f,\"dev_f1\":%.6f}\n",
                  e.epoch, e.train_loss, e.dev_precision, e.dev_recall, e.dev_f1);
    out << buf;
  }
}

// ---- generate ----

struct GenerateArgs {
  std::string types;  // NAME:VOCAB,NAME:VOCAB,...
  int background = 2000;
  double start_prob = 0.12;
  double mean_len = 1.6;
  int len_min = 4, len_max = 16;
  int sentences = 1000;
  uint64_t seed = 1;
  std::string out;
  std::string split;  // "0.8,0.1,0.1"
  std::string input;  // transform mode
  std::string keep;   // comma list
  std::string coarsen;
  std::string hierarchy;
  bool strip = false;
};

int run_generate(const GenerateArgs& a) {
  if (!a.input.empty()) {
    // Transform mode: retag / coarsen / strip an existing corpus.
    AnnotatedCorpus src = read_conll(a.input);
    AnnotatedCorpus out;
    int transforms = (!a.keep.empty() ? 1 : 0) + (!a.coarsen.empty() ? 1 : 0) + (a.strip ? 1 : 0);
    if (transforms != 1)
      throw std::runtime_error("transform mode needs exactly one of --keep, --coarsen, --strip");
    if (!a.keep.empty()) {
      std::vector<EntityType> keep;
      std::istringstream in(a.keep);
      std::string t;
      while (std::getline(in, t, ','))
        if (!t.empty()) keep.push_back(t);
      out = selective_retag(src, keep);
    } else if (!a.coarsen.empty()) {
      if (a.hierarchy.empty()) throw std::runtime_error("--coarsen requires --hierarchy");
      TagHierarchy h = TagHierarchy::load_file(a.hierarchy);
      out = coarsen_labels(src, h, a.coarsen);
    } else {
      out = strip_labels(src);
    }
    write_conll(out, a.out);
    std::cerr << "wrote " << out.size() << " sentences to " << a.out << "\n";
    return 0;
  }

  if (a.types.empty())
    throw std::runtime_error("--types is required when sampling (or pass --input to transform)");
  GeneratorSpec spec;
  std::vector<EntityType> names;
  std::vector<int> vocabs;
  std::istringstream in(a.types);
  std::string item;
  while (std::getline(in, item, ',')) {
    auto colon = item.find(':');
    if (colon == std::string::npos)
      throw std::runtime_error("--types expects NAME:VOCAB pairs, got '" + item + "'");
    names.push_back(item.substr(0, colon));
    vocabs.push_back(std::stoi(item.substr(colon + 1)));
  }
  spec.tag_set = TagSet("synthetic", names);
  spec.vocab_sizes = vocabs;
  spec.background_vocab = a.background;
  spec.entity_start_prob = a.start_prob;
  spec.mean_entity_len = a.mean_len;
  spec.len_min = a.len_min;
  spec.len_max = a.len_max;
  spec.seed = a.seed;

  AnnotatedCorpus corpus = generate_synthetic(spec, a.sentences);
  write_conll(corpus, a.out);
  std::cerr << "wrote " << corpus.size() << " sentences to " << a.out << "\n";

  if (!a.split.empty()) {
    double r[3];
    if (std::sscanf(a.split.c_str(), "%lf,%lf,%lf", &r[0], &r[1], &r[2]) != 3)
      throw std::runtime_error("--split expects three comma-separated ratios");
    auto [train, dev, test] = split_corpus(corpus, r[0], r[1], r[2], spec.seed);
    write_conll(train, a.out + ".train");
    write_conll(dev, a.out + ".dev");
    write_conll(test, a.out + ".test");
    std::cerr << "split " << train.size() << "/" << dev.size() << "/" << test.size() << "\n";
  }
  return 0;
}

// ---- hierarchy-check ----

int run_hierarchy_check(const std::string& path) {
  TagHierarchy h = TagHierarchy::load_file(path);
  std::cout << "hierarchy ok: id " << h.id() << "\n";
  std::cout << "tag sets:";
  for (const auto& ts : h.tag_sets()) std::cout << " " << ts.id << "(" << ts.types.size() << ")";
  std::cout << "\nunified leaves: " << h.unified().types.size() << " ("
            << h.unified().label_count() << " labels)\n";
  for (const auto& ts : h.tag_sets()) {
    const Projection& p = h.projection_for(ts.id);
    std::cout << "projection " << ts.id << ": O expands to " << p.groups[0].size()
              << " unified labels\n";
  }
  return 0;
}

// ---- train ----

struct TrainArgs {
  std::string mode;
  std::vector<std::string> data;
  std::string dev;
  std::string hierarchy;
  std::string tagset;
  std::string kind = "crf";
  std::string out;
  std::string log;
  TrainerFlags trainer;
};

int run_train(const TrainArgs& a) {
  if (a.data.empty()) throw std::runtime_error("--data is required");
  ModelKind kind = a.kind == "local" ? ModelKind::local : ModelKind::crf;

  std::optional<TagHierarchy> h;
  if (!a.hierarchy.empty()) h = TagHierarchy::load_file(a.hierarchy);

  std::vector<std::pair<std::string, AnnotatedCorpus>> corpora;  // binding id, corpus
  for (const auto& spec : a.data) {
    auto [id, path] = split_binding(spec);
    corpora.emplace_back(id, read_conll(path));
  }

  std::optional<AnnotatedCorpus> dev;
  if (!a.dev.empty()) dev = read_conll(a.dev);

  TrainResult r;
  if (a.mode == "supervised") {
    TagSet ts;
    if (h) {
      ts = resolve_tag_set(*h, a.tagset.empty() ? "unified" : a.tagset);
    } else if (!a.tagset.empty()) {
      throw std::runtime_error("--tagset needs --hierarchy");
    } else {
      // Infer from the data: union of observed types, first-seen order.
      std::vector<EntityType> types;
      std::set<EntityType> seen;
      for (const auto& [id, c] : corpora)
        for (const auto& t : c.observed_types())
          if (seen.insert(t).second) types.push_back(t);
      ts = TagSet("inferred", types);
    }
    Model init = Model::init(ts, kind);
    if (h) init.hierarchy_id = h->id();
    AnnotatedCorpus merged;
    merged.tagset_id = ts.id;
    for (auto& [id, c] : corpora)
      for (auto& s : c.sentences) merged.sentences.push_back(std::move(s));
    SupervisedObjective objective(init, merged);
    r = train(objective, init, dev ? &*dev : nullptr, a.trainer.cfg, nullptr, &std::cerr);
  } else if (a.mode == "marginal") {
    if (!h) throw std::runtime_error("marginal training requires --hierarchy");
    Model init = Model::init(h->unified(), kind);
    init.hierarchy_id = h->id();

    std::vector<MarginalObjective::Source> sources;
    for (const auto& [id, corpus] : corpora) {
      const TagSet& bound = bind_corpus(*h, corpus, id);
      sources.push_back({&corpus, &bound, &h->projection_for(bound.id)});
    }
    MarginalObjective objective(init, sources);
    r = train(objective, init, dev ? &*dev : nullptr, a.trainer.cfg, nullptr, &std::cerr);
  } else {
    throw std::runtime_error("--mode must be supervised or marginal");
  }

  write_train_log(a.log, r.report);
  save_model(r.model, a.out);
  std::cerr << "saved model to " << a.out << " (best epoch " << r.report.best_epoch << ", dev F1 "
            << r.report.best_f1 << ")\n";
  return 0;
}

// ---- distill ----

struct DistillArgs {
  std::string mode;
  std::string scenario;
  std::vector<std::string> teachers;
  std::string hierarchy;
  std::vector<std::string> data;
  std::vector<std::string> unlabeled;
  std::string dev;
  double tau = 1.0;
  double alpha = 0.5;
  std::string student_kind = "crf";
  std::string out;
  std::string log;
  TrainerFlags trainer;
};

// Scenario file: line-oriented "key = value"; repeatable keys teacher, data,
// unlabeled. Command-line flags override scenario-file scalars.
void apply_scenario_file(DistillArgs& a) {
  std::ifstream in(a.scenario);
  if (!in) throw std::runtime_error("cannot open scenario file: " + a.scenario);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(a.scenario + ":" + std::to_string(lineno) +
                               ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key == "mode") a.mode = value;
    else if (key == "teacher") a.teachers.push_back(value);
    else if (key == "hierarchy") a.hierarchy = value;
    else if (key == "data") a.data.push_back(value);
    else if (key == "unlabeled") a.unlabeled.push_back(value);
    else if (key == "dev") a.dev = value;
    else if (key == "tau") a.tau = std::stod(value);
    else if (key == "alpha") a.alpha = std::stod(value);
    else if (key == "student_kind") a.student_kind = value;
    else if (key == "out") a.out = value;
    else if (key == "log") a.log = value;
    else if (key == "batch_size") a.trainer.cfg.batch_size = std::stoi(value);
    else if (key == "learning_rate") a.trainer.cfg.learning_rate = std::stod(value);
    else if (key == "lr_decay") a.trainer.cfg.lr_decay = std::stod(value);
    else if (key == "epochs") a.trainer.cfg.max_epochs = std::stoi(value);
    else if (key == "patience") a.trainer.cfg.patience = std::stoi(value);
    else if (key == "l2") a.trainer.cfg.l2 = std::stod(value);
    else if (key == "seed") a.trainer.cfg.seed = std::stoull(value);
    else if (key == "workers") a.trainer.cfg.workers = std::stoi(value);
    else
      throw std::runtime_error(a.scenario + ":" + std::to_string(lineno) + ": unknown key '" +
                               key + "'");
  }
}

int run_distill(DistillArgs a, const std::set<std::string>& given_flags) {
  if (!a.scenario.empty()) {
    DistillArgs from_cli = a;
    a.teachers.clear();
    a.data.clear();
    a.unlabeled.clear();
    apply_scenario_file(a);
    auto given = [&](const char* name) { return given_flags.count(name) > 0; };
    if (given("--mode")) a.mode = from_cli.mode;
    if (given("--teacher")) a.teachers = from_cli.teachers;
    if (given("--hierarchy")) a.hierarchy = from_cli.hierarchy;
    if (given("--data")) a.data = from_cli.data;
    if (given("--unlabeled")) a.unlabeled = from_cli.unlabeled;
    if (given("--dev")) a.dev = from_cli.dev;
    if (given("--tau")) a.tau = from_cli.tau;
    if (given("--alpha")) a.alpha = from_cli.alpha;
    if (given("--student-kind")) a.student_kind = from_cli.student_kind;
    if (given("--out")) a.out = from_cli.out;
    if (given("--log")) a.log = from_cli.log;
  }
  if (a.mode.empty()) throw std::runtime_error("--mode (or a scenario file) is required");
  if (a.hierarchy.empty()) throw std::runtime_error("--hierarchy is required");
  if (a.out.empty()) throw std::runtime_error("--out is required");

  TagHierarchy h = TagHierarchy::load_file(a.hierarchy);
  ScenarioConfig cfg;
  cfg.mode = parse_mode(a.mode);
  cfg.distill.tau = a.tau;
  cfg.distill.alpha = a.alpha;
  cfg.train = a.trainer.cfg;
  cfg.student_kind = a.student_kind == "local" ? ModelKind::local : ModelKind::crf;
  cfg.cache_dir = cache_dir_from_env();

  std::vector<TeacherHandle> teachers;
  for (const auto& path : a.teachers) teachers.push_back(make_teacher(load_model(path), h));

  std::vector<BoundCorpus> labeled;
  for (const auto& spec : a.data) {
    auto [id, path] = split_binding(spec);
    AnnotatedCorpus corpus = read_conll(path);
    std::string bound_id = bind_corpus(h, corpus, id).id;
    labeled.push_back({std::move(corpus), bound_id});
  }
  std::vector<AnnotatedCorpus> unlabeled;
  for (const auto& path : a.unlabeled) unlabeled.push_back(read_conll(path));

  std::optional<AnnotatedCorpus> dev;
  if (!a.dev.empty()) dev = read_conll(a.dev);

  TrainResult r = distill(cfg, h, teachers, labeled, unlabeled, dev ? &*dev : nullptr, nullptr,
                          &std::cerr);
  write_train_log(a.log, r.report);
  save_model(r.model, a.out);
  std::cerr << "saved student to " << a.out << " (best epoch " << r.report.best_epoch
            << ", dev F1 " << r.report.best_f1 << ")\n";
  return 0;
}

// ---- merge / tag / eval ----

int run_merge(const std::vector<std::string>& teacher_paths, const std::string& hierarchy,
              const std::string& input, const std::string& out, int workers) {
  TagHierarchy h = TagHierarchy::load_file(hierarchy);
  std::vector<TeacherHandle> teachers;
  for (const auto& path : teacher_paths) teachers.push_back(make_teacher(load_model(path), h));
  AnnotatedCorpus text = read_conll(input);
  AnnotatedCorpus merged = postprocess_merge_corpus(teachers, h, text, workers);
  write_conll(merged, out);
  std::cerr << "wrote merged decode of " << merged.size() << " sentences to " << out << "\n";
  return 0;
}

int run_tag(const std::string& model_path, const std::string& input, const std::string& out,
            int workers) {
  Model m = load_model(model_path);
  AnnotatedCorpus corpus = read_conll(input);
  AnnotatedCorpus tagged = tag_corpus(m, corpus, /*bio_mask=*/true, workers);
  write_conll(tagged, out);
  std::cerr << "tagged " << tagged.size() << " sentences into " << out << "\n";
  return 0;
}

int run_eval(const std::string& gold_path, const std::string& pred_path,
             const std::string& json_path) {
  AnnotatedCorpus gold = read_conll(gold_path);
  AnnotatedCorpus pred = read_conll(pred_path);
  EvalResult r = micro_prf(gold, pred);
  std::cout << format_report(r);
  char line[64];
  std::snprintf(line, sizeof(line), "F1 = %.3f\n", r.f1);
  std::cout << line;
  if (!json_path.empty()) write_text(json_path, report_json(r) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tagunify: train, merge, and distill CRF taggers across tag sets"};
  app.require_subcommand(1);

  GenerateArgs gen;
  CLI::App* generate = app.add_subcommand("generate", "Generate or transform synthetic corpora");
  generate->add_option("--types", gen.types, "NAME:VOCAB pairs, comma separated");
  generate->add_option("--background", gen.background, "Background vocabulary size")
      ->capture_default_str();
  generate->add_option("--start-prob", gen.start_prob, "Entity start probability")
      ->capture_default_str();
  generate->add_option("--mean-len", gen.mean_len, "Mean entity length")->capture_default_str();
  generate->add_option("--len-min", gen.len_min, "Minimum sentence length")->capture_default_str();
  generate->add_option("--len-max", gen.len_max, "Maximum sentence length")->capture_default_str();
  generate->add_option("--sentences", gen.sentences, "Number of sentences")->capture_default_str();
  generate->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  generate->add_option("--out", gen.out, "Output corpus path")->required();
  generate->add_option("--split", gen.split, "train,dev,test ratios; writes .train/.dev/.test");
  generate->add_option("--input", gen.input, "Transform an existing corpus instead of sampling");
  generate->add_option("--keep", gen.keep, "Retag: keep these types, others become O");
  generate->add_option("--coarsen", gen.coarsen, "Map labels into this hierarchy tag set");
  generate->add_option("--hierarchy", gen.hierarchy, "Hierarchy file (for --coarsen)");
  generate->add_flag("--strip", gen.strip, "Replace every label with O");

  std::string hc_path;
  CLI::App* hcheck = app.add_subcommand("hierarchy-check", "Validate a tag hierarchy file");
  hcheck->add_option("--hierarchy", hc_path, "Hierarchy file")->required();

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a tagger (supervised or marginal)");
  train_cmd->add_option("--mode", tr.mode, "supervised | marginal")->required();
  train_cmd->add_option("--data", tr.data, "Training corpus, optionally tagset=path")->required();
  train_cmd->add_option("--dev", tr.dev, "Dev corpus for early stopping");
  train_cmd->add_option("--hierarchy", tr.hierarchy, "Hierarchy file");
  train_cmd->add_option("--tagset", tr.tagset, "Label space: a hierarchy tag set id or 'unified'");
  train_cmd->add_option("--kind", tr.kind, "crf | local")->capture_default_str();
  train_cmd->add_option("--out", tr.out, "Model output path")->required();
  train_cmd->add_option("--log", tr.log, "Training log (JSON lines)");
  tr.trainer.attach(train_cmd);

  DistillArgs di;
  CLI::App* distill_cmd = app.add_subcommand("distill", "Distill teachers into a unified student");
  distill_cmd->add_option("--mode", di.mode, "mardi | mardi-data | progressive");
  distill_cmd->add_option("--scenario", di.scenario, "Scenario key=value file");
  distill_cmd->add_option("--teacher", di.teachers, "Frozen teacher model path (repeatable)");
  distill_cmd->add_option("--hierarchy", di.hierarchy, "Hierarchy file");
  distill_cmd->add_option("--data", di.data, "Labeled corpus, optionally tagset=path");
  distill_cmd->add_option("--unlabeled", di.unlabeled, "Unlabeled text corpus (labels ignored)");
  distill_cmd->add_option("--dev", di.dev, "Dev corpus (unified labels)");
  distill_cmd->add_option("--tau", di.tau, "Distillation temperature")->capture_default_str();
  distill_cmd->add_option("--alpha", di.alpha, "Student-loss weight in [0,1]")
      ->capture_default_str();
  distill_cmd->add_option("--student-kind", di.student_kind, "crf | local")->capture_default_str();
  distill_cmd->add_option("--out", di.out, "Student model output path");
  distill_cmd->add_option("--log", di.log, "Training log (JSON lines)");
  di.trainer.attach(distill_cmd);

  std::vector<std::string> merge_teachers;
  std::string merge_hierarchy, merge_input, merge_out;
  int merge_workers = default_workers();
  CLI::App* merge_cmd = app.add_subcommand("merge", "Post-processing baseline decode");
  merge_cmd->add_option("--teacher", merge_teachers, "Teacher model path (repeatable)")
      ->required();
  merge_cmd->add_option("--hierarchy", merge_hierarchy, "Hierarchy file")->required();
  merge_cmd->add_option("--input", merge_input, "Corpus to tag (labels ignored)")->required();
  merge_cmd->add_option("--out", merge_out, "Merged unified-label corpus")->required();
  merge_cmd->add_option("--workers", merge_workers, "Worker threads")->capture_default_str();

  std::string tag_model, tag_input, tag_out;
  int tag_workers = default_workers();
  CLI::App* tag_cmd = app.add_subcommand("tag", "Decode a corpus with a model (BIO mask on)");
  tag_cmd->add_option("--model", tag_model, "Model path")->required();
  tag_cmd->add_option("--input", tag_input, "Corpus to tag")->required();
  tag_cmd->add_option("--out", tag_out, "Tagged corpus output")->required();
  tag_cmd->add_option("--workers", tag_workers, "Worker threads")->capture_default_str();

  std::string eval_gold, eval_pred, eval_json;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Span-level micro P/R/F1");
  eval_cmd->add_option("--gold", eval_gold, "Gold corpus")->required();
  eval_cmd->add_option("--pred", eval_pred, "Predicted corpus")->required();
  eval_cmd->add_option("--json", eval_json, "Write a machine-readable report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*generate) return run_generate(gen);
    if (*hcheck) return run_hierarchy_check(hc_path);
    if (*train_cmd) return run_train(tr);
    if (*distill_cmd) {
      std::set<std::string> given;
      for (const auto* opt : distill_cmd->get_options())
        if (opt->count() > 0) given.insert(opt->get_name());
      return run_distill(di, given);
    }
    if (*merge_cmd)
      return run_merge(merge_teachers, merge_hierarchy, merge_input, merge_out, merge_workers);
    if (*tag_cmd) return run_tag(tag_model, tag_input, tag_out, tag_workers);
    if (*eval_cmd) return run_eval(eval_gold, eval_pred, eval_json);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
