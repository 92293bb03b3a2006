#include "diflow_app/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>

#include "diflow/binary_io.hpp"
#include "diflow/checkpoint.hpp"
#include "diflow/errors.hpp"
#include "diflow/training.hpp"

namespace diflow::app {

using nlohmann::json;
namespace fs = std::filesystem;

int exit_code_for_current_exception(std::ostream& err) {
  try {
    throw;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

fs::path resolve_output_dir(const std::optional<fs::path>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return ".";
}

RunConfig resolve_config(const CommonOptions& common, const RunConfig& base) {
  RunConfig run = common.config_file ? read_config_file(*common.config_file, base) : base;
  if (!common.overrides.empty()) {
    json tree = to_json(run);
    for (const auto& kv : common.overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("override '" + kv + "' is not of the form key=value");
      }
      set_config_value(tree, kv.substr(0, eq), kv.substr(eq + 1));
    }
    run = run_config_from_json(tree);
  }
  return run;
}

namespace {

json provenance(const RunConfig& run, const std::string& command) {
  return {{"type", "meta"},
          {"command", command},
          {"build", build_identifier()},
          {"config", to_json(run)}};
}

json grid_to_json(const TokenGrid& g) {
  json rows = json::array();
  for (std::size_t s = 0; s < g.streams; ++s) {
    const auto row = g.stream(s);
    rows.push_back(std::vector<Token>(row.begin(), row.end()));
  }
  return rows;
}

TokenGrid grid_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw FormatError(std::string("samples: bad grid ") + what);
  const std::size_t streams = j.size();
  const std::size_t length = j.front().size();
  TokenGrid g(streams, length);
  for (std::size_t s = 0; s < streams; ++s) {
    const auto row = j.at(s).get<std::vector<Token>>();
    if (row.size() != length) throw FormatError(std::string("samples: ragged grid ") + what);
    std::copy(row.begin(), row.end(), g.stream(s).begin());
  }
  return g;
}

void write_json_line(std::ostream& out, const json& j) { out << j.dump() << '\n'; }

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

}  // namespace

std::uint32_t corpus_fingerprint(const Corpus& corpus) {
  return crc32_of(serialize_corpus(corpus));
}

json report_to_json(const EvalReport& r) {
  return {{"count", r.count},
          {"content_accuracy", r.content_accuracy},
          {"prosody_accuracy", r.prosody_accuracy},
          {"acoustic_accuracy", r.acoustic_accuracy},
          {"combined_accuracy", r.combined_accuracy},
          {"speaker_consistency", r.speaker_consistency}};
}

std::vector<const Utterance*> evaluation_utterances(const Corpus& corpus,
                                                    const EvalConfig& eval) {
  std::vector<const Utterance*> out;
  for (const auto& u : eval.split == "train" ? corpus.train : corpus.heldout) {
    if (eval.max_utterances > 0 && out.size() >= static_cast<std::size_t>(eval.max_utterances)) {
      break;
    }
    if (u.length() < kMinSplitLength) continue;
    out.push_back(&u);
  }
  return out;
}

std::vector<SampleRecord> sample_utterances(const DiFlowModel& model,
                                            std::span<const Utterance* const> utterances,
                                            const SamplerConfig& sampler,
                                            const EvalConfig& eval, std::uint64_t seed) {
  std::vector<SampleRecord> records;
  records.reserve(utterances.size());
  const int vocab = model.config().fdfd.vocab;
  for (const Utterance* u : utterances) {
    const auto split = split_prompt(*u, eval.prompt_fraction, vocab);
    if (!split) continue;
    RngStream rng = RngStream(seed).derive(u->id);
    SampleRecord rec;
    rec.utterance_id = u->id;
    rec.style_class = u->speaker.style_class;
    rec.prompt_length = split->prompt_length;
    rec.nfe = sampler.nfe;
    rec.seed = seed;
    rec.synthesis = synthesize(model, *split, sampler, eval.predicted_durations, rng);
    records.push_back(std::move(rec));
  }
  return records;
}

EvalReport evaluate_records(const Corpus& corpus, std::span<const SampleRecord> records,
                            double prompt_fraction) {
  const ToyCodecRules rules(corpus.config);
  std::map<std::uint64_t, const Utterance*> by_id;
  for (const auto* split : {&corpus.train, &corpus.heldout}) {
    for (const auto& u : *split) by_id.emplace(u.id, &u);
  }
  EvalAccumulator acc;
  for (const auto& rec : records) {
    const auto it = by_id.find(rec.utterance_id);
    if (it == by_id.end()) {
      throw ConfigError("eval: utterance " + std::to_string(rec.utterance_id) +
                        " is not in the corpus");
    }
    const auto truth = split_prompt(*it->second, prompt_fraction, corpus.config.vocab);
    if (!truth || truth->prompt_length != rec.prompt_length) {
      throw ConfigError("eval: prompt split of utterance " + std::to_string(rec.utterance_id) +
                        " does not match the corpus");
    }
    const FactorizedSequence& g = rec.synthesis.generated;
    if (g.prosody.streams != truth->target.prosody.streams ||
        g.acoustic.streams != truth->target.acoustic.streams) {
      throw ConfigError("eval: stream layout of the samples does not match the corpus");
    }
    acc.add(score_sample(rules, *truth, rec.synthesis), rec.style_class);
  }
  return acc.report();
}

void write_samples(const fs::path& path, const json& meta,
                   std::span<const SampleRecord> records) {
  std::ofstream out = open_output(path);
  write_json_line(out, meta);
  for (const auto& r : records) {
    write_json_line(out, {{"type", "sample"},
                          {"utterance", r.utterance_id},
                          {"class", r.style_class},
                          {"prompt_length", r.prompt_length},
                          {"empty_prompt", r.prompt_length == 0},
                          {"nfe", r.nfe},
                          {"seed", r.seed},
                          {"durations", r.synthesis.durations},
                          {"content", grid_to_json(r.synthesis.content)},
                          {"prosody", grid_to_json(r.synthesis.generated.prosody)},
                          {"acoustic", grid_to_json(r.synthesis.generated.acoustic)}});
  }
  if (!out) throw FormatError("failed while writing " + path.string());
}

std::vector<SampleRecord> read_samples(const fs::path& path, json* meta) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open samples file " + path.string());
  std::vector<SampleRecord> records;
  std::string line;
  std::size_t line_no = 0;
  bool have_meta = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "meta") {
        if (meta) *meta = j;
        have_meta = true;
        continue;
      }
      if (type != "sample") continue;
      SampleRecord r;
      r.utterance_id = j.at("utterance").get<std::uint64_t>();
      r.style_class = j.at("class").get<int>();
      r.prompt_length = j.at("prompt_length").get<std::size_t>();
      r.nfe = j.at("nfe").get<int>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.synthesis.durations = j.at("durations").get<std::vector<Token>>();
      r.synthesis.content = grid_from_json(j.at("content"), "content");
      r.synthesis.generated.prosody = grid_from_json(j.at("prosody"), "prosody");
      r.synthesis.generated.acoustic = grid_from_json(j.at("acoustic"), "acoustic");
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw FormatError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_meta) throw FormatError(path.string() + ": missing meta record");
  return records;
}

std::vector<SweepRow> nfe_sweep(const DiFlowModel& model, const Corpus& corpus,
                                const RunConfig& run, std::span<const int> nfe_list,
                                int seeds) {
  const auto utterances = evaluation_utterances(corpus, run.eval);
  std::vector<SweepRow> rows;
  for (int nfe : nfe_list) {
    SweepRow row;
    row.nfe = nfe;
    SamplerConfig sampler = run.sampler;
    sampler.nfe = nfe;
    sampler.validate();
    double wall = 0.0;
    for (int s = 0; s < seeds; ++s) {
      const auto start = std::chrono::steady_clock::now();
      const auto records = sample_utterances(model, utterances, sampler, run.eval,
                                             run.seed + static_cast<std::uint64_t>(s));
      wall += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      row.per_seed.push_back(evaluate_records(corpus, records, run.eval.prompt_fraction));
    }
    EvalReport& m = row.mean;
    for (const auto& r : row.per_seed) {
      m.count += r.count;
      m.content_accuracy += r.content_accuracy;
      m.prosody_accuracy += r.prosody_accuracy;
      m.acoustic_accuracy += r.acoustic_accuracy;
      m.combined_accuracy += r.combined_accuracy;
      m.speaker_consistency += r.speaker_consistency;
    }
    const double n = static_cast<double>(seeds);
    m.content_accuracy /= n;
    m.prosody_accuracy /= n;
    m.acoustic_accuracy /= n;
    m.combined_accuracy /= n;
    m.speaker_consistency /= n;
    double var = 0.0;
    for (const auto& r : row.per_seed) {
      var += (r.combined_accuracy - m.combined_accuracy) *
             (r.combined_accuracy - m.combined_accuracy);
    }
    row.combined_stddev = seeds > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    row.wall_seconds = wall / n;
    rows.push_back(std::move(row));
  }
  return rows;
}

RunConfig load_model_for(const CommonOptions& common, const fs::path& checkpoint,
                         const Corpus& corpus, std::unique_ptr<DiFlowModel>& model) {
  const CheckpointInfo info = inspect_checkpoint(checkpoint);
  RunConfig base;
  if (!info.run_config_json.empty()) {
    try {
      base = run_config_from_json(json::parse(info.run_config_json));
    } catch (const json::exception& e) {
      throw FormatError(checkpoint.string() + ": bad embedded run config: " + e.what());
    }
  }
  base.model = info.model;
  RunConfig run = resolve_config(common, base);
  run.corpus = corpus.config;
  run.finalize();
  model = std::make_unique<DiFlowModel>(run.model);
  load_checkpoint(checkpoint, *model);
  return run;
}

// ---------------------------------------------------------------------------

int cmd_gen_corpus(const GenCorpusOptions& opts, std::ostream& out) {
  RunConfig run = resolve_config(opts.common);
  if (opts.seed) run.corpus.seed = *opts.seed;
  run.corpus.validate();
  const Corpus corpus = generate_corpus(run.corpus);
  check_heldout_split(corpus);
  const fs::path path = resolve_output_dir(opts.common.out_dir) / opts.file_name;
  write_corpus(path, corpus);

  const ToyCodecRules rules(corpus.config);
  const auto violation = rule_violation_rate(rules, corpus.train);
  const auto sep = style_separability(corpus.train);
  std::size_t frames = 0;
  for (const auto& u : corpus.train) frames += u.length();
  write_json_line(out, {{"type", "corpus"},
                        {"path", path.string()},
                        {"train_utterances", corpus.train.size()},
                        {"heldout_utterances", corpus.heldout.size()},
                        {"train_frames", frames},
                        {"prosody_violation_rate", violation.prosody},
                        {"acoustic_violation_rate", violation.acoustic},
                        {"style_intra_cosine", sep.intra},
                        {"style_inter_cosine", sep.inter},
                        {"config", to_json(corpus.config)}});
  return kExitOk;
}

int cmd_train(const TrainOptions& opts, std::ostream& out) {
  const Corpus corpus = read_corpus(opts.corpus);
  check_heldout_split(corpus);
  RunConfig base;
  if (opts.resume) {
    const CheckpointInfo info = inspect_checkpoint(*opts.resume);
    if (!info.run_config_json.empty()) {
      base = run_config_from_json(json::parse(info.run_config_json));
    }
    base.model = info.model;
  }
  RunConfig run = resolve_config(opts.common, base);
  if (opts.steps) run.train.steps = *opts.steps;
  if (opts.seed) run.train.seed = *opts.seed;
  run.corpus = corpus.config;
  run.finalize();

  DiFlowModel model(run.model);
  Trainer trainer(model, run.train, corpus.train);
  if (opts.resume) load_checkpoint(*opts.resume, model, &trainer.optimizer());

  const fs::path dir = resolve_output_dir(opts.common.out_dir);
  fs::create_directories(dir);
  const fs::path metrics_path = dir / "metrics.jsonl";
  std::ofstream metrics(metrics_path, opts.resume ? std::ios::app : std::ios::trunc);
  if (!metrics) throw ConfigError("cannot write " + metrics_path.string());
  write_json_line(metrics, provenance(run, "train"));
  const std::string run_json = to_json(run).dump();

  StepMetrics last;
  double wall = 0.0;
  while (trainer.step_count() < run.train.steps) {
    last = trainer.step();
    wall += last.wall_seconds;
    const int done = last.step + 1;
    if (done % run.train.log_interval == 0 || done == run.train.steps || last.step == 0) {
      const json rec = {{"type", "train"},       {"step", done},
                        {"total", last.total},   {"duration", last.duration},
                        {"content", last.content}, {"fdfd", last.fdfd},
                        {"lr", last.lr},         {"grad_norm", last.grad_norm},
                        {"wall_seconds", wall},  {"skipped", last.skipped}};
      write_json_line(metrics, rec);
      metrics.flush();
      if (!opts.quiet) write_json_line(out, rec);
    }
    if (run.train.checkpoint_interval > 0 && done % run.train.checkpoint_interval == 0 &&
        done != run.train.steps) {
      save_checkpoint(dir / ("checkpoint_" + std::to_string(done) + ".ckpt"), model,
                      &trainer.optimizer(), run_json);
    }
  }
  const fs::path final_path = dir / "model.ckpt";
  save_checkpoint(final_path, model, &trainer.optimizer(), run_json);
  write_json_line(out, {{"type", "checkpoint"},
                        {"path", final_path.string()},
                        {"step", trainer.step_count()},
                        {"parameters", model.parameter_count()},
                        {"final_total", last.total},
                        {"wall_seconds", wall}});
  return kExitOk;
}

namespace {

void apply_sampler_flags(RunConfig& run, const std::optional<int>& nfe,
                         const std::optional<double>& temperature,
                         const std::optional<std::string>& final_step,
                         const std::optional<std::uint64_t>& seed) {
  if (nfe) run.sampler.nfe = *nfe;
  if (temperature) run.sampler.temperature = *temperature;
  if (final_step) run.sampler.final_step_rule = parse_final_step_rule(*final_step);
  if (seed) run.seed = *seed;
  run.sampler.validate();
}

}  // namespace

int cmd_sample(const SampleOptions& opts, std::ostream& out) {
  const Corpus corpus = read_corpus(opts.corpus);
  check_heldout_split(corpus);
  std::unique_ptr<DiFlowModel> model;
  RunConfig run = load_model_for(opts.common, opts.checkpoint, corpus, model);
  apply_sampler_flags(run, opts.nfe, opts.temperature, opts.final_step, opts.seed);
  if (opts.prompt_fraction) run.eval.prompt_fraction = *opts.prompt_fraction;
  run.eval.validate();

  const auto utterances = evaluation_utterances(corpus, run.eval);
  const auto records = sample_utterances(*model, utterances, run.sampler, run.eval, run.seed);
  json meta = provenance(run, "sample");
  meta["corpus_fingerprint"] = corpus_fingerprint(corpus);
  meta["checkpoint_hash"] = config_hash(model->config());
  meta["empty_prompt"] = run.eval.prompt_fraction == 0.0;
  const fs::path path = resolve_output_dir(opts.common.out_dir) / opts.file_name;
  write_samples(path, meta, records);
  write_json_line(out, {{"type", "samples"},
                        {"path", path.string()},
                        {"count", records.size()},
                        {"nfe", run.sampler.nfe},
                        {"empty_prompt", run.eval.prompt_fraction == 0.0}});
  return kExitOk;
}

int cmd_eval(const EvalOptions& opts, std::ostream& out) {
  const Corpus corpus = read_corpus(opts.corpus);
  json meta;
  const auto records = read_samples(opts.samples, &meta);
  if (!meta.contains("corpus_fingerprint") ||
      meta.at("corpus_fingerprint").get<std::uint32_t>() != corpus_fingerprint(corpus)) {
    throw ConfigError("eval: samples were generated from a different corpus");
  }
  double fraction = EvalConfig{}.prompt_fraction;
  try {
    fraction = meta.at("config").at("eval").at("prompt_fraction").get<double>();
  } catch (const json::exception& e) {
    throw FormatError(opts.samples.string() + ": meta record lacks eval.prompt_fraction");
  }
  const EvalReport report = evaluate_records(corpus, records, fraction);
  json rec = report_to_json(report);
  rec["type"] = "eval";
  rec["samples"] = opts.samples.string();
  if (!records.empty()) rec["nfe"] = records.front().nfe;
  const fs::path path = resolve_output_dir(opts.common.out_dir) / opts.file_name;
  std::ofstream file = open_output(path);
  json file_meta = {{"type", "meta"}, {"command", "eval"}, {"build", build_identifier()}};
  file_meta["config"] = meta.at("config");
  write_json_line(file, file_meta);
  write_json_line(file, rec);
  write_json_line(out, rec);
  return kExitOk;
}

int cmd_nfe_sweep(const SweepOptions& opts, std::ostream& out) {
  const Corpus corpus = read_corpus(opts.corpus);
  check_heldout_split(corpus);
  std::unique_ptr<DiFlowModel> model;
  RunConfig run = load_model_for(opts.common, opts.checkpoint, corpus, model);
  apply_sampler_flags(run, std::nullopt, opts.temperature, opts.final_step, opts.seed);
  if (!opts.nfe_list.empty()) run.eval.nfe_list = opts.nfe_list;
  if (opts.seeds) run.eval.sweep_seeds = *opts.seeds;
  run.eval.validate();

  const auto rows = nfe_sweep(*model, corpus, run, run.eval.nfe_list, run.eval.sweep_seeds);
  const fs::path path = resolve_output_dir(opts.common.out_dir) / opts.file_name;
  std::ofstream file = open_output(path);
  write_json_line(file, provenance(run, "nfe-sweep"));
  for (const auto& row : rows) {
    json rec = report_to_json(row.mean);
    rec["type"] = "sweep";
    rec["nfe"] = row.nfe;
    rec["seeds"] = row.per_seed.size();
    rec["combined_stddev"] = row.combined_stddev;
    rec["wall_seconds"] = row.wall_seconds;
    write_json_line(file, rec);
    write_json_line(out, rec);
  }
  return kExitOk;
}

}  // namespace diflow::app
