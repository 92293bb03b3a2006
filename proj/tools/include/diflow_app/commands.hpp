#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "diflow/config.hpp"
#include "diflow/corpus.hpp"
#include "diflow/evaluation.hpp"
#include "diflow/model.hpp"

namespace diflow::app {

inline constexpr const char* kOutputDirEnv = "DIFLOW_OUT_DIR";

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitFormat = 3,
  kExitNumeric = 4,
};

// Exit code for the exception currently being handled.
int exit_code_for_current_exception(std::ostream& err);

struct CommonOptions {
  std::optional<std::filesystem::path> config_file;
  std::vector<std::string> overrides;  // "section.key=value"
  std::optional<std::filesystem::path> out_dir;
};

// Flag > environment variable > current directory.
std::filesystem::path resolve_output_dir(const std::optional<std::filesystem::path>& flag);
// Defaults, then the config file, then "key=value" overrides.
RunConfig resolve_config(const CommonOptions& common, const RunConfig& base = {});

// ---------------------------------------------------------------------------
// Sampling records and their line-delimited file.

struct SampleRecord {
  std::uint64_t utterance_id = 0;
  int style_class = 0;
  std::size_t prompt_length = 0;
  int nfe = 0;
  std::uint64_t seed = 0;
  Synthesis synthesis;
};

// Utterances of the configured split, in corpus order.
std::vector<const Utterance*> evaluation_utterances(const Corpus& corpus,
                                                    const EvalConfig& eval);

// Splits each utterance with the eval prompt fraction and samples with
// RngStream(seed).derive(utterance id).
std::vector<SampleRecord> sample_utterances(const DiFlowModel& model,
                                            std::span<const Utterance* const> utterances,
                                            const SamplerConfig& sampler,
                                            const EvalConfig& eval, std::uint64_t seed);

EvalReport evaluate_records(const Corpus& corpus, std::span<const SampleRecord> records,
                            double prompt_fraction);

nlohmann::json report_to_json(const EvalReport& r);
std::uint32_t corpus_fingerprint(const Corpus& corpus);

void write_samples(const std::filesystem::path& path, const nlohmann::json& meta,
                   std::span<const SampleRecord> records);
std::vector<SampleRecord> read_samples(const std::filesystem::path& path,
                                       nlohmann::json* meta = nullptr);

struct SweepRow {
  int nfe = 0;
  std::vector<EvalReport> per_seed;
  EvalReport mean;
  double combined_stddev = 0.0;
  double wall_seconds = 0.0;  // mean over seeds
};

std::vector<SweepRow> nfe_sweep(const DiFlowModel& model, const Corpus& corpus,
                                const RunConfig& run, std::span<const int> nfe_list,
                                int seeds);

// ---------------------------------------------------------------------------
// Subcommands. Each writes its artifacts under the resolved output directory
// and a one-line JSON summary to `out`.

struct GenCorpusOptions {
  CommonOptions common;
  std::optional<std::uint64_t> seed;
  std::string file_name = "corpus.bin";
};
int cmd_gen_corpus(const GenCorpusOptions& opts, std::ostream& out);

struct TrainOptions {
  CommonOptions common;
  std::filesystem::path corpus;
  std::optional<std::filesystem::path> resume;
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};
int cmd_train(const TrainOptions& opts, std::ostream& out);

struct SampleOptions {
  CommonOptions common;
  std::filesystem::path checkpoint;
  std::filesystem::path corpus;
  std::optional<int> nfe;
  std::optional<double> temperature;
  std::optional<std::string> final_step;
  std::optional<std::uint64_t> seed;
  std::optional<double> prompt_fraction;
  std::string file_name = "samples.jsonl";
};
int cmd_sample(const SampleOptions& opts, std::ostream& out);

struct EvalOptions {
  CommonOptions common;
  std::filesystem::path samples;
  std::filesystem::path corpus;
  std::string file_name = "report.jsonl";
};
int cmd_eval(const EvalOptions& opts, std::ostream& out);

struct SweepOptions {
  CommonOptions common;
  std::filesystem::path checkpoint;
  std::filesystem::path corpus;
  std::vector<int> nfe_list;
  std::optional<int> seeds;
  std::optional<double> temperature;
  std::optional<std::string> final_step;
  std::optional<std::uint64_t> seed;
  std::string file_name = "sweep.jsonl";
};
int cmd_nfe_sweep(const SweepOptions& opts, std::ostream& out);

// Loads a checkpoint, taking the model config from it unless a config file
// was given (in which case the hashes must agree).
RunConfig load_model_for(const CommonOptions& common, const std::filesystem::path& checkpoint,
                         const Corpus& corpus, std::unique_ptr<DiFlowModel>& model);

}  // namespace diflow::app
