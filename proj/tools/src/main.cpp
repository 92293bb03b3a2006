#include <iostream>

#include <CLI11.hpp>

#include "diflow_app/commands.hpp"

namespace app = diflow::app;

namespace {

void add_common(CLI::App* cmd, app::CommonOptions& common) {
  cmd->add_option("--config", common.config_file, "key = value config file");
  cmd->add_option("--set", common.overrides, "override a config key, e.g. train.steps=200");
  cmd->add_option("--out-dir", common.out_dir,
                  std::string("output directory (default: $") + app::kOutputDirEnv +
                      " or the current directory)");
}

void add_sampler_flags(CLI::App* cmd, std::optional<double>& temperature,
                       std::optional<std::string>& final_step,
                       std::optional<std::uint64_t>& seed) {
  cmd->add_option("--temperature", temperature, "posterior temperature (> 0)");
  cmd->add_option("--final-step", final_step, "rule for the last step")
      ->check(CLI::IsMember({"sample", "argmax"}));
  cmd->add_option("--seed", seed, "sampling seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Factorized discrete flow matching on a synthetic codec corpus"};
  cli.require_subcommand(1);

  app::GenCorpusOptions gen;
  auto* gen_cmd = cli.add_subcommand("gen-corpus", "generate the synthetic token corpus");
  add_common(gen_cmd, gen.common);
  gen_cmd->add_option("--seed", gen.seed, "corpus seed");
  gen_cmd->add_option("--file", gen.file_name, "output file name");

  app::TrainOptions train;
  auto* train_cmd = cli.add_subcommand("train", "train PCM and FDFD jointly");
  add_common(train_cmd, train.common);
  train_cmd->add_option("--corpus", train.corpus, "corpus file")->required();
  train_cmd->add_option("--resume", train.resume, "checkpoint to resume from");
  train_cmd->add_option("--steps", train.steps, "total optimizer steps");
  train_cmd->add_option("--seed", train.seed, "training seed");
  train_cmd->add_flag("--quiet", train.quiet, "only print the final summary");

  app::SampleOptions sample;
  auto* sample_cmd = cli.add_subcommand("sample", "generate tokens for held-out utterances");
  add_common(sample_cmd, sample.common);
  sample_cmd->add_option("--checkpoint", sample.checkpoint, "trained checkpoint")->required();
  sample_cmd->add_option("--corpus", sample.corpus, "corpus file")->required();
  sample_cmd->add_option("--nfe", sample.nfe, "number of denoiser evaluations");
  add_sampler_flags(sample_cmd, sample.temperature, sample.final_step, sample.seed);
  sample_cmd->add_option("--prompt-fraction", sample.prompt_fraction,
                         "fraction of each utterance used as the reference prompt");
  sample_cmd->add_option("--file", sample.file_name, "output file name");

  app::EvalOptions eval;
  auto* eval_cmd = cli.add_subcommand("eval", "score a samples file against the corpus");
  add_common(eval_cmd, eval.common);
  eval_cmd->add_option("--samples", eval.samples, "samples file")->required();
  eval_cmd->add_option("--corpus", eval.corpus, "corpus file")->required();
  eval_cmd->add_option("--file", eval.file_name, "output file name");

  app::SweepOptions sweep;
  auto* sweep_cmd = cli.add_subcommand("nfe-sweep", "sample and score at several NFE values");
  add_common(sweep_cmd, sweep.common);
  sweep_cmd->add_option("--checkpoint", sweep.checkpoint, "trained checkpoint")->required();
  sweep_cmd->add_option("--corpus", sweep.corpus, "corpus file")->required();
  sweep_cmd->add_option("--nfe-list", sweep.nfe_list, "NFE values")->delimiter(',');
  sweep_cmd->add_option("--seeds", sweep.seeds, "seeds per NFE value");
  add_sampler_flags(sweep_cmd, sweep.temperature, sweep.final_step, sweep.seed);
  sweep_cmd->add_option("--file", sweep.file_name, "output file name");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? app::kExitOk : app::kExitConfig;
  }

  try {
    if (*gen_cmd) return app::cmd_gen_corpus(gen, std::cout);
    if (*train_cmd) return app::cmd_train(train, std::cout);
    if (*sample_cmd) return app::cmd_sample(sample, std::cout);
    if (*eval_cmd) return app::cmd_eval(eval, std::cout);
    if (*sweep_cmd) return app::cmd_nfe_sweep(sweep, std::cout);
  } catch (...) {
    return app::exit_code_for_current_exception(std::cerr);
  }
  return app::kExitFailure;
}
