// Acceptance runner. `--prepare` trains the shared models into the work
// directory; `--criterion N` (repeatable) checks one criterion and prints a
// PASS/FAIL line. With no criterion every one is run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "diflow/checkpoint.hpp"
#include "diflow/config.hpp"
#include "diflow/corpus.hpp"
#include "diflow/errors.hpp"
#include "diflow/oracle.hpp"
#include "diflow/pcm.hpp"
#include "diflow/sampler.hpp"
#include "diflow/training.hpp"
#include "diflow_app/commands.hpp"

namespace fs = std::filesystem;
namespace nn = diflow::nn;
using diflow::RngStream;
using diflow::Token;

namespace {

// ---------------------------------------------------------------------------
// Shared setup for the trained criteria (6, 7, 8, 10).

constexpr int kTrainSteps = 6000;
constexpr int kEvalUtterances = 100;
constexpr int kEvalNfe = 32;
constexpr int kSweepSeeds = 5;

struct Variant {
  const char* name;
  std::function<void(diflow::FdfdConfig&)> apply;
};

const std::vector<Variant>& variants() {
  static const std::vector<Variant> v = {
      {"full", [](diflow::FdfdConfig&) {}},
      {"no_content", [](diflow::FdfdConfig& c) { c.use_content = false; }},
      {"no_speaker", [](diflow::FdfdConfig& c) { c.use_speaker = false; }},
      {"no_attribute", [](diflow::FdfdConfig& c) { c.use_attribute_embeddings = false; }},
      {"single_head", [](diflow::FdfdConfig& c) { c.single_head = true; }},
  };
  return v;
}

diflow::RunConfig base_run() {
  diflow::RunConfig run;  // default corpus and model
  run.train.steps = kTrainSteps;
  run.train.log_interval = 500;
  run.eval.max_utterances = kEvalUtterances;
  run.eval.sweep_seeds = kSweepSeeds;
  run.sampler.nfe = kEvalNfe;
  run.finalize();
  return run;
}

diflow::RunConfig variant_run(const Variant& v) {
  diflow::RunConfig run = base_run();
  v.apply(run.model.fdfd);
  run.validate();
  return run;
}

fs::path corpus_path(const fs::path& work) { return work / "corpus.bin"; }
fs::path checkpoint_path(const fs::path& work, const Variant& v) {
  return work / (std::string(v.name) + ".ckpt");
}

int prepare(const fs::path& work) {
  fs::create_directories(work);
  const diflow::RunConfig run = base_run();
  const diflow::Corpus corpus = diflow::generate_corpus(run.corpus);
  diflow::check_heldout_split(corpus);
  diflow::write_corpus(corpus_path(work), corpus);
  for (const auto& v : variants()) {
    const diflow::RunConfig vr = variant_run(v);
    diflow::DiFlowModel model(vr.model);
    diflow::Trainer trainer(model, vr.train, corpus.train);
    std::ofstream log(work / (std::string(v.name) + "_metrics.jsonl"));
    const auto start = std::chrono::steady_clock::now();
    diflow::StepMetrics m;
    while (trainer.step_count() < vr.train.steps) {
      m = trainer.step();
      if ((m.step + 1) % vr.train.log_interval == 0) {
        log << nlohmann::json{{"step", m.step + 1}, {"total", m.total},
                              {"duration", m.duration}, {"content", m.content},
                              {"fdfd", m.fdfd}}
                   .dump()
            << '\n';
      }
    }
    diflow::save_checkpoint(checkpoint_path(work, v), model, &trainer.optimizer(),
                            diflow::to_json(vr).dump());
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "trained " << v.name << ": " << vr.train.steps << " steps, final loss "
              << m.total << " (fdfd " << m.fdfd << "), " << secs << " s\n";
  }
  return 0;
}

struct Trained {
  diflow::Corpus corpus;
  diflow::RunConfig run;
  std::unique_ptr<diflow::DiFlowModel> model;
};

Trained load_variant(const fs::path& work, const Variant& v) {
  Trained t;
  t.corpus = diflow::read_corpus(corpus_path(work));
  t.run = variant_run(v);
  t.model = std::make_unique<diflow::DiFlowModel>(t.run.model);
  diflow::load_checkpoint(checkpoint_path(work, v), *t.model);
  return t;
}

diflow::EvalReport score(const Trained& t, const std::string& split, int nfe,
                         std::uint64_t seed) {
  diflow::EvalConfig eval = t.run.eval;
  eval.split = split;
  diflow::SamplerConfig sampler = t.run.sampler;
  sampler.nfe = nfe;
  const auto utts = diflow::app::evaluation_utterances(t.corpus, eval);
  const auto records = diflow::app::sample_utterances(*t.model, utts, sampler, eval, seed);
  return diflow::app::evaluate_records(t.corpus, records, eval.prompt_fraction);
}

// ---------------------------------------------------------------------------

struct Result {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(4);
  s << x;
  return s.str();
}

// 1. Oracle sampler convergence on three hand-built targets, 3 streams x 1.
Result criterion1(const fs::path&) {
  constexpr int v = 4;
  constexpr std::size_t n = 3;
  const std::size_t states = diflow::enumeration_size(n, v);
  std::vector<std::pair<std::string, diflow::ExplicitTarget>> targets;
  {
    // Dense, skewed and correlated.
    std::vector<double> t(states);
    RngStream rng(101);
    double z = 0.0;
    for (auto& x : t) z += (x = std::pow(rng.uniform(), 3.0));
    for (auto& x : t) x /= z;
    targets.emplace_back("skewed", diflow::ExplicitTarget(n, v, t));
  }
  {
    // Nearly all mass on "all three tokens equal". The floor keeps every
    // state reachable: tokens unmasked in the same Euler step are drawn
    // independently and may disagree.
    std::vector<double> t(states, 0.04 / static_cast<double>(states));
    const diflow::ExplicitTarget shape = diflow::ExplicitTarget::uniform(n, v);
    const double w[] = {0.1, 0.2, 0.3, 0.4};
    for (Token a = 0; a < v; ++a) {
      const std::vector<Token> seq = {a, a, a};
      t[shape.index_of(seq)] += 0.96 * w[a];
    }
    targets.emplace_back("copy", diflow::ExplicitTarget(n, v, t));
  }
  {
    // Factorized across attributes: q_p(x^1) * q_a(x^2, x^3).
    const double qp[] = {0.5, 0.3, 0.15, 0.05};
    std::vector<double> qa(static_cast<std::size_t>(v * v));
    RngStream rng(102);
    double z = 0.0;
    for (auto& x : qa) z += (x = rng.uniform() + 0.05);
    for (auto& x : qa) x /= z;
    std::vector<double> t(states);
    const diflow::ExplicitTarget shape = diflow::ExplicitTarget::uniform(n, v);
    for (std::size_t i = 0; i < states; ++i) {
      const auto seq = shape.sequence_at(i);
      t[i] = qp[seq[0]] * qa[static_cast<std::size_t>(seq[1] * v + seq[2])];
    }
    targets.emplace_back("factorized", diflow::ExplicitTarget(n, v, t));
  }

  diflow::SamplerConfig cfg;
  cfg.nfe = 256;
  Result r{true, ""};
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const auto& [name, q] = targets[k];
    const auto den = diflow::make_oracle_denoiser(q, n, 1);
    RngStream rng(200 + k);
    std::vector<std::vector<Token>> draws;
    draws.reserve(50000);
    for (int i = 0; i < 50000; ++i) draws.push_back(diflow::generate(den, n, 1, v, cfg, rng).data);
    const double tv = diflow::total_variation(diflow::empirical_distribution(draws, v, n), q);
    r.pass = r.pass && tv < 0.05;
    r.detail += name + " TV=" + fmt(tv) + " ";
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.pass = r.pass && secs < 120.0;
  r.detail += "(" + fmt(secs) + " s; need TV < 0.05, < 120 s)";
  return r;
}

// 2. Velocity identities.
Result criterion2(const fs::path&) {
  constexpr int v = 6;
  constexpr std::size_t S = 2, L = 3;
  RngStream rng(21);
  double worst_sum = 0.0;
  double worst_update = 0.0;
  double worst_negative = 0.0;
  bool delta_zero = true;
  const diflow::Scheduler schedulers[] = {diflow::Scheduler::linear(),
                                          diflow::Scheduler::polynomial(2.0),
                                          diflow::Scheduler::cosine()};
  for (int trial = 0; trial < 1000; ++trial) {
    const auto& sch = schedulers[trial % 3];
    const int nfe = 1 + static_cast<int>(rng.uniform_int(1, 63));
    const int j = static_cast<int>(rng.uniform_int(0, nfe - 2));
    const double t = static_cast<double>(j) / nfe;
    const double h = 1.0 / nfe;

    diflow::MaskedSequence xt = diflow::MaskedSequence::all_masked(S, L, v);
    xt.t = t;
    for (auto& tok : xt.tokens.data) tok = static_cast<Token>(rng.uniform_int(0, v));
    nn::Tensor post({S, L, static_cast<std::size_t>(v)});
    for (std::size_t i = 0; i < S * L; ++i) {
      double z = 0.0;
      for (int c = 0; c < v; ++c) z += (post.data()[i * v + c] = rng.uniform());
      for (int c = 0; c < v; ++c) post.data()[i * v + c] /= z;
    }
    // Revealed tokens are absorbing: their posterior is a point mass.
    for (std::size_t i = 0; i < S * L; ++i) {
      const Token tok = xt.tokens.data[i];
      if (tok == v) continue;
      for (int c = 0; c < v; ++c) post.data()[i * v + c] = c == tok ? 1.0 : 0.0;
    }
    const auto vel = diflow::velocity(post, xt, sch, t);
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t l = 0; l < L; ++l) {
        double sum = 0.0;
        double upd_sum = 0.0;
        const Token cur = xt.tokens.at(s, l);
        for (int x = 0; x <= v; ++x) {
          const double u = vel.at(s, l, static_cast<std::size_t>(x));
          sum += u;
          const double p = (x == cur ? 1.0 : 0.0) + h * u;
          upd_sum += p;
          worst_negative = std::max(worst_negative, -p);
        }
        worst_sum = std::max(worst_sum, std::abs(sum));
        worst_update = std::max(worst_update, std::abs(upd_sum - 1.0));
      }
    }
    // p_{1|t} = delta_{x_t} on a fully revealed state.
    diflow::MaskedSequence clean = xt;
    for (auto& tok : clean.tokens.data) tok = static_cast<Token>(rng.uniform_int(0, v - 1));
    nn::Tensor delta({S, L, static_cast<std::size_t>(v)});
    for (std::size_t i = 0; i < S * L; ++i) delta.data()[i * v + clean.tokens.data[i]] = 1.0;
    const auto still = diflow::velocity(delta, clean, sch, t);
    for (double u : still.values.data()) {
      delta_zero = delta_zero && u == 0.0;
    }
  }
  Result r;
  r.pass = worst_sum <= 1e-9 && delta_zero && worst_update <= 1e-9 && worst_negative <= 1e-9;
  r.detail = "max |row sum|=" + fmt(worst_sum) + ", delta velocity exactly 0: " +
             (delta_zero ? "yes" : "no") + ", max |update sum - 1|=" + fmt(worst_update) +
             ", max negative mass=" + fmt(worst_negative) + " (tol 1e-9)";
  return r;
}

// 3. Scheduler contract.
Result criterion3(const fs::path&) {
  Result r{true, ""};
  for (const auto& s : {diflow::Scheduler::linear(), diflow::Scheduler::polynomial(2.0),
                        diflow::Scheduler::polynomial(0.5), diflow::Scheduler::cosine()}) {
    const bool ends = diflow::kappa(s, 0.0) == 0.0 && diflow::kappa(s, 1.0) == 1.0;
    bool monotone = true;
    double prev = 0.0;
    for (int i = 1; i <= 1000; ++i) {
      const double k = diflow::kappa(s, i / 1000.0);
      monotone = monotone && k >= prev;
      prev = k;
    }
    double worst = 0.0;
    for (int i = 1; i < 1000; ++i) {
      const double t = i / 1000.0;
      const double h = std::min({1e-6, 1e-4 * t, 0.5 * (1.0 - t)});
      const double fd = (diflow::kappa(s, t + h) - diflow::kappa(s, t - h)) / (2.0 * h);
      const double an = diflow::kappa_dot(s, t);
      worst = std::max(worst, std::abs(fd - an) / std::max(1.0, std::abs(an)));
    }
    const bool ok = ends && monotone && worst < 1e-8;
    r.pass = r.pass && ok;
    r.detail += diflow::to_string(s) + (ok ? " ok" : " BAD") + " (dk err " + fmt(worst) + ") ";
  }
  return r;
}

// 4. Corruption marginals.
Result criterion4(const fs::path&) {
  const auto s = diflow::Scheduler::linear();
  constexpr std::size_t N = 100000;
  diflow::FactorizedSequence x1;
  x1.vocab = 8;
  x1.prosody = diflow::TokenGrid(1, N / 2);
  x1.acoustic = diflow::TokenGrid(1, N / 2);
  RngStream fill(41);
  for (auto* g : {&x1.prosody, &x1.acoustic}) {
    for (auto& tok : g->data) tok = static_cast<Token>(fill.uniform_int(0, 7));
  }
  Result r{true, ""};
  double worst_z = 0.0;
  for (int i = 0; i < 10; ++i) {
    const double t = 0.05 + 0.1 * i;
    RngStream rng(400 + static_cast<std::uint64_t>(i));
    const auto xt = diflow::corrupt(x1, t, s, rng);
    const auto clean = x1.stacked();
    std::size_t kept = 0;
    for (std::size_t j = 0; j < clean.data.size(); ++j) {
      if (xt.tokens.data[j] == clean.data[j]) ++kept;
      else if (xt.tokens.data[j] != x1.vocab) r.pass = false;  // neither clean nor MASK
    }
    const double k = diflow::kappa(s, t);
    const double z = std::abs(static_cast<double>(kept) / N - k) / std::sqrt(k * (1 - k) / N);
    worst_z = std::max(worst_z, z);
    r.pass = r.pass && z <= 3.0;
  }
  RngStream rng(499);
  const auto at0 = diflow::corrupt(x1, 0.0, s, rng);
  const auto at1 = diflow::corrupt(x1, 1.0, s, rng);
  const bool all_mask = std::all_of(at0.tokens.data.begin(), at0.tokens.data.end(),
                                    [&](Token t) { return t == x1.vocab; });
  const bool clean = at1.tokens == x1.stacked();
  r.pass = r.pass && all_mask && clean;
  r.detail = "max |z| over 10 times=" + fmt(worst_z) + " (need <= 3), t=0 all MASK: " +
             (all_mask ? "yes" : "no") + ", t=1 clean: " + (clean ? "yes" : "no");
  return r;
}

diflow::ModelConfig tiny_model() {
  diflow::ModelConfig c;
  c.pcm.phonemes = 4;
  c.pcm.vocab = 5;
  c.pcm.content_streams = 1;
  c.pcm.hidden = 8;
  c.pcm.encoder_layers = 1;
  c.pcm.heads = 2;
  c.pcm.ff_hidden = 8;
  c.pcm.duration_hidden = 4;
  c.fdfd.prosody_streams = 1;
  c.fdfd.content_streams = 1;
  c.fdfd.acoustic_streams = 1;
  c.fdfd.vocab = 5;
  c.fdfd.hidden = 8;
  c.fdfd.layers = 1;
  c.fdfd.heads = 2;
  c.fdfd.speaker_dim = 3;
  c.fdfd.ff_hidden = 8;
  return c;
}

diflow::CorpusConfig tiny_corpus() {
  diflow::CorpusConfig c;
  c.phonemes = 4;
  c.classes = 4;
  c.train_classes = 3;
  c.vocab = 5;
  c.content_streams = 1;
  c.speaker_dim = 3;
  c.acoustic_streams = 1;
  c.min_phonemes = 2;
  c.max_phonemes = 3;
  c.min_duration = 1;
  c.max_duration = 2;
  c.train_utterances = 20;
  c.heldout_utterances = 4;
  return c;
}

// 5. End-to-end gradient check and head isolation.
Result criterion5(const fs::path&) {
  diflow::DiFlowModel model(tiny_model());
  // Zero-initialized modulation layers would hide paths; perturb everything.
  RngStream prng(51);
  for (auto* p : model.parameters()) {
    for (auto& x : p->value().data()) x = prng.normal(0.0, 0.4);
  }
  const diflow::Corpus corpus = diflow::generate_corpus(tiny_corpus());
  diflow::TrainConfig tc;
  tc.batch_size = 2;
  const diflow::Trainer trainer(model, tc, corpus.train);
  const auto batch = trainer.batch_for(0);
  auto f = [&]() {
    RngStream rng(52);
    return diflow::total_loss(diflow::compute_losses(model, batch, {}, rng), {});
  };
  // Floor 1e-5: attention key biases have exactly zero gradient, so their
  // finite differences are pure round-off.
  const auto report = nn::grad_check(f, model.parameters(), 1e-5, 1e-5);

  nn::ParameterList acoustic;
  model.fdfd().acoustic_head().collect(acoustic);
  nn::zero_grads(model.parameters());
  RngStream rng(53);
  const auto& ex = batch.front();
  const auto content = model.pcm().forward(ex.phonemes, ex.durations);
  const auto xt = diflow::corrupt(ex.target, 0.3, diflow::Scheduler::linear(), rng);
  const auto logits = model.fdfd().denoise_logits(xt, diflow::make_context(ex, content));
  nn::backward(nn::cross_entropy(logits[0], ex.target.prosody.data));
  bool isolated = true;
  for (auto* p : acoustic) {
    for (double g : p->grad().data()) isolated = isolated && g == 0.0;
  }
  Result r;
  r.pass = report.max_relative_error < 1e-4 && isolated;
  r.detail = "max relative error " + fmt(report.max_relative_error) + " over " +
             std::to_string(report.checked) + " entries (need < 1e-4; worst " +
             report.worst_parameter + "), acoustic head grad from prosody loss exactly 0: " +
             (isolated ? "yes" : "no");
  return r;
}

// 6. Length regulator properties and trained content accuracy.
Result criterion6(const fs::path& work) {
  RngStream rng(61);
  bool props = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 8));
    nn::Tensor enc({n, 2});
    for (std::size_t i = 0; i < n; ++i) enc.at(i, 0) = static_cast<double>(i);
    std::vector<Token> d(n);
    std::size_t total = 0;
    for (auto& x : d) total += static_cast<std::size_t>(x = static_cast<Token>(rng.uniform_int(1, 5)));
    const nn::Tensor up = diflow::length_regulate(nn::Var::constant(enc), d).value();
    props = props && up.rows() == total;
    std::size_t row = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (Token k = 0; k < d[i]; ++k, ++row) props = props && up.at(row, 0) == static_cast<double>(i);
    }
  }
  const Trained t = load_variant(work, variants().front());
  std::size_t hits = 0;
  std::size_t total = 0;
  for (const auto* split : {&t.corpus.heldout}) {
    for (const auto& u : *split) {
      const auto out = t.model->pcm().forward(u.phonemes, u.durations);
      for (std::size_t j = 0; j < out.logits.size(); ++j) {
        const auto pred = diflow::argmax_rows(out.logits[j].value());
        const auto truth = u.content.stream(j);
        for (std::size_t l = 0; l < pred.size(); ++l) hits += pred[l] == truth[l];
        total += pred.size();
      }
    }
  }
  const double acc = static_cast<double>(hits) / static_cast<double>(total);
  Result r;
  r.pass = props && acc > 0.95;
  r.detail = std::string("regulator properties on 1000 vectors: ") + (props ? "ok" : "BAD") +
             ", held-out content accuracy " + fmt(acc) + " after " +
             std::to_string(kTrainSteps) + " steps (need > 0.95)";
  return r;
}

// 7. Zero-shot cloning on the held-out classes.
Result criterion7(const fs::path& work) {
  const Trained t = load_variant(work, variants().front());
  const auto held = score(t, "heldout", kEvalNfe, 1);
  const auto seen = score(t, "train", kEvalNfe, 1);
  Result r;
  r.pass = held.prosody_accuracy > 0.7 && held.acoustic_accuracy > 0.7;
  r.detail = "held-out prosody " + fmt(held.prosody_accuracy) + ", acoustic " +
             fmt(held.acoustic_accuracy) + " at NFE 32 over " + std::to_string(held.count) +
             " utterances (need > 0.7); seen-class prosody " + fmt(seen.prosody_accuracy) +
             ", acoustic " + fmt(seen.acoustic_accuracy);
  return r;
}

// 8. NFE trend.
Result criterion8(const fs::path& work) {
  const Trained t = load_variant(work, variants().front());
  const std::vector<int> nfes = {1, 2, 4, 8, 16, 32, 64, 128};
  const auto rows = diflow::app::nfe_sweep(*t.model, t.corpus, t.run, nfes, kSweepSeeds);
  auto noise = [&](std::size_t a, std::size_t b) {
    const double va = rows[a].combined_stddev * rows[a].combined_stddev;
    const double vb = rows[b].combined_stddev * rows[b].combined_stddev;
    return 2.0 * std::sqrt((va + vb) / kSweepSeeds);
  };
  bool rising = true;
  bool flat = true;
  bool timing = true;
  std::size_t i32 = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].nfe == 32) i32 = i;
  }
  for (std::size_t i = 1; i <= i32; ++i) {
    rising = rising && rows[i].mean.combined_accuracy >=
                           rows[i - 1].mean.combined_accuracy - noise(i, i - 1);
  }
  rising = rising && rows[i32].mean.combined_accuracy >= rows[0].mean.combined_accuracy;
  for (std::size_t i = i32 + 1; i < rows.size(); ++i) {
    flat = flat && std::abs(rows[i].mean.combined_accuracy - rows[i32].mean.combined_accuracy) <=
                       noise(i, i32);
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    timing = timing && rows[i].wall_seconds > rows[i - 1].wall_seconds;
  }
  Result r;
  r.pass = rising && flat && timing;
  std::string table;
  for (const auto& row : rows) {
    table += std::to_string(row.nfe) + ":" + fmt(row.mean.combined_accuracy) + "+-" +
             fmt(row.combined_stddev) + "/" + fmt(row.wall_seconds) + "s ";
  }
  r.detail = std::string("non-decreasing to 32: ") + (rising ? "yes" : "no") +
             ", within noise 32..128: " + (flat ? "yes" : "no") +
             ", wall time increasing: " + (timing ? "yes" : "no") + " [" + table + "]";
  return r;
}

// 9. Determinism and persistence.
Result criterion9(const fs::path& work) {
  fs::create_directories(work);
  const diflow::CorpusConfig cc = tiny_corpus();
  const auto a = diflow::serialize_corpus(diflow::generate_corpus(cc));
  const auto b = diflow::serialize_corpus(diflow::generate_corpus(cc));
  const bool corpora = a == b;

  const diflow::Corpus corpus = diflow::deserialize_corpus(a);
  const fs::path cpath = work / "determinism_corpus.bin";
  diflow::write_corpus(cpath, corpus);
  const bool corpus_file = diflow::serialize_corpus(diflow::read_corpus(cpath)) == a;

  diflow::TrainConfig tc;
  tc.batch_size = 4;
  auto trajectory = [&](diflow::DiFlowModel& model, std::vector<std::uint8_t>* ckpt) {
    diflow::Trainer tr(model, tc, corpus.train);
    std::vector<double> losses;
    for (int i = 0; i < 20; ++i) losses.push_back(tr.step().total);
    if (ckpt) *ckpt = diflow::serialize_checkpoint(model, &tr.optimizer(), "");
    return losses;
  };
  diflow::DiFlowModel trained(tiny_model());
  diflow::DiFlowModel twin(tiny_model());
  std::vector<std::uint8_t> ckpt;
  const bool losses = trajectory(trained, &ckpt) == trajectory(twin, nullptr);

  const fs::path kpath = work / "determinism.ckpt";
  {
    std::ofstream out(kpath, std::ios::binary);
    out.write(reinterpret_cast<const char*>(ckpt.data()), static_cast<std::streamsize>(ckpt.size()));
  }
  diflow::DiFlowModel restored(tiny_model());
  diflow::load_checkpoint(kpath, restored);
  bool bit_equal = true;
  for (std::size_t i = 0; i < trained.parameters().size(); ++i) {
    bit_equal = bit_equal && trained.parameters()[i]->value() == restored.parameters()[i]->value();
  }

  diflow::EvalConfig eval;
  eval.split = "train";
  diflow::SamplerConfig sampler;
  sampler.nfe = 8;
  const auto utts = diflow::app::evaluation_utterances(corpus, eval);
  auto sample_file = [&](const std::string& name) {
    const auto recs = diflow::app::sample_utterances(restored, utts, sampler, eval, 9);
    diflow::app::write_samples(work / name, {{"type", "meta"}}, recs);
    std::ifstream in(work / name, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const bool samples = sample_file("det_a.jsonl") == sample_file("det_b.jsonl");

  Result r;
  r.pass = corpora && corpus_file && losses && bit_equal && samples;
  auto yn = [](bool b) { return b ? "yes" : "no"; };
  r.detail = std::string("corpora ") + yn(corpora) + ", corpus file round trip " +
             yn(corpus_file) + ", loss trajectories " + yn(losses) + ", sample files " +
             yn(samples) + ", checkpoint bit-equal " + yn(bit_equal);
  return r;
}

// 10. Ablation hooks.
Result criterion10(const fs::path& work) {
  std::map<std::string, diflow::EvalReport> reports;
  std::string detail;
  bool distinct = true;
  const diflow::RunConfig full_run = base_run();
  for (const auto& v : variants()) {
    const Trained t = load_variant(work, v);
    if (std::string(v.name) != "full") {
      distinct = distinct && !(t.run.model == full_run.model);
    }
    reports[v.name] = score(t, "heldout", kEvalNfe, 1);
    detail += std::string(v.name) + "=" + fmt(reports[v.name].combined_accuracy) + " ";
  }
  const double drop =
      reports.at("full").combined_accuracy - reports.at("no_content").combined_accuracy;
  Result r;
  r.pass = distinct && drop >= 0.1;
  r.detail = "held-out combined accuracy at NFE 32: " + detail + "; no-content drop " +
             fmt(drop) + " (need >= 0.1)";
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"acceptance criteria"};
  std::vector<int> selected;
  bool do_prepare = false;
  fs::path work;
  cli.add_option("--criterion", selected, "criterion number (repeatable)");
  cli.add_flag("--prepare", do_prepare, "train the shared models and exit");
  cli.add_option("--work-dir", work, "directory for the corpus and checkpoints");
  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return cli.exit(e) == 0 ? 0 : 2;
  }
  if (work.empty()) {
    const char* env = std::getenv(diflow::app::kOutputDirEnv);
    work = env && *env ? fs::path(env) : fs::path("acceptance_work");
  }
  if (do_prepare) {
    try {
      return prepare(work);
    } catch (...) {
      return diflow::app::exit_code_for_current_exception(std::cerr);
    }
  }

  const std::vector<std::pair<const char*, Result (*)(const fs::path&)>> criteria = {
      {"oracle sampler convergence", criterion1},
      {"velocity identities", criterion2},
      {"scheduler contract", criterion3},
      {"corruption marginals", criterion4},
      {"gradient correctness", criterion5},
      {"PCM correctness", criterion6},
      {"zero-shot cloning", criterion7},
      {"NFE trend", criterion8},
      {"determinism and persistence", criterion9},
      {"ablation hooks", criterion10},
  };
  if (selected.empty()) {
    for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) selected.push_back(i);
  }
  bool all = true;
  for (int id : selected) {
    if (id < 1 || id > static_cast<int>(criteria.size())) {
      std::cerr << "no criterion " << id << '\n';
      return 2;
    }
    const auto& [name, fn] = criteria[static_cast<std::size_t>(id - 1)];
    Result r;
    try {
      r = fn(work);
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    all = all && r.pass;
    std::cout << (r.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name
              << "): " << r.detail << std::endl;
  }
  return all ? 0 : 1;
}
