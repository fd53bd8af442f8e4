// Python module exposing the main operations: metric computation, noise
// injection, dataset construction, training pipelines, and checkpoint
// scoring. File-level functions mirror the CLI subcommands.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include <nlohmann/json.hpp>

#include "tanda/errors.hpp"
#include "tanda/gradcheck.hpp"
#include "tanda/metrics.hpp"
#include "tanda/noise.hpp"
#include "tanda/pipeline.hpp"

namespace py = pybind11;
using namespace tanda;

namespace {

py::object json_to_py(const nlohmann::json& j) {
  py::module_ json_mod = py::module_::import("json");
  return json_mod.attr("loads")(j.dump());
}

py::object parse_json_str(const std::string& text) {
  return py::module_::import("json").attr("loads")(text);
}

SynthConfig synth_config(size_t n_questions, size_t candidates,
                         size_t vocab_size, size_t signal, double domain_shift,
                         double noise, uint64_t seed) {
  SynthConfig cfg;
  cfg.n_questions = n_questions;
  cfg.candidates_per_question = candidates;
  cfg.vocab_size = vocab_size;
  cfg.signal = signal;
  cfg.domain_shift = domain_shift;
  cfg.noise = noise;
  cfg.seed = seed;
  return cfg;
}

ModelConfig model_config(int d_model, int n_blocks, int n_heads, int max_len,
                         double dropout) {
  ModelConfig cfg;
  cfg.d_model = d_model;
  cfg.n_blocks = n_blocks;
  cfg.n_heads = n_heads;
  cfg.max_len = max_len;
  cfg.dropout = dropout;
  return cfg;
}

TrainConfig train_config(double lr, int max_epochs, int batch_size,
                         uint64_t seed, const std::string& dev_mode,
                         int patience, int threads, bool oversample) {
  TrainConfig cfg;
  cfg.learning_rate = lr;
  cfg.max_epochs = max_epochs;
  cfg.batch_size = batch_size;
  cfg.seed = seed;
  cfg.dev_mode = mode_from_string(dev_mode);
  cfg.patience = patience;
  cfg.threads = threads;
  cfg.oversample_positives = oversample;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Answer-sentence-selection toolkit: transfer/adapt fine-tuning, "
            "ranking metrics, dataset construction, noise robustness";
  m.attr("__version__") = kToolVersion;

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  // ranking metrics on plain lists
  m.def(
      "rank",
      [](const std::vector<double>& scores) {
        return tanda::rank(scores).order;
      },
      py::arg("scores"),
      "Candidate indices in stable descending-score order.");
  m.def(
      "average_precision",
      [](const std::vector<int>& rel) { return tanda::average_precision(rel); },
      py::arg("ranked_relevance"));
  m.def(
      "reciprocal_rank",
      [](const std::vector<int>& rel) { return tanda::reciprocal_rank(rel); },
      py::arg("ranked_relevance"));
  m.def(
      "precision_at_1",
      [](const std::vector<int>& rel) { return tanda::precision_at_1(rel); },
      py::arg("ranked_relevance"));
  m.def(
      "evaluate_files",
      [](const std::string& data_tsv, const std::string& scores_path,
         const std::string& mode) {
        return parse_json_str(run_evaluate(data_tsv, scores_path, mode));
      },
      py::arg("data_tsv"), py::arg("scores_path"), py::arg("mode") = "clean",
      "MAP/MRR/P@1 of a score file against an AS2 TSV.");

  // dataset plumbing
  m.def(
      "stats",
      [](const std::string& data_tsv, const std::string& mode) {
        return parse_json_str(run_stats(data_tsv, mode));
      },
      py::arg("data_tsv"), py::arg("mode") = "raw");
  m.def(
      "sample_indices",
      [](size_t n, size_t k, uint64_t seed) {
        return tanda::sample_indices(n, k, seed);
      },
      py::arg("n"), py::arg("k"), py::arg("seed"),
      "k distinct seeded indices (splitmix64 -> xoshiro256** -> partial "
      "Fisher-Yates), sorted.");
  m.def(
      "inject_noise",
      [](const std::string& in_tsv, const std::string& out_tsv,
         double fraction, uint64_t seed, const std::string& manifest_path) {
        return parse_json_str(
            run_inject_noise(in_tsv, out_tsv, fraction, seed, manifest_path));
      },
      py::arg("in_tsv"), py::arg("out_tsv"), py::arg("fraction"),
      py::arg("seed") = 42, py::arg("manifest_path") = "");
  m.def(
      "build_asnq",
      [](const std::string& in_jsonl, const std::string& out_tsv, bool lenient,
         bool case_insensitive, const std::string& stats_out) {
        return parse_json_str(run_build_asnq(in_jsonl, out_tsv, lenient,
                                             case_insensitive, stats_out));
      },
      py::arg("in_jsonl"), py::arg("out_tsv"), py::arg("lenient") = false,
      py::arg("case_insensitive") = false, py::arg("stats_out") = "");
  m.def(
      "binarize",
      [](const std::string& in_tsv, const std::string& out_tsv,
         const std::vector<int>& negatives) {
        return parse_json_str(run_binarize(in_tsv, out_tsv, negatives));
      },
      py::arg("in_tsv"), py::arg("out_tsv"),
      py::arg("negatives") = std::vector<int>{1, 2, 3});
  m.def(
      "synth",
      [](const std::string& out_dir, size_t n_questions, size_t candidates,
         size_t vocab_size, size_t signal, double domain_shift, double noise,
         uint64_t seed) {
        return parse_json_str(run_synth(
            out_dir, synth_config(n_questions, candidates, vocab_size, signal,
                                  domain_shift, noise, seed)));
      },
      py::arg("out_dir"), py::arg("n_questions") = 5000,
      py::arg("candidates") = 10, py::arg("vocab_size") = 64,
      py::arg("signal") = 8, py::arg("domain_shift") = 0.1,
      py::arg("noise") = 0.0, py::arg("seed") = 7);

  // training pipelines (file level, mirroring the CLI)
  m.def(
      "train_ft",
      [](const std::string& train_tsv, const std::string& dev_tsv,
         const std::string& out_dir, const std::string& test_tsv,
         const std::string& init_checkpoint, int d_model, int n_blocks,
         int n_heads, int max_len, double dropout, double lr, int max_epochs,
         int batch_size, uint64_t seed, const std::string& dev_mode,
         int patience, int threads, bool oversample_positives) {
        TrainFtOptions opts;
        opts.train_path = train_tsv;
        opts.dev_path = dev_tsv;
        opts.test_path = test_tsv;
        opts.init_checkpoint = init_checkpoint;
        opts.out_dir = out_dir;
        opts.model = model_config(d_model, n_blocks, n_heads, max_len, dropout);
        opts.train = train_config(lr, max_epochs, batch_size, seed, dev_mode,
                                  patience, threads, oversample_positives);
        return parse_json_str(run_train_ft(opts));
      },
      py::arg("train_tsv"), py::arg("dev_tsv"), py::arg("out_dir"),
      py::arg("test_tsv") = "", py::arg("init_checkpoint") = "",
      py::arg("d_model") = 64, py::arg("n_blocks") = 2, py::arg("n_heads") = 4,
      py::arg("max_len") = 128, py::arg("dropout") = 0.0,
      py::arg("lr") = 2e-5, py::arg("max_epochs") = 9,
      py::arg("batch_size") = 32, py::arg("seed") = 42,
      py::arg("dev_mode") = "clean", py::arg("patience") = 0,
      py::arg("threads") = 1, py::arg("oversample_positives") = false);
  m.def(
      "train_tanda",
      [](const std::string& transfer_train_tsv,
         const std::string& target_train_tsv,
         const std::string& target_dev_tsv, const std::string& out_dir,
         const std::string& transfer_dev_tsv, const std::string& test_tsv,
         const std::string& init_checkpoint, int d_model, int n_blocks,
         int n_heads, int max_len, double transfer_lr, int transfer_epochs,
         double adapt_lr, int adapt_epochs, int batch_size, uint64_t seed,
         const std::string& dev_mode, int threads, bool oversample_positives,
         int mlm_epochs, double mlm_rate) {
        TrainTandaOptions opts = default_tanda_options();
        opts.transfer_train_path = transfer_train_tsv;
        opts.transfer_dev_path = transfer_dev_tsv;
        opts.target_train_path = target_train_tsv;
        opts.target_dev_path = target_dev_tsv;
        opts.test_path = test_tsv;
        opts.init_checkpoint = init_checkpoint;
        opts.out_dir = out_dir;
        opts.model = model_config(d_model, n_blocks, n_heads, max_len, 0.0);
        opts.transfer =
            train_config(transfer_lr, transfer_epochs, batch_size, seed,
                         dev_mode, 0, threads, oversample_positives);
        opts.adapt =
            train_config(adapt_lr, adapt_epochs, batch_size, seed + 1,
                         dev_mode, 0, threads, oversample_positives);
        opts.mlm_epochs = mlm_epochs;
        opts.mlm_rate = mlm_rate;
        return parse_json_str(run_train_tanda(opts));
      },
      py::arg("transfer_train_tsv"), py::arg("target_train_tsv"),
      py::arg("target_dev_tsv"), py::arg("out_dir"),
      py::arg("transfer_dev_tsv") = "", py::arg("test_tsv") = "",
      py::arg("init_checkpoint") = "", py::arg("d_model") = 64,
      py::arg("n_blocks") = 2, py::arg("n_heads") = 4,
      py::arg("max_len") = 128, py::arg("transfer_lr") = 2e-5,
      py::arg("transfer_epochs") = 9, py::arg("adapt_lr") = 1e-6,
      py::arg("adapt_epochs") = 3, py::arg("batch_size") = 32,
      py::arg("seed") = 42, py::arg("dev_mode") = "clean",
      py::arg("threads") = 1, py::arg("oversample_positives") = false,
      py::arg("mlm_epochs") = 0, py::arg("mlm_rate") = 0.15);

  // checkpoint scoring
  m.def(
      "score_file",
      [](const std::string& checkpoint_path, const std::string& data_tsv,
         int threads) {
        const Checkpoint ckpt = load_checkpoint(checkpoint_path);
        return score_pairs(ckpt, parse_as2_file(data_tsv), threads);
      },
      py::arg("checkpoint_path"), py::arg("data_tsv"), py::arg("threads") = 1,
      "p(q, s) for every pair of the TSV, in file order.");
  m.def(
      "evaluate_checkpoint",
      [](const std::string& checkpoint_path, const std::string& data_tsv,
         const std::string& mode, int threads) {
        const Checkpoint ckpt = load_checkpoint(checkpoint_path);
        const MetricReport report = tanda::evaluate_checkpoint(
            ckpt, parse_as2_file(data_tsv), mode_from_string(mode), threads);
        nlohmann::json j{{"map", report.map},
                         {"mrr", report.mrr},
                         {"p_at_1", report.p_at_1},
                         {"n_questions", report.n_questions},
                         {"mode", to_string(report.mode)}};
        return json_to_py(j);
      },
      py::arg("checkpoint_path"), py::arg("data_tsv"),
      py::arg("mode") = "clean", py::arg("threads") = 1);

  m.def(
      "grad_check",
      [](int d_model, int n_blocks, int n_heads, int vocab_size,
         int batch_size, double epsilon, uint64_t seed, bool include_mlm) {
        GradCheckConfig cfg;
        cfg.d_model = d_model;
        cfg.n_blocks = n_blocks;
        cfg.n_heads = n_heads;
        cfg.vocab_size = vocab_size;
        cfg.batch_size = batch_size;
        cfg.epsilon = epsilon;
        cfg.seed = seed;
        cfg.include_mlm = include_mlm;
        return parse_json_str(run_grad_check(cfg).to_json());
      },
      py::arg("d_model") = 8, py::arg("n_blocks") = 1, py::arg("n_heads") = 2,
      py::arg("vocab_size") = 50, py::arg("batch_size") = 2,
      py::arg("epsilon") = 1e-3, py::arg("seed") = 3,
      py::arg("include_mlm") = true);
}
