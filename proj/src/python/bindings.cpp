#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "aadam/config.hpp"
#include "aadam/error.hpp"
#include "aadam/evaluation.hpp"
#include "aadam/model.hpp"
#include "aadam/pipeline.hpp"
#include "aadam/synthetic.hpp"
#include "aadam/text.hpp"
#include "aadam/transfer.hpp"

namespace py = pybind11;

namespace {

std::pair<int, std::string> run_command(const std::string& name, const std::vector<std::string>& assignments,
                                        const std::optional<std::string>& config_file, bool force) {
  std::ostringstream out;
  try {
    const aadam::Config config = aadam::load_config(config_file, std::nullopt, assignments);
    aadam::CommandOptions options;
    options.force = force;
    int code = 0;
    if (name == "ingest") code = aadam::cmd_ingest(config, options, out);
    else if (name == "augment") code = aadam::cmd_augment(config, options, out);
    else if (name == "tapt") code = aadam::cmd_tapt(config, options, out);
    else if (name == "train") code = aadam::cmd_train(config, options, out);
    else if (name == "train-grid") code = aadam::cmd_train_grid(config, options, out);
    else if (name == "transfer") code = aadam::cmd_transfer(config, options, out);
    else if (name == "baseline") code = aadam::cmd_baseline(config, options, out);
    else if (name == "evaluate") code = aadam::cmd_evaluate(config, options, out);
    else if (name == "report") code = aadam::cmd_report(config, options, out);
    else throw aadam::UsageError("unknown command '" + name + "'");
    return {code, out.str()};
  } catch (const std::exception& e) {
    return {aadam::exit_code_for(e), out.str() + e.what() + "\n"};
  }
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Core routines of the aadam relatedness toolkit";

  static py::exception<aadam::Error> error(m, "Error", PyExc_RuntimeError);
  static py::exception<aadam::DataError> data_error(m, "DataError", error.ptr());
  static py::exception<aadam::UsageError> usage_error(m, "UsageError", error.ptr());
  static py::exception<aadam::NumericError> numeric_error(m, "NumericError", error.ptr());
  static py::exception<aadam::LeakageError> leakage_error(m, "LeakageError", error.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const aadam::DataError& e) {
      PyErr_SetString(data_error.ptr(), e.what());
    } catch (const aadam::UsageError& e) {
      PyErr_SetString(usage_error.ptr(), e.what());
    } catch (const aadam::NumericError& e) {
      PyErr_SetString(numeric_error.ptr(), e.what());
    } catch (const aadam::LeakageError& e) {
      PyErr_SetString(leakage_error.ptr(), e.what());
    } catch (const aadam::Error& e) {
      PyErr_SetString(error.ptr(), e.what());
    }
  });

  m.def("tokenize", [](const std::string& text, bool lowercase, bool strip_punct) {
    return aadam::tokenize(text, {lowercase, strip_punct});
  }, py::arg("text"), py::arg("lowercase") = true, py::arg("strip_punct") = false);

  m.def("average_ranks", [](const std::vector<double>& v) { return aadam::average_ranks(v); });
  m.def("pearson", [](const std::vector<double>& x, const std::vector<double>& y) { return aadam::pearson(x, y); });
  m.def("spearman", [](const std::vector<double>& pred, const std::vector<double>& gold) {
    return aadam::spearman(pred, gold);
  }, py::arg("pred"), py::arg("gold"));
  m.def("dice", [](const std::string& a, const std::string& b) { return aadam::dice(a, b); });
  m.def("format_x100", &aadam::format_x100, py::arg("rho"));
  m.def("relatedness_curve", &aadam::relatedness_curve);
  m.def("band_counts", [](const std::vector<double>& pred, const std::vector<double>& gold) {
    std::vector<std::size_t> out;
    for (const auto& b : aadam::band_analysis(pred, gold)) out.push_back(b.n);
    return out;
  });
  m.def("kfold_assign", &aadam::kfold_assign, py::arg("n"), py::arg("k"), py::arg("seed"));

  m.def("linguistic_distance", [](const std::string& table_tsv, const std::string& source, const std::string& target) {
    return aadam::linguistic_distance(source, target, aadam::DistanceTable::parse(table_tsv)).value;
  }, py::arg("table_tsv"), py::arg("source"), py::arg("target"));

  m.def("overlap_corpus", [](std::uint64_t seed, std::size_t pairs, std::size_t vocab) {
    aadam::OverlapSpec spec;
    spec.seed = seed;
    spec.pairs = pairs;
    spec.vocab = vocab;
    std::vector<std::tuple<std::string, std::string, std::string, double>> out;
    for (const auto& p : aadam::make_overlap_corpus(spec).pairs) out.emplace_back(p.id, p.sentence1, p.sentence2, p.score);
    return out;
  }, py::arg("seed") = 0, py::arg("pairs") = 2000, py::arg("vocab") = 200);

  m.def("parameter_count", [](std::size_t vocab_size, std::size_t d_model, std::size_t n_layers, std::size_t n_heads,
                              std::size_t d_ff, std::size_t max_len, std::optional<std::size_t> bottleneck) {
    aadam::EncoderConfig c;
    c.vocab_size = vocab_size;
    c.d_model = d_model;
    c.n_layers = n_layers;
    c.n_heads = n_heads;
    c.d_ff = d_ff;
    c.max_len = max_len;
    c.adapter_bottleneck = bottleneck.value_or(d_model / 2);
    return aadam::build_encoder(c).params().numel();
  }, py::arg("vocab_size"), py::arg("d_model"), py::arg("n_layers"), py::arg("n_heads"), py::arg("d_ff"),
     py::arg("max_len"), py::arg("bottleneck") = std::nullopt);
  m.def("model_hash", [](std::size_t vocab_size, std::uint64_t seed) {
    aadam::EncoderConfig c;
    c.vocab_size = vocab_size;
    c.seed = seed;
    return aadam::model_hash(aadam::build_encoder(c));
  }, py::arg("vocab_size"), py::arg("seed") = 0);

  m.def("load_config", [](const std::optional<std::string>& file, const std::vector<std::string>& assignments) {
    return aadam::load_config(file, std::nullopt, assignments).values();
  }, py::arg("file") = std::nullopt, py::arg("assignments") = std::vector<std::string>{});

  m.def("run_command", &run_command, py::arg("name"), py::arg("assignments") = std::vector<std::string>{},
        py::arg("config_file") = std::nullopt, py::arg("force") = false,
        "Runs a subcommand; returns (exit status, captured output).");
}
