#include "micrec/config.hpp"
#include "micrec/errors.hpp"
#include "micrec/eval.hpp"
#include "micrec/features.hpp"
#include "micrec/pipeline.hpp"
#include "micrec/selftest.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>

namespace py = pybind11;
using namespace micrec;

namespace {

RunConfig config_from(const std::map<std::string, std::string>& kv) {
  RunConfig cfg;
  for (const auto& [k, v] : kv) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

py::dict eval_row(const EvalRow& r) {
  py::dict d;
  d["domain"] = to_string(r.domain);
  d["n"] = r.n;
  d["slice"] = r.slice;
  d["precision"] = r.precision;
  d["recall"] = r.recall;
  d["ndcg"] = r.ndcg;
  d["users"] = r.users;
  return d;
}

}  // namespace

PYBIND11_MODULE(_micrec, m) {
  m.doc() = "Inductive multimodal cross-domain recommendation";

  auto error = py::register_exception<Error>(m, "MicrecError", PyExc_RuntimeError);
  auto config_error = py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  auto data_error = py::register_exception<DataError>(m, "DataError", error.ptr());
  py::register_exception<VersionError>(m, "VersionError", config_error.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", error.ptr());
  py::register_exception<IncompleteFeaturesError>(m, "IncompleteFeaturesError", data_error.ptr());

  m.def(
      "config_hash", [](const std::map<std::string, std::string>& kv) { return config_from(kv).hash(); },
      py::arg("config"), "SHA-256 of a run config given as a key/value dict (the output path is excluded).");
  m.def(
      "config_entries",
      [](const std::map<std::string, std::string>& kv) { return config_from(kv).entries(); }, py::arg("config"),
      "Canonical (key, value) pairs of a run config with defaults filled in.");

  m.def(
      "load_features",
      [](const std::string& path, std::int64_t count) {
        auto f = load_features(path, count);
        return py::make_tuple(to_string(f.modality), f.rows);
      },
      py::arg("path"), py::arg("count"), "Reads a MICREC-FEAT v1 file; returns (modality, rows).");
  m.def(
      "save_features",
      [](const std::string& path, const std::string& modality, const Matrix& rows) {
        save_features(path, FeatureMatrix{parse_modality(modality), rows});
      },
      py::arg("path"), py::arg("modality"), py::arg("rows"), "Writes rows in the MICREC-FEAT v1 format.");

  m.def(
      "fused_similarity",
      [](const RowVector& at, const RowVector& av, const RowVector& bt, const RowVector& bv, double w) {
        return fused_similarity(at, av, bt, bv, FusionWeight(w));
      },
      py::arg("a_text"), py::arg("a_visual"), py::arg("b_text"), py::arg("b_visual"), py::arg("w") = 0.9);
  m.def(
      "neighbor_index",
      [](const Matrix& text, const Matrix& visual, int k, double w, bool use_text, bool use_visual) {
        SimilarityConfig cfg;
        cfg.weight = FusionWeight(w);
        cfg.use_text = use_text;
        cfg.use_visual = use_visual;
        const auto idx = build_neighbor_index(EntityFeatures{text, visual}, cfg, k);
        return py::make_tuple(idx.neighbors, idx.scores);
      },
      py::arg("text"), py::arg("visual"), py::arg("k") = 3, py::arg("w") = 0.9, py::arg("use_text") = true,
      py::arg("use_visual") = true, "Exact top-k neighbors; returns (neighbors, scores) lists per entity.");

  m.def(
      "metrics_at",
      [](const std::vector<EntityIndex>& ranking, std::vector<EntityIndex> relevant, int n) {
        std::sort(relevant.begin(), relevant.end());
        const auto r = metrics_at(ranking, relevant, n);
        return py::make_tuple(r.precision, r.recall, r.ndcg);
      },
      py::arg("ranking"), py::arg("relevant"), py::arg("n"), "(precision, recall, ndcg) of a ranking at n.");

  m.def(
      "prepare",
      [](const std::map<std::string, std::string>& kv) {
        const auto s = cmd_prepare(config_from(kv));
        py::list stats;
        for (const auto& d : s.stats) {
          py::dict row;
          row["domain"] = to_string(d.tag);
          row["users"] = d.users;
          row["items"] = d.items;
          row["seen_users"] = d.seen_users;
          row["seen_items"] = d.seen_items;
          row["train"] = d.train;
          row["new"] = d.new_edges;
          row["val"] = d.val;
          row["test"] = d.test;
          row["overlap"] = d.overlap;
          stats.append(row);
        }
        return stats;
      },
      py::arg("config"), "Filters, splits and writes prepared data to config['out']; returns per-domain counts.");
  m.def(
      "train",
      [](const std::map<std::string, std::string>& kv, const std::string& state, const std::string& resume) {
        const auto cfg = config_from(kv);
        TrainSummary s;
        {
          py::gil_scoped_release release;
          s = cmd_train(cfg, state, resume);
        }
        py::list history;
        for (const auto& h : s.model.history)
          history.append(py::make_tuple(h.epoch, h.loss, h.recall_a, h.recall_b, h.alpha));
        py::dict out;
        out["checkpoint"] = s.checkpoint_path;
        out["history_path"] = s.history_path;
        out["best_epoch"] = s.model.best_epoch;
        out["history"] = history;
        return out;
      },
      py::arg("config"), py::arg("state") = "", py::arg("resume") = "",
      "Trains on prepared data in config['out'] and writes model.ckpt and history.tsv there.");
  m.def(
      "evaluate",
      [](const std::string& checkpoint, const std::vector<int>& ns, const std::vector<std::string>& slices,
         const std::string& data) {
        std::vector<Slice> parsed;
        for (const auto& s : slices) parsed.push_back(Slice::parse(s));
        const auto report = cmd_eval(checkpoint, ns, parsed, data);
        py::list rows;
        for (const auto& r : report.rows) rows.append(eval_row(r));
        return rows;
      },
      py::arg("checkpoint"), py::arg("ns") = std::vector<int>{20}, py::arg("slices") = std::vector<std::string>{"all"},
      py::arg("data") = "", "Test-protocol metrics (x100) per domain, N and slice.");
  m.def(
      "recommend",
      [](const std::string& checkpoint, const std::string& domain, const std::string& user, int top_n,
         const std::string& data) {
        std::vector<std::pair<std::string, double>> out;
        for (const auto& r : cmd_recommend(checkpoint, parse_domain_tag(domain), user, top_n, data))
          out.emplace_back(r.item_key, r.score);
        return out;
      },
      py::arg("checkpoint"), py::arg("domain"), py::arg("user"), py::arg("top_n") = 10, py::arg("data") = "",
      "Top-n (item key, score) pairs for a user key, known interactions excluded.");

  m.def(
      "selftest",
      [](unsigned seed) {
        std::vector<std::tuple<std::string, bool, std::string>> out;
        for (const auto& r : run_selftest(seed)) out.emplace_back(r.name, r.passed, r.detail);
        return out;
      },
      py::arg("seed") = 7, "Runs the built-in invariant checks; returns (name, passed, detail) triples.");
}
