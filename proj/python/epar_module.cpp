#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include "epar/dataset.hpp"
#include "epar/eval.hpp"
#include "epar/retrieval.hpp"
#include "epar/trainer.hpp"

namespace py = pybind11;
using namespace epar;

namespace {

RawRecord to_record(const py::dict& d) {
    RawRecord r;
    r.id = d["id"].cast<std::string>();
    r.query = d["query"].cast<std::string>();
    r.candidates = d["candidates"].cast<std::vector<std::string>>();
    if (d.contains("answer") && !d["answer"].is_none()) r.answer = d["answer"].cast<std::string>();
    r.supports = d["supports"].cast<std::vector<std::string>>();
    return r;
}

py::dict from_record(const RawRecord& r) {
    py::dict d;
    d["id"] = r.id;
    d["query"] = r.query;
    d["candidates"] = r.candidates;
    d["answer"] = r.answer ? py::cast(*r.answer) : py::none();
    d["supports"] = r.supports;
    return d;
}

Config make_config(const std::string& base, const std::map<std::string, std::string>& overrides) {
    Config c = preset(base);
    for (const auto& [k, v] : overrides) c.set(k, v);
    c.validate();
    return c;
}

class PyModel {
public:
    explicit PyModel(LoadedModel m) : m_(std::move(m)) {}

    std::string predict(const py::dict& record) const {
        auto r = to_record(record);
        return r.candidates.at(m_.model->infer(instance_from_record(r, false)).prediction);
    }
    py::object trace(const py::dict& record) const {
        auto q = instance_from_record(to_record(record), false);
        return py::module_::import("json").attr("loads")(trace_instance(*m_.model, q));
    }
    std::map<std::string, std::string> config() const { return m_.config.to_map(); }

private:
    LoadedModel m_;
};

}  // namespace

PYBIND11_MODULE(_epar, m) {
    m.doc() = "Multi-hop reading: explore documents, propose answers, assemble evidence.";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<IngestionError>(m, "IngestionError", PyExc_ValueError);

    m.def("config", [](const std::string& base, const std::map<std::string, std::string>& o) {
        return make_config(base, o).to_map();
    }, py::arg("preset") = "small", py::arg("overrides") = std::map<std::string, std::string>{},
       "Settings of a preset after applying string overrides.");

    m.def("tfidf_scores", [](const py::list& supports, const std::string& query) {
        RawRecord r{"q", "rel " + query, {"x"}, std::string("x"), supports.cast<std::vector<std::string>>()};
        auto q = instance_from_record(r, false);
        return TfidfIndex(q.documents).scores(q.query_subject_tokens);
    }, py::arg("supports"), py::arg("query"), "TF-IDF score of each support against a query phrase.");
    m.def("two_hop_select", [](const py::dict& record, std::size_t n_prime) {
        return two_hop_select(instance_from_record(to_record(record), false), n_prime);
    }, py::arg("record"), py::arg("n_prime") = 8);

    m.def("synthetic", [](std::size_t instances, std::size_t hops, std::size_t documents, std::size_t candidates,
                          std::uint64_t seed) {
        SyntheticSpec s;
        s.instances = instances;
        s.hops = hops;
        s.documents = documents;
        s.candidates = candidates;
        s.seed = seed;
        auto ds = generate_synthetic(s);
        py::list records;
        for (const auto& r : ds.records) records.append(from_record(r));
        return py::make_tuple(records, ds.gold_chains);
    }, py::arg("instances") = 200, py::arg("hops") = 2, py::arg("documents") = 8, py::arg("candidates") = 5,
       py::arg("seed") = 7, "Synthetic records and their gold chains.");
    m.def("write_synthetic", [](const std::filesystem::path& dir, std::size_t train, std::size_t dev, std::size_t hops,
                                std::uint64_t seed) {
        SyntheticSpec s;
        s.hops = hops;
        s.seed = seed;
        write_synthetic_dataset(dir, s, train, dev);
    }, py::arg("dir"), py::arg("train") = 500, py::arg("dev") = 100, py::arg("hops") = 2, py::arg("seed") = 7);

    m.def("train", [](const std::filesystem::path& data, const std::filesystem::path& out, const std::string& base,
                      const std::map<std::string, std::string>& overrides) {
        Config cfg = make_config(base, overrides);
        Dataset ds = load_dataset(data);
        Vocabulary vocab = build_vocabulary(ds.train, cfg.word_dim, cfg.seed, cfg.embedding_std);
        EparModel model(cfg, vocab);
        TrainOptions o;
        o.out_dir = out;
        TrainSummary s;
        {
            py::gil_scoped_release release;
            s = train(model, ds.train, ds.dev, o);
        }
        py::dict d;
        d["steps"] = s.steps;
        d["best_dev"] = s.best_dev;
        d["last_dev"] = s.last_dev;
        d["seconds"] = s.seconds;
        d["losses"] = s.step_losses;
        return d;
    }, py::arg("data"), py::arg("out"), py::arg("preset") = "small",
       py::arg("overrides") = std::map<std::string, std::string>{}, "Train on a data directory; returns a summary.");

    py::class_<PyModel>(m, "Model")
        .def_static("load", [](const std::filesystem::path& dir, const std::string& tag) {
            return PyModel(load_model(dir, tag));
        }, py::arg("dir"), py::arg("tag") = "best")
        .def("predict", &PyModel::predict, py::arg("record"))
        .def("trace", &PyModel::trace, py::arg("record"))
        .def_property_readonly("config", &PyModel::config);
}
