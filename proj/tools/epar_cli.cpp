#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "epar/config.hpp"
#include "epar/dataset.hpp"
#include "epar/eval.hpp"
#include "epar/trainer.hpp"

using namespace epar;
using nlohmann::json;

namespace {

void write_report(const std::string& out, const json& j) {
    if (out.empty()) return;
    std::ofstream f(out);
    if (!f) throw ConfigError("cannot write " + out);
    f << j.dump(2) << '\n';
}

json rate_json(const AccuracyResult& r) {
    json j{{"total", r.total}, {"correct", r.correct}, {"missing", r.missing}};
    j["accuracy"] = r.rate ? json(*r.rate) : json(nullptr);
    return j;
}

std::string pct(const std::optional<double>& r) {
    if (!r) return "   -  ";
    char buf[16];
    std::snprintf(buf, sizeof buf, "%6.1f", 100.0 * *r);
    return buf;
}

const std::vector<QueryInstance>& split_of(const Dataset& ds, const std::string& split) {
    if (split == "train") return ds.train;
    if (split == "dev") return ds.dev;
    throw ConfigError("unknown split '" + split + "' (train, dev)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Explore-propose-assemble reader for multi-hop QA"};
    app.require_subcommand(1);
    const std::string data_root = default_data_root().string();

    // synth
    auto* synth = app.add_subcommand("synth", "write a synthetic multi-hop dataset");
    SyntheticSpec spec;
    std::size_t n_train = 500, n_dev = 100;
    std::string synth_out = data_root;
    synth->add_option("--n", n_train, "training instances")->capture_default_str();
    synth->add_option("--dev", n_dev, "dev instances")->capture_default_str();
    synth->add_option("--hops", spec.hops, "bridge entities per gold chain")->capture_default_str();
    synth->add_option("--vocab", spec.vocab_size, "entity pool size")->capture_default_str();
    synth->add_option("--docs", spec.documents, "documents per instance")->capture_default_str();
    synth->add_option("--candidates", spec.candidates, "candidates per instance")->capture_default_str();
    synth->add_option("--distractors", spec.distractor_chains, "branching distractor chains")->capture_default_str();
    synth->add_option("--seed", spec.seed, "generator seed")->capture_default_str();
    synth->add_option("--out", synth_out, "output directory")->capture_default_str();

    // shared model/data flags
    std::string data = data_root, config_path, preset_name = "small", checkpoint, tag = "best", out, split = "dev";
    std::vector<std::string> overrides;
    bool masked = false;

    auto* trn = app.add_subcommand("train", "train the joint model");
    std::size_t max_steps = 0;
    bool resume = false;
    std::optional<std::uint64_t> train_seed;
    trn->add_option("--data", data, "data directory")->capture_default_str();
    trn->add_option("--config", config_path, "key=value config file")->check(CLI::ExistingFile);
    trn->add_option("--preset", preset_name, "full, small or medhop")->capture_default_str();
    trn->add_option("--set", overrides, "config override key=value (repeatable)");
    trn->add_option("--seed", train_seed, "overrides the config seed");
    trn->add_option("--out", out, "output directory")->required();
    trn->add_option("--max-steps", max_steps, "stop after this many updates");
    trn->add_flag("--resume", resume, "continue from <out>/last.*");
    trn->add_flag("--masked", masked, "masked candidate setting");

    auto add_eval_flags = [&](CLI::App* c) {
        c->add_option("--data", data, "data directory")->capture_default_str();
        c->add_option("--checkpoint", checkpoint, "trained model directory")->required()->check(CLI::ExistingDirectory);
        c->add_option("--tag", tag, "checkpoint tag (best or last)")->capture_default_str();
        c->add_option("--split", split, "train or dev")->capture_default_str();
        c->add_option("--out", out, "JSON report path");
        c->add_flag("--masked", masked, "masked candidate setting");
    };

    auto* evl = app.add_subcommand("evaluate", "accuracy on a split");
    std::string subset = "all";
    add_eval_flags(evl);
    evl->add_option("--subset", subset, "all, follows_multiple, follows_single, not_follows")->capture_default_str();

    auto* ana = app.add_subcommand("analyze-chains", "chain and answer-span recall@k per selector");
    std::vector<std::string> selectors = {"random", "1hop", "2hop", "de", "tfidf_de"};
    std::size_t max_k = 5;
    std::uint64_t seed = 1;
    add_eval_flags(ana);
    ana->add_option("--selector", selectors, "random, 1hop, 2hop, de, tfidf_de")->capture_default_str();
    ana->add_option("--k", max_k, "largest k")->capture_default_str();
    ana->add_option("--seed", seed, "seed for the random selector")->capture_default_str();

    auto* abl = app.add_subcommand("ablate", "proposer and assembler comparison rows");
    std::string noattn;
    add_eval_flags(abl);
    abl->add_option("--noattn-checkpoint", noattn, "model trained without proposer attention")->check(CLI::ExistingDirectory);

    auto* trc = app.add_subcommand("trace", "reasoning tree of one instance as JSON");
    std::string trace_id;
    add_eval_flags(trc);
    trc->add_option("--id", trace_id, "instance id")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) {
            write_synthetic_dataset(synth_out, spec, n_train, n_dev);
            std::cout << "wrote " << n_train << " train / " << n_dev << " dev instances to " << synth_out << '\n';
            return 0;
        }

        if (!std::filesystem::is_directory(data)) {
            std::cerr << "error: data directory " << data << " not found\n";
            return 2;
        }
        Dataset ds = load_dataset(data, masked);
        for (const auto& w : ds.warnings) std::cerr << "warning: " << w << '\n';

        if (trn->parsed()) {
            Config cfg = config_path.empty() ? preset(preset_name) : load_config(config_path, preset_name);
            for (const auto& kv : overrides) {
                auto eq = kv.find('=');
                if (eq == std::string::npos) {
                    std::cerr << "error: --set expects key=value, got " << kv << '\n';
                    return 2;
                }
                cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
            }
            if (train_seed) cfg.seed = *train_seed;
            cfg.validate();
            std::unique_ptr<Vocabulary> vocab;
            if (resume) {
                vocab = std::make_unique<Vocabulary>(load_vocabulary(std::filesystem::path(out) / "vocab.json"));
            } else {
                VocabularyReport rep;
                std::optional<std::filesystem::path> emb;
                if (!cfg.embedding_file.empty()) emb = cfg.embedding_file;
                vocab = std::make_unique<Vocabulary>(build_vocabulary(ds.train, cfg.word_dim, cfg.seed, cfg.embedding_std, emb, &rep));
                if (emb) std::cerr << "embedding coverage " << rep.coverage << " (" << rep.skipped_lines << " lines skipped)\n";
            }
            EparModel model(cfg, *vocab);
            std::filesystem::create_directories(out);
            save_model(out, model, "init");
            TrainOptions opts;
            opts.out_dir = out;
            opts.resume = resume;
            opts.max_steps = max_steps;
            opts.on_log = [](const std::string& line) {
                if (line.find("dev_accuracy") != std::string::npos || line.find("error") != std::string::npos)
                    std::cout << line << '\n';
            };
            TrainSummary s = train(model, ds.train, ds.dev, opts);
            std::cout << "steps " << s.steps << ", best dev " << s.best_dev << ", " << s.seconds << " s\n";
            return 0;
        }

        LoadedModel lm = load_model(checkpoint, tag);
        const auto& inst = split_of(ds, split);

        if (evl->parsed()) {
            Subset sub = parse_subset(subset);
            std::map<std::string, std::size_t> preds;
            for (const auto& q : inst)
                if (in_subset(q, sub)) preds[q.instance_id] = lm.model->infer(q).prediction;
            json rep{{"split", split}, {"subset", subset}};
            rep["overall"] = rate_json(accuracy(preds, inst, sub));
            if (sub == Subset::All) {
                rep["follows_multiple"] = rate_json(accuracy(preds, inst, Subset::FollowsMultiple));
                rep["follows_single"] = rate_json(accuracy(preds, inst, Subset::FollowsSingle));
            }
            std::cout << rep.dump(2) << '\n';
            write_report(out, rep);
            return 0;
        }

        if (ana->parsed()) {
            std::vector<Selector> sels;
            for (const auto& s : selectors) sels.push_back(parse_selector(s));
            RecallTable t = analyze_chains(*lm.model, inst, ds.gold, sels, max_k, seed);
            json rep{{"instances", t.instances}, {"excluded", t.excluded}, {"chain_recall", t.chain}, {"answer_recall", t.answer}};
            std::cout << "selector    " << "chain R@1..R@" << max_k << " | answer R@1..R@" << max_k << '\n';
            for (const auto& s : selectors) {
                std::printf("%-10s", s.c_str());
                for (double v : t.chain[s]) std::printf(" %6.1f", 100 * v);
                std::printf(" |");
                for (double v : t.answer[s]) std::printf(" %6.1f", 100 * v);
                std::printf("\n");
            }
            write_report(out, rep);
            return 0;
        }

        if (abl->parsed()) {
            auto rows = ablation_rows(*lm.model, inst);
            if (!noattn.empty()) {
                LoadedModel na = load_model(noattn, tag);
                std::map<std::string, std::size_t> preds;
                for (const auto& q : inst) preds[q.instance_id] = na.model->infer(q, SentenceProvider::Proposer).final.best;
                rows.insert(rows.begin() + 2, accuracy_row("AP w.o. attn", preds, inst));
            }
            json rep = json::array();
            std::printf("%-14s %6s %8s %8s\n", "", "full", "fol+mul", "fol+sgl");
            for (const auto& r : rows) {
                std::printf("%-14s %s %8s %8s\n", r.name.c_str(), pct(r.all.rate).c_str(), pct(r.follows_multiple.rate).c_str(),
                            pct(r.follows_single.rate).c_str());
                rep.push_back({{"name", r.name},
                               {"full", rate_json(r.all)},
                               {"follows_multiple", rate_json(r.follows_multiple)},
                               {"follows_single", rate_json(r.follows_single)}});
            }
            write_report(out, rep);
            return 0;
        }

        if (trc->parsed()) {
            for (const auto& q : inst)
                if (q.instance_id == trace_id) {
                    std::string t = trace_instance(*lm.model, q);
                    std::cout << t << '\n';
                    if (!out.empty()) std::ofstream(out) << t << '\n';
                    return 0;
                }
            std::cerr << "error: no instance '" << trace_id << "' in the " << split << " split\n";
            return 2;
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
