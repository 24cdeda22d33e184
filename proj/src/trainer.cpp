#include "epar/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "epar/retrieval.hpp"

namespace epar {

using nlohmann::json;

WeakLabels build_weak_labels(const QueryInstance& q, std::mt19937_64& rng, bool hop1_supervision) {
    WeakLabels w;
    if (q.documents.empty()) throw ContractError("weak labels: instance " + q.instance_id + " has no documents");
    if (hop1_supervision) {
        TfidfIndex index(q.documents);
        w.hop1 = rank_by_score(index.scores(q.query_subject_tokens)).front();
        w.has_hop1 = true;
    }
    std::vector<std::size_t> bearing;
    if (q.answer_index)
        for (std::size_t i = 0; i < q.documents.size(); ++i)
            if (document_contains(q.documents[i], q.candidates[*q.answer_index])) bearing.push_back(i);
    if (bearing.empty()) {
        w.skip_de = true;
        w.has_hop1 = false;
        return w;
    }
    std::vector<std::size_t> pool;
    for (std::size_t d : bearing)
        if (!w.has_hop1 || d != w.hop1) pool.push_back(d);
    if (!pool.empty()) {
        w.hopT = pool[static_cast<std::size_t>(rng() % pool.size())];
        w.has_hopT = true;
    }
    return w;
}

namespace {

Tensor neg_log(const Tensor& dist, std::size_t i) { return scale(log(element(dist, i)), -1.0); }

void require_finite(Real v, const char* term, const std::string& id) {
    if (!std::isfinite(v)) throw NumericError("joint_loss: non-finite " + std::string(term) + " term on " + id);
}

}  // namespace

LossBreakdown joint_loss(const EparModel& model, const QueryInstance& q, const WeakLabels& labels,
                         const ForwardMode& mode, std::mt19937_64& rng) {
    if (!q.answer_index) throw ContractError("joint_loss: instance " + q.instance_id + " has no answer");
    const Config& cfg = model.config();
    const std::size_t answer = *q.answer_index;
    LossBreakdown out;
    std::vector<Tensor> terms;
    EncodedInstance enc = model.encoder.encode(q, mode);

    out.de_skipped = labels.skip_de || (!labels.has_hop1 && !labels.has_hopT);
    if (!out.de_skipped) {
        ExplorerInput all = ExplorerInput::all(enc);
        const std::size_t T = std::min(cfg.hops, all.size());
        ForcedLabels forced;
        if (labels.has_hop1) forced.hop1 = labels.hop1;
        if (labels.has_hopT && T > 1) forced.hopT = labels.hopT;
        ReasoningChain chain = model.explorer.rollout(all, T, RolloutMode::Sample, forced, &rng);
        if (forced.hop1) {
            Tensor l = neg_log(chain.chi.front(), labels.hop1);
            out.de_hop1 = l.item();
            terms.push_back(l);
        }
        if (forced.hopT) {
            Tensor l = neg_log(chain.chi.back(), labels.hopT);
            out.de_hopT = l.item();
            terms.push_back(l);
        }
    }

    ReasoningTree tree;
    {
        NoGradGuard no_grad;
        ExplorerInput in = ExplorerInput::subset(enc, model.retrieve(q));
        tree = model.explorer.build_tree(in, std::min(cfg.hops, in.size()), cfg.tree_width);
    }
    auto chains = chain_documents(tree);
    out.chains = chains.size();

    std::vector<std::size_t> picks;
    std::vector<ChainInput> inputs;
    std::vector<Tensor> ap_terms;
    for (const auto& c : chains) {
        inputs.push_back(model.chain_input(enc, c));
        ProposalResult p = model.proposer.propose(inputs.back());
        picks.push_back(p.best);
        ap_terms.push_back(reshape(cross_entropy(p.scores, answer), Shape(1)));
    }
    Tensor ap = scale(sum(concat(ap_terms, 0)), 1.0 / static_cast<Real>(ap_terms.size()));
    out.ap = ap.item();
    terms.push_back(ap);

    AssembledContext ctx = model.sentences_for(q, chains, picks, cfg.sentence_provider);
    FinalPrediction fin =
        model.assembler.assemble_predict(gather_context(enc, ctx), enc.U_sub, enc.U_bod, enc.candidate_matrix(), mode);
    Tensor ea = cross_entropy(fin.scores, answer);
    out.ea = ea.item();
    out.prediction = fin.best;
    terms.push_back(ea);

    if (model.reranker) {
        // Trained on frozen inputs so it never shapes the main model.
        std::vector<ChainInput> frozen;
        std::vector<Tensor> proposed;
        Tensor C = enc.candidate_matrix().detach();
        for (const auto& in : inputs) {
            ChainInput f{in.leaf.detach(), in.ancestors.defined() ? in.ancestors.detach() : Tensor(), in.u_s.detach(),
                         in.u_b.detach(), C};
            frozen.push_back(f);
        }
        for (std::size_t p : picks) proposed.push_back(row(C, p));
        auto target = std::find(picks.begin(), picks.end(), answer);
        if (target != picks.end()) {
            RerankResult rr = model.reranker->rerank(frozen, proposed);
            Tensor l = cross_entropy(rr.scores, static_cast<std::size_t>(target - picks.begin()));
            out.rerank = l.item();
            terms.push_back(l);
        }
    }

    require_finite(out.de_hop1, "de_hop1", q.instance_id);
    require_finite(out.de_hopT, "de_hopT", q.instance_id);
    require_finite(out.ap, "ap", q.instance_id);
    require_finite(out.ea, "ea", q.instance_id);
    require_finite(out.rerank, "rerank", q.instance_id);
    out.total = terms.size() == 1 ? terms.front() : sum(concat(
        [&] {
            std::vector<Tensor> flat;
            for (const auto& t : terms) flat.push_back(reshape(t, Shape(1)));
            return flat;
        }(), 0));
    return out;
}

std::mt19937_64 instance_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t position) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(position), 0x51u};
    return std::mt19937_64(seq);
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), 0x5au};
    std::mt19937_64 rng(seq);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
    return order;
}

double accuracy(const EparModel& model, const std::vector<QueryInstance>& data) {
    std::size_t total = 0, correct = 0;
    for (const auto& q : data) {
        if (!q.answer_index) continue;
        ++total;
        if (model.infer(q).prediction == *q.answer_index) ++correct;
    }
    return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

void save_model(const std::filesystem::path& dir, const EparModel& model, const std::string& tag) {
    std::filesystem::create_directories(dir);
    save_config(dir / "config.txt", model.config());
    if (!std::filesystem::exists(dir / "vocab.json")) save_vocabulary(dir / "vocab.json", model.vocabulary());
    save_checkpoint(dir / (tag + ".ckpt"), model.params);
}

LoadedModel load_model(const std::filesystem::path& dir, const std::string& tag) {
    LoadedModel m;
    m.config = load_config(dir / "config.txt");
    m.vocab = std::make_unique<Vocabulary>(load_vocabulary(dir / "vocab.json"));
    m.model = std::make_unique<EparModel>(m.config, *m.vocab);
    load_checkpoint(dir / (tag + ".ckpt"), m.model->params);
    return m;
}

namespace {

struct ResumeState {
    std::size_t epoch = 0;
    std::size_t batch = 0;
    std::size_t step = 0;
    double best_dev = -1.0;
    double elapsed = 0.0;
};

void write_state(const std::filesystem::path& path, const ResumeState& s) {
    std::ofstream out(path);
    out << json{{"epoch", s.epoch}, {"batch", s.batch}, {"step", s.step}, {"best_dev", s.best_dev}, {"elapsed", s.elapsed}}
               .dump(2);
}

ResumeState read_state(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("resume: cannot open " + path.string());
    json j = json::parse(in);
    return {j.at("epoch").get<std::size_t>(), j.at("batch").get<std::size_t>(), j.at("step").get<std::size_t>(),
            j.at("best_dev").get<double>(), j.at("elapsed").get<double>()};
}

}  // namespace

TrainSummary train(EparModel& model, const std::vector<QueryInstance>& train_set, const std::vector<QueryInstance>& dev_set,
                   const TrainOptions& opts) {
    const Config& cfg = model.config();
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < train_set.size(); ++i)
        if (train_set[i].answer_index) usable.push_back(i);
    if (usable.empty()) throw ContractError("train: no training instance has an answer");

    const bool writes = !opts.out_dir.empty();
    std::ofstream log;
    if (writes) {
        std::filesystem::create_directories(opts.out_dir);
        log.open(opts.out_dir / "train_log.jsonl", opts.resume ? std::ios::app : std::ios::trunc);
    }
    auto emit = [&](const json& j) {
        std::string line = j.dump();
        if (log) log << line << '\n' << std::flush;
        if (opts.on_log) opts.on_log(line);
    };

    AdamState adam;
    adam.lr = cfg.learning_rate;
    ResumeState st;
    if (opts.resume) {
        if (!writes) throw ContractError("train: resume needs an output directory");
        load_checkpoint(opts.out_dir / "last.ckpt", model.params);
        load_adam(opts.out_dir / "last.adam", adam, model.params);
        st = read_state(opts.out_dir / "last.state.json");
    }

    TrainSummary summary;
    summary.best_dev = st.best_dev;
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] { return st.elapsed + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

    auto save_last = [&] {
        if (!writes) return;
        save_model(opts.out_dir, model, "last");
        save_adam(opts.out_dir / "last.adam", adam, model.params);
        ResumeState s = st;
        s.elapsed = elapsed();
        write_state(opts.out_dir / "last.state.json", s);
    };
    auto evaluate_dev = [&] {
        if (dev_set.empty()) return;
        double acc = accuracy(model, dev_set);
        summary.last_dev = acc;
        emit({{"epoch", st.epoch}, {"step", st.step}, {"dev_accuracy", acc}, {"elapsed", elapsed()}});
        if (acc > st.best_dev) {
            st.best_dev = acc;
            summary.best_dev = acc;
            summary.seconds_to_best = elapsed();
            if (writes) save_model(opts.out_dir, model, "best");
        }
        if (opts.after_eval) opts.after_eval(st.step);
    };

    const std::size_t B = cfg.batch_size;
    const std::size_t batches = (usable.size() + B - 1) / B;
    bool stop = false;
    for (; st.epoch < cfg.epochs && !stop; ++st.epoch, st.batch = 0) {
        auto order = epoch_order(usable.size(), cfg.seed, st.epoch);
        for (; st.batch < batches; ++st.batch) {
            const std::size_t begin = st.batch * B, end = std::min(usable.size(), begin + B);
            const Real inv = 1.0 / static_cast<Real>(end - begin);
            model.params.zero_grad();
            Real de1 = 0, deT = 0, ap = 0, ea = 0, rr = 0, total = 0;
            std::size_t skipped = 0;
            for (std::size_t pos = begin; pos < end; ++pos) {
                const QueryInstance& q = train_set[usable[order[pos]]];
                auto rng = instance_rng(cfg.seed, st.epoch, pos);
                WeakLabels labels = build_weak_labels(q, rng, cfg.hop1_supervision);
                ForwardMode mode{true, cfg.dropout, &rng};
                LossBreakdown lb;
                try {
                    lb = joint_loss(model, q, labels, mode, rng);
                } catch (const NumericError& e) {
                    Tape::current().clear();
                    emit({{"epoch", st.epoch}, {"step", st.step}, {"error", e.what()}});
                    throw;
                }
                backward(scale(lb.total, inv));
                de1 += lb.de_hop1 * inv;
                deT += lb.de_hopT * inv;
                ap += lb.ap * inv;
                ea += lb.ea * inv;
                rr += lb.rerank * inv;
                total += lb.total.item() * inv;
                skipped += lb.de_skipped ? 1 : 0;
            }
            for (auto& [name, p] : model.params.all())
                if (!p.has_grad()) p.mutable_grad();
            const Real norm = model.params.grad_norm();
            model.params.clip_grad_norm(cfg.clip_norm);
            adam_step(model.params, adam);
            ++st.step;
            summary.step_losses.push_back(total);
            emit({{"epoch", st.epoch},
                  {"step", st.step},
                  {"loss", total},
                  {"de_hop1", de1},
                  {"de_hopT", deT},
                  {"ap", ap},
                  {"ea", ea},
                  {"rerank", rr},
                  {"de_skipped", skipped},
                  {"grad_norm", norm},
                  {"elapsed", elapsed()}});
            if (cfg.eval_every && st.step % cfg.eval_every == 0) evaluate_dev();
            if (opts.max_steps && st.step >= opts.max_steps) {
                ++st.batch;
                stop = true;
                break;
            }
            if (cfg.time_budget_seconds > 0 && elapsed() >= cfg.time_budget_seconds) {
                summary.stopped_by_budget = true;
                ++st.batch;
                stop = true;
                break;
            }
        }
        if (!stop && !cfg.eval_every) evaluate_dev();
        if (stop) break;
    }
    if (stop && st.batch >= batches) {
        ++st.epoch;
        st.batch = 0;
    }
    if (summary.stopped_by_budget && !(cfg.eval_every && st.step % cfg.eval_every == 0)) evaluate_dev();
    summary.steps = st.step;
    summary.seconds = elapsed();
    save_last();
    return summary;
}

}  // namespace epar
