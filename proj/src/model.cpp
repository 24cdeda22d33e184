#include "epar/model.hpp"

#include <algorithm>

#include "epar/retrieval.hpp"

namespace epar {

EparModel::EparModel(const Config& cfg, const Vocabulary& vocab) : cfg_(cfg), vocab_(&vocab) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    encoder = Encoder(params, cfg, vocab, rng);
    explorer = DocumentExplorer(params, cfg, rng);
    proposer = AnswerProposer(params, cfg, rng);
    assembler = EvidenceAssembler(params, cfg, rng);
    if (cfg.reranker) reranker = Reranker(params, cfg, rng);
}

std::vector<std::vector<std::size_t>> chain_documents(const ReasoningTree& tree) {
    std::vector<std::vector<std::size_t>> out;
    for (const auto& c : tree.chains) out.push_back(c.docs);
    return out;
}

std::vector<std::size_t> EparModel::retrieve(const QueryInstance& q) const {
    if (cfg_.use_tfidf) return two_hop_select(q, cfg_.n_prime);
    std::vector<std::size_t> all(q.documents.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
}

ChainInput EparModel::chain_input(const EncodedInstance& enc, const std::vector<std::size_t>& chain) const {
    if (chain.empty()) throw ContractError("chain_input: empty chain");
    ChainInput in;
    in.leaf = enc.H[chain.back()];
    if (chain.size() > 1) {
        std::vector<Tensor> anc;
        for (std::size_t i = 0; i + 1 < chain.size(); ++i) anc.push_back(enc.H[chain[i]]);
        in.ancestors = anc.size() == 1 ? anc.front() : concat(anc, 0);
    }
    in.u_s = enc.u_s;
    in.u_b = enc.u_b;
    in.candidates = enc.candidate_matrix();
    return in;
}

AssembledContext EparModel::sentences_for(const QueryInstance& q, const std::vector<std::vector<std::size_t>>& chains,
                                          const std::vector<std::size_t>& proposals, SentenceProvider provider) const {
    switch (provider) {
        case SentenceProvider::Lead1: return lead_sentences(q, chains);
        case SentenceProvider::FullDoc: return full_documents(q, chains);
        case SentenceProvider::Proposer: break;
    }
    return extract_key_sentences(q, chains, proposals);
}

Inference EparModel::infer(const QueryInstance& q) const { return infer(q, cfg_.sentence_provider); }

Inference EparModel::infer(const QueryInstance& q, SentenceProvider provider) const {
    NoGradGuard no_grad;
    if (q.candidates.empty()) throw ContractError("infer: instance " + q.instance_id + " has no candidates");
    Inference r;
    const ForwardMode eval = ForwardMode::eval();
    EncodedInstance enc = encoder.encode(q, eval);
    r.retrieved = retrieve(q);
    ExplorerInput in = ExplorerInput::subset(enc, r.retrieved);
    const std::size_t T = std::min(cfg_.hops, in.size());
    r.tree = explorer.build_tree(in, T, cfg_.tree_width);
    auto chains = chain_documents(r.tree);

    std::vector<std::size_t> picks;
    std::vector<ChainInput> inputs;
    for (const auto& c : chains) {
        inputs.push_back(chain_input(enc, c));
        r.proposals.push_back(proposer.propose(inputs.back()));
        picks.push_back(r.proposals.back().best);
        Tensor p = softmax_lastdim(r.proposals.back().scores);
        r.chain_probs.emplace_back(p.data().begin(), p.data().end());
    }
    r.single_chain = picks.front();
    r.avg_vote = vote(r.chain_probs, VoteMode::Avg);
    r.max_vote = vote(r.chain_probs, VoteMode::Max);
    if (reranker) {
        Tensor C = enc.candidate_matrix();
        std::vector<Tensor> proposed;
        for (std::size_t p : picks) proposed.push_back(row(C, p));
        r.reranked = picks[reranker->rerank(inputs, proposed).best_chain];
    }

    r.context = sentences_for(q, chains, picks, provider);
    r.final = assembler.assemble_predict(gather_context(enc, r.context), enc.U_sub, enc.U_bod, enc.candidate_matrix());
    switch (cfg_.aggregation) {
        case Aggregation::Assembler: r.prediction = r.final.best; break;
        case Aggregation::SingleChain: r.prediction = r.single_chain; break;
        case Aggregation::AvgVote: r.prediction = r.avg_vote; break;
        case Aggregation::MaxVote: r.prediction = r.max_vote; break;
    }
    return r;
}

}  // namespace epar
