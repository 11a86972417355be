// Command-line surface for the document-coherent two-pass NMT toolkit:
// corpus preparation, reward-teacher training, NMT training, translation,
// evaluation, and the balance-factor sweep.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dcnmt/config.hpp"
#include "dcnmt/corpus.hpp"
#include "dcnmt/decode.hpp"
#include "dcnmt/eval.hpp"
#include "dcnmt/teacher.hpp"
#include "dcnmt/training.hpp"
#include "dcnmt/transformer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

dcnmt::ModelConfig model_config_from(const dcnmt::Config& cfg, std::size_t src_vocab,
                                     std::size_t tgt_vocab) {
    dcnmt::ModelConfig m;
    m.src_vocab = src_vocab;
    m.tgt_vocab = tgt_vocab;
    m.d_model = std::size_t(cfg.integer("d_model", 64));
    m.n_heads = std::size_t(cfg.integer("n_heads", 4));
    m.d_ff = std::size_t(cfg.integer("d_ff", 128));
    m.n_enc_layers = std::size_t(cfg.integer("n_enc_layers", 2));
    m.n_dec_layers = std::size_t(cfg.integer("n_dec_layers", 2));
    m.max_len = std::size_t(cfg.integer("max_len", 64));
    m.dropout_keep = cfg.num("dropout_keep", 1.0);
    return m;
}

dcnmt::TrainConfig train_config_from(const dcnmt::Config& cfg) {
    dcnmt::TrainConfig t;
    t.mode = dcnmt::parse_mode(cfg.str("mode", "two-pass"));
    t.lambda1 = cfg.num("lambda1", 0.85);
    t.lambda2 = cfg.num("lambda2", 0.80);
    t.beta = cfg.num("beta", 1.0);
    t.lr = cfg.num("lr", 1e-3);
    t.seed = std::uint64_t(cfg.integer("seed", 0));
    t.epochs = std::size_t(cfg.integer("epochs", 1));
    t.max_steps = std::size_t(cfg.integer("max_steps", 0));
    t.warm_steps = std::size_t(cfg.integer("warm_steps", 0));
    t.shuffle = dcnmt::parse_shuffle(cfg.str("shuffle", "talk-shuffle"));
    t.beam_size = std::size_t(cfg.integer("beam_size", 1));
    return t;
}

json report_json(const dcnmt::StepReport& r) {
    return json{{"step", r.step},
                {"epoch", r.epoch},
                {"L_mle1", r.l_mle1},
                {"L_mle2", r.l_mle2},
                {"L_rl1", r.l_rl1},
                {"L_rl2", r.l_rl2},
                {"L", r.combined},
                {"r_sampled1", r.r_sampled1},
                {"r_greedy1", r.r_greedy1},
                {"R1", r.advantage1},
                {"r_sampled2", r.r_sampled2},
                {"r_greedy2", r.r_greedy2},
                {"R2", r.advantage2},
                {"talk_sentences", r.talk_sentences}};
}

std::vector<dcnmt::TalkText> read_talk_text(const std::string& path) {
    auto raw = dcnmt::read_raw_talks(path);
    std::vector<dcnmt::TalkText> out;
    for (auto& t : raw) out.push_back(std::move(t));
    return out;
}

int cmd_build_vocab(const std::string& src, const std::string& out, long size) {
    auto talks = dcnmt::read_raw_talks(src);
    std::vector<std::vector<std::string>> sentences;
    for (const auto& t : talks)
        for (const auto& s : t) sentences.push_back(s);
    auto vocab = dcnmt::build_vocab(sentences, std::size_t(size));
    vocab.save(out);
    std::cout << "vocabulary: " << vocab.size() << " entries -> " << out << "\n";
    return 0;
}

int cmd_make_synth(const std::string& out_prefix, long talks, long sentences,
                   long min_sentences, long vocab_size, long seed, long dev_talks) {
    auto synth = dcnmt::make_synthetic_discourse_corpus(
        std::size_t(talks + dev_talks), std::size_t(sentences), std::size_t(vocab_size),
        std::uint64_t(seed), std::size_t(min_sentences));
    auto dump = [&](const dcnmt::Corpus& c, const std::string& suffix) {
        std::vector<std::vector<dcnmt::TokenIds>> src, tgt;
        for (const auto& t : c) {
            src.push_back(t.source_sentences);
            tgt.push_back(t.target_sentences);
        }
        dcnmt::write_talks(out_prefix + suffix + ".src", src, synth.src_vocab);
        dcnmt::write_talks(out_prefix + suffix + ".tgt", tgt, synth.tgt_vocab);
    };
    dcnmt::Corpus train(synth.talks.begin(), synth.talks.end() - dev_talks);
    dcnmt::Corpus dev(synth.talks.end() - dev_talks, synth.talks.end());
    dump(train, ".train");
    if (dev_talks > 0) dump(dev, ".dev");
    synth.src_vocab.save(out_prefix + ".vocab.src");
    synth.tgt_vocab.save(out_prefix + ".vocab.tgt");
    std::cout << "synthetic corpus: " << train.size() << " train talks, " << dev.size()
              << " dev talks -> " << out_prefix << ".*\n";
    return 0;
}

int cmd_train_teacher(const dcnmt::Config& cfg, const std::string& out) {
    auto vocab = dcnmt::Vocabulary::load(cfg.require("vocab_tgt"));
    auto raw = dcnmt::read_raw_talks(cfg.require("train_tgt"));
    std::vector<std::vector<dcnmt::TokenIds>> docs;
    for (const auto& talk : raw) {
        std::vector<dcnmt::TokenIds> doc;
        for (const auto& sent : talk) {
            dcnmt::TokenIds ids;
            for (const auto& tok : sent) ids.push_back(vocab.lookup(tok));
            doc.push_back(std::move(ids));
        }
        docs.push_back(std::move(doc));
    }
    dcnmt::TeacherConfig tcfg;
    tcfg.vocab = vocab.size();
    tcfg.embed_dim = std::size_t(cfg.integer("teacher_embed_dim", 100));
    tcfg.hidden_dim = std::size_t(cfg.integer("teacher_hidden_dim", 100));
    tcfg.dropout_keep = cfg.num("teacher_dropout_keep", 0.3);
    auto teacher = dcnmt::train_teacher(docs, tcfg, std::size_t(cfg.integer("epochs", 3)),
                                        cfg.num("lr", 1e-3),
                                        std::uint64_t(cfg.integer("seed", 0)));
    teacher.save(out, vocab.hash());
    std::cout << "teacher trained on " << docs.size() << " documents -> " << out << "\n";
    return 0;
}

int cmd_train(const dcnmt::Config& cfg) {
    auto src_vocab = dcnmt::Vocabulary::load(cfg.require("vocab_src"));
    auto tgt_vocab = dcnmt::Vocabulary::load(cfg.require("vocab_tgt"));
    auto corpus = dcnmt::load_parallel_corpus(cfg.require("train_src"), cfg.require("train_tgt"),
                                              src_vocab, tgt_vocab);
    corpus = dcnmt::split_corpus(corpus, std::size_t(cfg.integer("max_talk_sentences", 16)));
    dcnmt::Corpus dev;
    if (cfg.has("dev_src"))
        dev = dcnmt::split_corpus(
            dcnmt::load_parallel_corpus(cfg.require("dev_src"), cfg.require("dev_tgt"),
                                        src_vocab, tgt_vocab),
            std::size_t(cfg.integer("max_talk_sentences", 16)));

    auto tcfg = train_config_from(cfg);
    auto mcfg = model_config_from(cfg, src_vocab.size(), tgt_vocab.size());

    std::optional<dcnmt::RewardTeacher> teacher;
    if (dcnmt::mode_uses_teacher_reward(tcfg.mode))
        teacher = dcnmt::RewardTeacher::load(cfg.require("teacher_ckpt"), tgt_vocab.hash());

    dcnmt::NmtModel model(mcfg, tcfg.seed);
    if (cfg.has("init_ckpt")) model = dcnmt::NmtModel::load(cfg.str("init_ckpt"));

    std::string out_dir = cfg.str("out_dir", ".");
    fs::create_directories(out_dir);
    auto on_epoch = [&](std::size_t e) {
        model.save(out_dir + "/model_epoch" + std::to_string(e) + ".ckpt");
    };
    auto result = dcnmt::train(model, corpus, tcfg, teacher ? &*teacher : nullptr,
                               dev.empty() ? nullptr : &dev, on_epoch);

    std::string ckpt = cfg.str("model_ckpt", out_dir + "/model.ckpt");
    model.save(ckpt);
    std::ofstream hist(out_dir + "/history.jsonl");
    for (const auto& r : result.history) hist << report_json(r).dump() << "\n";
    for (std::size_t e = 0; e < result.dev_losses.size(); ++e)
        std::cout << "epoch " << e << " dev loss/token " << result.dev_losses[e] << "\n";
    if (!dev.empty()) {
        auto m = dcnmt::evaluate_dev(model, dev, dcnmt::mode_uses_second_pass(tcfg.mode),
                                     tcfg.beam_size);
        std::cout << "dev BLEU " << m.bleu << " BLEU_doc " << m.bleu_doc << "\n";
    }
    std::cout << "model -> " << ckpt << "\n";
    return 0;
}

int cmd_translate(const dcnmt::Config& cfg, const std::string& model_path,
                  const std::string& src, const std::string& out, long beam_size,
                  const std::string& pass) {
    auto src_vocab = dcnmt::Vocabulary::load(cfg.require("vocab_src"));
    auto tgt_vocab = dcnmt::Vocabulary::load(cfg.require("vocab_tgt"));
    auto model = dcnmt::NmtModel::load(model_path);
    auto corpus = dcnmt::split_corpus(dcnmt::load_source_corpus(src, src_vocab),
                                      std::size_t(cfg.integer("max_talk_sentences", 16)));
    auto hyp = dcnmt::translate_corpus(model, corpus, pass != "first",
                                       std::size_t(beam_size));
    dcnmt::write_talks(out, hyp, tgt_vocab);
    std::cout << "translated " << corpus.size() << " talks -> " << out << "\n";
    return 0;
}

int cmd_evaluate(const std::string& hyp_path, const std::string& ref_path,
                 const std::string& vectors_path, const std::string& out_path) {
    auto hyp = read_talk_text(hyp_path);
    auto ref = read_talk_text(ref_path);
    if (hyp.size() != ref.size())
        throw std::runtime_error("evaluate: hypothesis/reference talk counts differ");
    std::optional<dcnmt::WordVectors> vectors;
    if (!vectors_path.empty()) vectors = dcnmt::WordVectors::load(vectors_path);
    auto rep = dcnmt::evaluate_talks(hyp, ref, vectors ? &*vectors : nullptr);
    std::cout << rep.to_text();
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << rep.to_text();
        std::ofstream rec(out_path + ".jsonl");
        json j{{"BLEU", rep.bleu}, {"BLEU_doc", rep.bleu_doc}};
        if (rep.has_coherence) j["coherence"] = rep.coherence;
        for (const auto& [tok, c] : rep.conjunction_counts) j["conj_" + tok] = c;
        rec << j.dump() << "\n";
    }
    return 0;
}

int cmd_train_vectors(const std::string& src, const std::string& out, long seed, long dim,
                      long window, long epochs) {
    auto talks = dcnmt::read_raw_talks(src);
    std::vector<dcnmt::Sentence> sentences;
    for (const auto& t : talks)
        for (const auto& s : t) sentences.push_back(s);
    auto wv = dcnmt::train_word_vectors(sentences, std::size_t(dim), std::size_t(window),
                                        std::size_t(epochs), std::uint64_t(seed));
    wv.save(out);
    std::cout << "word vectors: " << wv.table.size() << " x " << wv.dim << " -> " << out
              << "\n";
    return 0;
}

int cmd_sweep(const dcnmt::Config& cfg, const std::string& out_path) {
    auto src_vocab = dcnmt::Vocabulary::load(cfg.require("vocab_src"));
    auto tgt_vocab = dcnmt::Vocabulary::load(cfg.require("vocab_tgt"));
    auto corpus = dcnmt::split_corpus(
        dcnmt::load_parallel_corpus(cfg.require("train_src"), cfg.require("train_tgt"),
                                    src_vocab, tgt_vocab));
    auto dev = dcnmt::split_corpus(
        dcnmt::load_parallel_corpus(cfg.require("dev_src"), cfg.require("dev_tgt"), src_vocab,
                                    tgt_vocab));
    auto teacher = dcnmt::RewardTeacher::load(cfg.require("teacher_ckpt"), tgt_vocab.hash());
    auto tcfg = train_config_from(cfg);
    auto mcfg = model_config_from(cfg, src_vocab.size(), tgt_vocab.size());
    auto rows = dcnmt::lambda_sweep(mcfg, corpus, dev, tcfg, teacher);
    std::ostringstream table;
    table << "system\tlambda1\tlambda2\tBLEU\tBLEU_doc\n";
    for (const auto& r : rows)
        table << r.system << "\t" << r.lambda1 << "\t" << r.lambda2 << "\t" << r.bleu << "\t"
              << r.bleu_doc << "\n";
    std::cout << table.str();
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        out << table.str();
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"document-coherent two-pass neural machine translation"};
    app.require_subcommand(1);

    std::string config_path, src, ref, hyp, vectors, out, model_path, pass = "second";
    long size = 20000, talks = 2000, sentences = 16, min_sentences = 4, vocab_size = 40;
    long seed = 0, dev_talks = 0, beam_size = 1, dim = 100, window = 2, epochs = 3;
    std::string mode, lambda1, lambda2, beta, seed_override, beam_override;

    auto* bv = app.add_subcommand("build-vocab", "build a frequency-cutoff vocabulary");
    bv->add_option("--src", src, "tokenized corpus file")->required();
    bv->add_option("--out", out, "vocabulary file")->required();
    bv->add_option("--size", size, "vocabulary size limit");

    auto* ms = app.add_subcommand("make-synth", "generate the synthetic discourse corpus");
    ms->add_option("--out", out, "output path prefix")->required();
    ms->add_option("--talks", talks, "number of training talks");
    ms->add_option("--sentences", sentences, "max sentences per talk");
    ms->add_option("--min-sentences", min_sentences, "min sentences per talk");
    ms->add_option("--vocab-size", vocab_size, "content word types");
    ms->add_option("--seed", seed, "generator seed");
    ms->add_option("--dev-talks", dev_talks, "held-out talks");

    auto* tt = app.add_subcommand("train-teacher", "train the absolute-order reward teacher");
    tt->add_option("--config", config_path, "flat key-value config")->required();
    tt->add_option("--out", out, "teacher checkpoint path")->required();
    tt->add_option("--seed", seed_override, "seed override");

    auto* tr = app.add_subcommand("train", "train an NMT system variant");
    tr->add_option("--config", config_path, "flat key-value config")->required();
    tr->add_option("--mode", mode, "system variant override");
    tr->add_option("--lambda1", lambda1, "balance factor override");
    tr->add_option("--lambda2", lambda2, "balance factor override");
    tr->add_option("--beta", beta, "BLEU reward weight override");
    tr->add_option("--seed", seed_override, "seed override");
    tr->add_option("--beam-size", beam_override, "beam size override");

    auto* tl = app.add_subcommand("translate", "translate a source corpus");
    tl->add_option("--config", config_path, "flat key-value config")->required();
    tl->add_option("--model", model_path, "model checkpoint")->required();
    tl->add_option("--src", src, "source corpus file")->required();
    tl->add_option("--out", out, "output file")->required();
    tl->add_option("--beam-size", beam_size, "beam size (1 = greedy)");
    tl->add_option("--pass", pass, "first | second");

    auto* ev = app.add_subcommand("evaluate", "score translations against references");
    ev->add_option("--hyp", hyp, "hypothesis talks file")->required();
    ev->add_option("--ref", ref, "reference talks file")->required();
    ev->add_option("--vectors", vectors, "word vector file for coherence");
    ev->add_option("--out", out, "report path (text + .jsonl records)");

    auto* tv = app.add_subcommand("train-vectors", "train skip-gram word vectors");
    tv->add_option("--src", src, "tokenized monolingual corpus")->required();
    tv->add_option("--out", out, "vector file")->required();
    tv->add_option("--seed", seed, "seed");
    tv->add_option("--dim", dim, "vector dimension");
    tv->add_option("--window", window, "context window");
    tv->add_option("--epochs", epochs, "epochs");

    auto* sw = app.add_subcommand("sweep", "balance-factor sweep (lambda1 then lambda2)");
    sw->add_option("--config", config_path, "flat key-value config")->required();
    sw->add_option("--out", out, "table output path");

    CLI11_PARSE(app, argc, argv);

    try {
        dcnmt::Config cfg;
        if (!config_path.empty()) cfg = dcnmt::Config::load(config_path);
        if (!mode.empty()) cfg.set("mode", mode);
        if (!lambda1.empty()) cfg.set("lambda1", lambda1);
        if (!lambda2.empty()) cfg.set("lambda2", lambda2);
        if (!beta.empty()) cfg.set("beta", beta);
        if (!seed_override.empty()) cfg.set("seed", seed_override);
        if (!beam_override.empty()) cfg.set("beam_size", beam_override);

        if (bv->parsed()) return cmd_build_vocab(src, out, size);
        if (ms->parsed())
            return cmd_make_synth(out, talks, sentences, min_sentences, vocab_size, seed,
                                  dev_talks);
        if (tt->parsed()) return cmd_train_teacher(cfg, out);
        if (tr->parsed()) return cmd_train(cfg);
        if (tl->parsed()) return cmd_translate(cfg, model_path, src, out, beam_size, pass);
        if (ev->parsed()) return cmd_evaluate(hyp, ref, vectors, out);
        if (tv->parsed()) return cmd_train_vectors(src, out, seed, dim, window, epochs);
        if (sw->parsed()) return cmd_sweep(cfg, out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
