#include <random>
#include <sstream>

#include "doctest.h"
#include "gnf/trainer.hpp"

using namespace gnf;

namespace {

std::mt19937_64 g_rng(808);

BaseSeq periodic_seq(size_t n) {
    BaseSeq s;
    for (size_t i = 0; i < n; ++i) s.bases.push_back(uint8_t(i % 4));  // ACGT ACGT ...
    return s;
}

BaseSeq random_seq(size_t n, uint64_t seed) {
    std::mt19937_64 rng(seed);
    BaseSeq s;
    for (size_t i = 0; i < n; ++i) s.bases.push_back(uint8_t(rng() % 4));
    return s;
}

}  // namespace

TEST_CASE("make_examples counting oracle") {
    ModelConfig cfg = ModelConfig::toy(2, 4);  // context 64, ngram 2
    for (size_t k : {1, 2, 5, 40}) {
        std::vector<BaseSeq> seqs{random_seq(64 + 2 * k, k)};
        CHECK(make_examples(seqs, cfg).size() == k);
    }
    std::vector<BaseSeq> exact{random_seq(64, 1)};
    CHECK(make_examples(exact, cfg).empty());  // no target token fits
    std::vector<BaseSeq> both{random_seq(64, 1), random_seq(70, 2)};
    CHECK(make_examples(both, cfg).size() == 3);  // short one skipped
    // stride in tokens
    std::vector<BaseSeq> strided{random_seq(64 + 20, 3)};
    CHECK(make_examples(strided, cfg, 5).size() == 2);  // offsets 0 and 10
}

TEST_CASE("evaluate_bpb of the untrained (uniform) model is exactly 2 bits per base") {
    ModelConfig cfg = ModelConfig::toy(2, 4);
    Model m(cfg, 1);
    std::vector<BaseSeq> seqs{random_seq(200, 5)};
    auto ex = make_examples(seqs, cfg);
    // zero-init head -> uniform over 16 tokens -> 4 bits per 2-base token
    CHECK(evaluate_bpb(m, ex) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("zero learning rate leaves parameters bitwise unchanged") {
    ModelConfig cfg = ModelConfig::toy(2, 4);
    Model m(cfg, 7);
    std::vector<BaseSeq> seqs{random_seq(400, 9)};
    auto ex = make_examples(seqs, cfg);
    std::vector<std::vector<double>> before;
    for (const auto& p : m.params()) before.push_back(p.v());
    TrainConfig tc;
    tc.lr = 0.0;
    tc.epochs = 1;
    tc.batch_size = 8;
    train(m, ex, ex, tc);
    for (size_t i = 0; i < m.params().size(); ++i) CHECK(m.params()[i].v() == before[i]);
}

TEST_CASE("training overfits a periodic sequence and tracks the best checkpoint") {
    ModelConfig cfg = ModelConfig::toy(2, 4);
    cfg.dropout_p = 0.0;
    Model m(cfg, 3);
    std::vector<BaseSeq> seqs{periodic_seq(1000)};
    auto ex = make_examples(seqs, cfg);
    auto val = make_examples(seqs, cfg, 7);
    TrainConfig tc;
    tc.epochs = 12;
    tc.batch_size = 16;
    tc.seed = 5;
    std::ostringstream log;
    tc.log = &log;
    auto result = train(m, ex, val, tc);
    CHECK(result.best_val_bpb < 0.1);  // down from 2.0
    CHECK(result.best_val_bpb <= result.val_history.back() + 1e-12);
    for (double v : result.val_history) CHECK(result.best_val_bpb <= v + 1e-12);
    // the model was left at its best-validation weights
    CHECK(evaluate_bpb(m, val) == doctest::Approx(result.best_val_bpb).epsilon(1e-9));
    // history log is one JSON line per eval
    size_t lines = 0;
    std::string line;
    std::istringstream in(log.str());
    while (std::getline(in, line))
        if (!line.empty()) ++lines;
    CHECK(lines == result.val_history.size());
    // checkpoint round trips into an equally good model
    Model best = Model::load_checkpoint(result.best_checkpoint);
    CHECK(evaluate_bpb(best, val) == doctest::Approx(result.best_val_bpb).epsilon(1e-4));
}

TEST_CASE("same seed reproduces the identical training run") {
    ModelConfig cfg = ModelConfig::toy(2, 4);
    std::vector<BaseSeq> seqs{random_seq(600, 13)};
    auto ex = make_examples(seqs, cfg);
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 8;
    tc.seed = 77;
    Model a(cfg, 11), b(cfg, 11);
    auto ra = train(a, ex, ex, tc);
    auto rb = train(b, ex, ex, tc);
    CHECK(ra.val_history == rb.val_history);
    CHECK(ra.best_checkpoint == rb.best_checkpoint);
}

TEST_CASE("loss decreases over the first steps on a fixed tiny batch") {
    ModelConfig cfg = ModelConfig::toy(2, 4);
    cfg.dropout_p = 0.0;
    Model m(cfg, 19);
    std::vector<BaseSeq> seqs{periodic_seq(200)};
    auto ex = make_examples(seqs, cfg);
    std::vector<Example> batch(ex.begin(), ex.begin() + std::min<size_t>(8, ex.size()));
    double first = evaluate_bpb(m, batch);
    TrainConfig tc;
    tc.epochs = 50;  // 1 step per epoch at this batch size
    tc.batch_size = batch.size();
    tc.eval_every = 1000;  // skip intermediate validation
    train(m, batch, batch, tc);
    CHECK(evaluate_bpb(m, batch) < first);
}

TEST_CASE("hybrid training doubles the effective batch and still learns") {
    ModelConfig cfg = ModelConfig::toy(2, 4);
    cfg.dropout_p = 0.0;
    Model m(cfg, 23);
    std::vector<BaseSeq> a{periodic_seq(400)};
    std::vector<BaseSeq> b{periodic_seq(401)};
    auto ex_a = make_examples(a, cfg);
    auto ex_b = make_examples(b, cfg);
    TrainConfig tc;
    tc.epochs = 8;
    tc.batch_size = 8;
    tc.lr = 0.002;
    auto result = hybrid_train(m, ex_a, ex_b, ex_a, tc);
    CHECK(result.best_val_bpb < 0.5);
    CHECK(evaluate_bpb(m, ex_b) < 0.5);  // both sources served
}

TEST_CASE("training aborts with a clear error when not enough data for one batch") {
    ModelConfig cfg = ModelConfig::toy(2, 4);
    Model m(cfg, 2);
    std::vector<BaseSeq> seqs{random_seq(70, 1)};
    auto ex = make_examples(seqs, cfg);  // 3 examples
    TrainConfig tc;
    tc.batch_size = 64;
    CHECK_THROWS_AS(train(m, ex, ex, tc), TooShort);
}
