#include <random>
#include <set>

#include "doctest.h"
#include "gnf/seq.hpp"

using namespace gnf;

namespace {

BaseSeq random_seq(size_t n, uint64_t seed, bool with_n = false) {
    std::mt19937_64 rng(seed);
    BaseSeq s;
    for (size_t i = 0; i < n; ++i)
        s.bases.push_back(static_cast<uint8_t>(rng() % (with_n ? 5 : 4)));
    return s;
}

}  // namespace

TEST_CASE("base mapping is the fixed project order") {
    CHECK(char_to_base('A') == 0);
    CHECK(char_to_base('C') == 1);
    CHECK(char_to_base('G') == 2);
    CHECK(char_to_base('T') == 3);
    CHECK(char_to_base('N') == 4);
    CHECK(char_to_base('a') == 0);
    CHECK(char_to_base('n') == 4);
    CHECK(char_to_base('X') == 0xff);
    for (uint8_t b = 0; b < 5; ++b) CHECK(char_to_base(base_to_char(b)) == b);
}

TEST_CASE("fasta parse handles case, wrapping and multiple records") {
    auto recs = parse_fasta(">one desc\nacgt\nACGT\n>two\nNNga\n");
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].header == "one desc");
    CHECK(recs[0].seq.to_string() == "ACGTACGT");
    CHECK(recs[1].seq.to_string() == "NNGA");
}

TEST_CASE("fasta writer wraps at 70 and round trips") {
    std::vector<FastaRecord> recs;
    FastaRecord r;
    r.header = "chr";
    r.seq = random_seq(173, 7, true);
    r.seq.id = "chr";
    recs.push_back(r);
    std::string text = write_fasta(recs);
    size_t longest = 0, cur = 0;
    for (char ch : text) {
        if (ch == '\n') {
            longest = std::max(longest, cur);
            cur = 0;
        } else {
            ++cur;
        }
    }
    CHECK(longest <= 70);
    auto back = parse_fasta(text);
    REQUIRE(back.size() == 1);
    CHECK(back[0].header == "chr");
    CHECK(back[0].seq.bases == r.seq.bases);
}

TEST_CASE("fasta parse errors") {
    CHECK_THROWS_AS(parse_fasta(""), EmptyFile);
    CHECK_THROWS_AS(parse_fasta(">x\nACGZ\n"), UnknownBase);
    try {
        parse_fasta(">x\nACG\nTZ\n");
    } catch (const UnknownBase& e) {
        CHECK(e.position == 4);  // base index within the record, newlines excluded
        CHECK(e.ch == 'Z');
    }
}

TEST_CASE("2-bit packing known-answer and round trip") {
    // A=00 C=01 G=10 T=11 big-endian within the byte
    BaseSeq s = BaseSeq::from_string("x", "ACGT");
    Bytes packed = pack_2bit(s);
    REQUIRE(packed.size() == 1);
    CHECK(packed[0] == 0b00011011);
    for (size_t n : {0, 1, 2, 3, 4, 5, 63, 64, 65}) {
        BaseSeq q = random_seq(n, n * 31 + 1);
        CHECK(unpack_2bit(pack_2bit(q), n).bases == q.bases);
    }
    BaseSeq with_n = BaseSeq::from_string("x", "ACNG");
    CHECK_THROWS_AS(pack_2bit(with_n), ContainsN);
    CHECK_THROWS_AS(unpack_2bit(packed, 9), LengthMismatch);
}

TEST_CASE("3-bit packing round trips all five symbols") {
    for (size_t n : {0, 1, 7, 8, 9, 100}) {
        BaseSeq q = random_seq(n, n + 77, true);
        CHECK(unpack_3bit(pack_3bit(q), n).bases == q.bases);
    }
    BaseSeq s = random_seq(8, 5, true);
    CHECK(pack_3bit(s).size() == 3);  // 24 bits
}

TEST_CASE("dataset split is deterministic, disjoint, and sized by ratios") {
    std::vector<FastaRecord> recs;
    for (int i = 0; i < 100; ++i) {
        FastaRecord r;
        r.header = "s" + std::to_string(i);
        r.seq = random_seq(10, i);
        recs.push_back(r);
    }
    auto a = split_dataset(recs, 0.8, 0.1, 0.1, 42);
    auto b = split_dataset(recs, 0.8, 0.1, 0.1, 42);
    CHECK(a.train.size() == 80);
    CHECK(a.val.size() == 10);
    CHECK(a.test.size() == 10);
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);
    std::set<std::string> seen;
    for (const auto* part : {&a.train, &a.val, &a.test})
        for (const auto& r : *part) CHECK(seen.insert(r.header).second);
    CHECK(seen.size() == 100);
    auto c = split_dataset(recs, 0.8, 0.1, 0.1, 43);
    CHECK(a.train != c.train);  // different seed shuffles differently
}

TEST_CASE("crc and sha are stable known-answer") {
    Bytes data{'a', 'b', 'c'};
    CHECK(crc32_of(data) == 0x352441c2);  // standard CRC-32 of "abc"
    auto h = sha256_of(data.data(), data.size());
    REQUIRE(h.size() == 32);
    CHECK(h[0] == 0xba);  // sha256("abc") = ba7816bf...
    CHECK(h[1] == 0x78);
    CHECK(h[31] == 0xad);
}
