#include <doctest.h>

#include <sstream>

#include "change/rng.hpp"
#include "change/vocab.hpp"

using namespace change;

TEST_CASE("empty inputs give exactly the reserved tokens") {
    auto v = Vocabulary::build({}, VariationGraph{});
    CHECK(v.size() == kNumReserved);
    for (int i = 0; i < kNumReserved; ++i) {
        CHECK(v.token(i) == kReservedTokens[static_cast<std::size_t>(i)]);
        CHECK(v.id_of(kReservedTokens[static_cast<std::size_t>(i)]) == i);
    }
}

TEST_CASE("corpus characters are present") {
    auto v = Vocabulary::build({"微信"}, VariationGraph{});
    CHECK(v.id_of("微") >= kNumReserved);
    CHECK(v.id_of("信") >= kNumReserved);
    CHECK(v.size() == kNumReserved + 2);
}

TEST_CASE("graph syllables become single atomic tokens") {
    VariationGraph g;
    g.add_triple("微", Relation::CharToPinyin, "wei1");
    auto v = Vocabulary::build({}, g);
    // oracle: scan graph CTY tails for syllable membership
    for (const auto& t : g.triples()) {
        if (t.rel == Relation::CharToPinyin) {
            const std::string& syl = is_pinyin_syllable(t.a) ? t.a : t.b;
            CHECK(v.id_of(syl) >= kNumReserved);
        }
    }
    auto seq = v.encode("wei1");
    CHECK(seq.size() == 1);
    CHECK(seq.ids[0] == v.id_of("wei1"));
}

TEST_CASE("encode/decode round-trips covered text") {
    auto v = Vocabulary::build({"您有筷递"}, VariationGraph{});
    auto seq = v.encode("您有筷递");
    CHECK(seq.size() == 4);
    for (auto tag : seq.tags) CHECK(tag == SegTag::RawText);
    CHECK(v.decode(seq.ids) == "您有筷递");
}

TEST_CASE("unknown characters map to [UNK]") {
    auto v = Vocabulary::build({"微"}, VariationGraph{});
    auto seq = v.encode("微☃");
    REQUIRE(seq.size() == 2);
    CHECK(seq.ids[0] == v.id_of("微"));
    CHECK(seq.ids[1] == kUnkId);
}

TEST_CASE("decode rejects out-of-range ids") {
    auto v = Vocabulary::build({"微"}, VariationGraph{});
    CHECK_THROWS_AS(v.decode({v.size()}), DataError);
    CHECK_THROWS_AS(v.decode({-1}), DataError);
}

TEST_CASE("round-trip identity over random covered strings") {
    VariationGraph g;
    g.add_triple("微", Relation::CharToPinyin, "wei1");
    g.add_triple("薇", Relation::CharToPinyin, "wei1");
    std::vector<std::string> corpus = {"微信加好友", "块快筷递您有", "超时未取我的"};
    auto v = Vocabulary::build(corpus, g);

    std::vector<std::string> pool;
    for (const auto& line : corpus) {
        for (int id = kNumReserved; id < v.size(); ++id) pool.push_back(v.token(id));
        (void)line;
    }
    Rng rng = make_rng(42);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::uniform_int_distribution<int> len(0, 12);
    for (int trial = 0; trial < 1000; ++trial) {
        std::string text;
        int n = len(rng);
        for (int i = 0; i < n; ++i) text += pool[pick(rng)];
        auto seq = v.encode(text);
        CHECK(v.decode(seq.ids) == text);
        // no [UNK] on covered text
        for (int id : seq.ids) CHECK(id != kUnkId);
    }
}

TEST_CASE("stable ids: rebuilding from the same inputs matches") {
    VariationGraph g;
    g.add_triple("微", Relation::Pinyin, "薇");
    std::vector<std::string> corpus = {"微信", "加好友"};
    auto a = Vocabulary::build(corpus, g);
    auto b = Vocabulary::build(corpus, g);
    CHECK(a == b);
}

TEST_CASE("vocabulary file round-trip") {
    VariationGraph g;
    g.add_triple("微", Relation::CharToPinyin, "wei1");
    auto v = Vocabulary::build({"微信"}, g);
    std::ostringstream out;
    v.save(out);
    std::istringstream in(out.str());
    auto v2 = Vocabulary::load(in);
    CHECK(v == v2);
}

TEST_CASE("make_input wraps text with specials") {
    auto v = Vocabulary::build({"微信"}, VariationGraph{});
    auto seq = make_input(v, "微信");
    REQUIRE(seq.size() == 4);
    CHECK(seq.ids.front() == kClsId);
    CHECK(seq.ids.back() == kSepId);
    CHECK(seq.tags.front() == SegTag::Special);
    CHECK(seq.tags[1] == SegTag::RawText);

    auto pair = make_pair_input(v, "微", "信");
    REQUIRE(pair.size() == 5);
    CHECK(pair.ids[0] == kClsId);
    CHECK(pair.ids[2] == kSepId);
    CHECK(pair.ids[4] == kSepId);
}

TEST_CASE("marker ids map to relations") {
    CHECK(marker_open_id(Relation::Pinyin) == kPinOpenId);
    CHECK(marker_close_id(Relation::Pinyin) == kPinCloseId);
    CHECK(marker_open_id(Relation::Visual) == kVisOpenId);
    CHECK(marker_open_id(Relation::CharToPinyin) == kCtyOpenId);
    CHECK(relation_of_marker(kVisCloseId) == Relation::Visual);
    CHECK(is_marker_open_id(kCtyOpenId));
    CHECK(!is_marker_open_id(kCtyCloseId));
}
