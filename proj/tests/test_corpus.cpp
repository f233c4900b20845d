#include <doctest.h>

#include "distillstream/corpus.hpp"
#include "distillstream/errors.hpp"
#include "support.hpp"

using namespace distillstream;
using testing::TempDir;
using testing::write_file;

namespace {

MultimodalRecord make_record(std::string id, std::string text, std::size_t n_images, bool retweet = false,
                             std::size_t dim = 4) {
    MultimodalRecord r;
    r.id = std::move(id);
    r.text = std::move(text);
    r.is_retweet = retweet;
    r.created_at = 100;
    for (std::size_t i = 0; i < n_images; ++i) {
        std::vector<float> e(dim, 0.0f);
        e[i % dim] = 1.0f;
        r.images.push_back({r.id + "_" + std::to_string(i), e});
    }
    return r;
}

std::string line(const std::string& id, const std::string& emb = "[1,0,0,0]") {
    return R"({"id":")" + id + R"(","text":"this is a very good day","is_retweet":false,"created_at":5,)" +
           R"("images":[{"image_id":")" + id + R"(_0","embedding":)" + emb + "}]}\n";
}

}  // namespace

TEST_CASE("word counting uses maximal non-whitespace runs") {
    CHECK(word_count("") == 0);
    CHECK(word_count("   ") == 0);
    CHECK(word_count("nice day") == 2);
    CHECK(word_count("  a\tb\nc  d ") == 4);
    CHECK(word_count("don't-stop, now!") == 2);
}

TEST_CASE("normalize_word lowercases and strips ASCII punctuation") {
    CHECK(normalize_word("The,") == "the");
    CHECK(normalize_word("#Is!!") == "is");
    CHECK(normalize_word("caf\xc3\xa9") == "caf\xc3\xa9");
    CHECK(normalize_word("...") == "");
}

TEST_CASE("stopword ratio") {
    CHECK(stopword_ratio("") == 0.0);
    CHECK(stopword_ratio("this is a very good day") == doctest::Approx(4.0 / 6.0));
    CHECK(stopword_ratio("Katze Hund Baum Haus Auto") == 0.0);
}

TEST_CASE("admit examples") {
    const FilterPolicy policy;
    CHECK_FALSE(admit(make_record("a", "nice day", 1), policy));
    CHECK(admit(make_record("b", "this is a very good day", 1), policy));
    CHECK_FALSE(admit(make_record("c", "this is a very good day", 1, true), policy));
    CHECK_FALSE(admit(make_record("d", "this is a very good day", 0), policy));
    CHECK_FALSE(admit(make_record("e", "Katze Hund Baum Haus Auto Zug", 1), policy));
}

TEST_CASE("screen reports the first failing rule") {
    const FilterPolicy policy;
    CHECK(screen(make_record("a", "nice day", 0, true), policy) == Rejection::too_few_words);
    CHECK(screen(make_record("a", "this is a very good day", 0, true), policy) == Rejection::no_image);
    CHECK(screen(make_record("a", "this is a very good day", 1, true), policy) == Rejection::retweet);
    CHECK(screen(make_record("a", "uno dos tres cuatro cinco", 1), policy) == Rejection::not_english);
}

TEST_CASE("exactly five words is enough") {
    CHECK(admit(make_record("a", "the cat is on it", 1), FilterPolicy{}));
    CHECK_FALSE(admit(make_record("a", "the cat is on", 1), FilterPolicy{}));
}

TEST_CASE("neutral policy accepts every record") {
    FilterPolicy open{0, false, false, 0.0};
    CHECK(admit(make_record("a", "", 0, true), open));
    CHECK(admit(make_record("b", "x", 0, false), open));
    CHECK(admit(make_record("c", "uno dos tres cuatro cinco", 2, true), open));
}

TEST_CASE("pluggable language check replaces the stopword heuristic") {
    struct Never final : LanguageCheck {
        bool is_english(std::string_view) const override { return false; }
    } never;
    CHECK_FALSE(admit(make_record("a", "this is a very good day", 1), FilterPolicy{}, &never));
}

TEST_CASE("invalid filter policy") {
    CHECK_THROWS_AS(validate(FilterPolicy{0, true, true, 0.12}), ConfigError);
    CHECK_THROWS_AS(validate(FilterPolicy{5, true, true, 1.5}), ConfigError);
}

TEST_CASE("explode_pairs keeps image order and shares text") {
    const auto r = make_record("r", "t", 3);
    const auto pairs = explode_pairs(r);
    REQUIRE(pairs.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(pairs[i].text == "t");
        CHECK(pairs[i].image_pos == i);
        CHECK(pairs[i].image.image_id == r.images[i].image_id);
    }
    CHECK(explode_pairs(make_record("q", "t", 1)).size() == 1);
    CHECK(explode_pairs(make_record("q", "t", 2))[0].text == explode_pairs(make_record("q", "t", 2))[1].text);
}

TEST_CASE("sort_pairs orders by time, id, image position") {
    std::vector<TextImagePair> pairs = {{"b", "", 10, 1, {}}, {"b", "", 10, 0, {}}, {"a", "", 10, 2, {}},
                                        {"z", "", 5, 0, {}}};
    sort_pairs(pairs);
    CHECK(pairs[0].record_id == "z");
    CHECK(pairs[1].record_id == "a");
    CHECK(pairs[2].record_id == "b");
    CHECK(pairs[2].image_pos == 0);
    CHECK(pairs[3].image_pos == 1);
}

TEST_CASE("load_corpus reads valid lines in order") {
    TempDir dir;
    write_file(dir / "c.jsonl", line("r1") + line("r2") + line("r3"));
    CorpusStats stats;
    const auto records = load_corpus(dir / "c.jsonl", {4}, &stats);
    REQUIRE(records.size() == 3);
    CHECK(records[0].id == "r1");
    CHECK(records[2].id == "r3");
    CHECK(records[1].images[0].embedding == std::vector<float>{1, 0, 0, 0});
    CHECK(stats.records == 3);
    CHECK(stats.malformed == 0);
}

TEST_CASE("empty corpus yields no records") {
    TempDir dir;
    write_file(dir / "c.jsonl", "");
    CHECK(load_corpus(dir / "c.jsonl", {4}).empty());
}

TEST_CASE("wrong dimension aborts and names the line") {
    TempDir dir;
    write_file(dir / "c.jsonl", line("r1") + line("r2", "[1,0,0]"));
    CorpusOptions options{4, MalformedPolicy::skip, {}, {}};
    try {
        load_corpus(dir / "c.jsonl", options);
        FAIL("expected DimensionMismatch");
    } catch (const DimensionMismatch& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("malformed lines are skipped and counted, or abort") {
    TempDir dir;
    write_file(dir / "c.jsonl", line("r1") + "{not json\n" + R"({"id":"x"})" "\n" + line("r1") + "\n" +
                                    line("r2", "[1,0,0,NaN]") + line("r3"));
    CorpusStats stats;
    const auto records = load_corpus(dir / "c.jsonl", {4, MalformedPolicy::skip, {}, {}}, &stats);
    REQUIRE(records.size() == 2);
    CHECK(records[1].id == "r3");
    // NaN is not valid JSON either way, so line 6 fails to parse.
    CHECK(stats.malformed == 4);
    CHECK(stats.malformed_lines == std::vector<std::size_t>{2, 3, 4, 6});

    try {
        load_corpus(dir / "c.jsonl", {4, MalformedPolicy::abort, {}, {}});
        FAIL("expected RecordError");
    } catch (const RecordError& e) {
        CHECK(e.line() == 2);
    }
}

TEST_CASE("sidecar embeddings round-trip") {
    TempDir dir;
    std::vector<ImageItem> items = {{"a_0", {0.5f, -1.25f, 3.0f}}, {"b_0", {1e-8f, 0.0f, -0.0f}}};
    EmbeddingSidecar::write(dir / "e.emb", dir / "e.emb.idx", items, 3);
    const auto sidecar = EmbeddingSidecar::open(dir / "e.emb", dir / "e.emb.idx");
    CHECK(sidecar.count() == 2);
    CHECK(sidecar.dim() == 3);
    CHECK(sidecar.read("a_0") == items[0].embedding);
    CHECK(sidecar.read("b_0") == items[1].embedding);
    CHECK_THROWS_AS(sidecar.read("zzz"), LookupError);

    // Header bytes as specified: magic, then little-endian count and dim.
    const auto raw = testing::read_file(dir / "e.emb");
    REQUIRE(raw.size() == 12 + 2 * 3 * 4);
    CHECK(raw.substr(0, 4) == "EMB1");
    CHECK(static_cast<unsigned char>(raw[4]) == 2);
    CHECK(static_cast<unsigned char>(raw[8]) == 3);

    write_file(dir / "c.jsonl",
               R"({"id":"a","text":"this is a very good day","is_retweet":false,"created_at":1,"images":[{"image_id":"a_0","embedding_ref":true}]})"
               "\n");
    CorpusOptions options{3, MalformedPolicy::abort, dir / "e.emb", std::nullopt};
    const auto records = load_corpus(dir / "c.jsonl", options);
    REQUIRE(records.size() == 1);
    CHECK(records[0].images[0].embedding == items[0].embedding);
}

TEST_CASE("corpus write/read round-trip is exact") {
    TempDir dir;
    std::vector<MultimodalRecord> records = {make_record("a", "this is a very good day", 2),
                                             make_record("b", "x y", 0, true)};
    records[0].images[1].embedding = {0.1f, -0.2f, 1e-30f, 3.4e38f};
    write_corpus(dir / "c.jsonl", records);
    const auto back = load_corpus(dir / "c.jsonl", {4});
    REQUIRE(back.size() == 2);
    CHECK(back[0].images[1].embedding == records[0].images[1].embedding);
    CHECK(back[1].is_retweet);

    auto pairs = explode_pairs(records[0]);
    write_pairs(dir / "p.jsonl", pairs);
    const auto pairs_back = read_pairs(dir / "p.jsonl", 4);
    REQUIRE(pairs_back.size() == 2);
    CHECK(pairs_back[1].image.embedding == pairs[1].image.embedding);
    CHECK(pairs_back[1].image_pos == 1);
}

TEST_CASE("admitted set is a subset and pair count is the image sum") {
    std::mt19937_64 rng(3);
    std::vector<MultimodalRecord> corpus;
    const char* texts[] = {"nice day", "this is a very good day", "uno dos tres cuatro cinco", "it was the best of all"};
    for (int i = 0; i < 200; ++i) {
        corpus.push_back(make_record("r" + std::to_string(i), texts[rng() % 4], rng() % 4, rng() % 5 == 0));
    }
    std::size_t admitted = 0, images = 0, pairs = 0;
    for (const auto& r : corpus) {
        const bool first = admit(r, FilterPolicy{});
        CHECK(first == admit(r, FilterPolicy{}));
        if (first) {
            ++admitted;
            images += r.images.size();
            pairs += explode_pairs(r).size();
        }
    }
    CHECK(admitted <= corpus.size());
    CHECK(pairs == images);
}
