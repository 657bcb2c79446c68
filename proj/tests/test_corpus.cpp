#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "persim/corpus.hpp"
#include "persim/rng.hpp"
#include "support/oracles.hpp"

using namespace persim;

namespace {

std::vector<ProductItem> fixture_corpus() {
  return ingest_file(persim::testing::fixtures_dir() + "/corpus_50.jsonl");
}

ProductItem make_item(std::string id, std::string title, std::string domain,
                      std::string brand = "", std::string description = "",
                      std::vector<std::string> features = {}) {
  ProductItem item;
  item.item_id = std::move(id);
  item.title = std::move(title);
  item.domain = std::move(domain);
  item.brand = std::move(brand);
  item.description = std::move(description);
  item.features = std::move(features);
  return item;
}

// Random queries built from corpus vocabulary plus noise words.
std::vector<std::string> random_queries(const std::vector<ProductItem>& items,
                                        std::size_t count, std::uint64_t seed) {
  std::vector<std::string> vocabulary;
  for (const auto& item : items)
    for (Field f : kFieldOrder)
      for (auto& token : tokenize(field_text(item, f)))
        vocabulary.push_back(token);
  SplitMix64 rng(seed);
  std::vector<std::string> queries;
  for (std::size_t q = 0; q < count; ++q) {
    std::string query;
    std::size_t terms = 1 + rng.bounded(5);
    for (std::size_t t = 0; t < terms; ++t) {
      if (!query.empty()) query += " ";
      if (rng.bounded(6) == 0)
        query += "zzqx" + std::to_string(rng.bounded(4));  // guaranteed miss
      else
        query += vocabulary[rng.bounded(vocabulary.size())];
    }
    queries.push_back(query);
  }
  return queries;
}

}  // namespace

TEST_CASE("ingest: empty stream gives an empty corpus") {
  std::istringstream in("");
  CHECK(ingest(in).empty());
}

TEST_CASE("ingest: the five catalog domains are accepted") {
  std::istringstream in(
      R"({"item_id":"e1","title":"Widget","domain":"Electronics"})" "\n");
  auto items = ingest(in);
  REQUIRE(items.size() == 1);
  CHECK(items[0].domain == "Electronics");
}

TEST_CASE("ingest: an unknown domain is rejected by name") {
  std::istringstream in(
      R"({"item_id":"t1","title":"Bear","domain":"Toys"})" "\n");
  try {
    ingest(in);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("Toys") != std::string::npos);
  }
}

TEST_CASE("ingest: duplicate item_id is rejected by id, with line number") {
  std::string line =
      R"({"item_id":"d1","title":"Thing","domain":"Electronics"})" "\n";
  std::istringstream in(line + line);
  try {
    ingest(in);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("d1") != std::string::npos);
  }
}

TEST_CASE("ingest: malformed values carry line numbers") {
  std::istringstream in(
      R"({"item_id":"p1","title":"X","domain":"Electronics","price":-4})" "\n");
  CHECK_THROWS_AS(ingest(in), ParseError);
  std::istringstream in2("not json\n");
  try {
    ingest(in2);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 1);
  }
}

TEST_CASE("tokenize: ASCII lowering, splits, and non-ASCII passthrough") {
  CHECK(tokenize("Fragrance-Free Moisturizer!") ==
        std::vector<std::string>{"fragrance", "free", "moisturizer"});
  CHECK(tokenize("1TB USB-3.0") == std::vector<std::string>{"1tb", "usb", "3", "0"});
  CHECK(tokenize("...!?") == std::vector<std::string>{});
  CHECK(tokenize("caf\xC3\xA9 au lait") ==
        std::vector<std::string>{"caf\xC3\xA9", "au", "lait"});
}

TEST_CASE("a one-item index retrieves the item by a title token") {
  CorpusIndex index({make_item("a1", "Copper Kettle", "Home and Kitchen")});
  auto hits = index.search("kettle", 5);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].item.item_id == "a1");
  CHECK(hits[0].score > 0.0);
}

TEST_CASE("indexing the same corpus twice gives identical results") {
  auto items = fixture_corpus();
  CorpusIndex a(items), b(items);
  for (const char* query :
       {"fragrance-free moisturizer", "1TB storage", "eco-friendly kitchen"}) {
    auto ra = a.search(query, 10);
    auto rb = b.search(query, 10);
    REQUIRE(ra.size() == rb.size());
    for (std::size_t i = 0; i < ra.size(); ++i) {
      CHECK(ra[i].item.item_id == rb[i].item.item_id);
      CHECK(ra[i].score == rb[i].score);
    }
  }
}

TEST_CASE("per-field statistics equal a naive term-frequency oracle") {
  auto items = fixture_corpus();
  REQUIRE(items.size() == 50);
  CorpusIndex index(items);
  for (Field f : kFieldOrder) {
    // Naive counters straight off the raw items.
    std::map<std::string, std::size_t> df;
    std::size_t total_len = 0;
    for (std::size_t d = 0; d < items.size(); ++d) {
      auto tokens = tokenize(field_text(items[d], f));
      total_len += tokens.size();
      CHECK(index.field_length(f, d) == tokens.size());
      std::map<std::string, std::size_t> tf;
      for (const auto& t : tokens) ++tf[t];
      for (const auto& [term, count] : tf) {
        ++df[term];
        CHECK(index.term_frequency(f, term, d) == count);
      }
    }
    for (const auto& [term, count] : df)
      CHECK(index.doc_frequency(f, term) == count);
    CHECK(index.avg_field_length(f) ==
          Catch::Approx(static_cast<double>(total_len) / items.size()));
  }
}

TEST_CASE("the rosacea query surfaces the healing-ointment item") {
  CorpusIndex index(fixture_corpus());
  auto hits = index.search("fragrance-free moisturizer rosacea", 10);
  bool found = false;
  for (const auto& hit : hits)
    if (hit.item.title.find("Aquaphor Healing Ointment") != std::string::npos)
      found = true;
  CHECK(found);
}

TEST_CASE("a punctuation-only query returns the empty list") {
  CorpusIndex index(fixture_corpus());
  CHECK(index.search("!!! ... ???", 10).empty());
}

TEST_CASE("search equals the exhaustive brute-force scorer on random queries") {
  auto items = fixture_corpus();
  CorpusIndex index(items);
  for (const auto& query : random_queries(items, 30, 99)) {
    auto got = index.search(query, 10);
    auto expected =
        persim::testing::brute_force_search(items, index.config(), query, 10);
    REQUIRE(got.size() == expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].item.item_id == expected[i].item.item_id);
      CHECK(std::abs(got[i].score - expected[i].score) <= 1e-9);
    }
  }
}

TEST_CASE("results are monotone in k") {
  auto items = fixture_corpus();
  CorpusIndex index(items);
  for (const auto& query : random_queries(items, 10, 5)) {
    auto top10 = index.search(query, 10);
    for (std::size_t j = 1; j <= 10; ++j) {
      auto topj = index.search(query, j);
      REQUIRE(topj.size() == std::min(j, top10.size()));
      for (std::size_t i = 0; i < topj.size(); ++i)
        CHECK(topj[i].item.item_id == top10[i].item.item_id);
    }
  }
}

TEST_CASE("scores are non-increasing and ties break by item_id ascending") {
  // Two byte-identical documents force an exact score tie.
  std::vector<ProductItem> items = {
      make_item("b2", "Blue Mug", "Home and Kitchen", "Acme", "ceramic mug"),
      make_item("b1", "Blue Mug", "Home and Kitchen", "Acme", "ceramic mug"),
      make_item("c9", "Blue Plate", "Home and Kitchen", "Acme", "ceramic plate")};
  CorpusIndex index(items);
  auto hits = index.search("blue ceramic mug", 10);
  REQUIRE(hits.size() == 3);
  CHECK(hits[0].score == hits[1].score);
  CHECK(hits[0].item.item_id == "b1");
  CHECK(hits[1].item.item_id == "b2");
  for (std::size_t i = 1; i < hits.size(); ++i)
    CHECK(hits[i - 1].score >= hits[i].score);
}

TEST_CASE("adding an unrelated document keeps per-term stats of old fields") {
  auto items = fixture_corpus();
  CorpusIndex before(items);
  items.push_back(make_item("zz9", "zzqx0 zzqx1", "Electronics", "",
                            "zzqx2 only tokens absent elsewhere"));
  CorpusIndex after(items);
  for (Field f : kFieldOrder)
    for (const char* term : {"moisturizer", "toshiba", "kitchen"}) {
      CHECK(before.doc_frequency(f, term) == after.doc_frequency(f, term));
    }
}

TEST_CASE("empty corpus is allowed but flagged, and searches return nothing") {
  CorpusIndex index(std::vector<ProductItem>{});
  CHECK(index.empty());
  CHECK(index.search("anything", 3).empty());
}

TEST_CASE("search rejects k == 0") {
  CorpusIndex index(fixture_corpus());
  CHECK_THROWS_AS(index.search("tea", 0), Error);
}

TEST_CASE("index config validation") {
  IndexConfig bad;
  bad.k1 = 0;
  CHECK_THROWS_AS(CorpusIndex(fixture_corpus(), bad), Error);
  IndexConfig bad2;
  bad2.b = 1.5;
  CHECK_THROWS_AS(CorpusIndex(fixture_corpus(), bad2), Error);
}
