#include <gtest/gtest.h>

#include <httplib.h>

#include <algorithm>
#include <set>
#include <thread>

#include "oracles.hpp"
#include <nlohmann/json.hpp>

#include "p808/error.hpp"
#include "p808/localization.hpp"
#include "p808/tts.hpp"
#include "p808/wav.hpp"

using namespace p808;

namespace {

const std::string kDataDir = P808_DATA_DIR;

std::string en_text() { return read_file(kDataDir + "/catalogs/en.txt"); }

std::string replace_line(std::string text, const std::string& key,
                         const std::string& line) {
  const auto pos = text.find("\n" + key + " ");
  const auto end = text.find('\n', pos + 1);
  return text.substr(0, pos + 1) + line + text.substr(end);
}

std::string drop_line(std::string text, const std::string& key) {
  const auto pos = text.find("\n" + key + " ");
  const auto end = text.find('\n', pos + 1);
  return text.substr(0, pos) + text.substr(end);
}

}  // namespace

TEST(Catalog, LoadsShippedCatalogs) {
  const auto de = load_catalog(kDataDir + "/catalogs/de.txt");
  EXPECT_EQ(de.language(), "de-DE");
  EXPECT_EQ(de.term("label.2"), "Dürftig");
  const auto en = load_catalog(kDataDir + "/catalogs/en.txt");
  EXPECT_EQ(en.language(), "en");
  EXPECT_TRUE(validate_catalog(en).empty());
  EXPECT_EQ(en.schema_hash(), reference_schema().hash());
}

TEST(Catalog, MissingKeyNamedInSchemaError) {
  const auto text = drop_line(en_text(), "trapping.prompt");
  try {
    parse_catalog(text);
    FAIL() << "expected a schema error";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.keys(), std::vector<std::string>{"trapping.prompt"});
  }
}

TEST(Catalog, ReportsEveryMissingKeyAtOnce) {
  auto text = drop_line(en_text(), "trapping.prompt");
  text = drop_line(text, "rating.submit");
  text = replace_line(text, "setup.intro", "setup.intro =");
  try {
    parse_catalog(text);
    FAIL() << "expected a schema error";
  } catch (const SchemaError& e) {
    std::set<std::string> keys(e.keys().begin(), e.keys().end());
    EXPECT_EQ(keys, (std::set<std::string>{"trapping.prompt", "rating.submit",
                                           "setup.intro"}));
  }
}

TEST(Catalog, LiteralLabelIsConsistencyError) {
  const auto text = replace_line(en_text(), "rating.question",
                                 "rating.question = Is the speech Excellent?");
  EXPECT_THROW(parse_catalog(text), ConsistencyError);
  const auto issues = validate_catalog(parse_catalog_syntax(text));
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_EQ(issues[0].kind, CatalogIssue::Kind::literal_label);
  EXPECT_EQ(issues[0].key, "rating.question");
}

TEST(Catalog, DuplicateTermIsConsistencyError) {
  const auto text = replace_line(en_text(), "term.label.4", "term.label.4 = Fair");
  EXPECT_THROW(parse_catalog(text), ConsistencyError);
}

TEST(Catalog, MissingLabelTermFailsValidation) {
  const auto text = drop_line(en_text(), "term.label.3");
  EXPECT_THROW(parse_catalog(text), Error);
}

TEST(Catalog, SchemaHashMismatchIsReported) {
  auto text = en_text();
  const auto pos = text.find("@schema ");
  text.replace(pos, text.find('\n', pos) - pos, "@schema 0000000000000000");
  EXPECT_THROW(parse_catalog(text), SchemaError);
}

TEST(Catalog, MalformedInputIsParseError) {
  EXPECT_THROW(parse_catalog("@language en\n@version 1\nno equals sign\n"), ParseError);
  EXPECT_THROW(parse_catalog("key = value\n"), ParseError);
  EXPECT_THROW(parse_catalog("@language !!\n@version 1\n@schema x\n"), ParseError);
  auto dup = en_text() + "rating.submit = Again\n";
  EXPECT_THROW(parse_catalog(dup), ParseError);
  EXPECT_THROW(load_catalog(kDataDir + "/catalogs/does-not-exist.txt"), ParseError);
}

TEST(Catalog, SerializeRoundTrip) {
  const auto en = parse_catalog(en_text());
  const auto again = parse_catalog(serialize_catalog(en));
  EXPECT_EQ(again.entries(), en.entries());
  EXPECT_EQ(again.terminology(), en.terminology());
  EXPECT_EQ(again.language(), en.language());
}

TEST(Render, TrappingPromptUsesTerminology) {
  const auto en = parse_catalog(en_text());
  EXPECT_EQ(render_instruction(en, "trapping.prompt", {{"label", "2"}}),
            "This is an interruption: Please select the answer Poor");
  const auto de = load_catalog(kDataDir + "/catalogs/de.txt");
  const auto text = render_instruction(de, "trapping.prompt", {{"label", "2"}});
  EXPECT_NE(text.find(de.term("label.2")), std::string::npos);
  EXPECT_NE(text.find("Unterbrechung"), std::string::npos);
}

TEST(Render, UnboundPlaceholderIsRenderError) {
  const auto en = parse_catalog(en_text());
  EXPECT_THROW(render_instruction(en, "trapping.prompt", {}), RenderError);
  EXPECT_THROW(render_instruction(en, "trapping.prompt", {{"label", "9"}}), Error);
}

TEST(Render, PlainParamsAndBraces) {
  StringCatalog c("en", "1", "x", {{"greet", "Hi {name}, {{literal}}"}}, {});
  EXPECT_EQ(render_instruction(c, "greet", {{"name", "Ana"}}), "Hi Ana, {literal}");
  EXPECT_THROW(render_instruction(c, "missing", {}), Error);
}

TEST(TrappingPrompts, FiveDistinctPromptsCarryTheirTerm) {
  const auto en = parse_catalog(en_text());
  const auto prompts = build_trapping_prompts(en);
  ASSERT_EQ(prompts.size(), 5u);
  std::set<std::string> distinct;
  for (const auto& [label, text] : prompts) {
    EXPECT_EQ(label.term, en.term("label." + std::to_string(label.value)));
    EXPECT_NE(text.find(label.term), std::string::npos);
    distinct.insert(text);
  }
  EXPECT_EQ(distinct.size(), 5u);
  EXPECT_EQ(category_label(en, 5).term, "Excellent");
}

TEST(LanguageTag, Shapes) {
  EXPECT_TRUE(is_valid_language_tag("de-DE"));
  EXPECT_TRUE(is_valid_language_tag("zh"));
  EXPECT_FALSE(is_valid_language_tag(""));
  EXPECT_FALSE(is_valid_language_tag("german"));
}

TEST(StubTts, DeterministicAndTextSensitive) {
  StubTtsClient stub;
  const TtsRequest a{"select the answer", "en", ""};
  const auto x = synthesize(stub, a);
  EXPECT_EQ(x, synthesize(stub, a));
  EXPECT_EQ(x.sample_rate, 48000);
  EXPECT_LE(x.peak(), 0.99);
  EXPECT_NE(x, synthesize(stub, {"select the other answer", "en", ""}));
  EXPECT_NE(x, synthesize(stub, {"select the answer", "de-DE", ""}));
  EXPECT_THROW(synthesize(stub, {"  ", "en", ""}), InvalidArgument);
  StubTtsClient only_de({"de-DE"});
  EXPECT_THROW(synthesize(only_de, a), ConfigurationError);
}

TEST(CachedTts, StoresAndReuses) {
  p808::testing::TempDir dir;
  auto stub = std::make_shared<StubTtsClient>();
  CachedTtsClient cache(stub, dir.path());
  const TtsRequest req{"hello there", "en", "v1"};
  const auto first = cache.synthesize(req);
  EXPECT_TRUE(std::filesystem::exists(cache.entry_path(req)));
  EXPECT_EQ(cache.synthesize(req), first);
  EXPECT_NE(cache.entry_path(req), cache.entry_path({"hello there", "en", "v2"}));
}

TEST(HttpTts, UnreachableIsTransportError) {
  HttpTtsConfig cfg;
  cfg.endpoint = "http://127.0.0.1:1/tts";
  cfg.timeout = std::chrono::milliseconds(500);
  HttpTtsClient client(cfg);
  EXPECT_THROW(synthesize(client, {"hi", "en", ""}), TransportError);
}

TEST(HttpTts, UnsupportedLanguageIsConfigurationError) {
  HttpTtsConfig cfg;
  cfg.endpoint = "http://127.0.0.1:1/tts";
  cfg.languages = {"en"};
  HttpTtsClient client(cfg);
  EXPECT_THROW(synthesize(client, {"hallo", "de-DE", ""}), ConfigurationError);
  cfg.endpoint = "https://example.invalid/tts";
  EXPECT_THROW(HttpTtsClient{cfg}, ConfigurationError);
}

TEST(HttpTts, SpeaksToEndpoint) {
  httplib::Server server;
  std::string seen_auth;
  server.Post("/tts", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    const auto body = nlohmann::json::parse(req.body);
    if (body.at("language") == "xx") {
      res.status = 400;
      return;
    }
    StubTtsClient stub;
    res.set_content(encode_wav(stub.synthesize({body.at("text").get<std::string>(), "en", ""}),
                               WavFormat::float32),
                    "audio/wav");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpTtsConfig cfg;
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/tts";
  cfg.credential = "secret";
  HttpTtsClient client(cfg);
  StubTtsClient stub;
  const auto audio = synthesize(client, {"good morning", "en", ""});
  EXPECT_EQ(seen_auth, "Bearer secret");
  const auto expected = stub.synthesize({"good morning", "en", ""});
  ASSERT_EQ(audio.size(), expected.size());
  EXPECT_THROW(synthesize(client, {"x", "xx", ""}), ConfigurationError);

  server.stop();
  t.join();
}
