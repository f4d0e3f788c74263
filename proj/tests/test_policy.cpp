#include <doctest.h>

#include <random>

#include "comcts/policy.hpp"
#include "comcts/random.hpp"

using namespace comcts;

TEST_CASE("splitmix64 matches the reference sequence") {
  SeededStream s(1234567);
  CHECK(s.next() == 6457827717110365317ULL);
  CHECK(s.next() == 3203168211198807973ULL);
  CHECK(s.next() == 9817491932198370423ULL);
  CHECK(s.next() == 4593380528125082431ULL);
  CHECK(s.next() == 16408922859458223821ULL);
}

TEST_CASE("fnv1a reference values") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("seeded stream helpers stay in range") {
  SeededStream s(9);
  for (int i = 0; i < 10000; ++i) {
    const double u = s.unit();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(s.index(7) < 7);
  }
  CHECK_FALSE(SeededStream(1).bernoulli(0.0));
  CHECK(SeededStream(1).bernoulli(1.0));
}

TEST_CASE("parse_steps delimiter grammar") {
  const auto steps = parse_steps("### Step 1: A\n### Step 2: B\n### Final Answer: C");
  CHECK(steps == std::vector<Step>{{"A", false}, {"B", false}, {"C", true}});

  const auto two = parse_steps("### Step 1: A\n### Final Answer: B");
  CHECK(two == std::vector<Step>{{"A", false}, {"B", true}});
}

TEST_CASE("parse_steps multi-line bodies and trailing noise") {
  const auto steps = parse_steps("intro\n### Step 1: first\nmore\n### Final Answer: 9\n### Step 3: late");
  CHECK(steps == std::vector<Step>{{"first\nmore", false}, {"9", true}});
}

TEST_CASE("parse_steps paragraph fallback") {
  const auto steps = parse_steps("one paragraph\n\nFinal Answer: 7");
  CHECK(steps == std::vector<Step>{{"one paragraph", false}, {"Final Answer: 7", true}});
  const auto open = parse_steps("alpha\n\nbeta");
  CHECK(open == std::vector<Step>{{"alpha", false}, {"beta", false}});
}

TEST_CASE("parse_steps rejects empty output") {
  CHECK_THROWS_WITH_AS(parse_steps(""), "empty generation", ParseError);
  CHECK_THROWS_WITH_AS(parse_steps("  \n\t"), "empty generation", ParseError);
  CHECK_THROWS_AS(parse_steps("### Step 1:\n### Step 2:   "), ParseError);
}

TEST_CASE("parse_score") {
  CHECK(parse_score("Score: -1") == -1.0);
  CHECK(parse_score("the step is good. Score: 0.8 overall") == 0.8);
  CHECK(parse_score("Score: 3") == 1.0);
  CHECK(parse_score("Score: 0.2 then Score: 0.9") == 0.2);
  CHECK_THROWS_AS(parse_score("looks fine"), ParseError);
}

TEST_CASE("render then parse is the identity") {
  std::mt19937_64 rng(3);
  const std::vector<std::string> words{"x", "=", "3", "angle", "ABC", "so", "sum", "is", "12", "(",
                                       ")", "*", "#", "Step", "answer"};
  auto text = [&] {
    std::string t;
    const auto n = 1 + rng() % 8;
    for (std::size_t i = 0; i < n; ++i) {
      if (i) t += (rng() % 9 == 0) ? "\n" : " ";
      t += words[rng() % words.size()];
    }
    return t;
  };
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Step> steps(1 + rng() % 7);
    for (auto& s : steps) s.text = text();
    steps.back().terminal = rng() % 2 == 0;
    const auto first = 1 + rng() % 5;
    CHECK(parse_steps(render_steps(steps, first)) == steps);
  }
}

TEST_CASE("extract_answer") {
  CHECK(extract_answer("Final Answer: 7") == "7");
  CHECK(extract_answer("so the answer: x = 2 ") == "x = 2");
  CHECK(extract_answer(" 42 ") == "42");
}

TEST_CASE("fill_template substitutes every placeholder") {
  CHECK(fill_template("{question}|{prefix}|{candidate}|{other}", "Q", "P", "C") == "Q|P|C|{other}");
}

TEST_CASE("sim profile accuracy lookup") {
  SimProfile p;
  p.step_accuracy = {{"geometry", 0.7}, {"*", 0.2}};
  p.knowledge_topics = {"chart", "geometry"};
  CHECK(p.accuracy_for(std::string("geometry")) == 0.7);
  CHECK(p.accuracy_for(std::string("chart")) == 1.0);
  CHECK(p.accuracy_for(std::string("logic")) == 0.2);
  CHECK(p.accuracy_for(std::nullopt) == 0.2);
  SimProfile bare;
  CHECK(bare.accuracy_for(std::string("logic")) == 0.0);
  bare.eval_noise = 1.5;
  CHECK_THROWS_AS(bare.validate(), std::invalid_argument);
}

TEST_CASE("policy descriptor kind-specific fields") {
  PolicyDescriptor d;
  d.name = "m";
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);  // scripted without profile
  d.profile = SimProfile{};
  CHECK_NOTHROW(d.validate());
  d.endpoint = "http://localhost:1";
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
  d.kind = BackendKind::http_chat;
  d.profile.reset();
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);  // no model id
  d.model_id = "gpt";
  CHECK_NOTHROW(d.validate());
  CHECK(backend_kind_from_string("scripted-simulator") == BackendKind::scripted);
  CHECK(backend_kind_from_string("http-chat") == BackendKind::http_chat);
  CHECK_THROWS_AS(backend_kind_from_string("grpc"), std::invalid_argument);
}

TEST_CASE("default reflect prompt") {
  CHECK(PromptTemplates::defaults().reflect ==
        "The previous reasoning step is wrong and let's rethink it again.");
}
