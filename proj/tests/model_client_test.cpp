#include <gtest/gtest.h>
#include <httplib.h>

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <mutex>
#include <set>
#include <thread>

#include "support.hpp"
#include "tabdpo/errors.hpp"
#include "tabdpo/model_client.hpp"
#include "tabdpo/scoring.hpp"
#include "tabdpo/util.hpp"

using namespace tabdpo;
using support::make_instance;

namespace {

struct Reps {
  TextRendering text;
  ImageRendering image;
};

Reps renderings(const Instance& inst) { return {render_text(inst.table), render_image(inst.table)}; }

SamplingConfig config(int k, std::uint64_t seed = 7) {
  SamplingConfig c;
  c.samples_per_modality = k;
  c.seed = seed;
  return c;
}

std::vector<std::string> answers(const std::vector<SampledResponse>& rs) {
  std::vector<std::string> out;
  for (const auto& r : rs) out.push_back(r.extracted_answer);
  return out;
}

// Minimal chat-completion stub on a random local port.
class StubServer {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  explicit StubServer(Handler handler) : handler_(std::move(handler)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      {
        std::lock_guard lock(mu_);
        requests_.push_back(req);
      }
      handler_(req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
  }
  std::vector<httplib::Request> requests() {
    std::lock_guard lock(mu_);
    return requests_;
  }

 private:
  Handler handler_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::mutex mu_;
  std::vector<httplib::Request> requests_;
};

std::string choices_json(const std::vector<std::string>& texts, bool reversed = false) {
  nlohmann::json choices = nlohmann::json::array();
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const std::size_t k = reversed ? texts.size() - 1 - i : i;
    choices.push_back({{"index", k}, {"message", {{"role", "assistant"}, {"content", texts[k]}}}});
  }
  return nlohmann::json{{"choices", choices}}.dump();
}

EndpointConfig endpoint(const std::string& url) {
  EndpointConfig e;
  e.endpoint_url = url;
  e.model_name = "stub-model";
  e.initial_backoff = std::chrono::milliseconds(20);
  e.timeout = std::chrono::seconds(5);
  return e;
}

}  // namespace

// --- mock ------------------------------------------------------------------

TEST(Mock, SeededDeterminism) {
  const auto inst = make_instance("m1", {"22"});
  const auto reps = renderings(inst);
  const auto profile =
      MockProfile::from_json(R"({"default": {"text": {"22": 0.3, "23": 0.3, "24": 0.4}}})");
  const TemplateSet templates;
  auto a = mock_sampler(profile, 7);
  auto b = mock_sampler(profile, 7);
  const auto ra = sample(inst, Modality::TextOnly, &reps.text, nullptr, config(3), templates, *a);
  const auto rb = sample(inst, Modality::TextOnly, &reps.text, nullptr, config(3), templates, *b);
  ASSERT_EQ(ra.size(), 3u);
  EXPECT_EQ(ra, rb);
  for (std::size_t i = 0; i < ra.size(); ++i) {
    EXPECT_EQ(ra[i].modality, Modality::TextOnly);
    EXPECT_EQ(ra[i].request_id, "m1/text/" + std::to_string(i));
    EXPECT_EQ(ra[i].extracted_answer, scoring::extract_answer(ra[i].raw_text));
  }
}

TEST(Mock, CallOrderDoesNotMatter) {
  const auto i1 = make_instance("first", {"1"});
  const auto i2 = make_instance("second", {"1"});
  const auto r1 = renderings(i1), r2 = renderings(i2);
  const auto profile = MockProfile::from_json(R"({"default": {"text": {"a": 0.5, "b": 0.5}}})");
  const TemplateSet t;
  auto m = mock_sampler(profile, 3);
  const auto x1 = sample(i1, Modality::TextOnly, &r1.text, nullptr, config(8, 3), t, *m);
  const auto x2 = sample(i2, Modality::TextOnly, &r2.text, nullptr, config(8, 3), t, *m);
  auto n = mock_sampler(profile, 3);
  const auto y2 = sample(i2, Modality::TextOnly, &r2.text, nullptr, config(8, 3), t, *n);
  const auto y1 = sample(i1, Modality::TextOnly, &r1.text, nullptr, config(8, 3), t, *n);
  EXPECT_EQ(x1, y1);
  EXPECT_EQ(x2, y2);
}

TEST(Mock, PointMass) {
  const auto inst = make_instance("p", {"1"});
  const auto reps = renderings(inst);
  auto m = mock_sampler(MockProfile::from_json(R"({"default": {"text": {"22": 1.0}}})"), 1);
  const auto rs = sample(inst, Modality::TextOnly, &reps.text, nullptr, config(10), {}, *m);
  for (const auto& a : answers(rs)) EXPECT_EQ(a, "22");
}

TEST(Mock, DistributionMustSumToOne) {
  EXPECT_THROW(mock_sampler(MockProfile::from_json(R"({"default": {"image": {"a": 0.5, "b": 0.4}}})"), 1),
               DistributionError);
  EXPECT_THROW(mock_sampler(MockProfile::from_json(R"({"default": {"image": {"a": 1.1, "b": -0.1}}})"), 1),
               DistributionError);
  EXPECT_NO_THROW(mock_sampler(
      MockProfile::from_json(R"({"default": {"image": {"a": 0.1, "b": 0.2, "c": 0.7}}})"), 1));
}

TEST(Mock, LawOfLargeNumbers) {
  const auto inst = make_instance("lln", {"z"});
  const auto reps = renderings(inst);
  auto m = mock_sampler(MockProfile::from_json(R"({"default": {"image": {"a": 0.5, "b": 0.5}}})"), 99);
  const auto rs =
      sample(inst, Modality::ImageOnly, nullptr, &reps.image, config(10000, 99), {}, *m);
  ASSERT_EQ(rs.size(), 10000u);
  long a = 0;
  for (const auto& r : rs) a += r.extracted_answer == "a";
  EXPECT_NEAR(static_cast<double>(a) / 10000.0, 0.5, 0.02);
}

TEST(Mock, ScriptsGoldAndOverrides) {
  const auto inst = make_instance("scripted", {"42"});
  const auto other = make_instance("other", {"7"});
  const auto reps = renderings(inst), oreps = renderings(other);
  auto m = mock_sampler(MockProfile::from_json(R"({
      "default": {"hybrid": {"{gold}": 1.0}},
      "instances": {"scripted": {"hybrid": ["x", "{gold}"]}}})"),
                        5);
  EXPECT_EQ(answers(sample(inst, Modality::Hybrid, &reps.text, &reps.image, config(5), {}, *m)),
            (std::vector<std::string>{"x", "42", "x", "42", "x"}));
  EXPECT_EQ(answers(sample(other, Modality::Hybrid, &oreps.text, &oreps.image, config(2), {}, *m)),
            (std::vector<std::string>{"7", "7"}));
}

TEST(Mock, GreedyReturnsMode) {
  const auto inst = make_instance("g", {"1"});
  const auto reps = renderings(inst);
  auto m = mock_sampler(MockProfile::from_json(R"({"default": {"text": {"a": 0.2, "b": 0.8}}})"), 5);
  SamplingConfig c = config(1);
  c.temperature = 0.0;
  EXPECT_EQ(answers(sample(inst, Modality::TextOnly, &reps.text, nullptr, c, {}, *m)),
            (std::vector<std::string>{"b"}));
}

TEST(Mock, MissingArmIsAnError) {
  const auto inst = make_instance("g", {"1"});
  const auto reps = renderings(inst);
  auto m = mock_sampler(MockProfile::from_json(R"({"default": {"text": {"a": 1.0}}})"), 5);
  EXPECT_THROW(sample(inst, Modality::ImageOnly, nullptr, &reps.image, config(1), {}, *m), Error);
}

// --- prompts -----------------------------------------------------------------

TEST(Prompt, RepresentationsChecked) {
  const auto inst = make_instance("r", {"1"});
  const auto reps = renderings(inst);
  auto m = mock_sampler(MockProfile::from_json(R"({"default": {"image": {"a": 1.0}}})"), 1);
  EXPECT_THROW(sample(inst, Modality::ImageOnly, &reps.text, nullptr, config(1), {}, *m),
               RepresentationMissingError);
  EXPECT_THROW(sample(inst, Modality::TextOnly, nullptr, &reps.image, config(1), {}, *m),
               RepresentationMissingError);
  EXPECT_THROW(sample(inst, Modality::Hybrid, &reps.text, nullptr, config(1), {}, *m),
               RepresentationMissingError);
}

TEST(Prompt, TemplatesChecked) {
  const auto inst = make_instance("t", {"1"});
  const auto reps = renderings(inst);
  auto m = mock_sampler(MockProfile::from_json(R"({"default": {"text": {"a": 1.0}}})"), 1);
  EXPECT_THROW(sample(inst, Modality::TextOnly, &reps.text, nullptr, config(1), TemplateSet::empty(), *m),
               TemplateMissingError);
  PromptTemplate no_table{TaskKind::QuestionAnswering, "", "Q: {question}", "Final Answer:", false};
  EXPECT_THROW(no_table.validate(Modality::TextOnly), TemplateMissingError);
  EXPECT_NO_THROW(no_table.validate(Modality::ImageOnly));
  PromptTemplate no_question{TaskKind::QuestionAnswering, "", "{table_text}", "Final Answer:", false};
  EXPECT_THROW(no_question.validate(Modality::ImageOnly), TemplateMissingError);
}

TEST(Prompt, MessageLayout) {
  Instance inst = make_instance("lay", {"1"});
  inst.question = "Which team won?";
  const auto reps = renderings(inst);
  const auto tmpl = default_template(TaskKind::QuestionAnswering);
  const auto text = build_request(inst, Modality::TextOnly, &reps.text, nullptr, tmpl, config(2));
  EXPECT_EQ(text.system_prompt, tmpl.preamble);
  EXPECT_NE(text.user_text.find("Which team won?"), std::string::npos);
  EXPECT_NE(text.user_text.find("| k | v |"), std::string::npos);
  EXPECT_EQ(text.image_png, nullptr);
  EXPECT_EQ(text.n, 2);

  const auto image = build_request(inst, Modality::ImageOnly, nullptr, &reps.image, tmpl, config(2));
  EXPECT_EQ(image.user_text.find("| k | v |"), std::string::npos);
  EXPECT_EQ(image.image_png, &reps.image.encoded);

  const auto hybrid = build_request(inst, Modality::Hybrid, &reps.text, &reps.image, tmpl, config(2));
  EXPECT_NE(hybrid.user_text.find("| k | v |"), std::string::npos);
  EXPECT_EQ(hybrid.image_png, &reps.image.encoded);
}

TEST(Prompt, ShapeNoteIsOptIn) {
  const auto inst = make_instance("s", {"1"});
  const auto reps = renderings(inst);
  auto tmpl = default_template(TaskKind::QuestionAnswering);
  EXPECT_EQ(build_request(inst, Modality::TextOnly, &reps.text, nullptr, tmpl, config(1))
                .user_text.find("1 rows and 2 columns"),
            std::string::npos);
  tmpl.include_shape = true;
  EXPECT_NE(build_request(inst, Modality::TextOnly, &reps.text, nullptr, tmpl, config(1))
                .user_text.find("1 rows and 2 columns"),
            std::string::npos);
}

TEST(SamplingConfigTest, Validation) {
  SamplingConfig c;
  EXPECT_EQ(c.samples_per_modality, 10);
  EXPECT_EQ(c.temperature, 1.0);
  EXPECT_EQ(c.max_tokens, 8192);
  EXPECT_NO_THROW(c.validate());
  c.temperature = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.samples_per_modality = 1;
  EXPECT_NO_THROW(c.validate());
  c.samples_per_modality = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

// --- remote ------------------------------------------------------------------

TEST(Remote, RequestBodyShape) {
  const auto inst = make_instance("b", {"1"});
  const auto reps = renderings(inst);
  const auto req = build_request(inst, Modality::Hybrid, &reps.text, &reps.image,
                                 default_template(TaskKind::QuestionAnswering), config(10));
  const auto body = nlohmann::ordered_json::parse(RemoteModel::request_body(req, "m"));
  std::vector<std::string> keys;
  for (const auto& [k, v] : body.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"model", "messages", "temperature", "n", "max_tokens"}));
  EXPECT_EQ(body["n"], 10);
  EXPECT_EQ(body["max_tokens"], 8192);
  EXPECT_EQ(body["messages"][0]["role"], "system");
  const auto& parts = body["messages"][1]["content"];
  EXPECT_EQ(parts[0]["type"], "text");
  EXPECT_EQ(parts[1]["image_url"]["url"].get<std::string>(),
            "data:image/png;base64," + util::base64_encode(reps.image.encoded));
}

TEST(Remote, RetriesServerErrorsThenFails) {
  StubServer server([](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
    res.set_content("boom", "text/plain");
  });
  RemoteModel model(endpoint(server.url()));
  const auto inst = make_instance("r5", {"1"});
  const auto reps = renderings(inst);
  const auto started = std::chrono::steady_clock::now();
  try {
    sample(inst, Modality::TextOnly, &reps.text, nullptr, config(1), {}, model);
    FAIL() << "expected EndpointError";
  } catch (const EndpointError& e) {
    EXPECT_EQ(e.status(), 500);
  }
  const auto elapsed = std::chrono::steady_clock::now() - started;
  EXPECT_EQ(server.requests().size(), 3u);
  EXPECT_EQ(model.attempts(), 3);
  // Backoff of 20 ms then 40 ms between the three attempts.
  EXPECT_GE(elapsed, std::chrono::milliseconds(60));
}

TEST(Remote, RetriesRateLimitThenSucceeds) {
  std::atomic<int> calls{0};
  StubServer server([&](const httplib::Request&, httplib::Response& res) {
    if (calls++ == 0) {
      res.status = 429;
      return;
    }
    res.set_content(choices_json({"Final Answer: a", "Final Answer: b"}, true), "application/json");
  });
  RemoteModel model(endpoint(server.url()));
  const auto inst = make_instance("r4", {"1"});
  const auto reps = renderings(inst);
  const auto rs = sample(inst, Modality::TextOnly, &reps.text, nullptr, config(2), {}, model);
  // Choices arrive out of order and are sorted by index.
  EXPECT_EQ(answers(rs), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(calls.load(), 2);
}

TEST(Remote, ClientErrorsAreNotRetried) {
  StubServer server([](const httplib::Request&, httplib::Response& res) { res.status = 404; });
  RemoteModel model(endpoint(server.url()));
  const auto inst = make_instance("r404", {"1"});
  const auto reps = renderings(inst);
  EXPECT_THROW(sample(inst, Modality::TextOnly, &reps.text, nullptr, config(1), {}, model),
               EndpointError);
  EXPECT_EQ(server.requests().size(), 1u);
}

TEST(Remote, FallsBackToOneRequestPerSample) {
  StubServer server([](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    if (body["n"].get<int>() > 1) {
      res.status = 400;
      res.set_content(R"({"error": "n must be 1"})", "application/json");
      return;
    }
    const auto id = req.get_header_value("X-Request-Id");
    res.set_content(choices_json({"Final Answer: " + id.substr(id.rfind('/') + 1)}),
                    "application/json");
  });
  RemoteModel model(endpoint(server.url()));
  const auto inst = make_instance("fb", {"1"});
  const auto reps = renderings(inst);
  const auto rs = sample(inst, Modality::ImageOnly, nullptr, &reps.image, config(4), {}, model);
  EXPECT_EQ(answers(rs), (std::vector<std::string>{"0", "1", "2", "3"}));
  const auto reqs = server.requests();
  ASSERT_EQ(reqs.size(), 5u);
  std::set<std::string> ids;
  for (std::size_t i = 1; i < reqs.size(); ++i) ids.insert(reqs[i].get_header_value("X-Request-Id"));
  EXPECT_EQ(ids.size(), 4u);

  // Later calls go straight to single-sample requests.
  sample(inst, Modality::ImageOnly, nullptr, &reps.image, config(2), {}, model);
  EXPECT_EQ(server.requests().size(), 7u);
}

TEST(Remote, WrongChoiceCountFallsBack) {
  StubServer server([](const httplib::Request&, httplib::Response& res) {
    res.set_content(choices_json({"Final Answer: only"}), "application/json");
  });
  RemoteModel model(endpoint(server.url()));
  const auto inst = make_instance("wc", {"1"});
  const auto reps = renderings(inst);
  const auto rs = sample(inst, Modality::TextOnly, &reps.text, nullptr, config(3), {}, model);
  EXPECT_EQ(rs.size(), 3u);
  EXPECT_EQ(server.requests().size(), 4u);
}

TEST(Remote, SendsBearerTokenFromEnvironment) {
  ::setenv("TABDPO_TEST_KEY", "secret-token", 1);
  StubServer server([](const httplib::Request&, httplib::Response& res) {
    res.set_content(choices_json({"Final Answer: ok"}), "application/json");
  });
  auto cfg = endpoint(server.url());
  cfg.api_key_env = "TABDPO_TEST_KEY";
  RemoteModel model(cfg);
  const auto inst = make_instance("auth", {"1"});
  const auto reps = renderings(inst);
  sample(inst, Modality::TextOnly, &reps.text, nullptr, config(1), {}, model);
  ASSERT_EQ(server.requests().size(), 1u);
  EXPECT_EQ(server.requests()[0].get_header_value("Authorization"), "Bearer secret-token");
  EXPECT_EQ(server.requests()[0].get_header_value("X-Request-Id"), "auth/text/0");
}

TEST(Remote, ConfigValidation) {
  EndpointConfig e;
  EXPECT_THROW(e.validate(), ConfigError);
  e.endpoint_url = "http://localhost:1/v1/chat/completions";
  e.model_name = "m";
  EXPECT_NO_THROW(e.validate());
  e.max_attempts = 0;
  EXPECT_THROW(e.validate(), ConfigError);
}
