#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include "tabdpo/image_render.hpp"
#include "tabdpo/table.hpp"
#include "tabdpo/text_render.hpp"

namespace tabdpo {

enum class Modality { TextOnly, ImageOnly, Hybrid };

inline constexpr Modality kAllModalities[] = {Modality::TextOnly, Modality::ImageOnly,
                                              Modality::Hybrid};

// "text", "image", "hybrid".
std::string_view to_string(Modality modality);
std::optional<Modality> parse_modality(std::string_view name);

// Instruction template for one task. `body` placeholders: {question},
// {table_text}, {format_note}.
struct PromptTemplate {
  TaskKind task = TaskKind::QuestionAnswering;
  std::string preamble;
  std::string body;
  std::string answer_anchor = "Final Answer:";
  // Appends "The table has R rows and C columns." to the format note.
  bool include_shape = false;

  // Throws TemplateMissingError when {question} (or {table_text} for a
  // modality that sends text) is absent.
  void validate(Modality modality) const;
};

PromptTemplate default_template(TaskKind task);

class TemplateSet {
 public:
  // Starts with the built-in template for every task.
  TemplateSet();
  // Starts empty; lookups throw TemplateMissingError until set().
  static TemplateSet empty();

  void set(PromptTemplate tmpl);
  const PromptTemplate& get(TaskKind task) const;
  bool contains(TaskKind task) const { return templates_.count(task) != 0; }

 private:
  std::map<TaskKind, PromptTemplate> templates_;
};

struct SamplingConfig {
  int samples_per_modality = 10;
  double temperature = 1.0;
  int max_tokens = 8192;
  std::optional<std::uint64_t> seed;

  // K >= 1, temperature >= 0, temperature == 0 implies K == 1.
  void validate() const;
};

struct SampledResponse {
  Modality modality = Modality::TextOnly;
  std::string raw_text;
  std::string extracted_answer;
  std::int64_t latency_ms = 0;
  std::string request_id;

  friend bool operator==(const SampledResponse&, const SampledResponse&) = default;
};

// One multimodal chat turn: [system: preamble][user: text (+ image)].
struct ChatRequest {
  std::string instance_id;
  Modality modality = Modality::TextOnly;
  std::string system_prompt;
  std::string user_text;
  // PNG bytes of V(T) when the modality sends the image.
  const std::vector<std::uint8_t>* image_png = nullptr;
  std::string answer_anchor;
  // Gold answer of the instance. Only the mock reads it (for "{gold}").
  std::string gold_hint;
  double temperature = 1.0;
  int max_tokens = 8192;
  int n = 1;
  // Index of the first sample this request produces; request ids are
  // "<instance>/<modality>/<index>".
  int first_sample = 0;
};

struct Completion {
  std::string text;
  std::int64_t latency_ms = 0;
};

// Anything that turns a chat request into `n` completions. Implementations
// must be safe to call from several threads at once.
class ModelHandle {
 public:
  virtual ~ModelHandle() = default;
  virtual std::vector<Completion> complete(const ChatRequest& request) = 0;
  virtual std::string describe() const = 0;
};

// Builds the chat request (template substitution, representation checks)
// without sending it.
ChatRequest build_request(const Instance& instance, Modality modality,
                          const TextRendering* text, const ImageRendering* image,
                          const PromptTemplate& tmpl, const SamplingConfig& cfg);

// Draws exactly K responses for one modality, ordered by sample index.
// Throws RepresentationMissingError, TemplateMissingError, EndpointError.
std::vector<SampledResponse> sample(const Instance& instance, Modality modality,
                                    const TextRendering* text, const ImageRendering* image,
                                    const SamplingConfig& cfg, const TemplateSet& templates,
                                    ModelHandle& model);

// --- mock -------------------------------------------------------------------

// Categorical answer distribution, or a fixed script cycled by sample index.
// The literal answer "{gold}" stands for the instance's first gold answer.
struct AnswerDistribution {
  std::vector<std::pair<std::string, double>> weights;  // sorted by answer
  std::vector<std::string> script;
};

struct MockProfile {
  std::map<Modality, AnswerDistribution> defaults;
  std::map<std::string, std::map<Modality, AnswerDistribution>> per_instance;

  // {"default": {"text": {"22": 0.5, "{gold}": 0.5}, "image": [..script..]},
  //  "instances": {"id": {...}}}
  static MockProfile from_json(std::string_view json_text);
};

// Deterministic sampler. Each request draws from a Mersenne Twister
// (mt19937_64) seeded with SplitMix64(seed, FNV-1a(instance id), modality),
// one 53-bit uniform per sample, so results never depend on call order or
// thread interleaving.
class MockModel final : public ModelHandle {
 public:
  // Throws DistributionError unless every distribution sums to 1 within 1e-9.
  MockModel(MockProfile profile, std::uint64_t seed);

  std::vector<Completion> complete(const ChatRequest& request) override;
  std::string describe() const override;

  // Number of complete() calls served.
  long calls() const noexcept { return calls_.load(); }

 private:
  const AnswerDistribution& lookup(const std::string& instance_id, Modality modality) const;

  MockProfile profile_;
  std::uint64_t seed_;
  std::atomic<long> calls_{0};
};

std::unique_ptr<MockModel> mock_sampler(MockProfile profile, std::uint64_t seed);

// --- remote -----------------------------------------------------------------

struct EndpointConfig {
  std::string endpoint_url;  // e.g. http://localhost:8000/v1/chat/completions
  std::string model_name;
  std::string api_key_env = "TABDPO_API_KEY";
  int parallelism = 8;
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  std::chrono::seconds timeout{600};
  // Ask for all K samples in one request (n=K); falls back to one request
  // per sample if the endpoint rejects n > 1.
  bool batch_samples = true;

  void validate() const;
};

// Chat-completion HTTP client: POST {model, messages, temperature, n,
// max_tokens}; images go inline as data:image/png;base64 URLs. Retries 5xx,
// 429 and transport failures with exponential backoff.
class RemoteModel final : public ModelHandle {
 public:
  explicit RemoteModel(EndpointConfig config);
  ~RemoteModel() override;

  std::vector<Completion> complete(const ChatRequest& request) override;
  std::string describe() const override;

  // Request body exactly as sent, for logging and tests.
  static std::string request_body(const ChatRequest& request, const std::string& model_name);

  long attempts() const noexcept { return attempts_.load(); }

 private:
  std::vector<Completion> post_with_retries(const ChatRequest& request);

  EndpointConfig config_;
  std::string scheme_host_port_;
  std::string path_;
  std::string api_key_;
  std::counting_semaphore<1024> in_flight_;
  std::atomic<bool> single_sample_mode_{false};
  std::atomic<long> attempts_{0};
};

}  // namespace tabdpo
