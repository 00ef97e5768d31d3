#include <chrono>

#include "tabdpo/errors.hpp"
#include "tabdpo/model_client.hpp"
#include "tabdpo/scoring.hpp"
#include "tabdpo/util.hpp"

namespace tabdpo {

namespace {

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

std::string format_note(Modality modality, const TextRendering* text, const Table& table,
                        bool include_shape) {
  const std::string fmt = text && text->format != TextFormat::Markdown
                              ? std::string(to_string(text->format)) + "-style"
                              : "Markdown";
  std::string note;
  switch (modality) {
    case Modality::TextOnly:
      note = "The table is given in " + fmt + " format.";
      break;
    case Modality::ImageOnly:
      note = "The table is shown in the attached image.";
      break;
    case Modality::Hybrid:
      note = "The table is shown in the attached image and also given in " + fmt + " format.";
      break;
  }
  if (include_shape) {
    note += " The table has " + std::to_string(table.row_count()) + " rows and " +
            std::to_string(table.column_count()) + " columns.";
  }
  return note;
}

}  // namespace

std::string_view to_string(Modality modality) {
  switch (modality) {
    case Modality::TextOnly:
      return "text";
    case Modality::ImageOnly:
      return "image";
    case Modality::Hybrid:
      return "hybrid";
  }
  return "text";
}

std::optional<Modality> parse_modality(std::string_view name) {
  const std::string n = util::to_lower_ascii(name);
  if (n == "text" || n == "text-only") return Modality::TextOnly;
  if (n == "image" || n == "image-only") return Modality::ImageOnly;
  if (n == "hybrid" || n == "multimodal" || n == "multi-modal") return Modality::Hybrid;
  return std::nullopt;
}

void PromptTemplate::validate(Modality modality) const {
  if (body.find("{question}") == std::string::npos) {
    throw TemplateMissingError("template for " + std::string(to_string(task)) +
                               " lacks {question}");
  }
  if (modality != Modality::ImageOnly && body.find("{table_text}") == std::string::npos) {
    throw TemplateMissingError("template for " + std::string(to_string(task)) +
                               " lacks {table_text}");
  }
}

PromptTemplate default_template(TaskKind task) {
  PromptTemplate t;
  t.task = task;
  switch (task) {
    case TaskKind::QuestionAnswering:
      t.preamble = "You are an expert at reading tables and answering questions about them.";
      t.body =
          "{format_note}\n\n{table_text}\n\nQuestion: {question}\n"
          "Reason step by step, then write the answer on the last line as "
          "\"Final Answer: <answer>\".";
      break;
    case TaskKind::FactVerifyBinary:
      t.preamble = "You are an expert at verifying statements against tables.";
      t.body =
          "{format_note}\n\n{table_text}\n\nStatement: {question}\n"
          "Is the statement supported by the table? Reason step by step, then write "
          "\"Final Answer: true\" or \"Final Answer: false\" on the last line.";
      break;
    case TaskKind::FactVerifyTernary:
      t.preamble = "You are an expert at judging whether a table entails a statement.";
      t.body =
          "{format_note}\n\n{table_text}\n\nStatement: {question}\n"
          "Does the table entail the statement, contradict it, or neither? Reason step by "
          "step, then write \"Final Answer: entail\", \"Final Answer: contradict\" or "
          "\"Final Answer: neutral\" on the last line.";
      break;
  }
  return t;
}

TemplateSet::TemplateSet() {
  for (auto task :
       {TaskKind::QuestionAnswering, TaskKind::FactVerifyBinary, TaskKind::FactVerifyTernary}) {
    templates_[task] = default_template(task);
  }
}

TemplateSet TemplateSet::empty() {
  TemplateSet s;
  s.templates_.clear();
  return s;
}

void TemplateSet::set(PromptTemplate tmpl) { templates_[tmpl.task] = std::move(tmpl); }

const PromptTemplate& TemplateSet::get(TaskKind task) const {
  const auto it = templates_.find(task);
  if (it == templates_.end()) {
    throw TemplateMissingError("no prompt template for task " + std::string(to_string(task)));
  }
  return it->second;
}

void SamplingConfig::validate() const {
  if (samples_per_modality < 1) throw ConfigError("sampling.k", "must be at least 1");
  if (!(temperature >= 0.0)) throw ConfigError("sampling.temperature", "must be non-negative");
  if (temperature == 0.0 && samples_per_modality != 1) {
    throw ConfigError("sampling.k", "temperature 0 (greedy) requires k = 1");
  }
  if (max_tokens < 1) throw ConfigError("sampling.max_tokens", "must be positive");
}

ChatRequest build_request(const Instance& instance, Modality modality,
                          const TextRendering* text, const ImageRendering* image,
                          const PromptTemplate& tmpl, const SamplingConfig& cfg) {
  const bool needs_text = modality != Modality::ImageOnly;
  const bool needs_image = modality != Modality::TextOnly;
  if (needs_text && !text) {
    throw RepresentationMissingError(instance.id + ": " + std::string(to_string(modality)) +
                                     " sampling needs the text rendering");
  }
  if (needs_image && (!image || image->encoded.empty())) {
    throw RepresentationMissingError(instance.id + ": " + std::string(to_string(modality)) +
                                     " sampling needs the image rendering");
  }
  tmpl.validate(modality);

  std::string body = tmpl.body;
  replace_all(body, "{format_note}",
              format_note(modality, needs_text ? text : nullptr, instance.table,
                          tmpl.include_shape));
  replace_all(body, "{table_text}", needs_text ? std::string(util::trim(text->text)) : "");
  replace_all(body, "{question}", instance.question);
  while (body.find("\n\n\n") != std::string::npos) replace_all(body, "\n\n\n", "\n\n");

  ChatRequest req;
  req.instance_id = instance.id;
  req.modality = modality;
  req.system_prompt = tmpl.preamble;
  req.user_text = std::move(body);
  req.image_png = needs_image ? &image->encoded : nullptr;
  req.answer_anchor = tmpl.answer_anchor;
  req.gold_hint = instance.gold_answers.empty() ? "" : instance.gold_answers.front();
  req.temperature = cfg.temperature;
  req.max_tokens = cfg.max_tokens;
  req.n = cfg.samples_per_modality;
  return req;
}

std::vector<SampledResponse> sample(const Instance& instance, Modality modality,
                                    const TextRendering* text, const ImageRendering* image,
                                    const SamplingConfig& cfg, const TemplateSet& templates,
                                    ModelHandle& model) {
  cfg.validate();
  const PromptTemplate& tmpl = templates.get(instance.task);
  const ChatRequest req = build_request(instance, modality, text, image, tmpl, cfg);
  auto completions = model.complete(req);
  if (completions.size() != static_cast<std::size_t>(cfg.samples_per_modality)) {
    throw EndpointError(0, "expected " + std::to_string(cfg.samples_per_modality) +
                               " completions, got " + std::to_string(completions.size()));
  }
  std::vector<SampledResponse> out;
  out.reserve(completions.size());
  for (std::size_t i = 0; i < completions.size(); ++i) {
    SampledResponse r;
    r.modality = modality;
    r.raw_text = std::move(completions[i].text);
    r.extracted_answer = scoring::extract_answer(r.raw_text, tmpl.answer_anchor);
    r.latency_ms = completions[i].latency_ms;
    r.request_id = instance.id + "/" + std::string(to_string(modality)) + "/" + std::to_string(i);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace tabdpo
