#include <gtest/gtest.h>

#include <atomic>
#include <random>

#include "support.hpp"
#include "tabdpo/errors.hpp"
#include "tabdpo/pair_builder.hpp"

using namespace tabdpo;
using support::make_instance;
using support::response;

namespace {

ResponseSet set_of(const std::string& id, std::vector<SampledResponse> rs) {
  return ResponseSet{id, std::move(rs)};
}

SamplingConfig cfg(int k, std::uint64_t seed = 1) {
  SamplingConfig c;
  c.samples_per_modality = k;
  c.seed = seed;
  return c;
}

std::vector<Instance> synthetic(int n) {
  std::vector<Instance> out;
  for (int i = 0; i < n; ++i) {
    Instance inst = make_instance("s" + std::to_string(i), {std::to_string(i)});
    out.push_back(std::move(inst));
  }
  return out;
}

// Fails every instance whose id is listed.
class FlakyModel final : public ModelHandle {
 public:
  FlakyModel(std::unique_ptr<ModelHandle> inner, std::set<std::string> failing)
      : inner_(std::move(inner)), failing_(std::move(failing)) {}
  std::vector<Completion> complete(const ChatRequest& req) override {
    if (failing_.count(req.instance_id)) throw EndpointError(503, "unavailable");
    return inner_->complete(req);
  }
  std::string describe() const override { return "flaky"; }

 private:
  std::unique_ptr<ModelHandle> inner_;
  std::set<std::string> failing_;
};

}  // namespace

TEST(Strategy, NamesAndValidation) {
  EXPECT_EQ(parse_strategy_kind("modality-consistent"), SelectionStrategy::Kind::ModalityConsistent);
  EXPECT_EQ(parse_strategy_kind("random"), SelectionStrategy::Kind::RandomNegative);
  EXPECT_EQ(parse_strategy_kind("multimodal-only"), SelectionStrategy::Kind::MultiModalOnly);
  EXPECT_FALSE(parse_strategy_kind("bogus").has_value());
  SelectionStrategy r{SelectionStrategy::Kind::RandomNegative, std::nullopt};
  EXPECT_THROW(r.validate(), ConfigError);
  EXPECT_NO_THROW(SelectionStrategy::random_negative(3).validate());
}

TEST(Retention, Rule) {
  const auto inst = make_instance("r", {"22"});
  EXPECT_TRUE(retain_instance(set_of("r", {response(Modality::TextOnly, "22"),
                                           response(Modality::ImageOnly, "23")}),
                              inst));
  EXPECT_FALSE(retain_instance(set_of("r", {response(Modality::TextOnly, "22"),
                                            response(Modality::ImageOnly, "22.0")}),
                               inst));
  EXPECT_FALSE(retain_instance(set_of("r", {response(Modality::TextOnly, "1"),
                                            response(Modality::ImageOnly, "2")}),
                               inst));
  EXPECT_FALSE(retain_instance(set_of("r", {}), inst));
}

TEST(SelectNegative, MostFrequentPooled) {
  const auto inst = make_instance("p", {"22"});
  const auto set = set_of("p", {response(Modality::TextOnly, "22"), response(Modality::TextOnly, "23"),
                                response(Modality::ImageOnly, "24"), response(Modality::ImageOnly, "23"),
                                response(Modality::Hybrid, "24"), response(Modality::Hybrid, "24")});
  const auto pair = select_negative(set, inst, SelectionStrategy::modality_consistent());
  EXPECT_EQ(pair.positive, "22");
  EXPECT_EQ(pair.negative, "24");
  EXPECT_EQ(pair.negative_frequency, 3);
  EXPECT_EQ(pair.negative_modality_counts.at(Modality::TextOnly), 0);
  EXPECT_EQ(pair.negative_modality_counts.at(Modality::ImageOnly), 1);
  EXPECT_EQ(pair.negative_modality_counts.at(Modality::Hybrid), 2);
}

TEST(SelectNegative, TieGoesToSmallestKey) {
  const auto inst = make_instance("t", {"g"});
  const auto set = set_of("t", {response(Modality::TextOnly, "zeta"), response(Modality::TextOnly, "g"),
                                response(Modality::ImageOnly, "alpha"), response(Modality::Hybrid, "zeta"),
                                response(Modality::Hybrid, "alpha")});
  EXPECT_EQ(select_negative(set, inst, SelectionStrategy::modality_consistent()).negative, "alpha");
}

TEST(SelectNegative, GroupsNormalizedSpellings) {
  const auto inst = make_instance("n", {"5"});
  const auto set = set_of("n", {response(Modality::TextOnly, "22."), response(Modality::ImageOnly, "22"),
                                response(Modality::Hybrid, "23"), response(Modality::Hybrid, "5")});
  const auto pair = select_negative(set, inst, SelectionStrategy::modality_consistent());
  EXPECT_EQ(pair.negative, "22.");
  EXPECT_EQ(pair.negative_frequency, 2);
}

TEST(SelectNegative, PoolingBeatsAnySingleArm) {
  // Image arm prefers "x"; text and hybrid arms prefer "y".
  const auto inst = make_instance("pool", {"g"});
  std::vector<SampledResponse> rs;
  for (int i = 0; i < 6; ++i) rs.push_back(response(Modality::ImageOnly, "x"));
  for (int i = 0; i < 4; ++i) rs.push_back(response(Modality::ImageOnly, "g"));
  for (auto m : {Modality::TextOnly, Modality::Hybrid}) {
    for (int i = 0; i < 4; ++i) rs.push_back(response(m, "y"));
    for (int i = 0; i < 6; ++i) rs.push_back(response(m, "g"));
  }
  const auto set = set_of("pool", rs);
  const auto pooled = select_negative(set, inst, SelectionStrategy::modality_consistent());
  EXPECT_EQ(pooled.negative, "y");
  EXPECT_EQ(pooled.negative_frequency, 8);
  const auto per_arm = select_negative(set, inst, SelectionStrategy::modality_consistent(),
                                       NegativePooling::PerModality);
  EXPECT_EQ(per_arm.negative, "x");
}

TEST(SelectNegative, NoIncorrectThrows) {
  const auto inst = make_instance("a", {"1"});
  EXPECT_THROW(select_negative(set_of("a", {response(Modality::TextOnly, "1")}), inst,
                               SelectionStrategy::modality_consistent()),
               NoNegativeError);
}

TEST(SelectNegative, MatchesOracleOnRandomSets) {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 300; ++i) {
    const auto rs = support::random_response_set(rng, i);
    const auto oracle = support::oracle_negative(rs.set.responses, rs.instance);
    if (!oracle.exists) {
      EXPECT_THROW(select_negative(rs.set, rs.instance, SelectionStrategy::modality_consistent()),
                   NoNegativeError);
      continue;
    }
    const auto pair = select_negative(rs.set, rs.instance, SelectionStrategy::modality_consistent());
    EXPECT_EQ(pair.negative, oracle.surface);
    EXPECT_EQ(pair.negative_frequency, oracle.frequency);
  }
}

TEST(SelectNegative, RandomIsSeededAndIncorrect) {
  const auto inst = make_instance("rand", {"g"});
  std::vector<SampledResponse> rs;
  for (const char* a : {"a", "b", "c", "g", "d", "a"}) rs.push_back(response(Modality::TextOnly, a));
  const auto set = set_of("rand", rs);
  std::set<std::string> seen;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto s = SelectionStrategy::random_negative(seed);
    const auto p = select_negative(set, inst, s);
    EXPECT_EQ(p, select_negative(set, inst, s));
    EXPECT_NE(p.negative, "g");
    EXPECT_EQ(p.strategy, s);
    seen.insert(p.negative);
  }
  EXPECT_EQ(seen, (std::set<std::string>{"a", "b", "c", "d"}));
  SelectionStrategy unseeded{SelectionStrategy::Kind::RandomNegative, std::nullopt};
  EXPECT_THROW(select_negative(set, inst, unseeded), ConfigError);
}

TEST(Collect, HybridStrategySamplesThreeArms) {
  const auto inst = make_instance("c", {"1"});
  auto model = mock_sampler(MockProfile::from_json(R"({"default": {
      "text": {"1": 0.5, "2": 0.5}, "image": {"1": 0.5, "3": 0.5}, "hybrid": {"1": 1.0}}})"),
                            4);
  const auto r = render_for_sampling(inst, SelectionStrategy::modality_consistent(), {});
  const auto set = collect_responses(inst, SelectionStrategy::modality_consistent(), cfg(10), *model,
                                     TemplateSet(), r);
  EXPECT_EQ(set.responses.size(), 30u);
  for (auto m : kAllModalities) EXPECT_EQ(set.count(m), 10u);

  const auto only = collect_responses(inst, SelectionStrategy::multimodal_only(), cfg(10), *model,
                                      TemplateSet(), r);
  EXPECT_EQ(only.responses.size(), 10u);
  EXPECT_EQ(only.count(Modality::Hybrid), 10u);
}

TEST(Build, StatsAndOrder) {
  auto instances = synthetic(40);
  instances[3].free_form = true;
  // s5 always right, s6 always wrong.
  auto model = mock_sampler(MockProfile::from_json(R"({
      "default": {"text": {"{gold}": 0.5, "w": 0.5}, "image": {"{gold}": 0.5, "v": 0.5},
                  "hybrid": {"{gold}": 0.5, "w": 0.5}},
      "instances": {
        "s5": {"text": ["{gold}"], "image": ["{gold}"], "hybrid": ["{gold}"]},
        "s6": {"text": ["no"], "image": ["no"], "hybrid": ["no"]}}})"),
                            11);
  BuildOptions opts;
  opts.parallelism = 4;
  std::vector<std::string> order;
  const auto stats = build_dataset(instances, SelectionStrategy::modality_consistent(), cfg(5),
                                   *model, opts, [&](const BuildItem& item) {
                                     order.push_back(item.pair.instance_id);
                                     EXPECT_EQ(item.instance->id, item.pair.instance_id);
                                     EXPECT_EQ(item.responses->responses.size(), 15u);
                                   });
  EXPECT_EQ(stats.total, 40);
  EXPECT_EQ(stats.skipped_free_form, 1);
  EXPECT_EQ(stats.dropped_no_incorrect, 1);
  EXPECT_EQ(stats.dropped_no_correct, 1);
  EXPECT_EQ(stats.errored, 0);
  EXPECT_EQ(stats.retained, static_cast<long>(order.size()));
  EXPECT_TRUE(std::is_sorted(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return std::stoi(a.substr(1)) < std::stoi(b.substr(1));
  }));
  for (auto m : kAllModalities) EXPECT_EQ(stats.responses_by_modality.at(m), 39 * 5);
}

TEST(Build, DeterministicAcrossParallelism) {
  const auto instances = synthetic(60);
  const auto profile = MockProfile::from_json(R"({"default": {
      "text": {"{gold}": 0.4, "a": 0.3, "b": 0.3}, "image": {"{gold}": 0.4, "a": 0.2, "c": 0.4},
      "hybrid": {"{gold}": 0.5, "b": 0.5}}})");
  std::vector<std::vector<PreferencePair>> runs;
  for (int par : {1, 3, 8}) {
    auto model = mock_sampler(profile, 5);
    BuildOptions opts;
    opts.parallelism = par;
    std::vector<PreferencePair> pairs;
    build_dataset(instances, SelectionStrategy::modality_consistent(), cfg(4), *model, opts,
                  [&](const BuildItem& item) { pairs.push_back(item.pair); });
    runs.push_back(std::move(pairs));
  }
  EXPECT_EQ(runs[0], runs[1]);
  EXPECT_EQ(runs[0], runs[2]);
}

TEST(Build, ErrorThreshold) {
  const auto instances = synthetic(20);
  auto inner = mock_sampler(MockProfile::from_json(R"({"default": {
      "text": {"{gold}": 0.5, "w": 0.5}, "image": {"{gold}": 0.5, "w": 0.5},
      "hybrid": {"{gold}": 0.5, "w": 0.5}}})"),
                            2);
  FlakyModel model(std::move(inner), {"s1", "s2", "s3"});
  BuildOptions opts;
  opts.parallelism = 2;
  opts.max_error_rate = 0.10;
  const auto stats = build_dataset(instances, SelectionStrategy::modality_consistent(), cfg(3),
                                   model, opts, nullptr);
  EXPECT_TRUE(stats.threshold_exceeded);
  EXPECT_GE(stats.errored, 3);
  ASSERT_FALSE(stats.errors.empty());
  EXPECT_EQ(stats.errors.front().instance_id, "s1");
  EXPECT_NE(stats.errors.front().message.find("503"), std::string::npos);

  opts.max_error_rate = 0.5;
  auto inner2 = mock_sampler(MockProfile::from_json(R"({"default": {
      "text": {"{gold}": 0.5, "w": 0.5}, "image": {"{gold}": 0.5, "w": 0.5},
      "hybrid": {"{gold}": 0.5, "w": 0.5}}})"),
                             2);
  FlakyModel tolerant(std::move(inner2), {"s1", "s2", "s3"});
  const auto ok = build_dataset(instances, SelectionStrategy::modality_consistent(), cfg(3),
                                tolerant, opts, nullptr);
  EXPECT_FALSE(ok.threshold_exceeded);
  EXPECT_EQ(ok.errored, 3);
  EXPECT_EQ(ok.total, 20);
}

TEST(Build, CancellationStopsEarly) {
  const auto instances = synthetic(200);
  auto model = mock_sampler(MockProfile::from_json(R"({"default": {
      "text": {"{gold}": 0.5, "w": 0.5}, "image": {"{gold}": 0.5, "w": 0.5},
      "hybrid": {"{gold}": 0.5, "w": 0.5}}})"),
                            2);
  std::atomic<bool> cancel{false};
  BuildOptions opts;
  opts.parallelism = 2;
  opts.cancel = &cancel;
  long seen = 0;
  const auto stats = build_dataset(instances, SelectionStrategy::modality_consistent(), cfg(2),
                                   *model, opts, [&](const BuildItem&) {
                                     if (++seen == 5) cancel = true;
                                   });
  EXPECT_GT(stats.cancelled, 0);
  EXPECT_LT(stats.retained + stats.dropped_no_correct + stats.dropped_no_incorrect, 200);
  EXPECT_EQ(stats.total, 200);
}
