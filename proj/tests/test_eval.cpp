#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "sgear/data/synthetic.hpp"
#include "sgear/eval/evaluate.hpp"
#include "sgear/eval/predictions.hpp"

using namespace sgear;
using namespace sgear::eval;

namespace {

Prediction pred(std::string id, std::vector<double> p, std::size_t truth) {
  return {std::move(id), std::move(p), truth, {}, {}};
}

/// Brute force: sort (score desc, index asc) pairs and look up the truth's position.
bool oracle_in_top_k(const std::vector<double>& s, std::size_t truth, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> v;
  for (std::size_t c = 0; c < s.size(); ++c) v.emplace_back(-s[c], c);
  std::sort(v.begin(), v.end());
  for (std::size_t i = 0; i < v.size() && i < k; ++i) {
    if (v[i].second == truth) return true;
  }
  return false;
}

double oracle_topk(const PredictionSet& p, std::size_t k) {
  double hit = 0;
  for (const auto& x : p.items) hit += oracle_in_top_k(x.probs, x.truth, k);
  return hit / static_cast<double>(p.size());
}

double oracle_recall(const PredictionSet& p) {
  std::vector<double> hit(p.num_classes, 0), n(p.num_classes, 0);
  for (const auto& x : p.items) {
    n[x.truth] += 1;
    hit[x.truth] += oracle_in_top_k(x.probs, x.truth, 5);
  }
  double s = 0;
  int present = 0;
  for (std::size_t c = 0; c < p.num_classes; ++c) {
    if (n[c] > 0) {
      s += hit[c] / n[c];
      ++present;
    }
  }
  return s / present;
}

/// Random set with deliberately coarse scores so ties are common.
PredictionSet random_set(std::mt19937_64& gen, std::size_t clips, std::size_t k) {
  PredictionSet p{k, {}};
  std::uniform_int_distribution<int> level(0, 3);
  std::uniform_int_distribution<std::size_t> cls(0, k - 1);
  for (std::size_t i = 0; i < clips; ++i) {
    std::vector<double> s(k);
    double sum = 0;
    for (auto& v : s) sum += (v = level(gen) + 1);
    for (auto& v : s) v /= sum;
    p.items.push_back(pred("c" + std::to_string(i), s, cls(gen)));
  }
  return p;
}

}  // namespace

TEST(TopK, OneHotCorrect) {
  PredictionSet p{3, {pred("a", {1, 0, 0}, 0), pred("b", {0, 0, 1}, 2)}};
  for (std::size_t k = 1; k <= 3; ++k) EXPECT_EQ(topk_accuracy(p, k), 1.0);
}

TEST(TopK, UniformTiesGoToLowerIndex) {
  const double u = 1.0 / 3.0;
  PredictionSet p{3, {pred("a", {u, u, u}, 2)}};
  EXPECT_EQ(topk_accuracy(p, 1), 0.0);
  EXPECT_EQ(topk_accuracy(p, 2), 0.0);
  EXPECT_EQ(topk_accuracy(p, 3), 1.0);
  EXPECT_EQ(ranking({u, u, u}), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(TopK, HandBuiltSet) {
  PredictionSet p{4,
                  {pred("a", {0.1, 0.2, 0.3, 0.4}, 3), pred("b", {0.1, 0.2, 0.3, 0.4}, 2),
                   pred("c", {0.25, 0.25, 0.25, 0.25}, 1), pred("d", {0.7, 0.1, 0.1, 0.1}, 3)}};
  // Ranks of truth: a 1st, b 2nd, c 2nd, d 4th.
  EXPECT_DOUBLE_EQ(topk_accuracy(p, 1), 0.25);
  EXPECT_DOUBLE_EQ(topk_accuracy(p, 2), 0.75);
  EXPECT_DOUBLE_EQ(topk_accuracy(p, 3), 0.75);
  EXPECT_DOUBLE_EQ(topk_accuracy(p, 4), 1.0);
  for (std::size_t k = 1; k <= 4; ++k) EXPECT_EQ(topk_accuracy(p, k), oracle_topk(p, k));
}

TEST(TopK, EmptyRaises) {
  PredictionSet p{3, {}};
  EXPECT_THROW(topk_accuracy(p, 1), EvaluationError);
  EXPECT_THROW(class_mean_top5_recall(p), EvaluationError);
}

TEST(Recall, HandEnumeration) {
  // K = 7 so top-5 can miss. Class 0: one hit, one miss. Class 1: one hit.
  PredictionSet p{7,
                  {pred("a", {0.4, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1}, 0),
                   pred("b", {0.0, 0.2, 0.2, 0.2, 0.2, 0.2, 0.0}, 0),
                   pred("c", {0.0, 0.5, 0.1, 0.1, 0.1, 0.1, 0.1}, 1)}};
  EXPECT_DOUBLE_EQ(class_mean_top5_recall(p), 0.75);
  PredictionSet single{7, {p.items[0], p.items[1]}};
  EXPECT_DOUBLE_EQ(class_mean_top5_recall(single), topk_accuracy(single, 5));
  PredictionSet all{7, {p.items[0], p.items[2]}};
  EXPECT_EQ(class_mean_top5_recall(all), 1.0);
}

TEST(Metrics, RandomizedAgainstBruteForce) {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + trial % 9;
    const auto p = random_set(gen, 50, k);
    for (std::size_t kk : {1, 2, 5}) EXPECT_EQ(topk_accuracy(p, kk), oracle_topk(p, kk));
    EXPECT_EQ(class_mean_top5_recall(p), oracle_recall(p));
  }
}

TEST(Fuse, Examples) {
  PredictionSet a{2, {pred("x", {0.6, 0.4}, 0)}};
  PredictionSet b{2, {pred("x", {0.2, 0.8}, 0)}};
  const auto same = late_fuse({{a, 1.0}, {b, 0.0}});
  EXPECT_EQ(same.items[0].probs, a.items[0].probs);
  const auto avg = late_fuse({{a, 1.0}, {b, 1.0}});
  EXPECT_NEAR(avg.items[0].probs[0], 0.4, 1e-15);
  EXPECT_NEAR(avg.items[0].probs[1], 0.6, 1e-15);
}

TEST(Fuse, MissingIdsListed) {
  PredictionSet a{2, {pred("x", {0.6, 0.4}, 0), pred("y", {0.5, 0.5}, 1)}};
  PredictionSet b{2, {pred("x", {0.2, 0.8}, 0), pred("z", {0.5, 0.5}, 1)}};
  try {
    late_fuse({{a, 1.0}, {b, 1.0}});
    FAIL();
  } catch (const AlignmentError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("missing: y"), std::string::npos) << msg;
    EXPECT_NE(msg.find("unexpected: z"), std::string::npos) << msg;
  }
}

TEST(Fuse, OutputOnSimplex) {
  std::mt19937_64 gen(5);
  const auto a = random_set(gen, 30, 6);
  auto b = random_set(gen, 30, 6);
  for (std::size_t i = 0; i < b.items.size(); ++i) b.items[i].truth = a.items[i].truth;
  const auto f = late_fuse({{a, 2.5}, {b, 0.5}});
  EXPECT_NO_THROW(f.validate());
}

TEST(Fuse, Presets) {
  auto weights = [](const std::string& name) {
    std::vector<double> w;
    for (const auto& [member, x] : ensemble_preset(name)) w.push_back(x);
    return w;
  };
  EXPECT_EQ(weights("ek100-4b"), (std::vector<double>{2.5, 1.5, 1.0, 1.0, 0.5}));
  EXPECT_EQ(weights("ek100-sgear"), (std::vector<double>{2.5, 0.5}));
  EXPECT_EQ(weights("ek100-2b"), (std::vector<double>{2.5, 1.5, 0.5}));
  EXPECT_EQ(weights("ek55"), (std::vector<double>{1.5, 1.5, 1.5, 1.0, 1.0}));
  EXPECT_THROW(ensemble_preset("ek200"), ConfigError);
}

TEST(Marginalize, VerbNounSums) {
  const auto map = parse_action_map("action,verb,noun\n0,0,0\n1,0,1\n2,1,1\n");
  EXPECT_EQ(map.verbs, 2u);
  EXPECT_EQ(map.nouns, 2u);
  PredictionSet p{3, {pred("a", {0.5, 0.3, 0.2}, 2)}};
  const auto [verbs, nouns] = marginalize(p, map);
  EXPECT_DOUBLE_EQ(verbs.items[0].probs[0], 0.8);
  EXPECT_DOUBLE_EQ(verbs.items[0].probs[1], 0.2);
  EXPECT_DOUBLE_EQ(nouns.items[0].probs[1], 0.5);
  EXPECT_EQ(verbs.items[0].truth, 1u);
  EXPECT_EQ(nouns.items[0].truth, 1u);
  EXPECT_THROW(parse_action_map("action,verb,noun\n0,0,0\n2,1,1\n"), ValidationError);
}

TEST(PredictionFile, RoundTrip) {
  std::mt19937_64 gen(1);
  auto p = random_set(gen, 10, 5);
  p.items[3].verb = 2;
  p.items[3].noun = 4;
  EXPECT_EQ(decode_predictions(encode_predictions(p)), p);
  EXPECT_THROW(decode_predictions("{\"clip_id\":\"a\",\"probs\":[0.5,0.6],\"truth\":0}\n"), ValidationError);
  EXPECT_THROW(decode_predictions("not json\n"), ValidationError);
}

TEST(Csv, Layout) {
  const auto t = metrics_table({{"run", Metrics{4, 0.5, 1.0, 0.75}}});
  EXPECT_EQ(t.str(), "name,clips,top1,top5,mean_top5_recall\nrun,4,0.5,1,0.75\n");
}

namespace {

struct Trained {
  data::SyntheticDataset data;
  std::vector<train::Sample> samples;
  std::unique_ptr<model::SGearModel> model;
};

Trained trained_model(std::size_t frames = 5) {
  Trained t;
  data::SyntheticOptions o;
  o.num_classes = 5;
  o.frames = frames;
  o.tokens = 1;
  o.channels = 8;
  o.clips = 40;
  o.seed = 12;
  o.tau_a = 1.0;
  o.co_graph = data::cycle_graph(5, 0.8);
  t.data = data::generate_synthetic_dataset(o);
  t.samples = train::make_samples(t.data.dataset);

  model::ModelConfig m;
  m.encoder.mode = "adapter";
  m.encoder.d = 8;
  m.encoder.input_dim = 8;
  m.decoder.d = 8;
  m.decoder.layers = 1;
  m.decoder.heads = 2;
  m.decoder.mlp_hidden = 16;
  m.num_classes = 5;
  m.frames = frames;
  m.toggles = model::Toggles::named("4");
  t.model = std::make_unique<model::SGearModel>(m, t.data.language.to_tensor());
  auto tc = train::make_preset("desk");
  tc.toggles = m.toggles;
  tc.epochs = 30;
  train::Trainer tr(*t.model, tc, t.samples.size());
  tr.fit(t.samples);
  return t;
}

}  // namespace

TEST(VariableTau, TrainingTauEqualsPlainEvaluation) {
  auto t = trained_model();
  const auto rows = eval_variable_tau(*t.model, t.samples, 1.0, 1.0, {1.0, 2.0, 3.0});
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].steps, 0u);
  EXPECT_EQ(rows[2].steps, 2u);
  const auto plain = compute_metrics(predict(*t.model, t.samples));
  EXPECT_EQ(rows[0].metrics.top1, plain.top1);
  EXPECT_EQ(rows[0].metrics.mean_top5_recall, plain.mean_top5_recall);
  // Predicting further ahead does not get better on Markov data.
  EXPECT_GT(rows[0].metrics.top1, 0.6);
  EXPECT_LE(rows[2].metrics.top1, rows[0].metrics.top1 + 0.05);

  EXPECT_THROW(eval_variable_tau(*t.model, t.samples, 1.0, 1.0, {0.5}), ConfigError);
  EXPECT_THROW(eval_variable_tau(*t.model, t.samples, 1.0, 1.0, {9.0}), ConfigError);
}

TEST(RatioSweep, FullRatioEqualsPlainEvaluation) {
  auto t = trained_model(3);
  const auto plain = predict(*t.model, t.samples);
  const auto rows = prototype_ratio_sweep(*t.model, t.samples, {1.0, 0.5, 0.2});
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].comparisons, 5u);
  EXPECT_EQ(rows[1].comparisons, 3u);
  EXPECT_EQ(rows[2].comparisons, 1u);
  const auto full = compute_metrics(plain);
  EXPECT_EQ(rows[0].metrics.top1, full.top1);
  EXPECT_EQ(rows[0].metrics.mean_top5_recall, full.mean_top5_recall);
  for (const auto& r : rows) EXPECT_LT(r.max_simplex_error, 1e-12);
  // The model's own subset is back in place.
  EXPECT_EQ(predict(*t.model, t.samples), plain);
  EXPECT_EQ(model::subset_size(4053, 0.1), 406u);
}
