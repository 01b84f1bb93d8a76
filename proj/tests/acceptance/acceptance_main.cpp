// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails that was not passed as --known-failure.

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spurious/checkpoint.hpp"
#include "spurious/commands.hpp"
#include "spurious/episodes.hpp"
#include "spurious/errors.hpp"
#include "spurious/model.hpp"
#include "spurious/report.hpp"
#include "spurious/synthbench.hpp"
#include "spurious/train.hpp"

namespace sp = spurious;
namespace fs = std::filesystem;

namespace {

// Training setup shared by every benchmark run. Extractor and budget are the
// same for the episodic and ERM methods.
const char* kBenchConfig =
    "epochs=100\n"
    "tasks_per_epoch=80\n"
    "lr=0.01\n"
    "momentum=0.9\n"
    "weight_decay=0.0001\n"
    "tau=5\n"
    "n_support=10\n"
    "metric=tanh_abs_log_ratio\n"
    "selection=pseudo-unbiased\n"
    "seed=0\n"
    "layers=64,32\n"
    "activation=relu\n"
    "min_frequency=10\n"
    "erm_batch_size=32\n";

constexpr double kRequiredGain = 0.10;
constexpr double kRequiredGapRatio = 0.5;
constexpr double kRequiredTopDecileDrop = 0.5;
constexpr double kGradientTolerance = 1e-4;
constexpr double kFiniteDifferenceStep = 1e-5;
constexpr double kChiSquareAlpha = 0.01;
constexpr std::size_t kGainSeeds = 3;
constexpr std::size_t kOrderingSeeds = 5;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void put(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << std::fixed << v;
  return s.str();
}

class Workspace {
 public:
  explicit Workspace(fs::path root) : root_(std::move(root)) {
    fs::remove_all(root_);
    fs::create_directories(root_);
    put(config_path("meta-aware"), std::string(kBenchConfig) + "method=meta-aware\n");
    put(config_path("meta-random"), std::string(kBenchConfig) + "method=meta-random\n");
    put(config_path("erm"), std::string(kBenchConfig) + "method=erm\n");
  }

  const fs::path& root() const { return root_; }
  fs::path config_path(const std::string& method) const { return root_ / ("config_" + method + ".txt"); }
  fs::path data_dir(std::size_t seed) const { return root_ / ("data_" + std::to_string(seed)); }
  fs::path run_dir(const std::string& method, std::size_t seed) const {
    return root_ / ("run_" + method + "_" + std::to_string(seed));
  }

  // Default benchmark for one seed, generated on first use.
  fs::path data(std::size_t seed) {
    const auto dir = data_dir(seed);
    if (!fs::exists(dir / sp::data_files::kSpec)) {
      std::ostringstream log;
      if (sp::cmd_gendata({std::nullopt, dir, seed}, log) != sp::kExitOk) {
        throw std::runtime_error("gendata failed: " + log.str());
      }
    }
    return dir;
  }

  // Train + eval through the command layer; cached per (method, seed).
  const sp::MetricsReport& evaluate(const std::string& method, std::size_t seed) {
    const auto key = method + "/" + std::to_string(seed);
    if (auto it = reports_.find(key); it != reports_.end()) return it->second;
    const auto out = run_dir(method, seed);
    std::ostringstream log;
    const auto t0 = std::chrono::steady_clock::now();
    if (sp::cmd_train({config_path(method), data(seed), out, seed, std::nullopt}, log) != sp::kExitOk ||
        sp::cmd_eval({sp::best_checkpoint_path(out), data(seed), out / "eval", 10}, log) != sp::kExitOk) {
      throw std::runtime_error(method + " seed " + std::to_string(seed) + " failed: " + log.str());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    auto report = sp::read_report_json(out / "eval" / "report.json");
    std::cout << "  run " << method << " seed " << seed << ": average " << fmt(report.average_accuracy)
              << ", worst-group " << fmt(report.worst_group_accuracy) << ", gap "
              << fmt(report.accuracy_gap) << " (" << fmt(secs, 1) << " s)\n";
    return reports_.emplace(key, std::move(report)).first->second;
  }

 private:
  fs::path root_;
  std::map<std::string, sp::MetricsReport> reports_;
};

struct MeanStats {
  double worst_group = 0.0;
  double gap = 0.0;
};

MeanStats mean_over_seeds(Workspace& ws, const std::string& method, std::size_t seeds) {
  MeanStats m;
  for (std::size_t s = 0; s < seeds; ++s) {
    const auto& r = ws.evaluate(method, s);
    m.worst_group += r.worst_group_accuracy / static_cast<double>(seeds);
    m.gap += r.accuracy_gap / static_cast<double>(seeds);
  }
  return m;
}

Outcome robustness_gain(Workspace& ws) {
  const auto meta = mean_over_seeds(ws, "meta-aware", kGainSeeds);
  const auto erm = mean_over_seeds(ws, "erm", kGainSeeds);
  const double gain = meta.worst_group - erm.worst_group;
  const bool pass = gain >= kRequiredGain && meta.gap <= kRequiredGapRatio * erm.gap;
  return {pass, "worst-group " + fmt(meta.worst_group) + " vs ERM " + fmt(erm.worst_group) + " (gain " +
                    fmt(100 * gain, 2) + " pp, need >= " + fmt(100 * kRequiredGain, 0) + "); gap " +
                    fmt(meta.gap) + " vs ERM " + fmt(erm.gap) + " (ratio " + fmt(meta.gap / erm.gap, 3) +
                    ", need <= " + fmt(kRequiredGapRatio, 2) + ")"};
}

Outcome ablation_ordering(Workspace& ws) {
  const double aware = mean_over_seeds(ws, "meta-aware", kOrderingSeeds).worst_group;
  const double random = mean_over_seeds(ws, "meta-random", kOrderingSeeds).worst_group;
  const double erm = mean_over_seeds(ws, "erm", kOrderingSeeds).worst_group;
  return {aware >= random && random >= erm,
          "mean worst-group over " + std::to_string(kOrderingSeeds) + " seeds: aware " + fmt(aware) +
              ", random " + fmt(random) + ", ERM " + fmt(erm)};
}

// Mean score over the top decile of initial (class, attribute) scores, before
// and after training.
Outcome spuriousness_mitigation(Workspace& ws) {
  double before_sum = 0.0, after_sum = 0.0;
  std::ostringstream per_seed;
  for (std::size_t s = 0; s < kGainSeeds; ++s) {
    ws.evaluate("meta-aware", s);
    const auto dir = ws.run_dir("meta-aware", s);
    auto initial = sp::read_spuriousness_csv(dir / "spuriousness_initial.csv");
    std::map<std::pair<std::string, std::string>, double> final_scores;
    for (const auto& r : sp::read_spuriousness_csv(dir / "spuriousness_final.csv")) {
      final_scores[{r.class_name, r.attribute}] = r.score;
    }
    std::stable_sort(initial.begin(), initial.end(),
                     [](const auto& a, const auto& b) { return a.score > b.score; });
    const std::size_t top = std::max<std::size_t>(1, (initial.size() + 9) / 10);
    double before = 0.0, after = 0.0;
    for (std::size_t i = 0; i < top; ++i) {
      before += initial[i].score / static_cast<double>(top);
      after += final_scores.at({initial[i].class_name, initial[i].attribute}) / static_cast<double>(top);
    }
    per_seed << (s ? ", " : "") << fmt(before) << "->" << fmt(after);
    before_sum += before;
    after_sum += after;
  }
  const double drop = 1.0 - after_sum / before_sum;
  return {drop >= kRequiredTopDecileDrop, "top-decile mean " + fmt(before_sum / kGainSeeds) + " -> " +
                                              fmt(after_sum / kGainSeeds) + " (drop " + fmt(100 * drop, 1) +
                                              "%, need >= 50%); per seed " + per_seed.str()};
}

Outcome gradient_oracle() {
  sp::Rng rng(2024);
  const sp::Activation acts[] = {sp::Activation::kRelu, sp::Activation::kTanh, sp::Activation::kLinear};
  const int configs = 12;
  double worst = 0.0;
  for (int c = 0; c < configs; ++c) {
    const std::size_t k = 2 + rng.below(3), n = 1 + rng.below(5), in = 3 + rng.below(6);
    sp::FeatureStore data;
    data.features = sp::Matrix(static_cast<Eigen::Index>(2 * k * n), static_cast<Eigen::Index>(in));
    for (Eigen::Index i = 0; i < data.features.size(); ++i) data.features(i) = rng.normal();
    data.num_classes = k;
    sp::Episode ep;
    std::size_t s = 0;
    for (std::size_t y = 0; y < k; ++y) {
      ep.classes.push_back(static_cast<int>(y));
      for (std::size_t i = 0; i < n; ++i) {
        data.labels.push_back(static_cast<int>(y));
        ep.support.push_back({s++, static_cast<int>(y)});
        data.labels.push_back(static_cast<int>(y));
        ep.query.push_back({s++, static_cast<int>(y)});
      }
    }
    std::vector<std::size_t> dims = {in, 4 + rng.below(8), 2 + rng.below(6)};
    auto params = sp::ExtractorParams::random(dims, acts[c % 3], rng);
    // Cosine is not differentiable at the origin; nonzero biases keep
    // embeddings away from it.
    for (auto& layer : params.mutable_layers())
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = 0.5 * rng.normal();
    const double tau = c % 2 ? 5.0 : 10.0;
    const auto grad = sp::episode_gradient(params, ep, data, tau);
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
      auto check = [&](double& slot, double analytic) {
        const double saved = slot;
        slot = saved + kFiniteDifferenceStep;
        const double up = sp::episode_loss(params, ep, data, tau);
        slot = saved - kFiniteDifferenceStep;
        const double down = sp::episode_loss(params, ep, data, tau);
        slot = saved;
        const double numeric = (up - down) / (2 * kFiniteDifferenceStep);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
        worst = std::max(worst, std::abs(analytic - numeric) / denom);
      };
      auto& layer = params.mutable_layers()[l];
      for (Eigen::Index i = 0; i < layer.weight.size(); ++i) check(layer.weight(i), grad.gradient.layers[l].weight(i));
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i) check(layer.bias(i), grad.gradient.layers[l].bias(i));
    }
  }
  return {worst < kGradientTolerance, std::to_string(configs) + " configurations, max relative error " +
                                          std::to_string(worst) + " (need < 1e-4)"};
}

Outcome metric_suite() {
  using M = sp::SpuriousnessMetric;
  const M all[] = {M::kTanhAbsLogRatio, M::kAbsDelta, M::kDelta, M::kTanhLogRatio, M::kConstant};
  std::vector<std::string> failures;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };
  // tanh(ln 4) = 15/17
  constexpr double kTanhLn4 = 0.88235294117647058823529411764705882;
  expect(sp::score_from_accuracies(0.9, 0.9, 20, 20, M::kTanhAbsLogRatio) == 0.0, "equal accuracies");
  expect(std::abs(sp::score_from_accuracies(0.8, 0.2, 20, 20, M::kTanhAbsLogRatio) - kTanhLn4) <= 1e-9,
         "tanh(ln 4)");
  for (M m : all) {
    expect(sp::score_from_accuracies(0.0, 0.7, 0, 5, m) == 0.0, "empty member " + sp::metric_name(m));
    expect(sp::score_from_accuracies(0.7, 0.0, 5, 0, m) == 0.0, "empty complement " + sp::metric_name(m));
  }
  sp::Rng rng(99);
  for (int i = 0; i < 1000; ++i) {
    const double p = rng.uniform(), q = rng.uniform();
    const std::size_t n = 1 + rng.below(100), m = 1 + rng.below(100);
    const double tal = sp::score_from_accuracies(p, q, n, m, M::kTanhAbsLogRatio);
    const double ad = sp::score_from_accuracies(p, q, n, m, M::kAbsDelta);
    const double d = sp::score_from_accuracies(p, q, n, m, M::kDelta);
    const double tl = sp::score_from_accuracies(p, q, n, m, M::kTanhLogRatio);
    const double c = sp::score_from_accuracies(p, q, n, m, M::kConstant);
    const std::string at = " at p=" + std::to_string(p) + " q=" + std::to_string(q);
    expect(tal >= 0.0 && tal < 1.0, "tanh_abs_log_ratio range" + at);
    expect(ad >= 0.0 && ad <= 1.0, "abs_delta range" + at);
    expect(d >= -1.0 && d <= 1.0, "delta range" + at);
    expect(tl > -1.0 && tl < 1.0, "tanh_log_ratio range" + at);
    expect(c == 1.0, "constant" + at);
    expect(std::abs(sp::score_from_accuracies(q, p, m, n, M::kTanhAbsLogRatio) - tal) <= 1e-12,
           "tanh_abs_log_ratio symmetry" + at);
    expect(sp::score_from_accuracies(q, p, m, n, M::kAbsDelta) == ad, "abs_delta symmetry" + at);
    expect(sp::score_from_accuracies(q, p, m, n, M::kDelta) == -d, "delta antisymmetry" + at);
    expect(std::abs(sp::score_from_accuracies(q, p, m, n, M::kTanhLogRatio) + tl) <= 1e-12,
           "tanh_log_ratio antisymmetry" + at);
    expect(sp::score_from_accuracies(q, p, m, n, M::kConstant) == 1.0, "constant symmetry" + at);
  }
  if (failures.empty()) return {true, "edge cases and 1000 random (p, q) pairs over 5 metrics"};
  return {false, std::to_string(failures.size()) + " violations, first: " + failures.front()};
}

// Pools cells with expected count below 5 into one bin before the test.
double chi_square_p_value(const std::vector<double>& observed, const std::vector<double>& expected) {
  std::vector<double> obs, exp;
  double pooled_obs = 0.0, pooled_exp = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (expected[i] <= 0.0) continue;
    if (expected[i] < 5.0) {
      pooled_obs += observed[i];
      pooled_exp += expected[i];
    } else {
      obs.push_back(observed[i]);
      exp.push_back(expected[i]);
    }
  }
  if (pooled_exp > 0.0) {
    obs.push_back(pooled_obs);
    exp.push_back(pooled_exp);
  }
  if (obs.size() < 2) return 1.0;
  double stat = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) stat += (obs[i] - exp[i]) * (obs[i] - exp[i]) / exp[i];
  return boost::math::cdf(boost::math::complement(
      boost::math::chi_squared(static_cast<double>(obs.size() - 1)), stat));
}

Outcome episode_suite(Workspace& ws) {
  const auto bundle = sp::load_data_dir(ws.data(0), 10);
  const auto& train = bundle.train_groups;
  auto cfg = sp::parse_train_config(kBenchConfig);
  const auto init = sp::initial_extractor(cfg, train.store.dim());
  const auto table = sp::current_spuriousness(init, train, cfg.tau, cfg.metric, 1);
  sp::EpisodeConfig ecfg;
  ecfg.n_support = cfg.n_support;
  const std::size_t K = train.groups.num_classes();
  const std::size_t A = train.groups.num_attributes();

  // Each attempt draws a pair independently and infeasible pairs are redrawn,
  // so an accepted pair follows the draw law conditioned on feasibility.
  std::vector<std::vector<std::vector<double>>> law(
      K, std::vector<std::vector<double>>(A, std::vector<double>(A, 0.0)));
  std::size_t infeasible_pairs = 0;
  for (std::size_t k = 0; k < K; ++k) {
    const auto dist = sp::sampling_distribution(table, k);
    std::vector<std::size_t> realizable;
    for (std::size_t a = 0; a < A; ++a)
      if (!train.groups.members(k, a).empty()) realizable.push_back(a);
    double total = 0.0;
    for (std::size_t a = 0; a < A; ++a) {
      if (dist[a] <= 0.0) continue;
      double rest = 0.0;
      for (std::size_t b = 0; b < A; ++b) rest += b == a ? 0.0 : dist[b];
      for (std::size_t b = 0; b < A; ++b) {
        if (b == a) continue;
        double p = 0.0;
        if (rest > 0.0) {
          p = dist[a] * dist[b] / rest;
        } else if (!train.groups.members(k, b).empty()) {
          const auto others = realizable.size() - (train.groups.members(k, a).empty() ? 0 : 1);
          p = dist[a] / static_cast<double>(others);
        }
        if (p <= 0.0) continue;
        if (sp::exclusive_members(train.groups, k, a, b).size() < ecfg.n_support ||
            sp::exclusive_members(train.groups, k, b, a).size() < ecfg.n_support) {
          ++infeasible_pairs;
          continue;
        }
        law[k][a][b] = p;
        total += p;
      }
    }
    if (total <= 0.0) return {false, "class " + std::to_string(k) + " has no feasible pair"};
    for (auto& row : law[k])
      for (double& v : row) v /= total;
  }

  const int episodes = 1000;
  std::vector<std::vector<double>> first(K, std::vector<double>(A, 0.0));
  std::vector<std::vector<std::vector<double>>> second(
      K, std::vector<std::vector<double>>(A, std::vector<double>(A, 0.0)));
  std::vector<std::string> failures;
  for (int e = 0; e < episodes; ++e) {
    const auto ep = sp::make_episode(train.groups, &table, ecfg, sp::derive_seed(77, static_cast<std::uint64_t>(e)));
    if (ep.support.size() != K * ecfg.n_support || ep.query.size() != K * ecfg.n_support) {
      failures.push_back("episode " + std::to_string(e) + " has wrong sizes");
    }
    std::set<std::size_t> support_ids;
    for (const auto& it : ep.support) support_ids.insert(it.sample);
    for (const auto& it : ep.query) {
      if (support_ids.count(it.sample)) failures.push_back("episode " + std::to_string(e) + " reuses a sample");
    }
    for (std::size_t c = 0; c < ep.classes.size(); ++c) {
      const auto k = static_cast<std::size_t>(ep.classes[c]);
      const auto [a, b] = ep.chosen_pairs[c];
      if (a == b) failures.push_back("episode " + std::to_string(e) + " repeats an attribute");
      first[k][a] += 1.0;
      second[k][a][b] += 1.0;
      for (const auto& it : ep.support) {
        if (it.label != static_cast<int>(k)) continue;
        if (!train.groups.has_attribute(it.sample, a) || train.groups.has_attribute(it.sample, b))
          failures.push_back("episode " + std::to_string(e) + " support breaks the shift");
      }
      for (const auto& it : ep.query) {
        if (it.label != static_cast<int>(k)) continue;
        if (!train.groups.has_attribute(it.sample, b) || train.groups.has_attribute(it.sample, a))
          failures.push_back("episode " + std::to_string(e) + " query breaks the shift");
      }
    }
  }

  double min_p = 1.0;
  std::size_t tests = 0;
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> expected(A, 0.0);
    for (std::size_t a = 0; a < A; ++a)
      for (std::size_t b = 0; b < A; ++b) expected[a] += episodes * law[k][a][b];
    min_p = std::min(min_p, chi_square_p_value(first[k], expected));
    ++tests;
    // Second choice given the first, for first choices seen often enough.
    for (std::size_t a = 0; a < A; ++a) {
      if (first[k][a] < 50.0) continue;
      std::vector<double> cond(A, 0.0);
      const double row = expected[a] / episodes;
      for (std::size_t b = 0; b < A; ++b) cond[b] = first[k][a] * law[k][a][b] / row;
      min_p = std::min(min_p, chi_square_p_value(second[k][a], cond));
      ++tests;
    }
  }
  // Several tests share one significance level; Bonferroni keeps the family at alpha.
  const double threshold = kChiSquareAlpha / static_cast<double>(tests);
  const bool pass = failures.empty() && min_p > threshold;
  std::string detail = std::to_string(episodes) + " episodes, " + std::to_string(failures.size()) +
                       " property violations, " +
                       std::to_string(infeasible_pairs) + " undersized pairs excluded, min chi-square p " + std::to_string(min_p) + " over " +
                       std::to_string(tests) + " tests (need > " + std::to_string(threshold) + ")";
  if (!failures.empty()) detail += "; first violation: " + failures.front();
  return {pass, detail};
}

Outcome determinism(Workspace& ws, const std::string& cli) {
  const auto cfg = ws.config_path("meta-aware");
  const auto data = ws.data(0);
  std::string outputs[2];
  for (int i = 0; i < 2; ++i) {
    const auto out = ws.root() / ("determinism_" + std::to_string(i));
    const std::string cmd = cli + " train --config " + cfg.string() + " --data " + data.string() + " --out " +
                            out.string() + " --seed 5 > " + (out.string() + ".log") + " 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc != 0) return {false, "train run " + std::to_string(i) + " exited with " + std::to_string(rc)};
    outputs[i] = out.string();
  }
  const bool history_same = slurp(fs::path(outputs[0]) / "history.csv") == slurp(fs::path(outputs[1]) / "history.csv");
  const auto last = sp::checkpoint_name(sp::parse_train_config(kBenchConfig).epochs);
  const bool ckpt_same = slurp(fs::path(outputs[0]) / last) == slurp(fs::path(outputs[1]) / last);
  const bool nonempty = !slurp(fs::path(outputs[0]) / last).empty();
  return {history_same && ckpt_same && nonempty,
          std::string("history.csv ") + (history_same ? "identical" : "differs") + ", " + last + " " +
              (ckpt_same && nonempty ? "identical" : "differs")};
}

Outcome caption_fidelity(Workspace& ws) {
  sp::PosLexicon lex;
  for (const char* w : {"green", "wooden"}) lex.add(w, sp::PosTag::kAdj);
  for (const char* w : {"vase", "top", "table"}) lex.add(w, sp::PosTag::kNoun);
  for (const char* w : {"a", "sitting", "on", "of"}) lex.add(w, sp::PosTag::kOther);
  const auto got = sp::extract_attributes("a green vase sitting on top of a wooden table", lex);
  const std::set<std::string> want = {"green", "vase", "top", "wooden", "table"};
  const bool example = got == want;

  const auto bundle = sp::load_data_dir(ws.data(0), 10);
  const auto spec = sp::default_bench_spec();
  std::size_t total = 0, recovered = 0;
  auto check_split = [&](const sp::SplitData& split, const sp::GroupIndex& groups) {
    for (std::size_t i = 0; i < split.size(); ++i) {
      ++total;
      const auto word = spec.attribute_word(static_cast<std::size_t>(split.attributes[i]));
      const auto idx = bundle.vocab.index_of(word);
      if (idx && groups.has_attribute(i, *idx)) ++recovered;
    }
  };
  check_split(bundle.train, bundle.train_groups.groups);
  check_split(bundle.val, bundle.val_groups.groups);
  if (bundle.test_groups) check_split(bundle.test, *bundle.test_groups);
  const double rate = static_cast<double>(recovered) / static_cast<double>(total);
  return {example && recovered == total,
          std::string("worked example ") + (example ? "exact" : "differs") + "; latent attribute recovered for " +
              std::to_string(recovered) + "/" + std::to_string(total) + " samples (" + fmt(100 * rate, 2) + "%)"};
}

Outcome tau_sweep(Workspace& ws) {
  const std::vector<double> taus = {1, 5, 10, 50, 100};
  std::ostringstream log;
  const auto out = ws.root() / "tau_sweep";
  const int rc = sp::cmd_sweep_tau({ws.config_path("meta-aware"), ws.data(0), out, taus, 0}, log);
  if (rc != sp::kExitOk) return {false, "sweep exited with " + std::to_string(rc) + ": " + log.str()};
  std::istringstream csv(slurp(out / "tau_sweep.csv"));
  std::string line;
  std::getline(csv, line);
  if (line != "tau,average_accuracy,worst_group_accuracy,accuracy_gap,best_epoch") {
    return {false, "unexpected header '" + line + "'"};
  }
  std::vector<std::string> problems;
  std::size_t rows = 0;
  std::ostringstream summary;
  while (std::getline(csv, line)) {
    std::vector<double> v;
    std::stringstream fields(line);
    std::string f;
    while (std::getline(fields, f, ',')) v.push_back(std::stod(f));
    if (v.size() != 5) {
      problems.push_back("malformed row '" + line + "'");
      continue;
    }
    if (rows < taus.size() && v[0] != taus[rows]) problems.push_back("row " + std::to_string(rows) + " tau mismatch");
    const bool in_range = v[1] >= 0 && v[1] <= 1 && v[2] >= 0 && v[2] <= 1 && v[2] <= v[1];
    if (!in_range) problems.push_back("accuracy out of range at tau " + f);
    if (std::abs(v[3] - (v[1] - v[2])) > 1e-12) problems.push_back("gap mismatch at tau " + std::to_string(v[0]));
    std::ostringstream label;
    label << v[0];
    const auto report_path = out / ("tau_" + label.str()) / "eval" / "report.json";
    if (!fs::exists(report_path)) {
      problems.push_back("missing " + report_path.string());
    } else {
      const auto report = sp::read_report_json(report_path);
      if (report.worst_group_accuracy != v[2] || report.average_accuracy != v[1])
        problems.push_back("report differs from CSV at tau " + label.str());
    }
    summary << (rows ? ", " : "") << "tau " << label.str() << ": wg " << fmt(v[2]);
    ++rows;
  }
  if (rows != taus.size()) problems.push_back(std::to_string(rows) + " rows");
  if (!problems.empty()) return {false, problems.front()};
  return {true, std::to_string(rows) + " rows consistent with their reports (" + summary.str() + ")"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string workdir = (fs::temp_directory_path() / "spurious_acceptance").string();
  std::string cli = SPURIOUS_CLI_PATH;
  app.add_option("--workdir", workdir, "scratch directory (wiped on start)");
  app.add_option("--cli", cli, "spurious_cli executable");
  std::vector<int> known_failures;
  app.add_option("--known-failure", known_failures,
                 "criterion still reported as FAIL but left out of the exit status");
  CLI11_PARSE(app, argc, argv);

  Workspace ws{fs::path(workdir)};
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "robustness gain over ERM", [&] { return robustness_gain(ws); }},
      {2, "ablation ordering", [&] { return ablation_ordering(ws); }},
      {3, "spuriousness mitigation", [&] { return spuriousness_mitigation(ws); }},
      {4, "gradient oracle", [] { return gradient_oracle(); }},
      {5, "metric suite", [] { return metric_suite(); }},
      {6, "episode properties", [&] { return episode_suite(ws); }},
      {7, "determinism", [&] { return determinism(ws, cli); }},
      {8, "caption pipeline fidelity", [&] { return caption_fidelity(ws); }},
      {9, "tau sweep harness", [&] { return tau_sweep(ws); }},
  };
  std::vector<std::string> lines;
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const bool known = std::find(known_failures.begin(), known_failures.end(), c.id) != known_failures.end();
    failed += o.pass || known ? 0 : 1;
    lines.push_back("criterion " + std::to_string(c.id) + " [" + (o.pass ? "PASS" : "FAIL") + "] " + c.name +
                    ": " + o.detail + (!o.pass && known ? " (known failure, not counted in exit status)" : ""));
    std::cout << lines.back() << std::endl;
  }
  std::cout << "\nsummary\n";
  for (const auto& l : lines) std::cout << l << '\n';
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " unexpected criteria failures") << '\n';
  return failed == 0 ? 0 : 1;
}
