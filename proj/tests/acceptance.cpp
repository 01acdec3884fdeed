// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <unistd.h>
#include <vector>

#include "banditab/cli.hpp"
#include "banditab/harness.hpp"
#include "banditab/metrics.hpp"
#include "banditab/model.hpp"
#include "banditab/policy.hpp"
#include "banditab/stats.hpp"

using namespace banditab;
using big = boost::multiprecision::cpp_bin_float_50;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(bool pass, const std::string& name, const std::string& detail) {
  std::printf("%s  %-37s %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<double> random_simplex(Rng& rng, std::size_t k, double zero_prob) {
  std::vector<double> w(k);
  double s = 0;
  for (auto& x : w) {
    x = rng.bernoulli(zero_prob) ? 0.0 : -std::log(1.0 - rng.uniform());
    s += x;
  }
  if (s == 0) {
    w[rng.below(k)] = 1.0;
    return w;
  }
  for (auto& x : w) x /= s;
  return w;
}

void ucb_oracle() {
  Stopwatch clock;
  Rng rng(2024, StreamTag::Metrics, {1});
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    ScoreParams p;
    p.gamma = rng.uniform() * 10;
    TaskMap<double> est;
    big mean = 0;
    for (TaskKind t : kAllTasks) {
      p.alpha[t] = rng.uniform() * 10;
      est[t] = rng.uniform();
      mean += big(p.alpha[t]) * big(est[t]);
    }
    const auto n_total = static_cast<std::int64_t>(1 + rng.below(1000000));
    const auto n_topic =
        static_cast<std::int64_t>(1 + rng.below(static_cast<std::uint64_t>(n_total)));
    const big bonus = n_total > 1 ? boost::multiprecision::sqrt(
                                        boost::multiprecision::log(big(n_total)) / big(n_topic))
                                  : big(0);
    const big expected = mean + big(p.gamma) * bonus;
    const double got = ucb_score(est, n_total, n_topic, p);
    const big rel = boost::multiprecision::abs((big(got) - expected) / expected);
    worst = std::max(worst, rel.convert_to<double>());
  }
  const double secs = clock.seconds();
  report(worst <= 1e-12 && secs < 1.0, "ucb score oracle",
         fmt("1e4 inputs, max rel err %.2e (<= 1e-12), %.3f s (< 1 s)", worst, secs));
}

double kl_oracle(const std::vector<double>& p, const std::vector<double>& q, double eps) {
  std::vector<big> qi(q.size());
  big total = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    qi[i] = (p[i] > 0 && q[i] == 0) ? big(eps) : big(q[i]);
    total += qi[i];
  }
  big kl = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0) kl += big(p[i]) * boost::multiprecision::log(big(p[i]) * total / qi[i]);
  return kl.convert_to<double>();
}

void metric_oracles() {
  Stopwatch clock;
  Rng rng(2024, StreamTag::Metrics, {2});
  double worst_ei = 0, worst_iu = 0, worst_te = 0;
  for (int i = 0; i < 5000; ++i) {
    const auto p = random_simplex(rng, 30, 0.3);
    const auto q = random_simplex(rng, 30, 0.5);
    const auto P = TopicDistribution::from_weights(p), Q = TopicDistribution::from_weights(q);
    big h = 0, dot = 0;
    for (std::size_t k = 0; k < 30; ++k) {
      if (p[k] > 0) h -= big(p[k]) * boost::multiprecision::log(big(p[k]));
      dot += big(p[k]) * big(q[k]);
    }
    worst_ei = std::max(worst_ei, std::abs(exploration_inefficiency(P, Q, 1e-4) - kl_oracle(p, q, 1e-4)));
    worst_iu = std::max(worst_iu, std::abs(interest_uncertainty(P) - h.convert_to<double>()));
    worst_te = std::max(worst_te, std::abs(topic_excellence(P, Q) - dot.convert_to<double>()));
  }

  // Gibbs: EI >= 0. The unclamped sum is recomputed in long double so that a
  // negative value cannot hide behind the clamp.
  int negative = 0;
  long double most_negative = 0;
  for (int i = 0; i < 100000; ++i) {
    const auto p = random_simplex(rng, 30, 0.4);
    const auto q = random_simplex(rng, 30, 0.4);
    const auto P = TopicDistribution::from_weights(p), Q = TopicDistribution::from_weights(q);
    if (exploration_inefficiency(P, Q, 1e-4) < 0) ++negative;
    long double total = 0, kl = 0;
    for (std::size_t k = 0; k < 30; ++k) total += (p[k] > 0 && q[k] == 0) ? 1e-4L : q[k];
    for (std::size_t k = 0; k < 30; ++k)
      if (p[k] > 0) kl += p[k] * std::log(p[k] / (((q[k] == 0) ? 1e-4L : q[k]) / total));
    most_negative = std::min(most_negative, kl);
  }
  const double secs = clock.seconds();
  const double worst = std::max({worst_ei, worst_iu, worst_te});
  report(worst <= 1e-9 && negative == 0 && most_negative > -1e-12 && secs < 10.0,
         "metric oracles",
         fmt("max abs err EI %.1e IU %.1e TE %.1e (<= 1e-9); EI<0 in %d/1e5 pairs "
             "(raw min %.1e); %.2f s (< 10 s)",
             worst_ei, worst_iu, worst_te, negative, static_cast<double>(most_negative), secs));
}

void posterior_argmax() {
  Rng rng(2024, StreamTag::Metrics, {3});
  const std::vector<BetaPosterior> skewed = {{2.0, 1.0}, {1.0, 1.0}};
  const std::vector<BetaPosterior> symmetric = {{1.0, 1.0}, {1.0, 1.0}};
  const double p1 = estimate_P(skewed, 100000, rng)[0];
  const double s1 = estimate_P(symmetric, 100000, rng)[0];
  report(std::abs(p1 - 2.0 / 3.0) <= 0.01 && std::abs(s1 - 0.5) <= 0.01, "posterior argmax",
         fmt("Beta(2,1) vs Beta(1,1): p1 = %.4f (2/3 +- 0.01); symmetric: %.4f (0.5 +- 0.01)",
             p1, s1));
}

void conjugate_update() {
  // The user's and the topic's completion rates are both 1/2, so the prior is Beta(2, 2)
  // at strength 2; topic 0 then sees 3 impressions with 1 completion.
  const std::vector<TopicTally> user = {{3, 1}, {1, 1}};
  const std::vector<TopicTally> topic = {{6, 3}, {2, 1}};
  const BetaPosterior direct = BetaPosterior::prior(0.5, 2.0).updated(3, 1);
  const BetaPosterior built = build_posteriors(user, topic, 2.0)[0];
  const bool pass = direct == BetaPosterior{3.0, 4.0} && built == BetaPosterior{3.0, 4.0} &&
                    BetaPosterior::prior(0.5, 2.0) == BetaPosterior{2.0, 2.0};
  report(pass, "conjugate update",
         fmt("Beta(2,2) + (3 imp, 1 comp) -> Beta(%g,%g); via tallies Beta(%g,%g)", direct.a,
             direct.b, built.a, built.b));
}

void leakage_dichotomy() {
  // Constructed log: 12 users, 4 per group, 5 topics, 10 days, phases of 5 + 5.
  const PhasePlan plan{5, 5, 1};
  const ModelShape shape{12, 5};
  Rng rng(2024, StreamTag::Outcome, {4});
  std::vector<ImpressionRecord> log;
  for (int d = 0; d < plan.total_days(); ++d)
    for (std::uint32_t u = 0; u < 12; ++u)
      for (int s = 0; s < 4; ++s) {
        ImpressionRecord r;
        r.day = d;
        r.user = UserId{u};
        r.topic = TopicId{static_cast<std::uint32_t>(rng.below(5))};
        r.group = kAllGroups[u % 3];
        r.phase = plan.phase_of(d);
        Outcomes::Flags f;
        f.play = rng.bernoulli(0.4);
        f.completed = f.play && rng.bernoulli(0.5);
        f.like = rng.bernoulli(0.2);
        r.outcomes = Outcomes(f);
        log.push_back(r);
      }
  auto perturbed = log;
  for (auto& r : perturbed)
    if (r.group == Group::Test) {
      Outcomes::Flags f = r.outcomes.flags();
      f.play = !f.play;
      f.like = !f.like;
      f.completed = false;
      f.loop = false;
      r.outcomes = Outcomes(f);
    }

  auto control_predictions = [&](const RewardModel& m) {
    std::vector<double> out;
    for (std::uint32_t u = 0; u < 12; ++u) {
      if (kAllGroups[u % 3] != Group::Control) continue;
      for (std::uint32_t k = 0; k < 5; ++k)
        for (TaskKind t : kAllTasks) out.push_back(m.predict(UserId{u}, TopicId{k}, t));
    }
    return out;
  };

  int phase1_days_changed = 0, phase1_days = 0, phase2_changed = 0, phase2_compared = 0;
  for (int day = 1; day < plan.total_days(); ++day) {
    const DataSlice slice = plan.slice_for(Group::Control, day);
    const auto a = control_predictions(fit(log, slice, 25.0, shape));
    const auto b = control_predictions(fit(perturbed, slice, 25.0, shape));
    if (plan.phase_of(day) == 1) {
      ++phase1_days;
      if (a != b) ++phase1_days_changed;
    } else {
      for (std::size_t i = 0; i < a.size(); ++i) {
        ++phase2_compared;
        if (a[i] != b[i]) ++phase2_changed;
      }
    }
  }
  report(phase1_days_changed == phase1_days && phase2_changed == 0, "leakage dichotomy",
         fmt("Phase I shared model changed for Control on %d/%d refits; Phase II Control "
             "model: %d/%d predictions changed",
             phase1_days_changed, phase1_days, phase2_changed, phase2_compared));
}

ExperimentConfig desk_config() {
  ExperimentConfig c;
  c.users = 5000;
  c.topics = 30;
  c.group_fractions = {0.8, 0.1, 0.1};
  c.phase1_days = 21;
  c.phase2_days = 14;
  c.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return c;
}

void aa_neutrality() {
  Stopwatch clock;
  ExperimentConfig cfg = desk_config();
  cfg.gamma = 0.0;
  std::vector<double> effects;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto r = run_experiment(cfg, seed, RunOptions{false});
    const auto eff = compute_effect(r.metrics.series(Group::Test, "plays"),
                                    r.metrics.series(Group::Control, "plays"));
    effects.push_back(stats::window_mean(eff, 0, eff.size()).value_or(NAN));
  }
  const double m = stats::mean(effects), se = stats::standard_error(effects);
  report(std::abs(m) < 2 * se, "A/A neutrality",
         fmt("gamma = 0, 20 seeds: mean play effect %+.4f, 2 SE = %.4f; %.0f s", m, 2 * se,
             clock.seconds()));
}

struct SeedOutcome {
  bool a, b, c, d, ei_rises, iu_falls;
};

SeedOutcome evaluate_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  const auto r = run_experiment(cfg, seed);
  const MetricTable& m = r.metrics;
  const int p1 = cfg.phase1_days, T = cfg.total_days();
  auto window = [&](Group g, const char* metric, int first, int last) {
    return stats::window_mean(m.series(g, metric), first, last).value_or(NAN);
  };
  const auto eff =
      compute_effect(m.series(Group::Test, "plays"), m.series(Group::Control, "plays"));
  // Late Phase I: its final third.
  const int late = p1 - p1 / 3;
  const double phase2 = stats::window_mean(eff, p1, T).value_or(NAN);
  const double late1 = stats::window_mean(eff, late, p1).value_or(NAN);

  std::vector<double> idx, ei, iu;
  for (std::size_t b = 0; b < m.buckets.size(); ++b)
    if (m.buckets[b].users > 0) {
      idx.push_back(static_cast<double>(b));
      ei.push_back(*m.buckets[b].ei);
      iu.push_back(*m.buckets[b].iu);
    }
  SeedOutcome o;
  o.a = window(Group::Test, "ei_nats", 0, T) < window(Group::Control, "ei_nats", 0, T);
  o.b = window(Group::Test, "td", 0, p1) > window(Group::Control, "td", 0, p1);
  o.c = phase2 > late1;
  o.d = window(Group::Test, "te", p1, T) > window(Group::Control, "te", p1, T);
  o.ei_rises = stats::spearman(idx, ei) > 0;
  o.iu_falls = stats::spearman(idx, iu) < 0;
  return o;
}

void desk_replication(const std::vector<double>& gammas, int seeds) {
  Stopwatch clock;
  struct Tally {
    int a = 0, b = 0, c = 0, d = 0, ei = 0, iu = 0;
  };
  std::vector<Tally> tallies;
  for (double gamma : gammas) {
    ExperimentConfig cfg = desk_config();
    cfg.gamma = gamma;
    Tally t;
    for (int s = 1; s <= seeds; ++s) {
      const SeedOutcome o = evaluate_seed(cfg, static_cast<std::uint64_t>(s));
      t.a += o.a;
      t.b += o.b;
      t.c += o.c;
      t.d += o.d;
      t.ei += o.ei_rises;
      t.iu += o.iu_falls;
    }
    tallies.push_back(t);
  }
  const int need = (8 * seeds + 9) / 10;
  auto line = [&](const char* name, int Tally::*field) {
    std::string detail;
    bool pass = true;
    for (std::size_t i = 0; i < gammas.size(); ++i) {
      const int n = tallies[i].*field;
      pass = pass && n >= need;
      detail += fmt("%sgamma=%g: %d/%d", i ? ", " : "", gammas[i], n, seeds);
    }
    report(pass, name, detail + fmt(" (need >= %d each)", need));
  };
  line("(a) EI test < control", &Tally::a);
  line("(b) TD test > control, Phase I", &Tally::b);
  line("(c) Phase II effect > late Phase I", &Tally::c);
  line("(d) TE test > control, Phase II", &Tally::d);
  line("feedback loop: EI rises w/ activity", &Tally::ei);
  line("feedback loop: IU falls w/ activity", &Tally::iu);
  const double secs = clock.seconds();
  std::printf("      desk runs: U=5000, K=30, 0.8/0.1/0.1, 21+14 days, %zu gammas x %d seeds, "
              "%.0f s total\n",
              gammas.size(), seeds, secs);
}

void default_config_phase2() {
  Stopwatch clock;
  ExperimentConfig cfg;
  cfg.threads = desk_config().threads;
  int positive = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto r = run_experiment(cfg, seed, RunOptions{false});
    const double test = stats::window_mean(r.metrics.series(Group::Test, "plays"),
                                           cfg.phase1_days, cfg.total_days())
                            .value_or(NAN);
    const double control = stats::window_mean(r.metrics.series(Group::Control, "plays"),
                                              cfg.phase1_days, cfg.total_days())
                               .value_or(NAN);
    positive += test > control;
  }
  report(positive > 5, "default config: Phase II plays",
         fmt("Test mean daily plays > Control on %d/10 seeds (need a majority); %.0f s", positive,
             clock.seconds()));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void determinism() {
  const fs::path root =
      fs::temp_directory_path() / ("banditab-acceptance-" + std::to_string(::getpid()));
  ExperimentConfig cfg = desk_config();
  cfg.seed = 11;
  cfg.threads = 1;
  cli::simulate_into(cfg, root / "serial");
  cli::simulate_into(cfg, root / "serial-again");
  cfg.threads = 4;
  cli::simulate_into(cfg, root / "parallel");
  bool same = true;
  for (const char* f : {"impressions.jsonl", "metrics.csv"}) {
    const std::string a = slurp(root / "serial" / f);
    same = same && !a.empty() && a == slurp(root / "serial-again" / f) &&
           a == slurp(root / "parallel" / f);
  }
  fs::remove_all(root);
  report(same, "determinism",
         "impressions.jsonl and metrics.csv byte-identical across reruns and 1 vs 4 threads");
}

}  // namespace

int main() {
  Stopwatch total;
  ucb_oracle();
  metric_oracles();
  posterior_argmax();
  conjugate_update();
  leakage_dichotomy();
  aa_neutrality();
  desk_replication({1.0, 2.0, 4.0}, 10);
  default_config_phase2();
  determinism();
  std::printf("%s: %d failing, %.0f s\n", failures == 0 ? "ALL PASS" : "FAILURES", failures,
              total.seconds());
  return failures == 0 ? 0 : 1;
}
