#include <afglosa/baselines.hpp>
#include <afglosa/errors.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace afglosa;

namespace {

/// Whether time `t` from now falls in a green window, stepping the cycle forward.
bool green_at(double t, PhaseInfo now, double green, double red) {
	const double cycle = green + red;
	// position inside the cycle measured from the start of green
	const double pos = now.phase == Phase::green ? green - now.remaining : green + (red - now.remaining);
	const double u = std::fmod(pos + t, cycle);
	return u < green;
}

}  // namespace

TEST(Methods, NamesRoundTrip) {
	for (auto m : {Method::benchmark, Method::rule_glosa, Method::l_glosa, Method::af_glosa}) {
		EXPECT_EQ(method_from_string(to_string(m)), m);
	}
	EXPECT_THROW(method_from_string("s_glosa"), ConfigError);
	EXPECT_FALSE(is_learnable(Method::benchmark));
	EXPECT_FALSE(is_learnable(Method::rule_glosa));
	EXPECT_TRUE(is_learnable(Method::af_glosa));
}

TEST(RuleTarget, SlowsToCatchTheNextGreen) {
	// 240 m at 11 m/s arrives at 21.8 s, during red; green starts in 30 s
	const auto v = rule_glosa_target(240.0, 11.0, {Phase::red, 30.0}, 20.0, 40.0, 4.0, 11.0);
	ASSERT_TRUE(v.has_value());
	EXPECT_DOUBLE_EQ(*v, 8.0);
}

TEST(RuleTarget, SilentWhenAlreadyArrivingInGreen) {
	EXPECT_FALSE(rule_glosa_target(100.0, 11.0, {Phase::green, 15.0}, 20.0, 20.0, 4.0, 11.0).has_value());
	// the arrival falls into the window after the coming red
	EXPECT_FALSE(rule_glosa_target(240.0, 8.0, {Phase::green, 5.0}, 20.0, 20.0, 4.0, 11.0).has_value());
}

TEST(RuleTarget, FallsBackToMinimumSpeed) {
	const auto v = rule_glosa_target(240.0, 11.0, {Phase::red, 100.0}, 20.0, 100.0, 4.0, 11.0);
	ASSERT_TRUE(v.has_value());
	EXPECT_EQ(*v, 4.0);
}

TEST(RuleTarget, SpeedsUpForTheCurrentGreen) {
	// 8 m/s misses the end of green at 12 s; 11 m/s makes it
	const auto v = rule_glosa_target(120.0, 8.0, {Phase::green, 12.0}, 20.0, 20.0, 4.0, 11.0);
	ASSERT_TRUE(v.has_value());
	EXPECT_DOUBLE_EQ(*v, 11.0);
}

TEST(RuleTarget, StoppedVehicleGetsAnAdvisory) {
	const auto v = rule_glosa_target(200.0, 0.0, {Phase::green, 10.0}, 20.0, 20.0, 4.0, 11.0);
	ASSERT_TRUE(v.has_value());
	EXPECT_GE(*v, 4.0);
	EXPECT_LE(*v, 11.0);
}

TEST(RuleTarget, TargetLandsInGreen) {
	std::mt19937_64 rng(12);
	std::uniform_real_distribution<double> dist(10.0, 240.0);
	std::uniform_real_distribution<double> speed(0.0, 11.0);
	std::uniform_real_distribution<double> rem(0.01, 20.0);
	std::bernoulli_distribution red(0.5);
	int checked = 0;
	for (int k = 0; k < 20000; ++k) {
		const PhaseInfo ph{red(rng) ? Phase::red : Phase::green, rem(rng)};
		const double d = dist(rng);
		const double v = speed(rng);
		const auto target = rule_glosa_target(d, v, ph, 20.0, 20.0, 4.0, 11.0);
		if (!target) {
			ASSERT_GT(v, 0.0);
			EXPECT_TRUE(green_at(d / v, ph, 20.0, 20.0));
			continue;
		}
		ASSERT_GE(*target, 4.0);
		ASSERT_LE(*target, 11.0);
		if (*target > 4.0) {
			// the boundary case t == window start counts as green
			EXPECT_TRUE(green_at(d / *target + 1e-9, ph, 20.0, 20.0)) << d << " " << v << " " << *target;
			++checked;
		}
	}
	EXPECT_GT(checked, 1000);
}

TEST(Episode, LearnedMethodsNeedAMatchingPolicy) {
	GlosaEnv env(EnvConfig{});
	EXPECT_THROW(run_episode(env, Method::af_glosa, nullptr, 1, 300), ConfigError);
	const auto cont = nn::PolicySet::create(1, false);
	const auto hybrid = nn::PolicySet::create(1, true);
	EXPECT_THROW(run_episode(env, Method::af_glosa, &cont, 1, 300), ConfigError);
	EXPECT_THROW(run_episode(env, Method::l_glosa, &hybrid, 1, 300), ConfigError);
	EXPECT_NO_THROW(run_episode(env, Method::l_glosa, &cont, 1, 300));
}

TEST(Episode, BenchmarkNeverAdvises) {
	GlosaEnv env(EnvConfig{});
	for (std::uint64_t s = 0; s < 10; ++s) {
		const auto out = run_episode(env, Method::benchmark, nullptr, s, 1200);
		EXPECT_EQ(out.advisories, 0);
		EXPECT_GT(out.decisions, 0);
		for (const auto& row : out.trace) {
			EXPECT_EQ(row.gap_bit, 0);
		}
	}
}

TEST(Episode, RuleGlosaAdvisesAtMostOnce) {
	GlosaEnv env(EnvConfig{});
	int advised = 0;
	for (std::uint64_t s = 0; s < 30; ++s) {
		const auto out = run_episode(env, Method::rule_glosa, nullptr, s, 300);
		EXPECT_LE(out.advisories, 1);
		advised += out.advisories;
	}
	EXPECT_GT(advised, 0);
}

TEST(Episode, SilencedPolicyEqualsBenchmark) {
	GlosaEnv env(EnvConfig{});
	const auto p = nn::PolicySet::create(3);
	EpisodeOptions silent;
	silent.force_gap = 0;
	silent.mode = nn::ActMode::stochastic;
	silent.act_seed = 9;
	for (std::uint64_t s = 0; s < 10; ++s) {
		const auto a = run_episode(env, Method::benchmark, nullptr, s, 2700);
		const auto b = run_episode(env, Method::af_glosa, &p, s, 2700, silent);
		EXPECT_EQ(a.metrics, b.metrics);
		ASSERT_EQ(a.trace.size(), b.trace.size());
		for (std::size_t i = 0; i < a.trace.size(); ++i) {
			EXPECT_EQ(a.trace[i].position, b.trace[i].position);
			EXPECT_EQ(a.trace[i].speed, b.trace[i].speed);
		}
	}
}

TEST(Episode, ContinuousOnlyPolicyAdvisesInsideTheZone) {
	GlosaEnv env(EnvConfig{});
	const auto p = nn::PolicySet::create(4, false);
	const auto out = run_episode(env, Method::l_glosa, &p, 2, 300);
	EXPECT_GT(out.advisories, 0);
	EXPECT_LT(out.advisories, out.decisions);  // nothing applies outside the zone
}

TEST(Episode, SameSeedSameOutcome) {
	GlosaEnv env(EnvConfig{});
	const auto p = nn::PolicySet::create(5);
	EpisodeOptions opts;
	opts.mode = nn::ActMode::stochastic;
	opts.act_seed = 4;
	const auto a = run_episode(env, Method::af_glosa, &p, 77, 1200, opts);
	const auto b = run_episode(env, Method::af_glosa, &p, 77, 1200, opts);
	EXPECT_EQ(a.metrics, b.metrics);
	EXPECT_EQ(a.reward, b.reward);
}
