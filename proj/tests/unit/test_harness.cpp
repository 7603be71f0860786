#include <afglosa/errors.hpp>
#include <afglosa/harness.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace afglosa;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
	const fs::path p = fs::temp_directory_path() / ("afglosa_harness_" + name);
	fs::remove_all(p);
	return p;
}

std::string read(const fs::path& p) {
	std::ifstream in(p);
	std::ostringstream s;
	s << in.rdbuf();
	return s.str();
}

RunConfig tiny_run(const fs::path& out) {
	RunConfig c;
	c.out_dir = out.string();
	c.trainer.total_episodes = 6;
	c.trainer.buffer_capacity = 120;
	c.trainer.batch_size = 40;
	c.trainer.epochs_per_update = 1;
	c.eval_repeats = 2;
	return c;
}

}  // namespace

TEST(Evaluate, ThreadCountDoesNotChangeResults) {
	const auto p = nn::PolicySet::create(1);
	EvalRequest req;
	req.methods = {Method::benchmark, Method::rule_glosa, Method::af_glosa};
	req.densities = {300, 1200};
	req.repeats = 6;
	req.af_policy = &p;
	req.threads = 1;
	const EvalReport a = evaluate(EnvConfig{}, req);
	req.threads = 3;
	const EvalReport b = evaluate(EnvConfig{}, req);
	ASSERT_EQ(a.cells.size(), 6u);
	for (std::size_t i = 0; i < a.cells.size(); ++i) {
		EXPECT_EQ(a.cells[i].method, b.cells[i].method);
		EXPECT_EQ(a.cells[i].mean, b.cells[i].mean);
	}
}

TEST(Evaluate, CellsAreMeansOverSeededEpisodes) {
	EvalRequest req;
	req.methods = {Method::benchmark};
	req.densities = {1200};
	req.repeats = 4;
	req.seed = 30;
	const EvalReport r = evaluate(EnvConfig{}, req);
	GlosaEnv env(EnvConfig{});
	EpisodeMetrics sum;
	for (int k = 0; k < 4; ++k) {
		sum += run_episode(env, Method::benchmark, nullptr, 30 + k, 1200).metrics;
	}
	EXPECT_DOUBLE_EQ(r.at(Method::benchmark, 1200).mean.fuel, sum.fuel / 4);
	EXPECT_DOUBLE_EQ(r.at(Method::benchmark, 1200).mean.wti, sum.wti / 4);
}

TEST(Evaluate, ImprovementIsDifferenceToBenchmark) {
	EvalRequest req;
	req.methods = {Method::benchmark, Method::rule_glosa};
	req.densities = {300};
	req.repeats = 5;
	const EvalReport r = evaluate(EnvConfig{}, req);
	EXPECT_EQ(r.imp(Method::benchmark, 300), EpisodeMetrics{});
	const auto d = r.imp(Method::rule_glosa, 300);
	EXPECT_DOUBLE_EQ(d.fuel, r.at(Method::rule_glosa, 300).mean.fuel - r.at(Method::benchmark, 300).mean.fuel);
	EXPECT_THROW((void)r.at(Method::af_glosa, 300), std::out_of_range);
}

TEST(Evaluate, Co2StaysProportionalToFuel) {
	EvalRequest req;
	req.methods = {Method::benchmark, Method::rule_glosa};
	req.densities = {300, 1200, 2700};
	req.repeats = 3;
	const EvalReport r = evaluate(EnvConfig{}, req);
	for (const auto& c : r.cells) {
		EXPECT_NEAR(c.mean.co2 / c.mean.fuel, 3.135, 1e-9);
	}
}

TEST(Evaluate, LearnedMethodsNeedCheckpoints) {
	EvalRequest req;
	req.methods = {Method::l_glosa};
	req.densities = {300};
	EXPECT_THROW(evaluate(EnvConfig{}, req), ConfigError);
	req.repeats = 0;
	req.methods = {Method::benchmark};
	EXPECT_THROW(evaluate(EnvConfig{}, req), ConfigError);
}

TEST(EvalOutput, CsvHasImprovementRows) {
	EvalRequest req;
	req.methods = {Method::benchmark, Method::rule_glosa};
	req.densities = {300};
	req.repeats = 2;
	const EvalReport r = evaluate(EnvConfig{}, req);
	std::ostringstream csv;
	write_eval_csv(csv, r);
	const std::string s = csv.str();
	EXPECT_EQ(s.rfind("density,method,row,wti,wco,co2,fuel\n", 0), 0u);
	EXPECT_NE(s.find("300,benchmark,mean,"), std::string::npos);
	EXPECT_NE(s.find("300,rule_glosa,imp,"), std::string::npos);
	EXPECT_EQ(s.find("benchmark,imp"), std::string::npos);
	std::ostringstream text;
	write_eval_text(text, r);
	EXPECT_NE(text.str().find("imp."), std::string::npos);
	EXPECT_NE(text.str().find("(2 seeded episodes per cell)"), std::string::npos);
}

TEST(Header, RecordsProvenance) {
	RunConfig c;
	const std::string h = file_header(c, "eval");
	EXPECT_NE(h.find("# afglosa "), std::string::npos);
	EXPECT_NE(h.find("# command eval\n"), std::string::npos);
	EXPECT_NE(h.find("# seed 7\n"), std::string::npos);
	EXPECT_NE(h.find("# config_hash " + config_hash(c)), std::string::npos);
}

TEST(Scenarios, RedArrivalStopsTheBenchmark) {
	const auto pick = find_arrival_scenario(EnvConfig{}, ArrivalScenario::red_arrival, 1, 300);
	ASSERT_TRUE(pick.has_value());
	GlosaEnv env(EnvConfig{});
	EpisodeOptions o;
	o.depart = pick->depart;
	const auto out = run_episode(env, Method::benchmark, nullptr, pick->seed, 300, o);
	EXPECT_GE(out.metrics.wco, 1.0);
	bool stopped = false;
	for (const auto& r : out.trace) {
		stopped = stopped || r.speed <= 0.1;
	}
	EXPECT_TRUE(stopped);
}

TEST(Scenarios, GreenArrivalRuleMatchesBenchmark) {
	const auto set = export_trajectories(EnvConfig{}, ArrivalScenario::green_arrival, 1, 300, nullptr, nullptr, false);
	ASSERT_EQ(set.runs.size(), 2u);
	const auto& bench = set.runs[0].outcome.trace;
	const auto& rule = set.runs[1].outcome.trace;
	ASSERT_EQ(bench.size(), rule.size());
	for (std::size_t i = 0; i < bench.size(); ++i) {
		EXPECT_EQ(bench[i].position, rule[i].position);
		EXPECT_EQ(bench[i].speed, rule[i].speed);
		EXPECT_EQ(bench[i].fuel_cum, rule[i].fuel_cum);
	}
	EXPECT_EQ(set.runs[0].outcome.metrics.wti, 0.0);
}

TEST(Scenarios, AllMethodsRequired) {
	EXPECT_THROW(export_trajectories(EnvConfig{}, ArrivalScenario::red_arrival, 1, 300, nullptr, nullptr, true),
		ConfigError);
	EXPECT_THROW(arrival_from_string("amber"), ConfigError);
}

TEST(Scenarios, TrajectoryCsvLayout) {
	const auto af = nn::PolicySet::create(1);
	const auto l = nn::PolicySet::create(2, false);
	const auto set = export_trajectories(EnvConfig{}, ArrivalScenario::red_arrival, 1, 300, &af, &l);
	ASSERT_EQ(set.runs.size(), 4u);
	std::ostringstream out;
	write_trajectory_csv(out, set);
	const std::string s = out.str();
	EXPECT_NE(s.find("method,t,position,speed,accel,phase,fuel_cum,gap_bit,accel_adv\n"), std::string::npos);
	for (const char* m : {"\nbenchmark,1,", "\nrule_glosa,1,", "\nl_glosa,1,", "\naf_glosa,1,"}) {
		EXPECT_NE(s.find(m), std::string::npos) << m;
	}
}

TEST(Train, WritesArtifacts) {
	const fs::path out = scratch("train");
	RunConfig c = tiny_run(out);
	const auto result = run_train(c);
	EXPECT_EQ(result.episodes.size(), 6u);
	EXPECT_TRUE(fs::exists(out / "af_glosa.ckpt"));
	const std::string episodes = read(out / "af_glosa_episodes.csv");
	EXPECT_EQ(episodes.rfind("# afglosa ", 0), 0u);
	EXPECT_NE(episodes.find("episode,steps,reward,fuel,wti,wco\n"), std::string::npos);
	EXPECT_NE(read(out / "af_glosa_updates.csv").find("update,entropy_d,entropy_c,clip_frac"), std::string::npos);
	const auto back = nn::load_checkpoint((out / "af_glosa.ckpt").string());
	EXPECT_EQ(back.params, result.policy.params);
	fs::remove_all(out);
}

TEST(Train, PeriodicCheckpoints) {
	const fs::path out = scratch("ckpt");
	RunConfig c = tiny_run(out);
	c.checkpoint_every = 3;
	c.method = Method::l_glosa;
	run_train(c);
	EXPECT_TRUE(fs::exists(out / "l_glosa_ep3.ckpt"));
	EXPECT_TRUE(fs::exists(out / "l_glosa_ep6.ckpt"));
	EXPECT_FALSE(nn::load_checkpoint((out / "l_glosa.ckpt").string()).has_discrete());
	fs::remove_all(out);
}

TEST(Train, BaselinesAreNotLearnable) {
	RunConfig c = tiny_run(scratch("bench"));
	c.method = Method::benchmark;
	EXPECT_THROW(run_train(c), ConfigError);
	c.method = Method::rule_glosa;
	EXPECT_THROW(run_train(c), ConfigError);
}

TEST(Ablation, ControlStepArmsShareSeeds) {
	const fs::path out = scratch("ablate");
	RunConfig c = tiny_run(out);
	const auto report = run_ablation(c, Experiment::control_step);
	ASSERT_EQ(report.arms.size(), 3u);
	EXPECT_EQ(report.arms[0].cfg.env.control_step, 1.0);
	EXPECT_EQ(report.arms[2].cfg.env.control_step, 3.0);
	for (const auto& a : report.arms) {
		EXPECT_EQ(a.seed_fingerprint, report.arms[0].seed_fingerprint);
		EXPECT_EQ(a.training.episodes.size(), 6u);
	}
	write_ablation(out.string(), c, report);
	const std::string table = read(out / "ablation_control_step_table.csv");
	EXPECT_NE(table.find("arm,density,wti,wco,co2,fuel\n"), std::string::npos);
	EXPECT_NE(table.find("\nstep1,300,"), std::string::npos);
	EXPECT_NE(table.find("\nstep3,300,"), std::string::npos);
	EXPECT_NE(table.find("# seed_schedule "), std::string::npos);
	EXPECT_TRUE(fs::exists(out / "ablation_control_step_curves.csv"));
	EXPECT_TRUE(fs::exists(out / "ablation_control_step_table.txt"));
	fs::remove_all(out);
}

TEST(Ablation, RewardTermArmsLogEntropies) {
	RunConfig c = tiny_run(scratch("r3"));
	const auto report = run_ablation(c, Experiment::r3_on_off);
	ASSERT_EQ(report.arms.size(), 2u);
	EXPECT_EQ(report.arms[1].cfg.env.reward.omega, 0.0);
	for (const auto& a : report.arms) {
		ASSERT_FALSE(a.training.updates.empty());
		EXPECT_GT(a.training.updates[0].entropy_d, 0.0);
		EXPECT_GT(a.training.updates[0].entropy_c, 0.0);
	}
	EXPECT_THROW(experiment_from_string("r3"), ConfigError);
	EXPECT_EQ(experiment_from_string("wt_s1_s2"), Experiment::wt_s1_s2);
}

TEST(Ablation, FingerprintDependsOnSchedule) {
	EXPECT_EQ(seed_schedule_fingerprint(7, 10, 5), seed_schedule_fingerprint(7, 10, 5));
	EXPECT_NE(seed_schedule_fingerprint(7, 10, 5), seed_schedule_fingerprint(8, 10, 5));
	EXPECT_NE(seed_schedule_fingerprint(7, 10, 5), seed_schedule_fingerprint(7, 11, 5));
}
