#include <afglosa/baselines.hpp>
#include <afglosa/hppo.hpp>

#include <benchmark/benchmark.h>

#include <random>

using namespace afglosa;

namespace {

std::vector<Transition> rollout(const nn::PolicySet& p, std::size_t n, std::uint64_t seed) {
	GlosaEnv env(EnvConfig{});
	nn::Rng rng(seed);
	std::vector<Transition> out;
	std::uint64_t ep = 0;
	while (out.size() < n) {
		Observation obs = env.reset(seed + ep++, 1200);
		while (!env.done() && out.size() < n) {
			Transition tr;
			tr.x = env.normalized(obs);
			const HybridAction a = nn::act(p, tr.x, rng);
			const StepResult r = env.step(a);
			tr.x_next = env.normalized(r.obs);
			tr.gap_bit = a.gap_bit;
			tr.accel_adv = a.accel_adv;
			tr.accel_sample = a.accel_sample;
			tr.logp_d_old = a.logp_d;
			tr.logp_c_old = a.logp_c;
			tr.reward = r.reward.total;
			tr.done = r.done;
			out.push_back(tr);
			obs = r.obs;
		}
	}
	return out;
}

}  // namespace

static void BM_EnvEpisode(benchmark::State& state) {
	GlosaEnv env(EnvConfig{});
	const double density = static_cast<double>(state.range(0));
	std::uint64_t seed = 0;
	long steps = 0;
	for (auto _ : state) {
		const auto out = run_episode(env, Method::benchmark, nullptr, seed++, density);
		steps += out.decisions;
		benchmark::DoNotOptimize(out.metrics.fuel);
	}
	state.counters["steps/s"] = benchmark::Counter(static_cast<double>(steps), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_EnvEpisode)->Arg(300)->Arg(2700)->Unit(benchmark::kMillisecond);

static void BM_Act(benchmark::State& state) {
	const auto p = nn::PolicySet::create(1);
	nn::Rng rng(2);
	ObservationVector x{0.5, 0.3, 0.1, 0.2, 0.4, 0.6, 0.3, 0.0};
	for (auto _ : state) {
		benchmark::DoNotOptimize(nn::act(p, x, rng));
	}
}
BENCHMARK(BM_Act);

static void BM_ForwardBatch(benchmark::State& state) {
	const auto p = nn::PolicySet::create(1);
	const Eigen::Index b = state.range(0);
	const Eigen::MatrixXd x = Eigen::MatrixXd::Random(8, b);
	Eigen::RowVectorXd gap = Eigen::RowVectorXd::Zero(b);
	for (Eigen::Index i = 0; i < b; i += 2) gap[i] = 1.0;
	for (auto _ : state) {
		benchmark::DoNotOptimize(nn::forward_batch(p, x, gap).value.sum());
	}
	state.SetItemsProcessed(state.iterations() * b);
}
BENCHMARK(BM_ForwardBatch)->Arg(8)->Arg(256);

static void BM_SurrogateLosses(benchmark::State& state) {
	const auto p = nn::PolicySet::create(1);
	const auto batch = rollout(p, 256, 5);
	std::vector<double> adv(batch.size());
	std::mt19937_64 rng(3);
	std::normal_distribution<double> n;
	for (auto& a : adv) a = n(rng);
	for (auto _ : state) {
		const auto d = discrete_surrogate(p, batch, adv, 0.1);
		const auto c = continuous_surrogate(p, batch, adv, 0.1, true);
		const auto v = critic_regression(p, batch, adv);
		benchmark::DoNotOptimize(d.value + c.value + v.value);
	}
	state.SetItemsProcessed(state.iterations() * static_cast<long>(batch.size()));
}
BENCHMARK(BM_SurrogateLosses)->Unit(benchmark::kMicrosecond);

static void BM_TrainerUpdate(benchmark::State& state) {
	auto p = nn::PolicySet::create(1);
	TrainerConfig cfg;
	cfg.buffer_capacity = 2048;
	const auto data = rollout(p, cfg.buffer_capacity, 9);
	for (auto _ : state) {
		state.PauseTiming();
		auto q = p;
		HppoTrainer trainer(q, cfg, 4);
		for (const auto& tr : data) trainer.push(tr);
		state.ResumeTiming();
		benchmark::DoNotOptimize(trainer.update().critic_loss);
	}
}
BENCHMARK(BM_TrainerUpdate)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
