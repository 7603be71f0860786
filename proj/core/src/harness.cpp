#include <afglosa/harness.hpp>

#include <afglosa/errors.hpp>

#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#ifndef AFGLOSA_VERSION
#define AFGLOSA_VERSION "0.0.0"
#endif

namespace afglosa {

namespace {

std::string num(double v) {
	char buf[64];
	const auto res = std::to_chars(buf, buf + sizeof(buf), v);
	return {buf, res.ptr};
}

std::ofstream open_out(const std::filesystem::path& p) {
	std::ofstream out(p);
	if (!out) {
		throw ConfigError("cannot write " + p.string());
	}
	return out;
}

void ensure_dir(const std::string& dir) {
	std::error_code ec;
	std::filesystem::create_directories(dir, ec);
	if (ec) {
		throw ConfigError("cannot create output directory " + dir + ": " + ec.message());
	}
}

nn::Hyperparameters hyper_of(const RunConfig& c) {
	return {
		{"seed", static_cast<double>(c.seed)},
		{"episodes", static_cast<double>(c.trainer.total_episodes)},
		{"density", c.trainer.density},
		{"gamma", c.trainer.gamma},
		{"clip_eps", c.trainer.clip_eps},
		{"lr_discrete", c.trainer.adam.lr_discrete},
		{"lr_continuous", c.trainer.adam.lr_continuous},
		{"lr_critic", c.trainer.adam.lr_critic},
		{"control_step", c.env.control_step},
		{"wait_encoding_s2", c.env.wait_encoding == WaitEncoding::s2 ? 1.0 : 0.0},
		{"omega", c.env.reward.omega},
	};
}

void fnv(std::uint64_t& h, std::uint64_t v) {
	for (int i = 0; i < 8; ++i) {
		h ^= (v >> (8 * i)) & 0xffU;
		h *= 0x100000001b3ULL;
	}
}

}  // namespace

std::string_view code_version() noexcept {
	return AFGLOSA_VERSION;
}

std::string file_header(const RunConfig& cfg, std::string_view command) {
	std::ostringstream out;
	out << "# afglosa " << code_version() << '\n';
	out << "# command " << command << '\n';
	out << "# seed " << cfg.seed << '\n';
	out << "# config_hash " << config_hash(cfg) << '\n';
	return out.str();
}

// ---------------------------------------------------------------------------

void write_episode_csv(std::ostream& out, std::span<const EpisodeLog> episodes) {
	out << "episode,steps,reward,fuel,wti,wco\n";
	for (const auto& e : episodes) {
		out << e.episode << ',' << e.steps << ',' << num(e.reward) << ',' << num(e.metrics.fuel) << ','
			<< num(e.metrics.wti) << ',' << num(e.metrics.wco) << '\n';
	}
}

void write_update_csv(std::ostream& out, std::span<const UpdateStats> updates, int every) {
	out << "update,entropy_d,entropy_c,clip_frac,mean_ratio_d,mean_ratio_c,mean_reward,critic_loss,ratio_overflows\n";
	for (const auto& u : updates) {
		if (every > 1 && u.index % every != 0) {
			continue;
		}
		out << u.index << ',' << num(u.entropy_d) << ',' << num(u.entropy_c) << ',' << num(u.clip_fraction) << ','
			<< num(u.mean_ratio_d) << ',' << num(u.mean_ratio_c) << ',' << num(u.mean_reward) << ','
			<< num(u.critic_loss) << ',' << u.ratio_overflows << '\n';
	}
}

TrainingResult run_train(const RunConfig& cfg, std::ostream* progress) {
	if (!is_learnable(cfg.method)) {
		throw ConfigError("method " + to_string(cfg.method) + " is not learnable");
	}
	cfg.validate();
	ensure_dir(cfg.out_dir);
	const std::filesystem::path dir(cfg.out_dir);
	const std::string name = to_string(cfg.method);
	const std::string header = file_header(cfg, "train --method " + name);

	std::ofstream episodes = open_out(dir / (name + "_episodes.csv"));
	episodes << header;
	episodes << "episode,steps,reward,fuel,wti,wco\n";

	double window_reward = 0.0;
	double window_fuel = 0.0;
	auto observer = [&](const EpisodeLog& e, const nn::PolicySet& policy) {
		episodes << e.episode << ',' << e.steps << ',' << num(e.reward) << ',' << num(e.metrics.fuel) << ','
				 << num(e.metrics.wti) << ',' << num(e.metrics.wco) << '\n';
		window_reward += e.reward;
		window_fuel += e.metrics.fuel;
		if (progress != nullptr && (e.episode + 1) % 100 == 0) {
			*progress << "episode " << e.episode + 1 << "  mean reward " << window_reward / 100.0 << "  mean fuel "
					  << window_fuel / 100.0 << '\n';
			window_reward = window_fuel = 0.0;
		}
		if (cfg.checkpoint_every > 0 && (e.episode + 1) % cfg.checkpoint_every == 0) {
			nn::save_checkpoint((dir / (name + "_ep" + std::to_string(e.episode + 1) + ".ckpt")).string(), policy,
				hyper_of(cfg));
		}
	};

	TrainingResult result = train(cfg.env, cfg.trainer, cfg.seed, cfg.method == Method::l_glosa, observer);

	nn::save_checkpoint((dir / (name + ".ckpt")).string(), result.policy, hyper_of(cfg));
	std::ofstream updates = open_out(dir / (name + "_updates.csv"));
	updates << header;
	write_update_csv(updates, result.updates, cfg.trainer.entropy_log_every);
	return result;
}

// ---------------------------------------------------------------------------

const EvalCell& EvalReport::at(Method m, double density) const {
	for (const auto& c : cells) {
		if (c.method == m && std::abs(c.density - density) < 1e-9) {
			return c;
		}
	}
	throw std::out_of_range("eval report: no cell for " + to_string(m) + " at " + num(density));
}

EpisodeMetrics EvalReport::imp(Method m, double density) const {
	const EpisodeMetrics& a = at(m, density).mean;
	const EpisodeMetrics& b = at(Method::benchmark, density).mean;
	return {a.wti - b.wti, a.wco - b.wco, a.co2 - b.co2, a.fuel - b.fuel};
}

EvalReport evaluate(const EnvConfig& env, const EvalRequest& req) {
	if (req.repeats < 1 || req.threads < 1) {
		throw ConfigError("eval: repeats and threads must be >= 1");
	}
	for (Method m : req.methods) {
		if (m == Method::af_glosa && req.af_policy == nullptr) {
			throw ConfigError("eval: af_glosa needs a checkpoint");
		}
		if (m == Method::l_glosa && req.l_policy == nullptr) {
			throw ConfigError("eval: l_glosa needs a checkpoint");
		}
	}
	const std::size_t nm = req.methods.size();
	const std::size_t nd = req.densities.size();
	const auto nr = static_cast<std::size_t>(req.repeats);
	const std::size_t total = nm * nd * nr;
	std::vector<EpisodeMetrics> results(total);

	std::atomic<std::size_t> next{0};
	std::exception_ptr failure;
	std::atomic<bool> failed{false};
	auto worker = [&]() {
		GlosaEnv e(env);
		for (std::size_t k = next++; k < total && !failed; k = next++) {
			const std::size_t r = k % nr;
			const std::size_t m = (k / nr) % nm;
			const std::size_t d = k / (nr * nm);
			const Method method = req.methods[m];
			const nn::PolicySet* p = method == Method::af_glosa ? req.af_policy
				: method == Method::l_glosa                    ? req.l_policy
															   : nullptr;
			try {
				results[k] = run_episode(e, method, p, req.seed + r, req.densities[d]).metrics;
			} catch (...) {
				if (!failed.exchange(true)) {
					failure = std::current_exception();
				}
			}
		}
	};
	const int n_threads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(req.threads), total));
	if (n_threads <= 1) {
		worker();
	} else {
		std::vector<std::jthread> pool;
		for (int t = 0; t < n_threads; ++t) {
			pool.emplace_back(worker);
		}
	}
	if (failure) {
		std::rethrow_exception(failure);
	}

	EvalReport report;
	report.repeats = req.repeats;
	for (std::size_t d = 0; d < nd; ++d) {
		for (std::size_t m = 0; m < nm; ++m) {
			EpisodeMetrics sum;
			for (std::size_t r = 0; r < nr; ++r) {
				sum += results[(d * nm + m) * nr + r];
			}
			const double n = static_cast<double>(nr);
			report.cells.push_back({req.methods[m], req.densities[d], {sum.wti / n, sum.wco / n, sum.co2 / n, sum.fuel / n}});
		}
	}
	return report;
}

namespace {

bool has_benchmark(const EvalReport& r, double density) {
	for (const auto& c : r.cells) {
		if (c.method == Method::benchmark && std::abs(c.density - density) < 1e-9) {
			return true;
		}
	}
	return false;
}

}  // namespace

void write_eval_csv(std::ostream& out, const EvalReport& report) {
	out << "density,method,row,wti,wco,co2,fuel\n";
	for (const auto& c : report.cells) {
		out << num(c.density) << ',' << to_string(c.method) << ",mean," << num(c.mean.wti) << ',' << num(c.mean.wco)
			<< ',' << num(c.mean.co2) << ',' << num(c.mean.fuel) << '\n';
		if (c.method != Method::benchmark && has_benchmark(report, c.density)) {
			const EpisodeMetrics d = report.imp(c.method, c.density);
			out << num(c.density) << ',' << to_string(c.method) << ",imp," << num(d.wti) << ',' << num(d.wco) << ','
				<< num(d.co2) << ',' << num(d.fuel) << '\n';
		}
	}
}

void write_eval_text(std::ostream& out, const EvalReport& report) {
	auto row = [&](const std::string& density, const std::string& label, const EpisodeMetrics& m) {
		out << std::left << std::setw(9) << density << std::setw(13) << label << std::right << std::fixed
			<< std::setprecision(2) << std::setw(10) << m.wti << std::setw(8) << m.wco << std::setw(13) << m.co2
			<< std::setw(12) << m.fuel << '\n';
	};
	out << std::left << std::setw(9) << "density" << std::setw(13) << "method" << std::right << std::setw(10)
		<< "WTI[s]" << std::setw(8) << "WCO" << std::setw(13) << "CO2[mg]" << std::setw(12) << "FUEL[mg]" << '\n';
	double last = -1.0;
	for (const auto& c : report.cells) {
		const std::string d = c.density != last ? num(c.density) : "";
		last = c.density;
		row(d, to_string(c.method), c.mean);
		if (c.method != Method::benchmark && has_benchmark(report, c.density)) {
			row("", "  imp.", report.imp(c.method, c.density));
		}
	}
	out << "(" << report.repeats << " seeded episodes per cell)\n";
}

// ---------------------------------------------------------------------------

ArrivalScenario arrival_from_string(const std::string& s) {
	if (s == "red_arrival") return ArrivalScenario::red_arrival;
	if (s == "green_arrival") return ArrivalScenario::green_arrival;
	throw ConfigError("unknown scenario '" + s + "' (expected red_arrival or green_arrival)");
}

std::string to_string(ArrivalScenario s) {
	return s == ArrivalScenario::red_arrival ? "red_arrival" : "green_arrival";
}

std::optional<ScenarioPick> find_arrival_scenario(const EnvConfig& env, ArrivalScenario which,
	std::uint64_t seed, double density, int max_seeds) {
	GlosaEnv e(env);
	for (int k = 0; k < max_seeds; ++k) {
		const std::uint64_t s = seed + static_cast<std::uint64_t>(k);
		for (int depart = 0; depart <= env.depart_window; ++depart) {
			EpisodeOptions opts;
			opts.depart = depart;
			const EpisodeOutcome bench = run_episode(e, Method::benchmark, nullptr, s, density, opts);
			if (which == ArrivalScenario::red_arrival) {
				if (bench.metrics.wco >= 1.0) {
					return ScenarioPick{s, depart};
				}
				continue;
			}
			if (bench.metrics.wti > 0.0) {
				continue;
			}
			const EpisodeOutcome rule = run_episode(e, Method::rule_glosa, nullptr, s, density, opts);
			if (rule.advisories == 0) {
				return ScenarioPick{s, depart};
			}
		}
	}
	return std::nullopt;
}

TrajectorySet export_trajectories(const EnvConfig& env, ArrivalScenario which, std::uint64_t seed,
	double density, const nn::PolicySet* af_policy, const nn::PolicySet* l_policy, bool require_all) {
	const auto pick = find_arrival_scenario(env, which, seed, density);
	if (!pick) {
		throw SimulationFault("no " + to_string(which) + " scenario found near seed " + std::to_string(seed));
	}
	TrajectorySet set{which, *pick, density, {}};
	GlosaEnv e(env);
	EpisodeOptions opts;
	opts.depart = pick->depart;
	for (Method m : {Method::benchmark, Method::rule_glosa, Method::l_glosa, Method::af_glosa}) {
		const nn::PolicySet* p = m == Method::af_glosa ? af_policy : m == Method::l_glosa ? l_policy : nullptr;
		if (is_learnable(m) && p == nullptr) {
			if (require_all) {
				throw ConfigError("export-trajectory: " + to_string(m) + " needs a checkpoint");
			}
			continue;
		}
		set.runs.push_back({m, run_episode(e, m, p, pick->seed, density, opts)});
	}
	return set;
}

void write_trajectory_csv(std::ostream& out, const TrajectorySet& set) {
	out << "# scenario " << to_string(set.scenario) << " env_seed " << set.pick.seed << " depart " << set.pick.depart
		<< " density " << num(set.density) << '\n';
	out << "method,t,position,speed,accel,phase,fuel_cum,gap_bit,accel_adv\n";
	for (const auto& run : set.runs) {
		for (const auto& r : run.outcome.trace) {
			out << to_string(run.method) << ',' << num(r.t) << ',' << num(r.position) << ',' << num(r.speed) << ','
				<< num(r.accel) << ',' << r.phase << ',' << num(r.fuel_cum) << ',' << r.gap_bit << ','
				<< num(r.accel_adv) << '\n';
		}
	}
}

// ---------------------------------------------------------------------------

Experiment experiment_from_string(const std::string& s) {
	if (s == "wt_s1_s2") return Experiment::wt_s1_s2;
	if (s == "r3_on_off") return Experiment::r3_on_off;
	if (s == "control_step") return Experiment::control_step;
	throw ConfigError("unknown experiment '" + s + "' (expected wt_s1_s2, r3_on_off or control_step)");
}

std::string to_string(Experiment e) {
	switch (e) {
	case Experiment::wt_s1_s2: return "wt_s1_s2";
	case Experiment::r3_on_off: return "r3_on_off";
	case Experiment::control_step: return "control_step";
	}
	return "wt_s1_s2";
}

std::uint64_t seed_schedule_fingerprint(std::uint64_t seed, long episodes, int repeats) {
	std::uint64_t h = 0xcbf29ce484222325ULL;
	for (long i = 0; i < episodes; ++i) {
		fnv(h, episode_seed(seed, static_cast<std::uint64_t>(i)));
	}
	for (int r = 0; r < repeats; ++r) {
		fnv(h, seed + static_cast<std::uint64_t>(r));
	}
	return h;
}

AblationReport run_ablation(const RunConfig& cfg, Experiment which, std::ostream* progress) {
	cfg.validate();
	AblationReport report{which, {}};
	auto arm = [&](std::string label, auto edit) {
		RunConfig c = cfg;
		c.method = Method::af_glosa;
		edit(c);
		c.validate();
		report.arms.push_back({std::move(label), c, {}, {}, 0});
	};
	switch (which) {
	case Experiment::wt_s1_s2:
		arm("s1", [](RunConfig& c) { c.env.wait_encoding = WaitEncoding::s1; });
		arm("s2", [](RunConfig& c) { c.env.wait_encoding = WaitEncoding::s2; });
		break;
	case Experiment::r3_on_off:
		arm("r3_on", [](RunConfig&) {});
		arm("r3_off", [](RunConfig& c) { c.env.reward.omega = 0.0; });
		break;
	case Experiment::control_step:
		for (int s : {1, 2, 3}) {
			arm("step" + std::to_string(s), [s](RunConfig& c) { c.env.control_step = s; });
		}
		break;
	}

	for (auto& a : report.arms) {
		if (progress != nullptr) {
			*progress << "arm " << a.label << ": training " << a.cfg.trainer.total_episodes << " episodes\n";
		}
		a.training = train(a.cfg.env, a.cfg.trainer, a.cfg.seed);
		EvalRequest req;
		req.methods = {Method::benchmark, Method::af_glosa};
		req.densities = {a.cfg.trainer.density};
		req.repeats = a.cfg.eval_repeats;
		req.seed = a.cfg.seed;
		req.threads = a.cfg.threads;
		req.af_policy = &a.training.policy;
		a.eval = evaluate(a.cfg.env, req);
		a.seed_fingerprint = seed_schedule_fingerprint(a.cfg.seed, a.cfg.trainer.total_episodes, a.cfg.eval_repeats);
	}
	for (const auto& a : report.arms) {
		if (a.seed_fingerprint != report.arms.front().seed_fingerprint) {
			throw std::logic_error("ablation arms do not share a seed schedule");
		}
	}
	return report;
}

void write_ablation(const std::string& dir_name, const RunConfig& cfg, const AblationReport& report) {
	ensure_dir(dir_name);
	const std::filesystem::path dir(dir_name);
	const std::string name = "ablation_" + to_string(report.experiment);
	std::ostringstream head;
	head << file_header(cfg, "ablate --experiment " + to_string(report.experiment));
	head << "# seed_schedule " << std::hex << std::setw(16) << std::setfill('0')
		 << report.arms.front().seed_fingerprint << std::dec << " shared by";
	for (const auto& a : report.arms) {
		head << ' ' << a.label;
	}
	head << '\n';

	std::ofstream curves = open_out(dir / (name + "_curves.csv"));
	curves << head.str() << "arm,episode,steps,reward,fuel,wti,wco\n";
	for (const auto& a : report.arms) {
		for (const auto& e : a.training.episodes) {
			curves << a.label << ',' << e.episode << ',' << e.steps << ',' << num(e.reward) << ','
				   << num(e.metrics.fuel) << ',' << num(e.metrics.wti) << ',' << num(e.metrics.wco) << '\n';
		}
	}

	std::ofstream updates = open_out(dir / (name + "_updates.csv"));
	updates << head.str() << "arm,update,entropy_d,entropy_c,clip_frac,mean_ratio_d,mean_ratio_c,mean_reward\n";
	for (const auto& a : report.arms) {
		for (const auto& u : a.training.updates) {
			updates << a.label << ',' << u.index << ',' << num(u.entropy_d) << ',' << num(u.entropy_c) << ','
					<< num(u.clip_fraction) << ',' << num(u.mean_ratio_d) << ',' << num(u.mean_ratio_c) << ','
					<< num(u.mean_reward) << '\n';
		}
	}

	std::ofstream table = open_out(dir / (name + "_table.csv"));
	table << head.str() << "arm,density,wti,wco,co2,fuel\n";
	std::ofstream text = open_out(dir / (name + "_table.txt"));
	text << head.str();
	text << std::left << std::setw(10) << "arm" << std::right << std::setw(10) << "WTI[s]" << std::setw(8) << "WCO"
		 << std::setw(13) << "CO2[mg]" << std::setw(12) << "FUEL[mg]" << '\n';
	auto line = [&](const std::string& label, double density, const EpisodeMetrics& m) {
		table << label << ',' << num(density) << ',' << num(m.wti) << ',' << num(m.wco) << ',' << num(m.co2) << ','
			  << num(m.fuel) << '\n';
		text << std::left << std::setw(10) << label << std::right << std::fixed << std::setprecision(2)
			 << std::setw(10) << m.wti << std::setw(8) << m.wco << std::setw(13) << m.co2 << std::setw(12) << m.fuel
			 << '\n';
	};
	for (const auto& a : report.arms) {
		const double d = a.cfg.trainer.density;
		line(a.label, d, a.eval.at(Method::af_glosa, d).mean);
	}
	const auto& first = report.arms.front();
	line("benchmark", first.cfg.trainer.density, first.eval.at(Method::benchmark, first.cfg.trainer.density).mean);
}

}  // namespace afglosa
