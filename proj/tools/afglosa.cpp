// afglosa: train, evaluate and inspect the adaptive-frequency GLOSA agent.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure,
// 1 anything else (e.g. a simulation integrity fault).

#include <afglosa/config.hpp>
#include <afglosa/errors.hpp>
#include <afglosa/harness.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

using namespace afglosa;

namespace {

struct Common {
	std::string config;
	std::optional<std::uint64_t> seed;
	std::optional<std::string> out;
	std::optional<long> episodes;
	std::optional<double> density;
	std::optional<double> control_step;
	std::optional<int> threads;
};

void add_common(CLI::App* app, Common& c) {
	app->add_option("--config", c.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
	app->add_option("--seed", c.seed, "Master seed (env: AFGLOSA_SEED)");
	app->add_option("--out", c.out, "Output directory (env: AFGLOSA_OUT)");
	app->add_option("--episodes", c.episodes, "Training episodes");
	app->add_option("--density", c.density, "Traffic density in veh/h");
	app->add_option("--control-step", c.control_step, "Seconds between decisions");
	app->add_option("--threads", c.threads, "Evaluation worker threads");
}

/// Config file, then environment, then flags.
RunConfig resolve(const Common& c) {
	RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
	if (const char* s = std::getenv("AFGLOSA_SEED"); s != nullptr && *s != '\0') {
		try {
			cfg.seed = std::stoull(s);
		} catch (const std::exception&) {
			throw ConfigError(std::string("AFGLOSA_SEED is not an unsigned integer: ") + s);
		}
	}
	if (const char* o = std::getenv("AFGLOSA_OUT"); o != nullptr && *o != '\0') {
		cfg.out_dir = o;
	}
	if (c.seed) cfg.seed = *c.seed;
	if (c.out) cfg.out_dir = *c.out;
	if (c.episodes) cfg.trainer.total_episodes = *c.episodes;
	if (c.density) {
		cfg.trainer.density = *c.density;
		cfg.densities = {*c.density};
	}
	if (c.control_step) cfg.env.control_step = *c.control_step;
	if (c.threads) cfg.threads = *c.threads;
	cfg.validate();
	return cfg;
}

std::ofstream open_file(const std::filesystem::path& p) {
	std::filesystem::create_directories(p.parent_path().empty() ? "." : p.parent_path());
	std::ofstream out(p);
	if (!out) {
		throw ConfigError("cannot write " + p.string());
	}
	return out;
}

std::optional<nn::PolicySet> maybe_load(const std::string& path) {
	if (path.empty()) {
		return std::nullopt;
	}
	return nn::load_checkpoint(path);
}

int run(int argc, char** argv) {
	CLI::App app{"Adaptive-frequency GLOSA: signalized-intersection simulator and hybrid PPO agent"};
	app.require_subcommand(1);

	Common common;

	auto* train = app.add_subcommand("train", "Train af_glosa or l_glosa");
	std::string train_method;
	add_common(train, common);
	train->add_option("--method", train_method, "af_glosa or l_glosa");

	auto* eval = app.add_subcommand("eval", "Evaluate methods over seeded episodes");
	std::vector<std::string> eval_methods;
	std::string checkpoint;
	std::string l_checkpoint;
	std::optional<int> repeats;
	add_common(eval, common);
	eval->add_option("--method", eval_methods, "Methods to evaluate, space or comma separated (default: all four)")->delimiter(',');
	eval->add_option("--checkpoint", checkpoint, "af_glosa checkpoint")->check(CLI::ExistingFile);
	eval->add_option("--l-checkpoint", l_checkpoint, "l_glosa checkpoint")->check(CLI::ExistingFile);
	eval->add_option("--repeats", repeats, "Seeded episodes per method and density");

	auto* traj = app.add_subcommand("export-trajectory", "Per-second traces of all methods on one scenario");
	std::string scenario = "red_arrival";
	add_common(traj, common);
	traj->add_option("--scenario", scenario, "red_arrival or green_arrival");
	traj->add_option("--checkpoint", checkpoint, "af_glosa checkpoint")->check(CLI::ExistingFile);
	traj->add_option("--l-checkpoint", l_checkpoint, "l_glosa checkpoint")->check(CLI::ExistingFile);

	auto* ablate = app.add_subcommand("ablate", "Paired training runs differing in one setting");
	std::string experiment;
	add_common(ablate, common);
	ablate->add_option("--experiment", experiment, "wt_s1_s2, r3_on_off or control_step")->required();
	ablate->add_option("--repeats", repeats, "Evaluation episodes per arm");

	try {
		app.parse(argc, argv);
	} catch (const CLI::ParseError& e) {
		const int code = app.exit(e);
		return code == 0 ? 0 : 2;
	}

	if (train->parsed()) {
		RunConfig cfg = resolve(common);
		if (!train_method.empty()) {
			cfg.method = method_from_string(train_method);
		}
		if (!is_learnable(cfg.method)) {
			throw ConfigError("method " + to_string(cfg.method) + " is not learnable; train af_glosa or l_glosa");
		}
		run_train(cfg, &std::cerr);
		std::cout << "wrote " << (std::filesystem::path(cfg.out_dir) / (to_string(cfg.method) + ".ckpt")).string()
				  << '\n';
		return 0;
	}

	if (eval->parsed()) {
		RunConfig cfg = resolve(common);
		if (repeats) cfg.eval_repeats = *repeats;
		cfg.validate();
		EvalRequest req;
		if (eval_methods.empty()) {
			req.methods = {Method::benchmark, Method::rule_glosa, Method::l_glosa, Method::af_glosa};
		} else {
			req.methods.push_back(Method::benchmark);
			for (const auto& m : eval_methods) {
				const Method mm = method_from_string(m);
				if (mm != Method::benchmark) {
					req.methods.push_back(mm);
				}
			}
		}
		const auto af = maybe_load(checkpoint);
		const auto l = maybe_load(l_checkpoint);
		req.af_policy = af ? &*af : nullptr;
		req.l_policy = l ? &*l : nullptr;
		req.densities = cfg.densities;
		req.repeats = cfg.eval_repeats;
		req.seed = cfg.seed;
		req.threads = cfg.threads;
		const EvalReport report = evaluate(cfg.env, req);

		const std::filesystem::path dir(cfg.out_dir);
		const std::string header = file_header(cfg, "eval");
		auto csv = open_file(dir / "eval.csv");
		csv << header;
		write_eval_csv(csv, report);
		auto txt = open_file(dir / "eval.txt");
		txt << header;
		write_eval_text(txt, report);
		write_eval_text(std::cout, report);
		return 0;
	}

	if (traj->parsed()) {
		RunConfig cfg = resolve(common);
		const ArrivalScenario which = arrival_from_string(scenario);
		const auto af = maybe_load(checkpoint);
		const auto l = maybe_load(l_checkpoint);
		const TrajectorySet set = export_trajectories(cfg.env, which, cfg.seed, cfg.densities.front(),
			af ? &*af : nullptr, l ? &*l : nullptr);
		const auto path = std::filesystem::path(cfg.out_dir) / ("trajectory_" + to_string(which) + ".csv");
		auto out = open_file(path);
		out << file_header(cfg, "export-trajectory --scenario " + to_string(which));
		write_trajectory_csv(out, set);
		std::cout << "wrote " << path.string() << " (env seed " << set.pick.seed << ", depart " << set.pick.depart
				  << " s)\n";
		return 0;
	}

	if (ablate->parsed()) {
		RunConfig cfg = resolve(common);
		if (repeats) cfg.eval_repeats = *repeats;
		cfg.validate();
		const Experiment which = experiment_from_string(experiment);
		const AblationReport report = run_ablation(cfg, which, &std::cerr);
		write_ablation(cfg.out_dir, cfg, report);
		std::cout << "wrote " << cfg.out_dir << "/ablation_" << to_string(which) << "_{curves,updates,table}.*\n";
		return 0;
	}
	return 2;
}

}  // namespace

int main(int argc, char** argv) {
	try {
		return run(argc, argv);
	} catch (const ConfigError& e) {
		std::cerr << "error: " << e.what() << '\n';
		return 2;
	} catch (const NumericFault& e) {
		std::cerr << "numeric failure: " << e.what() << '\n';
		return 3;
	} catch (const std::exception& e) {
		std::cerr << "fatal: " << e.what() << '\n';
		return 1;
	}
}
