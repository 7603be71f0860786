#include <afglosa/baselines.hpp>

#include <afglosa/errors.hpp>

#include <algorithm>
#include <cmath>

namespace afglosa {

std::string to_string(Method m) {
	switch (m) {
	case Method::benchmark: return "benchmark";
	case Method::rule_glosa: return "rule_glosa";
	case Method::l_glosa: return "l_glosa";
	case Method::af_glosa: return "af_glosa";
	}
	return "benchmark";
}

Method method_from_string(const std::string& s) {
	if (s == "benchmark") return Method::benchmark;
	if (s == "rule_glosa") return Method::rule_glosa;
	if (s == "l_glosa") return Method::l_glosa;
	if (s == "af_glosa") return Method::af_glosa;
	throw ConfigError("unknown method '" + s + "' (expected benchmark, rule_glosa, l_glosa or af_glosa)");
}

std::optional<double> rule_glosa_target(double distance, double speed, PhaseInfo phase, double green,
	double red, double v_min, double v_max) {
	const double cycle = green + red;
	// k-th green window [start, end) in seconds from now
	auto window = [&](int k) -> std::pair<double, double> {
		if (phase.phase == Phase::green) {
			if (k == 0) {
				return {0.0, phase.remaining};
			}
			const double s = phase.remaining + red + (k - 1) * cycle;
			return {s, s + green};
		}
		const double s = phase.remaining + k * cycle;
		return {s, s + green};
	};

	if (speed > 0.0) {
		const double arrival = distance / speed;
		for (int k = 0; window(k).first <= arrival; ++k) {
			const auto [s, e] = window(k);
			if (arrival >= s && arrival < e) {
				return std::nullopt;
			}
		}
	}

	const double earliest = distance / v_max;
	const double latest = distance / v_min;
	for (int k = 0; window(k).first <= latest; ++k) {
		const auto [s, e] = window(k);
		const double t = std::max(s, earliest);
		if (t < e && t <= latest) {
			return t > 0.0 ? std::clamp(distance / t, v_min, v_max) : v_max;
		}
	}
	return v_min;
}

EpisodeOutcome run_episode(GlosaEnv& env, Method method, const nn::PolicySet* policy, std::uint64_t seed,
	double density, const EpisodeOptions& opts) {
	if (is_learnable(method)) {
		if (policy == nullptr) {
			throw ConfigError("method " + to_string(method) + " needs a trained policy");
		}
		if (policy->has_discrete() != (method == Method::af_glosa)) {
			throw ConfigError("checkpoint head layout does not match method " + to_string(method));
		}
	}

	Observation obs = env.reset(seed, density, opts.depart, opts.offset);
	nn::Rng rng(opts.act_seed);
	const auto& sc = env.config().scenario;
	const auto& rw = env.config().reward;
	bool rule_done = false;
	EpisodeOutcome out;

	while (!env.done()) {
		StepResult res;
		switch (method) {
		case Method::benchmark:
			res = env.step(HybridAction{});
			break;
		case Method::rule_glosa: {
			if (!rule_done && env.in_guidance_zone()) {
				rule_done = true;
				const auto target = rule_glosa_target(obs.distance, obs.speed, env.world().phase(),
					sc.green_duration, sc.red_duration, rw.v_min, rw.v_max);
				if (target) {
					res = env.step_to_speed(*target);
					break;
				}
			}
			res = env.step(HybridAction{});
			break;
		}
		case Method::l_glosa:
		case Method::af_glosa: {
			HybridAction a = nn::act(*policy, env.normalized(obs), rng, opts.mode);
			if (opts.force_gap) {
				a.gap_bit = *opts.force_gap;
			}
			res = env.step(a);
			break;
		}
		}
		out.reward += res.reward.total;
		obs = res.obs;
	}
	out.metrics = env.metrics();
	out.trace = env.trace();
	out.advisories = env.advisory_count();
	out.decisions = env.decision_count();
	return out;
}

}  // namespace afglosa
