#pragma once

#include <afglosa/env.hpp>
#include <afglosa/policy_net.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace afglosa {

/// The four methods compared in an evaluation campaign.
enum class Method { benchmark, rule_glosa, l_glosa, af_glosa };

std::string to_string(Method m);
/// Throws ConfigError on an unknown name.
Method method_from_string(const std::string& s);
[[nodiscard]] inline bool is_learnable(Method m) noexcept {
	return m == Method::l_glosa || m == Method::af_glosa;
}

/// Target speed for the single rule-based advisory, or nullopt when the CAV
/// already arrives in a green window at its current speed.
///
/// Green windows are enumerated from the current phase. The earliest window
/// reachable at a constant speed in [v_min, v_max] gives v* = distance / t;
/// with no such window the result is v_min.
std::optional<double> rule_glosa_target(double distance, double speed, PhaseInfo phase, double green,
	double red, double v_min, double v_max);

struct EpisodeOptions {
	std::optional<int> depart;
	std::optional<double> offset;
	nn::ActMode mode = nn::ActMode::greedy;
	std::uint64_t act_seed = 0;  // only used with ActMode::stochastic
	/// Overrides the discrete head of a learned policy (0 = never advise).
	std::optional<int> force_gap;
};

struct EpisodeOutcome {
	EpisodeMetrics metrics;
	std::vector<TraceRow> trace;
	int advisories = 0;
	int decisions = 0;
	double reward = 0.0;
};

/// Roll out one episode. Learned methods need `policy`; it must carry a
/// discrete head exactly when the method is af_glosa.
EpisodeOutcome run_episode(GlosaEnv& env, Method method, const nn::PolicySet* policy, std::uint64_t seed,
	double density, const EpisodeOptions& opts = {});

}  // namespace afglosa
