#pragma once

#include <afglosa/baselines.hpp>
#include <afglosa/env.hpp>
#include <afglosa/hppo.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace afglosa {

/// Everything a CLI command needs. Loaded from a JSON run file; unknown
/// fields anywhere are rejected with ConfigError.
struct RunConfig {
	std::string scenario_path;  // empty when the scenario came inline or from defaults
	EnvConfig env;
	TrainerConfig trainer;
	Method method = Method::af_glosa;
	std::vector<double> densities{300.0, 1200.0, 2700.0};
	int eval_repeats = 100;
	std::uint64_t seed = 7;
	std::string out_dir = "out";
	long checkpoint_every = 0;  // episodes between intermediate checkpoints, 0 = final only
	int threads = 1;            // evaluation workers

	void validate() const;
};

/// Parse a scenario document (road, signal, vehicle classes, emission, densities).
ScenarioConfig parse_scenario(const std::string& json_text);
ScenarioConfig load_scenario(const std::string& path);

/// Parse a run document. A string "scenario" entry is resolved relative to `base_dir`.
RunConfig parse_run_config(const std::string& json_text, const std::string& base_dir = ".");
RunConfig load_run_config(const std::string& path);

/// Canonical JSON of the fully resolved configuration.
std::string to_json(const ScenarioConfig& s);
std::string to_json(const RunConfig& c);

/// 64-bit FNV-1a of the canonical JSON, as 16 hex digits.
std::string config_hash(const RunConfig& c);

}  // namespace afglosa
