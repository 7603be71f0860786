#pragma once

#include <afglosa/baselines.hpp>
#include <afglosa/config.hpp>
#include <afglosa/hppo.hpp>

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace afglosa {

std::string_view code_version() noexcept;

/// Comment lines ("# ...") recording command, version, seed and config hash.
std::string file_header(const RunConfig& cfg, std::string_view command);

// --- training ----------------------------------------------------------------

void write_episode_csv(std::ostream& out, std::span<const EpisodeLog> episodes);
void write_update_csv(std::ostream& out, std::span<const UpdateStats> updates, int every = 1);

/// Train `cfg.method` and write <out>/<method>.ckpt plus
/// <out>/<method>_episodes.csv and <out>/<method>_updates.csv.
/// Throws ConfigError for non-learnable methods.
TrainingResult run_train(const RunConfig& cfg, std::ostream* progress = nullptr);

// --- evaluation ----------------------------------------------------------------

struct EvalRequest {
	std::vector<Method> methods;
	std::vector<double> densities;
	int repeats = 100;
	std::uint64_t seed = 7;  // repeat r uses environment seed `seed + r`
	int threads = 1;
	const nn::PolicySet* af_policy = nullptr;
	const nn::PolicySet* l_policy = nullptr;
};

struct EvalCell {
	Method method;
	double density;
	EpisodeMetrics mean;
};

struct EvalReport {
	int repeats = 0;
	std::vector<EvalCell> cells;  // density-major, methods in request order

	[[nodiscard]] const EvalCell& at(Method m, double density) const;
	/// method - benchmark. Throws if the benchmark was not evaluated.
	[[nodiscard]] EpisodeMetrics imp(Method m, double density) const;
};

/// Same environment seeds for every method. Results do not depend on `threads`.
EvalReport evaluate(const EnvConfig& env, const EvalRequest& req);

void write_eval_csv(std::ostream& out, const EvalReport& report);
void write_eval_text(std::ostream& out, const EvalReport& report);

// --- trajectories ------------------------------------------------------------

enum class ArrivalScenario { red_arrival, green_arrival };
ArrivalScenario arrival_from_string(const std::string& s);
std::string to_string(ArrivalScenario s);

struct ScenarioPick {
	std::uint64_t seed;
	int depart;
};

/// Search seeds from `seed` upward (departure times 0..depart_window each) for
/// one where the unassisted CAV stops at red (red_arrival) or crosses without
/// stopping and the rule baseline stays silent (green_arrival).
std::optional<ScenarioPick> find_arrival_scenario(const EnvConfig& env, ArrivalScenario which,
	std::uint64_t seed, double density, int max_seeds = 1000);

struct MethodTrace {
	Method method;
	EpisodeOutcome outcome;
};

struct TrajectorySet {
	ArrivalScenario scenario;
	ScenarioPick pick;
	double density;
	std::vector<MethodTrace> runs;
};

/// Methods without a policy are skipped only if they are learnable and the
/// corresponding pointer is null and `require_all` is false.
TrajectorySet export_trajectories(const EnvConfig& env, ArrivalScenario which, std::uint64_t seed,
	double density, const nn::PolicySet* af_policy, const nn::PolicySet* l_policy, bool require_all = true);

void write_trajectory_csv(std::ostream& out, const TrajectorySet& set);

// --- ablations ---------------------------------------------------------------

enum class Experiment { wt_s1_s2, r3_on_off, control_step };
Experiment experiment_from_string(const std::string& s);
std::string to_string(Experiment e);

struct AblationArm {
	std::string label;
	RunConfig cfg;
	TrainingResult training;
	EvalReport eval;
	std::uint64_t seed_fingerprint = 0;  // hash of the arm's episode seed schedule
};

struct AblationReport {
	Experiment experiment;
	std::vector<AblationArm> arms;
};

/// Hash of the first `episodes` training seeds and all evaluation seeds.
std::uint64_t seed_schedule_fingerprint(std::uint64_t seed, long episodes, int repeats);

/// Train and evaluate AF-GLOSA once per arm; arms differ only in the ablated
/// setting. Evaluation uses `cfg.trainer.density` and `cfg.eval_repeats`.
AblationReport run_ablation(const RunConfig& cfg, Experiment which, std::ostream* progress = nullptr);

/// Writes ablation_<name>_curves.csv, _updates.csv and _table.csv/.txt to `dir`.
void write_ablation(const std::string& dir, const RunConfig& cfg, const AblationReport& report);

}  // namespace afglosa
