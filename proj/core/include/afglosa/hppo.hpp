#pragma once

#include <afglosa/env.hpp>
#include <afglosa/policy_net.hpp>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace afglosa {

/// One buffer-pool entry.
struct Transition {
	ObservationVector x{};       // normalised s_t
	ObservationVector x_next{};  // normalised s_{t+1}
	int gap_bit = 0;
	double accel_adv = 0.0;
	double accel_sample = 0.0;
	double logp_d_old = 0.0;
	double logp_c_old = 0.0;
	double reward = 0.0;
	bool done = false;
};

/// How a full buffer is cut into gradient steps.
///  epochs:  `epochs_per_update` shuffled passes in minibatches of `batch_size`.
///  sampled: one pass over `batch_size` samples drawn without replacement,
///           in minibatches of `minibatch_size`.
enum class BatchingMode { epochs, sampled };

struct TrainerConfig {
	double gamma = 0.99;
	double clip_eps = 0.1;
	std::size_t buffer_capacity = 10000;
	std::size_t batch_size = 256;
	int epochs_per_update = 8;
	std::size_t minibatch_size = 8;
	BatchingMode batching = BatchingMode::epochs;
	long total_episodes = 40000;
	bool normalize_advantage = true;
	/// Multiplies rewards before they reach the critic and the advantage.
	double reward_scale = 1e-3;
	/// Continuous loss only over samples where an advisory was issued.
	bool mask_continuous_by_gap = true;
	int entropy_log_every = 1;  // updates
	double density = 300.0;
	double init_sigma = 1.0;
	nn::AdamConfig adam;

	void validate() const;
};

// --- per-sample pieces -------------------------------------------------------

/// One-step TD advantage r + gamma V(s') (1 - done) - V(s).
double advantage(const Transition& tr, double value, double value_next, double gamma) noexcept;

inline constexpr double kRatioCap = 1e6;

/// exp(logp_new - logp_old), capped at kRatioCap. Increments `overflows` on a cap.
double ratio(double logp_new, double logp_old, long* overflows = nullptr) noexcept;

/// -min(r A, clip(r, 1-eps, 1+eps) A).
double clipped_loss(double r, double adv, double eps) noexcept;
/// Whether the unclipped term is the minimum, i.e. the gradient flows through r.
bool clip_passes_gradient(double r, double adv, double eps) noexcept;

/// Mean squared error between predictions and targets.
double critic_loss(std::span<const double> values, std::span<const double> targets);

// --- batch losses with analytic gradients ------------------------------------

struct LossEval {
	double value = 0.0;
	Eigen::VectorXd grad;
	double mean_ratio = 0.0;
	double clip_fraction = 0.0;
	long samples = 0;
	long overflows = 0;
};

LossEval discrete_surrogate(const nn::PolicySet& p, std::span<const Transition> batch,
	std::span<const double> adv, double eps);
LossEval continuous_surrogate(const nn::PolicySet& p, std::span<const Transition> batch,
	std::span<const double> adv, double eps, bool mask_by_gap);
LossEval critic_regression(const nn::PolicySet& p, std::span<const Transition> batch,
	std::span<const double> targets);

// --- trainer -----------------------------------------------------------------

struct UpdateStats {
	long index = 0;
	double entropy_d = 0.0;
	double entropy_c = 0.0;
	double clip_fraction = 0.0;
	double mean_ratio_d = 1.0;
	double mean_ratio_c = 1.0;
	double first_ratio_d = 1.0;  // mean over the first minibatch of the first pass
	double first_ratio_c = 1.0;
	double mean_reward = 0.0;
	double critic_loss = 0.0;
	long ratio_overflows = 0;
};

struct FreshRatios {
	std::vector<double> discrete;
	std::vector<double> continuous;
};

/// Buffer pool plus the three Adam optimisers. Owns no environment.
class HppoTrainer {
public:
	HppoTrainer(nn::PolicySet& policy, TrainerConfig cfg, std::uint64_t seed);

	void push(const Transition& tr);
	[[nodiscard]] bool full() const noexcept { return buffer_.size() >= cfg_.buffer_capacity; }
	[[nodiscard]] std::size_t size() const noexcept { return buffer_.size(); }
	[[nodiscard]] const std::vector<Transition>& buffer() const noexcept { return buffer_; }

	/// Ratios of every buffered transition under the current parameters.
	[[nodiscard]] FreshRatios fresh_ratios() const;

	/// Train on the full buffer, then clear it. Throws std::logic_error if the
	/// buffer is not full and NumericFault if a loss turns non-finite.
	UpdateStats update();

	[[nodiscard]] const TrainerConfig& config() const noexcept { return cfg_; }
	[[nodiscard]] long updates() const noexcept { return updates_; }

private:
	void train_minibatch(std::span<const Transition> batch, std::span<const double> adv,
		std::span<const double> targets, UpdateStats& stats, bool first);

	nn::PolicySet& policy_;
	TrainerConfig cfg_;
	nn::Rng rng_;
	std::vector<Transition> buffer_;
	nn::AdamState adam_d_;
	nn::AdamState adam_c_;
	nn::AdamState adam_v_;
	long updates_ = 0;
	// running sums for the current update
	double ratio_sum_d_ = 0.0;
	double ratio_sum_c_ = 0.0;
	double clipped_ = 0.0;
	double counted_d_ = 0.0;
	double counted_c_ = 0.0;
	long overflows_ = 0;
};

struct EpisodeLog {
	long episode = 0;
	int steps = 0;
	double reward = 0.0;
	EpisodeMetrics metrics;
};

struct TrainingResult {
	nn::PolicySet policy;
	std::vector<EpisodeLog> episodes;
	std::vector<UpdateStats> updates;
};

/// Deterministic sub-seed for stream `stream`, item `index` under `master`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) noexcept;

/// Episode seeds shared by every method and ablation arm for a master seed.
std::uint64_t episode_seed(std::uint64_t master, std::uint64_t episode) noexcept;

/// Called after every episode with the log and the current parameters.
using EpisodeObserver = std::function<void(const EpisodeLog&, const nn::PolicySet&)>;

/// Roll out episodes, fill the buffer across episode boundaries and update
/// whenever it is full. `continuous_only` trains the every-step variant.
TrainingResult train(const EnvConfig& env_cfg, const TrainerConfig& cfg, std::uint64_t seed,
	bool continuous_only = false, const EpisodeObserver& observer = {});

}  // namespace afglosa
