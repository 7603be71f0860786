#include <afglosa/hppo.hpp>

#include <afglosa/errors.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace afglosa {

void TrainerConfig::validate() const {
	if (!(gamma > 0.0 && gamma <= 1.0)) {
		throw ConfigError("trainer: gamma must lie in (0, 1]");
	}
	if (!(clip_eps > 0.0 && clip_eps < 1.0)) {
		throw ConfigError("trainer: clip_eps must lie in (0, 1)");
	}
	if (buffer_capacity == 0 || batch_size == 0 || batch_size > buffer_capacity) {
		throw ConfigError("trainer: need 0 < batch_size <= buffer_capacity");
	}
	if (epochs_per_update < 1 || minibatch_size == 0) {
		throw ConfigError("trainer: epochs_per_update and minibatch_size must be >= 1");
	}
	if (total_episodes < 0) {
		throw ConfigError("trainer: total_episodes must be >= 0");
	}
	if (!(reward_scale > 0.0)) {
		throw ConfigError("trainer: reward_scale must be > 0");
	}
	if (!(init_sigma >= nn::kSigmaMin && init_sigma <= nn::kSigmaMax)) {
		throw ConfigError("trainer: init_sigma must lie in [1e-3, 3]");
	}
	if (entropy_log_every < 1) {
		throw ConfigError("trainer: entropy_log_every must be >= 1");
	}
	adam.validate();
}

double advantage(const Transition& tr, double value, double value_next, double gamma) noexcept {
	return tr.reward + gamma * value_next * (tr.done ? 0.0 : 1.0) - value;
}

double ratio(double logp_new, double logp_old, long* overflows) noexcept {
	const double d = logp_new - logp_old;
	if (d > std::log(kRatioCap)) {
		if (overflows != nullptr) {
			++*overflows;
		}
		return kRatioCap;
	}
	return std::exp(d);
}

double clipped_loss(double r, double adv, double eps) noexcept {
	const double clipped = std::clamp(r, 1.0 - eps, 1.0 + eps);
	return -std::min(r * adv, clipped * adv);
}

bool clip_passes_gradient(double r, double adv, double eps) noexcept {
	const double clipped = std::clamp(r, 1.0 - eps, 1.0 + eps);
	return r * adv <= clipped * adv;
}

double critic_loss(std::span<const double> values, std::span<const double> targets) {
	if (values.empty() || values.size() != targets.size()) {
		throw std::invalid_argument("critic_loss: need equally sized, non-empty inputs");
	}
	double s = 0.0;
	for (std::size_t i = 0; i < values.size(); ++i) {
		const double d = values[i] - targets[i];
		s += d * d;
	}
	return s / static_cast<double>(values.size());
}

// ---------------------------------------------------------------------------

namespace {

struct BatchInputs {
	Eigen::MatrixXd x;
	Eigen::RowVectorXd gap;
	std::vector<int> actions;
	std::vector<double> samples;
};

BatchInputs gather(std::span<const Transition> batch) {
	const auto n = static_cast<Eigen::Index>(batch.size());
	BatchInputs in;
	in.x.resize(static_cast<Eigen::Index>(kObservationSize), n);
	in.gap.resize(n);
	in.actions.resize(batch.size());
	in.samples.resize(batch.size());
	for (Eigen::Index i = 0; i < n; ++i) {
		const Transition& t = batch[static_cast<std::size_t>(i)];
		for (std::size_t k = 0; k < kObservationSize; ++k) {
			in.x(static_cast<Eigen::Index>(k), i) = t.x[k];
		}
		in.gap[i] = t.gap_bit;
		in.actions[static_cast<std::size_t>(i)] = t.gap_bit;
		in.samples[static_cast<std::size_t>(i)] = t.accel_sample;
	}
	return in;
}

Eigen::MatrixXd gather_next(std::span<const Transition> batch) {
	Eigen::MatrixXd x(static_cast<Eigen::Index>(kObservationSize), static_cast<Eigen::Index>(batch.size()));
	for (std::size_t i = 0; i < batch.size(); ++i) {
		for (std::size_t k = 0; k < kObservationSize; ++k) {
			x(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = batch[i].x_next[k];
		}
	}
	return x;
}

std::string snapshot(std::span<const Transition> batch, std::span<const double> adv, const char* which) {
	std::ostringstream out;
	out.precision(17);
	out << "non-finite " << which << " loss; offending batch (first " << std::min<std::size_t>(8, batch.size())
		<< " of " << batch.size() << " transitions):\n";
	out << "x[0..7],gap_bit,accel_sample,logp_d_old,logp_c_old,reward,done,advantage\n";
	for (std::size_t i = 0; i < std::min<std::size_t>(8, batch.size()); ++i) {
		const auto& t = batch[i];
		for (double v : t.x) {
			out << v << ',';
		}
		out << t.gap_bit << ',' << t.accel_sample << ',' << t.logp_d_old << ',' << t.logp_c_old << ',' << t.reward
			<< ',' << t.done << ',' << adv[i] << '\n';
	}
	return out.str();
}

bool finite(const LossEval& l) {
	return std::isfinite(l.value) && l.grad.allFinite();
}

std::vector<nn::ParamRange> join(std::vector<nn::ParamRange> a, const std::vector<nn::ParamRange>& b) {
	a.insert(a.end(), b.begin(), b.end());
	return a;
}

}  // namespace

LossEval discrete_surrogate(const nn::PolicySet& p, std::span<const Transition> batch,
	std::span<const double> adv, double eps) {
	LossEval out;
	out.grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.size()));
	if (!p.has_discrete() || batch.empty()) {
		return out;
	}
	const BatchInputs in = gather(batch);
	const nn::BatchForward f = nn::forward_batch(p, in.x, in.gap);
	const Eigen::RowVectorXd logp = nn::discrete_logp(f, in.actions);
	const double n = static_cast<double>(batch.size());
	Eigen::RowVectorXd dl(logp.size());
	long clipped = 0;
	for (Eigen::Index i = 0; i < logp.size(); ++i) {
		const auto k = static_cast<std::size_t>(i);
		const double r = ratio(logp[i], batch[k].logp_d_old, &out.overflows);
		out.value += clipped_loss(r, adv[k], eps);
		out.mean_ratio += r;
		const bool pass = clip_passes_gradient(r, adv[k], eps);
		clipped += std::abs(r - 1.0) > eps ? 1 : 0;
		dl[i] = pass ? -adv[k] * r / n : 0.0;
	}
	out.value /= n;
	out.mean_ratio /= n;
	out.clip_fraction = static_cast<double>(clipped) / n;
	out.samples = static_cast<long>(batch.size());
	nn::backprop_discrete(p, f, in.actions, dl, out.grad);
	return out;
}

LossEval continuous_surrogate(const nn::PolicySet& p, std::span<const Transition> batch,
	std::span<const double> adv, double eps, bool mask_by_gap) {
	LossEval out;
	out.grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.size()));
	if (batch.empty()) {
		return out;
	}
	const bool masked = mask_by_gap && p.has_discrete();
	const BatchInputs in = gather(batch);
	const nn::BatchForward f = nn::forward_batch(p, in.x, in.gap);
	const Eigen::RowVectorXd logp = nn::continuous_logp(f, in.samples);
	long used = 0;
	for (const auto& t : batch) {
		used += (!masked || t.gap_bit == 1) ? 1 : 0;
	}
	if (used == 0) {
		return out;
	}
	const double n = static_cast<double>(used);
	Eigen::RowVectorXd dl = Eigen::RowVectorXd::Zero(logp.size());
	long clipped = 0;
	for (Eigen::Index i = 0; i < logp.size(); ++i) {
		const auto k = static_cast<std::size_t>(i);
		if (masked && batch[k].gap_bit != 1) {
			continue;
		}
		const double r = ratio(logp[i], batch[k].logp_c_old, &out.overflows);
		out.value += clipped_loss(r, adv[k], eps);
		out.mean_ratio += r;
		clipped += std::abs(r - 1.0) > eps ? 1 : 0;
		dl[i] = clip_passes_gradient(r, adv[k], eps) ? -adv[k] * r / n : 0.0;
	}
	out.value /= n;
	out.mean_ratio /= n;
	out.clip_fraction = static_cast<double>(clipped) / n;
	out.samples = used;
	nn::backprop_continuous(p, f, in.samples, dl, out.grad);
	return out;
}

LossEval critic_regression(const nn::PolicySet& p, std::span<const Transition> batch,
	std::span<const double> targets) {
	LossEval out;
	out.grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.size()));
	if (batch.empty()) {
		return out;
	}
	const BatchInputs in = gather(batch);
	const nn::BatchForward f = nn::forward_batch(p, in.x, in.gap);
	const double n = static_cast<double>(batch.size());
	Eigen::RowVectorXd dl(f.value.size());
	for (Eigen::Index i = 0; i < f.value.size(); ++i) {
		const double d = f.value[i] - targets[static_cast<std::size_t>(i)];
		out.value += d * d;
		dl[i] = 2.0 * d / n;
	}
	out.value /= n;
	out.samples = static_cast<long>(batch.size());
	nn::backprop_critic(p, f, dl, out.grad);
	return out;
}

// ---------------------------------------------------------------------------

HppoTrainer::HppoTrainer(nn::PolicySet& policy, TrainerConfig cfg, std::uint64_t seed)
	: policy_(policy), cfg_(std::move(cfg)), rng_(seed) {
	cfg_.validate();
	buffer_.reserve(cfg_.buffer_capacity);
	adam_d_ = nn::AdamState::zeros(policy_.size());
	adam_c_ = nn::AdamState::zeros(policy_.size());
	adam_v_ = nn::AdamState::zeros(policy_.size());
}

void HppoTrainer::push(const Transition& tr) {
	if (full()) {
		throw std::logic_error("trainer: buffer is full, update before pushing");
	}
	buffer_.push_back(tr);
}

FreshRatios HppoTrainer::fresh_ratios() const {
	FreshRatios out;
	if (buffer_.empty()) {
		return out;
	}
	const BatchInputs in = gather(buffer_);
	const nn::BatchForward f = nn::forward_batch(policy_, in.x, in.gap);
	const Eigen::RowVectorXd lc = nn::continuous_logp(f, in.samples);
	out.continuous.resize(buffer_.size());
	for (std::size_t i = 0; i < buffer_.size(); ++i) {
		out.continuous[i] = ratio(lc[static_cast<Eigen::Index>(i)], buffer_[i].logp_c_old);
	}
	if (policy_.has_discrete()) {
		const Eigen::RowVectorXd ld = nn::discrete_logp(f, in.actions);
		out.discrete.resize(buffer_.size());
		for (std::size_t i = 0; i < buffer_.size(); ++i) {
			out.discrete[i] = ratio(ld[static_cast<Eigen::Index>(i)], buffer_[i].logp_d_old);
		}
	}
	return out;
}

UpdateStats HppoTrainer::update() {
	if (!full()) {
		throw std::logic_error("trainer: update requires a full buffer");
	}
	const std::size_t n = buffer_.size();
	UpdateStats stats;
	stats.index = updates_;

	// Targets and advantages from the pre-update critic, fixed for the whole update.
	const BatchInputs in = gather(buffer_);
	const nn::BatchForward now = nn::forward_batch(policy_, in.x, in.gap);
	const nn::BatchForward next = nn::forward_batch(policy_, gather_next(buffer_), in.gap);
	std::vector<double> targets(n);
	std::vector<double> adv(n);
	double reward_sum = 0.0;
	for (std::size_t i = 0; i < n; ++i) {
		Transition scaled = buffer_[i];
		scaled.reward *= cfg_.reward_scale;
		const auto k = static_cast<Eigen::Index>(i);
		adv[i] = advantage(scaled, now.value[k], next.value[k], cfg_.gamma);
		targets[i] = adv[i] + now.value[k];
		reward_sum += buffer_[i].reward;
	}
	if (cfg_.normalize_advantage && n > 1) {
		const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(n);
		double var = 0.0;
		for (double a : adv) {
			var += (a - mean) * (a - mean);
		}
		const double sd = std::sqrt(var / static_cast<double>(n));
		for (double& a : adv) {
			a = (a - mean) / (sd + 1e-8);
		}
	}
	stats.mean_reward = reward_sum / static_cast<double>(n);
	if (policy_.has_discrete()) {
		double h = 0.0;
		for (Eigen::Index i = 0; i < now.probs.cols(); ++i) {
			const std::array<double, 2> pr{now.probs(0, i), now.probs(1, i)};
			h += nn::categorical_entropy(pr);
		}
		stats.entropy_d = h / static_cast<double>(n);
	}
	stats.entropy_c = nn::gaussian_entropy(policy_.sigma());

	ratio_sum_d_ = ratio_sum_c_ = clipped_ = counted_d_ = counted_c_ = 0.0;
	overflows_ = 0;

	std::vector<std::size_t> order(n);
	std::iota(order.begin(), order.end(), std::size_t{0});
	std::vector<Transition> batch;
	std::vector<double> batch_adv;
	std::vector<double> batch_targets;
	auto run = [&](std::span<const std::size_t> idx, bool first) {
		batch.clear();
		batch_adv.clear();
		batch_targets.clear();
		for (std::size_t i : idx) {
			batch.push_back(buffer_[i]);
			batch_adv.push_back(adv[i]);
			batch_targets.push_back(targets[i]);
		}
		train_minibatch(batch, batch_adv, batch_targets, stats, first);
	};

	if (cfg_.batching == BatchingMode::epochs) {
		for (int e = 0; e < cfg_.epochs_per_update; ++e) {
			std::shuffle(order.begin(), order.end(), rng_);
			for (std::size_t s = 0; s < n; s += cfg_.batch_size) {
				const std::size_t len = std::min(cfg_.batch_size, n - s);
				run(std::span<const std::size_t>(order).subspan(s, len), e == 0 && s == 0);
			}
		}
	} else {
		std::shuffle(order.begin(), order.end(), rng_);
		const std::size_t total = std::min(cfg_.batch_size, n);
		for (std::size_t s = 0; s < total; s += cfg_.minibatch_size) {
			const std::size_t len = std::min(cfg_.minibatch_size, total - s);
			run(std::span<const std::size_t>(order).subspan(s, len), s == 0);
		}
	}

	stats.mean_ratio_d = counted_d_ > 0.0 ? ratio_sum_d_ / counted_d_ : 1.0;
	stats.mean_ratio_c = counted_c_ > 0.0 ? ratio_sum_c_ / counted_c_ : 1.0;
	stats.clip_fraction = (counted_d_ + counted_c_) > 0.0 ? clipped_ / (counted_d_ + counted_c_) : 0.0;
	stats.ratio_overflows = overflows_;

	{
		const nn::BatchForward after = nn::forward_batch(policy_, in.x, in.gap);
		std::vector<double> values(after.value.data(), after.value.data() + after.value.size());
		stats.critic_loss = critic_loss(values, targets);
	}

	buffer_.clear();
	++updates_;
	return stats;
}

void HppoTrainer::train_minibatch(std::span<const Transition> batch, std::span<const double> adv,
	std::span<const double> targets, UpdateStats& stats, bool first) {
	const auto encoder = policy_.ranges(nn::ParamGroup::encoder);

	if (policy_.has_discrete()) {
		const LossEval ld = discrete_surrogate(policy_, batch, adv, cfg_.clip_eps);
		if (!finite(ld)) {
			throw NumericFault(snapshot(batch, adv, "discrete"));
		}
		const auto mask = join(encoder, policy_.ranges(nn::ParamGroup::discrete));
		nn::adam_step(policy_.params, ld.grad, cfg_.adam.lr_discrete, cfg_.adam, adam_d_, mask);
		ratio_sum_d_ += ld.mean_ratio * static_cast<double>(ld.samples);
		overflows_ += ld.overflows;
		counted_d_ += static_cast<double>(ld.samples);
		clipped_ += ld.clip_fraction * static_cast<double>(ld.samples);
		if (first) {
			stats.first_ratio_d = ld.mean_ratio;
		}
	}

	const LossEval lc = continuous_surrogate(policy_, batch, adv, cfg_.clip_eps, cfg_.mask_continuous_by_gap);
	if (!finite(lc)) {
		throw NumericFault(snapshot(batch, adv, "continuous"));
	}
	if (lc.samples > 0) {
		const auto mask = join(encoder, policy_.ranges(nn::ParamGroup::continuous));
		nn::adam_step(policy_.params, lc.grad, cfg_.adam.lr_continuous, cfg_.adam, adam_c_, mask);
		ratio_sum_c_ += lc.mean_ratio * static_cast<double>(lc.samples);
		overflows_ += lc.overflows;
		counted_c_ += static_cast<double>(lc.samples);
		clipped_ += lc.clip_fraction * static_cast<double>(lc.samples);
		if (first) {
			stats.first_ratio_c = lc.mean_ratio;
		}
	}

	const LossEval lv = critic_regression(policy_, batch, targets);
	if (!finite(lv)) {
		throw NumericFault(snapshot(batch, adv, "critic"));
	}
	nn::adam_step(policy_.params, lv.grad, cfg_.adam.lr_critic, cfg_.adam, adam_v_,
		policy_.ranges(nn::ParamGroup::critic));
}

// ---------------------------------------------------------------------------

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) noexcept {
	// splitmix64 over a mixed key
	std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1) + 0xBF58476D1CE4E5B9ULL * index;
	z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
	z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
	return z ^ (z >> 31);
}

std::uint64_t episode_seed(std::uint64_t master, std::uint64_t episode) noexcept {
	return derive_seed(master, 100, episode);
}

TrainingResult train(const EnvConfig& env_cfg, const TrainerConfig& cfg, std::uint64_t seed,
	bool continuous_only, const EpisodeObserver& observer) {
	cfg.validate();
	GlosaEnv env(env_cfg);
	TrainingResult result{nn::PolicySet::create(derive_seed(seed, 1, 0), !continuous_only, 128, 128, cfg.init_sigma), {}, {}};
	HppoTrainer trainer(result.policy, cfg, derive_seed(seed, 2, 0));
	nn::Rng act_rng(derive_seed(seed, 3, 0));

	for (long ep = 0; ep < cfg.total_episodes; ++ep) {
		const Observation first = env.reset(episode_seed(seed, static_cast<std::uint64_t>(ep)), cfg.density);
		ObservationVector x = env.normalized(first);
		EpisodeLog log;
		log.episode = ep;
		bool done = false;
		while (!done) {
			const HybridAction a = nn::act(result.policy, x, act_rng);
			const StepResult res = env.step(a);
			Transition tr;
			tr.x = x;
			tr.x_next = env.normalized(res.obs);
			tr.gap_bit = a.gap_bit;
			tr.accel_adv = a.accel_adv;
			tr.accel_sample = a.accel_sample;
			tr.logp_d_old = a.logp_d;
			tr.logp_c_old = a.logp_c;
			tr.reward = res.reward.total;
			tr.done = res.done;
			trainer.push(tr);
			if (trainer.full()) {
				result.updates.push_back(trainer.update());
			}
			x = tr.x_next;
			log.reward += res.reward.total;
			++log.steps;
			done = res.done;
		}
		log.metrics = env.metrics();
		if (observer) {
			observer(log, result.policy);
		}
		result.episodes.push_back(log);
	}
	return result;
}

}  // namespace afglosa
