#pragma once

#include <afglosa/env.hpp>

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace afglosa::nn {

using Rng = std::mt19937_64;

enum class Activation { tanh, none, softmax };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Affine layer stored inside a flat parameter vector: the weight matrix
/// (out x in, column-major) followed by the bias.
struct DenseLayer {
	std::size_t in = 0;
	std::size_t out = 0;
	Activation act = Activation::none;
	std::size_t offset = 0;

	[[nodiscard]] std::size_t size() const noexcept { return out * in + out; }
	[[nodiscard]] std::size_t bias_offset() const noexcept { return offset + out * in; }
};

struct DenseNet {
	std::vector<DenseLayer> layers;

	[[nodiscard]] std::size_t begin() const noexcept { return layers.empty() ? 0 : layers.front().offset; }
	[[nodiscard]] std::size_t end() const noexcept { return layers.empty() ? 0 : layers.back().offset + layers.back().size(); }
};

struct ParamRange {
	std::size_t begin;
	std::size_t end;
};

enum class ParamGroup { encoder, discrete, continuous, critic };

inline constexpr double kAccelBound = 3.0;
inline constexpr double kSigmaMin = 1e-3;
inline constexpr double kSigmaMax = 3.0;

/// Every learnable parameter of the hybrid actor-critic, in one flat vector.
///
/// Layout, in order: encoder (8->H tanh), discrete head (H->2 softmax, absent
/// for continuous-only policies), continuous head (H+1->1), log_sigma, critic
/// (8->C tanh, C->1).
class PolicySet {
public:
	/// Orthogonal init: gain 1 on hidden layers and the critic output, 0.01 on
	/// both actor heads. Biases zero, sigma = `init_sigma`.
	static PolicySet create(std::uint64_t seed, bool discrete_head = true, std::size_t hidden = 128,
		std::size_t critic_hidden = 128, double init_sigma = 1.0);

	Eigen::VectorXd params;
	DenseNet encoder;
	DenseNet discrete;
	DenseNet continuous;
	DenseNet critic;
	std::size_t log_sigma_index = 0;

	[[nodiscard]] bool has_discrete() const noexcept { return !discrete.layers.empty(); }
	[[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(params.size()); }
	[[nodiscard]] std::size_t hidden() const noexcept { return encoder.layers.front().out; }
	[[nodiscard]] std::vector<ParamRange> ranges(ParamGroup g) const;

	[[nodiscard]] Eigen::Map<const Eigen::MatrixXd> weights(const DenseLayer& l) const;
	[[nodiscard]] Eigen::Map<const Eigen::VectorXd> bias(const DenseLayer& l) const;
	[[nodiscard]] Eigen::Map<Eigen::MatrixXd> weights(const DenseLayer& l);
	[[nodiscard]] Eigen::Map<Eigen::VectorXd> bias(const DenseLayer& l);

	[[nodiscard]] double log_sigma() const noexcept { return params[static_cast<Eigen::Index>(log_sigma_index)]; }
	/// exp(log_sigma) clamped to [1e-3, 3].
	[[nodiscard]] double sigma() const noexcept;
	[[nodiscard]] bool sigma_clamped() const noexcept;
};

// --- single-sample forward ---------------------------------------------------

Eigen::VectorXd encode(const PolicySet& p, const ObservationVector& x);
std::array<double, 2> discrete_forward(const PolicySet& p, const Eigen::VectorXd& h);
std::array<double, 2> softmax2(double z0, double z1) noexcept;

struct GaussianParams {
	double mu;
	double sigma;
};

/// mu = 3 tanh(w . [h, gap_bit] + b), sigma from the shared log-std.
GaussianParams continuous_forward(const PolicySet& p, const Eigen::VectorXd& h, int gap_bit);
double critic_forward(const PolicySet& p, const ObservationVector& x);

// --- distributions -----------------------------------------------------------

double gaussian_logpdf(double x, double mu, double sigma) noexcept;
double categorical_entropy(std::span<const double> probs) noexcept;
double gaussian_entropy(double sigma) noexcept;

struct CategoricalDraw {
	int action;
	double logp;
};
CategoricalDraw sample_categorical(const std::array<double, 2>& probs, Rng& rng);

struct GaussianDraw {
	double action;  // clipped to [-3, 3]
	double sample;  // raw draw
	double logp;    // density of the raw draw
};
GaussianDraw sample_gaussian(const GaussianParams& g, Rng& rng);

enum class ActMode { stochastic, greedy };

/// Full hybrid decision. Continuous-only policies always emit gap_bit = 1
/// with logp_d = 0.
HybridAction act(const PolicySet& p, const ObservationVector& x, Rng& rng, ActMode mode = ActMode::stochastic);

// --- batched forward / backward ----------------------------------------------

/// Activations for a batch laid out column-wise (one sample per column).
struct BatchForward {
	Eigen::MatrixXd x;       // 8 x B
	Eigen::MatrixXd h;       // H x B
	Eigen::MatrixXd logits;  // 2 x B (empty without a discrete head)
	Eigen::MatrixXd probs;   // 2 x B
	Eigen::RowVectorXd raw;  // 1 x B, pre-squash mean
	Eigen::RowVectorXd mu;   // 1 x B
	Eigen::MatrixXd hv;      // C x B critic hidden
	Eigen::RowVectorXd value;
	Eigen::RowVectorXd gap;  // conditioning bit per sample
	double sigma = 1.0;
};

BatchForward forward_batch(const PolicySet& p, const Eigen::MatrixXd& x, const Eigen::RowVectorXd& gap);

Eigen::RowVectorXd discrete_logp(const BatchForward& f, std::span<const int> actions);
Eigen::RowVectorXd continuous_logp(const BatchForward& f, std::span<const double> samples);

/// Accumulate into `grad` the gradient of sum_i dloss[i] * logp_d[i].
void backprop_discrete(const PolicySet& p, const BatchForward& f, std::span<const int> actions,
	const Eigen::RowVectorXd& dloss, Eigen::VectorXd& grad);
/// Accumulate into `grad` the gradient of sum_i dloss[i] * logp_c[i].
void backprop_continuous(const PolicySet& p, const BatchForward& f, std::span<const double> samples,
	const Eigen::RowVectorXd& dloss, Eigen::VectorXd& grad);
/// Accumulate into `grad` the gradient of sum_i dloss[i] * V[i].
void backprop_critic(const PolicySet& p, const BatchForward& f, const Eigen::RowVectorXd& dloss,
	Eigen::VectorXd& grad);

// --- optimisation ------------------------------------------------------------

struct AdamConfig {
	double lr_discrete = 3e-5;
	double lr_continuous = 3e-5;
	double lr_critic = 1e-3;
	double beta1 = 0.9;
	double beta2 = 0.999;
	double eps = 1e-8;

	void validate() const;
};

struct AdamState {
	Eigen::VectorXd m;
	Eigen::VectorXd v;
	long step = 0;

	static AdamState zeros(std::size_t n);
};

/// Bias-corrected Adam on the entries covered by `mask` (all entries if empty).
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, double lr, const AdamConfig& cfg,
	AdamState& state, std::span<const ParamRange> mask = {});

// --- checkpoints -------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

using Hyperparameters = std::map<std::string, double>;

void save_checkpoint(std::ostream& out, const PolicySet& p, const Hyperparameters& hyper = {});
PolicySet load_checkpoint(std::istream& in, Hyperparameters* hyper = nullptr);
void save_checkpoint(const std::string& path, const PolicySet& p, const Hyperparameters& hyper = {});
PolicySet load_checkpoint(const std::string& path, Hyperparameters* hyper = nullptr);

}  // namespace afglosa::nn
