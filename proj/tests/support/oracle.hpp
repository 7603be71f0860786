#pragma once

// Plain-loop reference implementations used as test oracles. Nothing here
// calls into the library's network code; only the parameter layout
// (offsets, column-major weights) is shared.

#include <afglosa/hppo.hpp>
#include <afglosa/policy_net.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <vector>

namespace oracle {

using afglosa::Transition;
using afglosa::nn::DenseLayer;
using afglosa::nn::PolicySet;

inline double w(const Eigen::VectorXd& th, const DenseLayer& l, std::size_t i, std::size_t j) {
	return th[static_cast<Eigen::Index>(l.offset + j * l.out + i)];
}
inline double b(const Eigen::VectorXd& th, const DenseLayer& l, std::size_t i) {
	return th[static_cast<Eigen::Index>(l.offset + l.out * l.in + i)];
}

inline std::vector<double> dense(const Eigen::VectorXd& th, const DenseLayer& l, const std::vector<double>& in,
	bool squash) {
	std::vector<double> out(l.out);
	for (std::size_t i = 0; i < l.out; ++i) {
		double s = b(th, l, i);
		for (std::size_t j = 0; j < l.in; ++j) {
			s += w(th, l, i, j) * in[j];
		}
		out[i] = squash ? std::tanh(s) : s;
	}
	return out;
}

inline std::vector<double> hidden(const PolicySet& p, const Eigen::VectorXd& th, const afglosa::ObservationVector& x) {
	return dense(th, p.encoder.layers[0], std::vector<double>(x.begin(), x.end()), true);
}

inline double logp_discrete(const PolicySet& p, const Eigen::VectorXd& th, const Transition& t) {
	const auto h = hidden(p, th, t.x);
	const auto z = dense(th, p.discrete.layers[0], h, false);
	const double m = std::max(z[0], z[1]);
	const double lse = m + std::log(std::exp(z[0] - m) + std::exp(z[1] - m));
	return z[static_cast<std::size_t>(t.gap_bit)] - lse;
}

inline double sigma(const PolicySet& p, const Eigen::VectorXd& th) {
	const double s = std::exp(th[static_cast<Eigen::Index>(p.log_sigma_index)]);
	return std::clamp(s, afglosa::nn::kSigmaMin, afglosa::nn::kSigmaMax);
}

inline double mean(const PolicySet& p, const Eigen::VectorXd& th, const Transition& t) {
	auto in = hidden(p, th, t.x);
	in.push_back(static_cast<double>(t.gap_bit));
	return 3.0 * std::tanh(dense(th, p.continuous.layers[0], in, false)[0]);
}

inline double logp_continuous(const PolicySet& p, const Eigen::VectorXd& th, const Transition& t) {
	const double s = sigma(p, th);
	const double z = (t.accel_sample - mean(p, th, t)) / s;
	return -0.5 * z * z - std::log(s) - 0.5 * std::log(2.0 * std::numbers::pi);
}

inline double value(const PolicySet& p, const Eigen::VectorXd& th, const afglosa::ObservationVector& x) {
	const auto hv = dense(th, p.critic.layers[0], std::vector<double>(x.begin(), x.end()), true);
	return dense(th, p.critic.layers[1], hv, false)[0];
}

inline double clip_term(double r, double adv, double eps) {
	const double c = std::clamp(r, 1.0 - eps, 1.0 + eps);
	return -std::min(r * adv, c * adv);
}

inline double discrete_loss(const PolicySet& p, const Eigen::VectorXd& th, std::span<const Transition> batch,
	std::span<const double> adv, double eps) {
	double s = 0.0;
	for (std::size_t i = 0; i < batch.size(); ++i) {
		s += clip_term(std::exp(logp_discrete(p, th, batch[i]) - batch[i].logp_d_old), adv[i], eps);
	}
	return s / static_cast<double>(batch.size());
}

inline double continuous_loss(const PolicySet& p, const Eigen::VectorXd& th, std::span<const Transition> batch,
	std::span<const double> adv, double eps, bool mask) {
	double s = 0.0;
	int n = 0;
	for (std::size_t i = 0; i < batch.size(); ++i) {
		if (mask && batch[i].gap_bit != 1) {
			continue;
		}
		s += clip_term(std::exp(logp_continuous(p, th, batch[i]) - batch[i].logp_c_old), adv[i], eps);
		++n;
	}
	return n == 0 ? 0.0 : s / n;
}

inline double critic_loss(const PolicySet& p, const Eigen::VectorXd& th, std::span<const Transition> batch,
	std::span<const double> targets) {
	double s = 0.0;
	for (std::size_t i = 0; i < batch.size(); ++i) {
		const double d = value(p, th, batch[i].x) - targets[i];
		s += d * d;
	}
	return s / static_cast<double>(batch.size());
}

/// Random but well-formed transitions. Old log-probabilities are offset from
/// the current ones by up to `spread` so ratios straddle 1.
inline std::vector<Transition> random_batch(const PolicySet& p, std::size_t n, std::mt19937_64& rng,
	double spread = 0.05) {
	std::uniform_real_distribution<double> u(-1.0, 1.0);
	std::bernoulli_distribution coin(0.5);
	std::vector<Transition> out(n);
	for (auto& t : out) {
		for (std::size_t k = 0; k < 7; ++k) {
			t.x[k] = u(rng);
			t.x_next[k] = u(rng);
		}
		t.x[7] = coin(rng) ? 1.0 : 0.0;
		t.x_next[7] = coin(rng) ? 1.0 : 0.0;
		t.gap_bit = (p.has_discrete() && !coin(rng)) ? 0 : 1;
		t.accel_sample = 2.5 * u(rng);
		t.accel_adv = std::clamp(t.accel_sample, -3.0, 3.0);
		t.reward = 100.0 * u(rng);
		t.done = false;
		t.logp_d_old = p.has_discrete() ? logp_discrete(p, p.params, t) + spread * u(rng) : 0.0;
		t.logp_c_old = logp_continuous(p, p.params, t) + spread * u(rng);
	}
	return out;
}

/// Central difference of `f` along direction `d`.
template <class F>
double directional(F&& f, const Eigen::VectorXd& th, const Eigen::VectorXd& d, double h = 1e-6) {
	return (f(th + h * d) - f(th - h * d)) / (2.0 * h);
}

inline double rel_err(double a, double b) {
	const double scale = std::max({std::abs(a), std::abs(b), 1e-8});
	return std::abs(a - b) / scale;
}

}  // namespace oracle
