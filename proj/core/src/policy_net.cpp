#include <afglosa/policy_net.hpp>

#include <afglosa/errors.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace afglosa::nn {

namespace {

const double kLogSigmaMin = std::log(kSigmaMin);
const double kLogSigmaMax = std::log(kSigmaMax);

PolicySet make_layout(bool discrete_head, std::size_t hidden, std::size_t critic_hidden) {
	PolicySet p;
	std::size_t off = 0;
	auto add = [&](DenseNet& net, std::size_t in, std::size_t out, Activation act) {
		net.layers.push_back({in, out, act, off});
		off += net.layers.back().size();
	};
	add(p.encoder, kObservationSize, hidden, Activation::tanh);
	if (discrete_head) {
		add(p.discrete, hidden, 2, Activation::softmax);
	}
	add(p.continuous, hidden + 1, 1, Activation::none);
	p.log_sigma_index = off++;
	add(p.critic, kObservationSize, critic_hidden, Activation::tanh);
	add(p.critic, critic_hidden, 1, Activation::none);
	p.params = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(off));
	return p;
}

Eigen::MatrixXd orthogonal(std::size_t rows, std::size_t cols, double gain, Rng& rng) {
	const auto big = static_cast<Eigen::Index>(std::max(rows, cols));
	const auto small = static_cast<Eigen::Index>(std::min(rows, cols));
	std::normal_distribution<double> normal(0.0, 1.0);
	Eigen::MatrixXd a(big, small);
	for (Eigen::Index j = 0; j < small; ++j) {
		for (Eigen::Index i = 0; i < big; ++i) {
			a(i, j) = normal(rng);
		}
	}
	Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
	Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
	const Eigen::MatrixXd r = qr.matrixQR();
	for (Eigen::Index j = 0; j < small; ++j) {
		if (r(j, j) < 0.0) {
			q.col(j) *= -1.0;
		}
	}
	Eigen::MatrixXd w = rows >= cols ? q : Eigen::MatrixXd(q.transpose());
	return gain * w;
}

void require_finite(const ObservationVector& x) {
	for (double v : x) {
		if (!std::isfinite(v)) {
			throw NumericFault("network input contains a non-finite value");
		}
	}
}

Eigen::Map<Eigen::MatrixXd> grad_weights(Eigen::VectorXd& g, const DenseLayer& l) {
	return {g.data() + l.offset, static_cast<Eigen::Index>(l.out), static_cast<Eigen::Index>(l.in)};
}

Eigen::Map<Eigen::VectorXd> grad_bias(Eigen::VectorXd& g, const DenseLayer& l) {
	return {g.data() + l.bias_offset(), static_cast<Eigen::Index>(l.out)};
}

/// Encoder part shared by both actor heads: dH -> encoder parameters.
void backprop_encoder(const PolicySet& p, const BatchForward& f, const Eigen::MatrixXd& dh, Eigen::VectorXd& grad) {
	const DenseLayer& enc = p.encoder.layers.front();
	const Eigen::MatrixXd dz = dh.array() * (1.0 - f.h.array().square());
	grad_weights(grad, enc).noalias() += dz * f.x.transpose();
	grad_bias(grad, enc) += dz.rowwise().sum();
}

double log_sum_exp2(double a, double b) noexcept {
	const double m = std::max(a, b);
	return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

std::string to_string(Activation a) {
	switch (a) {
	case Activation::tanh: return "tanh";
	case Activation::none: return "none";
	case Activation::softmax: return "softmax";
	}
	return "none";
}

Activation activation_from_string(const std::string& s) {
	if (s == "tanh") return Activation::tanh;
	if (s == "none") return Activation::none;
	if (s == "softmax") return Activation::softmax;
	throw ConfigError("unknown activation '" + s + "'");
}

PolicySet PolicySet::create(std::uint64_t seed, bool discrete_head, std::size_t hidden, std::size_t critic_hidden,
	double init_sigma) {
	if (!(init_sigma >= kSigmaMin && init_sigma <= kSigmaMax)) {
		throw ConfigError("policy: init_sigma must lie in [1e-3, 3]");
	}
	PolicySet p = make_layout(discrete_head, hidden, critic_hidden);
	Rng rng(seed);
	auto init = [&](const DenseLayer& l, double gain) { p.weights(l) = orthogonal(l.out, l.in, gain, rng); };
	init(p.encoder.layers.front(), 1.0);
	if (discrete_head) {
		init(p.discrete.layers.front(), 0.01);
	}
	init(p.continuous.layers.front(), 0.01);
	init(p.critic.layers[0], 1.0);
	init(p.critic.layers[1], 1.0);
	p.params[static_cast<Eigen::Index>(p.log_sigma_index)] = std::log(init_sigma);
	return p;
}

std::vector<ParamRange> PolicySet::ranges(ParamGroup g) const {
	switch (g) {
	case ParamGroup::encoder: return {{encoder.begin(), encoder.end()}};
	case ParamGroup::discrete:
		if (!has_discrete()) return {};
		return {{discrete.begin(), discrete.end()}};
	case ParamGroup::continuous: return {{continuous.begin(), continuous.end()}, {log_sigma_index, log_sigma_index + 1}};
	case ParamGroup::critic: return {{critic.begin(), critic.end()}};
	}
	return {};
}

Eigen::Map<const Eigen::MatrixXd> PolicySet::weights(const DenseLayer& l) const {
	return {params.data() + l.offset, static_cast<Eigen::Index>(l.out), static_cast<Eigen::Index>(l.in)};
}

Eigen::Map<const Eigen::VectorXd> PolicySet::bias(const DenseLayer& l) const {
	return {params.data() + l.bias_offset(), static_cast<Eigen::Index>(l.out)};
}

Eigen::Map<Eigen::MatrixXd> PolicySet::weights(const DenseLayer& l) {
	return {params.data() + l.offset, static_cast<Eigen::Index>(l.out), static_cast<Eigen::Index>(l.in)};
}

Eigen::Map<Eigen::VectorXd> PolicySet::bias(const DenseLayer& l) {
	return {params.data() + l.bias_offset(), static_cast<Eigen::Index>(l.out)};
}

double PolicySet::sigma() const noexcept {
	return std::exp(std::clamp(log_sigma(), kLogSigmaMin, kLogSigmaMax));
}

bool PolicySet::sigma_clamped() const noexcept {
	return log_sigma() < kLogSigmaMin || log_sigma() > kLogSigmaMax;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd encode(const PolicySet& p, const ObservationVector& x) {
	require_finite(x);
	const DenseLayer& l = p.encoder.layers.front();
	const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
	return (p.weights(l) * xv + p.bias(l)).array().tanh().matrix();
}

std::array<double, 2> softmax2(double z0, double z1) noexcept {
	const double m = std::max(z0, z1);
	const double e0 = std::exp(z0 - m);
	const double e1 = std::exp(z1 - m);
	const double s = e0 + e1;
	return {e0 / s, e1 / s};
}

std::array<double, 2> discrete_forward(const PolicySet& p, const Eigen::VectorXd& h) {
	const DenseLayer& l = p.discrete.layers.front();
	const Eigen::Vector2d z = p.weights(l) * h + p.bias(l);
	return softmax2(z[0], z[1]);
}

GaussianParams continuous_forward(const PolicySet& p, const Eigen::VectorXd& h, int gap_bit) {
	const DenseLayer& l = p.continuous.layers.front();
	const auto w = p.weights(l);
	const auto n = static_cast<Eigen::Index>(h.size());
	const double raw = w.leftCols(n).row(0).dot(h) + w(0, n) * gap_bit + p.bias(l)[0];
	return {kAccelBound * std::tanh(raw), p.sigma()};
}

double critic_forward(const PolicySet& p, const ObservationVector& x) {
	require_finite(x);
	const DenseLayer& l0 = p.critic.layers[0];
	const DenseLayer& l1 = p.critic.layers[1];
	const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
	const Eigen::VectorXd hv = (p.weights(l0) * xv + p.bias(l0)).array().tanh().matrix();
	return (p.weights(l1) * hv + p.bias(l1))[0];
}

double gaussian_logpdf(double x, double mu, double sigma) noexcept {
	const double z = (x - mu) / sigma;
	return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double categorical_entropy(std::span<const double> probs) noexcept {
	double h = 0.0;
	for (double q : probs) {
		if (q > 0.0) {
			h -= q * std::log(q);
		}
	}
	return h;
}

double gaussian_entropy(double sigma) noexcept {
	return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * sigma * sigma);
}

CategoricalDraw sample_categorical(const std::array<double, 2>& probs, Rng& rng) {
	std::uniform_real_distribution<double> unit(0.0, 1.0);
	const int a = unit(rng) < probs[0] ? 0 : 1;
	return {a, std::log(probs[static_cast<std::size_t>(a)])};
}

GaussianDraw sample_gaussian(const GaussianParams& g, Rng& rng) {
	std::normal_distribution<double> normal(0.0, 1.0);
	const double s = g.mu + g.sigma * normal(rng);
	return {std::clamp(s, -kAccelBound, kAccelBound), s, gaussian_logpdf(s, g.mu, g.sigma)};
}

HybridAction act(const PolicySet& p, const ObservationVector& x, Rng& rng, ActMode mode) {
	const Eigen::VectorXd h = encode(p, x);
	HybridAction a;
	if (p.has_discrete()) {
		const DenseLayer& l = p.discrete.layers.front();
		const Eigen::Vector2d z = p.weights(l) * h + p.bias(l);
		if (mode == ActMode::stochastic) {
			a.gap_bit = sample_categorical(softmax2(z[0], z[1]), rng).action;
		} else {
			a.gap_bit = z[1] > z[0] ? 1 : 0;
		}
		a.logp_d = z[a.gap_bit] - log_sum_exp2(z[0], z[1]);
	} else {
		a.gap_bit = 1;
		a.logp_d = 0.0;
	}
	const GaussianParams g = continuous_forward(p, h, a.gap_bit);
	if (mode == ActMode::stochastic) {
		const GaussianDraw d = sample_gaussian(g, rng);
		a.accel_adv = d.action;
		a.accel_sample = d.sample;
		a.logp_c = d.logp;
	} else {
		a.accel_adv = g.mu;
		a.accel_sample = g.mu;
		a.logp_c = gaussian_logpdf(g.mu, g.mu, g.sigma);
	}
	return a;
}

// ---------------------------------------------------------------------------

BatchForward forward_batch(const PolicySet& p, const Eigen::MatrixXd& x, const Eigen::RowVectorXd& gap) {
	if (!x.allFinite()) {
		throw NumericFault("network batch input contains a non-finite value");
	}
	BatchForward f;
	f.x = x;
	f.gap = gap;
	const DenseLayer& enc = p.encoder.layers.front();
	f.h = ((p.weights(enc) * x).colwise() + p.bias(enc)).array().tanh().matrix();

	if (p.has_discrete()) {
		const DenseLayer& d = p.discrete.layers.front();
		f.logits = (p.weights(d) * f.h).colwise() + p.bias(d);
		f.probs.resize(2, x.cols());
		for (Eigen::Index i = 0; i < x.cols(); ++i) {
			const auto pr = softmax2(f.logits(0, i), f.logits(1, i));
			f.probs(0, i) = pr[0];
			f.probs(1, i) = pr[1];
		}
	}

	const DenseLayer& c = p.continuous.layers.front();
	const auto w = p.weights(c);
	const auto n = f.h.rows();
	f.raw = (w.leftCols(n) * f.h).row(0) + w(0, n) * gap;
	f.raw.array() += p.bias(c)[0];
	f.mu = kAccelBound * f.raw.array().tanh();
	f.sigma = p.sigma();

	const DenseLayer& v0 = p.critic.layers[0];
	const DenseLayer& v1 = p.critic.layers[1];
	f.hv = ((p.weights(v0) * x).colwise() + p.bias(v0)).array().tanh().matrix();
	f.value = (p.weights(v1) * f.hv).row(0);
	f.value.array() += p.bias(v1)[0];
	return f;
}

Eigen::RowVectorXd discrete_logp(const BatchForward& f, std::span<const int> actions) {
	Eigen::RowVectorXd out(f.logits.cols());
	for (Eigen::Index i = 0; i < f.logits.cols(); ++i) {
		const int a = actions[static_cast<std::size_t>(i)];
		out[i] = f.logits(a, i) - log_sum_exp2(f.logits(0, i), f.logits(1, i));
	}
	return out;
}

Eigen::RowVectorXd continuous_logp(const BatchForward& f, std::span<const double> samples) {
	Eigen::RowVectorXd out(f.mu.size());
	for (Eigen::Index i = 0; i < f.mu.size(); ++i) {
		out[i] = gaussian_logpdf(samples[static_cast<std::size_t>(i)], f.mu[i], f.sigma);
	}
	return out;
}

void backprop_discrete(const PolicySet& p, const BatchForward& f, std::span<const int> actions,
	const Eigen::RowVectorXd& dloss, Eigen::VectorXd& grad) {
	const DenseLayer& d = p.discrete.layers.front();
	Eigen::MatrixXd dz = -f.probs;
	for (Eigen::Index i = 0; i < dz.cols(); ++i) {
		dz(actions[static_cast<std::size_t>(i)], i) += 1.0;
	}
	dz.array().rowwise() *= dloss.array();
	grad_weights(grad, d).noalias() += dz * f.h.transpose();
	grad_bias(grad, d) += dz.rowwise().sum();
	backprop_encoder(p, f, p.weights(d).transpose() * dz, grad);
}

void backprop_continuous(const PolicySet& p, const BatchForward& f, std::span<const double> samples,
	const Eigen::RowVectorXd& dloss, Eigen::VectorXd& grad) {
	const DenseLayer& c = p.continuous.layers.front();
	const double var = f.sigma * f.sigma;
	const Eigen::Index b = f.mu.size();
	Eigen::RowVectorXd draw(b);
	double dlog_sigma = 0.0;
	for (Eigen::Index i = 0; i < b; ++i) {
		const double diff = samples[static_cast<std::size_t>(i)] - f.mu[i];
		const double t = f.mu[i] / kAccelBound;
		draw[i] = dloss[i] * (diff / var) * kAccelBound * (1.0 - t * t);
		dlog_sigma += dloss[i] * (diff * diff / var - 1.0);
	}
	const auto n = f.h.rows();
	auto gw = grad_weights(grad, c);
	gw.leftCols(n).noalias() += draw * f.h.transpose();
	gw(0, n) += draw.dot(f.gap);
	grad_bias(grad, c)[0] += draw.sum();
	if (!p.sigma_clamped()) {
		grad[static_cast<Eigen::Index>(p.log_sigma_index)] += dlog_sigma;
	}
	const Eigen::MatrixXd dh = p.weights(c).leftCols(n).transpose() * draw;
	backprop_encoder(p, f, dh, grad);
}

void backprop_critic(const PolicySet& p, const BatchForward& f, const Eigen::RowVectorXd& dloss,
	Eigen::VectorXd& grad) {
	const DenseLayer& v0 = p.critic.layers[0];
	const DenseLayer& v1 = p.critic.layers[1];
	grad_weights(grad, v1).noalias() += dloss * f.hv.transpose();
	grad_bias(grad, v1)[0] += dloss.sum();
	const Eigen::MatrixXd dz = (p.weights(v1).transpose() * dloss).array() * (1.0 - f.hv.array().square());
	grad_weights(grad, v0).noalias() += dz * f.x.transpose();
	grad_bias(grad, v0) += dz.rowwise().sum();
}

// ---------------------------------------------------------------------------

void AdamConfig::validate() const {
	if (!(lr_discrete > 0.0 && lr_continuous > 0.0 && lr_critic > 0.0)) {
		throw ConfigError("adam: learning rates must be > 0");
	}
	if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0)) {
		throw ConfigError("adam: betas must lie in [0, 1) and eps must be > 0");
	}
}

AdamState AdamState::zeros(std::size_t n) {
	const auto k = static_cast<Eigen::Index>(n);
	return {Eigen::VectorXd::Zero(k), Eigen::VectorXd::Zero(k), 0};
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, double lr, const AdamConfig& cfg,
	AdamState& state, std::span<const ParamRange> mask) {
	if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
		throw std::invalid_argument("adam_step: parameter, gradient and moment sizes differ");
	}
	++state.step;
	const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
	const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
	auto update = [&](std::size_t begin, std::size_t end) {
		for (auto i = static_cast<Eigen::Index>(begin); i < static_cast<Eigen::Index>(end); ++i) {
			const double g = grads[i];
			state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
			state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
			params[i] -= lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + cfg.eps);
		}
	};
	if (mask.empty()) {
		update(0, static_cast<std::size_t>(params.size()));
	} else {
		for (const auto& r : mask) {
			update(r.begin, r.end);
		}
	}
}

// ---------------------------------------------------------------------------

namespace {

std::string format_double(double v) {
	char buf[64];
	const auto res = std::to_chars(buf, buf + sizeof(buf), v);
	return {buf, res.ptr};
}

double parse_double(const std::string& s) {
	double v = 0.0;
	const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
	if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
		throw ConfigError("checkpoint: malformed number '" + s + "'");
	}
	return v;
}

void write_net(std::ostream& out, const std::string& name, const DenseNet& net) {
	for (std::size_t i = 0; i < net.layers.size(); ++i) {
		const auto& l = net.layers[i];
		out << "layer " << name << ' ' << i << ' ' << l.in << ' ' << l.out << ' ' << to_string(l.act) << '\n';
	}
}

}  // namespace

void save_checkpoint(std::ostream& out, const PolicySet& p, const Hyperparameters& hyper) {
	out << "afglosa-checkpoint " << kCheckpointVersion << '\n';
	out << "hidden " << p.hidden() << '\n';
	out << "critic_hidden " << p.critic.layers.front().out << '\n';
	out << "discrete_head " << (p.has_discrete() ? 1 : 0) << '\n';
	for (const auto& [k, v] : hyper) {
		out << "hyper " << k << ' ' << format_double(v) << '\n';
	}
	write_net(out, "encoder", p.encoder);
	write_net(out, "discrete", p.discrete);
	write_net(out, "continuous", p.continuous);
	out << "log_sigma " << p.log_sigma_index << '\n';
	write_net(out, "critic", p.critic);
	out << "params " << p.size() << '\n';
	for (Eigen::Index i = 0; i < p.params.size(); ++i) {
		out << format_double(p.params[i]) << '\n';
	}
	out << "end\n";
}

PolicySet load_checkpoint(std::istream& in, Hyperparameters* hyper) {
	std::string line;
	auto next = [&]() -> std::istringstream {
		if (!std::getline(in, line)) {
			throw ConfigError("checkpoint: unexpected end of file");
		}
		return std::istringstream(line);
	};

	std::string key;
	int version = 0;
	next() >> key >> version;
	if (key != "afglosa-checkpoint") {
		throw ConfigError("checkpoint: missing header");
	}
	if (version != kCheckpointVersion) {
		throw ConfigError("checkpoint: unsupported format version " + std::to_string(version));
	}
	std::size_t hidden = 0;
	std::size_t critic_hidden = 0;
	int discrete = 0;
	next() >> key >> hidden;
	next() >> key >> critic_hidden;
	next() >> key >> discrete;
	PolicySet p = make_layout(discrete != 0, hidden, critic_hidden);

	std::vector<std::string> expected;
	{
		std::ostringstream layout;
		write_net(layout, "encoder", p.encoder);
		write_net(layout, "discrete", p.discrete);
		write_net(layout, "continuous", p.continuous);
		layout << "log_sigma " << p.log_sigma_index << '\n';
		write_net(layout, "critic", p.critic);
		std::istringstream rows(layout.str());
		for (std::string r; std::getline(rows, r);) {
			expected.push_back(r);
		}
	}

	auto ls = next();
	ls >> key;
	while (key == "hyper") {
		std::string name;
		std::string value;
		ls >> name >> value;
		if (hyper != nullptr) {
			(*hyper)[name] = parse_double(value);
		}
		ls = next();
		ls >> key;
	}
	for (std::size_t i = 0; i < expected.size(); ++i) {
		if (i > 0) {
			next();
		}
		if (line != expected[i]) {
			throw ConfigError("checkpoint: layout mismatch, expected '" + expected[i] + "' got '" + line + "'");
		}
	}
	std::size_t n = 0;
	next() >> key >> n;
	if (key != "params" || n != p.size()) {
		throw ConfigError("checkpoint: parameter count mismatch");
	}
	for (Eigen::Index i = 0; i < p.params.size(); ++i) {
		next();
		p.params[i] = parse_double(line);
	}
	next();
	if (line != "end") {
		throw ConfigError("checkpoint: missing end marker");
	}
	return p;
}

void save_checkpoint(const std::string& path, const PolicySet& p, const Hyperparameters& hyper) {
	std::ofstream out(path);
	if (!out) {
		throw ConfigError("cannot write checkpoint " + path);
	}
	save_checkpoint(out, p, hyper);
}

PolicySet load_checkpoint(const std::string& path, Hyperparameters* hyper) {
	std::ifstream in(path);
	if (!in) {
		throw ConfigError("cannot read checkpoint " + path);
	}
	return load_checkpoint(in, hyper);
}

}  // namespace afglosa::nn
