#include "coverhead/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "coverhead/numeric.hpp"
#include "coverhead/rng.hpp"

namespace coverhead {

void TrainConfig::validate() const {
    if (epochs < 1) {
        throw ConfigError("train config: epochs must be >= 1");
    }
    if (!(lr0 > 0.0)) {
        throw ConfigError("train config: lr0 must be > 0");
    }
    if (!(decay_factor > 0.0)) {
        throw ConfigError("train config: decay_factor must be > 0");
    }
    for (int e : decay_epochs) {
        if (e < 1 || e > epochs) {
            throw ConfigError("train config: decay_epochs entry " + std::to_string(e) +
                              " outside [1, epochs]");
        }
    }
    if (batch_size != 1) {
        throw ConfigError("train config: batch_size must be 1 (per-sample updates)");
    }
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
        throw ConfigError("train config: adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) {
        throw ConfigError("train config: adam_eps must be > 0");
    }
}

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) {
        return "";
    }
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

std::vector<int> parse_int_list(const std::string& s, const std::string& key) {
    std::vector<int> out;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) {
            continue;
        }
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw ParseError("train config: bad integer '" + item + "' for " + key);
        }
    }
    return out;
}

} // namespace

TrainConfig TrainConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open for reading: " + path.string());
    }
    TrainConfig config;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#') {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError("train config: line " + std::to_string(line_no) +
                             " is not key=value: '" + line + "'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "epochs") {
                config.epochs = std::stoi(value);
            } else if (key == "lr0") {
                config.lr0 = std::stod(value);
            } else if (key == "decay_epochs") {
                config.decay_epochs = parse_int_list(value, key);
            } else if (key == "decay_factor") {
                config.decay_factor = std::stod(value);
            } else if (key == "batch_size") {
                config.batch_size = std::stoi(value);
            } else if (key == "augment_hflip") {
                config.augment_hflip = value == "true" || value == "1";
            } else if (key == "adam_beta1") {
                config.adam_beta1 = std::stod(value);
            } else if (key == "adam_beta2") {
                config.adam_beta2 = std::stod(value);
            } else if (key == "adam_eps") {
                config.adam_eps = std::stod(value);
            } else if (key == "seed") {
                config.seed = std::stoull(value);
            } else {
                throw ParseError("train config: unknown key '" + key + "' at line " +
                                 std::to_string(line_no));
            }
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception&) {
            throw ParseError("train config: bad value '" + value + "' for " + key);
        }
    }
    config.validate();
    return config;
}

void TrainConfig::to_file(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    out << "epochs=" << epochs << '\n';
    out << "lr0=" << lr0 << '\n';
    out << "decay_epochs=";
    for (std::size_t i = 0; i < decay_epochs.size(); ++i) {
        out << (i ? "," : "") << decay_epochs[i];
    }
    out << '\n';
    out << "decay_factor=" << decay_factor << '\n';
    out << "batch_size=" << batch_size << '\n';
    out << "augment_hflip=" << (augment_hflip ? "true" : "false") << '\n';
    out << "adam_beta1=" << adam_beta1 << '\n';
    out << "adam_beta2=" << adam_beta2 << '\n';
    out << "adam_eps=" << adam_eps << '\n';
    out << "seed=" << seed << '\n';
}

double lr_at_epoch(const TrainConfig& config, int epoch) {
    double lr = config.lr0;
    for (int e : config.decay_epochs) {
        if (epoch >= e) {
            lr *= config.decay_factor;
        }
    }
    return lr;
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    out << "epoch,loss,lr,kappa,seconds\n";
    out.precision(17);
    for (const auto& e : epochs) {
        out << e.epoch << ',' << e.mean_loss_pp << ',' << e.lr << ',' << e.kappa << ','
            << e.seconds << '\n';
    }
}

AdamState AdamState::init(const HeadParams& params, const TrainConfig& config) {
    AdamState state;
    state.m_weights.assign(params.weights.size(), 0.0);
    state.v_weights.assign(params.weights.size(), 0.0);
    state.m_bias.assign(params.bias.size(), 0.0);
    state.v_bias.assign(params.bias.size(), 0.0);
    state.beta1 = config.adam_beta1;
    state.beta2 = config.adam_beta2;
    state.eps = config.adam_eps;
    return state;
}

namespace {

inline void adam_update(double& param, double& m, double& v, double grad, double lr,
                        double beta1, double beta2, double eps, double bc1, double bc2) {
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad * grad;
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    param -= lr * m_hat / (std::sqrt(v_hat) + eps);
}

} // namespace

void adam_step(HeadParams& params, const HeadGradients& grads, AdamState& state, double lr) {
    if (grads.weights.size() != params.weights.size() || grads.bias.size() != params.bias.size()) {
        throw ConfigError("adam_step: gradient shape mismatch");
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.weights.size(); ++i) {
        adam_update(params.weights[i], state.m_weights[i], state.v_weights[i], grads.weights[i],
                    lr, state.beta1, state.beta2, state.eps, bc1, bc2);
    }
    for (std::size_t i = 0; i < params.bias.size(); ++i) {
        adam_update(params.bias[i], state.m_bias[i], state.v_bias[i], grads.bias[i], lr,
                    state.beta1, state.beta2, state.eps, bc1, bc2);
    }
    adam_update(params.kappa_raw, state.m_kappa, state.v_kappa, grads.kappa_raw, lr, state.beta1,
                state.beta2, state.eps, bc1, bc2);
}

TrainResult train(std::span<const TrainSample> dataset, const TrainConfig& config) {
    config.validate();
    if (dataset.empty()) {
        throw ConfigError("train: empty dataset");
    }
    const std::size_t species = dataset.front().target.size();
    const int dims = dataset.front().features->channels();
    for (const auto& sample : dataset) {
        if (sample.features == nullptr) {
            throw ConfigError("train: sample without features");
        }
        if (sample.features->channels() != dims) {
            throw ConfigError("train: inconsistent feature channel counts (" +
                              std::to_string(sample.features->channels()) + " vs " +
                              std::to_string(dims) + ")");
        }
        if (sample.target.size() != species) {
            throw ConfigError("train: inconsistent species counts (" +
                              std::to_string(sample.target.size()) + " vs " +
                              std::to_string(species) + ")");
        }
    }

    TrainResult result;
    result.params = HeadParams::init(species, static_cast<std::size_t>(dims), config.seed);
    AdamState state = AdamState::init(result.params, config);

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        const double lr = lr_at_epoch(config, epoch);

        // Separate derived streams per epoch: the shuffle never depends on
        // whether augmentation draws happened.
        Rng shuffle_rng(mix_seed(config.seed, {0x7368756646ULL, static_cast<std::uint64_t>(epoch)}));
        Rng flip_rng(mix_seed(config.seed, {0x666c6970ULL, static_cast<std::uint64_t>(epoch)}));
        shuffle_rng.shuffle(order);

        double loss_acc = 0.0;
        for (const std::size_t idx : order) {
            const TrainSample& sample = dataset[idx];
            const bool mirror = config.augment_hflip && flip_rng.uniform() < 0.5;
            const BackwardResult bw =
                backward(*sample.features, result.params, sample.target, mirror);
            loss_acc += bw.loss_pp;
            adam_step(result.params, bw.grad, state, lr);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_loss_pp = loss_acc / static_cast<double>(dataset.size());
        stats.lr = lr;
        stats.kappa = result.params.kappa();
        stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.history.epochs.push_back(stats);
    }
    return result;
}

} // namespace coverhead
