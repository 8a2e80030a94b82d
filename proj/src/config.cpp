#include "calidrop/config.hpp"

#include <fstream>
#include <sstream>

namespace calidrop {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("key '" + key + "': expected boolean, got '" + v + "'");
}

double parse_double(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return d;
    } catch (...) {
        throw ConfigError("key '" + key + "': expected number, got '" + v + "'");
    }
}

int parse_int(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        const long d = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return static_cast<int>(d);
    } catch (...) {
        throw ConfigError("key '" + key + "': expected integer, got '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        const unsigned long long d = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return d;
    } catch (...) {
        throw ConfigError("key '" + key + "': expected unsigned integer, got '" + v + "'");
    }
}

template <class T, class F>
std::vector<T> parse_list(const std::string& v, const std::string& key, F item) {
    std::vector<T> out;
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) out.push_back(item(tok, key));
    }
    return out;
}

}  // namespace

void RunConfig::validate() const {
    if (dataset.kind != "cifar10") throw ConfigError("dataset kind must be 'cifar10'");
    if (dataset.train_size < 0 || dataset.val_size < 0 || dataset.test_size < 0)
        throw ConfigError("dataset sizes must be non-negative");
    model.validate();
    train.validate();
    if (eval.mc_samples < 1) throw ConfigError("eval mc_samples must be >= 1");
    if (eval.num_bins < 1) throw ConfigError("eval num_bins must be >= 1");
    al.validate();
    for (const auto& a : al_acquisitions) acquisition_from_string(a);
}

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
            section = line.substr(1, line.size() - 2);
            if (section != "dataset" && section != "model" && section != "dropout" &&
                section != "train" && section != "eval" && section != "al")
                throw ConfigError("unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const std::string qual = section.empty() ? key : section + "." + key;

        if (qual == "seed") cfg.seed = parse_u64(value, qual);
        else if (qual == "dataset.kind") cfg.dataset.kind = value;
        else if (qual == "dataset.path") cfg.dataset.path = value;
        else if (qual == "dataset.train_size") cfg.dataset.train_size = parse_int(value, qual);
        else if (qual == "dataset.val_size") cfg.dataset.val_size = parse_int(value, qual);
        else if (qual == "dataset.test_size") cfg.dataset.test_size = parse_int(value, qual);
        else if (qual == "dataset.stratified") cfg.dataset.stratified = parse_bool(value, qual);
        else if (qual == "model.stage_channels")
            cfg.model.stage_channels = parse_list<int>(value, qual, parse_int);
        else if (qual == "model.blocks_per_stage")
            cfg.model.blocks_per_stage = parse_int(value, qual);
        else if (qual == "model.num_classes") cfg.model.num_classes = parse_int(value, qual);
        else if (qual == "model.in_channels") cfg.model.in_channels = parse_int(value, qual);
        else if (qual == "model.in_height") cfg.model.in_height = parse_int(value, qual);
        else if (qual == "model.in_width") cfg.model.in_width = parse_int(value, qual);
        else if (qual == "model.final_fc_dropout_rate")
            cfg.model.final_fc_dropout_rate = parse_double(value, qual);
        else if (qual == "model.bn_momentum") cfg.model.bn_momentum = parse_double(value, qual);
        else if (qual == "dropout.variant")
            cfg.model.dropout.variant = dropout_variant_from_string(value);
        else if (qual == "dropout.rate") cfg.model.dropout.rate = parse_double(value, qual);
        else if (qual == "dropout.block_size")
            cfg.model.dropout.block_size = parse_int(value, qual);
        else if (qual == "train.epochs") cfg.train.epochs = parse_int(value, qual);
        else if (qual == "train.batch_size") cfg.train.batch_size = parse_int(value, qual);
        else if (qual == "train.lr") cfg.train.lr = parse_double(value, qual);
        else if (qual == "train.momentum") cfg.train.momentum = parse_double(value, qual);
        else if (qual == "train.weight_decay")
            cfg.train.weight_decay = parse_double(value, qual);
        else if (qual == "train.lr_drop_epochs")
            cfg.train.lr_drop_epochs = parse_list<int>(value, qual, parse_int);
        else if (qual == "train.lr_drop_factor")
            cfg.train.lr_drop_factor = parse_double(value, qual);
        else if (qual == "train.augment") cfg.train.augment = parse_bool(value, qual);
        else if (qual == "eval.mc_samples") cfg.eval.mc_samples = parse_int(value, qual);
        else if (qual == "eval.num_bins") cfg.eval.num_bins = parse_int(value, qual);
        else if (qual == "eval.bootstrap_reps")
            cfg.eval.bootstrap_reps = parse_int(value, qual);
        else if (qual == "eval.positive_class")
            cfg.eval.positive_class = parse_int(value, qual);
        else if (qual == "al.initial_labeled") cfg.al.initial_labeled = parse_int(value, qual);
        else if (qual == "al.acquire_per_round")
            cfg.al.acquire_per_round = parse_int(value, qual);
        else if (qual == "al.rounds") cfg.al.rounds = parse_int(value, qual);
        else if (qual == "al.repeats") cfg.al.repeats = parse_int(value, qual);
        else if (qual == "al.mc_samples") cfg.al.mc_samples = parse_int(value, qual);
        else if (qual == "al.acquisitions")
            cfg.al_acquisitions = parse_list<std::string>(
                value, qual, [](const std::string& s, const std::string&) { return s; });
        else
            throw ConfigError("unknown config key '" + qual + "'");
    }
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_run_config(ss.str());
}

std::string serialize_run_config(const RunConfig& cfg) {
    std::ostringstream os;
    os << "seed=" << cfg.seed << "\n\n";
    os << "[dataset]\n";
    os << "kind=" << cfg.dataset.kind << "\n";
    os << "path=" << cfg.dataset.path << "\n";
    os << "train_size=" << cfg.dataset.train_size << "\n";
    os << "val_size=" << cfg.dataset.val_size << "\n";
    os << "test_size=" << cfg.dataset.test_size << "\n";
    os << "stratified=" << (cfg.dataset.stratified ? "true" : "false") << "\n\n";
    os << "[model]\n";
    os << "stage_channels=";
    for (size_t i = 0; i < cfg.model.stage_channels.size(); ++i)
        os << (i ? "," : "") << cfg.model.stage_channels[i];
    os << "\n";
    os << "blocks_per_stage=" << cfg.model.blocks_per_stage << "\n";
    os << "num_classes=" << cfg.model.num_classes << "\n";
    os << "in_channels=" << cfg.model.in_channels << "\n";
    os << "in_height=" << cfg.model.in_height << "\n";
    os << "in_width=" << cfg.model.in_width << "\n";
    os << "final_fc_dropout_rate=" << cfg.model.final_fc_dropout_rate << "\n";
    os << "bn_momentum=" << cfg.model.bn_momentum << "\n\n";
    os << "[dropout]\n";
    os << "variant=" << to_string(cfg.model.dropout.variant) << "\n";
    os << "rate=" << cfg.model.dropout.rate << "\n";
    os << "block_size=" << cfg.model.dropout.block_size << "\n\n";
    os << "[train]\n";
    os << "epochs=" << cfg.train.epochs << "\n";
    os << "batch_size=" << cfg.train.batch_size << "\n";
    os << "lr=" << cfg.train.lr << "\n";
    os << "momentum=" << cfg.train.momentum << "\n";
    os << "weight_decay=" << cfg.train.weight_decay << "\n";
    os << "lr_drop_epochs=";
    for (size_t i = 0; i < cfg.train.lr_drop_epochs.size(); ++i)
        os << (i ? "," : "") << cfg.train.lr_drop_epochs[i];
    os << "\n";
    os << "lr_drop_factor=" << cfg.train.lr_drop_factor << "\n";
    os << "augment=" << (cfg.train.augment ? "true" : "false") << "\n\n";
    os << "[eval]\n";
    os << "mc_samples=" << cfg.eval.mc_samples << "\n";
    os << "num_bins=" << cfg.eval.num_bins << "\n";
    os << "bootstrap_reps=" << cfg.eval.bootstrap_reps << "\n";
    os << "positive_class=" << cfg.eval.positive_class << "\n\n";
    os << "[al]\n";
    os << "initial_labeled=" << cfg.al.initial_labeled << "\n";
    os << "acquire_per_round=" << cfg.al.acquire_per_round << "\n";
    os << "rounds=" << cfg.al.rounds << "\n";
    os << "repeats=" << cfg.al.repeats << "\n";
    os << "mc_samples=" << cfg.al.mc_samples << "\n";
    os << "acquisitions=";
    for (size_t i = 0; i < cfg.al_acquisitions.size(); ++i)
        os << (i ? "," : "") << cfg.al_acquisitions[i];
    os << "\n";
    return os.str();
}

void apply_profile(RunConfig& cfg, const std::string& profile) {
    if (profile == "mini") {
        // Desk-scale defaults already in place.
        return;
    }
    if (profile == "paper") {
        cfg.dataset.train_size = 45000;
        cfg.dataset.val_size = 5000;
        cfg.dataset.test_size = 10000;
        cfg.train.epochs = 250;
        cfg.train.lr_drop_epochs = {125, 190};
        cfg.eval.mc_samples = 30;
        cfg.al.initial_labeled = 2000;
        cfg.al.acquire_per_round = 1000;
        cfg.al.rounds = 9;
        cfg.al.repeats = 5;
        cfg.al.mc_samples = 30;
        return;
    }
    throw ConfigError("unknown profile '" + profile + "' (expected mini or paper)");
}

}  // namespace calidrop
