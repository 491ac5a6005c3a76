#include <cginv/config.hpp>
#include <cginv/io.hpp>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <set>
#include <sstream>

namespace cginv {

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys{
        {"solver",
         {"lambda", "mu", "k_max", "j_max", "delta", "descent", "newton_eps", "line_search", "alpha", "beta", "eta",
          "init_a", "init_b", "step_a", "step_b", "scale_s", "normalize_init", "nonlinearity"}},
        {"model", {"n_side", "operator", "angles", "sampling_ratio", "dict", "snr", "count", "seed"}},
        {"cgnet",
         {"k", "j", "b_mode", "lambda", "a0", "b0", "mu", "eta", "a", "b", "eps_guard", "eps_psd", "epochs", "lr",
          "beta1", "beta2", "adam_eps", "batch_size", "patience", "validation_fraction", "loss"}},
    };
    return keys;
}

} // namespace

Config Config::parse(const std::string& text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw FormatError("config: " + e.message(), e.line());
    }
    Config out;
    for (const auto& [section, body] : tree) {
        auto known = known_keys().find(section);
        if (known == known_keys().end() || !body.data().empty())
            throw FormatError("config: unknown section or top-level key '" + section + "'", 0);
        for (const auto& [key, value] : body) {
            if (!known->second.count(key))
                throw FormatError("config: unknown key '" + key + "' in [" + section + "]", 0);
            out.sections_[section][key] = value.get_value<std::string>();
        }
    }
    return out;
}

Config Config::load(const std::filesystem::path& path) { return parse(io::read_file(path)); }

bool Config::has(const std::string& section, const std::string& key) const { return raw(section, key).has_value(); }

std::optional<std::string> Config::raw(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) return std::nullopt;
    auto k = s->second.find(key);
    if (k == s->second.end()) return std::nullopt;
    return k->second;
}

double Config::get_double(const std::string& section, const std::string& key, double fallback) const {
    auto v = raw(section, key);
    if (!v) return fallback;
    try {
        return io::parse_double(*v, 0);
    } catch (const FormatError&) {
        throw FormatError("config: [" + section + "] " + key + " is not a number: '" + *v + "'", 0);
    }
}

long Config::get_long(const std::string& section, const std::string& key, long fallback) const {
    auto v = raw(section, key);
    if (!v) return fallback;
    try {
        return io::parse_long(*v, 0);
    } catch (const FormatError&) {
        throw FormatError("config: [" + section + "] " + key + " is not an integer: '" + *v + "'", 0);
    }
}

bool Config::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    auto v = raw(section, key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw FormatError("config: [" + section + "] " + key + " is not a boolean: '" + *v + "'", 0);
}

std::string Config::get_string(const std::string& section, const std::string& key,
                               const std::string& fallback) const {
    return raw(section, key).value_or(fallback);
}

double default_lambda(double snr_db) { return snr_db >= 60.0 ? 0.3 : 2.0; }

double default_ncgls_scale(int n_side) { return n_side <= 32 ? std::exp(-4.0) : std::exp(-6.0); }

CglsConfig solver_config(const Config& cfg, const std::string& method, int n_side, double snr_db) {
    CglsConfig out;
    if (method == "gcgls") {
        out = CglsConfig::gradient_defaults();
    } else if (method == "ncgls") {
        out = CglsConfig::newton_defaults();
        out.scale_s = default_ncgls_scale(n_side);
    } else {
        throw std::invalid_argument("unknown method '" + method + "' (expected gcgls or ncgls)");
    }
    out.lambda = default_lambda(snr_db);

    const std::string s = "solver";
    out.lambda = cfg.get_double(s, "lambda", out.lambda);
    out.mu = cfg.get_double(s, "mu", out.mu);
    out.k_max = static_cast<int>(cfg.get_long(s, "k_max", out.k_max));
    out.j_max = static_cast<int>(cfg.get_long(s, "j_max", out.j_max));
    out.delta = cfg.get_double(s, "delta", out.delta);
    out.newton_eps = cfg.get_double(s, "newton_eps", out.newton_eps);
    out.scale_s = cfg.get_double(s, "scale_s", out.scale_s);
    out.normalize_init = cfg.get_bool(s, "normalize_init", out.normalize_init);
    out.nonlinearity = cfg.get_string(s, "nonlinearity", out.nonlinearity);
    out.init_mrelu.a = cfg.get_double(s, "init_a", out.init_mrelu.a);
    out.init_mrelu.b = cfg.get_double(s, "init_b", out.init_mrelu.b);

    const std::string descent = cfg.get_string(s, "descent", "");
    if (descent == "gradient") out.descent = DescentMode::gradient;
    else if (descent == "newton") out.descent = DescentMode::newton;
    else if (!descent.empty())
        throw FormatError("config: [solver] descent must be gradient or newton, got '" + descent + "'", 0);

    const std::string search = cfg.get_string(s, "line_search", "backtracking");
    if (search == "backtracking") {
        Backtracking bt;
        bt.alpha = cfg.get_double(s, "alpha", bt.alpha);
        bt.beta = cfg.get_double(s, "beta", bt.beta);
        out.line_search = bt;
    } else if (search == "fixed") {
        out.line_search = FixedStep{Vector::Constant(1, cfg.get_double(s, "eta", 0.5))};
    } else {
        throw FormatError("config: [solver] line_search must be backtracking or fixed, got '" + search + "'", 0);
    }
    if (cfg.has(s, "step_a") || cfg.has(s, "step_b"))
        out.per_step_mrelu = MreluWindow{cfg.get_double(s, "step_a", out.init_mrelu.a),
                                         cfg.get_double(s, "step_b", out.init_mrelu.b)};
    out.validate();
    return out;
}

NetSetup cgnet_config(const Config& cfg, int n_side, double snr_db, bool compressive) {
    NetSetup out;
    const std::string s = "cgnet";
    out.k = static_cast<int>(cfg.get_long(s, "k", n_side <= 32 ? 20 : 5));
    out.j = static_cast<int>(cfg.get_long(s, "j", 1));
    if (out.k < 0 || out.j < 1) throw FormatError("config: [cgnet] needs k >= 0 and j >= 1", 0);

    NetInit& init = out.init;
    init.lambda = cfg.get_double(s, "lambda", compressive ? 1e2 : default_lambda(snr_db));
    init.a0 = cfg.get_double(s, "a0", init.a0);
    init.b0 = cfg.get_double(s, "b0", init.b0);
    init.mu = cfg.get_double(s, "mu", init.mu);
    init.eta = cfg.get_double(s, "eta", init.eta);
    init.a = cfg.get_double(s, "a", init.a);
    init.b = cfg.get_double(s, "b", init.b);
    init.eps_guard = cfg.get_double(s, "eps_guard", init.eps_guard);
    init.eps_psd = cfg.get_double(s, "eps_psd", init.eps_psd);

    TrainConfig& t = out.train;
    t.epochs = static_cast<int>(cfg.get_long(s, "epochs", t.epochs));
    t.adam.learning_rate = cfg.get_double(s, "lr", t.adam.learning_rate);
    t.adam.beta1 = cfg.get_double(s, "beta1", t.adam.beta1);
    t.adam.beta2 = cfg.get_double(s, "beta2", t.adam.beta2);
    t.adam.eps = cfg.get_double(s, "adam_eps", t.adam.eps);
    t.batch_size = static_cast<int>(cfg.get_long(s, "batch_size", t.batch_size));
    t.patience = static_cast<int>(cfg.get_long(s, "patience", t.patience));
    t.validation_fraction = cfg.get_double(s, "validation_fraction", t.validation_fraction);
    t.loss = parse_loss(cfg.get_string(s, "loss", to_string(t.loss)));
    t.b_mode = parse_bmode(cfg.get_string(s, "b_mode", to_string(t.b_mode)));
    return out;
}

} // namespace cginv
