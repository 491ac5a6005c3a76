#pragma once

#include <cginv/cgls.hpp>
#include <cginv/cgnet.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace cginv {

/// Flat INI file: "key = value" lines grouped under [solver], [model] and [cgnet].
/// Unknown sections or keys are rejected so typos do not silently fall back to defaults.
class Config {
public:
    Config() = default;
    static Config parse(const std::string& text);
    static Config load(const std::filesystem::path& path);

    bool has(const std::string& section, const std::string& key) const;
    std::optional<std::string> raw(const std::string& section, const std::string& key) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    long get_long(const std::string& section, const std::string& key, long fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    std::string get_string(const std::string& section, const std::string& key, const std::string& fallback) const;

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

/// λ = 0.3 at 60 dB and above (and noiseless), 2 below.
double default_lambda(double snr_db);

/// Input scale for nCG-LS: e^-4 up to 32×32, e^-6 beyond. gCG-LS runs unscaled.
double default_ncgls_scale(int n_side);

/// Method defaults ("gcgls" or "ncgls") adjusted to the problem, then [solver] overrides.
CglsConfig solver_config(const Config& cfg, const std::string& method, int n_side, double snr_db);

struct NetSetup {
    int k = 20;
    int j = 1;
    NetInit init;
    TrainConfig train;
};

/// (K,J) = (20,1) up to 32×32 and (5,1) beyond; λ_k init 0.3 at >= 60 dB, 2 below,
/// 1e2 for compressive sensing. [cgnet] keys override.
NetSetup cgnet_config(const Config& cfg, int n_side, double snr_db, bool compressive);

} // namespace cginv
