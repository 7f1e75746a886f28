#include "sdil/config.hpp"

#include <fstream>
#include <sstream>

namespace sdil::harness {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(const std::string& origin, int line, const std::string& why) {
    throw ParseError(origin + ":" + std::to_string(line) + ": " + why);
}

double to_double(const std::string& v, const std::string& origin, int line) {
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) fail(origin, line, "trailing characters in number '" + v + "'");
        return d;
    } catch (const ParseError&) {
        throw;
    } catch (const std::exception&) {
        fail(origin, line, "bad number '" + v + "'");
    }
}

int to_int(const std::string& v, const std::string& origin, int line) {
    const double d = to_double(v, origin, line);
    const int i = static_cast<int>(d);
    if (static_cast<double>(i) != d) fail(origin, line, "expected integer, got '" + v + "'");
    return i;
}

bool to_bool(const std::string& v, const std::string& origin, int line) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail(origin, line, "expected bool, got '" + v + "'");
}

} // namespace

RunConfig RunConfig::from_string(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) fail(origin, line_no, "expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) fail(origin, line_no, "empty key or value");

        if (key == "lambda") cfg.lambda = to_double(value, origin, line_no);
        else if (key == "epsilon") cfg.epsilon = to_double(value, origin, line_no);
        else if (key == "window") cfg.window = to_int(value, origin, line_no);
        else if (key == "skills") cfg.skills = to_int(value, origin, line_no);
        else if (key == "skill_dim") cfg.skill_dim = to_int(value, origin, line_no);
        else if (key == "zeta_step") cfg.zeta_step = to_double(value, origin, line_no);
        else if (key == "epochs") cfg.epochs = to_int(value, origin, line_no);
        else if (key == "pu_interval") cfg.pu_interval = to_int(value, origin, line_no);
        else if (key == "batch") cfg.batch = to_int(value, origin, line_no);
        else if (key == "lr") cfg.lr = to_double(value, origin, line_no);
        else if (key == "weight_decay") cfg.weight_decay = to_double(value, origin, line_no);
        else if (key == "theta_neg") cfg.theta_neg = to_double(value, origin, line_no);
        else if (key == "temperature") cfg.temperature = to_double(value, origin, line_no);
        else if (key == "seed") {
            try {
                cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
            } catch (const std::exception&) {
                fail(origin, line_no, "bad seed '" + value + "'");
            }
        }
        else if (key == "env") cfg.env = value;
        else if (key == "corpus") cfg.corpus = value;
        else if (key == "rollouts") cfg.rollouts = to_int(value, origin, line_no);
        else if (key == "kd_log") cfg.kd_log = to_bool(value, origin, line_no);
        else if (key == "state_dim") cfg.state_dim = to_int(value, origin, line_no);
        else if (key == "n_actions") cfg.n_actions = to_int(value, origin, line_no);
        else fail(origin, line_no, "unknown key '" + key + "'");
    }
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_string(buf.str(), path);
}

std::string RunConfig::to_string() const {
    std::ostringstream os;
    os.precision(17);
    os << "lambda = " << lambda << '\n'
       << "epsilon = " << epsilon << '\n'
       << "window = " << window << '\n'
       << "skills = " << skills << '\n'
       << "skill_dim = " << skill_dim << '\n'
       << "zeta_step = " << zeta_step << '\n'
       << "epochs = " << epochs << '\n'
       << "pu_interval = " << pu_interval << '\n'
       << "batch = " << batch << '\n'
       << "lr = " << lr << '\n'
       << "weight_decay = " << weight_decay << '\n'
       << "theta_neg = " << theta_neg << '\n'
       << "temperature = " << temperature << '\n'
       << "seed = " << seed << '\n'
       << "env = " << env << '\n';
    if (!corpus.empty()) os << "corpus = " << corpus << '\n';
    os << "rollouts = " << rollouts << '\n'
       << "kd_log = " << (kd_log ? "true" : "false") << '\n'
       << "state_dim = " << state_dim << '\n'
       << "n_actions = " << n_actions << '\n';
    return os.str();
}

policy::ModelConfig RunConfig::model_config() const {
    SDIL_REQUIRE(state_dim > 0 && n_actions > 0,
                 "config is missing corpus dimensions (state_dim/n_actions)");
    policy::ModelConfig mc;
    mc.state_dim = state_dim;
    mc.n_actions = n_actions;
    mc.window = window;
    mc.n_skills = skills;
    mc.skill_dim = skill_dim;
    return mc;
}

discovery::DiscoveryConfig RunConfig::discovery_config() const {
    discovery::DiscoveryConfig dc;
    dc.epochs = epochs;
    dc.pu_interval = pu_interval;
    dc.lambda = lambda;
    dc.epsilon = epsilon;
    dc.batch = batch;
    dc.lr = lr;
    dc.weight_decay = weight_decay;
    dc.temperature = temperature;
    dc.zeta_step = zeta_step;
    dc.seed = seed;
    return dc;
}

reuse::ReuseConfig RunConfig::reuse_config() const {
    reuse::ReuseConfig rc;
    rc.lr = lr;
    rc.weight_decay = weight_decay;
    rc.temperature = temperature;
    rc.batch = batch;
    rc.theta_neg = theta_neg;
    rc.kd_log_variant = kd_log;
    rc.seed = seed;
    return rc;
}

} // namespace sdil::harness
