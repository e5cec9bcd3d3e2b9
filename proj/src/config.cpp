#include "ecgi/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "ecgi/errors.hpp"

namespace ecgi {

using nlohmann::json;

namespace {

[[noreturn]] void bad_field(const std::string& key, const std::string& why) {
    throw ValidationError("config field '" + key + "': " + why);
}

/// Tracks which keys of a JSON object were consumed so typos surface as errors.
class ObjectReader {
public:
    ObjectReader(const json& obj, std::string prefix)
        : obj_(obj), prefix_(std::move(prefix)) {
        if (!obj.is_object())
            throw ValidationError("config section '" + prefix_ + "' must be a table");
    }

    template <typename T>
    void read(const char* key, T& target) {
        auto it = obj_.find(key);
        if (it == obj_.end()) return;
        consumed_.push_back(key);
        try {
            target = it->get<T>();
        } catch (const json::exception&) {
            bad_field(path(key), "has the wrong type");
        }
    }

    void read_seed(const char* key, std::uint64_t& target) {
        auto it = obj_.find(key);
        if (it == obj_.end()) return;
        consumed_.push_back(key);
        if (!it->is_number_integer() && !it->is_number_unsigned())
            bad_field(path(key), "must be an integer");
        target = it->get<std::uint64_t>();
    }

    bool has(const char* key) const { return obj_.contains(key); }
    const json& sub(const char* key) {
        consumed_.push_back(key);
        return obj_.at(key);
    }
    std::string path(const char* key) const {
        return prefix_.empty() ? key : prefix_ + "." + key;
    }

    /// Call last: any key not consumed is unknown.
    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            bool known = false;
            for (const std::string& k : consumed_)
                if (k == it.key()) known = true;
            if (!known)
                throw ValidationError("unknown config key '" + path(it.key().c_str()) +
                                      "'");
        }
    }

private:
    const json& obj_;
    std::string prefix_;
    std::vector<std::string> consumed_;
};

GeometryParams geometry_from_json(const json& obj) {
    GeometryParams g;
    ObjectReader r(obj, "scenario.geometry");
    r.read("torso_radius_cm", g.torso_radius_cm);
    r.read("epi_radius_cm", g.epi_radius_cm);
    r.read("layer_depth_cm", g.layer_depth_cm);
    r.read("forward_angular_nodes", g.forward_angular_nodes);
    r.read("inverse_angular_nodes", g.inverse_angular_nodes);
    r.read("myocardium_radial_layers", g.myocardium_radial_layers);
    r.read("forward_torso_radial_layers", g.forward_torso_radial_layers);
    r.read("inverse_torso_radial_layers", g.inverse_torso_radial_layers);
    r.read("torso_grading", g.torso_grading);
    r.finish();
    return g;
}

MSParams membrane_from_json(const json& obj) {
    MSParams m;
    ObjectReader r(obj, "scenario.membrane");
    r.read("tau_in", m.tau_in);
    r.read("tau_out", m.tau_out);
    r.read("tau_open", m.tau_open);
    r.read("tau_close", m.tau_close);
    r.read("v_gate", m.v_gate);
    r.read("diffusivity", m.diffusivity);
    r.finish();
    return m;
}

StimulusSpec stimulus_from_json(const json& obj, int index) {
    StimulusSpec s;
    ObjectReader r(obj, "scenario.stimuli[" + std::to_string(index) + "]");
    r.read("angle_rad", s.angle_rad);
    r.read("radius_cm", s.radius_cm);
    r.read("start_ms", s.start_ms);
    r.read("duration_ms", s.duration_ms);
    r.read("amplitude", s.amplitude);
    r.finish();
    return s;
}

BlockRegion block_from_json(const json& obj, int index) {
    BlockRegion b;
    ObjectReader r(obj, "scenario.blocks[" + std::to_string(index) + "]");
    r.read("start_rad", b.start_rad);
    r.read("end_rad", b.end_rad);
    r.read("scale", b.scale);
    r.read("radial_fraction", b.radial_fraction);
    r.finish();
    return b;
}

ScenarioConfig scenario_from_json(const json& obj) {
    ScenarioConfig s;
    ObjectReader r(obj, "scenario");
    r.read("name", s.name);
    r.read("sigma_i", s.sigma_i);
    r.read("sigma_e", s.sigma_e);
    r.read("sigma_t", s.sigma_t);
    r.read("alpha", s.alpha);
    r.read("dt_sim_ms", s.dt_sim_ms);
    r.read("dt_output_ms", s.dt_output_ms);
    r.read("t_end_ms", s.t_end_ms);
    r.read("noise_fraction", s.noise_fraction);
    r.read_seed("rng_seed", s.rng_seed);
    r.read("at_level", s.at_level);
    r.read("vtk_stride", s.vtk_stride);
    if (r.has("geometry")) s.geometry = geometry_from_json(r.sub("geometry"));
    if (r.has("membrane")) s.membrane = membrane_from_json(r.sub("membrane"));
    if (r.has("stimuli")) {
        const json& arr = r.sub("stimuli");
        if (!arr.is_array())
            throw ValidationError("config field 'scenario.stimuli': must be an array");
        for (int i = 0; i < static_cast<int>(arr.size()); ++i)
            s.stimuli.push_back(stimulus_from_json(arr[i], i));
    }
    if (r.has("blocks")) {
        const json& arr = r.sub("blocks");
        if (!arr.is_array())
            throw ValidationError("config field 'scenario.blocks': must be an array");
        for (int i = 0; i < static_cast<int>(arr.size()); ++i)
            s.blocks.push_back(block_from_json(arr[i], i));
    }
    r.finish();
    return s;
}

InverseConfig inverse_from_json(const json& obj) {
    InverseConfig c;
    ObjectReader r(obj, "inverse");
    r.read("epsilon", c.epsilon);
    r.read("ridge_rel", c.ridge_rel);
    if (r.has("constraint_weight")) {
        double w = 0.0;
        r.read("constraint_weight", w);
        c.constraint_weight = w;
    }
    r.finish();
    return c;
}

PostprocessConfig postprocess_from_json(const json& obj) {
    PostprocessConfig c;
    ObjectReader r(obj, "postprocess");
    r.read("smoothing_std_ms", c.smoothing_std_ms);
    r.read("n_thresholds", c.n_thresholds);
    r.read("threshold_center", c.threshold_center);
    r.read("threshold_halfwidth", c.threshold_halfwidth);
    r.finish();
    return c;
}

} // namespace

void RunConfig::validate() const {
    scenario.validate();
    inverse.validate();
    postprocess.validate();
}

RunConfig run_config_from_json(const json& doc) {
    RunConfig cfg;
    ObjectReader r(doc, "");
    if (r.has("scenario")) cfg.scenario = scenario_from_json(r.sub("scenario"));
    if (r.has("inverse")) cfg.inverse = inverse_from_json(r.sub("inverse"));
    if (r.has("postprocess"))
        cfg.postprocess = postprocess_from_json(r.sub("postprocess"));
    r.finish();
    cfg.validate();
    return cfg;
}

nlohmann::json run_config_to_json(const RunConfig& config) {
    const ScenarioConfig& s = config.scenario;
    json stimuli = json::array();
    for (const StimulusSpec& st : s.stimuli)
        stimuli.push_back({{"angle_rad", st.angle_rad},
                           {"radius_cm", st.radius_cm},
                           {"start_ms", st.start_ms},
                           {"duration_ms", st.duration_ms},
                           {"amplitude", st.amplitude}});
    json blocks = json::array();
    for (const BlockRegion& b : s.blocks)
        blocks.push_back({{"start_rad", b.start_rad},
                          {"end_rad", b.end_rad},
                          {"scale", b.scale},
                          {"radial_fraction", b.radial_fraction}});
    json doc = {
        {"scenario",
         {{"name", s.name},
          {"sigma_i", s.sigma_i},
          {"sigma_e", s.sigma_e},
          {"sigma_t", s.sigma_t},
          {"alpha", s.alpha},
          {"dt_sim_ms", s.dt_sim_ms},
          {"dt_output_ms", s.dt_output_ms},
          {"t_end_ms", s.t_end_ms},
          {"noise_fraction", s.noise_fraction},
          {"rng_seed", s.rng_seed},
          {"at_level", s.at_level},
          {"vtk_stride", s.vtk_stride},
          {"geometry",
           {{"torso_radius_cm", s.geometry.torso_radius_cm},
            {"epi_radius_cm", s.geometry.epi_radius_cm},
            {"layer_depth_cm", s.geometry.layer_depth_cm},
            {"forward_angular_nodes", s.geometry.forward_angular_nodes},
            {"inverse_angular_nodes", s.geometry.inverse_angular_nodes},
            {"myocardium_radial_layers", s.geometry.myocardium_radial_layers},
            {"forward_torso_radial_layers", s.geometry.forward_torso_radial_layers},
            {"inverse_torso_radial_layers", s.geometry.inverse_torso_radial_layers},
            {"torso_grading", s.geometry.torso_grading}}},
          {"membrane",
           {{"tau_in", s.membrane.tau_in},
            {"tau_out", s.membrane.tau_out},
            {"tau_open", s.membrane.tau_open},
            {"tau_close", s.membrane.tau_close},
            {"v_gate", s.membrane.v_gate},
            {"diffusivity", s.membrane.diffusivity}}},
          {"stimuli", stimuli},
          {"blocks", blocks}}},
        {"inverse",
         {{"epsilon", config.inverse.epsilon}, {"ridge_rel", config.inverse.ridge_rel}}},
        {"postprocess",
         {{"smoothing_std_ms", config.postprocess.smoothing_std_ms},
          {"n_thresholds", config.postprocess.n_thresholds},
          {"threshold_center", config.postprocess.threshold_center},
          {"threshold_halfwidth", config.postprocess.threshold_halfwidth}}}};
    if (config.inverse.constraint_weight)
        doc["inverse"]["constraint_weight"] = *config.inverse.constraint_weight;
    return doc;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open config file: " + path);
    std::stringstream buffer;
    buffer << is.rdbuf();
    const std::string text = buffer.str();

    json doc;
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".toml") {
        doc = toml_subset_to_json(text);
    } else if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
        try {
            doc = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ValidationError("config JSON parse error in " + path + ": " + e.what());
        }
    } else {
        throw ValidationError("config file must end in .json or .toml: " + path);
    }
    return run_config_from_json(doc);
}

namespace {

struct TomlCursor {
    const std::string& text;
    std::size_t pos = 0;
    int line = 1;
};

[[noreturn]] void toml_error(int line, const std::string& why) {
    throw ValidationError("TOML parse error on line " + std::to_string(line) + ": " + why);
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

/// Strips a trailing comment that is not inside a string literal.
std::string strip_comment(const std::string& s) {
    bool in_string = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') in_string = !in_string;
        if (s[i] == '#' && !in_string) return s.substr(0, i);
    }
    return s;
}

json parse_toml_scalar(const std::string& raw, int line) {
    const std::string v = trim(raw);
    if (v.empty()) toml_error(line, "missing value");
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"')
            toml_error(line, "unterminated string");
        return v.substr(1, v.size() - 2);
    }
    if (v == "true") return true;
    if (v == "false") return false;
    // integer if it parses completely without '.', 'e', 'E'
    if (v.find_first_of(".eE") == std::string::npos) {
        try {
            std::size_t used = 0;
            const long long n = std::stoll(v, &used);
            if (used == v.size()) return n;
        } catch (...) {
        }
    }
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (...) {
    }
    toml_error(line, "cannot parse value '" + v + "'");
}

json parse_toml_value(const std::string& raw, int line) {
    const std::string v = trim(raw);
    if (!v.empty() && v.front() == '[') {
        if (v.back() != ']') toml_error(line, "unterminated array");
        json arr = json::array();
        std::string inner = v.substr(1, v.size() - 2);
        std::size_t start = 0;
        bool in_string = false;
        for (std::size_t i = 0; i <= inner.size(); ++i) {
            if (i < inner.size() && inner[i] == '"') in_string = !in_string;
            if (i == inner.size() || (inner[i] == ',' && !in_string)) {
                const std::string item = trim(inner.substr(start, i - start));
                if (!item.empty()) arr.push_back(parse_toml_scalar(item, line));
                start = i + 1;
            }
        }
        return arr;
    }
    return parse_toml_scalar(v, line);
}

std::vector<std::string> split_dotted(const std::string& key, int line) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= key.size(); ++i) {
        if (i == key.size() || key[i] == '.') {
            const std::string part = trim(key.substr(start, i - start));
            if (part.empty()) toml_error(line, "empty key component in '" + key + "'");
            parts.push_back(part);
            start = i + 1;
        }
    }
    return parts;
}

json* descend(json& root, const std::vector<std::string>& parts, int line) {
    json* node = &root;
    for (const std::string& p : parts) {
        if (node->is_array()) {
            if (node->empty()) toml_error(line, "array of tables has no entry yet");
            node = &node->back();
        }
        if (!node->is_object()) toml_error(line, "key path collides with a value");
        node = &(*node)[p];
    }
    if (node->is_array() && !node->empty()) node = &node->back();
    return node;
}

} // namespace

json toml_subset_to_json(const std::string& text) {
    json root = json::object();
    json* current = &root;

    std::istringstream is(text);
    std::string raw_line;
    int line_no = 0;
    while (std::getline(is, raw_line)) {
        ++line_no;
        const std::string line = trim(strip_comment(raw_line));
        if (line.empty()) continue;

        if (line.size() >= 4 && line.substr(0, 2) == "[[" &&
            line.substr(line.size() - 2) == "]]") {
            const auto parts = split_dotted(trim(line.substr(2, line.size() - 4)), line_no);
            json* parent = &root;
            for (std::size_t i = 0; i + 1 < parts.size(); ++i)
                parent = descend(*parent, {parts[i]}, line_no);
            json& arr = (*parent)[parts.back()];
            if (arr.is_null()) arr = json::array();
            if (!arr.is_array()) toml_error(line_no, "table array collides with a value");
            arr.push_back(json::object());
            current = &arr.back();
            continue;
        }
        if (line.front() == '[' && line.back() == ']') {
            const auto parts = split_dotted(trim(line.substr(1, line.size() - 2)), line_no);
            current = descend(root, parts, line_no);
            if (!current->is_object() && !current->is_null())
                toml_error(line_no, "section name collides with a value");
            if (current->is_null()) *current = json::object();
            continue;
        }

        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            toml_error(line_no, "expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) toml_error(line_no, "empty key");
        const auto parts = split_dotted(key, line_no);
        json* target = current;
        for (std::size_t i = 0; i + 1 < parts.size(); ++i)
            target = descend(*target, {parts[i]}, line_no);
        if (target->contains(parts.back()))
            toml_error(line_no, "duplicate key '" + key + "'");
        (*target)[parts.back()] = parse_toml_value(line.substr(eq + 1), line_no);
    }
    return root;
}

std::uint64_t fnv1a_hash(const std::string& data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t config_hash(const RunConfig& config) {
    return fnv1a_hash(run_config_to_json(config).dump());
}

} // namespace ecgi
