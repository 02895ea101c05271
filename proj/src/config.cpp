#include "coinp/config.hpp"

#include <fstream>
#include <set>

#ifndef COINP_VERSION
#define COINP_VERSION "dev"
#endif

namespace coinp {

using nlohmann::json;

std::string tool_version() { return COINP_VERSION; }

std::vector<std::string> profile_names() { return {"desk", "paper", "custom"}; }

namespace {

const std::vector<double> kBetaGrid{0.0, 0.01, 0.1, 0.6};

std::vector<ScenarioTemplate> all_scenarios()
{
    return {{ScenarioId::dist1, {}, {}}, {ScenarioId::dist2, {}, {}}, {ScenarioId::dist3, {}, {}},
            {ScenarioId::dist4, {}, {}}};
}

std::vector<Method> all_methods() { return {Method::coinp, Method::approx_coinp, Method::cpi, Method::approx_cpi}; }

LearnerSpec spec_of(LearnerKind kind) { return {kind, {}, {}, {}}; }

std::string join_path(const std::string& parent, const std::string& key) { return parent + "/" + key; }

[[noreturn]] void fail(const std::string& path, const std::string& msg)
{
    throw ConfigError("config key '" + (path.empty() ? std::string("/") : path) + "': " + msg);
}

// Reads keys of one JSON object, rejecting any key not consumed.
class ObjectReader {
public:
    ObjectReader(const json& obj, std::string path, std::set<std::string> allowed)
        : obj_(obj), path_(std::move(path)), allowed_(std::move(allowed))
    {
        if (!obj_.is_object())
            fail(path_, "expected an object");
        for (const auto& [key, value] : obj_.items())
            if (!allowed_.count(key))
                fail(join_path(path_, key), "unknown key");
    }

    [[nodiscard]] const json* find(const std::string& key) const
    {
        auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }
    [[nodiscard]] std::string path(const std::string& key) const { return join_path(path_, key); }

    void read(const std::string& key, std::size_t& out) const
    {
        if (auto* v = find(key)) {
            if (!v->is_number_unsigned())
                fail(path(key), "expected a non-negative integer");
            out = v->get<std::size_t>();
        }
    }
    void read(const std::string& key, std::uint64_t& out, int) const
    {
        if (auto* v = find(key)) {
            if (!v->is_number_unsigned())
                fail(path(key), "expected a non-negative integer");
            out = v->get<std::uint64_t>();
        }
    }
    void read(const std::string& key, double& out) const
    {
        if (auto* v = find(key)) {
            if (!v->is_number())
                fail(path(key), "expected a number");
            out = v->get<double>();
        }
    }
    void read(const std::string& key, bool& out) const
    {
        if (auto* v = find(key)) {
            if (!v->is_boolean())
                fail(path(key), "expected true or false");
            out = v->get<bool>();
        }
    }
    void read(const std::string& key, std::string& out) const
    {
        if (auto* v = find(key)) {
            if (!v->is_string())
                fail(path(key), "expected a string");
            out = v->get<std::string>();
        }
    }

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> allowed_;
};

const json& require_array(const json& v, const std::string& path)
{
    if (!v.is_array())
        fail(path, "expected an array");
    if (v.empty())
        fail(path, "must not be empty");
    return v;
}

template <typename T>
std::vector<T> read_list(const json& v, const std::string& path)
{
    std::vector<T> out;
    const auto& arr = require_array(v, path);
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const auto& e = arr[i];
        const auto p = join_path(path, std::to_string(i));
        if constexpr (std::is_same_v<T, double>) {
            if (!e.is_number())
                fail(p, "expected a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!e.is_string())
                fail(p, "expected a string");
        } else {
            if (!e.is_number_unsigned())
                fail(p, "expected a non-negative integer");
        }
        out.push_back(e.get<T>());
    }
    return out;
}

const std::set<std::string> kForestKeys{"n_trees", "max_features", "min_samples_leaf", "max_depth", "bootstrap"};
const std::set<std::string> kMlpKeys{"hidden_layers", "activation",     "learning_rate",     "max_epochs",
                                     "patience",      "batch_size",     "validation_fraction", "dropout_rate",
                                     "batch_norm",    "lr_decay_patience", "lr_decay_factor"};

void read_forest_keys(const ObjectReader& r, ForestParams& f)
{
    r.read("n_trees", f.n_trees);
    r.read("max_features", f.max_features);
    r.read("min_samples_leaf", f.min_samples_leaf);
    r.read("bootstrap", f.bootstrap);
    if (auto* v = r.find("max_depth")) {
        if (v->is_null())
            f.max_depth.reset();
        else if (v->is_number_unsigned())
            f.max_depth = v->get<std::size_t>();
        else
            fail(r.path("max_depth"), "expected a non-negative integer or null");
    }
    try {
        f.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("random forest parameters: ") + e.what());
    }
}

void read_mlp_keys(const ObjectReader& r, MlpParams& m)
{
    if (auto* v = r.find("hidden_layers"))
        m.hidden_layers = read_list<std::size_t>(*v, r.path("hidden_layers"));
    std::string activation = "elu";
    r.read("activation", activation);
    if (activation != "elu")
        fail(r.path("activation"), "only 'elu' is supported");
    r.read("learning_rate", m.learning_rate);
    r.read("max_epochs", m.max_epochs);
    r.read("patience", m.patience);
    r.read("batch_size", m.batch_size);
    r.read("validation_fraction", m.validation_fraction);
    r.read("dropout_rate", m.dropout_rate);
    r.read("batch_norm", m.batch_norm);
    r.read("lr_decay_patience", m.lr_decay_patience);
    r.read("lr_decay_factor", m.lr_decay_factor);
    try {
        m.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("mlp parameters: ") + e.what());
    }
}

std::vector<LearnerSpec> read_learners(const json& v, const std::string& path, const ForestParams& forest,
                                       const MlpParams& mlp)
{
    std::vector<LearnerSpec> out;
    const auto& arr = require_array(v, path);
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const auto p = join_path(path, std::to_string(i));
        LearnerSpec spec;
        spec.forest = forest;
        spec.mlp = mlp;
        try {
            if (arr[i].is_string()) {
                spec.kind = parse_learner_kind(arr[i].get<std::string>());
            } else if (arr[i].is_object()) {
                std::set<std::string> keys{"kind", "name"};
                const auto* kind = arr[i].contains("kind") ? &arr[i]["kind"] : nullptr;
                if (kind == nullptr || !kind->is_string())
                    fail(join_path(p, "kind"), "learner objects need a string 'kind'");
                spec.kind = parse_learner_kind(kind->get<std::string>());
                if (spec.kind == LearnerKind::random_forest)
                    keys.insert(kForestKeys.begin(), kForestKeys.end());
                if (spec.kind == LearnerKind::mlp)
                    keys.insert(kMlpKeys.begin(), kMlpKeys.end());
                ObjectReader r(arr[i], p, keys);
                r.read("name", spec.name);
                if (spec.kind == LearnerKind::random_forest)
                    read_forest_keys(r, spec.forest);
                if (spec.kind == LearnerKind::mlp)
                    read_mlp_keys(r, spec.mlp);
            } else {
                fail(p, "expected a learner kind string or object");
            }
        } catch (const std::invalid_argument& e) {
            fail(p, e.what());
        }
        out.push_back(std::move(spec));
    }
    return out;
}

std::vector<Method> read_methods(const json& v, const std::string& path)
{
    std::vector<Method> out;
    const auto names = read_list<std::string>(v, path);
    for (std::size_t i = 0; i < names.size(); ++i) {
        try {
            out.push_back(parse_method(names[i]));
        } catch (const std::invalid_argument& e) {
            fail(join_path(path, std::to_string(i)), e.what());
        }
    }
    return out;
}

void read_scenario_options(const ObjectReader& r, ScenarioOptions& o)
{
    if (auto* v = r.find("dist1_observed"))
        o.dist1_observed = read_list<std::size_t>(*v, r.path("dist1_observed"));
    r.read("dist3_noise_is_variance", o.dist3_noise_is_variance);
}

std::vector<ScenarioTemplate> read_scenarios(const json& v, const std::string& path, const ScenarioOptions& defaults)
{
    std::vector<ScenarioTemplate> out;
    const auto& arr = require_array(v, path);
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const auto p = join_path(path, std::to_string(i));
        ScenarioTemplate t;
        t.options = defaults;
        try {
            if (arr[i].is_string()) {
                t.id = parse_scenario(arr[i].get<std::string>());
            } else {
                ObjectReader r(arr[i], p, {"id", "name", "dist1_observed", "dist3_noise_is_variance"});
                std::string id;
                r.read("id", id);
                if (id.empty())
                    fail(join_path(p, "id"), "scenario objects need an 'id'");
                t.id = parse_scenario(id);
                r.read("name", t.name);
                read_scenario_options(r, t.options);
            }
        } catch (const std::invalid_argument& e) {
            fail(p, e.what());
        }
        out.push_back(std::move(t));
    }
    return out;
}

json learner_json(const LearnerSpec& l)
{
    json j{{"kind", to_string(l.kind)}};
    if (!l.name.empty())
        j["name"] = l.name;
    if (l.kind == LearnerKind::random_forest) {
        j["n_trees"] = l.forest.n_trees;
        j["max_features"] = l.forest.max_features;
        j["min_samples_leaf"] = l.forest.min_samples_leaf;
        j["max_depth"] = l.forest.max_depth ? json(*l.forest.max_depth) : json(nullptr);
        j["bootstrap"] = l.forest.bootstrap;
    }
    if (l.kind == LearnerKind::mlp) {
        j["hidden_layers"] = l.mlp.hidden_layers;
        j["activation"] = "elu";
        j["learning_rate"] = l.mlp.learning_rate;
        j["max_epochs"] = l.mlp.max_epochs;
        j["patience"] = l.mlp.patience;
        j["batch_size"] = l.mlp.batch_size;
        j["validation_fraction"] = l.mlp.validation_fraction;
        j["dropout_rate"] = l.mlp.dropout_rate;
        j["batch_norm"] = l.mlp.batch_norm;
        j["lr_decay_patience"] = l.mlp.lr_decay_patience;
        j["lr_decay_factor"] = l.mlp.lr_decay_factor;
    }
    return j;
}

} // namespace

RunConfig profile_defaults(const std::string& profile)
{
    RunConfig cfg;
    cfg.profile = profile;
    auto& g = cfg.grid;
    g.scenarios = all_scenarios();
    g.beta_s_values = kBetaGrid;
    g.methods = all_methods();
    g.alpha = 0.05;
    g.holdout_fraction = kDefaultHoldoutFraction;
    if (profile == "desk") {
        g.replications = 100;
        g.b = 50;
        g.n_values = {500};
        g.learners = {spec_of(LearnerKind::ols)};
        cfg.forest.n_trees = 100;
    } else if (profile == "paper") {
        g.replications = 200;
        g.b = 100;
        g.n_values = {1000, 10000};
        g.learners = {spec_of(LearnerKind::ols), spec_of(LearnerKind::mlp), spec_of(LearnerKind::random_forest)};
        cfg.mlp = MlpParams::paper();
    } else if (profile == "custom") {
        g.replications = 200;
        g.b = 100;
        g.n_values = {1000};
        g.learners = {spec_of(LearnerKind::ols)};
    } else {
        throw ConfigError("unknown profile '" + profile + "' (expected desk, paper or custom)");
    }
    for (auto& l : g.learners) {
        l.forest = cfg.forest;
        l.mlp = cfg.mlp;
    }
    cfg.analyze.learners = {spec_of(LearnerKind::ols), spec_of(LearnerKind::random_forest)};
    for (auto& l : cfg.analyze.learners) {
        l.forest = cfg.forest;
        l.mlp = cfg.mlp;
    }
    return cfg;
}

RunConfig parse_run_config(const json& input, const std::optional<std::string>& profile_override)
{
    const json* doc = &input;
    if (input.is_object() && input.contains("tool_version") && input.contains("config")) {
        ObjectReader manifest(input, "", {"tool_version", "command", "config"});
        doc = &input["config"];
    }

    ObjectReader r(*doc, "",
                   {"profile", "output_dir", "master_seed", "replications", "b", "alpha", "holdout_fraction",
                    "smoothed_pvalue", "record_timing", "scenarios", "scenario_options", "beta_s_values",
                    "n_values", "methods", "learners", "random_forest", "mlp", "analyze"});

    std::string profile = "desk";
    r.read("profile", profile);
    if (profile_override)
        profile = *profile_override;
    RunConfig cfg = profile_defaults(profile);
    auto& g = cfg.grid;

    std::string out_dir = cfg.output_dir.string();
    r.read("output_dir", out_dir);
    cfg.output_dir = out_dir;
    r.read("master_seed", g.master_seed, 0);
    r.read("replications", g.replications);
    r.read("b", g.b);
    r.read("alpha", g.alpha);
    r.read("holdout_fraction", g.holdout_fraction);
    r.read("smoothed_pvalue", g.smoothed_pvalue);
    r.read("record_timing", g.record_timing);

    if (g.replications < 1)
        fail("/replications", "must be >= 1");
    if (g.b < 1)
        fail("/b", "must be >= 1");
    if (!(g.alpha > 0.0 && g.alpha < 1.0))
        fail("/alpha", "must lie in (0, 1)");
    if (!(g.holdout_fraction > 0.0 && g.holdout_fraction < 1.0))
        fail("/holdout_fraction", "must lie in (0, 1)");

    ScenarioOptions scenario_defaults;
    if (auto* v = r.find("scenario_options")) {
        ObjectReader so(*v, "/scenario_options", {"dist1_observed", "dist3_noise_is_variance"});
        read_scenario_options(so, scenario_defaults);
        for (auto& s : g.scenarios)
            s.options = scenario_defaults;
    }
    if (auto* v = r.find("scenarios"))
        g.scenarios = read_scenarios(*v, "/scenarios", scenario_defaults);
    if (auto* v = r.find("beta_s_values"))
        g.beta_s_values = read_list<double>(*v, "/beta_s_values");
    if (auto* v = r.find("n_values")) {
        g.n_values = read_list<std::size_t>(*v, "/n_values");
        for (std::size_t i = 0; i < g.n_values.size(); ++i)
            if (g.n_values[i] < 4)
                fail("/n_values/" + std::to_string(i), "sample sizes must be >= 4");
    }
    if (auto* v = r.find("methods"))
        g.methods = read_methods(*v, "/methods");

    if (auto* v = r.find("random_forest")) {
        ObjectReader fr(*v, "/random_forest", kForestKeys);
        read_forest_keys(fr, cfg.forest);
    }
    if (auto* v = r.find("mlp")) {
        ObjectReader mr(*v, "/mlp", kMlpKeys);
        read_mlp_keys(mr, cfg.mlp);
    }
    auto apply_sections = [&](std::vector<LearnerSpec>& learners) {
        for (auto& l : learners) {
            l.forest = cfg.forest;
            l.mlp = cfg.mlp;
        }
    };
    if (auto* v = r.find("learners"))
        g.learners = read_learners(*v, "/learners", cfg.forest, cfg.mlp);
    else
        apply_sections(g.learners);

    apply_sections(cfg.analyze.learners);
    if (auto* v = r.find("analyze")) {
        ObjectReader ar(*v, "/analyze", {"label", "methods", "learners", "seed", "encoding", "exclude_columns"});
        ar.read("label", cfg.analyze.label);
        if (auto* m = ar.find("methods"))
            cfg.analyze.methods = read_methods(*m, "/analyze/methods");
        if (auto* l = ar.find("learners"))
            cfg.analyze.learners = read_learners(*l, "/analyze/learners", cfg.forest, cfg.mlp);
        ar.read("seed", cfg.analyze.seed, 0);
        if (auto* e = ar.find("encoding")) {
            if (!e->is_object())
                fail("/analyze/encoding", "expected an object mapping column names to category lists");
            CategoryEncoding enc;
            for (const auto& [col, cats] : e->items())
                enc[col] = read_list<std::string>(cats, "/analyze/encoding/" + col);
            cfg.analyze.encoding = std::move(enc);
        }
        if (auto* x = ar.find("exclude_columns")) {
            if (!x->is_array())
                fail("/analyze/exclude_columns", "expected an array");
            if (!x->empty())
                cfg.analyze.exclude_columns = read_list<std::string>(*x, "/analyze/exclude_columns");
        }
    }

    try {
        g.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("invalid experiment grid: ") + e.what());
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::optional<std::string>& profile_override)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file '" + path.string() + "'");
    json doc;
    try {
        doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError("cannot parse config file '" + path.string() + "': " + e.what());
    }
    return parse_run_config(doc, profile_override);
}

json to_json(const RunConfig& cfg)
{
    const auto& g = cfg.grid;
    json scenarios = json::array();
    for (const auto& s : g.scenarios) {
        json j{{"id", to_string(s.id)},
               {"dist1_observed", s.options.dist1_observed},
               {"dist3_noise_is_variance", s.options.dist3_noise_is_variance}};
        if (!s.name.empty())
            j["name"] = s.name;
        scenarios.push_back(std::move(j));
    }
    auto methods = [](const std::vector<Method>& ms) {
        json j = json::array();
        for (auto m : ms)
            j.push_back(to_string(m));
        return j;
    };
    auto learners = [](const std::vector<LearnerSpec>& ls) {
        json j = json::array();
        for (const auto& l : ls)
            j.push_back(learner_json(l));
        return j;
    };
    json forest{{"n_trees", cfg.forest.n_trees},
                {"max_features", cfg.forest.max_features},
                {"min_samples_leaf", cfg.forest.min_samples_leaf},
                {"max_depth", cfg.forest.max_depth ? json(*cfg.forest.max_depth) : json(nullptr)},
                {"bootstrap", cfg.forest.bootstrap}};
    json mlp = learner_json(LearnerSpec{LearnerKind::mlp, {}, {}, cfg.mlp});
    mlp.erase("kind");

    json analyze{{"methods", methods(cfg.analyze.methods)},
                 {"learners", learners(cfg.analyze.learners)},
                 {"seed", cfg.analyze.seed},
                 {"exclude_columns", cfg.analyze.exclude_columns}};
    if (!cfg.analyze.label.empty())
        analyze["label"] = cfg.analyze.label;
    if (cfg.analyze.encoding)
        analyze["encoding"] = *cfg.analyze.encoding;

    return json{{"profile", "custom"},
                {"output_dir", cfg.output_dir.string()},
                {"master_seed", g.master_seed},
                {"replications", g.replications},
                {"b", g.b},
                {"alpha", g.alpha},
                {"holdout_fraction", g.holdout_fraction},
                {"smoothed_pvalue", g.smoothed_pvalue},
                {"record_timing", g.record_timing},
                {"scenarios", scenarios},
                {"beta_s_values", g.beta_s_values},
                {"n_values", g.n_values},
                {"methods", methods(g.methods)},
                {"learners", learners(g.learners)},
                {"random_forest", forest},
                {"mlp", mlp},
                {"analyze", analyze}};
}

} // namespace coinp
