#include <cstdlib>
#include <cstdio>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "distillstream/hash.hpp"
#include "distillstream/pipeline.hpp"

namespace distillstream {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys = {
        {"", {"seed", "threads", "embedding_dim", "on_malformed", "verbose", "paths", "filter", "dedup", "gating",
              "teacher", "train", "eval", "ablation"}},
        {"paths",
         {"corpus", "sidecar", "sidecar_index", "positive_lexicon", "negative_lexicon", "teacher", "output_dir",
          "eval_specs"}},
        {"filter", {"min_words", "require_image", "reject_retweets", "english_stopword_ratio_min"}},
        {"dedup", {"tau", "index", "lsh_planes", "lsh_tables"}},
        {"gating", {"c"}},
        {"teacher", {"temperature"}},
        {"train",
         {"architecture", "hidden", "lr", "adam_eps", "adam_beta1", "adam_beta2", "batch_size", "max_epochs",
          "patience", "feature_noise_sigma", "hard_labels", "heldout_fraction"}},
        {"eval", {"fine_tune", "fine_tune_epochs"}},
        {"ablation", {"grid"}},
    };
    return keys;
}

void check_keys(const toml::table& root) {
    const auto& known = known_keys();
    for (const auto& [key, node] : root) {
        const std::string k(key.str());
        if (!known.at("").contains(k)) throw ConfigError("unknown config key '" + k + "'");
        if (const auto* section = node.as_table()) {
            const auto it = known.find(k);
            if (it == known.end()) throw ConfigError("config key '" + k + "' is not a section");
            for (const auto& [sub, _] : *section) {
                if (!it->second.contains(std::string(sub.str()))) {
                    throw ConfigError("unknown config key '" + k + "." + std::string(sub.str()) + "'");
                }
            }
        }
    }
}

void apply_override(toml::table& root, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);

    toml::table parsed;
    try {
        parsed = toml::parse("v = " + value);
    } catch (const toml::parse_error&) {
        parsed = toml::table{{"v", value}};
    }

    toml::table* table = &root;
    std::string_view rest = key;
    for (auto dot = rest.find('.'); dot != std::string_view::npos; dot = rest.find('.')) {
        const std::string segment(rest.substr(0, dot));
        rest.remove_prefix(dot + 1);
        if (!(*table)[segment].is_table()) table->insert_or_assign(segment, toml::table{});
        table = (*table)[segment].as_table();
    }
    const std::string leaf(rest);
    parsed["v"].node()->visit([&](auto&& node) { table->insert_or_assign(leaf, node); });
}

template <class T>
std::optional<T> get(const toml::table& root, std::string_view section, std::string_view key) {
    const auto view = section.empty() ? root[key] : root[section][key];
    if (!view) return std::nullopt;
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        const auto v = view.template value<std::int64_t>();
        if (!v || *v < 0) throw ConfigError("config key '" + std::string(key) + "' must be a nonnegative integer");
        return static_cast<T>(*v);
    } else {
        const auto v = view.template value<T>();
        if (!v) throw ConfigError("config key '" + std::string(key) + "' has the wrong type");
        return *v;
    }
}

template <class T>
void read(const toml::table& root, std::string_view section, std::string_view key, T& out) {
    if (auto v = get<T>(root, section, key)) out = *v;
}

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

std::optional<fs::path> read_path(const toml::table& root, std::string_view key, const fs::path& base) {
    if (auto v = get<std::string>(root, "paths", key)) return resolve(base, *v);
    return std::nullopt;
}

GatingConfig gating_from(const toml::array& arr) {
    if (arr.size() != kNumClasses) throw ConfigError("gating thresholds need exactly 3 values");
    GatingConfig g;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        const auto v = arr[k].value<double>();
        if (!v) throw ConfigError("gating thresholds must be numbers");
        g.c[k] = *v;
    }
    validate(g);
    return g;
}

}  // namespace

void RunConfig::apply_globals() {
    train.seed = seed;
    train.threads = threads;
    dedup.threads = threads;
    dedup.lsh_seed = seed ^ 0x6c73685f73656564ull;
}

std::unique_ptr<TeacherProvider> RunConfig::make_teacher() const {
    if (paths.teacher) return std::make_unique<PrecomputedTeacher>(PrecomputedTeacher::load(*paths.teacher));
    if (paths.positive_lexicon && paths.negative_lexicon) {
        return std::make_unique<LexiconScorer>(
            LexiconScorer::load(*paths.positive_lexicon, *paths.negative_lexicon, lexicon_temperature));
    }
    throw ConfigError("no teacher configured: set paths.teacher or both lexicon paths");
}

RunConfig load_run_config(const fs::path& path, const std::vector<std::string>& overrides) {
    toml::table root;
    try {
        root = toml::parse_file(path.string());
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << "cannot parse config " << path.string() << ": " << e.description() << " at " << e.source().begin;
        throw ConfigError(msg.str());
    }
    for (const auto& o : overrides) apply_override(root, o);
    check_keys(root);

    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
    RunConfig c;
    read(root, "", "seed", c.seed);
    read(root, "", "threads", c.threads);
    read(root, "", "embedding_dim", c.embedding_dim);
    read(root, "", "verbose", c.verbose);
    if (auto v = get<std::string>(root, "", "on_malformed")) {
        if (*v == "skip") {
            c.on_malformed = MalformedPolicy::skip;
        } else if (*v == "abort") {
            c.on_malformed = MalformedPolicy::abort;
        } else {
            throw ConfigError("on_malformed must be skip or abort");
        }
    }

    if (auto p = read_path(root, "corpus", base)) c.paths.corpus = *p;
    c.paths.sidecar = read_path(root, "sidecar", base);
    c.paths.sidecar_index = read_path(root, "sidecar_index", base);
    c.paths.positive_lexicon = read_path(root, "positive_lexicon", base);
    c.paths.negative_lexicon = read_path(root, "negative_lexicon", base);
    c.paths.teacher = read_path(root, "teacher", base);
    if (auto p = read_path(root, "output_dir", base)) c.paths.output_dir = *p;
    if (const auto* specs = root["paths"]["eval_specs"].as_array()) {
        for (const auto& s : *specs) {
            const auto v = s.value<std::string>();
            if (!v) throw ConfigError("paths.eval_specs must be a list of strings");
            c.paths.eval_specs.push_back(resolve(base, *v));
        }
    }
    if (const char* env = std::getenv("DISTILLSTREAM_OUT"); env != nullptr && *env != '\0') {
        c.paths.output_dir = env;
    }

    read(root, "filter", "min_words", c.filter.min_words);
    read(root, "filter", "require_image", c.filter.require_image);
    read(root, "filter", "reject_retweets", c.filter.reject_retweets);
    read(root, "filter", "english_stopword_ratio_min", c.filter.english_stopword_ratio_min);

    read(root, "dedup", "tau", c.dedup.tau);
    if (auto v = get<std::string>(root, "dedup", "index")) c.dedup.index_kind = index_kind_from_string(*v);
    read(root, "dedup", "lsh_planes", c.dedup.lsh_planes);
    read(root, "dedup", "lsh_tables", c.dedup.lsh_tables);

    if (root["gating"]["c"]) {
        const auto* arr = root["gating"]["c"].as_array();
        if (arr == nullptr) throw ConfigError("gating.c must be an array of 3 numbers");
        c.train.gating = gating_from(*arr);
    }
    read(root, "teacher", "temperature", c.lexicon_temperature);

    if (auto v = get<std::string>(root, "train", "architecture")) c.train.architecture = architecture_from_string(*v);
    read(root, "train", "hidden", c.train.hidden);
    read(root, "train", "lr", c.train.lr);
    read(root, "train", "adam_eps", c.train.adam_eps);
    read(root, "train", "adam_beta1", c.train.adam_beta1);
    read(root, "train", "adam_beta2", c.train.adam_beta2);
    read(root, "train", "batch_size", c.train.batch_size);
    read(root, "train", "max_epochs", c.train.max_epochs);
    read(root, "train", "patience", c.train.patience);
    read(root, "train", "feature_noise_sigma", c.train.feature_noise_sigma);
    read(root, "train", "hard_labels", c.train.hard_labels);
    read(root, "train", "heldout_fraction", c.train.heldout_fraction);

    read(root, "eval", "fine_tune", c.eval_fine_tune);
    read(root, "eval", "fine_tune_epochs", c.fine_tune_epochs);

    if (const auto* grid = root["ablation"]["grid"].as_array()) {
        for (const auto& row : *grid) {
            const auto* arr = row.as_array();
            if (arr == nullptr) throw ConfigError("ablation.grid must be a list of 3-number arrays");
            c.ablation_grid.push_back(gating_from(*arr));
        }
    }

    c.apply_globals();
    validate(c);
    return c;
}

void validate(const RunConfig& c) {
    if (c.embedding_dim == 0) throw ConfigError("embedding_dim must be positive");
    if (c.paths.corpus.empty()) throw ConfigError("paths.corpus is required");
    if (!fs::exists(c.paths.corpus)) throw ConfigError("corpus file does not exist: " + c.paths.corpus.string());
    if (c.threads == 0) throw ConfigError("threads must be positive");
    if (!(c.lexicon_temperature > 0.0)) throw ConfigError("teacher.temperature must be positive");
    for (const auto& p : {c.paths.sidecar, c.paths.sidecar_index, c.paths.positive_lexicon, c.paths.negative_lexicon,
                          c.paths.teacher}) {
        if (p && !fs::exists(*p)) throw ConfigError("configured path does not exist: " + p->string());
    }
    for (const auto& p : c.paths.eval_specs) {
        if (!fs::exists(p)) throw ConfigError("eval spec does not exist: " + p.string());
    }
    if (!c.paths.teacher && !(c.paths.positive_lexicon && c.paths.negative_lexicon)) {
        throw ConfigError("no teacher configured: set paths.teacher or both lexicon paths");
    }
    validate(c.filter);
    validate(c.dedup);
    validate(c.train);
}

json to_json(const RunConfig& c) {
    const auto opt = [](const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); };
    json specs = json::array();
    for (const auto& s : c.paths.eval_specs) specs.push_back(s.string());
    json grid = json::array();
    for (const auto& g : c.ablation_grid) grid.push_back(g.c);
    return {{"paths",
             {{"corpus", c.paths.corpus.string()},
              {"sidecar", opt(c.paths.sidecar)},
              {"sidecar_index", opt(c.paths.sidecar_index)},
              {"positive_lexicon", opt(c.paths.positive_lexicon)},
              {"negative_lexicon", opt(c.paths.negative_lexicon)},
              {"teacher", opt(c.paths.teacher)},
              {"eval_specs", std::move(specs)}}},
            {"embedding_dim", c.embedding_dim},
            {"on_malformed", c.on_malformed == MalformedPolicy::skip ? "skip" : "abort"},
            {"filter",
             {{"min_words", c.filter.min_words},
              {"require_image", c.filter.require_image},
              {"reject_retweets", c.filter.reject_retweets},
              {"english_stopword_ratio_min", c.filter.english_stopword_ratio_min}}},
            {"dedup",
             {{"tau", c.dedup.tau},
              {"index", to_string(c.dedup.index_kind)},
              {"lsh_planes", c.dedup.lsh_planes},
              {"lsh_tables", c.dedup.lsh_tables}}},
            {"teacher", {{"temperature", c.lexicon_temperature}}},
            {"train", to_json(c.train)},
            {"eval", {{"fine_tune", c.eval_fine_tune}, {"fine_tune_epochs", c.fine_tune_epochs}}},
            {"ablation", {{"grid", std::move(grid)}}},
            {"seed", c.seed}};
}

std::string config_hash(const RunConfig& config) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(to_json(config).dump())));
    return buf;
}

}  // namespace distillstream
